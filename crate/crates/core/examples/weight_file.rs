//! Writes a model to the binary weight format, reads it back, and shows that
//! a single flipped byte is caught by the checksum.
//!
//! cargo run --example weight_file

use mobile_affect::model_io;
use mobile_affect::{ArchId, Head, Model, SeededRng};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("affect-weight-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("arch3-emotion.afwt");

    let model = Model::<f32>::build(ArchId::MobileNet, Head::Emotion, &mut SeededRng::new(42))?;
    let bytes = model_io::save(&model, &path)?;
    println!("wrote {} ({bytes} bytes)", path.display());
    print!("{}", model_io::model_info(&path)?.table());

    let loaded = model_io::load(&path)?;
    println!("round trip equal: {}", loaded == model);

    let mut raw = std::fs::read(&path)?;
    let mid = raw.len() / 2;
    raw[mid] ^= 0xff;
    match model_io::from_bytes(&raw) {
        Ok(_) => println!("corruption went unnoticed"),
        Err(e) => println!("corrupted copy rejected: {e}"),
    }
    Ok(())
}
