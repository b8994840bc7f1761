//! Single-image inference latency for each architecture.
//!
//! cargo run --release --example bench [-- runs]

use mobile_affect::bench::bench_model;
use mobile_affect::{ArchId, Head, Model, SeededRng, Tensor};

fn main() -> mobile_affect::Result<()> {
    let runs = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let input = Tensor::full(&[128, 128, 3], 0.5f32)?;
    for arch in ArchId::ALL {
        let model = Model::<f32>::build(arch, Head::Emotion, &mut SeededRng::new(0))?;
        println!("{:<16} {}", arch.as_str(), bench_model(&model, &input, runs)?);
    }
    Ok(())
}
