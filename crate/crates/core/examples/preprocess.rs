//! Decodes an image, crops a face box and resamples it to the network input.
//!
//! cargo run --example preprocess [-- image.png x,y,w,h]

use image::{Rgb, RgbImage};
use mobile_affect::data::{open_image, preprocess, BBox};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let image = match args.first() {
        Some(path) => open_image(path.as_ref())?,
        None => RgbImage::from_fn(320, 240, |x, y| Rgb([(x % 256) as u8, (y % 256) as u8, 96])),
    };
    let bbox = match args.get(1) {
        Some(spec) => {
            let v: Vec<i64> = spec.split(',').map(str::parse).collect::<Result<_, _>>()?;
            let [x, y, w, h] = v[..] else { return Err("bbox is x,y,w,h".into()) };
            Some(BBox { x, y, w: w as u32, h: h as u32 })
        }
        None => None,
    };
    let tensor = preprocess(&image, bbox)?;
    let data = tensor.data();
    let mean = data.iter().sum::<f32>() / data.len() as f32;
    println!("{}x{} image -> tensor {:?}, mean {mean:.4}", image.width(), image.height(), tensor.shape());
    println!("top-left pixel {:?}", &data[..3]);
    Ok(())
}
