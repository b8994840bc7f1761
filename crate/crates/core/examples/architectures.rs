//! Layer tables, parameter counts and serialized sizes for every
//! architecture and head.
//!
//! cargo run --example architectures [-- arch3-mobilenet]

use mobile_affect::{ArchId, Head, ModelGraph};

fn main() -> mobile_affect::Result<()> {
    let only: Option<ArchId> = std::env::args().nth(1).map(|a| a.parse()).transpose()?;
    for arch in ArchId::ALL.into_iter().filter(|a| only.is_none_or(|o| o == *a)) {
        for head in [Head::Emotion, Head::ValenceArousal] {
            let report = ModelGraph::build(arch, head).param_report()?;
            println!("== {arch} / {head}");
            for layer in &report.layers {
                let shape: Vec<String> = layer.output_shape.iter().map(usize::to_string).collect();
                println!("  {:<6} {:<14} {:<14} {:>9}", layer.name, layer.kind, shape.join("x"), layer.total());
            }
            println!(
                "  {} params ({} trainable), {:.3} MB as f32\n",
                report.total_params,
                report.trainable_params,
                report.serialized_bytes_f32 as f64 / 1e6
            );
        }
    }
    Ok(())
}
