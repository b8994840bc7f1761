//! Layer tables for the three architectures, transcribed row by row.

use mobile_affect::arch::LayerSpec;
use mobile_affect::nn::Layer;
use mobile_affect::{ArchId, Head, Model, ModelGraph, SeededRng, Tensor};

/// `(type, output)` rows; `n×` rows are expanded. Flatten and the hidden
/// dense layers list their width in the shape column, used here as output.
pub fn table(arch: ArchId, head: Head) -> Vec<(&'static str, Vec<usize>)> {
    let head_row = ("Dense", vec![head.units()]);
    let mut rows: Vec<(&str, Vec<usize>)> = match arch {
        ArchId::AlexNet => vec![
            ("Conv", vec![128, 128, 16]),
            ("MaxPool", vec![64, 64, 16]),
            ("Conv", vec![64, 64, 32]),
            ("MaxPool", vec![32, 32, 32]),
            ("Conv", vec![32, 32, 64]),
            ("MaxPool", vec![16, 16, 64]),
            ("Conv", vec![16, 16, 128]),
            ("MaxPool", vec![8, 8, 128]),
            ("Conv", vec![8, 8, 128]),
            ("MaxPool", vec![4, 4, 128]),
            ("Flatten", vec![2048]),
            ("Dense", vec![1024]),
            ("Dense", vec![1024]),
        ],
        ArchId::VggNet => {
            let mut rows = Vec::new();
            for (side, filters) in [(128, 16), (64, 32), (32, 64), (16, 128), (8, 128)] {
                rows.push(("Conv", vec![side, side, filters]));
                rows.push(("Conv", vec![side, side, filters]));
                rows.push(("MaxPool", vec![side / 2, side / 2, filters]));
            }
            rows.extend([("Flatten", vec![2048]), ("Dense", vec![1024]), ("Dense", vec![1024])]);
            rows
        }
        ArchId::MobileNet => {
            let mut rows = vec![
                ("Conv", vec![64, 64, 32]),
                ("DConv", vec![64, 64, 64]),
                ("DConv", vec![32, 32, 128]),
                ("DConv", vec![32, 32, 128]),
                ("DConv", vec![16, 16, 256]),
                ("DConv", vec![16, 16, 256]),
                ("DConv", vec![8, 8, 512]),
            ];
            rows.extend(std::iter::repeat_n(("DConv", vec![8, 8, 512]), 5));
            rows.extend([("DConv", vec![4, 4, 1024]), ("DConv", vec![4, 4, 1024]), ("GlobalAvePool", vec![1024])]);
            rows
        }
    };
    rows.push(head_row);
    rows
}

/// Static `(kind, output)` rows of a graph, dropout omitted.
pub fn graph_rows(graph: &ModelGraph) -> Vec<(&'static str, Vec<usize>)> {
    graph
        .layers
        .iter()
        .zip(graph.output_shapes().unwrap())
        .filter(|(spec, _)| !spec.is_dropout())
        .map(|(spec, shape)| (spec.kind(), shape))
        .collect()
}

/// Runs one image through every layer of a freshly built model and records
/// the activation shape at the end of each table-level block.
pub fn forward_rows(arch: ArchId, head: Head) -> Vec<(&'static str, Vec<usize>)> {
    let model = Model::<f32>::build(arch, head, &mut SeededRng::new(1)).unwrap();
    let mut x = Tensor::<f32>::full(&[1, 128, 128, 3], 0.5).unwrap();
    let mut block_out: Vec<(String, Vec<usize>)> = Vec::new();
    for (name, layer) in model.layers() {
        assert!(!matches!(layer, Layer::Softmax), "softmax is applied by predict, not as a layer");
        x = layer.infer(&x).unwrap();
        let block = name.split('.').next().unwrap().to_string();
        match block_out.last_mut() {
            Some((b, shape)) if *b == block => *shape = x.shape()[1..].to_vec(),
            _ => block_out.push((block, x.shape()[1..].to_vec())),
        }
    }
    model
        .graph()
        .layers
        .iter()
        .zip(block_out)
        .filter(|(spec, _)| !spec.is_dropout())
        .map(|(spec, (_, shape))| (spec.kind(), shape))
        .collect()
}

/// Stride of every convolutional block in the separable network.
pub fn separable_strides() -> Vec<usize> {
    ModelGraph::build(ArchId::MobileNet, Head::Emotion)
        .layers
        .iter()
        .filter_map(|s| match s {
            LayerSpec::ConvBlock { stride, .. } | LayerSpec::SeparableBlock { stride, .. } => Some(*stride),
            _ => None,
        })
        .collect()
}

pub const SEPARABLE_STRIDES: [usize; 14] = [2, 1, 2, 1, 2, 1, 2, 1, 1, 1, 1, 1, 2, 1];
