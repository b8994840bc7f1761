//! Layer cases and the composed loss∘model check shared by the gradient
//! tests and the acceptance suite.

use mobile_affect::nn::{he_uniform, BatchNorm, Conv2d, Dense, DepthwiseConv2d, Layer};
use mobile_affect::training::{cross_entropy_batch, mse_batch};
use mobile_affect::{Head, Model, SeededRng, Tensor};
use rand::Rng;

use super::{check_layer, micro_graph, random_tensor, worst_error};

pub struct LayerCase {
    pub name: &'static str,
    pub layer: Layer<f64>,
    pub input_shape: Vec<usize>,
    pub training: bool,
}

fn case(name: &'static str, layer: Layer<f64>, input_shape: &[usize], training: bool) -> LayerCase {
    LayerCase { name, layer, input_shape: input_shape.to_vec(), training }
}

fn conv(kernel: usize, cin: usize, cout: usize, stride: usize, bias: bool) -> Layer<f64> {
    let mut rng = SeededRng::new(3);
    let w = he_uniform(&[kernel, kernel, cin, cout], kernel * kernel * cin, &mut rng).unwrap();
    let b = bias.then(|| random_tensor(&[cout], &mut rng));
    Layer::Conv2d(Conv2d::new(w, b, stride).unwrap())
}

fn depthwise(stride: usize) -> Layer<f64> {
    let w = he_uniform(&[3, 3, 4], 9, &mut SeededRng::new(5)).unwrap();
    Layer::DepthwiseConv2d(DepthwiseConv2d::new(w, stride).unwrap())
}

fn batchnorm(channels: usize) -> Layer<f64> {
    let mut rng = SeededRng::new(9);
    let gamma = Tensor::from_fn(&[channels], |_| rng.random_range(0.5..1.5)).unwrap();
    let beta = random_tensor(&[channels], &mut rng);
    let mean = random_tensor(&[channels], &mut rng);
    let var = Tensor::from_fn(&[channels], |_| rng.random_range(0.5..2.0)).unwrap();
    Layer::BatchNorm(BatchNorm::from_parts(gamma, beta, mean, var).unwrap())
}

fn dense() -> Layer<f64> {
    let mut rng = SeededRng::new(2);
    Layer::Dense(Dense::new(random_tensor(&[7, 4], &mut rng), Some(random_tensor(&[4], &mut rng))).unwrap())
}

/// One case per layer type and mode. Even kernels with stride 2 exercise the
/// asymmetric padding split.
pub fn layer_cases() -> Vec<LayerCase> {
    vec![
        case("conv3 s1", conv(3, 3, 4, 1, true), &[2, 6, 6, 3], false),
        case("conv4 s2", conv(4, 2, 3, 2, false), &[2, 7, 6, 2], false),
        case("conv3 s2", conv(3, 3, 5, 2, false), &[2, 8, 8, 3], false),
        case("conv1", conv(1, 5, 4, 1, true), &[3, 4, 4, 5], false),
        case("depthwise s1", depthwise(1), &[2, 6, 5, 4], false),
        case("depthwise s2", depthwise(2), &[2, 6, 5, 4], false),
        case("batchnorm train 4d", batchnorm(3), &[4, 3, 3, 3], true),
        case("batchnorm train 2d", batchnorm(5), &[6, 5], true),
        case("batchnorm infer", batchnorm(3), &[2, 4, 4, 3], false),
        case("dense", dense(), &[3, 7], false),
        case("relu", Layer::Relu, &[2, 3, 3, 2], false),
        case("softmax", Layer::Softmax, &[3, 8], false),
        case("maxpool", Layer::MaxPool2, &[2, 6, 4, 3], false),
        case("global average pool", Layer::GlobalAvgPool, &[2, 3, 5, 4], false),
        case("flatten", Layer::Flatten, &[2, 3, 2, 2], false),
        case("dropout", Layer::Dropout { rate: 0.5 }, &[2, 4, 4, 3], true),
        case("gaussian dropout", Layer::GaussianDropout { rate: 0.2 }, &[2, 4, 4, 3], true),
        case("dropout inference", Layer::Dropout { rate: 0.5 }, &[2, 10], false),
    ]
}

pub fn layer_case_error(c: &LayerCase) -> f64 {
    check_layer(&c.layer, &c.input_shape, c.training, 17).worst()
}

/// Worst relative error over the input and every parameter of loss∘model
/// on the micro graph, with training-mode batch norm and fixed dropout noise.
pub fn composed_error(head: Head) -> f64 {
    let model: Model<f64> = Model::<f32>::new(micro_graph(head, 8), &mut SeededRng::new(21)).unwrap().cast();
    let x = random_tensor(&[4, 8, 8, 3], &mut SeededRng::new(4));
    let labels = [0usize, 3, 7, 3];
    let weights = [1.0, 0.5, 2.0, 1.5, 1.0, 1.0, 0.7, 1.2];
    let targets: Vec<Vec<f64>> = (0..4).map(|i| vec![0.3 * i as f64 - 0.5, 0.2]).collect();

    let loss_of = |m: &Model<f64>, x: &Tensor<f64>| {
        let mut m = m.clone();
        let (logits, ctx) = m.forward(x, true, &mut SeededRng::new(99)).unwrap();
        let loss = match head {
            Head::Emotion => cross_entropy_batch(&logits, &labels, Some(&weights)).unwrap(),
            Head::ValenceArousal => mse_batch(&logits, &targets).unwrap(),
        };
        (loss, ctx)
    };

    let (loss, ctx) = loss_of(&model, &x);
    let (dx, grads) = model.backward_with_input(&ctx, &loss.grad).unwrap();
    let mut worst = worst_error(x.data(), dx.data(), |probe| {
        loss_of(&model, &Tensor::from_data(x.shape(), probe.to_vec()).unwrap()).0.loss
    });

    let params: Vec<Tensor<f64>> = model.trainable().into_iter().cloned().collect();
    assert_eq!(params.len(), grads.len());
    for (p, (base, grad)) in params.iter().zip(&grads).enumerate() {
        let err = worst_error(base.data(), grad.data(), |probe| {
            let mut m = model.clone();
            *m.trainable_mut()[p] = Tensor::from_data(base.shape(), probe.to_vec()).unwrap();
            loss_of(&m, &x).0.loss
        });
        worst = worst.max(err);
    }
    worst
}
