//! The three mobile-budget architectures, their output heads and parameter
//! accounting.
//!
//! A [`ModelGraph`] is a declarative list of blocks. [`Model`] instantiates
//! it into concrete layers with parameters.
//!
//! | id                | body                                                     |
//! |-------------------|----------------------------------------------------------|
//! | `arch1-alexnet`   | conv 9/7/5/3/3 blocks, max-pool after each, 2× dense 1024 |
//! | `arch2-vggnet`    | five pairs of 3×3 conv blocks, max-pool after each pair, 2× dense 1024 |
//! | `arch3-mobilenet` | strided 3×3 conv, 13 depthwise-separable blocks, global average pool |
//!
//! Every conv block is convolution (no bias) → batch norm → ReLU. The
//! classification head is dense-8 with softmax, the regression head dense-2
//! with a linear output.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{glorot_uniform, he_uniform, BatchNorm, Conv2d, Dense, DepthwiseConv2d, Layer, LayerContext};
use crate::rng::SeededRng;
use crate::tensor::{Scalar, Tensor};

pub const INPUT_SIZE: usize = 128;
pub const INPUT_SHAPE: [usize; 3] = [INPUT_SIZE, INPUT_SIZE, 3];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ArchId {
    #[serde(rename = "arch1-alexnet")]
    AlexNet,
    #[serde(rename = "arch2-vggnet")]
    VggNet,
    #[serde(rename = "arch3-mobilenet")]
    MobileNet,
}

impl ArchId {
    pub const ALL: [ArchId; 3] = [ArchId::AlexNet, ArchId::VggNet, ArchId::MobileNet];

    pub fn as_str(self) -> &'static str {
        match self {
            ArchId::AlexNet => "arch1-alexnet",
            ArchId::VggNet => "arch2-vggnet",
            ArchId::MobileNet => "arch3-mobilenet",
        }
    }

    /// Training batch size used for full-scale runs.
    pub fn default_batch_size(self) -> usize {
        match self {
            ArchId::AlexNet | ArchId::VggNet => 400,
            ArchId::MobileNet => 250,
        }
    }
}

impl fmt::Display for ArchId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ArchId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ArchId::ALL.into_iter().find(|a| a.as_str() == s).ok_or_else(|| Error::UnknownArch(s.to_owned()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Head {
    /// Eight-way emotion classification, softmax output.
    #[serde(rename = "emotion")]
    Emotion,
    /// Valence and arousal regression, linear output.
    #[serde(rename = "va")]
    ValenceArousal,
}

impl Head {
    pub fn as_str(self) -> &'static str {
        match self {
            Head::Emotion => "emotion",
            Head::ValenceArousal => "va",
        }
    }

    pub fn units(self) -> usize {
        match self {
            Head::Emotion => 8,
            Head::ValenceArousal => 2,
        }
    }

    pub fn activation(self) -> Activation {
        match self {
            Head::Emotion => Activation::Softmax,
            Head::ValenceArousal => Activation::Linear,
        }
    }
}

impl fmt::Display for Head {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Head {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "emotion" => Ok(Head::Emotion),
            "va" => Ok(Head::ValenceArousal),
            other => Err(Error::UnknownHead(other.to_owned())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Softmax,
    Linear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum LayerSpec {
    /// Convolution → batch norm → ReLU.
    ConvBlock { kernel: usize, filters: usize, stride: usize },
    /// 3×3 depthwise → BN → ReLU → 1×1 pointwise → BN → ReLU. Stride applies
    /// to the depthwise stage.
    SeparableBlock { filters: usize, stride: usize },
    MaxPool,
    GaussianDropout { rate: f64 },
    Dropout { rate: f64 },
    Flatten,
    GlobalAvgPool,
    Dense { units: usize, activation: Activation },
}

impl LayerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::ConvBlock { .. } => "Conv",
            LayerSpec::SeparableBlock { .. } => "DConv",
            LayerSpec::MaxPool => "MaxPool",
            LayerSpec::GaussianDropout { .. } => "GaussianDropout",
            LayerSpec::Dropout { .. } => "Dropout",
            LayerSpec::Flatten => "Flatten",
            LayerSpec::GlobalAvgPool => "GlobalAvePool",
            LayerSpec::Dense { .. } => "Dense",
        }
    }

    pub fn is_dropout(&self) -> bool {
        matches!(self, LayerSpec::GaussianDropout { .. } | LayerSpec::Dropout { .. })
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let spatial = |stride: usize, channels: usize| -> Result<Vec<usize>> {
            match input {
                [h, w, _] => Ok(vec![h.div_ceil(stride), w.div_ceil(stride), channels]),
                _ => Err(Error::ShapeMismatch { op: "conv block", left: input.to_vec(), right: vec![] }),
            }
        };
        match *self {
            LayerSpec::ConvBlock { filters, stride, .. } | LayerSpec::SeparableBlock { filters, stride } => {
                spatial(stride, filters)
            }
            LayerSpec::MaxPool => match input {
                [h, w, c] if h % 2 == 0 && w % 2 == 0 => Ok(vec![h / 2, w / 2, *c]),
                _ => Err(Error::InvalidConfig(format!("max pooling needs even H×W×C input, got {input:?}"))),
            },
            LayerSpec::GaussianDropout { .. } | LayerSpec::Dropout { .. } => Ok(input.to_vec()),
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::GlobalAvgPool => match input {
                [_, _, c] => Ok(vec![*c]),
                _ => Err(Error::ShapeMismatch { op: "global average pool", left: input.to_vec(), right: vec![] }),
            },
            LayerSpec::Dense { units, .. } => match input {
                [_] => Ok(vec![units]),
                _ => Err(Error::ShapeMismatch { op: "dense", left: input.to_vec(), right: vec![] }),
            },
        }
    }
}

/// Name and shape of one persistent tensor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub trainable: bool,
}

/// A declarative network: input shape, blocks and output head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelGraph {
    pub name: String,
    pub arch: Option<ArchId>,
    pub head: Head,
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
}

const HEAD_PREFIX: &str = "head";

fn conv(kernel: usize, filters: usize) -> LayerSpec {
    LayerSpec::ConvBlock { kernel, filters, stride: 1 }
}

fn dconv(filters: usize, stride: usize) -> LayerSpec {
    LayerSpec::SeparableBlock { filters, stride }
}

fn pool_with_noise() -> [LayerSpec; 2] {
    [LayerSpec::MaxPool, LayerSpec::GaussianDropout { rate: 0.2 }]
}

fn dense_stack() -> Vec<LayerSpec> {
    let hidden = [LayerSpec::Dense { units: 1024, activation: Activation::Relu }, LayerSpec::Dropout { rate: 0.5 }];
    let mut v = vec![LayerSpec::Flatten];
    v.extend(hidden.clone());
    v.extend(hidden);
    v
}

impl ModelGraph {
    pub fn build(arch: ArchId, head: Head) -> Self {
        let mut layers = Vec::new();
        match arch {
            ArchId::AlexNet => {
                for (k, f) in [(9, 16), (7, 32), (5, 64), (3, 128), (3, 128)] {
                    layers.push(conv(k, f));
                    layers.extend(pool_with_noise());
                }
                layers.extend(dense_stack());
            }
            ArchId::VggNet => {
                for f in [16, 32, 64, 128, 128] {
                    layers.push(conv(3, f));
                    layers.push(conv(3, f));
                    layers.extend(pool_with_noise());
                }
                layers.extend(dense_stack());
            }
            ArchId::MobileNet => {
                layers.push(LayerSpec::ConvBlock { kernel: 3, filters: 32, stride: 2 });
                layers.extend([dconv(64, 1), dconv(128, 2), dconv(128, 1), dconv(256, 2), dconv(256, 1), dconv(512, 2)]);
                layers.extend(std::iter::repeat_n(dconv(512, 1), 5));
                layers.extend([dconv(1024, 2), dconv(1024, 1)]);
                layers.push(LayerSpec::GlobalAvgPool);
                layers.push(LayerSpec::Dropout { rate: 0.3 });
            }
        }
        layers.push(LayerSpec::Dense { units: head.units(), activation: head.activation() });
        Self { name: arch.as_str().to_owned(), arch: Some(arch), head, input_shape: INPUT_SHAPE.to_vec(), layers }
    }

    /// A graph outside the three named architectures. The head's dense
    /// layer is appended to `body`.
    pub fn custom(name: impl Into<String>, input_shape: &[usize], body: Vec<LayerSpec>, head: Head) -> Result<Self> {
        let mut layers = body;
        layers.push(LayerSpec::Dense { units: head.units(), activation: head.activation() });
        let graph = Self { name: name.into(), arch: None, head, input_shape: input_shape.to_vec(), layers };
        graph.output_shapes()?;
        Ok(graph)
    }

    /// Per-sample output shape of every block, in order.
    pub fn output_shapes(&self) -> Result<Vec<Vec<usize>>> {
        let mut shape = self.input_shape.clone();
        let mut out = Vec::with_capacity(self.layers.len());
        for spec in &self.layers {
            shape = spec.output_shape(&shape)?;
            out.push(shape.clone());
        }
        Ok(out)
    }

    fn head_index(&self) -> usize {
        self.layers.len() - 1
    }

    fn block_prefix(&self, index: usize) -> String {
        if index == self.head_index() {
            HEAD_PREFIX.to_owned()
        } else {
            format!("b{index:02}")
        }
    }

    /// Every persistent tensor the graph instantiates, in storage order.
    pub fn tensor_specs(&self) -> Result<Vec<TensorSpec>> {
        let mut specs = Vec::new();
        let mut push = |name: String, shape: Vec<usize>, trainable: bool| specs.push(TensorSpec { name, shape, trainable });
        let mut input = self.input_shape.clone();
        for (i, spec) in self.layers.iter().enumerate() {
            let p = self.block_prefix(i);
            let bn = |push: &mut dyn FnMut(String, Vec<usize>, bool), name: &str, c: usize| {
                push(format!("{p}.{name}.gamma"), vec![c], true);
                push(format!("{p}.{name}.beta"), vec![c], true);
                push(format!("{p}.{name}.moving_mean"), vec![c], false);
                push(format!("{p}.{name}.moving_variance"), vec![c], false);
            };
            match *spec {
                LayerSpec::ConvBlock { kernel, filters, .. } => {
                    push(format!("{p}.conv.weight"), vec![kernel, kernel, input[2], filters], true);
                    bn(&mut push, "bn", filters);
                }
                LayerSpec::SeparableBlock { filters, .. } => {
                    push(format!("{p}.dw.weight"), vec![3, 3, input[2]], true);
                    bn(&mut push, "dw_bn", input[2]);
                    push(format!("{p}.pw.weight"), vec![1, 1, input[2], filters], true);
                    bn(&mut push, "pw_bn", filters);
                }
                LayerSpec::Dense { units, .. } => {
                    push(format!("{p}.dense.weight"), vec![input[0], units], true);
                    push(format!("{p}.dense.bias"), vec![units], true);
                }
                _ => {}
            }
            input = spec.output_shape(&input)?;
        }
        Ok(specs)
    }

    pub fn param_report(&self) -> Result<ParamReport> {
        ParamReport::new(self)
    }
}

/// Parameter counts per block, from the layer algebra alone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerParamCount {
    pub name: String,
    pub kind: String,
    pub output_shape: Vec<usize>,
    pub trainable: usize,
    pub non_trainable: usize,
}

impl LayerParamCount {
    pub fn total(&self) -> usize {
        self.trainable + self.non_trainable
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamReport {
    pub layers: Vec<LayerParamCount>,
    pub total_params: usize,
    pub trainable_params: usize,
    /// Exact size of the graph's weight file at f32.
    pub serialized_bytes_f32: u64,
}

impl ParamReport {
    fn new(graph: &ModelGraph) -> Result<Self> {
        let shapes = graph.output_shapes()?;
        let mut input = graph.input_shape.clone();
        let mut layers = Vec::with_capacity(graph.layers.len());
        for (i, (spec, out)) in graph.layers.iter().zip(&shapes).enumerate() {
            let (trainable, non_trainable) = match *spec {
                // k·k·Cin·Cout weights; BN keeps 4 values per channel, 2 trainable.
                LayerSpec::ConvBlock { kernel, filters, .. } => (kernel * kernel * input[2] * filters + 2 * filters, 2 * filters),
                LayerSpec::SeparableBlock { filters, .. } => {
                    let c = input[2];
                    (9 * c + 2 * c + c * filters + 2 * filters, 2 * c + 2 * filters)
                }
                LayerSpec::Dense { units, .. } => (input[0] * units + units, 0),
                _ => (0, 0),
            };
            layers.push(LayerParamCount {
                name: graph.block_prefix(i),
                kind: spec.kind().to_owned(),
                output_shape: out.clone(),
                trainable,
                non_trainable,
            });
            input = out.clone();
        }
        let total_params = layers.iter().map(LayerParamCount::total).sum();
        let trainable_params = layers.iter().map(|l| l.trainable).sum();
        let serialized_bytes_f32 = crate::model_io::encoded_len(graph)?;
        Ok(Self { layers, total_params, trainable_params, serialized_bytes_f32 })
    }
}

#[derive(Clone, Debug, PartialEq)]
struct NamedLayer<T> {
    name: String,
    layer: Layer<T>,
}

/// An instantiated [`ModelGraph`].
#[derive(Clone, Debug, PartialEq)]
pub struct Model<T = f32> {
    graph: ModelGraph,
    layers: Vec<NamedLayer<T>>,
}

impl<T: Scalar> Model<T> {
    /// Builds the graph with freshly initialised parameters: He-uniform for
    /// layers feeding a ReLU, Glorot-uniform for the output layer.
    pub fn new(graph: ModelGraph, rng: &mut SeededRng) -> Result<Self> {
        let mut layers = Vec::new();
        let mut input = graph.input_shape.clone();
        for (i, spec) in graph.layers.iter().enumerate() {
            let p = graph.block_prefix(i);
            let mut push = |suffix: &str, layer: Layer<T>| layers.push(NamedLayer { name: format!("{p}.{suffix}"), layer });
            match *spec {
                LayerSpec::ConvBlock { kernel, filters, stride } => {
                    let cin = input[2];
                    let w = he_uniform(&[kernel, kernel, cin, filters], kernel * kernel * cin, rng)?;
                    push("conv", Layer::Conv2d(Conv2d::new(w, None, stride)?));
                    push("bn", Layer::BatchNorm(BatchNorm::new(filters)?));
                    push("relu", Layer::Relu);
                }
                LayerSpec::SeparableBlock { filters, stride } => {
                    let c = input[2];
                    let dw = he_uniform(&[3, 3, c], 9, rng)?;
                    push("dw", Layer::DepthwiseConv2d(DepthwiseConv2d::new(dw, stride)?));
                    push("dw_bn", Layer::BatchNorm(BatchNorm::new(c)?));
                    push("dw_relu", Layer::Relu);
                    let pw = he_uniform(&[1, 1, c, filters], c, rng)?;
                    push("pw", Layer::Conv2d(Conv2d::new(pw, None, 1)?));
                    push("pw_bn", Layer::BatchNorm(BatchNorm::new(filters)?));
                    push("pw_relu", Layer::Relu);
                }
                LayerSpec::MaxPool => push("pool", Layer::MaxPool2),
                LayerSpec::GaussianDropout { rate } => push("noise", Layer::GaussianDropout { rate }),
                LayerSpec::Dropout { rate } => push("dropout", Layer::Dropout { rate }),
                LayerSpec::Flatten => push("flatten", Layer::Flatten),
                LayerSpec::GlobalAvgPool => push("gap", Layer::GlobalAvgPool),
                LayerSpec::Dense { units, activation } => {
                    let fan_in = input[0];
                    let w = match activation {
                        Activation::Relu => he_uniform(&[fan_in, units], fan_in, rng)?,
                        Activation::Softmax | Activation::Linear => glorot_uniform(&[fan_in, units], fan_in, units, rng)?,
                    };
                    push("dense", Layer::Dense(Dense::new(w, Some(Tensor::zeros(&[units])?))?));
                    if activation == Activation::Relu {
                        push("relu", Layer::Relu);
                    }
                }
            }
            input = spec.output_shape(&input)?;
        }
        Ok(Self { graph, layers })
    }

    /// Shorthand for `Model::new(ModelGraph::build(arch, head), rng)`.
    pub fn build(arch: ArchId, head: Head, rng: &mut SeededRng) -> Result<Self> {
        Self::new(ModelGraph::build(arch, head), rng)
    }

    pub fn graph(&self) -> &ModelGraph {
        &self.graph
    }

    pub fn head(&self) -> Head {
        self.graph.head
    }

    pub fn layers(&self) -> impl Iterator<Item = (&str, &Layer<T>)> {
        self.layers.iter().map(|l| (l.name.as_str(), &l.layer))
    }

    fn check_input(&self, batch: &Tensor<T>) -> Result<()> {
        if batch.rank() < 2 || batch.shape()[1..] != self.graph.input_shape[..] {
            let mut expected = vec![0];
            expected.extend(&self.graph.input_shape);
            return Err(Error::ShapeMismatch { op: "model input", left: batch.shape().to_vec(), right: expected });
        }
        Ok(())
    }

    /// Output-layer pre-activations for a batch, inference mode.
    pub fn infer_logits(&self, batch: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(batch)?;
        let mut x = batch.clone();
        for l in &self.layers {
            x = l.layer.infer(&x)?;
        }
        Ok(x)
    }

    /// Head outputs: class probabilities or (valence, arousal).
    pub fn predict(&self, batch: &Tensor<T>) -> Result<Tensor<T>> {
        let logits = self.infer_logits(batch)?;
        Ok(match self.graph.head.activation() {
            Activation::Softmax => crate::nn::ops::softmax(&logits),
            _ => logits,
        })
    }

    /// Forward pass returning output-layer pre-activations together with the
    /// contexts required by [`Model::backward`].
    pub fn forward(&mut self, batch: &Tensor<T>, training: bool, rng: &mut SeededRng) -> Result<(Tensor<T>, Vec<LayerContext<T>>)> {
        self.check_input(batch)?;
        let mut contexts = Vec::with_capacity(self.layers.len());
        let mut x = batch.clone();
        for l in &mut self.layers {
            let mut ctx = LayerContext::new(training);
            x = l.layer.forward(&x, &mut ctx, rng)?;
            contexts.push(ctx);
        }
        Ok((x, contexts))
    }

    /// Gradients of every trainable tensor, in [`Model::trainable`] order,
    /// given the loss gradient with respect to the logits.
    pub fn backward(&self, contexts: &[LayerContext<T>], grad_logits: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        if contexts.len() != self.layers.len() {
            return Err(Error::MissingContext("model"));
        }
        let mut per_layer = Vec::with_capacity(self.layers.len());
        let mut grad = grad_logits.clone();
        for (l, ctx) in self.layers.iter().zip(contexts).rev() {
            let (g, params) = l.layer.backward(ctx, &grad)?;
            grad = g;
            per_layer.push(params);
        }
        Ok(per_layer.into_iter().rev().flatten().collect())
    }

    /// Same as [`Model::backward`] but also returns the input gradient.
    pub fn backward_with_input(&self, contexts: &[LayerContext<T>], grad_logits: &Tensor<T>) -> Result<(Tensor<T>, Vec<Tensor<T>>)> {
        if contexts.len() != self.layers.len() {
            return Err(Error::MissingContext("model"));
        }
        let mut per_layer = Vec::with_capacity(self.layers.len());
        let mut grad = grad_logits.clone();
        for (l, ctx) in self.layers.iter().zip(contexts).rev() {
            let (g, params) = l.layer.backward(ctx, &grad)?;
            grad = g;
            per_layer.push(params);
        }
        Ok((grad, per_layer.into_iter().rev().flatten().collect()))
    }

    pub fn trainable(&self) -> Vec<&Tensor<T>> {
        self.layers.iter().flat_map(|l| l.layer.trainable()).collect()
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers.iter_mut().flat_map(|l| l.layer.trainable_mut()).collect()
    }

    /// Every persistent tensor with its fully qualified name, in the order of
    /// [`ModelGraph::tensor_specs`].
    pub fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        self.layers
            .iter()
            .flat_map(|l| l.layer.state().into_iter().map(move |(suffix, t)| (format!("{}.{suffix}", l.name), t)))
            .collect()
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                let name = l.name.clone();
                l.layer.state_mut().into_iter().map(move |(suffix, t)| (format!("{name}.{suffix}"), t))
            })
            .collect()
    }

    pub fn param_report(&self) -> Result<ParamReport> {
        self.graph.param_report()
    }

    /// Replaces the output layer with a freshly initialised one for
    /// `new_head`. Every other tensor is carried over unchanged.
    pub fn swap_head(&self, new_head: Head, rng: &mut SeededRng) -> Result<Self> {
        if new_head == self.graph.head {
            return Err(Error::SameHead(new_head.as_str()));
        }
        let mut graph = self.graph.clone();
        let last = graph.head_index();
        graph.layers[last] = LayerSpec::Dense { units: new_head.units(), activation: new_head.activation() };
        graph.head = new_head;

        let mut layers = self.layers.clone();
        let head = layers.last_mut().expect("graph ends with the head dense layer");
        let Layer::Dense(old) = &head.layer else {
            return Err(Error::InvalidConfig("model does not end with a dense head".into()));
        };
        let fan_in = old.in_features();
        let units = new_head.units();
        let w = glorot_uniform(&[fan_in, units], fan_in, units, rng)?;
        head.layer = Layer::Dense(Dense::new(w, Some(Tensor::zeros(&[units])?))?);
        Ok(Self { graph, layers })
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        let layers = self
            .layers
            .iter()
            .map(|l| {
                let layer = match &l.layer {
                    Layer::Conv2d(c) => Layer::Conv2d(
                        Conv2d::new(c.weight().cast(), c.bias().map(Tensor::cast), c.stride()).expect("valid conv"),
                    ),
                    Layer::DepthwiseConv2d(c) => {
                        Layer::DepthwiseConv2d(DepthwiseConv2d::new(c.weight().cast(), c.stride()).expect("valid depthwise"))
                    }
                    Layer::BatchNorm(bn) => Layer::BatchNorm(
                        BatchNorm::from_parts(
                            bn.gamma.cast(),
                            bn.beta.cast(),
                            bn.running_mean.cast(),
                            bn.running_var.cast(),
                        )
                        .expect("valid batchnorm"),
                    ),
                    Layer::Dense(d) => Layer::Dense(Dense::new(d.weight().cast(), d.bias().map(Tensor::cast)).expect("valid dense")),
                    Layer::Relu => Layer::Relu,
                    Layer::Softmax => Layer::Softmax,
                    Layer::MaxPool2 => Layer::MaxPool2,
                    Layer::GlobalAvgPool => Layer::GlobalAvgPool,
                    Layer::Flatten => Layer::Flatten,
                    Layer::Dropout { rate } => Layer::Dropout { rate: *rate },
                    Layer::GaussianDropout { rate } => Layer::GaussianDropout { rate: *rate },
                };
                NamedLayer { name: l.name.clone(), layer }
            })
            .collect();
        Model { graph: self.graph.clone(), layers }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_round_trip() {
        for a in ArchId::ALL {
            assert_eq!(a.as_str().parse::<ArchId>().unwrap(), a);
        }
        assert!(matches!("arch4-resnet".parse::<ArchId>(), Err(Error::UnknownArch(_))));
        assert_eq!("va".parse::<Head>().unwrap(), Head::ValenceArousal);
        assert!("regression".parse::<Head>().is_err());
    }

    #[test]
    fn tensor_specs_match_instantiated_model() {
        let mut rng = SeededRng::new(1);
        for arch in ArchId::ALL {
            let model = Model::<f32>::build(arch, Head::Emotion, &mut rng).unwrap();
            let specs = model.graph().tensor_specs().unwrap();
            let named = model.named_tensors();
            assert_eq!(specs.len(), named.len());
            for (spec, (name, t)) in specs.iter().zip(&named) {
                assert_eq!(&spec.name, name);
                assert_eq!(spec.shape.as_slice(), t.shape());
            }
            let total: usize = named.iter().map(|(_, t)| t.len()).sum();
            assert_eq!(total, model.param_report().unwrap().total_params);
            let trainable: usize = model.trainable().iter().map(|t| t.len()).sum();
            assert_eq!(trainable, model.param_report().unwrap().trainable_params);
        }
    }

    #[test]
    fn head_swap_changes_only_final_dense_count() {
        let e = ModelGraph::build(ArchId::VggNet, Head::Emotion).param_report().unwrap();
        let v = ModelGraph::build(ArchId::VggNet, Head::ValenceArousal).param_report().unwrap();
        assert_eq!(e.total_params - v.total_params, 6 * 1024 + 6);
        let n = e.layers.len();
        assert_eq!(e.layers[..n - 1], v.layers[..n - 1]);
    }

    #[test]
    fn same_head_swap_is_rejected() {
        let graph = ModelGraph::custom("tiny", &[4, 4, 1], vec![LayerSpec::Flatten], Head::Emotion).unwrap();
        let model = Model::<f32>::new(graph, &mut SeededRng::new(0)).unwrap();
        assert!(matches!(model.swap_head(Head::Emotion, &mut SeededRng::new(1)), Err(Error::SameHead("emotion"))));
    }

    #[test]
    fn rejects_wrong_input_shape() {
        let model = Model::<f32>::build(ArchId::MobileNet, Head::Emotion, &mut SeededRng::new(0)).unwrap();
        let wrong = Tensor::<f32>::zeros(&[1, 64, 64, 3]).unwrap();
        assert!(matches!(model.predict(&wrong), Err(Error::ShapeMismatch { op: "model input", .. })));
        let gray = Tensor::<f32>::zeros(&[1, 128, 128, 1]).unwrap();
        assert!(model.predict(&gray).is_err());
    }
}
