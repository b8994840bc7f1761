//! Layers with forward and backward passes.
//!
//! A [`Layer`] owns its parameters. Passes that need to remember activations
//! for the backward pass write them into a caller-owned [`LayerContext`], so
//! one set of parameters can serve many concurrent inference calls.

mod conv;
mod dense;
mod norm;
pub mod ops;

use rand::Rng;

pub use conv::{same_padding, Conv2d, DepthwiseConv2d};
pub use dense::Dense;
pub use norm::{BatchNorm, BatchNormCache, BN_EPSILON, BN_MOMENTUM};

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub enum Layer<T> {
    Conv2d(Conv2d<T>),
    DepthwiseConv2d(DepthwiseConv2d<T>),
    BatchNorm(BatchNorm<T>),
    Dense(Dense<T>),
    Relu,
    Softmax,
    MaxPool2,
    GlobalAvgPool,
    Flatten,
    Dropout { rate: f64 },
    GaussianDropout { rate: f64 },
}

#[derive(Clone, Debug)]
enum Cache<T> {
    Input(Tensor<T>),
    Output(Tensor<T>),
    BatchNorm(BatchNormCache<T>),
    MaxPool { input_shape: Vec<usize>, argmax: Vec<usize> },
    Shape(Vec<usize>),
    Multipliers(Vec<T>),
    Passthrough,
}

/// Per-call state linking a forward pass to its backward pass.
#[derive(Clone, Debug)]
pub struct LayerContext<T> {
    training: bool,
    cache: Option<Cache<T>>,
}

impl<T> LayerContext<T> {
    pub fn new(training: bool) -> Self {
        Self { training, cache: None }
    }

    pub fn training(&self) -> bool {
        self.training
    }
}

/// He-uniform initialisation, for layers feeding a ReLU.
pub fn he_uniform<T: Scalar>(shape: &[usize], fan_in: usize, rng: &mut SeededRng) -> Result<Tensor<T>> {
    let limit = (6.0 / fan_in as f64).sqrt();
    Tensor::from_fn(shape, |_| T::from_f64(rng.random_range(-limit..limit)))
}

/// Glorot-uniform initialisation, for output layers.
pub fn glorot_uniform<T: Scalar>(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut SeededRng) -> Result<Tensor<T>> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_fn(shape, |_| T::from_f64(rng.random_range(-limit..limit)))
}

impl<T: Scalar> Layer<T> {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Conv2d(_) => "conv",
            Layer::DepthwiseConv2d(_) => "depthwise",
            Layer::BatchNorm(_) => "bn",
            Layer::Dense(_) => "dense",
            Layer::Relu => "relu",
            Layer::Softmax => "softmax",
            Layer::MaxPool2 => "maxpool",
            Layer::GlobalAvgPool => "gap",
            Layer::Flatten => "flatten",
            Layer::Dropout { .. } => "dropout",
            Layer::GaussianDropout { .. } => "gaussian_dropout",
        }
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match self {
            Layer::Conv2d(c) => c.output_shape(input),
            Layer::DepthwiseConv2d(c) => c.output_shape(input),
            Layer::BatchNorm(bn) => {
                if input.last() != Some(&bn.channels()) {
                    return Err(Error::ShapeMismatch { op: "batchnorm", left: input.to_vec(), right: vec![bn.channels()] });
                }
                Ok(input.to_vec())
            }
            Layer::Dense(d) => {
                if input != [d.in_features()] {
                    return Err(Error::ShapeMismatch { op: "dense", left: input.to_vec(), right: vec![d.in_features()] });
                }
                Ok(vec![d.out_features()])
            }
            Layer::MaxPool2 => {
                if input.len() != 3 || !input[0].is_multiple_of(2) || !input[1].is_multiple_of(2) {
                    return Err(Error::InvalidConfig(format!("max pooling needs even H×W×C input, got {input:?}")));
                }
                Ok(vec![input[0] / 2, input[1] / 2, input[2]])
            }
            Layer::GlobalAvgPool => {
                if input.len() != 3 {
                    return Err(Error::ShapeMismatch { op: "global average pool", left: input.to_vec(), right: vec![] });
                }
                Ok(vec![input[2]])
            }
            Layer::Flatten => Ok(vec![input.iter().product()]),
            Layer::Relu | Layer::Softmax | Layer::Dropout { .. } | Layer::GaussianDropout { .. } => Ok(input.to_vec()),
        }
    }

    /// Deterministic inference pass: no dropout, running BN statistics.
    pub fn infer(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Layer::Conv2d(c) => c.forward(input),
            Layer::DepthwiseConv2d(c) => c.forward(input),
            Layer::BatchNorm(bn) => bn.infer(input),
            Layer::Dense(d) => d.forward(input),
            Layer::Relu => Ok(ops::relu(input)),
            Layer::Softmax => Ok(ops::softmax(input)),
            Layer::MaxPool2 => Ok(ops::maxpool2(input)?.0),
            Layer::GlobalAvgPool => ops::global_average_pool(input),
            Layer::Flatten => ops::flatten(input.clone()),
            Layer::Dropout { .. } | Layer::GaussianDropout { .. } => Ok(input.clone()),
        }
    }

    /// Forward pass recording what [`Layer::backward`] needs in `ctx`.
    ///
    /// In training mode batch normalisation uses (and updates) batch
    /// statistics and dropout layers draw fresh noise from `rng`.
    pub fn forward(&mut self, input: &Tensor<T>, ctx: &mut LayerContext<T>, rng: &mut SeededRng) -> Result<Tensor<T>> {
        let training = ctx.training;
        let (out, cache) = match self {
            Layer::Conv2d(c) => (c.forward(input)?, Cache::Input(input.clone())),
            Layer::DepthwiseConv2d(c) => (c.forward(input)?, Cache::Input(input.clone())),
            Layer::Dense(d) => (d.forward(input)?, Cache::Input(input.clone())),
            Layer::BatchNorm(bn) if training => {
                let (out, cache) = bn.forward_train(input)?;
                (out, Cache::BatchNorm(cache))
            }
            Layer::BatchNorm(bn) => (bn.infer(input)?, Cache::Input(input.clone())),
            Layer::Relu => (ops::relu(input), Cache::Input(input.clone())),
            Layer::Softmax => {
                let out = ops::softmax(input);
                (out.clone(), Cache::Output(out))
            }
            Layer::MaxPool2 => {
                let (out, argmax) = ops::maxpool2(input)?;
                (out, Cache::MaxPool { input_shape: input.shape().to_vec(), argmax })
            }
            Layer::GlobalAvgPool => (ops::global_average_pool(input)?, Cache::Shape(input.shape().to_vec())),
            Layer::Flatten => (ops::flatten(input.clone())?, Cache::Shape(input.shape().to_vec())),
            Layer::Dropout { rate } | Layer::GaussianDropout { rate } if !training || *rate == 0.0 => {
                (input.clone(), Cache::Passthrough)
            }
            Layer::Dropout { rate } => {
                let mask = ops::dropout_mask(input.len(), *rate, rng)?;
                (ops::apply_multipliers(input, &mask)?, Cache::Multipliers(mask))
            }
            Layer::GaussianDropout { rate } => {
                let noise = ops::gaussian_noise(input.len(), *rate, rng)?;
                (ops::apply_multipliers(input, &noise)?, Cache::Multipliers(noise))
            }
        };
        ctx.cache = Some(cache);
        Ok(out)
    }

    /// Returns the gradient with respect to the input and the gradients of
    /// the trainable parameters, in [`Layer::trainable`] order.
    pub fn backward(&self, ctx: &LayerContext<T>, grad_out: &Tensor<T>) -> Result<(Tensor<T>, Vec<Tensor<T>>)> {
        let cache = ctx.cache.as_ref().ok_or(Error::MissingContext(self.kind()))?;
        let no_params = |g: Tensor<T>| Ok((g, Vec::new()));
        match (self, cache) {
            (Layer::Conv2d(c), Cache::Input(x)) => c.backward(x, grad_out),
            (Layer::DepthwiseConv2d(c), Cache::Input(x)) => c.backward(x, grad_out),
            (Layer::Dense(d), Cache::Input(x)) => d.backward(x, grad_out),
            (Layer::BatchNorm(bn), Cache::BatchNorm(cache)) => bn.backward(cache, grad_out),
            (Layer::BatchNorm(bn), Cache::Input(x)) => batchnorm_inference_backward(bn, x, grad_out),
            (Layer::Relu, Cache::Input(x)) => no_params(ops::relu_backward(x, grad_out)?),
            (Layer::Softmax, Cache::Output(y)) => no_params(ops::softmax_backward(y, grad_out)?),
            (Layer::MaxPool2, Cache::MaxPool { input_shape, argmax }) => {
                no_params(ops::maxpool2_backward(input_shape, argmax, grad_out)?)
            }
            (Layer::GlobalAvgPool, Cache::Shape(shape)) => no_params(ops::global_average_pool_backward(shape, grad_out)?),
            (Layer::Flatten, Cache::Shape(shape)) => no_params(grad_out.clone().reshape(shape)?),
            (Layer::Dropout { .. } | Layer::GaussianDropout { .. }, Cache::Passthrough) => no_params(grad_out.clone()),
            (Layer::Dropout { .. } | Layer::GaussianDropout { .. }, Cache::Multipliers(m)) => {
                no_params(ops::apply_multipliers(grad_out, m)?)
            }
            _ => Err(Error::MissingContext(self.kind())),
        }
    }

    pub fn trainable(&self) -> Vec<&Tensor<T>> {
        match self {
            Layer::Conv2d(c) => std::iter::once(&c.weight).chain(c.bias.as_ref()).collect(),
            Layer::DepthwiseConv2d(c) => vec![&c.weight],
            Layer::BatchNorm(bn) => vec![&bn.gamma, &bn.beta],
            Layer::Dense(d) => std::iter::once(&d.weight).chain(d.bias.as_ref()).collect(),
            _ => Vec::new(),
        }
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut Tensor<T>> {
        match self {
            Layer::Conv2d(c) => std::iter::once(&mut c.weight).chain(c.bias.as_mut()).collect(),
            Layer::DepthwiseConv2d(c) => vec![&mut c.weight],
            Layer::BatchNorm(bn) => vec![&mut bn.gamma, &mut bn.beta],
            Layer::Dense(d) => std::iter::once(&mut d.weight).chain(d.bias.as_mut()).collect(),
            _ => Vec::new(),
        }
    }

    /// Every persistent tensor, trainable or not, with a stable suffix name.
    pub fn state(&self) -> Vec<(&'static str, &Tensor<T>)> {
        match self {
            Layer::Conv2d(c) => {
                let mut v = vec![("weight", &c.weight)];
                v.extend(c.bias.as_ref().map(|b| ("bias", b)));
                v
            }
            Layer::DepthwiseConv2d(c) => vec![("weight", &c.weight)],
            Layer::BatchNorm(bn) => vec![
                ("gamma", &bn.gamma),
                ("beta", &bn.beta),
                ("moving_mean", &bn.running_mean),
                ("moving_variance", &bn.running_var),
            ],
            Layer::Dense(d) => {
                let mut v = vec![("weight", &d.weight)];
                v.extend(d.bias.as_ref().map(|b| ("bias", b)));
                v
            }
            _ => Vec::new(),
        }
    }

    pub fn state_mut(&mut self) -> Vec<(&'static str, &mut Tensor<T>)> {
        match self {
            Layer::Conv2d(c) => {
                let mut v = vec![("weight", &mut c.weight)];
                v.extend(c.bias.as_mut().map(|b| ("bias", b)));
                v
            }
            Layer::DepthwiseConv2d(c) => vec![("weight", &mut c.weight)],
            Layer::BatchNorm(bn) => vec![
                ("gamma", &mut bn.gamma),
                ("beta", &mut bn.beta),
                ("moving_mean", &mut bn.running_mean),
                ("moving_variance", &mut bn.running_var),
            ],
            Layer::Dense(d) => {
                let mut v = vec![("weight", &mut d.weight)];
                v.extend(d.bias.as_mut().map(|b| ("bias", b)));
                v
            }
            _ => Vec::new(),
        }
    }
}

fn batchnorm_inference_backward<T: Scalar>(bn: &BatchNorm<T>, input: &Tensor<T>, grad_out: &Tensor<T>) -> Result<(Tensor<T>, Vec<Tensor<T>>)> {
    let c = bn.channels();
    let eps = T::from_f64(BN_EPSILON);
    let inv_std: Vec<T> = bn.running_var.data().iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let mut dx = grad_out.clone();
    let mut d_gamma = vec![T::zero(); c];
    let mut d_beta = vec![T::zero(); c];
    for (d, x) in dx.data_mut().chunks_mut(c).zip(input.data().chunks(c)) {
        for i in 0..c {
            d_gamma[i] += d[i] * (x[i] - bn.running_mean.data()[i]) * inv_std[i];
            d_beta[i] += d[i];
            d[i] *= bn.gamma.data()[i] * inv_std[i];
        }
    }
    Ok((dx, vec![Tensor::from_data(&[c], d_gamma)?, Tensor::from_data(&[c], d_beta)?]))
}
