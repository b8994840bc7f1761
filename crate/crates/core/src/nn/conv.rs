//! Standard and depthwise 2-D convolution over NHWC batches with "same"
//! zero padding.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Output extent and leading pad for "same" padding along one axis.
///
/// The output size is `ceil(input / stride)`. When the total padding is odd
/// the extra row/column goes to the top/left.
pub fn same_padding(input: usize, kernel: usize, stride: usize) -> (usize, usize) {
    let out = input.div_ceil(stride);
    let total = ((out - 1) * stride + kernel).saturating_sub(input);
    (out, total - total / 2)
}

#[derive(Clone, Copy, Debug)]
struct Geometry {
    h: usize,
    w: usize,
    cin: usize,
    k: usize,
    stride: usize,
    ho: usize,
    wo: usize,
    pad_top: usize,
    pad_left: usize,
}

impl Geometry {
    fn new(shape: &[usize], k: usize, stride: usize) -> Self {
        let (h, w, cin) = (shape[1], shape[2], shape[3]);
        let (ho, pad_top) = same_padding(h, k, stride);
        let (wo, pad_left) = same_padding(w, k, stride);
        Self { h, w, cin, k, stride, ho, wo, pad_top, pad_left }
    }

    /// Source coordinate for output position `o` and kernel tap `t`, if it
    /// falls inside the (unpadded) input.
    #[inline]
    fn source(o: usize, t: usize, stride: usize, pad: usize, extent: usize) -> Option<usize> {
        let pos = (o * stride + t).checked_sub(pad)?;
        (pos < extent).then_some(pos)
    }

    fn patch_len(&self) -> usize {
        self.k * self.k * self.cin
    }

    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1
    }
}

fn im2col<T: Scalar>(input: &[T], g: &Geometry, cols: &mut [T]) {
    let patch = g.patch_len();
    for oy in 0..g.ho {
        for ox in 0..g.wo {
            let row = &mut cols[(oy * g.wo + ox) * patch..][..patch];
            for ky in 0..g.k {
                let iy = Geometry::source(oy, ky, g.stride, g.pad_top, g.h);
                for kx in 0..g.k {
                    let dst = &mut row[(ky * g.k + kx) * g.cin..][..g.cin];
                    match (iy, Geometry::source(ox, kx, g.stride, g.pad_left, g.w)) {
                        (Some(iy), Some(ix)) => {
                            dst.copy_from_slice(&input[(iy * g.w + ix) * g.cin..][..g.cin])
                        }
                        _ => dst.fill(T::zero()),
                    }
                }
            }
        }
    }
}

fn col2im<T: Scalar>(cols: &[T], g: &Geometry, grad_input: &mut [T]) {
    let patch = g.patch_len();
    for oy in 0..g.ho {
        for ox in 0..g.wo {
            let row = &cols[(oy * g.wo + ox) * patch..][..patch];
            for ky in 0..g.k {
                let Some(iy) = Geometry::source(oy, ky, g.stride, g.pad_top, g.h) else { continue };
                for kx in 0..g.k {
                    let Some(ix) = Geometry::source(ox, kx, g.stride, g.pad_left, g.w) else { continue };
                    let src = &row[(ky * g.k + kx) * g.cin..][..g.cin];
                    let dst = &mut grad_input[(iy * g.w + ix) * g.cin..][..g.cin];
                    for (d, &s) in dst.iter_mut().zip(src) {
                        *d += s;
                    }
                }
            }
        }
    }
}

fn check_image_batch(input: &Tensor<impl Scalar>, channels: usize, layer: &'static str) -> Result<()> {
    if input.rank() != 4 || input.shape()[3] != channels {
        return Err(Error::ShapeMismatch {
            op: layer,
            left: input.shape().to_vec(),
            right: vec![channels],
        });
    }
    Ok(())
}

/// Square-kernel convolution. Weights are stored `[k, k, in, out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d<T> {
    pub(crate) weight: Tensor<T>,
    pub(crate) bias: Option<Tensor<T>>,
    stride: usize,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new(weight: Tensor<T>, bias: Option<Tensor<T>>, stride: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::InvalidConfig("convolution stride must be positive".into()));
        }
        let s = weight.shape();
        if s.len() != 4 || s[0] != s[1] {
            return Err(Error::InvalidConfig(format!("conv weight must be [k,k,in,out], got {s:?}")));
        }
        if let Some(b) = &bias {
            if b.shape() != [s[3]] {
                return Err(Error::ShapeMismatch { op: "conv2d bias", left: b.shape().to_vec(), right: vec![s[3]] });
            }
        }
        Ok(Self { weight, bias, stride })
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[2]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[3]
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn weight(&self) -> &Tensor<T> {
        &self.weight
    }

    pub fn bias(&self) -> Option<&Tensor<T>> {
        self.bias.as_ref()
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        if input.len() != 3 || input[2] != self.in_channels() {
            return Err(Error::ShapeMismatch { op: "conv2d", left: input.to_vec(), right: vec![self.in_channels()] });
        }
        Ok(vec![input[0].div_ceil(self.stride), input[1].div_ceil(self.stride), self.out_channels()])
    }

    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        check_image_batch(input, self.in_channels(), "conv2d")?;
        let g = Geometry::new(input.shape(), self.kernel(), self.stride);
        let cout = self.out_channels();
        let (n, in_len, out_len) = (input.shape()[0], g.h * g.w * g.cin, g.ho * g.wo * cout);
        let mut out = vec![T::zero(); n * out_len];
        let weight = self.weight.data();
        out.par_chunks_mut(out_len).zip(input.data().par_chunks(in_len)).for_each(|(dst, src)| {
            if let Some(bias) = &self.bias {
                for px in dst.chunks_mut(cout) {
                    px.copy_from_slice(bias.data());
                }
            }
            let beta = if self.bias.is_some() { T::one() } else { T::zero() };
            let rows = g.ho * g.wo;
            if g.is_pointwise() {
                T::gemm(rows, g.cin, cout, src, false, weight, false, beta, dst);
            } else {
                let mut cols = vec![T::zero(); rows * g.patch_len()];
                im2col(src, &g, &mut cols);
                T::gemm(rows, g.patch_len(), cout, &cols, false, weight, false, beta, dst);
            }
        });
        Tensor::from_data(&[n, g.ho, g.wo, cout], out)
    }

    /// Returns the input gradient and `[weight, bias?]` gradients.
    pub fn backward(&self, input: &Tensor<T>, grad_out: &Tensor<T>) -> Result<(Tensor<T>, Vec<Tensor<T>>)> {
        check_image_batch(input, self.in_channels(), "conv2d backward")?;
        let g = Geometry::new(input.shape(), self.kernel(), self.stride);
        let cout = self.out_channels();
        let n = input.shape()[0];
        if grad_out.shape() != [n, g.ho, g.wo, cout] {
            return Err(Error::ShapeMismatch {
                op: "conv2d backward",
                left: grad_out.shape().to_vec(),
                right: vec![n, g.ho, g.wo, cout],
            });
        }
        let (in_len, out_len, rows, patch) = (g.h * g.w * g.cin, g.ho * g.wo * cout, g.ho * g.wo, g.patch_len());
        let weight = self.weight.data();
        let mut grad_in = vec![T::zero(); input.len()];
        let per_sample: Vec<Vec<T>> = grad_in
            .par_chunks_mut(in_len)
            .zip(input.data().par_chunks(in_len))
            .zip(grad_out.data().par_chunks(out_len))
            .map(|((dx, x), dy)| {
                let mut dw = vec![T::zero(); patch * cout];
                if g.is_pointwise() {
                    T::gemm(patch, rows, cout, x, true, dy, false, T::zero(), &mut dw);
                    T::gemm(rows, cout, patch, dy, false, weight, true, T::zero(), dx);
                } else {
                    let mut cols = vec![T::zero(); rows * patch];
                    im2col(x, &g, &mut cols);
                    T::gemm(patch, rows, cout, &cols, true, dy, false, T::zero(), &mut dw);
                    T::gemm(rows, cout, patch, dy, false, weight, true, T::zero(), &mut cols);
                    col2im(&cols, &g, dx);
                }
                dw
            })
            .collect();
        let mut grad_w = vec![T::zero(); patch * cout];
        for dw in &per_sample {
            for (acc, &v) in grad_w.iter_mut().zip(dw) {
                *acc += v;
            }
        }
        let mut grads = vec![Tensor::from_data(self.weight.shape(), grad_w)?];
        if self.bias.is_some() {
            let mut grad_b = vec![T::zero(); cout];
            for px in grad_out.data().chunks(cout) {
                for (acc, &v) in grad_b.iter_mut().zip(px) {
                    *acc += v;
                }
            }
            grads.push(Tensor::from_data(&[cout], grad_b)?);
        }
        Ok((Tensor::from_data(input.shape(), grad_in)?, grads))
    }
}

/// Per-channel spatial convolution. Weights are stored `[k, k, channels]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthwiseConv2d<T> {
    pub(crate) weight: Tensor<T>,
    stride: usize,
}

impl<T: Scalar> DepthwiseConv2d<T> {
    pub fn new(weight: Tensor<T>, stride: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::InvalidConfig("convolution stride must be positive".into()));
        }
        let s = weight.shape();
        if s.len() != 3 || s[0] != s[1] {
            return Err(Error::InvalidConfig(format!("depthwise weight must be [k,k,c], got {s:?}")));
        }
        Ok(Self { weight, stride })
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn channels(&self) -> usize {
        self.weight.shape()[2]
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn weight(&self) -> &Tensor<T> {
        &self.weight
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        if input.len() != 3 || input[2] != self.channels() {
            return Err(Error::ShapeMismatch { op: "depthwise conv", left: input.to_vec(), right: vec![self.channels()] });
        }
        Ok(vec![input[0].div_ceil(self.stride), input[1].div_ceil(self.stride), input[2]])
    }

    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        check_image_batch(input, self.channels(), "depthwise conv")?;
        let g = Geometry::new(input.shape(), self.kernel(), self.stride);
        let c = g.cin;
        let (n, in_len, out_len) = (input.shape()[0], g.h * g.w * c, g.ho * g.wo * c);
        let w = self.weight.data();
        let mut out = vec![T::zero(); n * out_len];
        out.par_chunks_mut(out_len).zip(input.data().par_chunks(in_len)).for_each(|(dst, src)| {
            for oy in 0..g.ho {
                for ky in 0..g.k {
                    let Some(iy) = Geometry::source(oy, ky, g.stride, g.pad_top, g.h) else { continue };
                    for ox in 0..g.wo {
                        let acc = &mut dst[(oy * g.wo + ox) * c..][..c];
                        for kx in 0..g.k {
                            let Some(ix) = Geometry::source(ox, kx, g.stride, g.pad_left, g.w) else { continue };
                            let px = &src[(iy * g.w + ix) * c..][..c];
                            let taps = &w[(ky * g.k + kx) * c..][..c];
                            for ((a, &x), &t) in acc.iter_mut().zip(px).zip(taps) {
                                *a += x * t;
                            }
                        }
                    }
                }
            }
        });
        Tensor::from_data(&[n, g.ho, g.wo, c], out)
    }

    pub fn backward(&self, input: &Tensor<T>, grad_out: &Tensor<T>) -> Result<(Tensor<T>, Vec<Tensor<T>>)> {
        check_image_batch(input, self.channels(), "depthwise conv backward")?;
        let g = Geometry::new(input.shape(), self.kernel(), self.stride);
        let c = g.cin;
        let n = input.shape()[0];
        if grad_out.shape() != [n, g.ho, g.wo, c] {
            return Err(Error::ShapeMismatch {
                op: "depthwise conv backward",
                left: grad_out.shape().to_vec(),
                right: vec![n, g.ho, g.wo, c],
            });
        }
        let (in_len, out_len) = (g.h * g.w * c, g.ho * g.wo * c);
        let w = self.weight.data();
        let mut grad_in = vec![T::zero(); input.len()];
        let per_sample: Vec<Vec<T>> = grad_in
            .par_chunks_mut(in_len)
            .zip(input.data().par_chunks(in_len))
            .zip(grad_out.data().par_chunks(out_len))
            .map(|((dx, x), dy)| {
                let mut dw = vec![T::zero(); w.len()];
                for oy in 0..g.ho {
                    for ky in 0..g.k {
                        let Some(iy) = Geometry::source(oy, ky, g.stride, g.pad_top, g.h) else { continue };
                        for ox in 0..g.wo {
                            let d = &dy[(oy * g.wo + ox) * c..][..c];
                            for kx in 0..g.k {
                                let Some(ix) = Geometry::source(ox, kx, g.stride, g.pad_left, g.w) else { continue };
                                let base = (iy * g.w + ix) * c;
                                let tap = (ky * g.k + kx) * c;
                                for ch in 0..c {
                                    dx[base + ch] += d[ch] * w[tap + ch];
                                    dw[tap + ch] += d[ch] * x[base + ch];
                                }
                            }
                        }
                    }
                }
                dw
            })
            .collect();
        let mut grad_w = vec![T::zero(); w.len()];
        for dw in &per_sample {
            for (acc, &v) in grad_w.iter_mut().zip(dw) {
                *acc += v;
            }
        }
        Ok((Tensor::from_data(input.shape(), grad_in)?, vec![Tensor::from_data(self.weight.shape(), grad_w)?]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_padding_geometry() {
        assert_eq!(same_padding(128, 9, 1), (128, 4));
        assert_eq!(same_padding(128, 3, 2), (64, 1));
        assert_eq!(same_padding(7, 3, 2), (4, 1));
        assert_eq!(same_padding(5, 1, 1), (5, 0));
    }

    #[test]
    fn unit_kernel_is_identity() {
        let conv = Conv2d::new(Tensor::from_data(&[1, 1, 1, 1], vec![1.0f32]).unwrap(), None, 1).unwrap();
        let x = Tensor::from_data(&[1, 1, 1, 1], vec![0.37f32]).unwrap();
        assert_eq!(conv.forward(&x).unwrap(), x);
    }

    #[test]
    fn rejects_bad_config() {
        let w = Tensor::<f32>::zeros(&[3, 3, 2, 4]).unwrap();
        assert!(Conv2d::new(w.clone(), None, 0).is_err());
        let conv = Conv2d::new(w, None, 1).unwrap();
        let wrong_channels = Tensor::<f32>::zeros(&[1, 4, 4, 3]).unwrap();
        assert!(matches!(conv.forward(&wrong_channels), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn zero_depthwise_kernel_gives_zero() {
        let dw = DepthwiseConv2d::new(Tensor::<f32>::zeros(&[3, 3, 2]).unwrap(), 1).unwrap();
        let x = Tensor::from_fn(&[1, 4, 4, 2], |i| i as f32).unwrap();
        assert!(dw.forward(&x).unwrap().data().iter().all(|&v| v == 0.0));
    }
}
