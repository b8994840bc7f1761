use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Fully connected layer, `y = x W + b` with `W` stored `[in, out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    pub(crate) weight: Tensor<T>,
    pub(crate) bias: Option<Tensor<T>>,
}

impl<T: Scalar> Dense<T> {
    pub fn new(weight: Tensor<T>, bias: Option<Tensor<T>>) -> Result<Self> {
        if weight.rank() != 2 {
            return Err(Error::InvalidConfig(format!("dense weight must be [in,out], got {:?}", weight.shape())));
        }
        if let Some(b) = &bias {
            if b.shape() != [weight.shape()[1]] {
                return Err(Error::ShapeMismatch { op: "dense bias", left: b.shape().to_vec(), right: vec![weight.shape()[1]] });
            }
        }
        Ok(Self { weight, bias })
    }

    pub fn in_features(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn out_features(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn weight(&self) -> &Tensor<T> {
        &self.weight
    }

    pub fn bias(&self) -> Option<&Tensor<T>> {
        self.bias.as_ref()
    }

    fn check(&self, input: &Tensor<T>) -> Result<usize> {
        if input.rank() != 2 || input.shape()[1] != self.in_features() {
            return Err(Error::ShapeMismatch { op: "dense", left: input.shape().to_vec(), right: self.weight.shape().to_vec() });
        }
        Ok(input.shape()[0])
    }

    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let n = self.check(input)?;
        let out_f = self.out_features();
        let mut out = vec![T::zero(); n * out_f];
        let beta = match &self.bias {
            Some(b) => {
                for row in out.chunks_mut(out_f) {
                    row.copy_from_slice(b.data());
                }
                T::one()
            }
            None => T::zero(),
        };
        T::gemm(n, self.in_features(), out_f, input.data(), false, self.weight.data(), false, beta, &mut out);
        Tensor::from_data(&[n, out_f], out)
    }

    pub fn backward(&self, input: &Tensor<T>, grad_out: &Tensor<T>) -> Result<(Tensor<T>, Vec<Tensor<T>>)> {
        let n = self.check(input)?;
        let (in_f, out_f) = (self.in_features(), self.out_features());
        if grad_out.shape() != [n, out_f] {
            return Err(Error::ShapeMismatch { op: "dense backward", left: grad_out.shape().to_vec(), right: vec![n, out_f] });
        }
        let mut dw = vec![T::zero(); in_f * out_f];
        T::gemm(in_f, n, out_f, input.data(), true, grad_out.data(), false, T::zero(), &mut dw);
        let mut dx = vec![T::zero(); n * in_f];
        T::gemm(n, out_f, in_f, grad_out.data(), false, self.weight.data(), true, T::zero(), &mut dx);
        let mut grads = vec![Tensor::from_data(&[in_f, out_f], dw)?];
        if self.bias.is_some() {
            grads.push(grad_out.reduce(0, T::zero(), |a, b| a + b)?);
        }
        Ok((Tensor::from_data(&[n, in_f], dx)?, grads))
    }
}
