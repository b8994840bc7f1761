//! Dense row-major tensors.
//!
//! Activations follow the NHWC convention: a batch of images is a rank-4
//! tensor `[batch, height, width, channels]`, a batch of feature vectors is
//! `[batch, features]`.

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::Float;

use crate::error::{Error, Result};

/// Element type of a [`Tensor`].
///
/// `f32` is the storage and compute type of every model; `f64` exists so the
/// same layer code can be checked against finite differences.
pub trait Scalar:
    Float + Default + Debug + Send + Sync + Sum + AddAssign + SubAssign + MulAssign + 'static
{
    const DTYPE: &'static str;

    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;

    /// `c = op(a) · op(b) + beta · c` for row-major operands, where `op`
    /// optionally transposes. `op(a)` is `m × k`, `op(b)` is `k × n`.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        a_trans: bool,
        b: &[Self],
        b_trans: bool,
        beta: Self,
        c: &mut [Self],
    );
}

fn operand_strides(rows: usize, cols: usize, trans: bool) -> (isize, isize) {
    // Stored as rows×cols when not transposed, cols×rows otherwise.
    if trans {
        (1, rows as isize)
    } else {
        (cols as isize, 1)
    }
}

macro_rules! impl_scalar {
    ($ty:ty, $name:literal, $gemm:path) => {
        impl Scalar for $ty {
            const DTYPE: &'static str = $name;

            #[inline]
            fn from_f64(v: f64) -> Self {
                v as $ty
            }

            #[inline]
            fn as_f64(self) -> f64 {
                self as f64
            }

            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                a: &[Self],
                a_trans: bool,
                b: &[Self],
                b_trans: bool,
                beta: Self,
                c: &mut [Self],
            ) {
                assert!(a.len() >= m * k, "gemm: lhs too short");
                assert!(b.len() >= k * n, "gemm: rhs too short");
                assert!(c.len() >= m * n, "gemm: output too short");
                if m == 0 || n == 0 {
                    return;
                }
                let (rsa, csa) = operand_strides(m, k, a_trans);
                let (rsb, csb) = operand_strides(k, n, b_trans);
                // SAFETY: the assertions above bound every index the kernel
                // touches for these dimensions and strides.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        1.0,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
            }
        }
    };
}

impl_scalar!(f32, "f32", matrixmultiply::sgemm);
impl_scalar!(f64, "f64", matrixmultiply::dgemm);

/// An n-dimensional array stored contiguously in row-major order.
#[derive(Clone, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Debug> Debug for Tensor<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        const PREVIEW: usize = 8;
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("data", &&self.data[..self.data.len().min(PREVIEW)])
            .finish()
    }
}

fn validate_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(Error::EmptyShape);
    }
    if let Some(axis) = shape.iter().position(|&d| d == 0) {
        return Err(Error::ZeroDimension { axis, shape: shape.to_vec() });
    }
    Ok(shape.iter().product())
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: &[usize], value: T) -> Result<Self> {
        let len = validate_shape(shape)?;
        Ok(Self { shape: shape.to_vec(), data: vec![value; len] })
    }

    pub fn from_data(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let len = validate_shape(shape)?;
        if len != data.len() {
            return Err(Error::LengthMismatch { expected: len, actual: data.len() });
        }
        Ok(Self { shape: shape.to_vec(), data })
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> T) -> Result<Self> {
        let len = validate_shape(shape)?;
        Ok(Self { shape: shape.to_vec(), data: (0..len).map(&mut f).collect() })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Row-major strides, in elements.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.shape.len()];
        for axis in (0..self.shape.len().saturating_sub(1)).rev() {
            strides[axis] = strides[axis + 1] * self.shape[axis + 1];
        }
        strides
    }

    pub fn offset(&self, index: &[usize]) -> Result<usize> {
        if index.len() != self.shape.len() {
            return Err(Error::ShapeMismatch {
                op: "index",
                left: self.shape.clone(),
                right: index.to_vec(),
            });
        }
        let mut flat = 0;
        for ((&i, &dim), stride) in index.iter().zip(&self.shape).zip(self.strides()) {
            if i >= dim {
                return Err(Error::IndexOutOfBounds { index: index.to_vec(), shape: self.shape.clone() });
            }
            flat += i * stride;
        }
        Ok(flat)
    }

    pub fn get(&self, index: &[usize]) -> Result<T> {
        self.offset(index).map(|i| self.data[i])
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        let len = validate_shape(shape)?;
        if len != self.data.len() {
            return Err(Error::LengthMismatch { expected: len, actual: self.data.len() });
        }
        Ok(Self { shape: shape.to_vec(), data: self.data })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { shape: self.shape.clone(), data: self.data.iter().map(|&x| f(x)).collect() }
    }

    pub fn zip(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                op: "zip",
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self { shape: self.shape.clone(), data })
    }

    /// Folds `axis` away. Reducing the only axis of a rank-1 tensor yields
    /// shape `[1]`.
    pub fn reduce(&self, axis: usize, init: T, f: impl Fn(T, T) -> T) -> Result<Self> {
        if axis >= self.rank() {
            return Err(Error::AxisOutOfRange { axis, rank: self.rank() });
        }
        let outer: usize = self.shape[..axis].iter().product();
        let len = self.shape[axis];
        let inner: usize = self.shape[axis + 1..].iter().product();
        let mut out = vec![init; outer * inner];
        for o in 0..outer {
            for a in 0..len {
                let base = (o * len + a) * inner;
                for i in 0..inner {
                    let slot = &mut out[o * inner + i];
                    *slot = f(*slot, self.data[base + i]);
                }
            }
        }
        let mut shape: Vec<usize> = self.shape.iter().enumerate().filter(|&(i, _)| i != axis).map(|(_, &d)| d).collect();
        if shape.is_empty() {
            shape.push(1);
        }
        Ok(Self { shape, data: out })
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        if self.rank() != 2 || rhs.rank() != 2 || self.shape[1] != rhs.shape[0] {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                left: self.shape.clone(),
                right: rhs.shape.clone(),
            });
        }
        let (m, k, n) = (self.shape[0], self.shape[1], rhs.shape[1]);
        let mut out = vec![T::zero(); m * n];
        T::gemm(m, k, n, &self.data, false, &rhs.data, false, T::zero(), &mut out);
        Ok(Self { shape: vec![m, n], data: out })
    }

    /// Index of the largest element of each row of the trailing axis; ties
    /// go to the lowest index.
    pub fn argmax_rows(&self) -> Vec<usize> {
        let width = *self.shape.last().expect("tensor rank >= 1");
        self.data
            .chunks(width)
            .map(|row| {
                let mut best = 0;
                for (i, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = i;
                    }
                }
                best
            })
            .collect()
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&x| U::from_f64(x.as_f64())).collect() }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Stacks equally shaped tensors along a new leading axis.
    pub fn stack(items: &[&Self]) -> Result<Self> {
        let first = items.first().ok_or(Error::EmptyShape)?;
        let mut data = Vec::with_capacity(first.len() * items.len());
        for item in items {
            if item.shape != first.shape {
                return Err(Error::ShapeMismatch {
                    op: "stack",
                    left: first.shape.clone(),
                    right: item.shape.clone(),
                });
            }
            data.extend_from_slice(&item.data);
        }
        let mut shape = vec![items.len()];
        shape.extend_from_slice(&first.shape);
        Ok(Self { shape, data })
    }

    /// The `index`-th slice along the leading axis.
    pub fn slice_outer(&self, index: usize) -> Result<Self> {
        let outer = self.shape[0];
        if index >= outer {
            return Err(Error::IndexOutOfBounds { index: vec![index], shape: self.shape.clone() });
        }
        let inner = self.len() / outer;
        let shape = if self.rank() == 1 { vec![1] } else { self.shape[1..].to_vec() };
        Ok(Self { shape, data: self.data[index * inner..(index + 1) * inner].to_vec() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use proptest::prelude::*;
    use rand::Rng;

    fn naive_matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    out[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        out
    }

    #[test]
    fn construction() {
        let z = Tensor::<f32>::zeros(&[2, 2]).unwrap();
        assert_eq!(z.data(), &[0.0; 4]);
        let t = Tensor::from_data(&[3], vec![1.0f32, 2.0, 3.0]).unwrap();
        assert_eq!(t.len(), 3);
        assert!(matches!(
            Tensor::from_data(&[2], vec![1.0f32, 2.0, 3.0]),
            Err(Error::LengthMismatch { expected: 2, actual: 3 })
        ));
        assert!(matches!(Tensor::<f32>::zeros(&[2, 0]), Err(Error::ZeroDimension { axis: 1, .. })));
        assert!(matches!(Tensor::<f32>::zeros(&[]), Err(Error::EmptyShape)));
    }

    #[test]
    fn matmul_small_cases() {
        let eye = Tensor::from_data(&[2, 2], vec![1.0f32, 0.0, 0.0, 1.0]).unwrap();
        let m = Tensor::from_data(&[2, 2], vec![1.0f32, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(eye.matmul(&m).unwrap(), m);
        let row = Tensor::from_data(&[1, 2], vec![1.0f32, 2.0]).unwrap();
        let col = Tensor::from_data(&[2, 1], vec![3.0f32, 4.0]).unwrap();
        assert_eq!(row.matmul(&col).unwrap().data(), &[11.0]);
        assert!(matches!(row.matmul(&row), Err(Error::ShapeMismatch { op: "matmul", .. })));
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = SeededRng::new(7);
        let a: Vec<f64> = (0..35).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..21).map(|_| rng.random_range(-1.0..1.0)).collect();
        let expected = naive_matmul(&a, &b, 5, 7, 3);
        let ta = Tensor::from_data(&[5, 7], a.iter().map(|&x| x as f32).collect()).unwrap();
        let tb = Tensor::from_data(&[7, 3], b.iter().map(|&x| x as f32).collect()).unwrap();
        let got = ta.matmul(&tb).unwrap();
        for (g, e) in got.data().iter().zip(&expected) {
            assert!((*g as f64 - e).abs() < 1e-6, "{g} vs {e}");
        }
    }

    #[test]
    fn gemm_transposed_operands() {
        // a is 2x3, b is 3x2; pass each stored transposed.
        let a_t = [1.0f64, 4.0, 2.0, 5.0, 3.0, 6.0];
        let b_t = [7.0f64, 9.0, 11.0, 8.0, 10.0, 12.0];
        let mut c = [0.0f64; 4];
        f64::gemm(2, 3, 2, &a_t, true, &b_t, true, 0.0, &mut c);
        assert_eq!(c, [58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    fn map_zip_reduce() {
        let t = Tensor::from_data(&[2], vec![1.0f32, 2.0]).unwrap();
        assert_eq!(t.map(|x| x + 1.0).data(), &[2.0, 3.0]);
        let a = Tensor::from_data(&[1], vec![1.0f32]).unwrap();
        let b = Tensor::from_data(&[1], vec![2.0f32]).unwrap();
        assert_eq!(a.zip(&b, |x, y| x + y).unwrap().data(), &[3.0]);
        assert!(t.zip(&a, |x, y| x + y).is_err());
        let m = Tensor::from_data(&[2, 2], vec![1.0f32, 2.0, 3.0, 4.0]).unwrap();
        let s = m.reduce(0, 0.0, |acc, x| acc + x).unwrap();
        assert_eq!(s.shape(), &[2]);
        assert_eq!(s.data(), &[4.0, 6.0]);
        assert_eq!(m.reduce(1, 0.0, |acc, x| acc + x).unwrap().data(), &[3.0, 7.0]);
        assert!(matches!(m.reduce(2, 0.0, |a, _| a), Err(Error::AxisOutOfRange { .. })));
    }

    proptest! {
        #[test]
        fn row_major_offset_matches_nested_loops(dims in prop::collection::vec(1usize..5, 1..5)) {
            let t = Tensor::<f32>::zeros(&dims).unwrap();
            // Odometer enumeration in row-major order must visit offsets 0,1,2,...
            let mut index = vec![0usize; dims.len()];
            for expected in 0..t.len() {
                prop_assert_eq!(t.offset(&index).unwrap(), expected);
                for axis in (0..dims.len()).rev() {
                    index[axis] += 1;
                    if index[axis] < dims[axis] {
                        break;
                    }
                    index[axis] = 0;
                }
            }
        }

        #[test]
        fn matmul_is_associative(seed in any::<u64>(), m in 1usize..5, k in 1usize..5, l in 1usize..5, n in 1usize..5) {
            let mut rng = SeededRng::new(seed);
            let mut rand = |shape: &[usize]| {
                Tensor::<f32>::from_fn(shape, |_| rng.random_range(-1.0..1.0)).unwrap()
            };
            let (a, b, c) = (rand(&[m, k]), rand(&[k, l]), rand(&[l, n]));
            let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
            let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
            for (x, y) in left.data().iter().zip(right.data()) {
                prop_assert!((x - y).abs() < 1e-5);
            }
        }
    }
}
