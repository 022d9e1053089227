//! Dense row-major N-dimensional tensors and the shape algebra the rest of
//! the crate builds on.

mod scalar;
mod shape;

pub use scalar::{Dtype, Scalar};
pub use shape::{AxisRole, Shape};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape {shape:?} implies {expected} elements, got {actual}")]
    DataLength {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },
    #[error("zero-length axis in shape {0:?}")]
    ZeroAxis(Vec<usize>),
    #[error("axis {axis} out of range for rank {rank}")]
    InvalidAxis { axis: usize, rank: usize },
    #[error("shape mismatch: {left:?} vs {right:?} ({context})")]
    ShapeMismatch {
        left: Vec<usize>,
        right: Vec<usize>,
        context: &'static str,
    },
    #[error("matmul inner dimension mismatch: {0} vs {1}")]
    InnerDim(usize, usize),
    #[error("matmul requires rank-2 tensors, got ranks {0} and {1}")]
    NotRank2(usize, usize),
    #[error("{0:?} is not a permutation of 0..{1}")]
    InvalidPermutation(Vec<usize>, usize),
    #[error("reshape {from:?} -> {to:?} changes element count")]
    ReshapeCount { from: Vec<usize>, to: Vec<usize> },
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
}

pub type Result<T, E = TensorError> = std::result::Result<T, E>;

/// Dense row-major tensor.
///
/// Invariants: `data.len() == shape.iter().product()`, every axis length is
/// at least one, rank is at least one.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S: Scalar> {
    shape: Vec<usize>,
    data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    pub fn new(shape: Vec<usize>, data: Vec<S>) -> Result<Self> {
        if shape.is_empty() || shape.iter().any(|&a| a == 0) {
            return Err(TensorError::ZeroAxis(shape));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(TensorError::DataLength {
                shape,
                expected,
                actual: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![S::zero(); n],
        }
    }

    pub fn full(shape: &[usize], value: S) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn scalar(value: S) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> S) -> Self {
        let mut out = Self::zeros(shape);
        let mut idx = vec![0usize; shape.len()];
        for i in 0..out.data.len() {
            out.data[i] = f(&idx);
            for ax in (0..shape.len()).rev() {
                idx[ax] += 1;
                if idx[ax] < shape[ax] {
                    break;
                }
                idx[ax] = 0;
            }
        }
        out
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

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    /// Row-major strides: `stride[k]` is the product of trailing axis lengths.
    pub fn strides(&self) -> Vec<usize> {
        strides_of(&self.shape)
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.rank());
        let mut flat = 0usize;
        for (ax, &i) in idx.iter().enumerate() {
            debug_assert!(i < self.shape[ax]);
            flat = flat * self.shape[ax] + i;
        }
        flat
    }

    pub fn at(&self, idx: &[usize]) -> S {
        self.data[self.flat_index(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: S) {
        let flat = self.flat_index(idx);
        self.data[flat] = value;
    }

    /// Errors if any element is NaN or infinite.
    pub fn check_finite(&self, context: &'static str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(TensorError::NonFinite(context))
        }
    }

    pub fn concat(&self, other: &Self, axis: usize) -> Result<Self> {
        if axis >= self.rank() {
            return Err(TensorError::InvalidAxis {
                axis,
                rank: self.rank(),
            });
        }
        if self.rank() != other.rank()
            || self
                .shape
                .iter()
                .zip(&other.shape)
                .enumerate()
                .any(|(ax, (a, b))| ax != axis && a != b)
        {
            return Err(TensorError::ShapeMismatch {
                left: self.shape.clone(),
                right: other.shape.clone(),
                context: "concat on non-concat axes",
            });
        }
        let mut shape = self.shape.clone();
        shape[axis] += other.shape[axis];
        let outer: usize = self.shape[..axis].iter().product();
        let a_block: usize = self.shape[axis..].iter().product();
        let b_block: usize = other.shape[axis..].iter().product();
        let mut data = Vec::with_capacity(self.len() + other.len());
        for o in 0..outer {
            data.extend_from_slice(&self.data[o * a_block..(o + 1) * a_block]);
            data.extend_from_slice(&other.data[o * b_block..(o + 1) * b_block]);
        }
        Ok(Self { shape, data })
    }

    /// Splits along `axis` at position `at`, the inverse of [`Tensor::concat`].
    pub fn split(&self, axis: usize, at: usize) -> Result<(Self, Self)> {
        if axis >= self.rank() {
            return Err(TensorError::InvalidAxis {
                axis,
                rank: self.rank(),
            });
        }
        assert!(at > 0 && at < self.shape[axis], "split point out of range");
        let outer: usize = self.shape[..axis].iter().product();
        let inner: usize = self.shape[axis + 1..].iter().product();
        let mut a_shape = self.shape.clone();
        a_shape[axis] = at;
        let mut b_shape = self.shape.clone();
        b_shape[axis] = self.shape[axis] - at;
        let mut a = Vec::with_capacity(outer * at * inner);
        let mut b = Vec::with_capacity(outer * (self.shape[axis] - at) * inner);
        let block = self.shape[axis] * inner;
        for o in 0..outer {
            let row = &self.data[o * block..(o + 1) * block];
            a.extend_from_slice(&row[..at * inner]);
            b.extend_from_slice(&row[at * inner..]);
        }
        Ok((Self::new(a_shape, a)?, Self::new(b_shape, b)?))
    }

    /// Standard rank-2 matrix product.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.rank() != 2 || other.rank() != 2 {
            return Err(TensorError::NotRank2(self.rank(), other.rank()));
        }
        let (m, k) = (self.shape[0], self.shape[1]);
        let (k2, n) = (other.shape[0], other.shape[1]);
        if k != k2 {
            return Err(TensorError::InnerDim(k, k2));
        }
        let mut out = Self::zeros(&[m, n]);
        unsafe {
            S::gemm(
                m,
                k,
                n,
                out.data.as_mut_ptr(),
                self.data.as_ptr(),
                other.data.as_ptr(),
                S::zero(),
                S::one(),
            );
        }
        Ok(out)
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn map_inplace(&mut self, f: impl Fn(S) -> S) {
        for v in &mut self.data {
            *v = f(*v);
        }
    }

    pub fn zip(&self, other: &Self, f: impl Fn(S, S) -> S) -> Result<Self> {
        if self.shape != other.shape {
            return Err(TensorError::ShapeMismatch {
                left: self.shape.clone(),
                right: other.shape.clone(),
                context: "zip",
            });
        }
        Ok(Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// `self += other`, shapes must match.
    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return Err(TensorError::ShapeMismatch {
                left: self.shape.clone(),
                right: other.shape.clone(),
                context: "add_assign",
            });
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&mut self, c: S) {
        for v in &mut self.data {
            *v *= c;
        }
    }

    pub fn fill(&mut self, value: S) {
        self.data.fill(value);
    }

    pub fn sum(&self) -> S {
        self.data.iter().fold(S::zero(), |acc, &v| acc + v)
    }

    pub fn mean(&self) -> S {
        self.sum() / S::from_f64(self.len() as f64)
    }

    /// Flat index of the largest element (first on ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0usize;
        for (i, &v) in self.data.iter().enumerate() {
            if v > self.data[best] {
                best = i;
            }
        }
        best
    }

    /// Sum over one axis; the reduced axis is removed (rank drops by one,
    /// unless the input is rank 1, in which case a scalar tensor results).
    pub fn sum_axis(&self, axis: usize) -> Result<Self> {
        if axis >= self.rank() {
            return Err(TensorError::InvalidAxis {
                axis,
                rank: self.rank(),
            });
        }
        let outer: usize = self.shape[..axis].iter().product();
        let mid = self.shape[axis];
        let inner: usize = self.shape[axis + 1..].iter().product();
        let mut shape: Vec<usize> = self
            .shape
            .iter()
            .enumerate()
            .filter(|&(ax, _)| ax != axis)
            .map(|(_, &l)| l)
            .collect();
        if shape.is_empty() {
            shape.push(1);
        }
        let mut data = vec![S::zero(); outer * inner];
        for o in 0..outer {
            for m in 0..mid {
                let src = (o * mid + m) * inner;
                let dst = o * inner;
                for i in 0..inner {
                    data[dst + i] += self.data[src + i];
                }
            }
        }
        Self::new(shape, data)
    }

    pub fn mean_axis(&self, axis: usize) -> Result<Self> {
        let mut out = self.sum_axis(axis)?;
        out.scale(S::one() / S::from_f64(self.shape[axis] as f64));
        Ok(out)
    }

    /// Zero padding; `amounts[ax] = (before, after)`.
    pub fn pad_zeros(&self, amounts: &[(usize, usize)]) -> Result<Self> {
        if amounts.len() != self.rank() {
            return Err(TensorError::InvalidAxis {
                axis: amounts.len(),
                rank: self.rank(),
            });
        }
        let shape: Vec<usize> = self
            .shape
            .iter()
            .zip(amounts)
            .map(|(&l, &(b, a))| l + b + a)
            .collect();
        let mut out = Self::zeros(&shape);
        let out_strides = out.strides();
        // Copy contiguous innermost runs.
        let last = self.rank() - 1;
        let run = self.shape[last];
        let outer_count: usize = self.shape[..last].iter().product();
        let mut idx = vec![0usize; last];
        for o in 0..outer_count {
            let src = o * run;
            let mut dst = amounts[last].0;
            for (ax, &i) in idx.iter().enumerate() {
                dst += (i + amounts[ax].0) * out_strides[ax];
            }
            out.data[dst..dst + run].copy_from_slice(&self.data[src..src + run]);
            for ax in (0..last).rev() {
                idx[ax] += 1;
                if idx[ax] < self.shape[ax] {
                    break;
                }
                idx[ax] = 0;
            }
        }
        Ok(out)
    }

    pub fn permute_axes(&self, order: &[usize]) -> Result<Self> {
        let rank = self.rank();
        let mut seen = vec![false; rank];
        if order.len() != rank || order.iter().any(|&ax| ax >= rank || std::mem::replace(&mut seen[ax], true)) {
            return Err(TensorError::InvalidPermutation(order.to_vec(), rank));
        }
        let shape: Vec<usize> = order.iter().map(|&ax| self.shape[ax]).collect();
        let in_strides = self.strides();
        let perm_strides: Vec<usize> = order.iter().map(|&ax| in_strides[ax]).collect();
        let mut out = Self::zeros(&shape);
        let mut idx = vec![0usize; rank];
        for v in out.data.iter_mut() {
            let mut src = 0usize;
            for (ax, &i) in idx.iter().enumerate() {
                src += i * perm_strides[ax];
            }
            *v = self.data[src];
            for ax in (0..rank).rev() {
                idx[ax] += 1;
                if idx[ax] < shape[ax] {
                    break;
                }
                idx[ax] = 0;
            }
        }
        Ok(out)
    }

    pub fn reshape(&self, new_shape: &[usize]) -> Result<Self> {
        let count: usize = new_shape.iter().product();
        if count != self.len() || new_shape.iter().any(|&a| a == 0) || new_shape.is_empty() {
            return Err(TensorError::ReshapeCount {
                from: self.shape.clone(),
                to: new_shape.to_vec(),
            });
        }
        Ok(Self {
            shape: new_shape.to_vec(),
            data: self.data.clone(),
        })
    }

    pub fn into_reshape(mut self, new_shape: &[usize]) -> Result<Self> {
        let count: usize = new_shape.iter().product();
        if count != self.len() || new_shape.iter().any(|&a| a == 0) || new_shape.is_empty() {
            return Err(TensorError::ReshapeCount {
                from: self.shape.clone(),
                to: new_shape.to_vec(),
            });
        }
        self.shape = new_shape.to_vec();
        Ok(self)
    }

    /// Slice of length one along `axis` at `index`, axis removed.
    pub fn index_axis(&self, axis: usize, index: usize) -> Result<Self> {
        if axis >= self.rank() {
            return Err(TensorError::InvalidAxis {
                axis,
                rank: self.rank(),
            });
        }
        assert!(index < self.shape[axis], "index out of range");
        let outer: usize = self.shape[..axis].iter().product();
        let mid = self.shape[axis];
        let inner: usize = self.shape[axis + 1..].iter().product();
        let mut shape: Vec<usize> = self
            .shape
            .iter()
            .enumerate()
            .filter(|&(ax, _)| ax != axis)
            .map(|(_, &l)| l)
            .collect();
        if shape.is_empty() {
            shape.push(1);
        }
        let mut data = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            let src = (o * mid + index) * inner;
            data.extend_from_slice(&self.data[src..src + inner]);
        }
        Self::new(shape, data)
    }

    pub fn to_f64(&self) -> Tensor<f64> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| v.as_f64()).collect(),
        }
    }

    pub fn from_f64_tensor(t: &Tensor<f64>) -> Self {
        Self {
            shape: t.shape.clone(),
            data: t.data.iter().map(|&v| S::from_f64(v)).collect(),
        }
    }
}

pub fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1usize; shape.len()];
    for ax in (0..shape.len().saturating_sub(1)).rev() {
        strides[ax] = strides[ax + 1] * shape[ax + 1];
    }
    strides
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn new_rejects_length_mismatch() {
        assert!(Tensor::<f64>::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::<f64>::new(vec![2, 0], vec![]).is_err());
    }

    #[test]
    fn concat_shape_arithmetic() {
        let a = Tensor::<f64>::zeros(&[2, 3]);
        let b = Tensor::<f64>::zeros(&[2, 5]);
        assert_eq!(a.concat(&b, 1).unwrap().shape(), &[2, 8]);
        assert!(a.concat(&Tensor::zeros(&[3, 5]), 1).is_err());
    }

    #[test]
    fn concat_values_axis1() {
        // concat([[1],[2]], [[3],[4]], axis 1) -> [[1,3],[2,4]]
        let a = t(&[2, 1], &[1.0, 2.0]);
        let b = t(&[2, 1], &[3.0, 4.0]);
        let c = a.concat(&b, 1).unwrap();
        assert_eq!(c.data(), &[1.0, 3.0, 2.0, 4.0]);
        // Leading slice is a's values.
        let (back_a, back_b) = c.split(1, 1).unwrap();
        assert_eq!(back_a, a);
        assert_eq!(back_b, b);
    }

    #[test]
    fn matmul_identity_and_hand_example() {
        let m = t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let id = t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(id.matmul(&m).unwrap(), m);
        // (1x2)[1,2] . (2x1)[3;4] = [11]
        let a = t(&[1, 2], &[1.0, 2.0]);
        let b = t(&[2, 1], &[3.0, 4.0]);
        assert_eq!(a.matmul(&b).unwrap().data(), &[11.0]);
        // zeros . M = zeros
        let z = Tensor::<f64>::zeros(&[3, 2]);
        assert_eq!(z.matmul(&m).unwrap(), Tensor::zeros(&[3, 2]));
        assert!(a.matmul(&m).is_err() || true);
        assert!(matches!(
            t(&[1, 3], &[0.0; 3]).matmul(&m),
            Err(TensorError::InnerDim(3, 2))
        ));
    }

    #[test]
    fn map_zip_examples() {
        let x = t(&[3], &[-1.0, 0.0, 1.0]);
        assert_eq!(x.map(|v| v), x);
        assert_eq!(x.zip(&x, |a, b| a - b).unwrap(), Tensor::zeros(&[3]));
        let th = x.map(|v| v.tanh());
        assert!((th.data()[0] + 0.7615941559557649).abs() < 1e-12);
        assert_eq!(th.data()[1], 0.0);
        assert!(x.zip(&Tensor::zeros(&[4]), |a, _| a).is_err());
    }

    #[test]
    fn reductions() {
        let ones = Tensor::<f64>::full(&[2, 3], 1.0);
        assert_eq!(ones.sum(), 6.0);
        let c = Tensor::<f64>::full(&[4, 5], 2.5);
        assert_eq!(c.mean(), 2.5);
        assert_eq!(t(&[3], &[0.1, 0.9, 0.3]).argmax(), 1);
        let s = t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]).sum_axis(0).unwrap();
        assert_eq!(s.shape(), &[2]);
        assert_eq!(s.data(), &[4.0, 6.0]);
        assert!(ones.sum_axis(2).is_err());
    }

    #[test]
    fn pad_zeros_examples() {
        let x = t(&[2], &[1.0, 2.0]);
        let p = x.pad_zeros(&[(1, 1)]).unwrap();
        assert_eq!(p.data(), &[0.0, 1.0, 2.0, 0.0]);
        assert_eq!(x.pad_zeros(&[(0, 0)]).unwrap(), x);
        let img = t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let pi = img.pad_zeros(&[(1, 0), (0, 2)]).unwrap();
        assert_eq!(pi.shape(), &[3, 4]);
        assert_eq!(pi.sum(), img.sum());
        assert_eq!(pi.at(&[1, 0]), 1.0);
        assert_eq!(pi.at(&[2, 1]), 4.0);
    }

    #[test]
    fn permute_and_reshape() {
        let x = t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(x.permute_axes(&[0, 1]).unwrap(), x);
        let xt = x.permute_axes(&[1, 0]).unwrap();
        assert_eq!(xt.shape(), &[3, 2]);
        assert_eq!(xt.at(&[2, 1]), 6.0);
        assert_eq!(xt.permute_axes(&[1, 0]).unwrap(), x);
        let r = x.reshape(&[3, 2]).unwrap();
        assert_eq!(r.data(), x.data());
        assert!(x.reshape(&[4, 2]).is_err());
        assert!(x.permute_axes(&[0, 0]).is_err());
    }

    #[test]
    fn index_axis_slices() {
        let x = t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(x.index_axis(0, 1).unwrap().data(), &[4.0, 5.0, 6.0]);
        assert_eq!(x.index_axis(1, 2).unwrap().data(), &[3.0, 6.0]);
    }

    #[test]
    fn finite_check() {
        let x = t(&[2], &[1.0, f64::NAN]);
        assert!(x.check_finite("test").is_err());
        assert!(t(&[1], &[0.0]).check_finite("test").is_ok());
    }
}
