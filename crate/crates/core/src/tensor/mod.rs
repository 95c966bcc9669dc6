//! Dense multi-index arrays and the kernels the tensor-train engines are
//! built from.
//!
//! Storage is row-major: the last index runs fastest. Every kernel in this
//! module keeps that convention, so a reshape never moves data.

mod gauge;
mod io;
mod svd;

pub use gauge::{gauge, is_left_isometric, is_right_isometric, qr_positive};
pub use io::{read_tensor, write_tensor, TENSOR_MAGIC, TENSOR_VERSION};
pub use svd::{truncated_svd, truncated_svd_matrix, SvdResult};

use ndarray::{Array2, ArrayView2};
use num_traits::{Float, Zero};

use crate::error::{dim_err, Result};
use crate::scalar::Scalar;

/// Dense tensor with row-major storage.
///
/// A rank-0 tensor (empty shape) holds exactly one value.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor<S> {
    shape: Vec<usize>,
    data: Vec<S>,
}

impl<S: Scalar> DenseTensor<S> {
    pub fn new(shape: Vec<usize>, data: Vec<S>) -> Result<Self> {
        if shape.iter().any(|&e| e == 0) {
            return Err(dim_err(format!("zero extent in shape {shape:?}")));
        }
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(dim_err(format!(
                "shape {shape:?} needs {len} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![S::zero(); len],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> S) -> Self {
        let mut t = Self::zeros(shape);
        let mut idx = vec![0usize; shape.len()];
        for v in t.data.iter_mut() {
            *v = f(&idx);
            increment(&mut idx, shape);
        }
        t
    }

    pub fn scalar(value: S) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(&[n, n], |i| if i[0] == i[1] { S::one() } else { S::zero() })
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

    fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        idx.iter()
            .zip(&self.shape)
            .fold(0, |acc, (&i, &e)| acc * e + i)
    }

    pub fn get(&self, idx: &[usize]) -> S {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: S) {
        let o = self.offset(idx);
        self.data[o] = value;
    }

    /// Value of a rank-0 tensor (or the first element otherwise).
    pub fn to_scalar(&self) -> S {
        self.data[0]
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != self.data.len() || shape.iter().any(|&e| e == 0) {
            return Err(dim_err(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// Axis permutation: axis `k` of the result is axis `perm[k]` of `self`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        let r = self.rank();
        let mut seen = vec![false; r];
        if perm.len() != r || perm.iter().any(|&p| p >= r || std::mem::replace(&mut seen[p], true)) {
            return Err(dim_err(format!("invalid permutation {perm:?} for rank {r}")));
        }
        if perm.iter().enumerate().all(|(i, &p)| i == p) {
            return Ok(self.clone());
        }
        let src_strides = strides(&self.shape);
        let new_shape: Vec<usize> = perm.iter().map(|&p| self.shape[p]).collect();
        let step: Vec<usize> = perm.iter().map(|&p| src_strides[p]).collect();
        let mut data = Vec::with_capacity(self.data.len());
        let mut idx = vec![0usize; r];
        let mut off = 0usize;
        // odometer over the destination, tracking the source offset incrementally
        for _ in 0..self.data.len() {
            data.push(self.data[off]);
            for ax in (0..r).rev() {
                idx[ax] += 1;
                off += step[ax];
                if idx[ax] < new_shape[ax] {
                    break;
                }
                off -= step[ax] * new_shape[ax];
                idx[ax] = 0;
            }
        }
        Ok(Self {
            shape: new_shape,
            data,
        })
    }

    pub fn conj(&self) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| v.conj()).collect(),
        }
    }

    pub fn scale(&mut self, factor: S) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    pub fn scaled(&self, factor: S) -> Self {
        let mut t = self.clone();
        t.scale(factor);
        t
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.shape != other.shape {
            return Err(dim_err(format!(
                "cannot add {:?} and {:?}",
                self.shape, other.shape
            )));
        }
        Ok(Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a + b)
                .collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scaled(-S::one()))
    }

    /// Frobenius norm.
    pub fn norm(&self) -> S::RealField {
        self.norm_sqr().sqrt()
    }

    pub fn norm_sqr(&self) -> S::RealField {
        self.data
            .iter()
            .fold(S::RealField::zero(), |acc, v| acc + v.square())
    }

    pub fn max_abs_diff(&self, other: &Self) -> S::RealField {
        self.data
            .iter()
            .zip(&other.data)
            .fold(S::RealField::zero(), |acc, (&a, &b)| acc.max((a - b).abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite_value())
    }

    /// Matrix view fusing the first `row_axes` axes into rows.
    pub fn as_matrix(&self, row_axes: usize) -> ArrayView2<'_, S> {
        let rows: usize = self.shape[..row_axes].iter().product();
        let cols: usize = self.shape[row_axes..].iter().product();
        ArrayView2::from_shape((rows, cols), &self.data).expect("row-major storage")
    }

    pub fn from_matrix(mat: Array2<S>, shape: &[usize]) -> Result<Self> {
        let data = matrix_into_vec(mat);
        Self::new(shape.to_vec(), data)
    }

    /// Conjugate transpose of a rank-2 tensor.
    pub fn adjoint(&self) -> Result<Self> {
        if self.rank() != 2 {
            return Err(dim_err("adjoint needs a rank-2 tensor"));
        }
        Ok(self.permute(&[1, 0])?.conj())
    }

    /// Matrix product of two rank-2 tensors.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        contract(self, other, &[(1, 0)])
    }
}

/// Contract `a` and `b` over the given `(axis_of_a, axis_of_b)` pairs.
///
/// Result axes are the unpaired axes of `a` in order, followed by the
/// unpaired axes of `b` in order.
pub fn contract<S: Scalar>(
    a: &DenseTensor<S>,
    b: &DenseTensor<S>,
    pairs: &[(usize, usize)],
) -> Result<DenseTensor<S>> {
    for &(ia, ib) in pairs {
        if ia >= a.rank() || ib >= b.rank() {
            return Err(dim_err(format!(
                "pair ({ia},{ib}) out of range for ranks {} and {}",
                a.rank(),
                b.rank()
            )));
        }
        if a.shape[ia] != b.shape[ib] {
            return Err(dim_err(format!(
                "paired extents differ: a[{ia}] = {} vs b[{ib}] = {}",
                a.shape[ia], b.shape[ib]
            )));
        }
    }
    let pa: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    let pb: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    if has_duplicates(&pa) || has_duplicates(&pb) {
        return Err(dim_err("an axis appears in more than one pair"));
    }
    let free_a: Vec<usize> = (0..a.rank()).filter(|i| !pa.contains(i)).collect();
    let free_b: Vec<usize> = (0..b.rank()).filter(|i| !pb.contains(i)).collect();

    let perm_a: Vec<usize> = free_a.iter().chain(&pa).copied().collect();
    let perm_b: Vec<usize> = pb.iter().chain(&free_b).copied().collect();
    let at = a.permute(&perm_a)?;
    let bt = b.permute(&perm_b)?;

    let m: usize = free_a.iter().map(|&i| a.shape[i]).product();
    let k: usize = pa.iter().map(|&i| a.shape[i]).product();
    let n: usize = free_b.iter().map(|&i| b.shape[i]).product();

    let am = ArrayView2::from_shape((m, k), &at.data).expect("shape");
    let bm = ArrayView2::from_shape((k, n), &bt.data).expect("shape");
    let cm = am.dot(&bm);

    let shape: Vec<usize> = free_a
        .iter()
        .map(|&i| a.shape[i])
        .chain(free_b.iter().map(|&i| b.shape[i]))
        .collect();
    Ok(DenseTensor {
        shape,
        data: matrix_into_vec(cm),
    })
}

pub(crate) fn matrix_into_vec<S: Clone>(mat: Array2<S>) -> Vec<S> {
    if mat.is_standard_layout() {
        let (v, off) = mat.into_raw_vec_and_offset();
        if off.unwrap_or(0) == 0 {
            return v;
        }
        unreachable!("owned standard-layout array with non-zero offset");
    }
    mat.iter().cloned().collect()
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

fn increment(idx: &mut [usize], shape: &[usize]) {
    for ax in (0..shape.len()).rev() {
        idx[ax] += 1;
        if idx[ax] < shape[ax] {
            return;
        }
        idx[ax] = 0;
    }
}

fn has_duplicates(v: &[usize]) -> bool {
    v.iter().enumerate().any(|(i, x)| v[..i].contains(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64 as c64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> DenseTensor<c64> {
        DenseTensor::from_fn(shape, |_| c64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
    }

    #[test]
    fn identity_composition() {
        let i2 = DenseTensor::<c64>::identity(2);
        let r = contract(&i2, &i2, &[(1, 0)]).unwrap();
        assert_eq!(r, i2);
    }

    #[test]
    fn inner_product_gives_rank_zero() {
        let v = DenseTensor::new(vec![3], vec![1.0f64, 2.0, 3.0]).unwrap();
        let s = contract(&v, &v, &[(0, 0)]).unwrap();
        assert_eq!(s.rank(), 0);
        assert_eq!(s.to_scalar(), 14.0);
    }

    #[test]
    fn matches_triple_loop_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random(&[4, 3], &mut rng);
        let b = random(&[3, 5], &mut rng);
        let c = contract(&a, &b, &[(1, 0)]).unwrap();
        assert_eq!(c.shape(), &[4, 5]);
        for i in 0..4 {
            for j in 0..5 {
                let mut acc = c64::new(0.0, 0.0);
                for k in 0..3 {
                    acc += a.get(&[i, k]) * b.get(&[k, j]);
                }
                assert!((acc - c.get(&[i, j])).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn free_axes_keep_their_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random(&[2, 3, 4], &mut rng);
        let b = random(&[4, 5, 3], &mut rng);
        let c = contract(&a, &b, &[(1, 2), (2, 0)]).unwrap();
        assert_eq!(c.shape(), &[2, 5]);
        for i in 0..2 {
            for j in 0..5 {
                let mut acc = c64::new(0.0, 0.0);
                for p in 0..3 {
                    for q in 0..4 {
                        acc += a.get(&[i, p, q]) * b.get(&[q, j, p]);
                    }
                }
                assert!((acc - c.get(&[i, j])).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn extent_mismatch_is_a_dimension_error() {
        let a = DenseTensor::<f64>::zeros(&[2, 3]);
        let b = DenseTensor::<f64>::zeros(&[2, 3]);
        assert!(matches!(
            contract(&a, &b, &[(1, 0)]),
            Err(crate::Error::Dimension(_))
        ));
    }

    #[test]
    fn permute_moves_values() {
        let t = DenseTensor::from_fn(&[2, 3, 4], |i| (100 * i[0] + 10 * i[1] + i[2]) as f64);
        let p = t.permute(&[2, 0, 1]).unwrap();
        assert_eq!(p.shape(), &[4, 2, 3]);
        for i in 0..2 {
            for j in 0..3 {
                for k in 0..4 {
                    assert_eq!(p.get(&[k, i, j]), t.get(&[i, j, k]));
                }
            }
        }
        assert!(t.permute(&[0, 0, 1]).is_err());
    }

    #[test]
    fn works_for_single_precision() {
        let a = DenseTensor::<f32>::identity(3);
        let b = DenseTensor::from_fn(&[3, 2], |i| (i[0] + i[1]) as f32);
        assert_eq!(contract(&a, &b, &[(1, 0)]).unwrap(), b);
    }

    #[test]
    fn bilinear_in_scalar_factor() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let a = random(&[3, 4, 2], &mut rng);
            let b = random(&[2, 4, 5], &mut rng);
            let alpha = c64::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let lhs = contract(&a.scaled(alpha), &b, &[(1, 1), (2, 0)]).unwrap();
            let rhs = contract(&a, &b, &[(1, 1), (2, 0)]).unwrap().scaled(alpha);
            assert!(lhs.max_abs_diff(&rhs) < 1e-12);
        }
    }
}
