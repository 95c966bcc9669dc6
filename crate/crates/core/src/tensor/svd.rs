use ndarray::{s, Array2, ArrayView2};
use ndarray_linalg::{JobSvd, SVDDC, SVD};
use num_traits::{Float, One, Zero};

use super::DenseTensor;
use crate::error::{dim_err, param_err, Error, Result};
use crate::scalar::Scalar;

/// Outcome of a truncated singular value decomposition `M ≈ U diag(s) V`.
#[derive(Debug, Clone)]
pub struct SvdResult<S: Scalar> {
    /// `rows x k`, orthonormal columns.
    pub left_isometry: DenseTensor<S>,
    /// Kept singular values, descending.
    pub singular_values: Vec<S::RealField>,
    /// `k x cols`, orthonormal rows.
    pub right_isometry: DenseTensor<S>,
    /// Dropped squared weight over total squared weight.
    pub discarded_weight: S::RealField,
}

impl<S: Scalar> SvdResult<S> {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    /// `U diag(s) V` as a dense matrix.
    pub fn reconstruct(&self) -> DenseTensor<S> {
        let mut us = self.left_isometry.clone();
        let k = self.rank();
        for (i, v) in us.data_mut().iter_mut().enumerate() {
            *v = v.mul_real(self.singular_values[i % k]);
        }
        us.matmul(&self.right_isometry).expect("consistent factor shapes")
    }
}

/// Truncated SVD of a rank-2 tensor.
///
/// Trailing singular values are dropped while the squared tail over the
/// total squared sum stays `<= cutoff`; the result is then capped at
/// `max_rank`. Ties at the cap are cut by position, never re-sorted. An all
/// zero input returns a rank-1 factorization with singular value 0.
pub fn truncated_svd<S: Scalar>(
    matrix: &DenseTensor<S>,
    max_rank: usize,
    cutoff: S::RealField,
) -> Result<SvdResult<S>> {
    if matrix.rank() != 2 {
        return Err(dim_err(format!(
            "truncated_svd needs a rank-2 tensor, got shape {:?}",
            matrix.shape()
        )));
    }
    truncated_svd_matrix(matrix.as_matrix(1), max_rank, cutoff)
}

/// Same as [`truncated_svd`] on an `ndarray` matrix view.
pub fn truncated_svd_matrix<S: Scalar>(
    mat: ArrayView2<'_, S>,
    max_rank: usize,
    cutoff: S::RealField,
) -> Result<SvdResult<S>> {
    if max_rank == 0 {
        return Err(param_err("max_rank must be at least 1"));
    }
    if cutoff < S::RealField::zero() {
        return Err(param_err("cutoff must be non-negative"));
    }
    let (rows, cols) = mat.dim();
    let (u, sv, vt) = full_svd(mat)?;

    let total = sv.iter().fold(S::RealField::zero(), |a, &x| a + x * x);
    if total.is_zero() {
        let left = u.slice(s![.., 0..1]).to_owned();
        let right = vt.slice(s![0..1, ..]).to_owned();
        return Ok(SvdResult {
            left_isometry: DenseTensor::from_matrix(left, &[rows, 1])?,
            singular_values: vec![S::RealField::zero()],
            right_isometry: DenseTensor::from_matrix(right, &[1, cols])?,
            discarded_weight: S::RealField::zero(),
        });
    }

    // tail[k] = sum_{i >= k} s_i^2
    let n = sv.len();
    let mut tail = vec![S::RealField::zero(); n + 1];
    for i in (0..n).rev() {
        tail[i] = tail[i + 1] + sv[i] * sv[i];
    }
    let by_cutoff = (1..=n).find(|&k| tail[k] / total <= cutoff).unwrap_or(n);
    let keep = by_cutoff.min(max_rank).max(1);

    let left = u.slice(s![.., 0..keep]).to_owned();
    let right = vt.slice(s![0..keep, ..]).to_owned();
    Ok(SvdResult {
        left_isometry: DenseTensor::from_matrix(left, &[rows, keep])?,
        singular_values: sv[..keep].to_vec(),
        right_isometry: DenseTensor::from_matrix(right, &[keep, cols])?,
        discarded_weight: (tail[keep] / total).min(S::RealField::one()),
    })
}

type FullSvd<S> = (Array2<S>, Vec<<S as Scalar>::RealField>, Array2<S>);

/// Thin SVD via divide-and-conquer, falling back to the QR-iteration driver.
fn full_svd<S: Scalar>(mat: ArrayView2<'_, S>) -> Result<FullSvd<S>> {
    let (rows, cols) = mat.dim();
    if !mat.iter().all(|v| v.is_finite_value()) {
        return Err(Error::Numerical {
            rows,
            cols,
            message: "non-finite input to SVD".into(),
        });
    }
    let numerical = |e: ndarray_linalg::error::LinalgError| Error::Numerical {
        rows,
        cols,
        message: e.to_string(),
    };
    let (u, sv, vt) = match mat.svddc(JobSvd::Some) {
        Ok((Some(u), sv, Some(vt))) => (u, sv, vt),
        _ => {
            let (u, sv, vt) = mat.svd(true, true).map_err(numerical)?;
            let k = rows.min(cols);
            let u = u.expect("requested U");
            let vt = vt.expect("requested V^T");
            (
                u.slice(s![.., 0..k]).to_owned(),
                sv,
                vt.slice(s![0..k, ..]).to_owned(),
            )
        }
    };
    Ok((u, sv.to_vec(), vt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::contract;
    use num_complex::Complex64 as c64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> DenseTensor<c64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DenseTensor::from_fn(&[rows, cols], |_| {
            c64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        })
    }

    fn isometry_error(t: &DenseTensor<c64>, left: bool) -> f64 {
        let a = t.adjoint().unwrap();
        let g = if left { a.matmul(t) } else { t.matmul(&a) }.unwrap();
        g.max_abs_diff(&DenseTensor::identity(g.shape()[0]))
    }

    #[test]
    fn identity_has_unit_spectrum() {
        let r = truncated_svd(&DenseTensor::<c64>::identity(3), 3, 0.0).unwrap();
        assert_eq!(r.rank(), 3);
        for s in &r.singular_values {
            assert!((s - 1.0).abs() < 1e-14);
        }
        assert_eq!(r.discarded_weight, 0.0);
    }

    #[test]
    fn outer_product_has_rank_one() {
        let u = DenseTensor::from_fn(&[5, 1], |i| c64::new(1.0 + i[0] as f64, 0.5));
        let v = DenseTensor::from_fn(&[1, 5], |i| c64::new(0.3, -(i[1] as f64)));
        let m = contract(&u, &v, &[(1, 0)]).unwrap();
        let r = truncated_svd(&m, 5, 1e-12).unwrap();
        assert_eq!(r.rank(), 1);
        assert!(r.reconstruct().max_abs_diff(&m) < 1e-12);
    }

    #[test]
    fn reconstruction_error_equals_dropped_tail() {
        let m = random(8, 8, 42);
        // reference: untruncated spectrum
        let full = truncated_svd(&m, 8, 0.0).unwrap();
        assert_eq!(full.rank(), 8);
        let tail: f64 = full.singular_values[4..].iter().map(|s| s * s).sum();
        let cut = truncated_svd(&m, 4, 0.0).unwrap();
        let err = cut.reconstruct().sub(&m).unwrap().norm();
        assert!((err - tail.sqrt()).abs() < 1e-10);
        let total: f64 = full.singular_values.iter().map(|s| s * s).sum();
        assert!((cut.discarded_weight - tail / total).abs() < 1e-12);
    }

    #[test]
    fn factors_are_isometric_and_sorted() {
        let m = random(6, 9, 5);
        let r = truncated_svd(&m, 4, 0.0).unwrap();
        assert!(isometry_error(&r.left_isometry, true) < 1e-12);
        assert!(isometry_error(&r.right_isometry, false) < 1e-12);
        assert!(r.singular_values.windows(2).all(|w| w[0] >= w[1]));
        assert!(r.discarded_weight >= 0.0 && r.discarded_weight <= 1.0);
    }

    #[test]
    fn cutoff_drops_small_tail_before_cap() {
        // diag(1, 1e-3, 1e-6): tail after 2 values = 1e-12 / total
        let m = DenseTensor::from_fn(&[3, 3], |i| {
            if i[0] == i[1] {
                c64::new([1.0, 1e-3, 1e-6][i[0]], 0.0)
            } else {
                c64::new(0.0, 0.0)
            }
        });
        assert_eq!(truncated_svd(&m, 3, 1e-10).unwrap().rank(), 2);
        assert_eq!(truncated_svd(&m, 3, 1e-5).unwrap().rank(), 1);
        assert_eq!(truncated_svd(&m, 3, 0.0).unwrap().rank(), 3);
        assert_eq!(truncated_svd(&m, 1, 0.0).unwrap().rank(), 1);
    }

    #[test]
    fn zero_matrix_gives_rank_one_zero() {
        let r = truncated_svd(&DenseTensor::<c64>::zeros(&[3, 4]), 3, 0.0).unwrap();
        assert_eq!(r.rank(), 1);
        assert_eq!(r.singular_values, vec![0.0]);
        assert_eq!(r.left_isometry.shape(), &[3, 1]);
        assert_eq!(r.right_isometry.shape(), &[1, 4]);
    }

    #[test]
    fn full_rank_reconstructs_input() {
        let m = random(5, 7, 9);
        let r = truncated_svd(&m, 5, 0.0).unwrap();
        assert!(r.reconstruct().sub(&m).unwrap().norm() < 1e-10);
    }

    #[test]
    fn rejects_bad_arguments() {
        let m = random(2, 2, 1);
        assert!(truncated_svd(&m, 0, 0.0).is_err());
        assert!(truncated_svd(&DenseTensor::<c64>::zeros(&[2, 2, 2]), 2, 0.0).is_err());
        let mut bad = m.clone();
        bad.data_mut()[0] = c64::new(f64::NAN, 0.0);
        assert!(matches!(
            truncated_svd(&bad, 2, 0.0),
            Err(Error::Numerical { rows: 2, cols: 2, .. })
        ));
    }
}
