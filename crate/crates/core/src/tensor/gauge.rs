use ndarray::{Array2, ArrayView2};
use ndarray_linalg::QR;
use num_traits::{ToPrimitive, Zero};

use super::{contract, DenseTensor};
use crate::error::{dim_err, param_err, Error, Result};
use crate::scalar::Scalar;

/// Thin QR with the diagonal of `R` made real and non-negative.
///
/// Fixing the phase makes the factorization unique for full-rank input, so
/// an already isometric matrix comes back unchanged.
pub fn qr_positive<S: Scalar>(mat: ArrayView2<'_, S>) -> Result<(Array2<S>, Array2<S>)> {
    let (rows, cols) = mat.dim();
    let (mut q, mut r) = mat.qr().map_err(|e| Error::Numerical {
        rows,
        cols,
        message: e.to_string(),
    })?;
    let k = r.nrows();
    for i in 0..k {
        let d = r[(i, i)];
        let a = d.abs();
        if a > S::RealField::zero() {
            let phase = d.div_real(a);
            let inv = phase.conj();
            r.row_mut(i).iter_mut().for_each(|v| *v *= inv);
            q.column_mut(i).iter_mut().for_each(|v| *v *= phase);
        }
    }
    Ok((q, r))
}

fn bond_dims<S: Scalar>(t: &DenseTensor<S>) -> Result<(usize, usize, usize)> {
    if t.rank() < 2 {
        return Err(dim_err("train tensors need a left and a right bond index"));
    }
    let s = t.shape();
    let left = s[0];
    let right = s[s.len() - 1];
    Ok((left, t.len() / (left * right), right))
}

/// Bring a tensor train into mixed-canonical form around `center` (0-based).
///
/// Each tensor carries its left bond first and its right bond last; any
/// axes in between are treated as one fused local index. Tensors before
/// `center` come out left-isometric, those after it right-isometric, and
/// the represented object is unchanged.
pub fn gauge<S: Scalar>(train: &[DenseTensor<S>], center: usize) -> Result<Vec<DenseTensor<S>>> {
    if center >= train.len() {
        return Err(param_err(format!(
            "gauge center {center} outside train of length {}",
            train.len()
        )));
    }
    for (j, w) in train.windows(2).enumerate() {
        let (_, _, r) = bond_dims(&w[0])?;
        let (l, _, _) = bond_dims(&w[1])?;
        if r != l {
            return Err(dim_err(format!("bond {j}-{}: {r} vs {l}", j + 1)));
        }
    }
    let mut out = train.to_vec();

    for j in 0..center {
        let (left, local, right) = bond_dims(&out[j])?;
        let (q, r) = qr_positive(out[j].as_matrix(out[j].rank() - 1))?;
        let k = q.ncols();
        let mut shape = out[j].shape().to_vec();
        *shape.last_mut().unwrap() = k;
        debug_assert_eq!(q.nrows(), left * local);
        out[j] = DenseTensor::from_matrix(q, &shape)?;
        let r = DenseTensor::from_matrix(r, &[k, right])?;
        out[j + 1] = contract(&r, &out[j + 1], &[(1, 0)])?;
    }

    for j in (center + 1..out.len()).rev() {
        let (left, _, _) = bond_dims(&out[j])?;
        // M = R^† Q^† from the QR of M^†
        let adj = out[j].as_matrix(1).t().mapv(|v| v.conj());
        let (q, r) = qr_positive(adj.view())?;
        let k = q.ncols();
        let qd = q.t().mapv(|v| v.conj());
        let mut shape = out[j].shape().to_vec();
        shape[0] = k;
        out[j] = DenseTensor::from_matrix(qd.as_standard_layout().into_owned(), &shape)?;
        let rd = r.t().mapv(|v| v.conj());
        let rd = DenseTensor::from_matrix(rd.as_standard_layout().into_owned(), &[left, k])?;
        let prev = &out[j - 1];
        let last = prev.rank() - 1;
        out[j - 1] = contract(prev, &rd, &[(last, 0)])?;
    }
    Ok(out)
}

/// `sum_{left, local} conj(A) A == 1` over the right bond, within `tol`.
pub fn is_left_isometric<S: Scalar>(t: &DenseTensor<S>, tol: f64) -> bool {
    let m = t.as_matrix(t.rank() - 1);
    let g = m.t().mapv(|v| v.conj()).dot(&m);
    deviates_from_identity(&g) <= tol
}

/// `sum_{local, right} A conj(A) == 1` over the left bond, within `tol`.
pub fn is_right_isometric<S: Scalar>(t: &DenseTensor<S>, tol: f64) -> bool {
    let m = t.as_matrix(1);
    let g = m.dot(&m.t().mapv(|v| v.conj()));
    deviates_from_identity(&g) <= tol
}

fn deviates_from_identity<S: Scalar>(g: &Array2<S>) -> f64 {
    g.indexed_iter()
        .map(|((i, j), &v)| {
            let target = if i == j { S::one() } else { S::zero() };
            (v - target).abs().to_f64().unwrap_or(f64::INFINITY)
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64 as c64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_train(dims: &[usize], phys: usize, seed: u64) -> Vec<DenseTensor<c64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        dims.windows(2)
            .map(|w| {
                DenseTensor::from_fn(&[w[0], phys, w[1]], |_| {
                    c64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
                })
            })
            .collect()
    }

    // full contraction oracle: fold the train left to right
    fn full(train: &[DenseTensor<c64>]) -> DenseTensor<c64> {
        let mut acc = train[0].clone();
        for t in &train[1..] {
            let last = acc.rank() - 1;
            acc = contract(&acc, t, &[(last, 0)]).unwrap();
        }
        acc
    }

    #[test]
    fn random_train_is_preserved_and_isometric() {
        let train = random_train(&[1, 3, 4, 3, 1], 2, 17);
        let before = full(&train);
        let g = gauge(&train, 2).unwrap();
        let after = full(&g);
        assert!(after.sub(&before).unwrap().norm() < 1e-10);
        assert!(is_left_isometric(&g[0], 1e-12));
        assert!(is_left_isometric(&g[1], 1e-12));
        assert!(is_right_isometric(&g[3], 1e-12));
        // norm read off at the center
        assert!((g[2].norm() - before.norm()).abs() < 1e-10);
    }

    #[test]
    fn regauging_is_idempotent() {
        let train = random_train(&[1, 2, 4, 2, 1], 3, 23);
        let once = gauge(&train, 1).unwrap();
        let twice = gauge(&once, 1).unwrap();
        for (a, b) in once.iter().zip(&twice) {
            assert_eq!(a.shape(), b.shape());
            assert!(a.max_abs_diff(b) < 1e-12);
        }
    }

    #[test]
    fn product_state_stays_product() {
        let site = DenseTensor::new(
            vec![1, 3, 1],
            vec![c64::new(0.0, 0.0), c64::new(1.0, 0.0), c64::new(0.0, 0.0)],
        )
        .unwrap();
        let train = vec![site.clone(), site.clone(), site.clone()];
        for c in 0..3 {
            let g = gauge(&train, c).unwrap();
            for t in &g {
                assert_eq!(t.shape(), &[1, 3, 1]);
                assert!((t.get(&[0, 1, 0]).norm() - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn handles_extra_local_axes() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut train = Vec::new();
        for (l, r) in [(1, 3), (3, 2), (2, 1)] {
            train.push(DenseTensor::from_fn(&[l, 2, 2, r], |_| {
                c64::new(rng.gen_range(-1.0..1.0), 0.0)
            }));
        }
        let before = full(&train);
        let g = gauge(&train, 0).unwrap();
        assert!(full(&g).sub(&before).unwrap().norm() < 1e-10);
        assert!(is_right_isometric(&g[1], 1e-12));
        assert!(is_right_isometric(&g[2], 1e-12));
    }

    #[test]
    fn bond_mismatch_is_rejected() {
        let a = DenseTensor::<c64>::zeros(&[1, 2, 3]);
        let b = DenseTensor::<c64>::zeros(&[2, 2, 1]);
        assert!(matches!(gauge(&[a, b], 0), Err(Error::Dimension(_))));
    }
}
