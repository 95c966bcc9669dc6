//! Small dense helpers shared by the model builders and the oracles.

use ndarray::{Array2, ShapeBuilder};
use ndarray_linalg::{Eigh, UPLO};

use crate::error::{dim_err, Error, Result};
use crate::{c64, Tensor};

/// Eigendecomposition `h = V diag(e) V^†` of a Hermitian matrix, ascending `e`.
pub fn eigh(h: &Array2<c64>) -> Result<(Vec<f64>, Array2<c64>)> {
    let (n, m) = h.dim();
    if n != m {
        return Err(dim_err(format!("eigh needs a square matrix, got {n}x{m}")));
    }
    // row-major input would be decomposed as its conjugate
    let mut f = Array2::zeros((n, m).f());
    f.assign(h);
    let (e, v) = f.eigh(UPLO::Lower).map_err(|err| Error::Numerical {
        rows: n,
        cols: m,
        message: err.to_string(),
    })?;
    Ok((e.to_vec(), v))
}

/// Real symmetric variant of [`eigh`].
pub fn eigh_real(h: &Array2<f64>) -> Result<(Vec<f64>, Array2<f64>)> {
    let (n, m) = h.dim();
    if n != m {
        return Err(dim_err(format!("eigh needs a square matrix, got {n}x{m}")));
    }
    let (e, v) = h.eigh(UPLO::Lower).map_err(|err| Error::Numerical {
        rows: n,
        cols: m,
        message: err.to_string(),
    })?;
    Ok((e.to_vec(), v))
}

/// `exp(c h)` for Hermitian `h`, through its eigendecomposition.
pub fn hermitian_exp(h: &Array2<c64>, c: c64) -> Result<Array2<c64>> {
    let (e, v) = eigh(h)?;
    let mut scaled = v.clone();
    for (mut col, &ev) in scaled.columns_mut().into_iter().zip(&e) {
        let f = (c * ev).exp();
        col.iter_mut().for_each(|x| *x *= f);
    }
    let vd = v.t().mapv(|x| x.conj());
    let out = scaled.dot(&vd);
    if out.iter().any(|x| !x.re.is_finite() || !x.im.is_finite()) {
        return Err(Error::Numerical {
            rows: h.nrows(),
            cols: h.ncols(),
            message: "matrix exponential overflowed".into(),
        });
    }
    Ok(out)
}

pub fn kron(a: &Array2<c64>, b: &Array2<c64>) -> Array2<c64> {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    Array2::from_shape_fn((ar * br, ac * bc), |(i, j)| {
        a[(i / br, j / bc)] * b[(i % br, j % bc)]
    })
}

pub fn to_array(t: &Tensor) -> Array2<c64> {
    t.as_matrix(1).to_owned()
}

pub fn from_array(a: Array2<c64>) -> Tensor {
    let shape = [a.nrows(), a.ncols()];
    Tensor::from_matrix(a, &shape).expect("matrix shape")
}

pub fn adjoint(a: &Array2<c64>) -> Array2<c64> {
    a.t().mapv(|x| x.conj())
}

/// Largest entry of `|a - a^†|`.
pub fn hermiticity_defect(a: &Array2<c64>) -> f64 {
    (a - &adjoint(a)).iter().map(|x| x.norm()).fold(0.0, f64::max)
}

pub fn max_abs(a: &Array2<c64>) -> f64 {
    a.iter().map(|x| x.norm()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_of_zero_prefactor_is_identity() {
        let h = Array2::from_shape_fn((3, 3), |(i, j)| c64::new((i + j) as f64, 0.0));
        let g = hermitian_exp(&h, c64::new(0.0, 0.0)).unwrap();
        let eye = Array2::<c64>::eye(3);
        assert!(max_abs(&(&g - &eye)) < 1e-14);
    }

    #[test]
    fn exp_matches_series_for_small_argument() {
        let h = Array2::from_shape_fn((2, 2), |(i, j)| {
            if i == j { c64::new(i as f64, 0.0) } else { c64::new(0.3, 0.0) }
        });
        let c = c64::new(0.0, -0.01);
        let g = hermitian_exp(&h, c).unwrap();
        // 1 + cH + c^2 H^2/2 + c^3 H^3 / 6
        let eye = Array2::<c64>::eye(2);
        let h2 = h.dot(&h);
        let h3 = h2.dot(&h);
        let series = &eye + &(&h * c) + &(&h2 * (c * c / 2.0)) + &(&h3 * (c * c * c / 6.0));
        assert!(max_abs(&(&g - &series)) < 1e-9);
    }

    #[test]
    fn complex_eigenvectors_are_not_conjugated() {
        let h = Array2::from_shape_fn((3, 3), |(i, j)| {
            let (a, b) = (i as f64, j as f64);
            if i == j { c64::new(a, 0.0) } else { c64::new(0.2 * (a + b), 0.5 * (a - b)) }
        });
        let (e, v) = eigh(&h).unwrap();
        for (k, &ev) in e.iter().enumerate() {
            let col = v.column(k);
            let resid = &h.dot(&col) - &col.mapv(|x| x * ev);
            assert!(resid.iter().all(|x| x.norm() < 1e-12));
        }
        let g = hermitian_exp(&h, c64::new(0.0, -0.01)).unwrap();
        let eye = Array2::<c64>::eye(3);
        let first = &eye + &(&h * c64::new(0.0, -0.01));
        assert!(max_abs(&(&g - &first)) < 1e-3);
    }

    #[test]
    fn kron_orders_left_factor_major() {
        let a = Array2::from_shape_fn((2, 2), |(i, j)| c64::new((2 * i + j) as f64, 0.0));
        let b = Array2::<c64>::eye(2);
        let k = kron(&a, &b);
        assert_eq!(k[(2, 0)], c64::new(2.0, 0.0));
        assert_eq!(k[(1, 1)], c64::new(0.0, 0.0));
        assert_eq!(k[(3, 3)], c64::new(3.0, 0.0));
    }
}
