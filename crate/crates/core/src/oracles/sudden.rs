use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{param_err, Result};

/// Largest ramp duration for which the truncated series is trusted.
pub const SUDDEN_VALIDITY: f64 = 0.5;

/// Leading-order correlations after a short ramp out of the unit-filling
/// Mott state on a periodic ring.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuddenQuench {
    /// `⟨b^†_j b_j⟩`.
    pub c0: f64,
    /// Nearest-neighbour `⟨b^†_j b_{j+1}⟩ = 2 τ_Q² J_c`.
    pub c1: f64,
    /// Order of the neglected longer-range terms, `τ_Q³`.
    pub far_bound: f64,
    /// `2 sqrt(J_c) τ_Q`.
    pub xi_fin: f64,
    /// Set when `τ_Q` exceeds the validity bound of the series.
    pub out_of_range: bool,
}

impl SuddenQuench {
    /// Ring correlation matrix with `c0` on the diagonal and `c1` on nearest
    /// neighbours (including the wrap-around bond).
    pub fn correlation_matrix(&self, length: usize) -> Array2<f64> {
        Array2::from_shape_fn((length, length), |(j, k)| {
            match ring_distance(j, k, length) {
                0 => self.c0,
                1 => self.c1,
                _ => 0.0,
            }
        })
    }
}

pub fn sudden_quench_correlations(tau_q: f64, j_c: f64, length: usize) -> Result<SuddenQuench> {
    if !(tau_q >= 0.0) || !(j_c >= 0.0) {
        return Err(param_err("τ_Q and J_c must be non-negative"));
    }
    if length < 3 {
        return Err(param_err("the ring needs at least three sites"));
    }
    let out_of_range = tau_q > SUDDEN_VALIDITY;
    if out_of_range {
        log::warn!("τ_Q = {tau_q} is outside the short-ramp series (≤ {SUDDEN_VALIDITY})");
    }
    Ok(SuddenQuench {
        c0: 1.0,
        c1: 2.0 * tau_q * tau_q * j_c,
        far_bound: tau_q.powi(3),
        xi_fin: 2.0 * j_c.sqrt() * tau_q,
        out_of_range,
    })
}

fn ring_distance(j: usize, k: usize, length: usize) -> usize {
    let d = j.abs_diff(k);
    d.min(length - d)
}

/// Moment length of a correlation matrix with ring distances.
pub fn ring_xi(matrix: &Array2<f64>) -> Result<f64> {
    let n = matrix.nrows();
    let mut num = 0.0;
    let mut den = 0.0;
    for j in 0..n {
        for k in 0..n {
            let d = ring_distance(j, k, n) as f64;
            num += d * d * matrix[(j, k)];
            den += matrix[(j, k)];
        }
    }
    if !(den > 0.0) {
        return Err(crate::Error::Degenerate(format!("Σ C_jk = {den}")));
    }
    Ok((num / den).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leading_order_values() {
        let s = sudden_quench_correlations(0.1, 0.3, 16).unwrap();
        assert!((s.c1 - 0.006).abs() < 1e-15);
        assert!((s.xi_fin - 0.1095445).abs() < 1e-6);
        assert!(!s.out_of_range);
        let z = sudden_quench_correlations(0.0, 0.3, 16).unwrap();
        assert_eq!((z.c1, z.xi_fin), (0.0, 0.0));
        assert!(sudden_quench_correlations(0.8, 0.3, 16).unwrap().out_of_range);
    }

    #[test]
    fn moment_length_of_the_analytic_matrix() {
        // ξ² = 4 τ² J_c / (1 + 4 τ² J_c) from the ring matrix
        for tau in [0.01, 0.02, 0.05] {
            let s = sudden_quench_correlations(tau, 0.3, 12).unwrap();
            let xi = ring_xi(&s.correlation_matrix(12)).unwrap();
            assert!((xi - s.xi_fin).abs() / s.xi_fin < 4.0 * tau * tau * 0.3 + 1e-12);
        }
    }
}
