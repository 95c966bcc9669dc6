//! Site statistics, hopping correlations and the quantities derived from them.

use ndarray::{Array1, Array2};
use ndarray_linalg::LeastSquaresSvd;
use serde::{Deserialize, Serialize};

use crate::error::{param_err, Error, Result};
use crate::{c64, Tensor};

/// Read-out interface shared by pure and mixed tensor-train states.
pub trait ManyBodyState {
    fn length(&self) -> usize;
    fn local_dim(&self) -> usize;
    /// Expectation of a product of single-site operators on strictly
    /// increasing sites.
    fn expectation(&self, ops: &[(usize, Tensor)]) -> Result<c64>;
    /// `⟨b^†_j b_k⟩` for all `j, k` (0-based).
    fn correlation_matrix(&self) -> Result<Array2<c64>>;
    /// Per-site `⟨n_j⟩` and `⟨n_j²⟩`.
    fn local_moments(&self) -> Result<(Vec<f64>, Vec<f64>)>;
}

/// 0-based index of the readout site `⌈L/2⌉` (1-based).
pub fn center_site(length: usize) -> usize {
    length.div_ceil(2).saturating_sub(1)
}

/// Largest distance used for correlation fits from the center site.
pub fn default_r_max(length: usize) -> usize {
    (length / 2).saturating_sub(1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteStatistics {
    pub occupations: Vec<f64>,
    pub variances: Vec<f64>,
    /// `N / L`.
    pub filling: f64,
    pub total_number: f64,
}

impl SiteStatistics {
    pub fn from_moments(first: &[f64], second: &[f64]) -> Result<Self> {
        if first.len() != second.len() || first.is_empty() {
            return Err(param_err("moment lists must be nonempty and of equal length"));
        }
        let variances: Vec<f64> = first
            .iter()
            .zip(second)
            .map(|(n, n2)| n2 - n * n)
            .collect();
        if let Some(v) = variances.iter().find(|&&v| v < -1e-10) {
            return Err(Error::Numerical {
                rows: first.len(),
                cols: 1,
                message: format!("negative occupation variance {v}"),
            });
        }
        let total: f64 = first.iter().sum();
        Ok(Self {
            occupations: first.to_vec(),
            variances,
            filling: total / first.len() as f64,
            total_number: total,
        })
    }

    pub fn center_occupation(&self) -> f64 {
        self.occupations[center_site(self.occupations.len())]
    }

    pub fn center_variance(&self) -> f64 {
        self.variances[center_site(self.variances.len())]
    }
}

pub fn site_statistics<S: ManyBodyState + ?Sized>(state: &S) -> Result<SiteStatistics> {
    let (n, n2) = state.local_moments()?;
    SiteStatistics::from_moments(&n, &n2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationProfile {
    pub reference_site: usize,
    /// `C(r)` for `r = 0..=r_max`.
    pub values: Vec<f64>,
    pub eta: Option<f64>,
    pub xi: Option<f64>,
    pub xi_l: Option<f64>,
    pub fit_residual: Option<f64>,
}

/// `C(r) = Re ⟨b^†_j b_{j+r}⟩` from a full correlation matrix.
pub fn profile_from_matrix(
    matrix: &Array2<c64>,
    reference: usize,
    r_max: usize,
) -> Result<CorrelationProfile> {
    let n = matrix.nrows();
    if reference + r_max >= n {
        return Err(param_err(format!(
            "reference {reference} + r_max {r_max} exceeds chain of {n}"
        )));
    }
    let values = (0..=r_max).map(|r| matrix[(reference, reference + r)].re).collect();
    Ok(CorrelationProfile {
        reference_site: reference,
        values,
        eta: None,
        xi: None,
        xi_l: None,
        fit_residual: None,
    })
}

pub fn hopping_correlations<S: ManyBodyState + ?Sized>(
    state: &S,
    reference: usize,
    r_max: usize,
) -> Result<CorrelationProfile> {
    let m = state.correlation_matrix()?;
    let defect = hermiticity_defect(&m);
    if defect > 1e-10 {
        return Err(Error::Numerical {
            rows: m.nrows(),
            cols: m.ncols(),
            message: format!("correlation matrix not Hermitian ({defect:e})"),
        });
    }
    profile_from_matrix(&m, reference, r_max)
}

fn hermiticity_defect(m: &Array2<c64>) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for j in 0..n {
        for k in 0..n {
            worst = worst.max((m[(j, k)] - m[(k, j)].conj()).norm());
        }
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub c0: f64,
    pub eta: f64,
    /// `1/ξ`, clamped at zero.
    pub inverse_xi: f64,
    /// Infinite when `inverse_xi` is zero.
    pub xi: f64,
    /// Sum of squared residuals of `log C(r)`.
    pub residual: f64,
}

/// Fit `C(r) ∝ r^{-η} e^{-r/ξ}` over `r ∈ [r_lo, r_hi]` by linear least
/// squares on `log C(r)`. `values[r]` holds `C(r)`.
pub fn fit_correlation_decay(values: &[f64], r_lo: usize, r_hi: usize) -> Result<DecayFit> {
    if r_lo < 1 || r_hi < r_lo || r_hi >= values.len() {
        return Err(param_err(format!(
            "fit range [{r_lo}, {r_hi}] outside [1, {}]",
            values.len().saturating_sub(1)
        )));
    }
    if r_hi - r_lo + 1 < 3 {
        return Err(param_err("decay fit needs at least three distances"));
    }
    let bad: Vec<usize> = (r_lo..=r_hi).filter(|&r| !(values[r] > 0.0)).collect();
    if !bad.is_empty() {
        return Err(Error::FitDomain(bad));
    }
    let rs: Vec<f64> = (r_lo..=r_hi).map(|r| r as f64).collect();
    let y = Array1::from_iter((r_lo..=r_hi).map(|r| values[r].ln()));
    let a = Array2::from_shape_fn((rs.len(), 3), |(i, c)| match c {
        0 => 1.0,
        1 => -rs[i].ln(),
        _ => -rs[i],
    });
    let sol = solve_ls(&a, &y)?;
    let (c0, eta, inv) = if sol[2] >= 0.0 {
        (sol[0], sol[1], sol[2])
    } else {
        let a2 = a.slice(ndarray::s![.., 0..2]).to_owned();
        let s2 = solve_ls(&a2, &y)?;
        (s2[0], s2[1], 0.0)
    };
    let residual = rs
        .iter()
        .zip(y.iter())
        .map(|(r, yv)| {
            let pred = c0 - eta * r.ln() - inv * r;
            (yv - pred).powi(2)
        })
        .sum();
    Ok(DecayFit {
        c0,
        eta,
        inverse_xi: inv,
        xi: if inv > 0.0 { 1.0 / inv } else { f64::INFINITY },
        residual,
    })
}

fn solve_ls(a: &Array2<f64>, y: &Array1<f64>) -> Result<Array1<f64>> {
    let out = a.least_squares(y).map_err(|e| Error::Numerical {
        rows: a.nrows(),
        cols: a.ncols(),
        message: e.to_string(),
    })?;
    Ok(out.solution)
}

/// `ξ_L = sqrt(Σ (j-k)² C_jk / Σ C_jk)` over all ordered pairs.
pub fn finite_size_xi(matrix: &Array2<c64>) -> Result<f64> {
    let (n, m) = matrix.dim();
    if n != m || n == 0 {
        return Err(param_err(format!("correlation matrix must be square, got {n}x{m}")));
    }
    let defect = hermiticity_defect(matrix);
    if defect > 1e-8 {
        return Err(param_err(format!("correlation matrix not Hermitian ({defect:e})")));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for j in 0..n {
        for k in 0..n {
            let c = matrix[(j, k)].re;
            let dist = j as f64 - k as f64;
            num += dist * dist * c;
            den += c;
        }
    }
    if !(den > 0.0) {
        return Err(Error::Degenerate(format!("Σ C_jk = {den}")));
    }
    Ok((num / den).max(0.0).sqrt())
}

/// `sqrt((L² - 1)/6)`, the value of `ξ_L` for a constant correlation matrix.
pub fn xi_l_bound(length: usize) -> f64 {
    let l = length as f64;
    ((l * l - 1.0) / 6.0).sqrt()
}

/// Slope, intercept and slope standard error of an ordinary least-squares line.
pub fn least_squares_line(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64)> {
    let n = x.len();
    if n != y.len() || n < 2 {
        return Err(param_err("line fit needs at least two paired samples"));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(param_err("line fit needs distinct abscissae"));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let se = if n > 2 {
        let rss: f64 = x
            .iter()
            .zip(y)
            .map(|(a, b)| (b - intercept - slope * a).powi(2))
            .sum();
        (rss / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok((slope, intercept, se))
}

/// `∂ϱ/∂μ` from samples `(μ, ϱ)` inside `[lo, hi]`.
pub fn compressibility(samples: &[(f64, f64)], lo: f64, hi: f64) -> Result<f64> {
    let (x, y): (Vec<f64>, Vec<f64>) = samples
        .iter()
        .filter(|(mu, _)| *mu >= lo - 1e-12 && *mu <= hi + 1e-12)
        .copied()
        .unzip();
    if x.len() < 3 {
        return Err(param_err(format!(
            "compressibility needs three samples in [{lo}, {hi}], got {}",
            x.len()
        )));
    }
    Ok(least_squares_line(&x, &y)?.0)
}

/// `Υ_L = (ξ_{L+ΔL} - ξ_L) / ΔL`.
pub fn superfluid_quantifier(xi_l: f64, xi_l_plus: f64, delta_l: usize) -> Result<f64> {
    if delta_l < 1 {
        return Err(param_err("ΔL must be at least 1"));
    }
    Ok((xi_l_plus - xi_l) / delta_l as f64)
}

/// `Θ = max(grid) - σ²` pointwise.
pub fn mott_quantifier(variances: &[f64]) -> Result<Vec<f64>> {
    let max = variances
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if variances.is_empty() || !max.is_finite() {
        return Err(param_err("Mott quantifier needs a nonempty finite grid"));
    }
    Ok(variances.iter().map(|v| max - v).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn constant(n: usize, v: f64) -> Array2<c64> {
        Array2::from_elem((n, n), c64::new(v, 0.0))
    }

    #[test]
    fn center_site_convention() {
        assert_eq!(center_site(16), 7);
        assert_eq!(center_site(5), 2);
        assert_eq!(default_r_max(16), 7);
        assert_eq!(center_site(16) + default_r_max(16), 14);
    }

    #[test]
    fn constant_matrix_hits_the_bound() {
        assert!((finite_size_xi(&constant(5, 0.7)).unwrap() - 2.0).abs() < 1e-12);
        for l in [2, 7, 16, 24] {
            assert!((finite_size_xi(&constant(l, 1.0)).unwrap() - xi_l_bound(l)).abs() < 1e-9);
        }
    }

    #[test]
    fn diagonal_matrix_has_zero_length() {
        let m = Array2::from_diag(&Array1::from_elem(6, c64::new(1.0, 0.0)));
        assert_eq!(finite_size_xi(&m).unwrap(), 0.0);
        assert!(matches!(finite_size_xi(&constant(3, 0.0)), Err(Error::Degenerate(_))));
    }

    #[test]
    fn pure_power_law_recovered() {
        let v: Vec<f64> = (0..10).map(|r| if r == 0 { 1.0 } else { (r as f64).powf(-0.5) }).collect();
        let f = fit_correlation_decay(&v, 1, 9).unwrap();
        assert!((f.eta - 0.5).abs() < 1e-8);
        assert!(f.inverse_xi.abs() < 1e-8);
    }

    #[test]
    fn pure_exponential_recovered() {
        let v: Vec<f64> = (0..10).map(|r| (-(r as f64) / 3.0).exp()).collect();
        let f = fit_correlation_decay(&v, 1, 9).unwrap();
        assert!((f.xi - 3.0).abs() < 1e-8);
        assert!(f.eta.abs() < 1e-8);
    }

    #[test]
    fn growing_data_is_clamped() {
        let v: Vec<f64> = (0..8).map(|r| (0.1 * r as f64).exp() * (1.0 + r as f64).powf(-1.0)).collect();
        let f = fit_correlation_decay(&v, 1, 7).unwrap();
        assert_eq!(f.inverse_xi, 0.0);
        assert!(f.xi.is_infinite());
    }

    #[test]
    fn non_positive_samples_are_listed() {
        let v = [1.0, 0.5, -0.1, 0.2, 0.0, 0.1];
        match fit_correlation_decay(&v, 1, 5) {
            Err(Error::FitDomain(rs)) => assert_eq!(rs, vec![2, 4]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn compressibility_of_a_line() {
        let s: Vec<(f64, f64)> = (0..7).map(|i| {
            let mu = 0.4 + 0.03 * i as f64;
            (mu, 0.5 + 2.0 * mu)
        }).collect();
        assert!((compressibility(&s, 0.425, 0.575).unwrap() - 2.0).abs() < 1e-10);
        assert!(compressibility(&s[..2], 0.0, 1.0).is_err());
    }

    #[test]
    fn quantifiers() {
        let l = 24.0f64;
        let up = superfluid_quantifier(l / 6f64.sqrt(), (l + 2.0) / 6f64.sqrt(), 2).unwrap();
        assert!((up - 1.0 / 6f64.sqrt()).abs() < 1e-12);
        assert_eq!(superfluid_quantifier(0.3, 0.3, 2).unwrap(), 0.0);
        assert!(superfluid_quantifier(0.3, 0.3, 0).is_err());
        assert_eq!(mott_quantifier(&[0.2, 0.2]).unwrap(), vec![0.0, 0.0]);
        let t = mott_quantifier(&[0.1, 0.4]).unwrap();
        assert!((t[0] - 0.3).abs() < 1e-15 && t[1] == 0.0);
    }

    #[test]
    fn statistics_from_moments() {
        let s = SiteStatistics::from_moments(&[1.0, 1.0, 2.0], &[1.0, 1.5, 4.0]).unwrap();
        assert_eq!(s.variances, vec![0.0, 0.5, 0.0]);
        assert!((s.filling - 4.0 / 3.0).abs() < 1e-12);
        assert_eq!(s.center_variance(), 0.5);
        assert!(SiteStatistics::from_moments(&[1.0], &[0.5]).is_err());
    }

    proptest! {
        #[test]
        fn xi_l_never_exceeds_bound(
            l in 2usize..24,
            profile in proptest::collection::vec(0.0f64..1.0, 24),
        ) {
            // non-negative profiles that do not grow with distance
            let mut f = profile.clone();
            f[0] = f[0].max(1e-3);
            for r in 1..f.len() {
                f[r] = f[r].min(f[r - 1]);
            }
            let m = Array2::from_shape_fn((l, l), |(j, k)| c64::new(f[j.abs_diff(k)], 0.0));
            let xi = finite_size_xi(&m).unwrap();
            prop_assert!(xi >= 0.0 && xi <= xi_l_bound(l) + 1e-9);
        }

        #[test]
        fn delocalized_pair_exceeds_the_bound(l in 3usize..20) {
            // one boson in (|0⟩ + |L-1⟩)/√2
            let mut m = Array2::<c64>::zeros((l, l));
            for (j, k) in [(0, 0), (0, l - 1), (l - 1, 0), (l - 1, l - 1)] {
                m[(j, k)] = c64::new(0.5, 0.0);
            }
            let xi = finite_size_xi(&m).unwrap();
            prop_assert!((xi - (l - 1) as f64 / 2f64.sqrt()).abs() < 1e-12);
            prop_assert!(xi > xi_l_bound(l));
        }

        #[test]
        fn decay_fit_round_trip(
            eta in 0.0f64..3.0,
            xi in 0.5f64..100.0,
            noise_seed in any::<u64>(),
        ) {
            let mut s = noise_seed;
            let values: Vec<f64> = (0..12).map(|r| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let noise = 1.0 + 1e-6 * (((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0);
                let r = r.max(1) as f64;
                2.0 * r.powf(-eta) * (-r / xi).exp() * noise
            }).collect();
            let f = fit_correlation_decay(&values, 1, 11).unwrap();
            prop_assert!((f.eta - eta).abs() < 1e-4);
            prop_assert!((f.inverse_xi - 1.0 / xi).abs() < 1e-4);
        }
    }
}
