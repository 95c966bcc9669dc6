//! Exact references: dense diagonalization and propagation on small chains,
//! and the leading-order short-quench expansion.

mod dynamics;
mod sudden;

pub use dynamics::{ed_propagate, DenseInitial, Propagated};
pub use sudden::{ring_xi, sudden_quench_correlations, SuddenQuench};

use std::collections::HashMap;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::linalg::eigh_real;
use crate::model::ModelParams;
use crate::observables::SiteStatistics;
use crate::c64;

/// Largest Fock-space dimension `d^L` the dense oracles accept.
pub const DIMENSION_GUARD: usize = 4096;

/// Occupation basis, optionally restricted to one particle-number sector.
/// Configurations are ordered with site 0 as the most significant digit.
#[derive(Debug, Clone)]
pub struct FockBasis {
    pub length: usize,
    pub cutoff: usize,
    pub states: Vec<Vec<u8>>,
    index: HashMap<Vec<u8>, usize>,
}

impl FockBasis {
    pub fn new(length: usize, cutoff: usize, sector: Option<usize>) -> Result<Self> {
        let full = (cutoff as u128).checked_pow(length as u32).unwrap_or(u128::MAX);
        if full > DIMENSION_GUARD as u128 {
            return Err(Error::Resource(format!(
                "d^L = {cutoff}^{length} exceeds the dense guard {DIMENSION_GUARD}"
            )));
        }
        let mut states = Vec::new();
        let mut occ = vec![0u8; length];
        for _ in 0..full as usize {
            let n: usize = occ.iter().map(|&x| x as usize).sum();
            if sector.is_none_or(|s| s == n) {
                states.push(occ.clone());
            }
            // odometer, last site fastest
            for j in (0..length).rev() {
                occ[j] += 1;
                if (occ[j] as usize) < cutoff {
                    break;
                }
                occ[j] = 0;
            }
        }
        let index = states.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Ok(Self {
            length,
            cutoff,
            states,
            index,
        })
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn index_of(&self, occ: &[u8]) -> Option<usize> {
        self.index.get(occ).copied()
    }

    /// Nonzero matrix elements `⟨c'| b^†_j b_k |c⟩` as `(c', amplitude)`.
    pub fn hop(&self, c: usize, j: usize, k: usize) -> Option<(usize, f64)> {
        let s = &self.states[c];
        if j == k {
            return Some((c, s[j] as f64));
        }
        if s[k] == 0 || s[j] as usize + 1 >= self.cutoff {
            return None;
        }
        let amp = ((s[k] as f64) * (s[j] as f64 + 1.0)).sqrt();
        let mut t = s.clone();
        t[k] -= 1;
        t[j] += 1;
        self.index_of(&t).map(|i| (i, amp))
    }
}

fn bonds(params: &ModelParams) -> Vec<(usize, usize)> {
    (0..params.bond_count())
        .map(|b| (b, (b + 1) % params.length))
        .collect()
}

/// Diagonal on-site part and hopping part (at `J = 1`) of the Hamiltonian.
pub fn dense_parts(params: &ModelParams, basis: &FockBasis) -> (Array2<f64>, Array2<f64>) {
    let n = basis.dim();
    let mut h0 = Array2::zeros((n, n));
    let mut k = Array2::zeros((n, n));
    for c in 0..n {
        h0[(c, c)] = basis.states[c]
            .iter()
            .map(|&x| params.onsite_energy(x as usize))
            .sum();
        for &(a, b) in &bonds(params) {
            for (j, l) in [(a, b), (b, a)] {
                if let Some((t, amp)) = basis.hop(c, j, l) {
                    k[(t, c)] -= amp;
                }
            }
        }
    }
    (h0, k)
}

/// Dense Hamiltonian of the chain in `basis`.
pub fn dense_hamiltonian(params: &ModelParams, basis: &FockBasis) -> Array2<f64> {
    let (h0, k) = dense_parts(params, basis);
    h0 + k * params.hopping
}

#[derive(Debug, Clone)]
pub struct DenseSpectrum {
    /// Ascending.
    pub energies: Vec<f64>,
    /// Eigenvectors as columns, in the full (or sector) basis.
    pub states: Array2<f64>,
    pub sector_labels: Option<Vec<usize>>,
    pub basis: FockBasis,
}

/// Dense diagonalization, either of one sector or of the full space built
/// sector by sector (the Hamiltonian conserves particle number).
pub fn ed_spectrum(params: &ModelParams, sector: Option<usize>) -> Result<DenseSpectrum> {
    params.validate()?;
    let basis = FockBasis::new(params.length, params.cutoff, sector)?;
    if let Some(n) = sector {
        if basis.dim() == 0 {
            return Err(crate::error::param_err(format!("sector N = {n} is empty")));
        }
        let h = dense_hamiltonian(params, &basis);
        let (e, v) = eigh_real(&h)?;
        return Ok(DenseSpectrum {
            sector_labels: Some(vec![n; e.len()]),
            energies: e,
            states: v,
            basis,
        });
    }
    let dim = basis.dim();
    let max_n = params.length * (params.cutoff - 1);
    let mut entries: Vec<(f64, usize, Array1<f64>)> = Vec::with_capacity(dim);
    for n in 0..=max_n {
        let idx: Vec<usize> = (0..dim)
            .filter(|&c| basis.states[c].iter().map(|&x| x as usize).sum::<usize>() == n)
            .collect();
        let sub = FockBasis::new(params.length, params.cutoff, Some(n))?;
        let h = dense_hamiltonian(params, &sub);
        let (e, v) = eigh_real(&h)?;
        for (a, ea) in e.iter().enumerate() {
            let mut full = Array1::zeros(dim);
            for (i, &c) in idx.iter().enumerate() {
                full[c] = v[(i, a)];
            }
            entries.push((*ea, n, full));
        }
    }
    entries.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut states = Array2::zeros((dim, dim));
    for (a, (_, _, v)) in entries.iter().enumerate() {
        states.column_mut(a).assign(v);
    }
    Ok(DenseSpectrum {
        energies: entries.iter().map(|e| e.0).collect(),
        sector_labels: Some(entries.iter().map(|e| e.1).collect()),
        states,
        basis,
    })
}

/// Thermal (or ground-space) observables of the grand-canonical ensemble.
#[derive(Debug, Clone)]
pub struct GibbsObservables {
    pub statistics: SiteStatistics,
    /// `⟨b^†_j b_k⟩`.
    pub correlations: Array2<f64>,
    pub energy: f64,
}

/// Degeneracy window used for the `T = 0` ground-space mixture.
const DEGENERACY_TOL: f64 = 1e-10;

pub fn ed_gibbs_observables(params: &ModelParams, temperature: f64) -> Result<GibbsObservables> {
    if !(temperature >= 0.0) {
        return Err(crate::error::param_err(format!("temperature {temperature} < 0")));
    }
    params.validate()?;
    let l = params.length;
    let max_n = l * (params.cutoff - 1);
    let mut sectors = Vec::new();
    let mut e_min = f64::INFINITY;
    for n in 0..=max_n {
        let basis = FockBasis::new(l, params.cutoff, Some(n))?;
        let h = dense_hamiltonian(params, &basis);
        let (e, v) = eigh_real(&h)?;
        e_min = e_min.min(e[0]);
        sectors.push((basis, e, v));
    }
    let weight = |e: f64| -> f64 {
        if temperature == 0.0 {
            if e - e_min <= DEGENERACY_TOL { 1.0 } else { 0.0 }
        } else {
            (-(e - e_min) / temperature).exp()
        }
    };
    let z: f64 = sectors.iter().flat_map(|(_, e, _)| e.iter()).map(|&e| weight(e)).sum();

    let mut n1 = vec![0.0; l];
    let mut n2 = vec![0.0; l];
    let mut corr = Array2::<f64>::zeros((l, l));
    let mut energy = 0.0;
    for (basis, e, v) in &sectors {
        let w: Vec<f64> = e.iter().map(|&x| weight(x) / z).collect();
        if w.iter().all(|&x| x < 1e-300) {
            continue;
        }
        energy += e.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
        // ρ restricted to the sector
        let mut vw = v.clone();
        for (mut col, &wa) in vw.columns_mut().into_iter().zip(&w) {
            col *= wa;
        }
        let rho = vw.dot(&v.t());
        for c in 0..basis.dim() {
            let p = rho[(c, c)];
            for j in 0..l {
                let x = basis.states[c][j] as f64;
                n1[j] += p * x;
                n2[j] += p * x * x;
            }
            for j in 0..l {
                for k in 0..l {
                    if let Some((t, amp)) = basis.hop(c, j, k) {
                        corr[(j, k)] += rho[(c, t)] * amp;
                    }
                }
            }
        }
    }
    Ok(GibbsObservables {
        statistics: SiteStatistics::from_moments(&n1, &n2)?,
        correlations: corr,
        energy,
    })
}

/// Lowest excitation energy inside the sector `N = L`.
pub fn ed_sector_gap(params: &ModelParams) -> Result<f64> {
    let s = ed_spectrum(params, Some(params.length))?;
    if s.energies.len() < 2 {
        return Err(crate::error::param_err("sector has a single state"));
    }
    Ok(s.energies[1] - s.energies[0])
}

/// Dense vector of a product Fock state in the full basis.
pub fn product_vector(basis: &FockBasis, occ: &[u8]) -> Result<Array1<c64>> {
    let i = basis
        .index_of(occ)
        .ok_or_else(|| crate::error::param_err(format!("{occ:?} not in basis")))?;
    let mut v = Array1::zeros(basis.dim());
    v[i] = c64::new(1.0, 0.0);
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{bond_hamiltonian, Boundary};
    use crate::linalg::{kron, to_array};

    #[test]
    fn two_site_hopping_block() {
        let mut p = ModelParams::new(1.0, 0.0, 2, 2);
        p.interaction = 1.0;
        let s = ed_spectrum(&p, Some(1)).unwrap();
        assert_eq!(s.energies.len(), 2);
        assert!((s.energies[0] + 1.0).abs() < 1e-12);
        assert!((s.energies[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn classical_ground_energy_and_filling() {
        for l in [3, 4, 5] {
            let p = ModelParams::new(0.0, 0.5, l, 3);
            let s = ed_spectrum(&p, None).unwrap();
            assert!((s.energies[0] + l as f64 / 2.0).abs() < 1e-12);
            let g = ed_gibbs_observables(&p, 0.0).unwrap();
            assert!(g.statistics.occupations.iter().all(|&n| (n - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn adding_a_particle_costs_mu_at_zero_hopping() {
        let p = ModelParams::new(0.0, 0.5, 3, 3);
        let e3 = ed_spectrum(&p, Some(3)).unwrap().energies[0];
        let e4 = ed_spectrum(&p, Some(4)).unwrap().energies[0];
        assert!((e4 - e3 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn bond_sum_reproduces_dense_hamiltonian() {
        for l in 2..=5 {
            for d in 2..=3 {
                let p = ModelParams::new(0.37, 0.29, l, d);
                let basis = FockBasis::new(l, d, None).unwrap();
                let dense = dense_hamiltonian(&p, &basis);
                let mut sum = Array2::<c64>::zeros((basis.dim(), basis.dim()));
                for b in 0..l - 1 {
                    let h = to_array(&bond_hamiltonian(&p, b).unwrap());
                    let left = Array2::<c64>::eye(d.pow(b as u32));
                    let right = Array2::<c64>::eye(d.pow((l - b - 2) as u32));
                    sum = sum + kron(&kron(&left, &h), &right);
                }
                let diff = sum
                    .indexed_iter()
                    .map(|((i, j), v)| (v - c64::new(dense[(i, j)], 0.0)).norm())
                    .fold(0.0, f64::max);
                assert!(diff < 1e-12, "L={l} d={d}: {diff}");
            }
        }
    }

    #[test]
    fn number_operator_commutes() {
        let p = ModelParams::new(0.3, 0.5, 4, 3).with_boundary(Boundary::Periodic);
        let basis = FockBasis::new(4, 3, None).unwrap();
        let h = dense_hamiltonian(&p, &basis);
        let n = Array1::from_iter(basis.states.iter().map(|s| s.iter().map(|&x| x as f64).sum::<f64>()));
        let mut worst: f64 = 0.0;
        for i in 0..basis.dim() {
            for j in 0..basis.dim() {
                worst = worst.max((h[(i, j)] * (n[j] - n[i])).abs());
            }
        }
        assert!(worst < 1e-12);
    }

    #[test]
    fn full_spectrum_labels_and_orthonormality() {
        let p = ModelParams::new(0.2, 0.5, 3, 3);
        let s = ed_spectrum(&p, None).unwrap();
        assert!(s.energies.windows(2).all(|w| w[0] <= w[1]));
        let g = s.states.t().dot(&s.states);
        let err = (&g - &Array2::<f64>::eye(27)).iter().map(|x| x.abs()).fold(0.0, f64::max);
        assert!(err < 1e-10);
        let labels = s.sector_labels.unwrap();
        let h = dense_hamiltonian(&p, &s.basis);
        for a in 0..27 {
            let v = s.states.column(a);
            let hv = h.dot(&v);
            assert!((&hv - &(&v * s.energies[a])).iter().all(|x| x.abs() < 1e-10));
            for (c, occ) in s.basis.states.iter().enumerate() {
                if v[c].abs() > 1e-8 {
                    assert_eq!(occ.iter().map(|&x| x as usize).sum::<usize>(), labels[a]);
                }
            }
        }
    }

    #[test]
    fn spectrum_invariant_under_site_reversal() {
        // reversing the site labels maps the open chain onto itself
        let p = ModelParams::new(0.23, 0.4, 3, 3);
        let basis = FockBasis::new(3, 3, None).unwrap();
        let h = dense_hamiltonian(&p, &basis);
        let perm: Vec<usize> = basis
            .states
            .iter()
            .map(|s| basis.index_of(&s.iter().rev().copied().collect::<Vec<_>>()).unwrap())
            .collect();
        let hp = Array2::from_shape_fn(h.dim(), |(i, j)| h[(perm[i], perm[j])]);
        let (e1, _) = eigh_real(&h).unwrap();
        let (e2, _) = eigh_real(&hp).unwrap();
        for (a, b) in e1.iter().zip(&e2) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_hopping_levels_are_classical_sums() {
        let p = ModelParams::new(0.0, 0.3, 3, 3);
        let s = ed_spectrum(&p, None).unwrap();
        let mut classical: Vec<f64> = s
            .basis
            .states
            .iter()
            .map(|occ| occ.iter().map(|&n| p.onsite_energy(n as usize)).sum())
            .collect();
        classical.sort_by(f64::total_cmp);
        for (a, b) in s.energies.iter().zip(&classical) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn infinite_temperature_limit_is_uniform() {
        let p = ModelParams::new(0.1, 0.5, 3, 3);
        let g = ed_gibbs_observables(&p, 1e12).unwrap();
        for n in &g.statistics.occupations {
            assert!((n - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn single_site_gibbs_variance() {
        // J = 0, μ = 1/2, d = 3: weights 1, e^{β/2}, 1 → σ² = 2/(2 + e^{β/2})
        let p = ModelParams::new(0.0, 0.5, 3, 3);
        let g = ed_gibbs_observables(&p, 0.4).unwrap();
        let expect = 2.0 / (2.0 + 1.25f64.exp());
        for v in &g.statistics.variances {
            assert!((v - expect).abs() < 1e-12);
        }
        assert!((expect - 0.3643).abs() < 1e-4);
    }

    #[test]
    fn guard_is_enforced() {
        assert!(matches!(FockBasis::new(13, 2, None), Err(Error::Resource(_))));
        assert!(FockBasis::new(12, 2, None).is_ok());
        assert!(FockBasis::new(4, 5, None).is_ok());
    }
}
