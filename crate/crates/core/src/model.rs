//! Truncated Bose–Hubbard chain: local ladder operators, bond Hamiltonians
//! and second-order Trotter gate layers.
//!
//! Units: `U = ħ = k_B = 1` unless `interaction` is set otherwise. Sites and
//! bonds are 0-based; bond `j` couples sites `j` and `j + 1` (and, on a
//! periodic ring, bond `L - 1` couples the last site to the first).

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{param_err, Error, Result};
use crate::linalg::{from_array, hermitian_exp, kron, to_array};
use crate::{c64, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    #[default]
    Open,
    Periodic,
}

/// Parameters of the Bose–Hubbard Hamiltonian on a finite chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Hopping strength `J`.
    pub hopping: f64,
    /// On-site repulsion `U`.
    pub interaction: f64,
    /// Chemical potential `μ`.
    pub chemical_potential: f64,
    /// Number of sites `L`.
    pub length: usize,
    /// Local Fock cutoff `d` (occupations `0..d`).
    pub cutoff: usize,
    pub boundary: Boundary,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            hopping: 0.0,
            interaction: 1.0,
            chemical_potential: 0.5,
            length: 16,
            cutoff: 5,
            boundary: Boundary::Open,
        }
    }
}

impl ModelParams {
    pub fn new(hopping: f64, chemical_potential: f64, length: usize, cutoff: usize) -> Self {
        Self {
            hopping,
            chemical_potential,
            length,
            cutoff,
            ..Self::default()
        }
    }

    pub fn with_hopping(mut self, hopping: f64) -> Self {
        self.hopping = hopping;
        self
    }

    pub fn with_boundary(mut self, boundary: Boundary) -> Self {
        self.boundary = boundary;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.length < 2 {
            return Err(param_err(format!("chain length {} < 2", self.length)));
        }
        if self.cutoff < 2 {
            return Err(param_err(format!("local cutoff d = {} < 2", self.cutoff)));
        }
        if !(self.interaction > 0.0) || !self.interaction.is_finite() {
            return Err(param_err(format!("U = {} must be positive", self.interaction)));
        }
        if !(self.hopping >= 0.0) || !self.hopping.is_finite() {
            return Err(param_err(format!("J = {} must be non-negative", self.hopping)));
        }
        if !self.chemical_potential.is_finite() {
            return Err(param_err("chemical potential must be finite"));
        }
        Ok(())
    }

    pub fn bond_count(&self) -> usize {
        match self.boundary {
            Boundary::Open => self.length - 1,
            Boundary::Periodic => self.length,
        }
    }

    /// On-site energy `U/2 n(n-1) - μ n` of occupation `n`.
    pub fn onsite_energy(&self, n: usize) -> f64 {
        let n = n as f64;
        0.5 * self.interaction * n * (n - 1.0) - self.chemical_potential * n
    }
}

/// Truncated ladder operators `(b, b^†, n)` on occupations `0..d`.
pub fn local_operators(d: usize) -> Result<(Tensor, Tensor, Tensor)> {
    if d < 2 {
        return Err(param_err(format!("local cutoff d = {d} < 2")));
    }
    let b = Tensor::from_fn(&[d, d], |i| {
        if i[1] == i[0] + 1 {
            c64::new((i[1] as f64).sqrt(), 0.0)
        } else {
            c64::new(0.0, 0.0)
        }
    });
    let bd = b.adjoint()?;
    let n = Tensor::from_fn(&[d, d], |i| {
        if i[0] == i[1] {
            c64::new(i[0] as f64, 0.0)
        } else {
            c64::new(0.0, 0.0)
        }
    });
    Ok((b, bd, n))
}

/// Weights `(left, right)` with which the two sites of `bond` carry their
/// on-site terms. Sites shared by two bonds get one half on each.
fn onsite_weights(params: &ModelParams, bond: usize) -> (f64, f64) {
    match params.boundary {
        Boundary::Periodic => (0.5, 0.5),
        Boundary::Open => {
            let last = params.length - 2;
            let left = if bond == 0 { 1.0 } else { 0.5 };
            let right = if bond == last { 1.0 } else { 0.5 };
            (left, right)
        }
    }
}

/// Two-site Hamiltonian of `bond` as a `d² x d²` matrix, row index
/// `n_left * d + n_right`. Summing all bonds reproduces the full chain
/// Hamiltonian exactly.
pub fn bond_hamiltonian(params: &ModelParams, bond: usize) -> Result<Tensor> {
    Ok(from_array(bond_hamiltonian_array(params, bond)?))
}

pub(crate) fn bond_hamiltonian_array(params: &ModelParams, bond: usize) -> Result<Array2<c64>> {
    params.validate()?;
    if bond >= params.bond_count() {
        return Err(param_err(format!(
            "bond {bond} out of range for {} bonds",
            params.bond_count()
        )));
    }
    let d = params.cutoff;
    let (b, bd, _) = local_operators(d)?;
    let (b, bd) = (to_array(&b), to_array(&bd));
    let onsite = Array2::from_shape_fn((d, d), |(i, j)| {
        if i == j {
            c64::new(params.onsite_energy(i), 0.0)
        } else {
            c64::new(0.0, 0.0)
        }
    });
    let eye = Array2::<c64>::eye(d);
    let (wl, wr) = onsite_weights(params, bond);
    let hop = &kron(&bd, &b) + &kron(&b, &bd);
    let h = &hop * c64::new(-params.hopping, 0.0)
        + &kron(&onsite, &eye) * c64::new(wl, 0.0)
        + &kron(&eye, &onsite) * c64::new(wr, 0.0);
    Ok(h)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Parity {
    /// Bonds `0, 2, 4, ...` (first site odd in 1-based labels).
    Odd,
    /// Bonds `1, 3, 5, ...`.
    Even,
}

impl Parity {
    pub fn bonds(self, bond_count: usize) -> impl Iterator<Item = usize> {
        let start = match self {
            Parity::Odd => 0,
            Parity::Even => 1,
        };
        (start..bond_count).step_by(2)
    }
}

/// `exp(c h_b)` for every bond `b` of one parity class.
#[derive(Debug, Clone)]
pub struct GateLayer {
    /// `(bond, d² x d² gate)` pairs, bonds ascending.
    pub gates: Vec<(usize, Tensor)>,
    pub parity: Parity,
    pub prefactor: c64,
}

impl GateLayer {
    pub fn build(params: &ModelParams, parity: Parity, prefactor: c64) -> Result<Self> {
        params.validate()?;
        if !prefactor.re.is_finite() || !prefactor.im.is_finite() {
            return Err(param_err("gate prefactor must be finite"));
        }
        let gates = parity
            .bonds(params.bond_count())
            .map(|bond| {
                let h = bond_hamiltonian_array(params, bond)?;
                Ok((bond, from_array(hermitian_exp(&h, prefactor)?)))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            gates,
            parity,
            prefactor,
        })
    }

    /// Fuse a later layer of the same parity into this one (`later · self`).
    pub fn then(&self, later: &GateLayer) -> Result<GateLayer> {
        if self.parity != later.parity || self.gates.len() != later.gates.len() {
            return Err(param_err("only layers on the same bonds can be fused"));
        }
        let gates = self
            .gates
            .iter()
            .zip(&later.gates)
            .map(|((b, first), (_, second))| Ok((*b, second.matmul(first)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(GateLayer {
            gates,
            parity: self.parity,
            prefactor: self.prefactor + later.prefactor,
        })
    }
}

/// Second-order Suzuki–Trotter step `e^{c/2 H_odd} e^{c H_even} e^{c/2 H_odd}`,
/// returned in application order. Open chains only.
pub fn trotter_layers(params: &ModelParams, c: c64) -> Result<[GateLayer; 3]> {
    if params.boundary != Boundary::Open {
        return Err(Error::Unsupported(
            "Trotter layers are built for open chains only".into(),
        ));
    }
    let half = GateLayer::build(params, Parity::Odd, c * 0.5)?;
    let even = GateLayer::build(params, Parity::Even, c)?;
    Ok([half.clone(), even, half])
}

/// Energy to leave the unit-filling sector at `J = 0`.
pub fn intersector_gap(params: &ModelParams) -> Result<f64> {
    params.validate()?;
    if params.hopping != 0.0 {
        return Err(Error::Unsupported(format!(
            "closed-form inter-sector gap needs J = 0, got J = {}",
            params.hopping
        )));
    }
    Ok(params.chemical_potential)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{adjoint, hermiticity_defect, max_abs};

    fn arr(t: &Tensor) -> Array2<c64> {
        to_array(t)
    }

    #[test]
    fn annihilator_for_two_levels() {
        let (b, _, _) = local_operators(2).unwrap();
        let expect = [[0.0, 1.0], [0.0, 0.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(b.get(&[i, j]), c64::new(expect[i][j], 0.0));
            }
        }
    }

    #[test]
    fn creator_entry_is_sqrt_two() {
        let (_, bd, _) = local_operators(3).unwrap();
        assert!((bd.get(&[2, 1]).re - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn truncated_commutator_diagonal() {
        let (b, bd, n) = local_operators(5).unwrap();
        let comm = &arr(&b).dot(&arr(&bd)) - &arr(&bd).dot(&arr(&b));
        let expect = [1.0, 1.0, 1.0, 1.0, -4.0];
        for i in 0..5 {
            assert!((comm[(i, i)].re - expect[i]).abs() < 1e-13);
        }
        // n = b^† b
        assert!(max_abs(&(&arr(&bd).dot(&arr(&b)) - &arr(&n))) < 1e-14);
        assert!(local_operators(1).is_err());
    }

    #[test]
    fn classical_bond_is_diagonal() {
        let p = ModelParams {
            hopping: 0.0,
            chemical_potential: 0.0,
            length: 4,
            cutoff: 3,
            ..ModelParams::default()
        };
        for bond in 0..3 {
            let h = arr(&bond_hamiltonian(&p, bond).unwrap());
            let (wl, wr) = onsite_weights(&p, bond);
            for nl in 0..3 {
                for nr in 0..3 {
                    let expect = 0.5
                        * ((nl * (nl.max(1) - 1)) as f64 * wl + (nr * (nr.max(1) - 1)) as f64 * wr);
                    assert!((h[(nl * 3 + nr, nl * 3 + nr)].re - expect).abs() < 1e-14);
                }
            }
            let off: f64 = h.indexed_iter().filter(|((i, j), _)| i != j).map(|(_, v)| v.norm()).sum();
            assert_eq!(off, 0.0);
        }
    }

    #[test]
    fn two_level_hopping_couples_10_and_01() {
        let p = ModelParams {
            hopping: 1.0,
            chemical_potential: 0.0,
            length: 2,
            cutoff: 2,
            ..ModelParams::default()
        };
        let h = arr(&bond_hamiltonian(&p, 0).unwrap());
        // |10> = index 2, |01> = index 1
        assert_eq!(h[(2, 1)], c64::new(-1.0, 0.0));
        assert_eq!(h[(1, 2)], c64::new(-1.0, 0.0));
    }

    #[test]
    fn bond_matrices_are_hermitian() {
        let p = ModelParams::new(0.37, 0.41, 5, 4);
        for bond in 0..4 {
            let h = arr(&bond_hamiltonian(&p, bond).unwrap());
            assert!(hermiticity_defect(&h) < 1e-13);
        }
        assert!(bond_hamiltonian(&p, 4).is_err());
        let ring = p.with_boundary(Boundary::Periodic);
        assert!(bond_hamiltonian(&ring, 4).is_ok());
    }

    #[test]
    fn zero_prefactor_gives_identities() {
        let p = ModelParams::new(0.2, 0.5, 4, 3);
        for layer in trotter_layers(&p, c64::new(0.0, 0.0)).unwrap() {
            for (_, g) in &layer.gates {
                assert!(max_abs(&(&arr(g) - &Array2::<c64>::eye(9))) < 1e-14);
            }
        }
    }

    #[test]
    fn imaginary_time_gates_are_positive_hermitian() {
        let p = ModelParams::new(0.3, 0.5, 5, 3);
        for layer in trotter_layers(&p, c64::new(-0.05, 0.0)).unwrap() {
            for (_, g) in &layer.gates {
                let g = arr(g);
                assert!(hermiticity_defect(&g) < 1e-13);
                let (e, _) = crate::linalg::eigh(&g).unwrap();
                assert!(e[0] > 0.0);
            }
        }
    }

    #[test]
    fn real_time_gates_are_unitary() {
        let p = ModelParams::new(0.3, 0.5, 6, 4);
        let [a, b, _] = trotter_layers(&p, c64::new(0.0, -0.1)).unwrap();
        assert_eq!(a.gates.len(), 3);
        assert_eq!(b.gates.len(), 2);
        assert!((a.prefactor - c64::new(0.0, -0.05)).norm() < 1e-15);
        for (_, g) in a.gates.iter().chain(&b.gates) {
            let g = arr(g);
            let u = adjoint(&g).dot(&g);
            assert!(max_abs(&(&u - &Array2::<c64>::eye(16))) < 1e-12);
        }
    }

    #[test]
    fn fused_layers_match_sequential_application() {
        let p = ModelParams::new(0.3, 0.5, 4, 3);
        let a = GateLayer::build(&p, Parity::Odd, c64::new(0.0, -0.02)).unwrap();
        let b = GateLayer::build(&p, Parity::Odd, c64::new(0.0, -0.03)).unwrap();
        let fused = a.then(&b).unwrap();
        let direct = GateLayer::build(&p, Parity::Odd, c64::new(0.0, -0.05)).unwrap();
        for ((_, f), (_, g)) in fused.gates.iter().zip(&direct.gates) {
            assert!(f.max_abs_diff(g) < 1e-13);
        }
    }

    #[test]
    fn periodic_chains_have_no_trotter_layers() {
        let p = ModelParams::new(0.1, 0.5, 4, 3).with_boundary(Boundary::Periodic);
        assert!(matches!(trotter_layers(&p, c64::new(0.0, -0.1)), Err(Error::Unsupported(_))));
    }

    #[test]
    fn intersector_gap_is_mu_at_zero_hopping() {
        assert_eq!(intersector_gap(&ModelParams::new(0.0, 0.5, 4, 3)).unwrap(), 0.5);
        assert_eq!(intersector_gap(&ModelParams::new(0.0, 0.0, 4, 3)).unwrap(), 0.0);
        assert!(matches!(
            intersector_gap(&ModelParams::new(0.1, 0.5, 4, 3)),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn parameter_validation() {
        assert!(ModelParams::new(0.1, 0.5, 1, 3).validate().is_err());
        assert!(ModelParams::new(-0.1, 0.5, 4, 3).validate().is_err());
        let mut p = ModelParams::new(0.1, 0.5, 4, 3);
        p.interaction = 0.0;
        assert!(p.validate().is_err());
    }
}
