use ndarray::{Array1, Array2};

use super::{dense_parts, FockBasis};
use crate::error::{param_err, Error, Result};
use crate::linalg::{adjoint, hermitian_exp};
use crate::model::ModelParams;
use crate::quench::QuenchProtocol;
use crate::c64;

/// Starting point of a dense propagation, in the full Fock basis.
#[derive(Debug, Clone)]
pub enum DenseInitial {
    State(Array1<c64>),
    Density(Array2<c64>),
}

#[derive(Debug, Clone)]
pub struct Propagated {
    pub final_state: DenseInitial,
    /// `⟨b^†_j b_k⟩` at the end of the ramp.
    pub correlations: Array2<c64>,
    pub occupations: Vec<f64>,
    /// Norm (pure) or trace (mixed) at the end.
    pub norm: f64,
    /// Steps used by the accepted run.
    pub steps: usize,
}

const MAX_HALVINGS: usize = 14;
const STEP_TOLERANCE: f64 = 1e-9;

/// Integrate the Schrödinger or von Neumann equation across the ramp with a
/// fourth-order Magnus scheme, doubling the step count until the
/// correlation matrix moves by less than `1e-9`.
pub fn ed_propagate(
    params: &ModelParams,
    initial: &DenseInitial,
    protocol: &QuenchProtocol,
    steps: usize,
) -> Result<Propagated> {
    params.validate()?;
    protocol.validate()?;
    let basis = FockBasis::new(params.length, params.cutoff, None)?;
    let dim = basis.dim();
    match initial {
        DenseInitial::State(v) if v.len() != dim => {
            return Err(param_err(format!("state of length {} for basis {dim}", v.len())))
        }
        DenseInitial::Density(m) if m.dim() != (dim, dim) => {
            return Err(param_err(format!("density {:?} for basis {dim}", m.dim())))
        }
        _ => {}
    }
    let (h0, k) = dense_parts(params, &basis);
    let (h0, k) = (h0.mapv(|x| c64::new(x, 0.0)), k.mapv(|x| c64::new(x, 0.0)));

    let mut n = steps.max(1);
    let mut prev = run(&basis, &h0, &k, initial, protocol, n)?;
    for _ in 0..MAX_HALVINGS {
        n *= 2;
        let next = run(&basis, &h0, &k, initial, protocol, n)?;
        let moved = next
            .correlations
            .iter()
            .zip(prev.correlations.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        prev = next;
        if moved < STEP_TOLERANCE {
            return Ok(prev);
        }
    }
    Err(Error::Numerical {
        rows: dim,
        cols: dim,
        message: format!("propagation did not converge after {MAX_HALVINGS} halvings"),
    })
}

fn run(
    basis: &FockBasis,
    h0: &Array2<c64>,
    k: &Array2<c64>,
    initial: &DenseInitial,
    protocol: &QuenchProtocol,
    steps: usize,
) -> Result<Propagated> {
    let h = protocol.tau_q / steps as f64;
    let c1 = 0.5 - 3f64.sqrt() / 6.0;
    let c2 = 0.5 + 3f64.sqrt() / 6.0;
    let (t0, _) = protocol.time_window();
    let mut state = initial.clone();
    for s in 0..steps {
        let start = t0 + s as f64 * h;
        let j1 = protocol.ramp_value_clamped(start + c1 * h);
        let j2 = protocol.ramp_value_clamped(start + c2 * h);
        let ha = h0 + &(k * c64::new(j1, 0.0));
        let hb = h0 + &(k * c64::new(j2, 0.0));
        let comm = hb.dot(&ha) - ha.dot(&hb);
        let omega = (&ha + &hb) * c64::new(h / 2.0, 0.0)
            + comm * c64::new(0.0, -3f64.sqrt() * h * h / 12.0);
        // Hermitize against round-off before the eigendecomposition
        let omega = (&omega + &adjoint(&omega)) * c64::new(0.5, 0.0);
        let u = hermitian_exp(&omega, c64::new(0.0, -1.0))?;
        state = match state {
            DenseInitial::State(v) => DenseInitial::State(u.dot(&v)),
            DenseInitial::Density(r) => DenseInitial::Density(u.dot(&r).dot(&adjoint(&u))),
        };
    }
    let (correlations, occupations, norm) = observe(basis, &state);
    Ok(Propagated {
        final_state: state,
        correlations,
        occupations,
        norm,
        steps,
    })
}

/// Correlation matrix, occupations and norm/trace of a dense state.
pub(crate) fn observe(basis: &FockBasis, state: &DenseInitial) -> (Array2<c64>, Vec<f64>, f64) {
    let l = basis.length;
    let mut corr = Array2::<c64>::zeros((l, l));
    // Tr[ρ A] = Σ_{c,t} ρ_{c t} A_{t c}
    let rho = |c: usize, t: usize| -> c64 {
        match state {
            DenseInitial::State(v) => v[c] * v[t].conj(),
            DenseInitial::Density(r) => r[(c, t)],
        }
    };
    let mut norm = 0.0;
    for c in 0..basis.dim() {
        norm += rho(c, c).re;
        for j in 0..l {
            for kk in 0..l {
                if let Some((t, amp)) = basis.hop(c, j, kk) {
                    corr[(j, kk)] += rho(c, t) * amp;
                }
            }
        }
    }
    let occupations = (0..l).map(|j| corr[(j, j)].re).collect();
    (corr, occupations, norm)
}
