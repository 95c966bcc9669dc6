//! Mixed states as locally purified tensor networks, `ρ = X X^†`.

use ndarray::Array2;

use crate::error::{param_err, Result};
use crate::model::{trotter_layers, ModelParams};
use crate::mps::{self, ConvergenceWarning, MpsState, TruncationPolicy};
use crate::observables::ManyBodyState;
use crate::quench::QuenchProtocol;
use crate::train::{self, Train};
use crate::{c64, Tensor};

/// Trace drift from truncation beyond which cooling raises a warning.
pub const TRACE_DRIFT_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct LptnState {
    pub(crate) train: Train,
    /// Accumulated inverse temperature; 0 is infinite temperature.
    pub beta: f64,
    /// `Tr[X X^†]` right before the latest normalization.
    pub trace_norm: f64,
    pub truncation_log: Vec<f64>,
    pub warnings: Vec<ConvergenceWarning>,
}

/// `𝟙 / Tr 𝟙` as a product of `δ_{i κ} / sqrt(d)` site tensors.
pub fn infinite_temperature_state(length: usize, d: usize) -> Result<LptnState> {
    if length < 2 || d < 2 {
        return Err(param_err(format!("need L ≥ 2 and d ≥ 2, got L = {length}, d = {d}")));
    }
    let s = 1.0 / (d as f64).sqrt();
    let sites = (0..length)
        .map(|_| {
            Tensor::from_fn(&[1, d, d, 1], |i| {
                if i[1] == i[2] { c64::new(s, 0.0) } else { c64::new(0.0, 0.0) }
            })
        })
        .collect();
    LptnState::from_train(Train::new(sites)?, 0.0)
}

/// Exact Gibbs state of the decoupled chain (`J = 0`) as a product
/// purification; `β = ∞` gives the equal-weight ground-space mixture.
pub fn zero_hopping_thermal_state(params: &ModelParams, beta: f64) -> Result<LptnState> {
    params.validate()?;
    if !(beta >= 0.0) {
        return Err(param_err(format!("β = {beta} must be non-negative")));
    }
    let d = params.cutoff;
    let energies: Vec<f64> = (0..d).map(|n| params.onsite_energy(n)).collect();
    let e_min = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = energies
        .iter()
        .map(|&e| {
            if beta.is_infinite() {
                if e - e_min < 1e-12 { 1.0 } else { 0.0 }
            } else {
                (-beta * (e - e_min)).exp()
            }
        })
        .collect();
    let z: f64 = weights.iter().sum();
    let sites = (0..params.length)
        .map(|_| {
            Tensor::from_fn(&[1, d, d, 1], |i| {
                if i[1] == i[2] { c64::new((weights[i[1]] / z).sqrt(), 0.0) } else { c64::new(0.0, 0.0) }
            })
        })
        .collect();
    LptnState::from_train(Train::new(sites)?, beta)
}

impl LptnState {
    fn from_train(mut train: Train, beta: f64) -> Result<Self> {
        train.move_center(0)?;
        Ok(Self {
            train,
            beta,
            trace_norm: 1.0,
            truncation_log: Vec::new(),
            warnings: Vec::new(),
        })
    }

    /// Build from rank-4 `(left, physical, purification, right)` tensors.
    pub fn from_tensors(tensors: Vec<Tensor>, beta: f64) -> Result<Self> {
        Ok(Self {
            train: Train::new(tensors)?,
            beta,
            trace_norm: 1.0,
            truncation_log: Vec::new(),
            warnings: Vec::new(),
        })
    }

    /// Pure state `|ψ⟩⟨ψ|` with purification extent 1.
    pub fn from_pure(state: &MpsState) -> Self {
        Self {
            train: state.train.clone(),
            beta: f64::INFINITY,
            trace_norm: 1.0,
            truncation_log: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.train.sites
    }

    pub fn gauge_center(&self) -> Option<usize> {
        self.train.center
    }

    pub(crate) fn set_gauge_center(&mut self, center: Option<usize>) {
        self.train.center = center;
    }

    pub fn bond_dims(&self) -> Vec<usize> {
        self.train.bond_dims()
    }

    pub fn purification_dims(&self) -> Vec<usize> {
        self.train.sites.iter().map(|t| t.shape()[2]).collect()
    }

    /// `Tr ρ = Tr[X X^†]`.
    pub fn trace(&self) -> f64 {
        self.train.norm_sqr()
    }

    pub fn normalize(&mut self) -> Result<()> {
        let n = self.train.normalize()?;
        self.trace_norm = n * n;
        Ok(())
    }

    pub fn accumulated_discarded_weight(&self) -> f64 {
        self.truncation_log.iter().sum()
    }

    /// `Tr[ρ H]`.
    pub fn energy(&self, params: &ModelParams) -> Result<f64> {
        Ok(mps::energy(&self.train, params)? / self.trace())
    }

    /// Dense `ρ = X X^†` (for small chains), site 0 most significant.
    pub fn density_matrix(&self) -> Result<Array2<c64>> {
        let x = self.train.to_dense()?;
        let l = self.train.len();
        let d = self.train.phys();
        let ks: Vec<usize> = self.purification_dims();
        let kdim: usize = ks.iter().product();
        let pdim = d.pow(l as u32);
        // x is ordered (p_0 k_0 p_1 k_1 ...); regroup into (p...) x (k...)
        let mut m = Array2::<c64>::zeros((pdim, kdim));
        let mut digits = vec![0usize; 2 * l];
        let radices: Vec<usize> = (0..l).flat_map(|j| [d, ks[j]]).collect();
        for v in &x {
            let (mut pi, mut ki) = (0, 0);
            for j in 0..l {
                pi = pi * d + digits[2 * j];
                ki = ki * ks[j] + digits[2 * j + 1];
            }
            m[(pi, ki)] = *v;
            for a in (0..2 * l).rev() {
                digits[a] += 1;
                if digits[a] < radices[a] {
                    break;
                }
                digits[a] = 0;
            }
        }
        Ok(m.dot(&m.t().mapv(|z| z.conj())))
    }
}

impl ManyBodyState for LptnState {
    fn length(&self) -> usize {
        self.train.len()
    }

    fn local_dim(&self) -> usize {
        self.train.phys()
    }

    fn expectation(&self, ops: &[(usize, Tensor)]) -> Result<c64> {
        self.train.expectation(&mps::ops_to_arrays(ops)?)
    }

    fn correlation_matrix(&self) -> Result<Array2<c64>> {
        mps::correlations(&self.train)
    }

    fn local_moments(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        mps::moments(&self.train)
    }
}

/// `Tr[ρ Π ops]`.
pub fn expectation_mixed(state: &LptnState, ops: &[(usize, Tensor)]) -> Result<c64> {
    state.expectation(ops)
}

/// Imaginary-time evolution of `X` alone, `X ← e^{-Δβ H / 2} X`, in steps of
/// `policy.dt` until the accumulated `β` reaches `target_beta`.
pub fn cool(
    state: &mut LptnState,
    params: &ModelParams,
    target_beta: f64,
    policy: &TruncationPolicy,
) -> Result<()> {
    params.validate()?;
    policy.validate()?;
    if !(target_beta > state.beta) || !target_beta.is_finite() {
        return Err(param_err(format!(
            "target β = {target_beta} must exceed the current β = {}",
            state.beta
        )));
    }
    let span = target_beta - state.beta;
    let n = ((span / policy.dt) - 1e-9).ceil().max(1.0) as usize;
    let h = span / n as f64;
    let make = |_s: usize| trotter_layers(params, c64::new(-h / 2.0, 0.0));
    let log = train::run_steps(&mut state.train, n, make, policy.truncation(), true)?;
    let drift: f64 = log.iter().sum();
    state.truncation_log.extend(log);
    state.beta = target_beta;
    state.normalize()?;
    if drift > TRACE_DRIFT_TOLERANCE {
        let w = ConvergenceWarning {
            message: format!("cooling to β = {target_beta} discarded weight {drift:e}"),
            energy_trace: state.truncation_log.clone(),
        };
        log::warn!("{}", w.message);
        state.warnings.push(w);
    }
    Ok(())
}

/// Unitary evolution of `X` under the linear ramp. The purification index
/// is untouched.
pub fn real_evolve(
    state: &mut LptnState,
    params: &ModelParams,
    protocol: &QuenchProtocol,
    policy: &TruncationPolicy,
) -> Result<()> {
    policy.validate()?;
    let log = mps::evolve_ramp(&mut state.train, params, protocol, policy)?;
    state.truncation_log.extend(log);
    Ok(())
}
