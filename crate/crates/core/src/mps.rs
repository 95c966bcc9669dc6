//! Pure states as matrix product states, evolved with TEBD.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{param_err, Result};
use crate::linalg::to_array;
use crate::model::{bond_hamiltonian_array, local_operators, trotter_layers, GateLayer, ModelParams};
use crate::observables::ManyBodyState;
use crate::quench::QuenchProtocol;
use crate::train::{self, Train, Truncation};
use crate::{c64, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationPolicy {
    /// Largest bond dimension `m`.
    pub max_bond: usize,
    /// Relative discarded weight allowed per split.
    pub svd_cutoff: f64,
    /// Trotter step (real or imaginary).
    pub dt: f64,
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        Self {
            max_bond: 64,
            svd_cutoff: 1e-12,
            dt: 0.01,
        }
    }
}

impl TruncationPolicy {
    pub fn new(max_bond: usize, svd_cutoff: f64, dt: f64) -> Result<Self> {
        let p = Self {
            max_bond,
            svd_cutoff,
            dt,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_bond < 1 {
            return Err(param_err("max_bond must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.svd_cutoff) {
            return Err(param_err(format!("svd_cutoff {} outside [0, 1)", self.svd_cutoff)));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(param_err(format!("dt = {} must be positive", self.dt)));
        }
        Ok(())
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub(crate) fn truncation(&self) -> Truncation {
        Truncation {
            max_bond: self.max_bond,
            cutoff: self.svd_cutoff,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpsState {
    pub(crate) train: Train,
    /// Discarded weight accumulated per step.
    pub truncation_log: Vec<f64>,
}

/// Product Fock state with the given occupations.
pub fn product_state(occupations: &[usize], d: usize) -> Result<MpsState> {
    MpsState::product(occupations, d)
}

impl MpsState {
    pub fn product(occupations: &[usize], d: usize) -> Result<Self> {
        if d < 2 {
            return Err(param_err(format!("local cutoff d = {d} < 2")));
        }
        if let Some(n) = occupations.iter().find(|&&n| n >= d) {
            return Err(param_err(format!("occupation {n} not below cutoff {d}")));
        }
        let sites = occupations
            .iter()
            .map(|&n| {
                let mut t = Tensor::zeros(&[1, d, 1, 1]);
                t.set(&[0, n, 0, 0], c64::new(1.0, 0.0));
                t
            })
            .collect();
        let mut train = Train::new(sites)?;
        train.center = Some(0);
        Ok(Self {
            train,
            truncation_log: Vec::new(),
        })
    }

    /// Unit filling, `|1⟩ ⊗ ... ⊗ |1⟩`.
    pub fn unit_filling(length: usize, d: usize) -> Result<Self> {
        Self::product(&vec![1; length], d)
    }

    /// Equal superposition of all local occupations on every site.
    pub fn uniform_superposition(length: usize, d: usize) -> Result<Self> {
        let amp = c64::new(1.0 / (d as f64).sqrt(), 0.0);
        let sites = (0..length)
            .map(|_| Tensor::from_fn(&[1, d, 1, 1], |_| amp))
            .collect();
        let mut train = Train::new(sites)?;
        train.center = Some(0);
        Ok(Self {
            train,
            truncation_log: Vec::new(),
        })
    }

    /// Build from rank-3 `(left, physical, right)` tensors.
    pub fn from_tensors(tensors: Vec<Tensor>) -> Result<Self> {
        let sites = tensors
            .into_iter()
            .map(|t| {
                if t.rank() != 3 {
                    return Err(crate::error::dim_err(format!("MPS tensor of rank {}", t.rank())));
                }
                let s = t.shape().to_vec();
                t.reshape(&[s[0], s[1], 1, s[2]])
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            train: Train::new(sites)?,
            truncation_log: Vec::new(),
        })
    }

    /// Rank-3 `(left, physical, right)` copies of the site tensors.
    pub fn tensors(&self) -> Vec<Tensor> {
        self.train
            .sites
            .iter()
            .map(|t| {
                let s = t.shape();
                t.clone().reshape(&[s[0], s[1], s[3]]).expect("purification extent 1")
            })
            .collect()
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

    pub fn norm(&self) -> f64 {
        self.train.norm_sqr().max(0.0).sqrt()
    }

    pub fn normalize(&mut self) -> Result<f64> {
        self.train.normalize()
    }

    pub fn accumulated_discarded_weight(&self) -> f64 {
        self.truncation_log.iter().sum()
    }

    /// `⟨Ψ|H|Ψ⟩` summed bond by bond.
    pub fn energy(&self, params: &ModelParams) -> Result<f64> {
        energy(&self.train, params)
    }

    /// `⟨a|b⟩`.
    pub fn overlap(&self, other: &MpsState) -> Result<c64> {
        train::overlap(&self.train, &other.train)
    }

    /// Dense amplitude vector, site 0 most significant.
    pub fn to_dense(&self) -> Result<Vec<c64>> {
        self.train.to_dense()
    }
}

pub(crate) fn energy(t: &Train, params: &ModelParams) -> Result<f64> {
    if params.length != t.len() || params.cutoff != t.phys() {
        return Err(param_err("model does not match the state"));
    }
    let left = t.left_envs();
    let right = t.right_envs();
    let mut e = 0.0;
    for b in 0..t.len() - 1 {
        let h = bond_hamiltonian_array(params, b)?;
        e += t.bond_expectation(b, h.view(), &left, &right)?.re;
    }
    Ok(e)
}

pub(crate) fn ops_to_arrays(ops: &[(usize, Tensor)]) -> Result<Vec<(usize, Array2<c64>)>> {
    ops.iter()
        .map(|(s, m)| {
            if m.rank() != 2 {
                return Err(crate::error::dim_err("site operators must be matrices"));
            }
            Ok((*s, to_array(m)))
        })
        .collect()
}

pub(crate) fn moments(t: &Train) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = t.phys();
    let n = Array2::from_shape_fn((d, d), |(i, j)| {
        if i == j { c64::new(i as f64, 0.0) } else { c64::new(0.0, 0.0) }
    });
    let n2 = n.dot(&n);
    let norm = t.norm_sqr();
    let mut first = Vec::with_capacity(t.len());
    let mut second = Vec::with_capacity(t.len());
    let left = t.left_envs();
    let right = t.right_envs();
    for j in 0..t.len() {
        let e1 = train::transfer(&left[j], &t.sites[j], Some(n.view()));
        let e2 = train::transfer(&left[j], &t.sites[j], Some(n2.view()));
        let close = |e: &Array2<c64>| -> f64 {
            e.iter().zip(right[j + 1].iter()).map(|(a, b)| a * b).sum::<c64>().re
        };
        first.push(close(&e1) / norm);
        second.push(close(&e2) / norm);
    }
    Ok((first, second))
}

pub(crate) fn correlations(t: &Train) -> Result<Array2<c64>> {
    let (b, _, _) = local_operators(t.phys())?;
    let norm = t.norm_sqr();
    Ok(t.two_point_matrix(&to_array(&b))? / c64::new(norm, 0.0))
}

impl ManyBodyState for MpsState {
    fn length(&self) -> usize {
        self.train.len()
    }

    fn local_dim(&self) -> usize {
        self.train.phys()
    }

    fn expectation(&self, ops: &[(usize, Tensor)]) -> Result<c64> {
        self.train.expectation(&ops_to_arrays(ops)?)
    }

    fn correlation_matrix(&self) -> Result<Array2<c64>> {
        correlations(&self.train)
    }

    fn local_moments(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        moments(&self.train)
    }
}

/// `⟨Ψ| Π ops |Ψ⟩` for operators on strictly increasing sites.
pub fn expectation(state: &MpsState, ops: &[(usize, Tensor)]) -> Result<c64> {
    state.expectation(ops)
}

/// A layer sequence is imaginary-time when every prefactor is real.
fn is_imaginary_time(layers: &[GateLayer]) -> bool {
    layers.iter().all(|l| l.prefactor.im == 0.0)
}

/// One Trotter step. Imaginary-time layers renormalize the state after
/// every layer; real-time layers leave the norm to the truncation.
pub fn tebd_step(state: &mut MpsState, layers: &[GateLayer], policy: &TruncationPolicy) -> Result<()> {
    policy.validate()?;
    let normalize = is_imaginary_time(layers);
    let w = state.train.apply_layers(layers, policy.truncation(), normalize)?;
    state.truncation_log.push(w);
    Ok(())
}

/// Evolve under the linear ramp, with the coupling of each step taken at
/// its midpoint and step count `ceil(τ_Q / dt)`.
pub fn real_evolve(
    state: &mut MpsState,
    params: &ModelParams,
    protocol: &QuenchProtocol,
    policy: &TruncationPolicy,
) -> Result<()> {
    policy.validate()?;
    let log = evolve_ramp(&mut state.train, params, protocol, policy)?;
    state.truncation_log.extend(log);
    Ok(())
}

pub(crate) fn evolve_ramp(
    t: &mut Train,
    params: &ModelParams,
    protocol: &QuenchProtocol,
    policy: &TruncationPolicy,
) -> Result<Vec<f64>> {
    protocol.validate()?;
    let n = protocol.step_count(policy.dt);
    evolve_ramp_steps(t, params, protocol, policy, 0..n, false, true)
}

/// Steps `range` of the ramp discretized with `protocol.step_count(dt)`
/// steps; `pending` and `close` as in [`train::run_steps_from`].
pub(crate) fn evolve_ramp_steps(
    t: &mut Train,
    params: &ModelParams,
    protocol: &QuenchProtocol,
    policy: &TruncationPolicy,
    range: std::ops::Range<usize>,
    pending: bool,
    close: bool,
) -> Result<Vec<f64>> {
    protocol.validate()?;
    let n = protocol.step_count(policy.dt);
    if range.end > n {
        return Err(param_err(format!("step {} beyond the {n} ramp steps", range.end)));
    }
    let h = protocol.tau_q / n as f64;
    let (t0, _) = protocol.time_window();
    let make = |s: usize| {
        let j = protocol.ramp_value_clamped(t0 + (s as f64 + 0.5) * h);
        trotter_layers(&params.with_hopping(j), c64::new(0.0, -h))
    };
    train::run_steps_from(t, range.clone(), make, policy.truncation(), false, pending, close)
}

/// Tolerance on energy increase per imaginary-time step.
pub const ENERGY_TOLERANCE: f64 = 1e-9;

/// Default imaginary-time schedule `(dβ, max steps)`.
pub fn default_schedule() -> Vec<(f64, usize)> {
    vec![(0.1, 2000), (0.01, 2000), (0.001, 2000)]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceWarning {
    pub message: String,
    pub energy_trace: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct GroundState {
    pub state: MpsState,
    pub energy: f64,
    /// Energy after every chunk of steps, across all stages.
    pub energy_trace: Vec<f64>,
    pub warnings: Vec<ConvergenceWarning>,
}

/// Steps between energy evaluations.
const CHUNK: usize = 5;
/// Imaginary time after which round-off in other particle-number sectors
/// is filtered out again.
const FILTER_INTERVAL: f64 = 5.0;

/// Imaginary-time ground state in the unit-filling sector.
pub fn ground_state(
    params: &ModelParams,
    policy: &TruncationPolicy,
    schedule: &[(f64, usize)],
) -> Result<GroundState> {
    let start = MpsState::unit_filling(params.length, params.cutoff)?;
    ground_state_from(start, params, policy, schedule)
}

/// Imaginary-time projection of `initial` (stays in its symmetry sectors).
pub fn ground_state_from(
    initial: MpsState,
    params: &ModelParams,
    policy: &TruncationPolicy,
    schedule: &[(f64, usize)],
) -> Result<GroundState> {
    imaginary_time(initial, params, policy, schedule, None)
}

/// Particle number of a normalized state if it lies in one sector.
fn definite_number(train: &Train, trunc: Truncation) -> Result<Option<usize>> {
    let (occ, _) = moments(train)?;
    let n0 = occ.iter().sum::<f64>().round() as usize;
    let mut filtered = train.clone();
    train::number_filter(&mut filtered, n0, trunc)?;
    let kept = train::overlap(&filtered, &filtered)?.re;
    Ok(((kept - 1.0).abs() < 1e-8).then_some(n0))
}

/// Imaginary-time evolution, optionally projecting out a reference state
/// after every chunk.
fn imaginary_time(
    mut state: MpsState,
    params: &ModelParams,
    policy: &TruncationPolicy,
    schedule: &[(f64, usize)],
    project_out: Option<&MpsState>,
) -> Result<GroundState> {
    params.validate()?;
    policy.validate()?;
    check_schedule(schedule)?;
    if state.train.len() != params.length || state.train.phys() != params.cutoff {
        return Err(param_err("initial state does not match the model"));
    }
    let trunc = policy.truncation();
    if let Some(r) = project_out {
        project(&mut state, r, trunc)?;
    }
    state.train.normalize()?;
    let sector = definite_number(&state.train, trunc)?;
    let mut since_filter = 0.0;
    let mut trace = vec![state.energy(params)?];
    let mut warnings = Vec::new();
    for &(dbeta, max_steps) in schedule {
        let layers = trotter_layers(params, c64::new(-dbeta, 0.0))?;
        let mut done = 0;
        while done < max_steps {
            let chunk = CHUNK.min(max_steps - done);
            let seq: Vec<GateLayer> = (0..chunk).flat_map(|_| layers.iter().cloned()).collect();
            let w = state.train.apply_layers(&seq, trunc, true)?;
            state.truncation_log.push(w);
            since_filter += dbeta * chunk as f64;
            if since_filter >= FILTER_INTERVAL {
                if let Some(n0) = sector {
                    let w = train::number_filter(&mut state.train, n0, trunc)?;
                    state.truncation_log.push(w);
                    state.train.normalize()?;
                }
                since_filter = 0.0;
            }
            if let Some(r) = project_out {
                project(&mut state, r, trunc)?;
            }
            done += chunk;
            let e = state.energy(params)?;
            let prev = *trace.last().unwrap_or(&e);
            trace.push(e);
            let per_step = (e - prev) / chunk as f64;
            if per_step > ENERGY_TOLERANCE {
                let w = ConvergenceWarning {
                    message: format!("energy rose by {per_step:e} per step at dβ = {dbeta}"),
                    energy_trace: trace.clone(),
                };
                log::warn!("{}", w.message);
                warnings.push(w);
            }
            if per_step.abs() < ENERGY_TOLERANCE {
                break;
            }
        }
    }
    let energy = *trace.last().unwrap();
    Ok(GroundState {
        state,
        energy,
        energy_trace: trace,
        warnings,
    })
}

fn check_schedule(schedule: &[(f64, usize)]) -> Result<()> {
    if schedule.is_empty() {
        return Err(param_err("imaginary-time schedule is empty"));
    }
    for w in schedule.windows(2) {
        if w[1].0 > w[0].0 {
            return Err(param_err("schedule steps dβ must be non-increasing"));
        }
    }
    if schedule.iter().any(|&(db, _)| !(db > 0.0)) {
        return Err(param_err("schedule steps dβ must be positive"));
    }
    Ok(())
}

/// `|φ⟩ ← |φ⟩ - ⟨r|φ⟩ |r⟩`, compressed and renormalized.
fn project(state: &mut MpsState, reference: &MpsState, trunc: Truncation) -> Result<()> {
    let ov = train::overlap(&reference.train, &state.train)?;
    let rn = reference.train.norm_sqr();
    let mut sum = train::direct_sum(&state.train, c64::new(1.0, 0.0), &reference.train, -ov / rn)?;
    let w = sum.compress(trunc)?;
    sum.normalize()?;
    state.train = sum;
    state.truncation_log.push(w);
    Ok(())
}

/// Largest overlap with the ground state tolerated in the gap estimate.
pub const LEAKAGE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct GapEstimate {
    pub gap: f64,
    pub ground_energy: f64,
    pub excited_energy: f64,
    /// `|⟨ψ_0|ψ_1⟩|`; zero when the dense oracle was used.
    pub leakage: f64,
    pub used_dense_oracle: bool,
    pub warnings: Vec<ConvergenceWarning>,
}

/// Gap above the ground state inside the unit-filling sector.
pub fn intra_sector_gap(params: &ModelParams, policy: &TruncationPolicy) -> Result<f64> {
    Ok(gap_estimate(params, policy, &default_schedule())?.gap)
}

pub fn gap_estimate(
    params: &ModelParams,
    policy: &TruncationPolicy,
    schedule: &[(f64, usize)],
) -> Result<GapEstimate> {
    params.validate()?;
    let dense_ok = params.length <= 8
        && (params.cutoff as u128).pow(params.length as u32) <= crate::oracles::DIMENSION_GUARD as u128;
    if dense_ok {
        let s = crate::oracles::ed_spectrum(params, Some(params.length))?;
        return Ok(GapEstimate {
            gap: s.energies[1] - s.energies[0],
            ground_energy: s.energies[0],
            excited_energy: s.energies[1],
            leakage: 0.0,
            used_dense_oracle: true,
            warnings: Vec::new(),
        });
    }
    let gs = ground_state(params, policy, schedule)?;
    projected_gap(&gs, params, policy, schedule)
}

/// Gap above an already converged unit-filling ground state, found by
/// imaginary time with that state projected out.
pub fn projected_gap(
    gs: &GroundState,
    params: &ModelParams,
    policy: &TruncationPolicy,
    schedule: &[(f64, usize)],
) -> Result<GapEstimate> {
    // one particle moved off the first site: overlaps both reflection sectors
    let mut occ = vec![1; params.length];
    occ[0] = 2;
    occ[1] = 0;
    let start = MpsState::product(&occ, params.cutoff)?;
    let ex = imaginary_time(start, params, policy, schedule, Some(&gs.state))?;
    let leakage = ex.state.overlap(&gs.state)?.norm();
    let mut warnings = gs.warnings.clone();
    warnings.extend(ex.warnings);
    if leakage > LEAKAGE_TOLERANCE {
        let w = ConvergenceWarning {
            message: format!("excited state overlaps the ground state by {leakage:e}"),
            energy_trace: ex.energy_trace.clone(),
        };
        log::warn!("{}", w.message);
        warnings.push(w);
    }
    Ok(GapEstimate {
        gap: ex.energy - gs.energy,
        ground_energy: gs.energy,
        excited_energy: ex.energy,
        leakage,
        used_dense_oracle: false,
        warnings,
    })
}
