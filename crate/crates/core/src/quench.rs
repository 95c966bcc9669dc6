//! Linear hopping ramps, freeze-out analysis and Kibble-Zurek exponent fits.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{param_err, Error, Result};
use crate::checkpoint::{Checkpoint, CheckpointState};
use crate::lptn;
use crate::model::ModelParams;
use crate::mps::{self, ConvergenceWarning, MpsState, TruncationPolicy};
use crate::observables::{finite_size_xi, least_squares_line, ManyBodyState};
use crate::c64;

/// Critical coupling of the unit-filling transition used as the ramp midpoint.
pub const DEFAULT_J_CRITICAL: f64 = 0.30;
/// Default `τ_Q` window of the Kibble-Zurek fit.
pub const DEFAULT_KZ_WINDOW: (f64, f64) = (2.0, 15.0);
/// Couplings sampled in `[0, J_c]` for the freeze-out gap curve.
pub const GAP_GRID_POINTS: usize = 25;

const FREEZE_OUT_GRID: usize = 4001;
const BISECTION_TOLERANCE: f64 = 1e-6;

/// `J(t) = J_c (1 + 2t / τ_Q)` on `[-τ_Q/2, τ_Q/2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuenchProtocol {
    pub tau_q: f64,
    pub j_critical: f64,
    /// Temperature of the initial `J = 0` state; `0` is the pure protocol.
    pub initial_temperature: f64,
}

impl QuenchProtocol {
    pub fn new(tau_q: f64, j_critical: f64, initial_temperature: f64) -> Result<Self> {
        let p = Self {
            tau_q,
            j_critical,
            initial_temperature,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau_q > 0.0) || !self.tau_q.is_finite() {
            return Err(param_err(format!("τ_Q = {} must be positive", self.tau_q)));
        }
        if !(self.j_critical > 0.0) || !self.j_critical.is_finite() {
            return Err(param_err(format!("J_c = {} must be positive", self.j_critical)));
        }
        if !(self.initial_temperature >= 0.0) {
            return Err(param_err(format!(
                "T = {} must be non-negative",
                self.initial_temperature
            )));
        }
        Ok(())
    }

    pub fn time_window(&self) -> (f64, f64) {
        (-self.tau_q / 2.0, self.tau_q / 2.0)
    }

    pub fn ramp_value(&self, t: f64) -> Result<f64> {
        let (lo, hi) = self.time_window();
        if !(t >= lo && t <= hi) {
            return Err(param_err(format!("t = {t} outside the ramp window [{lo}, {hi}]")));
        }
        Ok(self.ramp_value_clamped(t))
    }

    /// Ramp value with `t` clamped into the window.
    pub fn ramp_value_clamped(&self, t: f64) -> f64 {
        let (lo, hi) = self.time_window();
        let t = t.clamp(lo, hi);
        self.j_critical * (1.0 + 2.0 * t / self.tau_q)
    }

    /// Inverse of the ramp, `t(J)`.
    pub fn time_of(&self, coupling: f64) -> f64 {
        (coupling / self.j_critical - 1.0) * self.tau_q / 2.0
    }

    /// Number of equal steps of size at most `dt` covering the window.
    pub fn step_count(&self, dt: f64) -> usize {
        ((self.tau_q / dt - 1e-9).ceil() as usize).max(1)
    }
}

/// Equilibrium gap samples `ΔE(J)`, interpolated linearly in `ln ΔE`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapCurve {
    pub couplings: Vec<f64>,
    pub gaps: Vec<f64>,
}

impl GapCurve {
    pub fn new(mut samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(param_err("a gap curve needs at least two samples"));
        }
        samples.sort_by(|a, b| a.0.total_cmp(&b.0));
        if let Some(bad) = samples.iter().find(|s| !(s.1 > 0.0) || !s.1.is_finite()) {
            return Err(Error::Domain(format!("gap {} at J = {} is not positive", bad.1, bad.0)));
        }
        if samples.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(param_err("gap curve couplings must be distinct"));
        }
        Ok(Self {
            couplings: samples.iter().map(|s| s.0).collect(),
            gaps: samples.iter().map(|s| s.1).collect(),
        })
    }

    pub fn from_fn(lo: f64, hi: f64, points: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        if points < 2 || !(hi > lo) {
            return Err(param_err("need two or more points on a non-empty interval"));
        }
        let h = (hi - lo) / (points - 1) as f64;
        Self::new((0..points).map(|i| {
            let j = if i + 1 == points { hi } else { lo + i as f64 * h };
            (j, f(j))
        }).collect())
    }

    pub fn covers(&self, lo: f64, hi: f64) -> bool {
        let eps = 1e-12 * (1.0 + hi.abs());
        self.couplings[0] <= lo + eps && *self.couplings.last().unwrap() >= hi - eps
    }

    pub fn gap_at(&self, coupling: f64) -> Result<f64> {
        let n = self.couplings.len();
        let (first, last) = (self.couplings[0], self.couplings[n - 1]);
        let eps = 1e-12 * (1.0 + last.abs());
        if coupling < first - eps || coupling > last + eps {
            return Err(Error::Domain(format!(
                "J = {coupling} outside the sampled range [{first}, {last}]"
            )));
        }
        let c = coupling.clamp(first, last);
        let i = self.couplings.partition_point(|&x| x <= c).clamp(1, n - 1);
        let (x0, x1) = (self.couplings[i - 1], self.couplings[i]);
        let (y0, y1) = (self.gaps[i - 1].ln(), self.gaps[i].ln());
        let w = (c - x0) / (x1 - x0);
        Ok((y0 + w * (y1 - y0)).exp())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimescaleRecord {
    pub times: Vec<f64>,
    /// `1 / ΔE(J(t))`.
    pub tau_r: Vec<f64>,
    /// `|t|`.
    pub tau_d: Vec<f64>,
    pub freeze_out_time: Option<f64>,
    pub freeze_out_coupling: Option<f64>,
}

/// Earliest crossing of the relaxation and driving timescales on the
/// negative half of the ramp.
pub fn freeze_out(gap_curve: &GapCurve, protocol: &QuenchProtocol) -> Result<TimescaleRecord> {
    protocol.validate()?;
    if !gap_curve.covers(0.0, protocol.j_critical) {
        return Err(Error::Domain(format!(
            "gap curve must cover J ∈ [0, {}]",
            protocol.j_critical
        )));
    }
    let lo = -protocol.tau_q / 2.0;
    let times: Vec<f64> = (0..FREEZE_OUT_GRID)
        .map(|i| lo * (1.0 - i as f64 / (FREEZE_OUT_GRID - 1) as f64))
        .collect();
    let tau_r_at = |t: f64| -> Result<f64> {
        Ok(1.0 / gap_curve.gap_at(protocol.ramp_value_clamped(t))?)
    };
    let tau_r = times.iter().map(|&t| tau_r_at(t)).collect::<Result<Vec<_>>>()?;
    let tau_d: Vec<f64> = times.iter().map(|t| t.abs()).collect();
    let f: Vec<f64> = tau_r.iter().zip(&tau_d).map(|(r, d)| r - d).collect();

    let mut root = None;
    for i in 0..times.len() {
        if f[i] == 0.0 {
            root = Some(times[i]);
            break;
        }
        if i + 1 < times.len() && (f[i] < 0.0) != (f[i + 1] < 0.0) && f[i + 1] != 0.0 {
            let (mut a, mut b) = (times[i], times[i + 1]);
            let fa_neg = f[i] < 0.0;
            while b - a > BISECTION_TOLERANCE {
                let m = 0.5 * (a + b);
                let fm = tau_r_at(m)? - m.abs();
                if fm == 0.0 {
                    a = m;
                    b = m;
                } else if (fm < 0.0) == fa_neg {
                    a = m;
                } else {
                    b = m;
                }
            }
            root = Some(0.5 * (a + b));
            break;
        }
    }
    Ok(TimescaleRecord {
        times,
        tau_r,
        tau_d,
        freeze_out_time: root,
        freeze_out_coupling: root.map(|t| protocol.ramp_value_clamped(t)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveExponents {
    pub nu_eff: f64,
    pub nu_error: f64,
    pub znu_eff: f64,
    pub znu_error: f64,
    pub kappa_predicted: f64,
    pub kappa_error: f64,
}

/// Power-law slopes of `ξ_L` and `ΔE` against `|J - J_c|` inside `window`.
pub fn effective_exponents(
    xi_curve: &[(f64, f64)],
    gap_curve: &[(f64, f64)],
    window: (f64, f64),
    j_critical: f64,
) -> Result<EffectiveExponents> {
    let (lo, hi) = window;
    if !(hi > lo) {
        return Err(param_err(format!("empty fit window [{lo}, {hi}]")));
    }
    if lo <= j_critical && j_critical <= hi {
        return Err(Error::SingularAbscissa {
            lo,
            hi,
            critical: j_critical,
        });
    }
    let slope = |curve: &[(f64, f64)], what: &str| -> Result<(f64, f64)> {
        let pts: Vec<&(f64, f64)> = curve.iter().filter(|p| p.0 >= lo && p.0 <= hi).collect();
        if let Some(p) = pts.iter().find(|p| !(p.1 > 0.0)) {
            return Err(Error::Domain(format!("{what} sample {} at J = {} is not positive", p.1, p.0)));
        }
        let x: Vec<f64> = pts.iter().map(|p| (p.0 - j_critical).abs().ln()).collect();
        let y: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
        let (s, _, se) = least_squares_line(&x, &y)?;
        Ok((s, se))
    };
    let (sx, sx_err) = slope(xi_curve, "ξ_L")?;
    let (znu, znu_err) = slope(gap_curve, "gap")?;
    let nu = -sx;
    let kappa = nu / (1.0 + znu);
    let kappa_error =
        ((sx_err / (1.0 + znu)).powi(2) + (nu * znu_err / (1.0 + znu).powi(2)).powi(2)).sqrt();
    Ok(EffectiveExponents {
        nu_eff: nu,
        nu_error: sx_err,
        znu_eff: znu,
        znu_error: znu_err,
        kappa_predicted: kappa,
        kappa_error,
    })
}

#[derive(Debug, Clone)]
pub struct QuenchOutcome {
    pub xi_fin: f64,
    pub correlations: Array2<c64>,
    pub accumulated_discarded_weight: f64,
    pub final_bond_dims: Vec<usize>,
    pub warnings: Vec<ConvergenceWarning>,
}

/// A ramp in progress, advanced in blocks of steps and convertible to and
/// from a checkpoint.
#[derive(Debug, Clone)]
pub struct QuenchRunner {
    pub params: ModelParams,
    pub protocol: QuenchProtocol,
    pub policy: TruncationPolicy,
    state: CheckpointState,
    step: usize,
    pending: bool,
    total: usize,
}

impl QuenchRunner {
    /// Prepare the `J = 0` initial state: the unit-filling Mott product at
    /// `T = 0`, the decoupled Gibbs state at finite `T`, the identity at
    /// `T = ∞`.
    pub fn new(params: &ModelParams, protocol: &QuenchProtocol, policy: &TruncationPolicy) -> Result<Self> {
        params.validate()?;
        protocol.validate()?;
        policy.validate()?;
        let t = protocol.initial_temperature;
        let state = if t == 0.0 {
            CheckpointState::Mps(MpsState::unit_filling(params.length, params.cutoff)?)
        } else if t.is_infinite() {
            CheckpointState::Lptn(lptn::infinite_temperature_state(params.length, params.cutoff)?)
        } else {
            CheckpointState::Lptn(lptn::zero_hopping_thermal_state(&params.with_hopping(0.0), 1.0 / t)?)
        };
        Ok(Self {
            params: *params,
            protocol: *protocol,
            policy: *policy,
            state,
            step: 0,
            pending: false,
            total: protocol.step_count(policy.dt),
        })
    }

    pub fn from_checkpoint(cp: &Checkpoint) -> Result<Self> {
        let h = &cp.header;
        let protocol = h
            .protocol
            .ok_or_else(|| Error::Format("checkpoint carries no quench protocol".into()))?;
        let total = protocol.step_count(h.policy.dt);
        if h.step > total || (h.pending_half_step && h.step == 0) {
            return Err(Error::Format(format!("inconsistent step counter {}", h.step)));
        }
        Ok(Self {
            params: h.params,
            protocol,
            policy: h.policy,
            state: cp.state()?,
            step: h.step,
            pending: h.pending_half_step,
            total,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut cp = Checkpoint::new(&self.state, self.params, self.policy, Some(self.protocol), self.step);
        cp.header.pending_half_step = self.pending;
        cp
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn total_steps(&self) -> usize {
        self.total
    }

    pub fn is_done(&self) -> bool {
        self.step == self.total && !self.pending
    }

    /// Advance by up to `steps` ramp steps. The closing half-layer of the
    /// last step is held back so that a resumed run fuses exactly like an
    /// uninterrupted one.
    pub fn advance(&mut self, steps: usize) -> Result<()> {
        let end = self.step.saturating_add(steps).min(self.total);
        self.evolve(self.step..end, false)?;
        self.pending |= end > self.step;
        self.step = end;
        Ok(())
    }

    fn evolve(&mut self, range: std::ops::Range<usize>, close: bool) -> Result<()> {
        let start = self.params.with_hopping(0.0);
        let (train, log) = match &mut self.state {
            CheckpointState::Mps(s) => (&mut s.train, &mut s.truncation_log),
            CheckpointState::Lptn(s) => (&mut s.train, &mut s.truncation_log),
        };
        let w = mps::evolve_ramp_steps(train, &start, &self.protocol, &self.policy, range, self.pending, close)?;
        log.extend(w);
        Ok(())
    }

    /// Apply any pending half-layer and measure the final correlation
    /// length; errors if the ramp is unfinished.
    pub fn finish(&mut self) -> Result<QuenchOutcome> {
        if self.step != self.total {
            return Err(param_err(format!("ramp stopped at step {} of {}", self.step, self.total)));
        }
        if self.pending {
            self.evolve(self.step..self.step, true)?;
            self.pending = false;
        }
        let (correlations, discarded, bonds, mut warnings) = match &self.state {
            CheckpointState::Mps(s) => {
                (s.correlation_matrix()?, s.accumulated_discarded_weight(), s.bond_dims(), Vec::new())
            }
            CheckpointState::Lptn(s) => (
                s.correlation_matrix()?,
                s.accumulated_discarded_weight(),
                s.bond_dims(),
                s.warnings.clone(),
            ),
        };
        let tau = self.protocol.tau_q;
        if discarded > DISCARDED_WEIGHT_WARNING {
            warnings.push(ConvergenceWarning {
                message: format!("discarded weight {discarded:e}"),
                energy_trace: Vec::new(),
            });
        }
        for w in &mut warnings {
            w.message = format!("τ_Q = {tau}: {}", w.message);
            log::warn!("{}", w.message);
        }
        Ok(QuenchOutcome {
            xi_fin: finite_size_xi(&correlations)?,
            correlations,
            accumulated_discarded_weight: discarded,
            final_bond_dims: bonds,
            warnings,
        })
    }
}

/// Accumulated discarded weight above which a quench result is flagged.
pub const DISCARDED_WEIGHT_WARNING: f64 = 1e-4;

/// Prepare the initial state at `J = 0`, ramp across the window and measure
/// the final correlation length.
pub fn run_quench(
    params: &ModelParams,
    protocol: &QuenchProtocol,
    policy: &TruncationPolicy,
) -> Result<QuenchOutcome> {
    let mut r = QuenchRunner::new(params, protocol, policy)?;
    r.advance(r.total_steps())?;
    r.finish()
}

/// Log-log slope of `ξ_fin` against `τ_Q` inside `window`, with its
/// standard error.
pub fn fit_kz_exponent(points: &[(f64, f64)], window: (f64, f64)) -> Result<(f64, f64)> {
    let pts: Vec<&(f64, f64)> = points
        .iter()
        .filter(|p| p.0 >= window.0 && p.0 <= window.1)
        .collect();
    if pts.len() < 4 {
        return Err(param_err(format!(
            "{} points inside [{}, {}], need at least 4",
            pts.len(),
            window.0,
            window.1
        )));
    }
    if let Some(p) = pts.iter().find(|p| !(p.0 > 0.0) || !(p.1 > 0.0)) {
        return Err(Error::Domain(format!("non-positive point ({}, {})", p.0, p.1)));
    }
    let x: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let (s, _, se) = least_squares_line(&x, &y)?;
    Ok((s, se))
}

/// `κ(T) = κ₀ (1 - e^{-μ/T})`.
pub fn arrhenius_prediction(kappa_zero: f64, mu: f64, temperatures: &[f64]) -> Result<Vec<f64>> {
    if !(kappa_zero > 0.0) || !(mu > 0.0) {
        return Err(param_err("κ₀ and μ must be positive"));
    }
    temperatures
        .iter()
        .map(|&t| {
            if !(t >= 0.0) {
                return Err(param_err(format!("T = {t} must be non-negative")));
            }
            Ok(if t == 0.0 {
                kappa_zero
            } else {
                kappa_zero * (1.0 - (-mu / t).exp())
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KzAnalysis {
    pub nu_eff: f64,
    pub znu_eff: f64,
    pub kappa_predicted: f64,
    pub kappa_fitted: f64,
    pub kappa_zero: f64,
    pub delta_kappa: f64,
    pub activation_energy: f64,
    pub nu: Option<f64>,
    pub z: Option<f64>,
}

impl KzAnalysis {
    pub fn new(
        exponents: &EffectiveExponents,
        kappa_fitted: f64,
        kappa_zero: f64,
        activation_energy: f64,
    ) -> Self {
        Self {
            nu_eff: exponents.nu_eff,
            znu_eff: exponents.znu_eff,
            kappa_predicted: exponents.kappa_predicted,
            kappa_fitted,
            kappa_zero,
            delta_kappa: kappa_zero - kappa_fitted,
            activation_energy,
            nu: None,
            z: None,
        }
    }
}
