//! Acceptance checks, each reporting one pass/fail line.
//!
//! Every check has a full setting and a reduced one for runs on small
//! machines; reduced lines are marked as such.

use std::sync::{Mutex, OnceLock};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, CheckpointState};
use crate::config::{ExperimentConfig, Mode};
use crate::error::{param_err, Result};
use crate::linalg::{eigh, max_abs};
use crate::lptn::{cool, infinite_temperature_state, real_evolve as lptn_evolve, LptnState};
use crate::model::ModelParams;
use crate::mps::{
    default_schedule, ground_state, ground_state_from, projected_gap, real_evolve, MpsState,
    TruncationPolicy,
};
use crate::observables::{center_site, fit_correlation_decay, finite_size_xi, xi_l_bound, ManyBodyState};
use crate::oracles::{dense_hamiltonian, ed_propagate, DenseInitial, ed_gibbs_observables, ed_sector_gap, product_vector, FockBasis};
use crate::quench::{
    effective_exponents, fit_kz_exponent, freeze_out, run_quench, GapCurve, QuenchProtocol, GAP_GRID_POINTS,
};
use crate::{c64, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub number: usize,
    pub passed: bool,
    pub line: String,
}

fn report(number: usize, name: &str, passed: bool, reduced: bool, detail: String) -> CriterionReport {
    let tag = if reduced { " (reduced)" } else { "" };
    let verdict = if passed { "PASS" } else { "FAIL" };
    CriterionReport {
        number,
        passed,
        line: format!("criterion {number} [{name}]{tag}: {verdict} {detail}"),
    }
}

/// Run acceptance check `number` (1 to 11) with the settings of `config`.
pub fn run_criterion(number: usize, config: &ExperimentConfig) -> Result<CriterionReport> {
    let reduced = config.validate.reduced;
    match number {
        1 => thermal_oracle(reduced),
        2 => dynamics_oracle(),
        3 => trotter_order(),
        4 => sudden_quench_law(),
        5 => saturation_bound(reduced),
        6 => zero_temperature_kz(reduced),
        7 => effective_exponent_check(reduced),
        8 => freeze_out_boundary(),
        9 => arrhenius_trend(reduced),
        10 => melting_plateau(reduced),
        11 => property_suites(config.seed),
        n => Err(param_err(format!("no acceptance criterion {n}"))),
    }
}

/// Criterion 1: cooled purifications against the dense Gibbs ensemble.
pub fn thermal_oracle(reduced: bool) -> Result<CriterionReport> {
    let cases: &[(usize, usize)] = if reduced { &[(4, 3)] } else { &[(5, 3), (4, 4)] };
    // Only the bond cap truncates: a weight cutoff applied at every step adds
    // up over thousands of steps to errors well above the tolerance.
    let policy = TruncationPolicy {
        max_bond: 64,
        svd_cutoff: 0.0,
        dt: 0.005,
    };
    let mut worst: f64 = 0.0;
    for &(l, d) in cases {
        for j in [0.0, 0.05, 0.1, 0.2] {
            let p = ModelParams::new(j, 0.5, l, d);
            let mut s = infinite_temperature_state(l, d)?;
            for t in [0.5, 0.25, 0.1] {
                cool(&mut s, &p, 1.0 / t, &policy)?;
                let ed = ed_gibbs_observables(&p, t)?;
                let (n1, n2) = s.local_moments()?;
                let c = s.correlation_matrix()?;
                for i in 0..l {
                    let var = n2[i] - n1[i] * n1[i];
                    worst = worst
                        .max((n1[i] - ed.statistics.occupations[i]).abs())
                        .max((var - ed.statistics.variances[i]).abs());
                }
                let ref_c = ed.correlations.mapv(|x| c64::new(x, 0.0));
                worst = worst.max(max_abs(&(&c - &ref_c)));
            }
        }
    }
    let pass = worst <= 1e-5;
    Ok(report(1, "thermal oracle", pass, reduced, format!("max deviation {worst:.3e} (tolerance 1e-5)")))
}

fn unit_filling_vector(l: usize, d: usize) -> Result<ndarray::Array1<c64>> {
    let basis = FockBasis::new(l, d, None)?;
    product_vector(&basis, &vec![1; l])
}

/// Dense `J = 0` Gibbs state in the full Fock basis.
fn decoupled_gibbs_density(params: &ModelParams, t: f64) -> Result<Array2<c64>> {
    let basis = FockBasis::new(params.length, params.cutoff, None)?;
    let h = dense_hamiltonian(&params.with_hopping(0.0), &basis);
    let e0 = (0..basis.dim()).map(|i| h[(i, i)]).fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = (0..basis.dim()).map(|i| (-(h[(i, i)] - e0) / t).exp()).collect();
    let z: f64 = w.iter().sum();
    Ok(Array2::from_shape_fn((basis.dim(), basis.dim()), |(a, b)| {
        if a == b {
            c64::new(w[a] / z, 0.0)
        } else {
            c64::new(0.0, 0.0)
        }
    }))
}

fn dense_reference(params: &ModelParams, protocol: &QuenchProtocol) -> Result<Array2<c64>> {
    let t = protocol.initial_temperature;
    let initial = if t == 0.0 {
        DenseInitial::State(unit_filling_vector(params.length, params.cutoff)?)
    } else {
        DenseInitial::Density(decoupled_gibbs_density(params, t)?)
    };
    let steps = protocol.step_count(0.01) * 10;
    Ok(ed_propagate(params, &initial, protocol, steps)?.correlations)
}

/// Criterion 2: ramped tensor trains against dense propagation.
pub fn dynamics_oracle() -> Result<CriterionReport> {
    let p = ModelParams::new(0.0, 0.5, 4, 3);
    let policy = TruncationPolicy::default();
    let mut worst: f64 = 0.0;
    for t in [0.0, 0.5] {
        for tau in [0.5, 1.0, 2.0] {
            let q = QuenchProtocol::new(tau, 0.3, t)?;
            let got = run_quench(&p, &q, &policy)?.correlations;
            worst = worst.max(max_abs(&(&got - &dense_reference(&p, &q)?)));
        }
    }
    Ok(report(2, "dynamics oracle", worst <= 1e-4, false, format!("max deviation {worst:.3e} (tolerance 1e-4)")))
}

/// Criterion 3: second-order convergence of the ramp in the time step.
pub fn trotter_order() -> Result<CriterionReport> {
    let p = ModelParams::new(0.0, 0.5, 4, 3);
    let q = QuenchProtocol::new(1.0, 0.3, 0.0)?;
    let reference = dense_reference(&p, &q)?;
    let steps = [0.04, 0.02, 0.01];
    let mut errors = Vec::new();
    for dt in steps {
        let policy = TruncationPolicy::default().with_dt(dt);
        let got = run_quench(&p, &q, &policy)?.correlations;
        errors.push(max_abs(&(&got - &reference)));
    }
    let x: Vec<f64> = steps.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = errors.iter().map(|v| v.ln()).collect();
    let (slope, _, _) = crate::observables::least_squares_line(&x, &y)?;
    Ok(report(
        3,
        "Trotter order",
        (slope - 2.0).abs() <= 0.2,
        false,
        format!(
            "slope {slope:.3} from errors {} (target 2.0 ± 0.2)",
            errors.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>().join(", ")
        ),
    ))
}

/// Criterion 4: short ramps against `ξ_fin = 2 sqrt(J_c) τ_Q`.
pub fn sudden_quench_law() -> Result<CriterionReport> {
    let p = ModelParams::new(0.0, 0.5, 16, 5);
    let j_c = 0.3;
    let mut devs = Vec::new();
    for tau in [0.1, 0.05, 0.02] {
        let policy = TruncationPolicy::default().with_dt((tau / 10.0_f64).min(0.01));
        let xi = run_quench(&p, &QuenchProtocol::new(tau, j_c, 0.0)?, &policy)?.xi_fin;
        let formula = 2.0 * j_c.sqrt() * tau;
        devs.push((tau, xi, (xi - formula).abs() / formula));
    }
    let within = devs.iter().all(|d| d.2 <= 0.1);
    let shrinking = devs.windows(2).all(|w| w[1].2 <= w[0].2 + 1e-12);
    let detail = devs
        .iter()
        .map(|(t, xi, r)| format!("τ_Q={t}: ξ_fin={xi:.5} rel.dev {r:.3}"))
        .collect::<Vec<_>>()
        .join("; ");
    Ok(report(4, "sudden-quench law", within && shrinking, false, format!("{detail} (tolerance 0.10, shrinking)")))
}

/// Criterion 5: `ξ_L / L` of the deep superfluid against `1/sqrt(6)`.
pub fn saturation_bound(reduced: bool) -> Result<CriterionReport> {
    let l = 16;
    let d = if reduced { 4 } else { 5 };
    let p = ModelParams::new(5.0, 0.5, l, d);
    // Imaginary-time steps scaled down by the hopping J = 5.
    let schedule = [(0.02, 400), (0.005, 400)];
    let gs = ground_state(&p, &TruncationPolicy::default(), &schedule)?;
    let ratio = finite_size_xi(&gs.state.correlation_matrix()?)? / l as f64;
    let target = 1.0 / 6f64.sqrt();
    let rel = (ratio - target).abs() / target;
    let constant = Array2::from_elem((5, 5), c64::new(0.7, 0.0));
    let exact = (finite_size_xi(&constant)? - 2.0).abs();
    Ok(report(
        5,
        "saturation bound",
        rel <= 0.05 && exact <= 1e-9,
        reduced,
        format!("ξ_L/L = {ratio:.4} (rel.dev {rel:.3}, tolerance 0.05); constant-matrix error {exact:.1e}"),
    ))
}

/// Lattice and truncation used by the zero- and finite-temperature sweeps.
#[derive(Debug, Clone, Copy)]
pub struct SweepScale {
    pub length: usize,
    pub cutoff: usize,
    pub policy: TruncationPolicy,
    pub tau_points: usize,
}

pub fn sweep_scale(reduced: bool) -> SweepScale {
    if reduced {
        SweepScale {
            length: 8,
            cutoff: 3,
            policy: TruncationPolicy {
                max_bond: 32,
                svd_cutoff: 1e-10,
                dt: 0.02,
            },
            tau_points: 6,
        }
    } else {
        SweepScale {
            length: 16,
            cutoff: 5,
            policy: TruncationPolicy::default(),
            tau_points: 6,
        }
    }
}

/// Log-spaced grid of `n` durations in `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1).max(1) as f64))
        .collect()
}

#[derive(Debug, Clone)]
pub struct KzSweep {
    pub points: Vec<(f64, f64)>,
    pub kappa: f64,
    pub kappa_error: f64,
}

fn kz_sweep(scale: &SweepScale, temperature: f64, taus: &[f64]) -> Result<KzSweep> {
    let p = ModelParams::new(0.0, 0.5, scale.length, scale.cutoff);
    let mut points = Vec::new();
    for &tau in taus {
        let q = QuenchProtocol::new(tau, 0.3, temperature)?;
        points.push((tau, run_quench(&p, &q, &scale.policy)?.xi_fin));
    }
    let (kappa, kappa_error) = fit_kz_exponent(&points, (2.0, 15.0))?;
    Ok(KzSweep {
        points,
        kappa,
        kappa_error,
    })
}

/// Zero-temperature sweep, computed once per process and scale.
pub fn zero_temperature_sweep(reduced: bool) -> Result<KzSweep> {
    static CACHE: OnceLock<Mutex<[Option<KzSweep>; 2]>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new([None, None]));
    let mut guard = cache.lock().expect("sweep cache");
    let slot = &mut guard[reduced as usize];
    if let Some(s) = slot {
        return Ok(s.clone());
    }
    let scale = sweep_scale(reduced);
    let s = kz_sweep(&scale, 0.0, &log_grid(2.0, 15.0, scale.tau_points))?;
    *slot = Some(s.clone());
    Ok(s)
}

/// Criterion 6: KZ exponent at zero temperature.
pub fn zero_temperature_kz(reduced: bool) -> Result<CriterionReport> {
    let s = zero_temperature_sweep(reduced)?;
    let pass = (0.73..=1.03).contains(&s.kappa);
    let pts = s
        .points
        .iter()
        .map(|(t, x)| format!("({t:.2}, {x:.4})"))
        .collect::<Vec<_>>()
        .join(" ");
    Ok(report(
        6,
        "zero-temperature KZ exponent",
        pass,
        reduced,
        format!("κ = {:.3} ± {:.3} (band [0.73, 1.03]); points {pts}", s.kappa, s.kappa_error),
    ))
}

/// Equilibrium gap and `ξ_L` on the unit-filling ground states of
/// `GAP_GRID_POINTS` couplings in `[0, J_c]`.
pub fn equilibrium_curves(scale: &SweepScale, j_c: f64) -> Result<(Vec<(f64, f64)>, Vec<(f64, f64)>)> {
    let schedule = default_schedule();
    let mut gaps = Vec::new();
    let mut xis = Vec::new();
    for i in 0..GAP_GRID_POINTS {
        let j = j_c * i as f64 / (GAP_GRID_POINTS - 1) as f64;
        let p = ModelParams::new(j, 0.5, scale.length, scale.cutoff);
        let gs = ground_state(&p, &scale.policy, &schedule)?;
        let gap = if j == 0.0 {
            1.0
        } else {
            projected_gap(&gs, &p, &scale.policy, &schedule)?.gap
        };
        gaps.push((j, gap));
        xis.push((j, finite_size_xi(&gs.state.correlation_matrix()?)?));
    }
    Ok((gaps, xis))
}

/// Criterion 7: effective exponents over the freeze-out window.
pub fn effective_exponent_check(reduced: bool) -> Result<CriterionReport> {
    let scale = sweep_scale(reduced);
    let j_c = 0.3;
    let (gaps, xi) = equilibrium_curves(&scale, j_c)?;
    let gap = GapCurve::new(gaps.clone())?;
    let mut hats = Vec::new();
    for tau in log_grid(3.0, 15.0, 6) {
        if let Some(jh) = freeze_out(&gap, &QuenchProtocol::new(tau, j_c, 0.0)?)?.freeze_out_coupling {
            hats.push(jh);
        }
    }
    if hats.len() < 2 {
        return Ok(report(7, "effective exponents", false, reduced, format!("only {} freeze-out points", hats.len())));
    }
    let window = (
        hats.iter().copied().fold(f64::INFINITY, f64::min),
        hats.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    );
    // widen to the sample spacing so the fits see at least three points
    let step = j_c / (GAP_GRID_POINTS - 1) as f64;
    let window = ((window.0 - step).max(step), (window.1 + step).min(j_c - step / 2.0));
    let e = effective_exponents(&xi, &gaps, window, j_c)?;
    let kz = zero_temperature_sweep(reduced)?;
    let agree = (e.kappa_predicted - kz.kappa).abs() <= e.kappa_error + kz.kappa_error;
    let pass = (2.0..=2.6).contains(&e.nu_eff) && (1.35..=1.75).contains(&e.znu_eff) && agree;
    Ok(report(
        7,
        "effective exponents",
        pass,
        reduced,
        format!(
            "window [{:.3}, {:.3}]: ν_eff = {:.3} ± {:.3} (band [2.0, 2.6]), [zν]_eff = {:.3} ± {:.3} (band [1.35, 1.75]), κ_pred = {:.3} ± {:.3} vs κ = {:.3} ± {:.3}",
            window.0, window.1, e.nu_eff, e.nu_error, e.znu_eff, e.znu_error, e.kappa_predicted, e.kappa_error,
            kz.kappa, kz.kappa_error
        ),
    ))
}

/// Criterion 8: no freeze-out below `τ_Q = 2`, a crossing above.
pub fn freeze_out_boundary() -> Result<CriterionReport> {
    let j_c = 0.3;
    let mut samples = Vec::new();
    for i in 0..GAP_GRID_POINTS {
        let j = j_c * i as f64 / (GAP_GRID_POINTS - 1) as f64;
        samples.push((j, ed_sector_gap(&ModelParams::new(j, 0.5, 6, 4))?));
    }
    let gap0 = samples[0].1;
    let curve = GapCurve::new(samples)?;
    let mut ok = (gap0 - 1.0).abs() < 1e-12;
    let mut detail = format!("ΔE(0) = {gap0:.6}");
    for (tau, expect) in [(0.5, false), (1.0, false), (1.9, false), (2.5, true), (4.0, true), (10.0, true)] {
        let rec = freeze_out(&curve, &QuenchProtocol::new(tau, j_c, 0.0)?)?;
        let found = rec.freeze_out_time.is_some();
        ok &= found == expect;
        match rec.freeze_out_coupling {
            Some(jh) => detail += &format!("; τ_Q={tau}: Ĵ={jh:.4}"),
            None => detail += &format!("; τ_Q={tau}: none"),
        }
    }
    Ok(report(8, "freeze-out boundary", ok, false, detail))
}

/// Criterion 9: finite-temperature KZ exponents against the Arrhenius law.
pub fn arrhenius_trend(reduced: bool) -> Result<CriterionReport> {
    let scale = sweep_scale(reduced);
    let k0 = zero_temperature_sweep(reduced)?.kappa;
    let taus = log_grid(2.0, 15.0, 4);
    let mut kappas = vec![(0.0, k0)];
    let mut band = true;
    let mut detail = format!("κ0 = {k0:.3}");
    for t in [0.1, 0.2, 0.3, 0.4] {
        let s = kz_sweep(&scale, t, &taus)?;
        let expect = 1.0 - (-0.5 / t).exp();
        let ratio = s.kappa / k0;
        band &= (ratio - expect).abs() <= 0.12;
        detail += &format!("; T={t}: κ={:.3} κ/κ0={ratio:.3} (Arrhenius {expect:.3})", s.kappa);
        kappas.push((t, s.kappa));
    }
    let monotone = kappas.windows(2).all(|w| w[1].1 <= w[0].1);
    Ok(report(9, "Arrhenius trend", band && monotone, reduced, detail))
}

/// Criterion 10: insensitivity of the center variance to low temperatures.
pub fn melting_plateau(reduced: bool) -> Result<CriterionReport> {
    let (l, d) = if reduced { (8, 4) } else { (16, 5) };
    let p = ModelParams::new(0.08, 0.5, l, d);
    let policy = TruncationPolicy {
        max_bond: 64,
        svd_cutoff: 1e-12,
        dt: 0.01,
    };
    let start = MpsState::uniform_superposition(l, d)?;
    let gs = ground_state_from(start, &p, &policy, &default_schedule())?;
    let c = center_site(l);
    let var = |n: &[f64], n2: &[f64]| n2[c] - n[c] * n[c];
    let (n, n2) = gs.state.local_moments()?;
    let v0 = var(&n, &n2);
    let mut s = infinite_temperature_state(l, d)?;
    let mut rows = Vec::new();
    for t in [0.4, 0.2, 0.1] {
        cool(&mut s, &p, 1.0 / t, &policy)?;
        let (n, n2) = s.local_moments()?;
        rows.push((t, var(&n, &n2)));
    }
    let rel = |v: f64| (v - v0).abs() / v0;
    let plateau = rows.iter().filter(|r| r.0 <= 0.2).all(|r| rel(r.1) < 0.10);
    let melted = rows.iter().find(|r| r.0 == 0.4).is_some_and(|r| rel(r.1) > 0.25);
    let detail = format!(
        "L={l}: σ²(0) = {v0:.4}; {}",
        rows.iter()
            .rev()
            .map(|(t, v)| format!("T={t}: σ² = {v:.4} (rel.change {:.3})", rel(*v)))
            .collect::<Vec<_>>()
            .join("; ")
    );
    Ok(report(10, "melting plateau", plateau && melted, reduced, detail))
}

fn random_lptn(rng: &mut ChaCha8Rng, l: usize, d: usize, bond: usize) -> Result<LptnState> {
    let mut dims = vec![1];
    dims.extend(std::iter::repeat_n(bond, l - 1));
    dims.push(1);
    let sites: Vec<Tensor> = dims
        .windows(2)
        .map(|w| {
            Tensor::from_fn(&[w[0], d, d, w[1]], |_| {
                c64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            })
        })
        .collect();
    let mut s = LptnState::from_tensors(sites, 1.0)?;
    s.normalize()?;
    Ok(s)
}

/// Criterion 11: seeded sweeps over the invariants.
pub fn property_suites(seed: u64) -> Result<CriterionReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures: Vec<String> = Vec::new();
    let cases = 32;

    for _ in 0..cases {
        let l = rng.gen_range(2..24);
        let mut f: Vec<f64> = (0..l).map(|_| rng.gen_range(0.0..1.0)).collect();
        f[0] = f[0].max(1e-3);
        for r in 1..l {
            f[r] = f[r].min(f[r - 1]);
        }
        let m = Array2::from_shape_fn((l, l), |(j, k)| c64::new(f[j.abs_diff(k)], 0.0));
        if finite_size_xi(&m)? > xi_l_bound(l) + 1e-9 {
            failures.push(format!("ξ_L bound at L={l}"));
        }
    }

    for _ in 0..cases {
        let eta = rng.gen_range(0.0..3.0);
        let xi = rng.gen_range(0.5..100.0);
        let values: Vec<f64> = (0..12)
            .map(|r| {
                let r = r.max(1) as f64;
                2.0 * r.powf(-eta) * (-r / xi).exp() * (1.0 + rng.gen_range(-1e-6..1e-6))
            })
            .collect();
        let fit = fit_correlation_decay(&values, 1, 11)?;
        if (fit.eta - eta).abs() > 1e-4 || (fit.inverse_xi - 1.0 / xi).abs() > 1e-4 {
            failures.push(format!("decay fit at η={eta:.3}, ξ={xi:.3}"));
        }
    }

    for _ in 0..8 {
        let l = rng.gen_range(2..5);
        let d = rng.gen_range(2..4);
        let s = random_lptn(&mut rng, l, d, 3)?;
        let (e, _) = eigh(&s.density_matrix()?)?;
        if e[0] < -1e-12 {
            failures.push(format!("ρ = XX† eigenvalue {:.2e}", e[0]));
        }
    }

    let p = ModelParams::new(0.2, 0.5, 5, 3);
    let q = QuenchProtocol::new(1.0, 0.3, 0.0)?;
    let pol = TruncationPolicy::default().with_dt(0.05);
    let mut psi = MpsState::unit_filling(5, 3)?;
    real_evolve(&mut psi, &p, &q, &pol)?;
    let (n, _) = psi.local_moments()?;
    let total: f64 = n.iter().sum();
    if (total - 5.0).abs() > 1e-10 {
        failures.push(format!("N drifted to {total}"));
    }
    if (psi.norm() - 1.0).abs() > 1e-10 {
        failures.push(format!("norm drifted to {}", psi.norm()));
    }
    let mut mixed = random_lptn(&mut rng, 5, 3, 4)?;
    let tr0 = mixed.trace();
    lptn_evolve(&mut mixed, &p, &q, &pol)?;
    // unitary up to the weight discarded by truncation
    if (mixed.trace() - tr0).abs() > mixed.accumulated_discarded_weight() * tr0 + 1e-10 {
        failures.push(format!("trace drifted by {:.2e}", mixed.trace() - tr0));
    }
    let mut cold = random_lptn(&mut rng, 5, 3, 4)?;
    cool(&mut cold, &p, 2.0, &pol)?;
    if (cold.trace() - 1.0).abs() > 1e-10 {
        failures.push(format!("cooled trace {}", cold.trace()));
    }

    for _ in 0..cases {
        let mut c = ExperimentConfig::minimal(Mode::QuenchSweep);
        c.model.j = rng.gen_range(0.0..2.0);
        c.model.l = rng.gen_range(2..=64);
        c.model.d = rng.gen_range(2..=8);
        c.grids.t = vec![rng.gen_range(0.0..1.0)];
        c.grids.tau_q = (0..rng.gen_range(1..5)).map(|_| rng.gen_range(0.01..30.0)).collect();
        c.seed = rng.gen();
        let back = crate::config::parse_config(&c.to_toml()?)?;
        if back != c {
            failures.push("config round trip".into());
        }
    }

    let cp = Checkpoint::new(
        &CheckpointState::Lptn(random_lptn(&mut rng, 5, 3, 4)?),
        p,
        pol,
        Some(q),
        7,
    );
    let mut a = Vec::new();
    cp.write_to(&mut a)?;
    let mut b = Vec::new();
    Checkpoint::read_from(&mut a.as_slice())?.write_to(&mut b)?;
    if a != b {
        failures.push("checkpoint bytes differ after a round trip".into());
    }

    let detail = if failures.is_empty() {
        format!("all invariants held (seed {seed})")
    } else {
        failures.join("; ")
    };
    Ok(report(11, "property suites", failures.is_empty(), false, detail))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_grid_spans_window() {
        let g = log_grid(2.0, 15.0, 6);
        assert_eq!(g.len(), 6);
        assert!((g[0] - 2.0).abs() < 1e-15 && (g[5] - 15.0).abs() < 1e-12);
        assert!(g.windows(2).all(|w| (w[1] / w[0] - (7.5f64).powf(0.2)).abs() < 1e-12));
    }

    #[test]
    fn unknown_criterion_is_rejected() {
        assert!(run_criterion(12, &ExperimentConfig::minimal(Mode::Validate)).is_err());
    }

    #[test]
    fn freeze_out_boundary_holds() {
        let r = freeze_out_boundary().unwrap();
        assert!(r.passed, "{}", r.line);
    }

    #[test]
    fn property_suites_hold() {
        let r = property_suites(3).unwrap();
        assert!(r.passed, "{}", r.line);
    }
}
