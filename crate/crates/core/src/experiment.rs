//! Grid orchestration: runs equilibrium and quench points on a bounded
//! worker pool, records every point in a manifest and writes the CSV tables.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::checkpoint::Checkpoint;
use crate::config::{parse_config, ExperimentConfig, Mode};
use crate::error::{Error, Result};
use crate::lptn::{cool, infinite_temperature_state};
use crate::model::ModelParams;
use crate::mps::{ground_state_from, ConvergenceWarning, MpsState, TruncationPolicy};
use crate::observables::{
    center_site, compressibility, default_r_max, fit_correlation_decay, finite_size_xi, mott_quantifier,
    profile_from_matrix, site_statistics, superfluid_quantifier, ManyBodyState,
};
use crate::quench::{arrhenius_prediction, fit_kz_exponent, QuenchProtocol, QuenchRunner};
use crate::validation::{run_criterion, CriterionReport};

/// Environment variable holding the worker-pool size.
pub const WORKERS_ENV: &str = "BOSEKZ_WORKERS";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PointStatus {
    Success,
    Failed,
    Skipped,
}

/// Grid coordinates of a point; indices refer to the config grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PointLabel {
    Equilibrium {
        j: f64,
        #[serde(with = "extended_float")]
        t: f64,
        mu: f64,
        l: usize,
        index: [usize; 4],
    },
    Quench {
        tau_q: f64,
        #[serde(with = "extended_float")]
        t: f64,
        l: usize,
        index: [usize; 3],
    },
    Criterion {
        number: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumResult {
    pub occupations: Vec<f64>,
    pub variances: Vec<f64>,
    pub filling: f64,
    /// `C(r)` from the center site for `r = 0..=r_max`.
    pub correlations: Vec<f64>,
    pub eta: Option<f64>,
    /// `1/ξ` of the decay fit; zero means an unbounded `ξ`.
    pub inverse_xi: Option<f64>,
    pub fit_residual: Option<f64>,
    pub xi_l: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuenchResult {
    pub xi_fin: f64,
    pub accumulated_discarded_weight: f64,
    pub max_bond: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PointResult {
    Equilibrium(EquilibriumResult),
    Quench(QuenchResult),
    Criterion(CriterionReport),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub label: PointLabel,
    pub status: PointStatus,
    pub wall_time_seconds: f64,
    pub flags: Vec<String>,
    pub error: Option<String>,
    pub checkpoint: Option<String>,
    pub result: Option<PointResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    /// Canonical TOML text of the configuration.
    pub config: String,
    /// SHA-256 of `config`.
    pub config_hash: String,
    pub code_version: String,
    pub points: Vec<PointRecord>,
}

impl Manifest {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        let text = config.to_toml()?;
        Ok(Self {
            config_hash: config_hash(&text),
            config: text,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            points: grid_points(config)
                .into_iter()
                .map(|label| PointRecord {
                    label,
                    status: PointStatus::Skipped,
                    wall_time_seconds: 0.0,
                    flags: Vec::new(),
                    error: None,
                    checkpoint: None,
                    result: None,
                })
                .collect(),
        })
    }

    pub fn config(&self) -> Result<ExperimentConfig> {
        parse_config(&self.config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("partial");
        std::fs::write(&tmp, serde_json::to_string_pretty(self)?)?;
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn all_succeeded(&self) -> bool {
        self.points.iter().all(|p| p.status == PointStatus::Success)
    }

    /// Every point succeeded and every validation criterion passed.
    pub fn all_passed(&self) -> bool {
        self.all_succeeded()
            && self.points.iter().all(|p| match &p.result {
                Some(PointResult::Criterion(c)) => c.passed,
                _ => true,
            })
    }
}

pub fn config_hash(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Points of the configured mode in grid order.
pub fn grid_points(config: &ExperimentConfig) -> Vec<PointLabel> {
    let g = &config.grids;
    let lengths = config.lengths();
    let mut out = Vec::new();
    match config.mode {
        Mode::EquilibriumScan | Mode::StateDiagram => {
            let mus = if g.mu.is_empty() { vec![config.model.mu] } else { g.mu.clone() };
            for (il, &l) in lengths.iter().enumerate() {
                for (imu, &mu) in mus.iter().enumerate() {
                    for (ij, &j) in g.j.iter().enumerate() {
                        for (it, &t) in g.t.iter().enumerate() {
                            out.push(PointLabel::Equilibrium {
                                j,
                                t,
                                mu,
                                l,
                                index: [il, imu, ij, it],
                            });
                        }
                    }
                }
            }
        }
        Mode::QuenchSweep => {
            for (il, &l) in lengths.iter().enumerate() {
                for (it, &t) in g.t.iter().enumerate() {
                    for (itau, &tau_q) in g.tau_q.iter().enumerate() {
                        out.push(PointLabel::Quench {
                            tau_q,
                            t,
                            l,
                            index: [il, it, itau],
                        });
                    }
                }
            }
        }
        Mode::Validate => {
            for &number in &config.validate.criteria {
                out.push(PointLabel::Criterion { number });
            }
        }
    }
    out
}

fn worker_count() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Start a fresh run in `config.output_dir`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Manifest> {
    config.validate()?;
    let dir = config.output_dir.clone();
    std::fs::create_dir_all(&dir)?;
    let manifest = Manifest::new(config)?;
    execute(manifest, &dir)
}

/// Rerun the points of a saved manifest that did not succeed.
pub fn resume_experiment(manifest_path: impl AsRef<Path>) -> Result<Manifest> {
    let path = manifest_path.as_ref();
    let manifest = Manifest::load(path)?;
    if config_hash(&manifest.config) != manifest.config_hash {
        return Err(Error::Validation("manifest config does not match its hash".into()));
    }
    let dir = path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf);
    execute(manifest, &dir)
}

fn execute(manifest: Manifest, dir: &Path) -> Result<Manifest> {
    let config = manifest.config()?;
    let manifest_path = dir.join(MANIFEST_FILE);
    manifest.save(&manifest_path)?;
    let todo: Vec<usize> = (0..manifest.points.len())
        .filter(|&i| manifest.points[i].status != PointStatus::Success)
        .collect();
    let hash = manifest.config_hash.clone();
    let shared = Mutex::new(manifest);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count())
        .build()
        .map_err(|e| Error::Resource(e.to_string()))?;
    pool.install(|| {
        todo.par_iter().try_for_each(|&i| -> Result<()> {
            let label = shared.lock().expect("manifest lock").points[i].label.clone();
            let record = run_point(&config, &label, i, dir, &hash);
            let mut m = shared.lock().expect("manifest lock");
            m.points[i] = record;
            m.save(&manifest_path)
        })
    })?;
    let manifest = shared.into_inner().expect("manifest lock");
    write_outputs(&manifest, dir)?;
    Ok(manifest)
}

fn run_point(config: &ExperimentConfig, label: &PointLabel, index: usize, dir: &Path, hash: &str) -> PointRecord {
    let start = Instant::now();
    let mut checkpoint = None;
    let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| match *label {
        PointLabel::Equilibrium { j, t, mu, l, .. } => {
            let params = point_params(config, j, mu, l);
            equilibrium_point(&params, t, config).map(|(r, w)| (PointResult::Equilibrium(r), w))
        }
        PointLabel::Quench { tau_q, t, l, .. } => {
            let path = dir.join("checkpoints").join(format!("point-{index:05}.kzcp"));
            checkpoint = Some(format!("checkpoints/point-{index:05}.kzcp"));
            let params = point_params(config, 0.0, config.model.mu, l);
            quench_point(&params, tau_q, t, config, &path, hash).map(|(r, w)| (PointResult::Quench(r), w))
        }
        PointLabel::Criterion { number } => run_criterion(number, config).map(|r| {
            let flags = if r.passed { Vec::new() } else { vec![r.line.clone()] };
            (PointResult::Criterion(r), flags)
        }),
    }));
    let wall = start.elapsed().as_secs_f64();
    let (status, flags, error, result) = match outcome {
        Ok(Ok((r, flags))) => (PointStatus::Success, flags, None, Some(r)),
        Ok(Err(e)) => (PointStatus::Failed, Vec::new(), Some(e.to_string()), None),
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            (PointStatus::Failed, Vec::new(), Some(format!("panicked: {msg}")), None)
        }
    };
    PointRecord {
        label: label.clone(),
        status,
        wall_time_seconds: wall,
        flags,
        error,
        checkpoint,
        result,
    }
}

fn point_params(config: &ExperimentConfig, j: f64, mu: f64, l: usize) -> ModelParams {
    let mut p = config.model.params();
    p.hopping = j;
    p.chemical_potential = mu;
    p.length = l;
    p
}

fn messages(ws: &[ConvergenceWarning]) -> Vec<String> {
    ws.iter().map(|w| w.message.clone()).collect()
}

/// Thermal state at temperature `t` (the grand-canonical ground state at
/// `t = 0`) and its readouts.
pub fn equilibrium_point(
    params: &ModelParams,
    t: f64,
    config: &ExperimentConfig,
) -> Result<(EquilibriumResult, Vec<String>)> {
    let policy = config.policy.policy();
    let (stats, matrix, flags) = if t == 0.0 {
        let start = MpsState::uniform_superposition(params.length, params.cutoff)?;
        let gs = ground_state_from(start, params, &policy, &config.run.schedule)?;
        (site_statistics(&gs.state)?, gs.state.correlation_matrix()?, messages(&gs.warnings))
    } else {
        let mut s = infinite_temperature_state(params.length, params.cutoff)?;
        if t.is_finite() {
            cool(&mut s, params, 1.0 / t, &policy)?;
        }
        (site_statistics(&s)?, s.correlation_matrix()?, messages(&s.warnings))
    };
    let (lo, hi) = decay_range(config, params.length);
    let profile = profile_from_matrix(&matrix, center_site(params.length), hi)?;
    let mut flags = flags;
    let fit = match fit_correlation_decay(&profile.values, lo, hi) {
        Ok(f) => Some(f),
        Err(e) => {
            flags.push(format!("decay fit: {e}"));
            None
        }
    };
    Ok((
        EquilibriumResult {
            occupations: stats.occupations,
            variances: stats.variances,
            filling: stats.filling,
            correlations: profile.values,
            eta: fit.map(|f| f.eta),
            inverse_xi: fit.map(|f| f.inverse_xi),
            fit_residual: fit.map(|f| f.residual),
            xi_l: finite_size_xi(&matrix)?,
        },
        flags,
    ))
}

/// Distance range of the decay fit for a chain of `length` sites.
pub fn decay_range(config: &ExperimentConfig, length: usize) -> (usize, usize) {
    match config.fit.decay_range {
        Some([a, b]) => (a, b.min(default_r_max(length))),
        None => (1, default_r_max(length)),
    }
}

fn quench_point(
    params: &ModelParams,
    tau_q: f64,
    t: f64,
    config: &ExperimentConfig,
    path: &Path,
    hash: &str,
) -> Result<(QuenchResult, Vec<String>)> {
    let policy: TruncationPolicy = config.policy.policy();
    let protocol = QuenchProtocol::new(tau_q, config.critical.quench, t)?;
    let mut runner = match Checkpoint::load(path) {
        Ok(cp)
            if cp.header.config_hash.as_deref() == Some(hash)
                && cp.header.protocol == Some(protocol)
                && cp.header.params == *params =>
        {
            QuenchRunner::from_checkpoint(&cp)?
        }
        _ => QuenchRunner::new(params, &protocol, &policy)?,
    };
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    while runner.step() < runner.total_steps() {
        runner.advance(config.run.checkpoint_every)?;
        runner.checkpoint().with_config_hash(hash).save(path)?;
    }
    let out = runner.finish()?;
    Ok((
        QuenchResult {
            xi_fin: out.xi_fin,
            accumulated_discarded_weight: out.accumulated_discarded_weight,
            max_bond: out.final_bond_dims.iter().copied().max().unwrap_or(1),
        },
        messages(&out.warnings),
    ))
}

/// Twelve significant digits.
fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.11e}")
    } else {
        format!("{x}")
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// Regenerate every output table of `manifest` inside `dir`.
pub fn write_outputs(manifest: &Manifest, dir: &Path) -> Result<()> {
    let config = manifest.config()?;
    match config.mode {
        Mode::EquilibriumScan | Mode::StateDiagram => write_equilibrium(manifest, &config, dir),
        Mode::QuenchSweep => write_quench(manifest, &config, dir),
        Mode::Validate => {
            std::fs::write(dir.join("validation.txt"), validation_text(manifest))?;
            Ok(())
        }
    }
}

pub fn validation_text(manifest: &Manifest) -> String {
    let mut out = String::new();
    for p in &manifest.points {
        match (&p.label, &p.result, &p.error) {
            (_, Some(PointResult::Criterion(c)), _) => {
                let _ = writeln!(out, "{}", c.line);
            }
            (PointLabel::Criterion { number }, None, e) => {
                let _ = writeln!(out, "criterion {number}: FAIL ({})", e.as_deref().unwrap_or("not run"));
            }
            _ => {}
        }
    }
    out
}

type Key = [usize; 4];

fn write_equilibrium(manifest: &Manifest, config: &ExperimentConfig, dir: &Path) -> Result<()> {
    let mut rows: Vec<(Key, f64, f64, f64, usize, &EquilibriumResult)> = Vec::new();
    for p in &manifest.points {
        if let (PointLabel::Equilibrium { j, t, mu, l, index }, Some(PointResult::Equilibrium(r))) =
            (&p.label, &p.result)
        {
            rows.push((*index, *j, *t, *mu, *l, r));
        }
    }
    let by_key: HashMap<Key, &EquilibriumResult> = rows.iter().map(|r| (r.0, r.5)).collect();
    let lengths = config.lengths();

    // Θ over the (J, T) grid of each (L, μ)
    let mut theta: HashMap<Key, f64> = HashMap::new();
    let mut groups: HashMap<[usize; 2], Vec<(Key, f64)>> = HashMap::new();
    for r in &rows {
        let v = r.5.variances[center_site(r.4)];
        groups.entry([r.0[0], r.0[1]]).or_default().push((r.0, v));
    }
    for g in groups.values() {
        let vars: Vec<f64> = g.iter().map(|x| x.1).collect();
        for (k, th) in g.iter().map(|x| x.0).zip(mott_quantifier(&vars)?) {
            theta.insert(k, th);
        }
    }

    let mus = if config.grids.mu.is_empty() { vec![config.model.mu] } else { config.grids.mu.clone() };
    let half = config.fit.delta_mu / 2.0;
    let (wlo, whi) = (config.model.mu - half - 1e-12, config.model.mu + half + 1e-12);

    let mut eq = csv::Writer::from_path(dir.join("equilibrium.csv"))?;
    eq.write_record([
        "J", "T", "mu", "L", "n_mean", "n_var", "eta", "xi", "xi_L", "upsilon", "theta", "drho_dmu",
    ])?;
    let mut sites = csv::Writer::from_path(dir.join("sites.csv"))?;
    sites.write_record(["J", "T", "mu", "L", "site", "n_mean", "n_var"])?;
    let mut corr = csv::Writer::from_path(dir.join("correlations.csv"))?;
    corr.write_record(["J", "T", "mu", "L", "r", "C_r"])?;

    for &(key, j, t, mu, l, r) in &rows {
        let c = center_site(l);
        let upsilon = lengths
            .iter()
            .position(|&x| x == l + config.fit.delta_l)
            .and_then(|il2| by_key.get(&[il2, key[1], key[2], key[3]]))
            .map(|r2| superfluid_quantifier(r.xi_l, r2.xi_l, config.fit.delta_l))
            .transpose()?;
        let samples: Vec<(f64, f64)> = mus
            .iter()
            .enumerate()
            .filter(|(_, &m)| m >= wlo && m <= whi)
            .filter_map(|(im, &m)| by_key.get(&[key[0], im, key[2], key[3]]).map(|x| (m, x.filling)))
            .collect();
        let drho = if samples.len() >= 3 {
            Some(compressibility(&samples, wlo, whi)?)
        } else {
            None
        };
        let xi = r.inverse_xi.map(|v| if v > 0.0 { 1.0 / v } else { f64::INFINITY });
        eq.write_record([
            num(j),
            num(t),
            num(mu),
            l.to_string(),
            num(r.occupations[c]),
            num(r.variances[c]),
            opt(r.eta),
            opt(xi),
            num(r.xi_l),
            opt(upsilon),
            opt(theta.get(&key).copied()),
            opt(drho),
        ])?;
        for (s, (n, v)) in r.occupations.iter().zip(&r.variances).enumerate() {
            sites.write_record([num(j), num(t), num(mu), l.to_string(), s.to_string(), num(*n), num(*v)])?;
        }
        for (dist, cr) in r.correlations.iter().enumerate() {
            corr.write_record([num(j), num(t), num(mu), l.to_string(), dist.to_string(), num(*cr)])?;
        }
    }
    eq.flush()?;
    sites.flush()?;
    corr.flush()?;
    let (lo, hi) = decay_range(config, config.model.l);
    std::fs::write(
        dir.join("fit_metadata.txt"),
        format!(
            "decay fit: log C(r) = c0 - eta log r - r/xi\nr range: [{lo}, {hi}] at L = {} (upper end capped at L/2 - 1)\nreference site: ceil(L/2)\ncompressibility window: [{}, {}]\ndelta_L: {}\n",
            config.model.l,
            num(config.model.mu - half),
            num(config.model.mu + half),
            config.fit.delta_l
        ),
    )?;
    Ok(())
}

fn write_quench(manifest: &Manifest, config: &ExperimentConfig, dir: &Path) -> Result<()> {
    let policy = config.policy.policy();
    let mut q = csv::Writer::from_path(dir.join("quench.csv"))?;
    q.write_record(["tau_q", "T", "L", "d", "m", "dt", "xi_fin", "accumulated_discarded_weight"])?;
    let mut timing = csv::Writer::from_path(dir.join("timing.csv"))?;
    timing.write_record(["tau_q", "T", "L", "wall_time_seconds"])?;
    let mut series: Vec<((usize, usize), f64, usize, Vec<(f64, f64)>)> = Vec::new();
    for p in &manifest.points {
        let PointLabel::Quench { tau_q, t, l, index } = p.label else { continue };
        timing.write_record([num(tau_q), num(t), l.to_string(), format!("{:.3}", p.wall_time_seconds)])?;
        let Some(PointResult::Quench(r)) = &p.result else { continue };
        q.write_record([
            num(tau_q),
            num(t),
            l.to_string(),
            config.model.d.to_string(),
            policy.max_bond.to_string(),
            num(policy.dt),
            num(r.xi_fin),
            num(r.accumulated_discarded_weight),
        ])?;
        let key = (index[0], index[1]);
        match series.iter_mut().find(|s| s.0 == key) {
            Some(s) => s.3.push((tau_q, r.xi_fin)),
            None => series.push((key, t, l, vec![(tau_q, r.xi_fin)])),
        }
    }
    q.flush()?;
    timing.flush()?;

    let window = (config.fit.kz_window[0], config.fit.kz_window[1]);
    let mut report = format!(
        "KZ exponent fits: log xi_fin = c + kappa log tau_q\nwindow: [{}, {}]\nJ_c: {}\n",
        num(window.0),
        num(window.1),
        num(config.critical.quench)
    );
    let mut kappa0: HashMap<usize, f64> = HashMap::new();
    let mut fits = Vec::new();
    for (key, t, l, pts) in &series {
        let fit = fit_kz_exponent(pts, window);
        if let (Ok((k, _)), true) = (&fit, *t == 0.0) {
            kappa0.insert(key.0, *k);
        }
        fits.push((key.0, *t, *l, pts.len(), fit));
    }
    for (il, t, l, n, fit) in fits {
        let _ = write!(report, "\n[L = {l}, T = {}]\npoints: {n}\n", num(t));
        match fit {
            Ok((k, se)) => {
                let _ = writeln!(report, "kappa: {}\nstd_error: {}", num(k), num(se));
                if let (Some(&k0), true) = (kappa0.get(&il), t > 0.0 && config.model.mu > 0.0) {
                    let pred = arrhenius_prediction(k0, config.model.mu, &[t])?[0];
                    let _ = writeln!(
                        report,
                        "kappa_zero: {}\nactivation_energy: {}\narrhenius_kappa: {}\ndelta_kappa: {}",
                        num(k0),
                        num(config.model.mu),
                        num(pred),
                        num(k0 - k)
                    );
                }
            }
            Err(e) => {
                let _ = writeln!(report, "fit failed: {e}");
            }
        }
    }
    std::fs::write(dir.join("kz_fit.txt"), report)?;
    Ok(())
}

/// JSON numbers for finite values, strings for infinities and NaN.
mod extended_float {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else {
            s.serialize_str(&x.to_string())
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quench_config(dir: &Path) -> ExperimentConfig {
        let mut c = ExperimentConfig::minimal(Mode::QuenchSweep);
        c.model.l = 4;
        c.model.d = 3;
        c.policy.dt = 0.05;
        // the evolved identity needs the full operator bond d^2 = 81
        c.policy.max_bond = 81;
        c.policy.svd_cutoff = 0.0;
        c.grids.tau_q = vec![0.3, 0.6];
        c.grids.t = vec![0.0, f64::INFINITY];
        c.run.checkpoint_every = 4;
        c.output_dir = dir.to_path_buf();
        c
    }

    #[test]
    fn hash_is_hex_sha256() {
        assert_eq!(
            config_hash("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn manifest_lists_every_point_once() {
        let dir = tempfile::tempdir().unwrap();
        let c = quench_config(dir.path());
        let m = Manifest::new(&c).unwrap();
        assert_eq!(m.points.len(), 4);
        assert!(m.points.iter().all(|p| p.status == PointStatus::Skipped));
        let text = serde_json::to_string(&m).unwrap();
        let back: Manifest = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.config().unwrap(), c);
    }

    #[test]
    fn quench_sweep_writes_tables_and_resumes() {
        let dir = tempfile::tempdir().unwrap();
        let c = quench_config(dir.path());
        let m = run_experiment(&c).unwrap();
        assert!(m.all_succeeded(), "{:?}", m.points);
        let first = std::fs::read(dir.path().join("quench.csv")).unwrap();
        let text = String::from_utf8(first.clone()).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.starts_with("tau_q,T,L,d,m,dt,xi_fin,accumulated_discarded_weight\n"));
        let Some(PointResult::Quench(r)) = &m.points[3].result else { panic!() };
        assert!(r.xi_fin < 1e-6, "identity stays uncorrelated: {}", r.xi_fin);

        // mark one point as lost and resume from its last checkpoint
        let mut edited = m.clone();
        edited.points[1].status = PointStatus::Failed;
        edited.points[1].result = None;
        let path = dir.path().join(MANIFEST_FILE);
        edited.save(&path).unwrap();
        let resumed = resume_experiment(&path).unwrap();
        assert!(resumed.all_succeeded());
        assert_eq!(std::fs::read(dir.path().join("quench.csv")).unwrap(), first);
    }

    #[test]
    fn interrupted_quench_resumes_from_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let c = quench_config(dir.path());
        let hash = config_hash(&c.to_toml().unwrap());
        let params = point_params(&c, 0.0, c.model.mu, 4);
        let path = dir.path().join("q.kzcp");
        let (full, _) = quench_point(&params, 0.6, 0.0, &c, &path, &hash).unwrap();

        let protocol = QuenchProtocol::new(0.6, c.critical.quench, 0.0).unwrap();
        let mut r = QuenchRunner::new(&params, &protocol, &c.policy.policy()).unwrap();
        r.advance(5).unwrap();
        r.checkpoint().with_config_hash(&hash).save(&path).unwrap();
        let (resumed, _) = quench_point(&params, 0.6, 0.0, &c, &path, &hash).unwrap();
        assert!((full.xi_fin - resumed.xi_fin).abs() < 1e-10);
    }

    #[test]
    fn output_does_not_depend_on_worker_count() {
        let mut tables = Vec::new();
        for workers in ["1", "3"] {
            let dir = tempfile::tempdir().unwrap();
            let mut c = ExperimentConfig::minimal(Mode::StateDiagram);
            c.model.l = 4;
            c.model.d = 3;
            c.policy.dt = 0.05;
            c.grids.j = vec![0.0, 0.2];
            c.grids.t = vec![0.0, 0.5];
            c.grids.mu = vec![0.45, 0.5, 0.55];
            c.grids.l = vec![4, 6];
            c.run.schedule = vec![(0.1, 400), (0.02, 200)];
            c.output_dir = dir.path().to_path_buf();
            std::env::set_var(WORKERS_ENV, workers);
            let m = run_experiment(&c).unwrap();
            assert!(m.all_succeeded(), "{:?}", m.points.iter().map(|p| &p.error).collect::<Vec<_>>());
            let read = |f: &str| std::fs::read_to_string(dir.path().join(f)).unwrap();
            tables.push((read("equilibrium.csv"), read("sites.csv"), read("correlations.csv")));
        }
        std::env::remove_var(WORKERS_ENV);
        assert_eq!(tables[0], tables[1]);
        let eq = &tables[0].0;
        assert_eq!(eq.lines().count(), 1 + 2 * 3 * 2 * 2);
        // Mott corner at J = 0, T = 0 has zero compressibility
        let row = eq.lines().nth(1).unwrap();
        let drho: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
        assert!(drho.abs() < 1e-6, "{row}");
    }

    #[test]
    fn extended_floats_round_trip() {
        let l = PointLabel::Quench {
            tau_q: 1.0,
            t: f64::INFINITY,
            l: 4,
            index: [0, 0, 0],
        };
        let text = serde_json::to_string(&l).unwrap();
        assert!(text.contains("\"inf\""));
        assert_eq!(serde_json::from_str::<PointLabel>(&text).unwrap(), l);
    }
}
