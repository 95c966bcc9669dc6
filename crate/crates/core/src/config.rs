//! Experiment configuration as a sectioned TOML document.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Boundary, ModelParams};
use crate::mps::TruncationPolicy;

/// Largest local cutoff accepted from a configuration.
pub const MAX_CUTOFF: usize = 8;
/// Largest chain length accepted from a configuration.
pub const MAX_LENGTH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    EquilibriumScan,
    QuenchSweep,
    StateDiagram,
    Validate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub j: f64,
    pub u: f64,
    pub mu: f64,
    pub l: usize,
    pub d: usize,
    pub boundary: Boundary,
}

impl Default for ModelSection {
    fn default() -> Self {
        let p = ModelParams::default();
        Self {
            j: p.hopping,
            u: p.interaction,
            mu: p.chemical_potential,
            l: p.length,
            d: p.cutoff,
            boundary: p.boundary,
        }
    }
}

impl ModelSection {
    pub fn params(&self) -> ModelParams {
        ModelParams {
            hopping: self.j,
            interaction: self.u,
            chemical_potential: self.mu,
            length: self.l,
            cutoff: self.d,
            boundary: self.boundary,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicySection {
    pub max_bond: usize,
    pub svd_cutoff: f64,
    pub dt: f64,
}

impl Default for PolicySection {
    fn default() -> Self {
        let p = TruncationPolicy::default();
        Self {
            max_bond: p.max_bond,
            svd_cutoff: p.svd_cutoff,
            dt: p.dt,
        }
    }
}

impl PolicySection {
    pub fn policy(&self) -> TruncationPolicy {
        TruncationPolicy {
            max_bond: self.max_bond,
            svd_cutoff: self.svd_cutoff,
            dt: self.dt,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Grids {
    pub j: Vec<f64>,
    pub t: Vec<f64>,
    pub mu: Vec<f64>,
    pub tau_q: Vec<f64>,
    pub l: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitWindows {
    /// Width of the `μ` window of the compressibility fit, centred on `model.mu`.
    pub delta_mu: f64,
    /// System-size increment of the superfluid quantifier.
    pub delta_l: usize,
    pub kz_window: [f64; 2],
    /// `J` window of the effective-exponent fits; derived from the
    /// freeze-out points when absent.
    pub exponent_window: Option<[f64; 2]>,
    /// Distance range of the correlation-decay fit; `[1, L/2 - 1]` when absent.
    pub decay_range: Option<[usize; 2]>,
}

impl Default for FitWindows {
    fn default() -> Self {
        Self {
            delta_mu: 0.15,
            delta_l: 2,
            kz_window: [2.0, 15.0],
            exponent_window: None,
            decay_range: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CriticalSection {
    /// Midpoint of the quench ramp at unit filling.
    pub quench: f64,
    /// Transition on the `μ = 1/2` equilibrium axis.
    pub equilibrium: f64,
}

impl Default for CriticalSection {
    fn default() -> Self {
        Self {
            quench: 0.30,
            equilibrium: 0.13,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    /// Ramp steps between quench checkpoints.
    pub checkpoint_every: usize,
    /// Imaginary-time schedule `(dβ, max steps)` of zero-temperature points.
    pub schedule: Vec<(f64, usize)>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            checkpoint_every: 200,
            schedule: crate::mps::default_schedule(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidateSection {
    pub criteria: Vec<usize>,
    /// Run criteria at the reduced desk settings instead of the full ones.
    pub reduced: bool,
}

impl Default for ValidateSection {
    fn default() -> Self {
        Self {
            criteria: vec![1, 2, 3, 4, 5, 8, 11],
            reduced: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub policy: PolicySection,
    #[serde(default)]
    pub grids: Grids,
    #[serde(default)]
    pub fit: FitWindows,
    #[serde(default)]
    pub critical: CriticalSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub validate: ValidateSection,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

fn default_output() -> PathBuf {
    PathBuf::from("results")
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
        let message = e.message().to_string();
        if message.contains("unknown field") {
            return Error::Validation(message);
        }
        let (line, column) = e
            .span()
            .map(|s| line_column(text, s.start))
            .unwrap_or((0, 0));
        Error::Parse {
            line,
            column,
            message,
        }
    })?;
    cfg.validate()?;
    Ok(cfg)
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

impl ExperimentConfig {
    pub fn minimal(mode: Mode) -> Self {
        Self {
            mode,
            model: ModelSection::default(),
            policy: PolicySection::default(),
            grids: Grids::default(),
            fit: FitWindows::default(),
            critical: CriticalSection::default(),
            run: RunSection::default(),
            validate: ValidateSection::default(),
            output_dir: default_output(),
            seed: 0,
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    /// Chain lengths of the run: the `l` grid, or `model.l` alone.
    pub fn lengths(&self) -> Vec<usize> {
        if self.grids.l.is_empty() {
            vec![self.model.l]
        } else {
            self.grids.l.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let v = |m: String| Err(Error::Validation(m));
        let m = &self.model;
        if m.d < 2 || m.d > MAX_CUTOFF {
            return v(format!("model.d = {} outside [2, {MAX_CUTOFF}]", m.d));
        }
        for &l in self.lengths().iter().chain(std::iter::once(&m.l)) {
            if !(2..=MAX_LENGTH).contains(&l) {
                return v(format!("chain length {l} outside [2, {MAX_LENGTH}]"));
            }
        }
        if !(m.u > 0.0) || !m.u.is_finite() {
            return v(format!("model.u = {} must be positive", m.u));
        }
        if !m.j.is_finite() || m.j < 0.0 || !m.mu.is_finite() {
            return v("model.j must be finite and non-negative, model.mu finite".into());
        }
        self.policy
            .policy()
            .validate()
            .or_else(|e| v(format!("policy: {e}")))?;
        let g = &self.grids;
        if g.j.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return v("grids.j must be finite and non-negative".into());
        }
        if g.t.iter().any(|x| x.is_nan() || *x < 0.0) {
            return v("grids.t must be non-negative".into());
        }
        if g.mu.iter().any(|x| !x.is_finite()) {
            return v("grids.mu must be finite".into());
        }
        if g.tau_q.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
            return v("grids.tau_q must be positive".into());
        }
        let need = |name: &str, empty: bool| -> Result<()> {
            if empty {
                Err(Error::Validation(format!(
                    "grids.{name} must be nonempty for mode {:?}",
                    self.mode
                )))
            } else {
                Ok(())
            }
        };
        match self.mode {
            Mode::EquilibriumScan => {
                need("j", g.j.is_empty())?;
                need("t", g.t.is_empty())?;
            }
            Mode::QuenchSweep => {
                need("tau_q", g.tau_q.is_empty())?;
                need("t", g.t.is_empty())?;
            }
            Mode::StateDiagram => {
                need("j", g.j.is_empty())?;
                need("t", g.t.is_empty())?;
                need("mu", g.mu.is_empty())?;
            }
            Mode::Validate => {}
        }
        let f = &self.fit;
        if !(f.delta_mu > 0.0) || f.delta_l == 0 || !(f.kz_window[1] > f.kz_window[0]) {
            return v("fit windows must be non-empty and delta_l ≥ 1".into());
        }
        if let Some([a, b]) = f.exponent_window {
            if !(b > a) {
                return v("fit.exponent_window must be increasing".into());
            }
        }
        if let Some([a, b]) = f.decay_range {
            if a < 1 || b < a + 2 {
                return v("fit.decay_range needs 1 ≤ lo and at least three distances".into());
            }
        }
        if !(self.critical.quench > 0.0) || !(self.critical.equilibrium > 0.0) {
            return v("critical couplings must be positive".into());
        }
        if self.run.checkpoint_every == 0 {
            return v("run.checkpoint_every must be positive".into());
        }
        if self.run.schedule.is_empty() || self.run.schedule.iter().any(|s| !(s.0 > 0.0) || s.1 == 0) {
            return v("run.schedule needs positive (dβ, steps) pairs".into());
        }
        if self.validate.criteria.iter().any(|c| !(1..=11).contains(c)) {
            return v("validate.criteria are numbered 1 to 11".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn minimal_document_gets_defaults() {
        let c = parse_config("mode = \"validate\"\n").unwrap();
        assert_eq!(c, ExperimentConfig::minimal(Mode::Validate));
        assert_eq!((c.model.u, c.model.mu, c.model.d), (1.0, 0.5, 5));
        assert_eq!((c.fit.delta_mu, c.fit.delta_l, c.fit.kz_window), (0.15, 2, [2.0, 15.0]));
    }

    #[test]
    fn cutoff_below_two_is_rejected() {
        let e = parse_config("mode = \"validate\"\n[model]\nd = 1\n").unwrap_err();
        assert!(matches!(e, Error::Validation(_)), "{e}");
        let e = parse_config("mode = \"validate\"\n[model]\nd = 9\n").unwrap_err();
        assert!(matches!(e, Error::Validation(_)));
        let e = parse_config("mode = \"validate\"\n[grids]\nl = [65]\n").unwrap_err();
        assert!(matches!(e, Error::Validation(_)));
    }

    #[test]
    fn unknown_keys_are_named() {
        let e = parse_config("mode = \"validate\"\n[model]\nhoping = 0.1\n").unwrap_err();
        match e {
            Error::Validation(m) => assert!(m.contains("hoping"), "{m}"),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn malformed_document_reports_position() {
        let e = parse_config("mode = \"validate\"\n[model]\nj = = 2\n").unwrap_err();
        match e {
            Error::Parse { line, column, .. } => {
                assert_eq!(line, 3);
                assert!(column >= 4);
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn mode_grids_must_be_present() {
        assert!(parse_config("mode = \"quench-sweep\"\n[grids]\nt = [0.0]\n").is_err());
        assert!(parse_config("mode = \"quench-sweep\"\n[grids]\nt = [0.0]\ntau_q = [1.0]\n").is_ok());
        assert!(parse_config("mode = \"equilibrium-scan\"\n[grids]\nj = [0.1]\n").is_err());
    }

    fn arb_config() -> impl Strategy<Value = ExperimentConfig> {
        (
            prop::sample::select(vec![Mode::EquilibriumScan, Mode::QuenchSweep, Mode::StateDiagram, Mode::Validate]),
            0.0f64..2.0,
            -1.0f64..2.0,
            2usize..=64,
            2usize..=8,
            prop::collection::vec(0.0f64..1.0, 1..5),
            prop::collection::vec(0.0f64..1.0, 1..4),
            prop::collection::vec(0.01f64..30.0, 1..6),
            1usize..500,
            any::<u64>(),
        )
            .prop_map(|(mode, j, mu, l, d, js, ts, taus, every, seed)| {
                let mut c = ExperimentConfig::minimal(mode);
                c.model.j = j;
                c.model.mu = mu;
                c.model.l = l;
                c.model.d = d;
                c.grids.j = js;
                c.grids.t = ts.clone();
                c.grids.mu = ts;
                c.grids.tau_q = taus;
                c.run.checkpoint_every = every;
                c.seed = seed;
                c
            })
    }

    proptest! {
        #[test]
        fn round_trip_is_identity(c in arb_config()) {
            let text = c.to_toml().unwrap();
            let back = parse_config(&text).unwrap();
            prop_assert_eq!(&back, &c);
            prop_assert_eq!(back.to_toml().unwrap(), text);
        }
    }
}
