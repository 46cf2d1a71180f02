//! Run configuration: TOML on disk, JSON inside manifests.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use dmnls::groundstate::{critical_exponent, petviashvili, GroundState};
use dmnls::lab::{load_checkpoint, threshold_datum, ThresholdDatum, MIN_SAMPLES};
use dmnls::reference::{blowup_seed_after_defocusing, BlowupProfile};
use dmnls::solver::SolverConfig;
use dmnls::{Complex, DispersionMap, Error, Field, Grid};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub map: MapConfig,
    pub grid: GridConfig,
    pub solver: SolverSection,
    #[serde(default)]
    pub experiment: ExperimentConfig,
    #[serde(default)]
    pub groundstate: GroundStateSection,
    pub initial_datum: InitialDatum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub d: usize,
    pub p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapConfig {
    pub gamma_plus: f64,
    pub gamma_minus: f64,
    pub t_plus: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
    pub half_length: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub dt_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dealias: Option<bool>,
    #[serde(default = "default_stride")]
    pub output_stride: usize,
    #[serde(default = "default_gradient_factor")]
    pub blowup_gradient_factor: f64,
    #[serde(default = "default_tail_threshold")]
    pub blowup_tail_threshold: f64,
    #[serde(default = "default_true")]
    pub nonlinear: bool,
    #[serde(default = "default_true")]
    pub align_breakpoints: bool,
}

fn default_stride() -> usize {
    1
}
fn default_gradient_factor() -> f64 {
    100.0
}
fn default_tail_threshold() -> f64 {
    0.05
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    /// Compare against a run of the averaged equation.
    Averaged,
    /// Compare against the closed-form zero-mean averaged solution.
    ZeroMean,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilons: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass_ratios: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub periods: Option<usize>,
    /// Halving sequence of step sizes; `simulate` then also writes a
    /// splitting-order study to `order.csv`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dts: Option<Vec<f64>>,
    /// Number of random fields in randomized checks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random_samples: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundStateSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub half_length: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialDatum {
    /// `amplitude * exp(-|x|^2 / (2 width^2))`.
    Gaussian {
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default = "one")]
        width: f64,
    },
    /// `mass_ratio * Q(x / sqrt(gamma_plus))`.
    GroundState {
        #[serde(default = "one")]
        mass_ratio: f64,
    },
    /// `mass_ratio * v_a(0)`; with `defocusing_start` the datum is instead
    /// placed at that time inside a defocusing piece so that it reaches
    /// `v_a(0)` at the next period start.
    PseudoConformal {
        a: f64,
        #[serde(default = "one")]
        mass_ratio: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        defocusing_start: Option<f64>,
    },
    Checkpoint {
        path: PathBuf,
    },
}

fn one() -> f64 {
    1.0
}

fn bad(key: &str, constraint: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("`{key}` {constraint}"))
}

/// Rewrites a library parameter error into one naming the config key.
fn keyed(section: &str, e: Error) -> CliError {
    match e {
        Error::InvalidParameter { name, constraint } => bad(&format!("{section}.{name}"), constraint),
        other => CliError::Config(other.to_string()),
    }
}

fn positive(key: &str, v: f64) -> Result<(), CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(bad(key, format!("must be > 0, got {v}")))
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Reads a config file; relative checkpoint paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let InitialDatum::Checkpoint { path: ckpt } = &mut cfg.initial_datum {
            if ckpt.is_relative() {
                if let Some(dir) = path.parent() {
                    *ckpt = dir.join(&*ckpt);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self, CliError> {
        serde_json::from_value(value.clone()).map_err(|e| CliError::Config(format!("manifest config: {e}")))
    }

    /// Checks every field against its owning module's constraints.
    pub fn validate(&self) -> Result<(), CliError> {
        let d = self.model.d;
        if !(1..=3).contains(&d) {
            return Err(bad("model.d", format!("must be 1, 2 or 3, got {d}")));
        }
        if !(self.model.p.is_finite() && self.model.p > 1.0) {
            return Err(bad("model.p", format!("must be > 1, got {}", self.model.p)));
        }
        let map = self.dispersion_map()?;
        if self.grid.n < 2 || !self.grid.n.is_multiple_of(2) {
            return Err(bad(
                "grid.n",
                format!("must be a positive even integer, got {}", self.grid.n),
            ));
        }
        positive("grid.half_length", self.grid.half_length)?;
        self.solver_config()?
            .validate_for(&map)
            .map_err(|e| keyed("solver", e))?;

        let e = &self.experiment;
        if let Some(eps) = &e.epsilons {
            if eps.is_empty() {
                return Err(bad("experiment.epsilons", "must not be empty"));
            }
            for &v in eps {
                positive("experiment.epsilons", v)?;
            }
            if eps.windows(2).any(|w| !(w[1] < w[0])) {
                return Err(bad("experiment.epsilons", "must be strictly decreasing"));
            }
        }
        if let Some(h) = e.horizon {
            if !(h.is_finite() && h > e.t0.unwrap_or(0.0)) {
                return Err(bad("experiment.horizon", format!("must exceed experiment.t0, got {h}")));
            }
        }
        if let Some(t0) = e.t0 {
            if !t0.is_finite() {
                return Err(bad("experiment.t0", "must be finite"));
            }
        }
        if let Some(s) = e.sample_count {
            if s < MIN_SAMPLES {
                return Err(bad(
                    "experiment.sample_count",
                    format!("must be at least {MIN_SAMPLES}, got {s}"),
                ));
            }
        }
        if let Some(r) = &e.mass_ratios {
            if r.is_empty() || r.iter().any(|&v| !(0.0..=2.0).contains(&v)) {
                return Err(bad(
                    "experiment.mass_ratios",
                    "must be a nonempty list of values in [0, 2]",
                ));
            }
        }
        if e.periods == Some(0) {
            return Err(bad("experiment.periods", "must be a positive integer"));
        }
        if let Some(dts) = &e.dts {
            if dts.len() < 3 {
                return Err(bad("experiment.dts", "needs at least three step sizes"));
            }
            for &v in dts {
                positive("experiment.dts", v)?;
            }
            if dts.windows(2).any(|w| ((w[0] / w[1]) - 2.0).abs() > 1e-9) {
                return Err(bad("experiment.dts", "must form a halving sequence"));
            }
            if !(dts[0] < map.epsilon * map.t_plus.min(1.0 - map.t_plus)) {
                return Err(bad("experiment.dts", "must resolve the shortest dispersion piece"));
            }
        }
        if e.random_samples == Some(0) {
            return Err(bad("experiment.random_samples", "must be a positive integer"));
        }

        let g = &self.groundstate;
        if let Some(n) = g.n {
            if n < 2 || n % 2 != 0 {
                return Err(bad(
                    "groundstate.n",
                    format!("must be a positive even integer, got {n}"),
                ));
            }
        }
        if let Some(l) = g.half_length {
            positive("groundstate.half_length", l)?;
        }
        if let Some(t) = g.tol {
            positive("groundstate.tol", t)?;
        }
        if g.max_iter == Some(0) {
            return Err(bad("groundstate.max_iter", "must be a positive integer"));
        }

        match &self.initial_datum {
            InitialDatum::Gaussian { amplitude, width } => {
                if !amplitude.is_finite() {
                    return Err(bad("initial_datum.amplitude", "must be finite"));
                }
                positive("initial_datum.width", *width)?;
            }
            InitialDatum::GroundState { mass_ratio } => {
                self.require_critical("initial_datum.kind = \"ground_state\"")?;
                if !(0.0..=2.0).contains(mass_ratio) {
                    return Err(bad(
                        "initial_datum.mass_ratio",
                        format!("must lie in [0, 2], got {mass_ratio}"),
                    ));
                }
            }
            InitialDatum::PseudoConformal {
                a,
                mass_ratio,
                defocusing_start,
            } => {
                self.require_critical("initial_datum.kind = \"pseudo_conformal\"")?;
                positive("initial_datum.a", *a)?;
                if !(0.0..=2.0).contains(mass_ratio) {
                    return Err(bad(
                        "initial_datum.mass_ratio",
                        format!("must lie in [0, 2], got {mass_ratio}"),
                    ));
                }
                if let Some(t0) = defocusing_start {
                    if !(1.0 / a < map.epsilon * map.t_plus) {
                        return Err(bad(
                            "initial_datum.a",
                            "must satisfy 1/a < map.epsilon * map.t_plus when defocusing_start is set",
                        ));
                    }
                    let phase = (t0 / map.epsilon).rem_euclid(1.0);
                    if !(phase > map.t_plus && phase < 1.0) {
                        return Err(bad(
                            "initial_datum.defocusing_start",
                            "must lie strictly inside a defocusing piece",
                        ));
                    }
                }
            }
            InitialDatum::Checkpoint { path } => {
                if path.as_os_str().is_empty() {
                    return Err(bad("initial_datum.path", "must not be empty"));
                }
            }
        }
        Ok(())
    }

    pub fn require_critical(&self, what: &str) -> Result<(), CliError> {
        let d = self.model.d;
        if d > 2 {
            return Err(bad("model.d", format!("{what} needs d in {{1, 2}}")));
        }
        let p = critical_exponent::<f64>(d);
        if (self.model.p - p).abs() > 1e-12 {
            return Err(bad("model.p", format!("{what} needs the mass-critical exponent {p}")));
        }
        Ok(())
    }

    pub fn dispersion_map(&self) -> Result<DispersionMap<f64>, CliError> {
        let m = &self.map;
        DispersionMap::new(m.gamma_plus, m.gamma_minus, m.t_plus, m.epsilon).map_err(|e| keyed("map", e))
    }

    pub fn solver_config(&self) -> Result<SolverConfig<f64>, CliError> {
        let s = &self.solver;
        let mut cfg = SolverConfig::new(s.dt_max, self.model.p);
        if let Some(dealias) = s.dealias {
            cfg.dealias = dealias;
        }
        cfg.output_stride = s.output_stride;
        cfg.blowup_gradient_factor = s.blowup_gradient_factor;
        cfg.blowup_tail_threshold = s.blowup_tail_threshold;
        cfg.nonlinear = s.nonlinear;
        cfg.align_breakpoints = s.align_breakpoints;
        cfg.validate().map_err(|e| keyed("solver", e))?;
        Ok(cfg)
    }

    pub fn grid(&self) -> Result<Arc<Grid<f64>>, CliError> {
        Grid::new(self.model.d, self.grid.n, self.grid.half_length).map_err(|e| keyed("grid", e))
    }

    pub fn t0(&self) -> f64 {
        self.experiment.t0.unwrap_or(0.0)
    }

    pub fn require<T: Clone>(&self, value: &Option<T>, key: &str, command: &str) -> Result<T, CliError> {
        value
            .clone()
            .ok_or_else(|| bad(key, format!("is required by the `{command}` subcommand")))
    }

    /// Ground state on the configured (or default) auxiliary grid.
    pub fn ground_state(&self) -> Result<GroundState<f64>, CliError> {
        let d = self.model.d;
        let cap = if d == 1 { 2048 } else { 256 };
        let n = self.groundstate.n.unwrap_or(self.grid.n.min(cap));
        let l = self.groundstate.half_length.unwrap_or(self.grid.half_length);
        let grid = Grid::new(d, n, l).map_err(|e| keyed("groundstate", e))?;
        let tol = self.groundstate.tol.unwrap_or(1e-10);
        let max_iter = self.groundstate.max_iter.unwrap_or(1000);
        petviashvili(&grid, d, tol, max_iter).map_err(CliError::Run)
    }

    /// Builds the initial field and its start time.
    pub fn initial_field(&self, ground_state: Option<&GroundState<f64>>) -> Result<(Field<f64>, f64), CliError> {
        let grid = self.grid()?;
        let needs_gs = matches!(
            self.initial_datum,
            InitialDatum::GroundState { .. } | InitialDatum::PseudoConformal { .. }
        );
        let computed = match (needs_gs, ground_state) {
            (true, None) => Some(self.ground_state()?),
            _ => None,
        };
        let gs = ground_state.or(computed.as_ref());
        let gamma_plus = self.map.gamma_plus;
        let field = match &self.initial_datum {
            InitialDatum::Gaussian { amplitude, width } => {
                let (a, w) = (*amplitude, *width);
                Field::from_fn(grid, |x| {
                    let r2: f64 = x.iter().map(|v| v * v).sum();
                    Complex::new(a * (-r2 / (2.0 * w * w)).exp(), 0.0)
                })?
            }
            InitialDatum::GroundState { mass_ratio } => {
                let gs = gs.expect("ground state computed");
                threshold_datum(gs, gamma_plus, ThresholdDatum::GroundState, *mass_ratio, &grid)?
            }
            InitialDatum::PseudoConformal {
                a,
                mass_ratio,
                defocusing_start,
            } => {
                let gs = gs.expect("ground state computed");
                match defocusing_start {
                    None => threshold_datum(
                        gs,
                        gamma_plus,
                        ThresholdDatum::PseudoConformal { a: *a },
                        *mass_ratio,
                        &grid,
                    )?,
                    Some(start) => {
                        let profile = BlowupProfile::new(*a, gamma_plus, gs.clone())?;
                        let map = self.dispersion_map()?;
                        let seed = blowup_seed_after_defocusing(&profile, &map, *start, &self.solver_config()?, &grid)?;
                        return Ok((seed.scale(*mass_ratio), *start));
                    }
                }
            }
            InitialDatum::Checkpoint { path } => {
                let ckpt = load_checkpoint::<f64>(path)?;
                if ckpt.field.grid() != &grid {
                    return Err(bad(
                        "initial_datum.path",
                        "checkpoint grid differs from [grid] and model.d",
                    ));
                }
                return Ok((ckpt.field.physical(), ckpt.time));
            }
        };
        Ok((field, self.t0()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[model]
d = 1
p = 3.0

[map]
gamma_plus = 1.0
gamma_minus = 1.0
t_plus = 0.5
epsilon = 0.5

[grid]
n = 64
half_length = 10.0

[solver]
dt_max = 0.01

[initial_datum]
kind = "gaussian"
"#;

    #[test]
    fn parses_with_defaults() {
        let cfg = RunConfig::from_toml_str(BASE).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.solver.output_stride, 1);
        assert_eq!(cfg.solver.blowup_gradient_factor, 100.0);
        assert_eq!(
            cfg.initial_datum,
            InitialDatum::Gaussian {
                amplitude: 1.0,
                width: 1.0
            }
        );
        assert!(cfg.solver_config().unwrap().dealias);
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = BASE.replace("t_plus = 0.5", "t_plus = 0.5\ngamma_mnus = 1.0");
        let err = RunConfig::from_toml_str(&text).unwrap_err().to_string();
        assert!(err.contains("gamma_mnus"), "{err}");
        let text = BASE.replace("kind = \"gaussian\"", "kind = \"gaussian\"\nsigma = 2.0");
        assert!(RunConfig::from_toml_str(&text).is_err());
    }

    #[test]
    fn constraint_messages_name_the_key() {
        let text = BASE.replace("t_plus = 0.5", "t_plus = 1.5");
        let err = RunConfig::from_toml_str(&text)
            .unwrap()
            .validate()
            .unwrap_err()
            .to_string();
        assert!(err.contains("map.t_plus") && err.contains("0 < t_plus < 1"), "{err}");
        let text = BASE.replace("dt_max = 0.01", "dt_max = 0.3");
        let err = RunConfig::from_toml_str(&text)
            .unwrap()
            .validate()
            .unwrap_err()
            .to_string();
        assert!(err.contains("solver.dt_max"), "{err}");
        let text = BASE.replace("n = 64", "n = 63");
        let err = RunConfig::from_toml_str(&text)
            .unwrap()
            .validate()
            .unwrap_err()
            .to_string();
        assert!(err.contains("grid.n"), "{err}");
        let text = BASE.replace("kind = \"gaussian\"", "kind = \"ground_state\"");
        let err = RunConfig::from_toml_str(&text)
            .unwrap()
            .validate()
            .unwrap_err()
            .to_string();
        assert!(err.contains("model.p"), "{err}");
    }

    #[test]
    fn json_round_trip() {
        let text = BASE.replace(
            "[initial_datum]",
            "[experiment]\nepsilons = [0.2, 0.1]\nsweep = \"zero_mean\"\n\n[initial_datum]",
        );
        let cfg = RunConfig::from_toml_str(&text).unwrap();
        assert_eq!(RunConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    }
}
