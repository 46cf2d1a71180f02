//! Experiment drivers: epsilon sweeps, blow-up threshold studies, splitting
//! order studies, and their CSV / JSON persistence.

use std::collections::HashMap;
use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dispersion::{ConstantDispersion, DispersionMap, DispersionSchedule};
use crate::error::{invalid, Error, Result};
use crate::groundstate::{critical_exponent, GroundState};
use crate::reference::{pseudoconformal_field, zero_mean_averaged, BlowupProfile};
use crate::scalar::{Complex, Real};
use crate::solver::{evolve, evolve_observed, BlowupTrigger, DiagnosticsRecord, SolverConfig};
use crate::spectral::{sobolev_norm, Field, Grid};

pub use crate::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};

/// Minimum number of uniform samples standing in for the sup over time.
pub const MIN_SAMPLES: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult<T> {
    pub epsilon: T,
    /// Sup over sampled times of `||u_eps - u_0||_{H^2}`.
    pub error_h2: T,
    pub error_l2: T,
    pub sample_times: Vec<T>,
    /// Seconds.
    pub wall_time: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepReport<T> {
    pub results: Vec<SweepResult<T>>,
    pub averaged_gamma: T,
    /// `p < 2`: outside the range where H^2 convergence is proven.
    pub outside_hypotheses: bool,
    /// Least-squares slope of `log error_h2` against `log eps`; recorded, not asserted.
    pub empirical_slope: Option<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroMeanRow<T> {
    pub epsilon: T,
    /// Sup over sampled times of `||u_eps - phi e^{i t |phi|^{p-1}}||_{H^2}`.
    pub error_h2: T,
    /// Sup over sampled times of `|| |u_eps| - |phi| ||_{L^2}`.
    pub defect: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdOutcome {
    Survived,
    BlewUp,
    /// Growth was flagged by the resolution monitor or after the grid stopped
    /// resolving the concentrating core.
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdStudyResult<T> {
    /// `||phi||_{L^2} / critical mass`.
    pub mass_ratio: T,
    pub blew_up: bool,
    pub outcome: ThresholdOutcome,
    pub horizon: T,
    pub detection_time: Option<T>,
    /// Largest `||grad u(t)||^2 / ||grad phi||^2` seen.
    pub max_growth: T,
}

/// Initial data for a threshold study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdDatum<T> {
    /// `c Q(x / sqrt(gamma_plus))`.
    GroundState,
    /// `c v_a(0)`: the rescaled ground state with the focusing chirp of rate `a`.
    PseudoConformal { a: T },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrderReport<T> {
    pub dts: Vec<T>,
    /// `||u_{dt_k} - u_{dt_{k+1}}||_{L^2}`, one entry per consecutive pair.
    pub differences: Vec<T>,
    /// `log2(differences[k] / differences[k+1])`.
    pub orders: Vec<T>,
    /// Estimate from the finest triple; `None` when the differences sit at
    /// the roundoff floor (the scheme is exact for this problem).
    pub order: Option<T>,
}

impl<T: Real> OrderReport<T> {
    pub fn is_exact(&self) -> bool {
        self.order.is_none()
    }
}

fn uniform_samples<T: Real>(t0: T, t1: T, count: usize) -> Vec<T> {
    let span = t1 - t0;
    let last = count - 1;
    (0..count)
        .map(|k| {
            if k == last {
                t1
            } else {
                t0 + span * T::from_count(k) / T::from_count(last)
            }
        })
        .collect()
}

/// Uniform samples plus every breakpoint of `map` in `(t0, t1)`, sorted.
pub fn sample_times<T: Real>(map: &DispersionMap<T>, t0: T, t1: T, count: usize) -> Result<Vec<T>> {
    if count < 2 {
        return Err(invalid("sample_count", "must be at least 2"));
    }
    let mut times = uniform_samples(t0, t1, count);
    times.extend(map.breakpoints_between(t0, t1)?.into_iter().map(|b| b.time));
    times.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    times.dedup();
    Ok(times)
}

fn check_epsilons<T: Real>(epsilons: &[T]) -> Result<()> {
    if epsilons.is_empty() {
        return Err(invalid("epsilons", "must not be empty"));
    }
    if epsilons.iter().any(|&e| !(e > T::zero() && e.is_finite())) {
        return Err(invalid("epsilons", "must all be > 0"));
    }
    if epsilons.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(invalid("epsilons", "must be strictly decreasing"));
    }
    Ok(())
}

fn log_slope<T: Real>(xs: &[T], ys: &[T]) -> Option<T> {
    let pts: Vec<(T, T)> = xs
        .iter()
        .zip(ys)
        .filter(|(_, &y)| y > T::zero())
        .map(|(&x, &y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = T::from_count(pts.len());
    let mx = pts.iter().map(|p| p.0).sum::<T>() / n;
    let my = pts.iter().map(|p| p.1).sum::<T>() / n;
    let sxy: T = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: T = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    (sxx > T::zero()).then(|| sxy / sxx)
}

/// Runs `u_eps` for one epsilon and reduces `metric(t, u_eps(t))` by max over
/// the sample times.
fn sup_over_samples<T: Real, const K: usize>(
    phi: &Field<T>,
    map: &DispersionMap<T>,
    t0: T,
    t1: T,
    cfg: &SolverConfig<T>,
    times: &[T],
    metric: impl Fn(usize, &Field<T>) -> [T; K] + Sync,
) -> Result<[T; K]> {
    let mut sup = [T::zero(); K];
    let ev = evolve_observed(phi, map, t0, t1, cfg, times, |i, _, u| {
        for (s, v) in sup.iter_mut().zip(metric(i, u)) {
            *s = s.max(v);
        }
    })?;
    if let Some(b) = ev.blowup {
        return Err(Error::Domain(format!(
            "run at epsilon = {} triggered the blow-up monitor at t = {}",
            map.epsilon, b.detection_time
        )));
    }
    Ok(sup)
}

/// Distance between `u_eps` and the solution of the averaged equation with
/// the constant coefficient `<gamma>`, for each epsilon.
pub fn epsilon_sweep<T: Real>(
    phi: &Field<T>,
    map_template: &DispersionMap<T>,
    epsilons: &[T],
    t0: T,
    t1: T,
    cfg: &SolverConfig<T>,
    sample_count: usize,
) -> Result<SweepReport<T>> {
    check_epsilons(epsilons)?;
    if !(t0 < t1) {
        return Err(invalid("horizon", format!("need t0 < T, got [{t0}, {t1}]")));
    }
    if sample_count < MIN_SAMPLES {
        return Err(invalid("sample_count", format!("must be at least {MIN_SAMPLES}")));
    }
    let maps = epsilons
        .iter()
        .map(|&e| map_template.with_epsilon(e))
        .collect::<Result<Vec<_>>>()?;
    for m in &maps {
        cfg.validate_for(m)?;
    }
    let per_eps_times = maps
        .iter()
        .map(|m| sample_times(m, t0, t1, sample_count))
        .collect::<Result<Vec<_>>>()?;

    let mut all: Vec<T> = per_eps_times.iter().flatten().copied().collect();
    all.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    all.dedup();
    let index: HashMap<u64, usize> = all.iter().enumerate().map(|(i, t)| (t.as_f64().to_bits(), i)).collect();

    let gamma0 = map_template.average_dispersion();
    let mut snapshots: Vec<Option<Field<T>>> = vec![None; all.len()];
    let averaged = evolve_observed(phi, &ConstantDispersion(gamma0), t0, t1, cfg, &all, |i, _, u| {
        snapshots[i] = Some(u.clone());
    })?;
    if let Some(b) = averaged.blowup {
        return Err(Error::AveragedBlowup {
            time: b.detection_time.as_f64(),
            horizon: t1.as_f64(),
        });
    }
    let snapshots: Vec<Field<T>> = snapshots.into_iter().map(|s| s.expect("every stop observed")).collect();

    let results = maps
        .par_iter()
        .zip(per_eps_times.par_iter())
        .map(|(map, times)| {
            let start = Instant::now();
            let [h2, l2] = sup_over_samples(phi, map, t0, t1, cfg, times, |i, u| {
                let reference = &snapshots[index[&times[i].as_f64().to_bits()]];
                let diff = u.difference(reference).expect("same grid");
                [sobolev_norm(&diff, T::lit(2.0)), diff.l2_norm()]
            })?;
            Ok(SweepResult {
                epsilon: map.epsilon,
                error_h2: h2,
                error_l2: l2,
                sample_times: times.clone(),
                wall_time: start.elapsed().as_secs_f64(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let errs: Vec<T> = results.iter().map(|r| r.error_h2).collect();
    Ok(SweepReport {
        empirical_slope: log_slope(epsilons, &errs),
        results,
        averaged_gamma: gamma0,
        outside_hypotheses: cfg.p < T::lit(2.0),
    })
}

/// Zero-mean maps: compares `u_eps` with the closed-form averaged solution
/// `phi e^{i (t - t0) |phi|^{p-1}}` and measures how far `|u_eps|` strays from `|phi|`.
pub fn zero_mean_validation<T: Real>(
    phi: &Field<T>,
    map: &DispersionMap<T>,
    epsilons: &[T],
    t0: T,
    t1: T,
    cfg: &SolverConfig<T>,
    sample_count: usize,
) -> Result<Vec<ZeroMeanRow<T>>> {
    check_epsilons(epsilons)?;
    let scale = map.gamma_plus + map.gamma_minus;
    if map.average_dispersion().abs() > T::lit(1e-12) * scale {
        return Err(Error::Config(format!(
            "zero-mean validation needs <gamma> = 0, got {}",
            map.average_dispersion()
        )));
    }
    if sample_count < MIN_SAMPLES {
        return Err(invalid("sample_count", format!("must be at least {MIN_SAMPLES}")));
    }
    let phi = phi.physical();
    let modulus = phi.modulus();
    let p = if cfg.nonlinear { cfg.p } else { T::one() };
    epsilons
        .par_iter()
        .map(|&e| {
            let m = map.with_epsilon(e)?;
            cfg.validate_for(&m)?;
            let times = sample_times(&m, t0, t1, sample_count)?;
            let [h2, defect] = sup_over_samples(&phi, &m, t0, t1, cfg, &times, |i, u| {
                // p = 1 gives the constant phase e^{i(t-t0)}; undo it for the linear case
                let reference = if cfg.nonlinear {
                    zero_mean_averaged(&phi, times[i], t0, p)
                } else {
                    phi.clone()
                };
                let diff = u.difference(&reference).expect("same grid");
                let dm = u.modulus().difference(&modulus).expect("same grid");
                [sobolev_norm(&diff, T::lit(2.0)), dm.l2_norm()]
            })?;
            Ok(ZeroMeanRow {
                epsilon: e,
                error_h2: h2,
                defect,
            })
        })
        .collect()
}

/// Threshold datum on `grid`, scaled to `mass_ratio` times the critical mass.
pub fn threshold_datum<T: Real>(
    ground_state: &GroundState<T>,
    gamma_plus: T,
    datum: ThresholdDatum<T>,
    mass_ratio: T,
    grid: &Arc<Grid<T>>,
) -> Result<Field<T>> {
    let a = match datum {
        ThresholdDatum::GroundState => None,
        ThresholdDatum::PseudoConformal { a } => Some(a),
    };
    // any positive rate gives the same modulus; the chirp is dropped below if unused
    let profile = BlowupProfile::new(a.unwrap_or(T::one()), gamma_plus, ground_state.clone())?;
    let base = if a.is_some() {
        pseudoconformal_field(&profile, T::zero(), grid)?
    } else {
        let width = gamma_plus.sqrt();
        Field::from_fn(grid.clone(), |x| {
            let r2: T = x.iter().map(|&v| v * v).sum();
            Complex::new(profile.q(r2.sqrt() / width), T::zero())
        })?
    };
    Ok(base.scale(mass_ratio))
}

/// Evolves `mass_ratio * (critical datum)` for `periods` periods of `map` and
/// records whether the blow-up monitor fires.
#[allow(clippy::too_many_arguments)]
pub fn threshold_study<T: Real>(
    mass_ratios: &[T],
    map: &DispersionMap<T>,
    periods: usize,
    cfg: &SolverConfig<T>,
    ground_state: &GroundState<T>,
    datum: ThresholdDatum<T>,
    grid: &Arc<Grid<T>>,
) -> Result<Vec<ThresholdStudyResult<T>>> {
    let d = ground_state.dimension;
    if !(d == 1 || d == 2) || grid.dimension() != d {
        return Err(invalid("d", "threshold studies need d in {1, 2} matching the grid"));
    }
    if (cfg.p - critical_exponent::<T>(d)).abs() > T::lit(1e-12) {
        return Err(invalid(
            "p",
            format!(
                "must equal the mass-critical exponent 1 + 4/d = {}",
                critical_exponent::<T>(d)
            ),
        ));
    }
    if periods == 0 {
        return Err(invalid("periods", "must be a positive integer"));
    }
    if mass_ratios.iter().any(|&r| !(r >= T::zero() && r <= T::lit(2.0))) {
        return Err(invalid("mass_ratios", "must lie in [0, 2]"));
    }
    cfg.validate_for(map)?;
    let horizon = map.epsilon * T::from_count(periods);
    let resolved_until = match datum {
        ThresholdDatum::PseudoConformal { a } => {
            Some(BlowupProfile::new(a, map.gamma_plus, ground_state.clone())?.resolved_until(grid))
        }
        ThresholdDatum::GroundState => None,
    };
    mass_ratios
        .par_iter()
        .map(|&ratio| {
            let phi = threshold_datum(ground_state, map.gamma_plus, datum, ratio, grid)?;
            let ev = evolve(&phi, map, T::zero(), horizon, cfg)?;
            let (outcome, detection_time) = match ev.blowup {
                None => (ThresholdOutcome::Survived, None),
                Some(b) => {
                    let late = resolved_until.is_some_and(|r| b.detection_time > r);
                    let outcome = if b.trigger == BlowupTrigger::SpectralTail || late {
                        ThresholdOutcome::Inconclusive
                    } else {
                        ThresholdOutcome::BlewUp
                    };
                    (outcome, Some(b.detection_time))
                }
            };
            Ok(ThresholdStudyResult {
                mass_ratio: ratio,
                blew_up: outcome == ThresholdOutcome::BlewUp,
                outcome,
                horizon,
                detection_time,
                max_growth: ev.max_growth,
            })
        })
        .collect()
}

/// Self-convergence order of the terminal state over a halving sequence of
/// time steps.
pub fn splitting_order_study<T: Real, S: DispersionSchedule<T>>(
    phi: &Field<T>,
    schedule: &S,
    dts: &[T],
    t1: T,
    cfg: &SolverConfig<T>,
) -> Result<OrderReport<T>> {
    if dts.len() < 3 {
        return Err(invalid("dts", "need at least three step sizes"));
    }
    for w in dts.windows(2) {
        if ((w[0] / w[1]) - T::lit(2.0)).abs() > T::lit(1e-9) {
            return Err(invalid("dts", "must form a halving sequence"));
        }
    }
    let finals = dts
        .par_iter()
        .map(|&dt| {
            let run = SolverConfig { dt_max: dt, ..*cfg };
            evolve(phi, schedule, T::zero(), t1, &run).map(|e| e.field)
        })
        .collect::<Result<Vec<_>>>()?;
    let norm = finals.last().expect("nonempty").l2_norm().max(T::min_positive_value());
    let differences: Vec<T> = finals
        .windows(2)
        .map(|w| w[0].difference(&w[1]).expect("same grid").l2_norm())
        .collect();
    let orders: Vec<T> = differences.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let floor = T::lit(1e-12) * norm;
    let order = if differences.iter().all(|&e| e <= floor) {
        None
    } else {
        orders.last().copied()
    };
    Ok(OrderReport {
        dts: dts.to_vec(),
        differences,
        orders,
        order,
    })
}

/// Largest relative change of the piecewise energy within a constant-`gamma`
/// stretch of consecutive diagnostics records.
pub fn piecewise_energy_drift<T: Real>(records: &[DiagnosticsRecord<T>]) -> T {
    let mut drift = T::zero();
    let mut start: Option<&DiagnosticsRecord<T>> = None;
    for r in records {
        match start {
            Some(s) if s.current_gamma == r.current_gamma => {
                let scale = s.piecewise_energy.abs().max(T::min_positive_value());
                drift = drift.max((r.piecewise_energy - s.piecewise_energy).abs() / scale);
            }
            _ => start = Some(r),
        }
    }
    drift
}

/// Largest relative deviation of the mass from its first recorded value.
pub fn mass_drift<T: Real>(records: &[DiagnosticsRecord<T>]) -> T {
    let Some(first) = records.first() else { return T::zero() };
    let m0 = first.mass.max(T::min_positive_value());
    records
        .iter()
        .map(|r| (r.mass - first.mass).abs() / m0)
        .fold(T::zero(), T::max)
}

pub fn format_number<T: Real>(v: T) -> String {
    format!("{:.16e}", v.as_f64())
}

fn csv_writer<W: Write>(w: W, header: &[&str]) -> Result<csv::Writer<W>> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header).map_err(csv_err)?;
    Ok(out)
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Domain(format!("csv: {other:?}")),
    }
}

fn write_rows<W: Write>(w: W, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut out = csv_writer(w, header)?;
    for row in rows {
        out.write_record(&row).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_diagnostics_csv<T: Real, W: Write>(w: W, records: &[DiagnosticsRecord<T>]) -> Result<()> {
    let header: Vec<&str> = DiagnosticsRecord::<T>::CSV_HEADER.split(',').collect();
    write_rows(
        w,
        &header,
        records.iter().map(|r| {
            [
                r.time,
                r.mass,
                r.grad_sq,
                r.linf,
                r.piecewise_energy,
                r.current_gamma,
                r.tail_fraction,
            ]
            .into_iter()
            .map(format_number)
            .collect()
        }),
    )
}

pub fn write_sweep_csv<T: Real, W: Write>(w: W, results: &[SweepResult<T>]) -> Result<()> {
    write_rows(
        w,
        &["epsilon", "error_h2", "error_l2"],
        results.iter().map(|r| {
            vec![
                format_number(r.epsilon),
                format_number(r.error_h2),
                format_number(r.error_l2),
            ]
        }),
    )
}

pub fn write_zero_mean_csv<T: Real, W: Write>(w: W, rows: &[ZeroMeanRow<T>]) -> Result<()> {
    write_rows(
        w,
        &["epsilon", "error_h2", "defect"],
        rows.iter().map(|r| {
            vec![
                format_number(r.epsilon),
                format_number(r.error_h2),
                format_number(r.defect),
            ]
        }),
    )
}

pub fn write_threshold_csv<T: Real, W: Write>(w: W, results: &[ThresholdStudyResult<T>]) -> Result<()> {
    write_rows(
        w,
        &["mass_ratio", "blew_up", "detection_time", "outcome", "max_growth"],
        results.iter().map(|r| {
            let outcome = match r.outcome {
                ThresholdOutcome::Survived => "survived",
                ThresholdOutcome::BlewUp => "blew_up",
                ThresholdOutcome::Inconclusive => "inconclusive",
            };
            vec![
                format_number(r.mass_ratio),
                r.blew_up.to_string(),
                r.detection_time.map(format_number).unwrap_or_default(),
                outcome.to_string(),
                format_number(r.max_growth),
            ]
        }),
    )
}

pub fn write_order_csv<T: Real, W: Write>(w: W, report: &OrderReport<T>) -> Result<()> {
    write_rows(
        w,
        &["dt", "difference_to_next", "order"],
        report.dts.iter().enumerate().map(|(i, &dt)| {
            vec![
                format_number(dt),
                report
                    .differences
                    .get(i)
                    .copied()
                    .map(format_number)
                    .unwrap_or_default(),
                report.orders.get(i).copied().map(format_number).unwrap_or_default(),
            ]
        }),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Completed,
    ValidationFailed,
    Failed,
    Aborted,
}

/// JSON record written next to every run's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub config_hash: String,
    pub git_describe: String,
    pub wall_time: f64,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

/// SHA-256 of the canonical (key-sorted) JSON form of a config.
pub fn config_hash(config: &serde_json::Value) -> String {
    let canonical = serde_json::to_string(config).expect("JSON values serialize");
    Sha256::digest(canonical.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value, git_describe: String) -> Self {
        Self {
            command: command.to_string(),
            config_hash: config_hash(&config),
            config,
            git_describe,
            wall_time: 0.0,
            status: RunStatus::Running,
            seed: None,
            message: None,
        }
    }

    pub fn write_to(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Domain(e.to_string()))?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }

    pub fn read_from(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("manifest: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groundstate::petviashvili;
    use crate::linear::averaging_gap_linear;

    fn gaussian(n: usize, l: f64) -> Field<f64> {
        let g = Grid::<f64>::new(1, n, l).unwrap();
        Field::from_fn(g, |x| Complex::new((-x[0] * x[0] / 2.0).exp(), 0.0)).unwrap()
    }

    #[test]
    fn samples_include_breakpoints_and_endpoints() {
        let m = DispersionMap::new(1.0, 1.0, 0.5, 0.2).unwrap();
        let t = sample_times(&m, 0.0, 1.0, 32).unwrap();
        assert_eq!(t[0], 0.0);
        assert_eq!(*t.last().unwrap(), 1.0);
        for b in m.breakpoints_between(0.0, 1.0).unwrap() {
            assert!(t.contains(&b.time));
        }
        assert!(t.windows(2).all(|w| w[0] < w[1]));
        assert!(sample_times(&m, 0.0, 1.0, 1).is_err());
    }

    #[test]
    fn sweep_rejects_bad_input() {
        let phi = gaussian(64, 10.0);
        let m = DispersionMap::new(1.0, 1.0, 0.5, 1.0).unwrap();
        let cfg = SolverConfig::new(0.01, 3.0);
        assert!(epsilon_sweep(&phi, &m, &[0.1, 0.2], 0.0, 1.0, &cfg, 32).is_err());
        assert!(epsilon_sweep(&phi, &m, &[0.2, 0.1], 0.0, 1.0, &cfg, 8).is_err());
        assert!(epsilon_sweep(&phi, &m, &[], 0.0, 1.0, &cfg, 32).is_err());
        let nonzero = DispersionMap::new(2.0, 1.0, 0.5, 1.0).unwrap();
        assert!(matches!(
            zero_mean_validation(&phi, &nonzero, &[0.2], 0.0, 1.0, &cfg, 32),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn linear_sweep_equals_multiplier_gap() {
        let phi = gaussian(128, 12.0);
        let m = DispersionMap::new(2.0, 1.0, 0.4, 1.0).unwrap();
        let cfg = SolverConfig::linear(0.01);
        let report = epsilon_sweep(&phi, &m, &[0.4, 0.2], 0.0, 1.0, &cfg, 32).unwrap();
        for r in &report.results {
            let me = m.with_epsilon(r.epsilon).unwrap();
            let gap = r
                .sample_times
                .iter()
                .map(|&t| averaging_gap_linear(&phi, &me, 0.0, t, 2.0))
                .fold(0.0, f64::max);
            assert!((r.error_h2 - gap).abs() < 1e-8, "{} vs {gap}", r.error_h2);
        }
        assert!(!report.outside_hypotheses);
    }

    #[test]
    fn zero_mean_trivial_cases() {
        let phi = gaussian(64, 10.0);
        let m = DispersionMap::new(1.0, 1.0, 0.5, 1.0).unwrap();
        let rows = zero_mean_validation(&phi, &m, &[0.5], 0.0, 1.0, &SolverConfig::linear(0.01), 32).unwrap();
        assert!(rows[0].defect > 0.0);
        let z = Field::zeros(phi.grid().clone());
        let rows = zero_mean_validation(&z, &m, &[0.5], 0.0, 1.0, &SolverConfig::new(0.01, 3.0), 32).unwrap();
        assert_eq!(rows[0].defect, 0.0);
        assert_eq!(rows[0].error_h2, 0.0);
    }

    #[test]
    fn averaged_blowup_is_reported() {
        let g = Grid::<f64>::new(1, 256, 12.0).unwrap();
        let phi = Field::from_fn(g, |x| Complex::new(3.0 * (-x[0] * x[0]).exp(), 0.0)).unwrap();
        // focusing mean, supercritical quintic
        let m = DispersionMap::new(2.0, 0.5, 0.8, 1.0).unwrap();
        let mut cfg = SolverConfig::new(1e-3, 5.0);
        cfg.blowup_gradient_factor = 20.0;
        let err = epsilon_sweep(&phi, &m, &[0.2], 0.0, 2.0, &cfg, 32).unwrap_err();
        assert!(matches!(err, Error::AveragedBlowup { .. }), "{err}");
        assert!(err.to_string().contains("shorter horizon"));
    }

    #[test]
    fn threshold_survival_and_trivial_zero() {
        let g = Grid::<f64>::new(1, 256, 20.0).unwrap();
        let gs = petviashvili(&Grid::<f64>::new(1, 512, 20.0).unwrap(), 1, 1e-10, 500).unwrap();
        let m = DispersionMap::new(1.0, 1.0, 0.5, 1.0).unwrap();
        let cfg = SolverConfig::new(0.01, 5.0);
        let res = threshold_study(&[0.0, 0.5], &m, 2, &cfg, &gs, ThresholdDatum::GroundState, &g).unwrap();
        assert!(res
            .iter()
            .all(|r| !r.blew_up && r.outcome == ThresholdOutcome::Survived));
        assert_eq!(res[0].mass_ratio, 0.0);
        let phi = threshold_datum(&gs, 1.0, ThresholdDatum::GroundState, 0.5, &g).unwrap();
        assert!((phi.l2_norm() - 0.5 * gs.mass).abs() < 1e-8);
        assert!(threshold_study(&[2.5], &m, 1, &cfg, &gs, ThresholdDatum::GroundState, &g).is_err());
        let cubic = SolverConfig::new(0.01, 3.0);
        assert!(threshold_study(&[0.5], &m, 1, &cubic, &gs, ThresholdDatum::GroundState, &g).is_err());
    }

    #[test]
    fn linear_order_is_exact() {
        let phi = gaussian(128, 12.0);
        let m = DispersionMap::new(1.0, 2.0, 0.5, 0.5).unwrap();
        let r = splitting_order_study(&phi, &m, &[0.05, 0.025, 0.0125], 1.0, &SolverConfig::linear(0.05)).unwrap();
        assert!(r.is_exact(), "{:?}", r.differences);
        assert!(splitting_order_study(&phi, &m, &[0.05, 0.02, 0.01], 1.0, &SolverConfig::linear(0.05)).is_err());
    }

    #[test]
    fn drift_helpers() {
        let rec = |gamma: f64, e: f64, mass: f64| DiagnosticsRecord {
            time: 0.0,
            mass,
            grad_sq: 0.0,
            linf: 0.0,
            piecewise_energy: e,
            current_gamma: gamma,
            tail_fraction: 0.0,
        };
        let rs = [
            rec(1.0, 2.0, 1.0),
            rec(1.0, 2.1, 1.0),
            rec(-1.0, 5.0, 1.0),
            rec(-1.0, 5.0, 1.0 + 1e-9),
        ];
        assert!((piecewise_energy_drift(&rs) - 0.05).abs() < 1e-12);
        assert!((mass_drift(&rs) - 1e-9).abs() < 1e-15);
    }

    #[test]
    fn csv_reloads_exactly() {
        let results = vec![
            SweepResult {
                epsilon: 0.2,
                error_h2: 1.0 / 3.0,
                error_l2: std::f64::consts::PI * 1e-7,
                sample_times: vec![],
                wall_time: 0.0,
            },
            SweepResult {
                epsilon: 0.1,
                error_h2: 2.0f64.sqrt(),
                error_l2: 1e-300,
                sample_times: vec![],
                wall_time: 0.0,
            },
        ];
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, &results).unwrap();
        let mut reader = csv::Reader::from_reader(&buf[..]);
        assert_eq!(reader.headers().unwrap(), vec!["epsilon", "error_h2", "error_l2"]);
        for (row, r) in reader.records().zip(&results) {
            let row = row.unwrap();
            let parsed: Vec<f64> = row.iter().map(|s| s.parse().unwrap()).collect();
            assert_eq!(parsed, vec![r.epsilon, r.error_h2, r.error_l2]);
        }
    }

    #[test]
    fn manifest_round_trip() {
        let cfg = serde_json::json!({"b": 1, "a": [1.5, 2.0]});
        let m = RunManifest::new("sweep", cfg.clone(), "v0".into());
        assert_eq!(m.config_hash.len(), 64);
        let reordered: serde_json::Value = serde_json::from_str(r#"{"a": [1.5, 2.0], "b": 1}"#).unwrap();
        assert_eq!(config_hash(&reordered), m.config_hash);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        m.write_to(&path).unwrap();
        assert_eq!(RunManifest::read_from(&path).unwrap(), m);
    }
}
