//! The run subcommands.

use std::fs::File;
use std::io::{BufWriter, Write};

use serde::Serialize;

use dmnls::groundstate::petviashvili;
use dmnls::groundstate::{critical_mass, gn_ratio};
use dmnls::lab::{
    epsilon_sweep, format_number, mass_drift, piecewise_energy_drift, save_checkpoint, splitting_order_study,
    threshold_study, write_diagnostics_csv, write_order_csv, write_sweep_csv, write_threshold_csv, write_zero_mean_csv,
    zero_mean_validation, ThresholdDatum, ThresholdOutcome, MIN_SAMPLES,
};
use dmnls::solver::{evolve, BlowupTrigger};

use crate::config::{InitialDatum, SweepKind};
use crate::{CliError, Outcome, RunConfig, RunContext};

fn create(ctx: &RunContext, name: &str) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(ctx.path(name))?))
}

fn write_json<S: Serialize>(ctx: &RunContext, name: &str, value: &S) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Config(e.to_string()))?;
    std::fs::write(ctx.path(name), text + "\n")?;
    Ok(())
}

fn write_table(ctx: &RunContext, name: &str, header: &str, rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut w = create(ctx, name)?;
    writeln!(w, "{header}")?;
    for row in rows {
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn simulate(cfg: &RunConfig, ctx: &RunContext) -> Result<Outcome, CliError> {
    let horizon = cfg.require(&cfg.experiment.horizon, "experiment.horizon", "simulate")?;
    let map = cfg.dispersion_map()?;
    let solver = cfg.solver_config()?;
    let (phi, t0) = cfg.initial_field(None)?;
    if !(horizon > t0) {
        return Err(CliError::Config(format!(
            "`experiment.horizon` must exceed the start time {t0}, got {horizon}"
        )));
    }
    std::fs::create_dir_all(ctx.path("checkpoints"))?;
    save_checkpoint(&phi, t0, ctx.path("checkpoints/initial.ckpt"))?;
    let ev = evolve(&phi, &map, t0, horizon, &solver)?;
    write_diagnostics_csv(create(ctx, "diagnostics.csv")?, &ev.diagnostics)?;
    save_checkpoint(&ev.field, ev.final_time, ctx.path("checkpoints/final.ckpt"))?;

    let m_drift = mass_drift(&ev.diagnostics);
    let e_drift = piecewise_energy_drift(&ev.diagnostics);
    let (blew_up, detection, trigger) = match &ev.blowup {
        Some(b) => (
            true,
            format_number(b.detection_time),
            match b.trigger {
                BlowupTrigger::GradientGrowth => "gradient_growth",
                BlowupTrigger::SpectralTail => "spectral_tail",
            },
        ),
        None => (false, String::new(), ""),
    };
    write_table(
        ctx,
        "results.csv",
        "final_time,mass_drift,energy_drift,max_growth,blew_up,detection_time,trigger",
        &[vec![
            format_number(ev.final_time),
            format_number(m_drift),
            format_number(e_drift),
            format_number(ev.max_growth),
            blew_up.to_string(),
            detection,
            trigger.to_string(),
        ]],
    )?;
    let mut summary = Vec::new();
    if let Some(dts) = &cfg.experiment.dts {
        if t0 != 0.0 {
            return Err(CliError::Config(
                "`experiment.dts` needs the run to start at t = 0".into(),
            ));
        }
        let report = splitting_order_study(&phi, &map, dts, horizon, &solver)?;
        write_order_csv(create(ctx, "order.csv")?, &report)?;
        summary.push(match report.order {
            Some(p) => format!("splitting order {p:.3}"),
            None => "splitting differences at roundoff: the scheme is exact here".into(),
        });
    }
    summary.extend([
        format!("integrated t = {t0} .. {}", ev.final_time),
        format!("mass drift            {m_drift:.3e}"),
        format!("piecewise energy drift {e_drift:.3e}"),
        format!("max gradient growth   {:.3e}", ev.max_growth),
    ]);
    if let Some(b) = ev.blowup {
        summary.push(format!("blow-up flagged at t = {} ({:?})", b.detection_time, b.trigger));
    }
    Ok(Outcome { summary, failure: None })
}

#[derive(Serialize)]
struct SweepSummary {
    averaged_gamma: f64,
    outside_hypotheses: bool,
    empirical_slope: Option<f64>,
    wall_times: Vec<f64>,
}

pub fn sweep(cfg: &RunConfig, ctx: &RunContext) -> Result<Outcome, CliError> {
    let e = &cfg.experiment;
    let horizon = cfg.require(&e.horizon, "experiment.horizon", "sweep")?;
    let epsilons = cfg.require(&e.epsilons, "experiment.epsilons", "sweep")?;
    let samples = e.sample_count.unwrap_or(MIN_SAMPLES);
    let map = cfg.dispersion_map()?;
    let solver = cfg.solver_config()?;
    let (phi, t0) = cfg.initial_field(None)?;
    let mut summary = Vec::new();
    match e.sweep.unwrap_or(SweepKind::Averaged) {
        SweepKind::Averaged => {
            let report = epsilon_sweep(&phi, &map, &epsilons, t0, horizon, &solver, samples)?;
            write_sweep_csv(create(ctx, "results.csv")?, &report.results)?;
            write_json(
                ctx,
                "sweep.json",
                &SweepSummary {
                    averaged_gamma: report.averaged_gamma,
                    outside_hypotheses: report.outside_hypotheses,
                    empirical_slope: report.empirical_slope,
                    wall_times: report.results.iter().map(|r| r.wall_time).collect(),
                },
            )?;
            summary.push(format!("averaged gamma {}", report.averaged_gamma));
            summary.push("epsilon                  error_h2                 error_l2".into());
            for r in &report.results {
                summary.push(format!("{:<24e} {:<24e} {:e}", r.epsilon, r.error_h2, r.error_l2));
            }
            if let Some(s) = report.empirical_slope {
                summary.push(format!("empirical slope {s:.3}"));
            }
            if report.outside_hypotheses {
                summary.push("note: p < 2 lies outside the range where H^2 convergence is proven".into());
            }
        }
        SweepKind::ZeroMean => {
            let rows = zero_mean_validation(&phi, &map, &epsilons, t0, horizon, &solver, samples)?;
            write_zero_mean_csv(create(ctx, "results.csv")?, &rows)?;
            summary.push("epsilon                  error_h2                 defect".into());
            for r in &rows {
                summary.push(format!("{:<24e} {:<24e} {:e}", r.epsilon, r.error_h2, r.defect));
            }
        }
    }
    Ok(Outcome { summary, failure: None })
}

#[derive(Serialize)]
struct GroundStateSummary {
    d: usize,
    p: f64,
    mass: f64,
    mass_squared: f64,
    residual: f64,
    iterations: usize,
    gn_ratio: f64,
}

pub fn groundstate(cfg: &RunConfig, ctx: &RunContext) -> Result<Outcome, CliError> {
    cfg.require_critical("the `groundstate` subcommand")?;
    let grid = cfg.grid()?;
    let g = &cfg.groundstate;
    let gs = petviashvili(&grid, cfg.model.d, g.tol.unwrap_or(1e-10), g.max_iter.unwrap_or(1000))?;
    std::fs::create_dir_all(ctx.path("checkpoints"))?;
    save_checkpoint(&gs.q_field, 0.0, ctx.path("checkpoints/groundstate.ckpt"))?;
    let s = GroundStateSummary {
        d: gs.dimension,
        p: gs.p,
        mass: gs.mass,
        mass_squared: gs.mass_squared(),
        residual: gs.residual_l2,
        iterations: gs.iterations,
        gn_ratio: gn_ratio(&gs.q_field, gs.mass, gs.dimension)?,
    };
    write_json(ctx, "groundstate.json", &s)?;
    write_table(
        ctx,
        "results.csv",
        "d,p,mass,mass_squared,residual,iterations",
        &[vec![
            s.d.to_string(),
            format_number(s.p),
            format_number(s.mass),
            format_number(s.mass_squared),
            format_number(s.residual),
            s.iterations.to_string(),
        ]],
    )?;
    Ok(Outcome {
        summary: vec![
            format!("||Q||^2 = {:.10}", s.mass_squared),
            format!("residual {:.3e} after {} iterations", s.residual, s.iterations),
        ],
        failure: None,
    })
}

pub fn blowup(cfg: &RunConfig, ctx: &RunContext) -> Result<Outcome, CliError> {
    let (datum, single) = match &cfg.initial_datum {
        InitialDatum::GroundState { mass_ratio } => (ThresholdDatum::GroundState, *mass_ratio),
        InitialDatum::PseudoConformal {
            a,
            mass_ratio,
            defocusing_start: None,
        } => (ThresholdDatum::PseudoConformal { a: *a }, *mass_ratio),
        InitialDatum::PseudoConformal { .. } => {
            return Err(CliError::Config(
                "`initial_datum.defocusing_start` is only supported by `simulate`".into(),
            ))
        }
        _ => {
            return Err(CliError::Config(
                "`initial_datum.kind` must be \"ground_state\" or \"pseudo_conformal\" for `blowup`".into(),
            ))
        }
    };
    let ratios = cfg.experiment.mass_ratios.clone().unwrap_or_else(|| vec![single]);
    let periods = cfg.require(&cfg.experiment.periods, "experiment.periods", "blowup")?;
    let map = cfg.dispersion_map()?;
    let solver = cfg.solver_config()?;
    let grid = cfg.grid()?;
    let gs = cfg.ground_state()?;
    let results = threshold_study(&ratios, &map, periods, &solver, &gs, datum, &grid)?;
    write_threshold_csv(create(ctx, "results.csv")?, &results)?;

    let m_crit = critical_mass(map.gamma_plus, gs.mass, gs.dimension)?;
    let mut summary = vec![format!("critical mass {m_crit:.10}")];
    let mut failures = Vec::new();
    for r in &results {
        let when = r.detection_time.map(|t| format!(" at t = {t:.6}")).unwrap_or_default();
        summary.push(format!(
            "ratio {:.4}: {:?}{when} (max growth {:.3e})",
            r.mass_ratio, r.outcome, r.max_growth
        ));
        match datum {
            ThresholdDatum::GroundState if r.mass_ratio <= 0.95 && r.blew_up => {
                failures.push(format!("subthreshold ratio {} blew up", r.mass_ratio));
            }
            ThresholdDatum::PseudoConformal { .. } if r.mass_ratio >= 1.0 && r.outcome != ThresholdOutcome::BlewUp => {
                failures.push(format!("ratio {} did not blow up ({:?})", r.mass_ratio, r.outcome));
            }
            _ => {}
        }
    }
    Ok(Outcome {
        summary,
        failure: (!failures.is_empty()).then(|| failures.join("; ")),
    })
}
