//! Built-in oracle checks run by `dmnls validate`.
//!
//! The checks use fixed grids so they finish in a few seconds whatever the
//! config asks for; the config contributes its dispersion map, the seed and
//! the number of random fields.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dmnls::checkpoint::{read_checkpoint, write_checkpoint};
use dmnls::groundstate::{exact_q_1d, gn_ratio, petviashvili};
use dmnls::lab::{format_number, mass_drift, splitting_order_study};
use dmnls::linear::{kernel_solution, propagate_linear, propagate_linear_map};
use dmnls::reference::gaussian_linear;
use dmnls::solver::{evolve, SolverConfig};
use dmnls::{Complex, DispersionMap, DispersionSchedule, Field, Grid};

use crate::{CliError, Outcome, RunConfig, RunContext};

/// One line of `results.csv`.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    fn below(name: &'static str, value: f64, tolerance: f64) -> Self {
        Self {
            name,
            value,
            tolerance,
            passed: value <= tolerance,
        }
    }
}

fn gaussian(n: usize, l: f64) -> Result<Field<f64>, CliError> {
    let grid = Grid::new(1, n, l)?;
    Ok(Field::from_fn(grid, |x| Complex::new((-x[0] * x[0] / 2.0).exp(), 0.0))?)
}

/// Sum of a few randomly placed, randomly chirped Gaussians.
fn random_field(grid: &Arc<Grid<f64>>, rng: &mut ChaCha8Rng) -> Result<Field<f64>, CliError> {
    let bumps: Vec<[f64; 5]> = (0..3)
        .map(|_| {
            [
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(0.5..1.5),
                rng.gen_range(-1.0..1.0),
            ]
        })
        .collect();
    Ok(Field::from_fn(grid.clone(), |x| {
        bumps
            .iter()
            .map(|&[re, im, c, w, k]| {
                let y = x[0] - c;
                Complex::new(re, im) * (-(y * y) / (2.0 * w * w)).exp() * Complex::from_polar(1.0, k * y)
            })
            .sum()
    })?)
}

pub fn run_checks(map: &DispersionMap<f64>, seed: u64, samples: usize) -> Result<Vec<Check>, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();

    let grid = Grid::new(1, 256, 20.0)?;
    let (mut additive, mut unitary) = (0.0f64, 0.0f64);
    for _ in 0..samples {
        let f = random_field(&grid, &mut rng)?;
        let (a, b) = (rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
        let ua = propagate_linear(&f, a)?;
        let uab = propagate_linear(&ua, b)?;
        let direct = propagate_linear(&f, a + b)?;
        additive = additive.max(uab.relative_l2_distance(&direct)?);
        unitary = unitary.max(((ua.l2_norm() - f.l2_norm()) / f.l2_norm()).abs());
    }
    checks.push(Check::below("propagator_additive", additive, 1e-12));
    checks.push(Check::below("propagator_unitary", unitary, 1e-12));

    let wide = gaussian(512, 40.0)?;
    let mut closed = 0.0f64;
    for gamma in [-1.3, 0.7] {
        let u = propagate_linear(&wide, gamma)?;
        closed = closed.max(u.relative_l2_distance(&gaussian_linear(1.0, gamma, wide.grid())?)?);
    }
    checks.push(Check::below("gaussian_closed_form", closed, 1e-10));

    let f = gaussian(256, 20.0)?;
    let mut kernel = 0.0f64;
    for gamma in [-0.3, 0.3] {
        let k = kernel_solution(&f, gamma)?;
        kernel = kernel.max(k.relative_l2_distance(&propagate_linear(&f, gamma)?)?);
    }
    checks.push(Check::below("kernel_vs_multiplier", kernel, 1e-6));

    let period = propagate_linear_map(&f, map, 0.0, map.epsilon)?;
    checks.push(Check::below(
        "zero_mean_period_identity",
        zero_mean_gap(map, &f, &period)?,
        1e-12,
    ));

    let gs = petviashvili(&Grid::new(1, 1024, 20.0)?, 1, 1e-10, 500)?;
    let exact_mass = 3f64.sqrt() * std::f64::consts::PI / 2.0;
    checks.push(Check::below(
        "ground_state_mass_1d",
        (gs.mass_squared() - exact_mass).abs() / exact_mass,
        1e-6,
    ));
    let exact = Field::from_fn(gs.q_field.grid().clone(), |x| Complex::new(exact_q_1d(x[0]), 0.0))?;
    checks.push(Check::below(
        "ground_state_profile_1d",
        gs.q_field.relative_l2_distance(&exact)?,
        1e-7,
    ));
    checks.push(Check::below("ground_state_residual", gs.residual_l2, 1e-8));
    checks.push(Check::below(
        "gn_ratio_q",
        (gn_ratio(&gs.q_field, gs.mass, 1)? - 1.0).abs(),
        1e-3,
    ));
    let mut gn_max = 0.0f64;
    for _ in 0..samples {
        gn_max = gn_max.max(gn_ratio(&random_field(gs.q_field.grid(), &mut rng)?, gs.mass, 1)?);
    }
    checks.push(Check::below("gn_ratio_random", gn_max, 1.0));

    let unit = DispersionMap::new(1.0, 1.0, 0.5, 0.5)?;
    let linear = splitting_order_study(&f, &unit, &[0.1, 0.05, 0.025], 1.0, &SolverConfig::linear(0.1))?;
    let worst = linear.differences.iter().copied().fold(0.0, f64::max);
    checks.push(Check {
        name: "strang_exact_linear",
        value: worst,
        tolerance: 1e-12,
        passed: linear.is_exact(),
    });

    let nl_grid = Grid::<f64>::new(1, 256, 16.0)?;
    let phi = Field::from_fn(nl_grid, |x| Complex::new((-x[0] * x[0] / 2.0).exp(), 0.0))?;
    let cfg = SolverConfig::new(0.02, 3.0);
    let order = splitting_order_study(&phi, &unit, &[0.02, 0.01, 0.005, 0.0025], 2.0, &cfg)?;
    let p = order.order.unwrap_or(f64::NAN);
    checks.push(Check {
        name: "strang_order_nonlinear",
        value: p,
        tolerance: 0.2,
        passed: (p - 2.0).abs() <= 0.2,
    });

    let ev = evolve(&phi, &unit, 0.0, 2.0, &SolverConfig::new(0.01, 3.0))?;
    checks.push(Check::below("mass_conservation", mass_drift(&ev.diagnostics), 1e-10));

    let mut buf = Vec::new();
    write_checkpoint(&mut buf, &ev.field, ev.final_time)?;
    let back = read_checkpoint::<f64, _>(&buf[..])?;
    let identical = back.time.to_bits() == ev.final_time.to_bits()
        && back.field.values().len() == ev.field.values().len()
        && back
            .field
            .values()
            .iter()
            .zip(ev.field.values())
            .all(|(a, b)| a.re.to_bits() == b.re.to_bits() && a.im.to_bits() == b.im.to_bits());
    checks.push(Check {
        name: "checkpoint_round_trip",
        value: if identical { 0.0 } else { 1.0 },
        tolerance: 0.0,
        passed: identical,
    });
    Ok(checks)
}

/// Over one period the mean-zero part of the cumulative dispersion vanishes,
/// so `U(eps, 0)` reduces to the averaged flow.
fn zero_mean_gap(map: &DispersionMap<f64>, f: &Field<f64>, period: &Field<f64>) -> Result<f64, CliError> {
    let averaged = propagate_linear(f, map.average_dispersion() * map.epsilon)?;
    Ok(period.relative_l2_distance(&averaged)?)
}

pub fn validate(cfg: &RunConfig, ctx: &RunContext) -> Result<Outcome, CliError> {
    let map = cfg.dispersion_map()?;
    let samples = cfg.experiment.random_samples.unwrap_or(20);
    let checks = run_checks(&map, ctx.seed, samples)?;
    let mut text = String::from("check,value,tolerance,passed\n");
    let mut summary = Vec::new();
    for c in &checks {
        text += &format!(
            "{},{},{},{}\n",
            c.name,
            format_number(c.value),
            format_number(c.tolerance),
            c.passed
        );
        summary.push(format!(
            "{} {:<28} {:.3e} (tolerance {:.1e})",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.tolerance
        ));
    }
    std::fs::write(ctx.path("results.csv"), text)?;
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
    Ok(Outcome {
        summary,
        failure: (!failed.is_empty()).then(|| format!("checks failed: {}", failed.join(", "))),
    })
}
