//! Breakpoint-aware Strang splitting for
//! `i u_t + gamma(t) Delta u + |u|^{p-1} u = 0`.
//!
//! Each step is `L(dt/2) N(dt) L(dt/2)` where `L` is the exact linear
//! multiplier and `N` the exact pointwise phase rotation. The integration
//! interval is cut at every jump of the dispersion coefficient so a step
//! never sees two values of `gamma`.

use serde::{Deserialize, Serialize};

use crate::dispersion::{DispersionSchedule, Reversed};
use crate::error::{invalid, Error, Result};
use crate::linear::multiplier_table;
use crate::scalar::{cis, modulus_power, Complex, Real};
use crate::spectral::{gradient_norm_sq_spectral, Field, Grid, Representation};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig<T> {
    pub dt_max: T,
    /// Nonlinearity exponent `p > 1`.
    pub p: T,
    /// 2/3-rule dealiasing after each nonlinear substep.
    pub dealias: bool,
    pub output_stride: usize,
    pub blowup_gradient_factor: T,
    pub blowup_tail_threshold: T,
    /// `false` drops the nonlinear substep (pure linear flow).
    pub nonlinear: bool,
    /// `false` steps uniformly through breakpoints, sampling `gamma` at the
    /// step midpoint. Only useful as a negative control.
    pub align_breakpoints: bool,
}

impl<T: Real> SolverConfig<T> {
    /// Defaults: dealiasing on for `p >= 3`, stride 1, gradient factor 100,
    /// tail threshold 5%.
    pub fn new(dt_max: T, p: T) -> Self {
        Self {
            dt_max,
            p,
            dealias: p >= T::lit(3.0),
            output_stride: 1,
            blowup_gradient_factor: T::lit(1e2),
            blowup_tail_threshold: T::lit(0.05),
            nonlinear: true,
            align_breakpoints: true,
        }
    }

    pub fn linear(dt_max: T) -> Self {
        Self {
            nonlinear: false,
            dealias: false,
            ..Self::new(dt_max, T::lit(3.0))
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt_max.is_finite() && self.dt_max > T::zero()) {
            return Err(invalid("dt_max", format!("must be > 0, got {}", self.dt_max)));
        }
        if !(self.p.is_finite() && self.p > T::one()) {
            return Err(invalid("p", format!("must be > 1, got {}", self.p)));
        }
        if self.output_stride == 0 {
            return Err(invalid("output_stride", "must be a positive integer"));
        }
        if !(self.blowup_gradient_factor > T::zero()) {
            return Err(invalid("blowup_gradient_factor", "must be > 0"));
        }
        if !(self.blowup_tail_threshold > T::zero() && self.blowup_tail_threshold < T::one()) {
            return Err(invalid("blowup_tail_threshold", "must lie in (0, 1)"));
        }
        Ok(())
    }

    /// Checks `dt_max < eps * min(t_plus, 1 - t_plus)` for the given schedule.
    pub fn validate_for<S: DispersionSchedule<T> + ?Sized>(&self, schedule: &S) -> Result<()> {
        self.validate()?;
        if let Some(piece) = schedule.min_piece_length() {
            if !(self.dt_max < piece) {
                return Err(invalid(
                    "dt_max",
                    format!(
                        "must be smaller than the shortest dispersion piece {piece}, got {}",
                        self.dt_max
                    ),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord<T> {
    pub time: T,
    pub mass: T,
    pub grad_sq: T,
    pub linf: T,
    pub piecewise_energy: T,
    pub current_gamma: T,
    pub tail_fraction: T,
}

impl<T: Real> DiagnosticsRecord<T> {
    pub const CSV_HEADER: &'static str = "time,mass,grad_sq,linf,piecewise_energy,current_gamma,tail_fraction";

    /// One CSV row, 17 significant digits per value.
    pub fn csv_row(&self) -> String {
        [
            self.time,
            self.mass,
            self.grad_sq,
            self.linf,
            self.piecewise_energy,
            self.current_gamma,
            self.tail_fraction,
        ]
        .iter()
        .map(|v| format!("{:.16e}", v.as_f64()))
        .collect::<Vec<_>>()
        .join(",")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlowupTrigger {
    GradientGrowth,
    SpectralTail,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlowupReport<T> {
    pub detected: bool,
    pub detection_time: T,
    pub trigger: BlowupTrigger,
    pub last_grad_sq: T,
    /// `grad_sq / grad_sq(t0)` at detection.
    pub growth_factor: T,
}

/// One integration step, kept as an audit trail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord<T> {
    pub start: T,
    pub end: T,
    pub gamma: T,
}

#[derive(Debug, Clone)]
pub struct Evolution<T: Real> {
    /// State at the final time (or at blow-up detection), physical.
    pub field: Field<T>,
    pub final_time: T,
    pub diagnostics: Vec<DiagnosticsRecord<T>>,
    pub blowup: Option<BlowupReport<T>>,
    pub steps: Vec<StepRecord<T>>,
    /// Largest `grad_sq / grad_sq(t0)` seen during the run.
    pub max_growth: T,
}

/// Exact flow of `i u_t + |u|^{p-1} u = 0`: `u -> u e^{i tau |u|^{p-1}}`.
pub fn nonlinear_phase<T: Real>(f: &Field<T>, tau: T, p: T) -> Result<Field<T>> {
    if f.representation() != Representation::Physical {
        return Err(Error::Representation {
            expected: "physical",
            found: f.representation().name(),
        });
    }
    let mut out = f.clone();
    apply_phase(out.values_mut(), tau, p);
    Ok(out)
}

fn apply_phase<T: Real>(values: &mut [Complex<T>], tau: T, p: T) {
    for v in values.iter_mut() {
        let m = modulus_power(*v, p);
        if m != T::zero() {
            *v *= cis(tau * m);
        }
    }
}

/// `(gamma/2) ||grad u||^2 - 1/(p+1) int |u|^{p+1}`.
pub fn piecewise_energy<T: Real>(f: &Field<T>, gamma: T, p: T) -> T {
    let spec = f.spectral();
    let grad = gradient_norm_sq_spectral(spec.values(), spec.grid());
    let phys = spec.into_representation(Representation::Physical);
    let potential = phys.lp_integral(p + T::one()).expect("physical");
    gamma / T::lit(2.0) * grad - potential / (p + T::one())
}

struct Masks {
    dealias: Option<Vec<bool>>,
    tail: Vec<bool>,
}

impl Masks {
    fn new<T: Real>(grid: &Grid<T>, cfg: &SolverConfig<T>) -> Self {
        let n = grid.points_per_axis() as f64;
        let dealias = cfg.dealias && cfg.nonlinear;
        // With dealiasing the resolved band ends at N/3; watch its top third.
        let tail_cutoff = if dealias { 2.0 * n / 9.0 } else { n / 3.0 };
        let modes: Vec<i64> = (0..grid.len()).map(|i| grid.max_mode(i)).collect();
        Self {
            dealias: dealias.then(|| modes.iter().map(|&k| k as f64 > n / 3.0).collect()),
            tail: modes.iter().map(|&k| k as f64 > tail_cutoff).collect(),
        }
    }

    fn tail_fraction<T: Real>(&self, spec: &[Complex<T>]) -> T {
        let mut total = T::zero();
        let mut tail = T::zero();
        for (v, &m) in spec.iter().zip(&self.tail) {
            let e = v.norm_sqr();
            total += e;
            if m {
                tail += e;
            }
        }
        if total == T::zero() {
            T::zero()
        } else {
            tail / total
        }
    }
}

/// One Strang step with fixed `(gamma, dt)` acting on spectral data.
struct Stepper<'a, T: Real> {
    grid: &'a Grid<T>,
    half: Vec<Complex<T>>,
    dt: T,
    p: T,
    nonlinear: bool,
    dealias: Option<&'a [bool]>,
}

impl<'a, T: Real> Stepper<'a, T> {
    fn new(grid: &'a Grid<T>, gamma: T, dt: T, cfg: &SolverConfig<T>, masks: &'a Masks) -> Self {
        Self {
            grid,
            half: multiplier_table(grid, gamma * dt / T::lit(2.0)),
            dt,
            p: cfg.p,
            nonlinear: cfg.nonlinear,
            dealias: masks.dealias.as_deref(),
        }
    }

    fn step(&self, spec: &mut [Complex<T>]) {
        for (v, m) in spec.iter_mut().zip(&self.half) {
            *v *= m;
        }
        if self.nonlinear {
            self.grid.transform(spec, rustfft::FftDirection::Inverse);
            apply_phase(spec, self.dt, self.p);
            self.grid.transform(spec, rustfft::FftDirection::Forward);
            if let Some(mask) = self.dealias {
                for (v, &drop) in spec.iter_mut().zip(mask) {
                    if drop {
                        *v = Complex::new(T::zero(), T::zero());
                    }
                }
            }
        }
        for (v, m) in spec.iter_mut().zip(&self.half) {
            *v *= m;
        }
    }
}

/// Single Strang step `L(dt/2) N(dt) L(dt/2)` with constant `gamma`.
pub fn strang_step<T: Real>(f: &Field<T>, gamma: T, dt: T, cfg: &SolverConfig<T>) -> Result<Field<T>> {
    if !(dt > T::zero()) {
        return Err(invalid("dt", "must be > 0"));
    }
    let grid = f.grid().clone();
    let masks = Masks::new(&grid, cfg);
    let mut spec = f.spectral();
    Stepper::new(&grid, gamma, dt, cfg, &masks).step(spec.values_mut());
    spec.into_physical()
}

fn diagnostics_from_spectral<T: Real>(
    spec: &[Complex<T>],
    grid: &std::sync::Arc<Grid<T>>,
    time: T,
    gamma: T,
    p: T,
    masks: &Masks,
) -> DiagnosticsRecord<T> {
    let grad_sq = gradient_norm_sq_spectral(spec, grid);
    let phys = Field::from_parts_unchecked(grid.clone(), spec.to_vec(), Representation::Spectral)
        .into_representation(Representation::Physical);
    let w = grid.weight();
    let mut mass = T::zero();
    let mut linf = T::zero();
    let mut potential = T::zero();
    let half = (p + T::one()) / T::lit(2.0);
    for v in phys.values() {
        let n2 = v.norm_sqr();
        mass += n2;
        linf = linf.max(n2);
        potential += n2.powf(half);
    }
    DiagnosticsRecord {
        time,
        mass: mass * w,
        grad_sq,
        linf: linf.sqrt(),
        piecewise_energy: gamma / T::lit(2.0) * grad_sq - potential * w / (p + T::one()),
        current_gamma: gamma,
        tail_fraction: masks.tail_fraction(spec),
    }
}

/// Diagnostics of a field for a given active coefficient.
pub fn diagnostics<T: Real>(f: &Field<T>, time: T, gamma: T, cfg: &SolverConfig<T>) -> DiagnosticsRecord<T> {
    let masks = Masks::new(f.grid(), cfg);
    let spec = f.spectral();
    diagnostics_from_spectral(spec.values(), spec.grid(), time, gamma, cfg.p, &masks)
}

#[derive(Debug, Clone, Copy)]
struct Node<T> {
    time: T,
    breakpoint: bool,
    /// Index into the caller's stop list.
    stop: Option<usize>,
}

fn build_nodes<T: Real, S: DispersionSchedule<T> + ?Sized>(
    schedule: &S,
    t0: T,
    t1: T,
    stops: &[T],
    align: bool,
) -> Result<Vec<Node<T>>> {
    let mut nodes = Vec::new();
    if align {
        for b in schedule.breakpoints_between(t0, t1)? {
            nodes.push(Node {
                time: b.time,
                breakpoint: true,
                stop: None,
            });
        }
    }
    for (i, &s) in stops.iter().enumerate() {
        if s < t0 || s > t1 {
            return Err(invalid("stops", format!("stop time {s} outside [{t0}, {t1}]")));
        }
        nodes.push(Node {
            time: s,
            breakpoint: false,
            stop: Some(i),
        });
    }
    nodes.push(Node {
        time: t0,
        breakpoint: false,
        stop: None,
    });
    nodes.push(Node {
        time: t1,
        breakpoint: false,
        stop: None,
    });
    nodes.sort_by(|a, b| a.time.partial_cmp(&b.time).expect("finite times"));

    let tol = T::lit(1e-12) * T::one().max(t0.abs()).max(t1.abs());
    let mut merged: Vec<Node<T>> = Vec::with_capacity(nodes.len());
    for n in nodes {
        let Some(last) = merged.last_mut() else {
            merged.push(n);
            continue;
        };
        if (n.time - last.time).abs() > tol {
            merged.push(n);
            continue;
        }
        // endpoints keep their exact value, breakpoints win over stops
        if n.time == t1 || (n.breakpoint && last.time != t0) {
            last.time = n.time;
        }
        last.breakpoint |= n.breakpoint;
        match (last.stop, n.stop) {
            (None, s) => last.stop = s,
            (Some(_), Some(_)) => {
                // repeated stop time: a zero-length node keeps both requests
                let time = last.time;
                merged.push(Node {
                    time,
                    breakpoint: false,
                    ..n
                });
            }
            (Some(_), None) => {}
        }
    }
    Ok(merged)
}

/// Integrates from `t0` to `t1`.
pub fn evolve<T: Real, S: DispersionSchedule<T> + ?Sized>(
    phi: &Field<T>,
    schedule: &S,
    t0: T,
    t1: T,
    cfg: &SolverConfig<T>,
) -> Result<Evolution<T>> {
    evolve_observed(phi, schedule, t0, t1, cfg, &[], |_, _, _| {})
}

/// Like [`evolve`], additionally forcing step boundaries at `stops` and
/// handing the physical state at each stop to `observer(stop_index, t, u)`.
pub fn evolve_observed<T: Real, S: DispersionSchedule<T> + ?Sized>(
    phi: &Field<T>,
    schedule: &S,
    t0: T,
    t1: T,
    cfg: &SolverConfig<T>,
    stops: &[T],
    mut observer: impl FnMut(usize, T, &Field<T>),
) -> Result<Evolution<T>> {
    if !(t0 < t1) {
        return Err(invalid("t1", format!("need t0 < t1, got [{t0}, {t1}]")));
    }
    cfg.validate_for(schedule)?;
    let grid = phi.grid().clone();
    let masks = Masks::new(&grid, cfg);
    let nodes = build_nodes(schedule, t0, t1, stops, cfg.align_breakpoints)?;

    let mut spec = phi.spectral().into_values();
    let g0 = gradient_norm_sq_spectral(&spec, &grid);
    let threshold = cfg.blowup_gradient_factor * g0.max(T::min_positive_value());
    let mut diagnostics: Vec<DiagnosticsRecord<T>> = Vec::new();
    let mut steps = Vec::new();
    let mut max_growth = T::one();
    let mut step_count = 0usize;

    let emit = |diags: &mut Vec<DiagnosticsRecord<T>>, spec: &[Complex<T>], time: T, gamma: T| {
        if let Some(last) = diags.last() {
            if last.time == time && last.current_gamma == gamma {
                return;
            }
        }
        diags.push(diagnostics_from_spectral(spec, &grid, time, gamma, cfg.p, &masks));
    };
    let observe = |spec: &[Complex<T>], idx: usize, time: T, observer: &mut dyn FnMut(usize, T, &Field<T>)| {
        let f = Field::from_parts_unchecked(grid.clone(), spec.to_vec(), Representation::Spectral)
            .into_representation(Representation::Physical);
        observer(idx, time, &f);
    };

    for node in nodes.iter().take_while(|n| n.time == t0) {
        if let Some(i) = node.stop {
            observe(&spec, i, t0, &mut observer);
        }
    }

    let mut segment_gamma = schedule.gamma_at(t0);
    for (k, w) in nodes.windows(2).enumerate() {
        let (a, b) = (w[0].time, w[1].time);
        let len = b - a;
        if len > T::zero() {
            let nsteps = (len / cfg.dt_max).ceil().to_usize().unwrap_or(1).max(1);
            let dt = len / T::from_count(nsteps);
            let mid_gamma = schedule.gamma_at(a + len / T::lit(2.0));
            if cfg.align_breakpoints {
                segment_gamma = mid_gamma;
            }
            if k == 0 || w[0].breakpoint {
                emit(&mut diagnostics, &spec, a, mid_gamma);
            }
            let mut stepper = Stepper::new(&grid, mid_gamma, dt, cfg, &masks);
            let mut stepper_gamma = mid_gamma;
            for j in 0..nsteps {
                let start = a + dt * T::from_count(j);
                let end = if j + 1 == nsteps {
                    b
                } else {
                    a + dt * T::from_count(j + 1)
                };
                let gamma = if cfg.align_breakpoints {
                    mid_gamma
                } else {
                    schedule.gamma_at(start + dt / T::lit(2.0))
                };
                if gamma != stepper_gamma {
                    stepper = Stepper::new(&grid, gamma, dt, cfg, &masks);
                    stepper_gamma = gamma;
                }
                segment_gamma = gamma;
                stepper.step(&mut spec);
                step_count += 1;
                steps.push(StepRecord { start, end, gamma });

                let grad = gradient_norm_sq_spectral(&spec, &grid);
                if !grad.is_finite() {
                    return Err(Error::NonFinite {
                        time: end.as_f64(),
                        step: step_count,
                    });
                }
                if g0 > T::zero() {
                    max_growth = max_growth.max(grad / g0);
                }
                let trigger = if grad > threshold {
                    Some(BlowupTrigger::GradientGrowth)
                } else if masks.tail_fraction(&spec) > cfg.blowup_tail_threshold {
                    Some(BlowupTrigger::SpectralTail)
                } else {
                    None
                };
                if let Some(trigger) = trigger {
                    emit(&mut diagnostics, &spec, end, gamma);
                    let field = Field::from_parts_unchecked(grid.clone(), spec, Representation::Spectral)
                        .into_representation(Representation::Physical);
                    return Ok(Evolution {
                        field,
                        final_time: end,
                        diagnostics,
                        blowup: Some(BlowupReport {
                            detected: true,
                            detection_time: end,
                            trigger,
                            last_grad_sq: grad,
                            growth_factor: if g0 > T::zero() { grad / g0 } else { T::infinity() },
                        }),
                        steps,
                        max_growth,
                    });
                }
                if step_count.is_multiple_of(cfg.output_stride) {
                    emit(&mut diagnostics, &spec, end, gamma);
                }
            }
        }
        if w[1].breakpoint {
            emit(&mut diagnostics, &spec, b, segment_gamma);
        }
        if let Some(i) = w[1].stop {
            observe(&spec, i, b, &mut observer);
        }
    }
    emit(&mut diagnostics, &spec, t1, segment_gamma);
    let field = Field::from_parts_unchecked(grid.clone(), spec, Representation::Spectral)
        .into_representation(Representation::Physical);
    Ok(Evolution {
        field,
        final_time: t1,
        diagnostics,
        blowup: None,
        steps,
        max_growth,
    })
}

/// Integrates backwards from `u_end` at `t_end` down to `t_start`.
///
/// If `u` solves the equation then `w(tau) = conj(u(t_start + t_end - tau))`
/// solves it with the time-reflected coefficient, so backward integration is
/// a forward run of `w`. Diagnostics times are mapped back to the original
/// clock (and therefore decrease).
pub fn evolve_backward<T: Real, S: DispersionSchedule<T>>(
    u_end: &Field<T>,
    schedule: &S,
    t_start: T,
    t_end: T,
    cfg: &SolverConfig<T>,
) -> Result<Evolution<T>> {
    let pivot = t_start + t_end;
    let reversed = Reversed::new(schedule, pivot);
    let mut ev = evolve(&u_end.conj(), &reversed, t_start, t_end, cfg)?;
    ev.field = ev.field.conj();
    ev.final_time = pivot - ev.final_time;
    for d in &mut ev.diagnostics {
        d.time = pivot - d.time;
    }
    for s in &mut ev.steps {
        let (a, b) = (pivot - s.end, pivot - s.start);
        s.start = a;
        s.end = b;
    }
    if let Some(b) = &mut ev.blowup {
        b.detection_time = pivot - b.detection_time;
    }
    Ok(ev)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dispersion::{ConstantDispersion, DispersionMap};
    use crate::linear::propagate_linear_map;
    use std::sync::Arc;

    fn grid(n: usize, l: f64) -> Arc<Grid<f64>> {
        Grid::new(1, n, l).unwrap()
    }

    fn gaussian(g: &Arc<Grid<f64>>, amp: f64) -> Field<f64> {
        Field::from_fn(g.clone(), |x| Complex::new(amp * (-x[0] * x[0] / 2.0).exp(), 0.0)).unwrap()
    }

    #[test]
    fn nonlinear_phase_properties() {
        let g = grid(64, 8.0);
        let f = gaussian(&g, 1.3);
        let out = nonlinear_phase(&f, 0.7, 3.0).unwrap();
        for (a, b) in out.values().iter().zip(f.values()) {
            assert!((a.norm() - b.norm()).abs() < 1e-15);
            let expected = b * cis(0.7 * b.norm_sqr());
            assert!((a - expected).norm() < 1e-14);
        }
        let z = Field::zeros(g.clone());
        assert!(nonlinear_phase(&z, 1.0, 2.5)
            .unwrap()
            .values()
            .iter()
            .all(|v| v.norm() == 0.0));
        assert!(nonlinear_phase(&f.spectral(), 1.0, 3.0).is_err());
    }

    #[test]
    fn zero_dispersion_reproduces_phase_ode() {
        let g = grid(128, 10.0);
        let f = gaussian(&g, 1.1);
        let mut cfg = SolverConfig::new(0.01, 3.0);
        cfg.dealias = false;
        let ev = evolve(&f, &ConstantDispersion(0.0), 0.0, 0.5, &cfg).unwrap();
        let exact = Field::from_fn(g.clone(), |x| {
            let v = 1.1 * (-x[0] * x[0] / 2.0).exp();
            Complex::new(v, 0.0) * cis(0.5 * v * v)
        })
        .unwrap();
        assert!(ev.field.relative_l2_distance(&exact).unwrap() < 1e-12);
    }

    #[test]
    fn strang_step_properties() {
        let g = grid(128, 12.0);
        let f = gaussian(&g, 1.0);
        let cfg = SolverConfig::new(0.01, 3.0);
        let u = strang_step(&f, 0.8, 0.01, &cfg).unwrap();
        assert!(((u.mass() - f.mass()) / f.mass()).abs() < 1e-13);
        // without the nonlinear substep it is the linear flow
        let lin = strang_step(&f, 0.8, 0.01, &SolverConfig::linear(0.01)).unwrap();
        let exact = crate::linear::propagate_linear(&f, 0.008).unwrap();
        assert!(lin.relative_l2_distance(&exact).unwrap() < 1e-14);
        let z = strang_step(&Field::zeros(g), 1.0, 0.01, &cfg).unwrap();
        assert_eq!(z.l2_norm(), 0.0);
        assert!(strang_step(&f, 1.0, 0.0, &cfg).is_err());
    }

    #[test]
    fn strang_step_local_error_is_third_order() {
        let g = grid(256, 16.0);
        let f = gaussian(&g, 1.2);
        let mut cfg = SolverConfig::new(0.1, 3.0);
        cfg.dealias = false;
        // reference: many tiny steps
        let reference = |dt: f64| {
            let mut u = f.clone();
            let fine = 64;
            for _ in 0..fine {
                u = strang_step(&u, 1.0, dt / fine as f64, &cfg).unwrap();
            }
            u
        };
        let e1 = strang_step(&f, 1.0, 0.1, &cfg)
            .unwrap()
            .difference(&reference(0.1))
            .unwrap()
            .l2_norm();
        let e2 = strang_step(&f, 1.0, 0.05, &cfg)
            .unwrap()
            .difference(&reference(0.05))
            .unwrap()
            .l2_norm();
        let order = (e1 / e2).log2();
        assert!((2.6..3.4).contains(&order), "local order {order}");
    }

    #[test]
    fn piecewise_energy_single_mode() {
        let (l, m) = (3.0f64, 2i64);
        let g = grid(32, l);
        let xi = std::f64::consts::PI * m as f64 / l;
        let a = Complex::new(0.6, 0.3);
        let f = Field::from_fn(g.clone(), |x| a * cis(xi * x[0])).unwrap();
        let (gamma, p) = (0.7, 3.0);
        let expected =
            gamma / 2.0 * xi * xi * a.norm_sqr() * 2.0 * l - a.norm_sqr().powf((p + 1.0) / 2.0) * 2.0 * l / (p + 1.0);
        assert!((piecewise_energy(&f, gamma, p) - expected).abs() < 1e-12);
        assert_eq!(piecewise_energy(&Field::zeros(g), 1.0, 3.0), 0.0);
    }

    #[test]
    fn zero_datum_stays_zero() {
        let g = grid(64, 8.0);
        let m = DispersionMap::unit(1.0, 1.0, 0.5).unwrap();
        let ev = evolve(&Field::zeros(g), &m, 0.0, 2.0, &SolverConfig::new(0.05, 3.0)).unwrap();
        assert_eq!(ev.field.l2_norm(), 0.0);
        assert!(ev.blowup.is_none());
    }

    #[test]
    fn steps_never_straddle_breakpoints() {
        let g = grid(64, 10.0);
        let m = DispersionMap::new(1.3, 0.7, 0.37, 0.3).unwrap();
        let stops = [0.05, 0.111, 0.9];
        let mut seen = Vec::new();
        let ev = evolve_observed(
            &gaussian(&g, 0.5),
            &m,
            0.01,
            1.23,
            &SolverConfig::new(0.013, 3.0),
            &stops,
            |i, t, _| seen.push((i, t)),
        )
        .unwrap();
        let bps = m.breakpoints_between(0.01, 1.23).unwrap();
        for s in &ev.steps {
            assert!(s.end - s.start <= 0.013 + 1e-15);
            for b in &bps {
                assert!(!(b.time > s.start + 1e-15 && b.time < s.end - 1e-15));
            }
            assert_eq!(s.gamma, m.gamma_at(0.5 * (s.start + s.end)));
        }
        assert_eq!(seen.iter().map(|x| x.0).collect::<Vec<_>>(), vec![0, 1, 2]);
        // every breakpoint is logged twice: end of old piece, start of new one
        for b in &bps {
            let at: Vec<_> = ev.diagnostics.iter().filter(|d| d.time == b.time).collect();
            assert_eq!(at.len(), 2);
            assert_ne!(at[0].current_gamma, at[1].current_gamma);
        }
    }

    #[test]
    fn dt_must_resolve_pieces() {
        let g = grid(32, 8.0);
        let m = DispersionMap::new(1.0, 1.0, 0.5, 0.1).unwrap();
        let err = evolve(&gaussian(&g, 1.0), &m, 0.0, 1.0, &SolverConfig::new(0.05, 3.0)).unwrap_err();
        assert!(err.to_string().contains("dt_max"));
        assert!(evolve(&gaussian(&g, 1.0), &m, 1.0, 0.0, &SolverConfig::new(0.01, 3.0)).is_err());
    }

    #[test]
    fn linear_reduction_matches_propagator() {
        let g = grid(256, 20.0);
        let f = gaussian(&g, 1.0);
        let m = DispersionMap::new(2.0, 1.0, 0.3, 0.25).unwrap();
        let ev = evolve(&f, &m, 0.1, 1.37, &SolverConfig::linear(0.01)).unwrap();
        let exact = propagate_linear_map(&f, &m, 0.1, 1.37).unwrap();
        assert!(ev.field.relative_l2_distance(&exact).unwrap() < 1e-10);
    }

    #[test]
    fn time_reversal() {
        let g = grid(256, 20.0);
        let f = gaussian(&g, 1.0);
        let m = DispersionMap::new(1.0, 1.5, 0.4, 0.5).unwrap();
        let cfg = SolverConfig::new(0.005, 3.0);
        let fwd = evolve(&f, &m, 0.1, 1.3, &cfg).unwrap();
        let back = evolve_backward(&fwd.field, &m, 0.1, 1.3, &cfg).unwrap();
        assert!(back.field.relative_l2_distance(&f).unwrap() < 1e-6);
        assert!((back.final_time - 0.1f64).abs() < 1e-12);
    }

    #[test]
    fn blowup_on_gradient_growth() {
        let g = grid(128, 10.0);
        // strongly supercritical focusing quintic datum
        let f = gaussian(&g, 3.0);
        let mut cfg = SolverConfig::new(1e-4, 5.0);
        cfg.blowup_gradient_factor = 5.0;
        let ev = evolve(&f, &ConstantDispersion(1.0), 0.0, 1.0, &cfg).unwrap();
        let report = ev.blowup.expect("blow-up expected");
        assert!(report.detected && report.detection_time < 1.0);
        assert!(report.growth_factor > 5.0 || report.trigger == BlowupTrigger::SpectralTail);
    }

    #[test]
    fn nonfinite_state_aborts() {
        let g = grid(32, 8.0);
        let mut values = vec![Complex::new(0.1, 0.0); 32];
        values[3] = Complex::new(f64::NAN, 0.0);
        let f = Field::from_parts_unchecked(g, values, Representation::Physical);
        let err = evolve(&f, &ConstantDispersion(1.0), 0.0, 0.1, &SolverConfig::new(0.01, 3.0)).unwrap_err();
        assert!(matches!(err, Error::NonFinite { step: 1, .. }), "{err}");
    }
}
