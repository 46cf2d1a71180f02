//! Closed-form solutions used as oracles.

use std::sync::Arc;

use crate::dispersion::{DispersionMap, DispersionSchedule};
use crate::error::{invalid, Error, Result};
use crate::groundstate::{critical_mass, GroundState, RadialProfile};
use crate::scalar::{cis, modulus_power, Complex, Real};
use crate::solver::{evolve_backward, SolverConfig};
use crate::spectral::{Field, Grid};

/// Pseudo-conformal blow-up solution of the focusing mass-critical equation
/// `i v_t + gamma_plus Delta v + |v|^{4/d} v = 0`:
///
/// ```text
/// v_a(t, x) = L^{-d/2} Q(x / (sqrt(gamma_plus) L)) exp(-i a |x|^2 / (4 gamma_plus L)) exp(i t / L),
/// L = 1 - a t,
/// ```
///
/// which concentrates at `t = 1/a` and carries mass `gamma_plus^{d/4} ||Q||`.
#[derive(Debug, Clone)]
pub struct BlowupProfile<T: Real> {
    pub a: T,
    pub gamma_plus: T,
    pub ground_state: GroundState<T>,
    radial: RadialProfile<T>,
}

impl<T: Real> BlowupProfile<T> {
    pub fn new(a: T, gamma_plus: T, ground_state: GroundState<T>) -> Result<Self> {
        if !(a > T::zero() && a.is_finite()) {
            return Err(invalid("a", format!("must be > 0, got {a}")));
        }
        if !(gamma_plus > T::zero() && gamma_plus.is_finite()) {
            return Err(invalid("gamma_plus", format!("must be > 0, got {gamma_plus}")));
        }
        let radial = ground_state.radial_profile();
        Ok(Self {
            a,
            gamma_plus,
            ground_state,
            radial,
        })
    }

    pub fn blowup_time(&self) -> T {
        T::one() / self.a
    }

    /// `||v_a(t)||_{L^2}` for every `t < 1/a`.
    pub fn mass(&self) -> T {
        critical_mass(self.gamma_plus, self.ground_state.mass, self.ground_state.dimension)
            .expect("validated gamma_plus")
    }

    pub fn dimension(&self) -> usize {
        self.ground_state.dimension
    }

    /// Last time at which the core width `sqrt(gamma_plus) (1 - a t)` still
    /// spans 8 grid spacings.
    pub fn resolved_until(&self, grid: &Grid<T>) -> T {
        let min_scale = T::lit(8.0) * grid.spacing() / self.gamma_plus.sqrt();
        (T::one() - min_scale).max(T::zero()) / self.a
    }

    /// `Q` evaluated at radius `r`.
    pub fn q(&self, r: T) -> T {
        self.radial.eval(r)
    }
}

pub fn pseudoconformal_field<T: Real>(profile: &BlowupProfile<T>, t: T, grid: &Arc<Grid<T>>) -> Result<Field<T>> {
    if grid.dimension() != profile.dimension() {
        return Err(Error::GridMismatch);
    }
    let scale = T::one() - profile.a * t;
    if !(scale > T::zero()) {
        return Err(Error::Domain(format!(
            "t = {t} is at or past the blow-up time {}",
            profile.blowup_time()
        )));
    }
    let d = T::from_count(grid.dimension());
    let amplitude = scale.powf(-d / T::lit(2.0));
    let width = profile.gamma_plus.sqrt() * scale;
    let chirp = -profile.a / (T::lit(4.0) * profile.gamma_plus * scale);
    let phase = t / scale;
    Field::from_fn(grid.clone(), |x| {
        let r2: T = x.iter().map(|&v| v * v).sum();
        let q = profile.q(r2.sqrt() / width);
        Complex::new(amplitude * q, T::zero()) * cis(chirp * r2 + phase)
    })
}

/// Averaged solution for a zero-mean map: `phi e^{i (t - t0) |phi|^{p-1}}`.
pub fn zero_mean_averaged<T: Real>(phi: &Field<T>, t: T, t0: T, p: T) -> Field<T> {
    let mut out = phi.physical();
    let tau = t - t0;
    for v in out.values_mut() {
        let m = modulus_power(*v, p);
        if m != T::zero() {
            *v *= cis(tau * m);
        }
    }
    out
}

/// `e^{i Gamma Delta}` applied to `exp(-|x|^2 / (2 sigma0^2))`, per axis
/// `(1 + 2 i Gamma / sigma0^2)^{-1/2} exp(-x^2 / (2 (sigma0^2 + 2 i Gamma)))`.
pub fn gaussian_linear<T: Real>(sigma0: T, gamma: T, grid: &Arc<Grid<T>>) -> Result<Field<T>> {
    if !(sigma0 > T::zero() && sigma0.is_finite()) {
        return Err(invalid("sigma0", format!("must be > 0, got {sigma0}")));
    }
    if !gamma.is_finite() {
        return Err(invalid("gamma", "must be finite"));
    }
    let s2 = sigma0 * sigma0;
    let z = Complex::new(s2, T::lit(2.0) * gamma);
    let prefactor = (Complex::new(T::one(), T::zero()) / (z / s2)).sqrt();
    let denom = z * T::lit(2.0);
    Field::from_fn(grid.clone(), |x| {
        x.iter().fold(Complex::new(T::one(), T::zero()), |acc, &xi| {
            acc * prefactor * (Complex::new(-xi * xi, T::zero()) / denom).exp()
        })
    })
}

/// Datum at `t0` (inside a defocusing piece) whose evolution reaches
/// `v_a(0)` exactly at the next period start, obtained by integrating the
/// defocusing equation backwards from there.
pub fn blowup_seed_after_defocusing<T: Real>(
    profile: &BlowupProfile<T>,
    map: &DispersionMap<T>,
    t0: T,
    cfg: &SolverConfig<T>,
    grid: &Arc<Grid<T>>,
) -> Result<Field<T>> {
    map.validate()?;
    if (profile.gamma_plus - map.gamma_plus).abs() > T::lit(1e-12) * map.gamma_plus {
        return Err(Error::Config(format!(
            "profile gamma_plus {} differs from map gamma_plus {}",
            profile.gamma_plus, map.gamma_plus
        )));
    }
    if !(profile.blowup_time() < map.epsilon * map.t_plus) {
        return Err(Error::Config(format!(
            "blow-up time 1/a = {} must be shorter than the focusing piece eps*t_plus = {}",
            profile.blowup_time(),
            map.epsilon * map.t_plus
        )));
    }
    let next = map.period_start_at_or_before(t0) + map.epsilon;
    if !(map.gamma_at(t0) < T::zero()) || !(t0 < next) || (t0 / map.epsilon).fract() == T::zero() {
        return Err(invalid(
            "t0",
            format!("must lie strictly inside a defocusing piece, got {t0}"),
        ));
    }
    let v0 = pseudoconformal_field(profile, T::zero(), grid)?;
    Ok(evolve_backward(&v0, map, t0, next, cfg)?.field)
}
