//! Exact linear flow `e^{i Gamma Delta}` as a Fourier multiplier, and the
//! oscillatory-kernel representation used to cross-check it.
//!
//! Sign convention: a spectral coefficient at wavenumber `xi` is multiplied by
//! `e^{-i Gamma |xi|^2}`, i.e. the solution operator of
//! `i u_t + gamma Delta u = 0` over an interval with cumulative dispersion
//! `Gamma`.

use std::sync::Arc;

use rustfft::FftPlanner;

use crate::dispersion::DispersionSchedule;
use crate::error::{invalid, Error, Result};
use crate::scalar::{cis, Complex, Real};
use crate::spectral::{Field, Grid, Representation};

pub(crate) fn apply_multiplier<T: Real>(values: &mut [Complex<T>], grid: &Grid<T>, gamma: T) {
    for (v, &k2) in values.iter_mut().zip(grid.xi_sq()) {
        *v *= cis(-gamma * k2);
    }
}

/// Precomputed `e^{-i Gamma |xi|^2}` table for repeated application.
pub(crate) fn multiplier_table<T: Real>(grid: &Grid<T>, gamma: T) -> Vec<Complex<T>> {
    grid.xi_sq().iter().map(|&k2| cis(-gamma * k2)).collect()
}

/// Applies `e^{i Gamma Delta}`; the result is in physical representation.
pub fn propagate_linear<T: Real>(f: &Field<T>, gamma: T) -> Result<Field<T>> {
    if !gamma.is_finite() {
        return Err(invalid("Gamma", "cumulative dispersion must be finite"));
    }
    let mut spec = f.spectral();
    let grid = spec.grid().clone();
    apply_multiplier(spec.values_mut(), &grid, gamma);
    spec.into_physical()
}

/// `U(t, s) f` for the given schedule.
pub fn propagate_linear_map<T: Real, S: DispersionSchedule<T> + ?Sized>(
    f: &Field<T>,
    schedule: &S,
    s: T,
    t: T,
) -> Result<Field<T>> {
    propagate_linear(f, schedule.cumulative_dispersion(s, t))
}

/// Largest per-axis size accepted by [`kernel_solution`] for each dimension.
pub fn kernel_size_limit(dimension: usize) -> usize {
    match dimension {
        1 => 512,
        2 => 64,
        _ => 16,
    }
}

/// Constant phase of the kernel: `e^{-i pi d sign(Gamma) / 4}`.
///
/// The `sign(Gamma)` factor comes from the branch of `(4 pi i Gamma)^{-d/2}`;
/// a fixed `e^{-i pi d / 4}` is only correct for `Gamma > 0`.
pub fn kernel_phase<T: Real>(gamma: T, dimension: usize) -> Complex<T> {
    let sign = if gamma > T::zero() { T::one() } else { -T::one() };
    cis(-T::PI() * T::from_count(dimension) * sign / T::lit(4.0))
}

/// Phase that must be added to a sign-independent `e^{-i pi d / 4}` kernel to
/// reproduce the Fourier path: `0` for `Gamma > 0`, `pi d / 2` for `Gamma < 0`.
pub fn kernel_phase_offset<T: Real>(gamma: T, dimension: usize) -> T {
    if gamma > T::zero() {
        T::zero()
    } else {
        T::FRAC_PI_2() * T::from_count(dimension)
    }
}

/// Evaluates the free Schrodinger kernel
/// `(4 pi i Gamma)^{-d/2} int e^{i |x - y|^2 / (4 Gamma)} f(y) dy`
/// by trapezoid quadrature over the box.
///
/// The kernel separates across axes, so it is applied one axis at a time.
/// Along each axis `f` is trigonometrically interpolated onto a refined grid
/// fine enough to resolve the chirp `e^{i (x-y)^2 / (4 Gamma)}` over the
/// whole box; without refinement the quadrature aliases for small `|Gamma|`.
pub fn kernel_solution<T: Real>(f: &Field<T>, gamma: T) -> Result<Field<T>> {
    if gamma == T::zero() || !gamma.is_finite() {
        return Err(Error::Domain(
            "kernel representation requires a finite, nonzero Gamma".into(),
        ));
    }
    let grid = f.grid().clone();
    let d = grid.dimension();
    let n = grid.points_per_axis();
    if n > kernel_size_limit(d) {
        return Err(invalid(
            "points_per_axis",
            format!(
                "kernel quadrature is limited to N <= {} in {d}D, got {n}",
                kernel_size_limit(d)
            ),
        ));
    }
    let h = grid.spacing();
    let l = grid.half_length();
    let ratio = (T::one() + l * h / (T::PI() * gamma.abs())).ceil();
    let refine = ratio.to_usize().unwrap_or(64).clamp(1, 64);

    let mut data = f.physical().into_values();
    let amplitude = (T::lit(4.0) * T::PI() * gamma.abs()).powf(-T::lit(0.5));
    let axis_phase = {
        let sign = if gamma > T::zero() { T::one() } else { -T::one() };
        cis(-T::PI() * sign / T::lit(4.0))
    };
    let line_op = KernelLine::new(&grid, gamma, refine, axis_phase.scale(amplitude));

    let total = data.len();
    let mut line = vec![Complex::new(T::zero(), T::zero()); n];
    for axis in 0..d {
        let stride = n.pow((d - 1 - axis) as u32);
        let block = n * stride;
        for start in (0..total).step_by(block) {
            for inner in 0..stride {
                for k in 0..n {
                    line[k] = data[start + k * stride + inner];
                }
                let out = line_op.apply(&line);
                for k in 0..n {
                    data[start + k * stride + inner] = out[k];
                }
            }
        }
    }
    Field::new(grid, data, Representation::Physical)
}

struct KernelLine<T: Real> {
    n: usize,
    refine: usize,
    /// `e^{i (x_j - y_m)^2 / (4 Gamma)}` indexed by `j * r - m + (M - 1)`.
    chirp: Vec<Complex<T>>,
    prefactor: Complex<T>,
    forward: Arc<dyn rustfft::Fft<T>>,
    inverse: Arc<dyn rustfft::Fft<T>>,
}

impl<T: Real> KernelLine<T> {
    fn new(grid: &Grid<T>, gamma: T, refine: usize, prefactor: Complex<T>) -> Self {
        let n = grid.points_per_axis();
        let m = n * refine;
        let hf = grid.spacing() / T::from_count(refine);
        // x_j - y_m = (j r - m) hf ranges over (-(M-1), .., (N-1) r) hf.
        let chirp = (0..(m + n * refine))
            .map(|idx| {
                let offset = T::lit(idx as f64 - (m as f64 - 1.0)) * hf;
                cis(offset * offset / (T::lit(4.0) * gamma))
            })
            .collect();
        let mut planner = FftPlanner::new();
        Self {
            n,
            refine,
            chirp,
            prefactor: prefactor.scale(hf),
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(m),
        }
    }

    /// Band-limited interpolation of one line onto the refined grid.
    fn refine_line(&self, line: &[Complex<T>]) -> Vec<Complex<T>> {
        let n = self.n;
        let m = n * self.refine;
        let mut spec = line.to_vec();
        self.forward.process(&mut spec);
        let zero = Complex::new(T::zero(), T::zero());
        let mut padded = vec![zero; m];
        padded[..n / 2].copy_from_slice(&spec[..n / 2]);
        for k in 1..n / 2 {
            padded[m - k] = spec[n - k];
        }
        let nyq = spec[n / 2].scale(T::lit(0.5));
        if self.refine > 1 {
            padded[n / 2] = nyq;
            padded[m - n / 2] = nyq;
        } else {
            padded[n / 2] = spec[n / 2];
        }
        self.inverse.process(&mut padded);
        let norm = T::one() / T::from_count(n);
        padded.iter().map(|v| v.scale(norm)).collect()
    }

    fn apply(&self, line: &[Complex<T>]) -> Vec<Complex<T>> {
        let fine = self.refine_line(line);
        let m = fine.len();
        (0..self.n)
            .map(|j| {
                let base = j * self.refine + m - 1;
                let mut acc = Complex::new(T::zero(), T::zero());
                for (mm, v) in fine.iter().enumerate() {
                    acc += self.chirp[base - mm] * v;
                }
                acc * self.prefactor
            })
            .collect()
    }
}

/// `(4 pi |Gamma|)^{-d/2} ||f||_{L1}`, the dispersive bound on
/// `||e^{i Gamma Delta} f||_{Linf}` valid while `Gamma` does not change sign.
pub fn dispersive_bound<T: Real>(f: &Field<T>, gamma: T) -> T {
    let phys = f.physical();
    let l1: T = phys.values().iter().map(|v| v.norm()).sum::<T>() * phys.grid().weight();
    let d = T::from_count(phys.grid().dimension());
    (T::lit(4.0) * T::PI() * gamma.abs()).powf(-d / T::lit(2.0)) * l1
}

/// `||U_eps(t, s) f - U_0(t, s) f||_{H^sigma}` where `U_0` uses the averaged
/// coefficient. Evaluated exactly as the multiplier gap
/// `|e^{-i theta |xi|^2} - 1|` with `theta` the mean-zero part of `Gamma`.
pub fn averaging_gap_linear<T: Real, S: DispersionSchedule<T> + ?Sized>(
    f: &Field<T>,
    schedule: &S,
    s: T,
    t: T,
    sigma: T,
) -> T {
    let theta = schedule.mean_zero_integral(s, t);
    if theta == T::zero() {
        return T::zero();
    }
    let spec = f.spectral();
    let grid = spec.grid();
    let two = T::lit(2.0);
    let acc: T = spec
        .values()
        .iter()
        .zip(grid.xi_sq())
        .map(|(v, &k2)| {
            let gap = two * (theta * k2 / two).sin();
            (T::one() + k2).powf(sigma) * gap * gap * v.norm_sqr()
        })
        .sum();
    (acc * grid.weight()).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dispersion::{ConstantDispersion, DispersionMap};
    use crate::spectral::sobolev_norm;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gaussian(n: usize, l: f64) -> Field<f64> {
        let g = Grid::new(1, n, l).unwrap();
        Field::from_fn(g, |x| Complex::new((-x[0] * x[0] / 2.0).exp(), 0.0)).unwrap()
    }

    /// Closed-form Gaussian evolution, derived independently of the multiplier:
    /// e^{-x^2/2} -> (1 + 2 i Gamma)^{-1/2} e^{-x^2 / (2 (1 + 2 i Gamma))}.
    fn gaussian_exact(x: f64, gamma: f64) -> Complex<f64> {
        let z = Complex::new(1.0, 2.0 * gamma);
        (-(x * x) / (z * 2.0)).exp() / z.sqrt()
    }

    #[test]
    fn zero_gamma_is_identity() {
        let f = gaussian(64, 10.0);
        let u = propagate_linear(&f, 0.0).unwrap();
        assert!(u.relative_l2_distance(&f).unwrap() < 1e-15);
        assert!(propagate_linear(&f, f64::NAN).is_err());
    }

    #[test]
    fn gaussian_peak_and_sign() {
        // wide box: the spread Gaussian must stay clear of the periodic wrap
        let f = gaussian(512, 40.0);
        for gamma in [-1.3, -0.4, 0.25, 0.7, 2.0] {
            let u = propagate_linear(&f, gamma).unwrap();
            let peak = u.values()[256].norm();
            assert!((peak - (1.0 + 4.0 * gamma * gamma).powf(-0.25)).abs() < 1e-12);
            let exact = Field::from_fn(f.grid().clone(), |x| gaussian_exact(x[0], gamma)).unwrap();
            assert!(u.relative_l2_distance(&exact).unwrap() < 1e-10, "gamma {gamma}");
        }
    }

    #[test]
    fn map_propagator_identity_after_whole_periods() {
        let f = gaussian(256, 20.0);
        let m = DispersionMap::new(1.0, 1.0, 0.5, 0.2).unwrap();
        for n in 1..=5 {
            let u = propagate_linear_map(&f, &m, 0.0, 0.2 * n as f64).unwrap();
            assert!(u.relative_l2_distance(&f).unwrap() < 1e-12);
        }
    }

    #[test]
    fn kernel_matches_fourier_path() {
        let f = gaussian(256, 20.0);
        for gamma in [-1.0, -0.3, -0.1, 0.1, 0.3, 1.0] {
            let k = kernel_solution(&f, gamma).unwrap();
            let p = propagate_linear(&f, gamma).unwrap();
            let err = k.relative_l2_distance(&p).unwrap();
            assert!(err < 1e-6, "gamma {gamma}: {err}");
            assert!(((k.l2_norm() - f.l2_norm()) / f.l2_norm()).abs() < 1e-6);
        }
    }

    #[test]
    fn constant_phase_convention_fails_for_negative_gamma() {
        let f = gaussian(128, 12.0);
        let k = kernel_solution(&f, -0.5).unwrap();
        // Rotating by the offset gives the sign-independent convention.
        let rotated = k
            .values()
            .iter()
            .map(|v| v * cis(kernel_phase_offset(-0.5, 1)))
            .collect();
        let constant = Field::new(f.grid().clone(), rotated, Representation::Physical).unwrap();
        let p = propagate_linear(&f, -0.5).unwrap();
        assert!(k.relative_l2_distance(&p).unwrap() < 1e-6);
        assert!(constant.relative_l2_distance(&p).unwrap() > 1.0);
        assert_eq!(kernel_phase_offset(0.5, 2), 0.0);
    }

    #[test]
    fn kernel_2d_separable() {
        let g = Grid::new(2, 48, 8.0).unwrap();
        let f = Field::from_fn(g, |x: &[f64]| {
            Complex::new((-(x[0] * x[0] + 2.0 * x[1] * x[1]) / 2.0).exp(), 0.0)
        })
        .unwrap();
        for gamma in [0.4, -0.4] {
            let k = kernel_solution(&f, gamma).unwrap();
            let p = propagate_linear(&f, gamma).unwrap();
            let err = k.relative_l2_distance(&p).unwrap();
            assert!(err < 1e-6, "gamma {gamma}: {err}");
        }
    }

    #[test]
    fn kernel_rejects_zero_gamma_and_large_grids() {
        let f = gaussian(64, 10.0);
        assert!(matches!(kernel_solution(&f, 0.0), Err(Error::Domain(_))));
        let big = gaussian(1024, 20.0);
        assert!(kernel_solution(&big, 0.5).is_err());
    }

    #[test]
    fn dispersive_decay_within_one_piece() {
        let f = gaussian(512, 40.0);
        let m = DispersionMap::unit(1.5, 0.8, 0.5).unwrap();
        // both endpoints in the same focusing, then defocusing, piece
        for (s, t) in [(0.05, 0.45), (0.1, 0.2), (0.55, 0.95), (0.6, 0.61)] {
            let gamma = m.cumulative_dispersion(s, t);
            let u = propagate_linear(&f, gamma).unwrap();
            let bound = dispersive_bound(&f, gamma);
            assert!(u.linf_norm().unwrap() <= bound * (1.0 + 1e-9), "({s}, {t})");
            assert!((gamma.abs() - m.gamma_at(0.5 * (s + t)).abs() * (t - s)).abs() < 1e-14);
        }
    }

    #[test]
    fn averaging_gap_examples() {
        let f = gaussian(256, 20.0);
        assert_eq!(averaging_gap_linear(&f, &ConstantDispersion(0.3), 0.0, 0.77, 2.0), 0.0);

        let template = DispersionMap::unit(1.0, 1.0, 0.5).unwrap();
        let (s, t) = (0.0, 0.3);
        let mut last = f64::INFINITY;
        for eps in [0.2, 0.1, 0.05] {
            let m = template.with_epsilon(eps).unwrap();
            let gap = averaging_gap_linear(&f, &m, s, t, 2.0);
            // independent oracle: apply both propagators and measure the difference
            let ue = propagate_linear(&f, m.cumulative_dispersion(s, t)).unwrap();
            let u0 = propagate_linear(&f, m.average_dispersion() * (t - s)).unwrap();
            let direct = sobolev_norm(&ue.difference(&u0).unwrap(), 2.0);
            assert!((gap - direct).abs() < 1e-10 * (1.0 + direct));
            assert!(gap <= last);
            last = gap;
            let (lo, hi) = m.oscillation_bounds();
            let bound = lo.abs().max(hi) * sobolev_norm(&f, 4.0);
            assert!(gap <= bound);
        }
    }

    #[test]
    fn averaging_gap_sup_vanishes_as_eps_shrinks() {
        let f = gaussian(256, 20.0);
        let template = DispersionMap::unit(2.0, 1.0, 0.4).unwrap();
        let mut sups = Vec::new();
        for eps in [0.4, 0.2, 0.1, 0.05, 0.025] {
            let m = template.with_epsilon(eps).unwrap();
            let mut sup: f64 = 0.0;
            for i in 0..40 {
                for j in 0..40 {
                    let (s, t) = (i as f64 * 0.0731, j as f64 * 0.0517);
                    sup = sup.max(averaging_gap_linear(&f, &m, s, t, 2.0));
                }
            }
            sups.push(sup);
        }
        for w in sups.windows(2) {
            assert!(w[1] < w[0], "{sups:?}");
        }
        assert!(sups[4] < 0.1 * sups[0]);
    }

    #[test]
    fn non_group_witness() {
        let f = gaussian(256, 20.0);
        let m = DispersionMap::unit(2.0, 1.0, 0.5).unwrap();
        let a = propagate_linear_map(&f, &m, 0.25, 0.75).unwrap();
        let b = propagate_linear_map(&f, &m, 0.0, 0.5).unwrap();
        assert!(a.difference(&b).unwrap().l2_norm() > 0.01 * f.l2_norm());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn unitary_and_additive(seed in any::<u64>(), g1 in -5.0f64..5.0, g2 in -5.0f64..5.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let grid = Grid::new(1, 128, 6.0).unwrap();
            let values = (0..128).map(|_| Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
            let f = Field::new(grid, values, Representation::Physical).unwrap();
            let u1 = propagate_linear(&f, g1).unwrap();
            prop_assert!(((u1.l2_norm() - f.l2_norm()) / f.l2_norm()).abs() <= 1e-12);
            let u12 = propagate_linear(&u1, g2).unwrap();
            let direct = propagate_linear(&f, g1 + g2).unwrap();
            prop_assert!(u12.relative_l2_distance(&direct).unwrap() <= 1e-12);
        }
    }
}
