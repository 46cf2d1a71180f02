//! Ground state of `Delta Q - Q + Q^{1+4/d} = 0` and the sharp
//! Gagliardo-Nirenberg functional it extremizes.

use std::sync::Arc;

use crate::error::{invalid, Error, Result};
use crate::scalar::{Complex, Real};
use crate::spectral::{gradient_norm_sq, Field, Grid, Representation};

/// Closed-form one-dimensional quintic ground state `3^{1/4} sech^{1/2}(2x)`.
pub fn exact_q_1d<T: Real>(x: T) -> T {
    let two_x = (T::lit(2.0) * x).abs();
    // sech(y) = 2 e^{-y} / (1 + e^{-2y}) stays finite for large |y|
    let e = (-two_x).exp();
    let sech = T::lit(2.0) * e / (T::one() + e * e);
    T::lit(3.0).powf(T::lit(0.25)) * sech.sqrt()
}

/// `1 + 4/d`.
pub fn critical_exponent<T: Real>(dimension: usize) -> T {
    T::one() + T::lit(4.0) / T::from_count(dimension)
}

#[derive(Debug, Clone)]
pub struct GroundState<T: Real> {
    pub dimension: usize,
    pub p: T,
    /// Real, positive samples of `Q` (physical representation).
    pub q_field: Field<T>,
    pub residual_l2: T,
    /// `||Q||_{L^2}`.
    pub mass: T,
    pub iterations: usize,
    /// Final Petviashvili stabilizing factor; tends to 1.
    pub stabilizer: T,
}

impl<T: Real> GroundState<T> {
    pub fn mass_squared(&self) -> T {
        self.mass * self.mass
    }

    /// `Q` is positive and nonincreasing outward along every coordinate axis
    /// through the grid centre.
    pub fn is_positive_and_axis_monotone(&self) -> bool {
        let grid = self.q_field.grid();
        let n = grid.points_per_axis();
        let d = grid.dimension();
        let values = self.q_field.values();
        if values.iter().any(|v| !(v.re > T::zero())) {
            return false;
        }
        let centre = n / 2;
        let slack = T::lit(1e-12) * values[centre_index(n, d)].re;
        for axis in 0..d {
            let line: Vec<T> = (0..n)
                .map(|i| {
                    let mut idx = [centre; 3];
                    idx[axis] = i;
                    values[flat_index(&idx[..d], n)].re
                })
                .collect();
            for i in centre..n - 1 {
                if line[i + 1] > line[i] + slack {
                    return false;
                }
            }
            for i in 1..=centre {
                if line[i - 1] > line[i] + slack {
                    return false;
                }
            }
        }
        true
    }

    /// Radial profile `r -> Q(r)` for arbitrary `r >= 0`.
    pub fn radial_profile(&self) -> RadialProfile<T> {
        RadialProfile::from_ground_state(self)
    }
}

fn flat_index(idx: &[usize], n: usize) -> usize {
    idx.iter().fold(0, |acc, &i| acc * n + i)
}

fn centre_index(n: usize, d: usize) -> usize {
    flat_index(&[n / 2; 3][..d], n)
}

/// Inner product `sum conj(a) b` (unweighted).
fn inner<T: Real>(a: &[Complex<T>], b: &[Complex<T>]) -> T {
    a.iter().zip(b).map(|(x, y)| (x.conj() * y).re).sum()
}

/// Spectral residual `||Delta Q - Q + Q^p||_{L^2}` from `Q^` and `(Q^p)^`.
fn residual<T: Real>(q_hat: &[Complex<T>], qp_hat: &[Complex<T>], grid: &Grid<T>) -> T {
    let s: T = q_hat
        .iter()
        .zip(qp_hat)
        .zip(grid.xi_sq())
        .map(|((q, n), &k)| (*n - *q * (T::one() + k)).norm_sqr())
        .sum();
    (s * grid.weight()).sqrt()
}

fn power_transform<T: Real>(q_hat: &[Complex<T>], grid: &Arc<Grid<T>>, p: T) -> Vec<Complex<T>> {
    let mut phys = Field::from_parts_unchecked(grid.clone(), q_hat.to_vec(), Representation::Spectral)
        .into_representation(Representation::Physical)
        .into_values();
    for v in phys.iter_mut() {
        // Q stays real; drop roundoff imaginary parts before the power
        let r = v.re;
        *v = Complex::new(r.abs().powf(p) * r.signum(), T::zero());
    }
    Field::from_parts_unchecked(grid.clone(), phys, Representation::Physical)
        .into_representation(Representation::Spectral)
        .into_values()
}

/// Petviashvili iteration for the mass-critical ground state on `grid`,
/// seeded with `2 exp(-|x|^2 / 2)`.
pub fn petviashvili<T: Real>(grid: &Arc<Grid<T>>, dimension: usize, tol: T, max_iter: usize) -> Result<GroundState<T>> {
    if grid.dimension() != dimension {
        return Err(invalid(
            "d",
            format!("grid has dimension {}, requested {dimension}", grid.dimension()),
        ));
    }
    if !(tol > T::zero()) {
        return Err(invalid("tol", "must be > 0"));
    }
    let p = critical_exponent::<T>(dimension);
    let nu = p / (p - T::one());
    let seed = Field::from_fn(grid.clone(), |x| {
        let r2: T = x.iter().map(|&v| v * v).sum();
        Complex::new(T::lit(2.0) * (-r2 / T::lit(2.0)).exp(), T::zero())
    })?;
    let mut q_hat = seed.spectral().into_values();
    let mut qp_hat = power_transform(&q_hat, grid, p);
    let mut res = residual(&q_hat, &qp_hat, grid);
    let mut stabilizer = T::one();
    let mut iterations = 0;
    while !(res <= tol) {
        if iterations >= max_iter || !res.is_finite() {
            return Err(Error::NonConvergence {
                iterations,
                residual: res.as_f64(),
            });
        }
        let lhs: T = q_hat
            .iter()
            .zip(grid.xi_sq())
            .map(|(q, &k)| q.norm_sqr() * (T::one() + k))
            .sum();
        let rhs = inner(&qp_hat, &q_hat);
        if !(rhs > T::zero()) {
            return Err(Error::NonConvergence {
                iterations,
                residual: res.as_f64(),
            });
        }
        stabilizer = lhs / rhs;
        let factor = stabilizer.powf(nu);
        for ((q, n), &k) in q_hat.iter_mut().zip(&qp_hat).zip(grid.xi_sq()) {
            *q = *n * (factor / (T::one() + k));
        }
        qp_hat = power_transform(&q_hat, grid, p);
        res = residual(&q_hat, &qp_hat, grid);
        iterations += 1;
    }
    let mut values = Field::from_parts_unchecked(grid.clone(), q_hat, Representation::Spectral)
        .into_representation(Representation::Physical)
        .into_values();
    for v in values.iter_mut() {
        v.im = T::zero();
    }
    let q_field = Field::new(grid.clone(), values, Representation::Physical)?;
    let mass = q_field.l2_norm();
    Ok(GroundState {
        dimension,
        p,
        q_field,
        residual_l2: res,
        mass,
        iterations,
        stabilizer,
    })
}

/// `||f||_{2+4/d}^{2+4/d} / [(1 + 2/d) ||Q||^{-4/d} ||f||^{4/d} ||grad f||^2]`.
/// Values at most 1 are what the sharp inequality predicts.
pub fn gn_ratio<T: Real>(f: &Field<T>, q_mass: T, dimension: usize) -> Result<T> {
    if f.grid().dimension() != dimension {
        return Err(invalid("d", "must match the field's grid dimension"));
    }
    if !(q_mass > T::zero()) {
        return Err(invalid("q_mass", "must be > 0"));
    }
    let d = T::from_count(dimension);
    let exponent = T::lit(4.0) / d;
    let phys = f.physical();
    let l2 = phys.l2_norm();
    let grad = gradient_norm_sq(&phys);
    if l2 == T::zero() {
        return Err(Error::Domain("gn_ratio of the zero field".into()));
    }
    if grad == T::zero() {
        return Err(Error::Domain("gn_ratio of a field with vanishing gradient".into()));
    }
    let num = phys.lp_integral(T::lit(2.0) + exponent)?;
    let den = (T::one() + T::lit(2.0) / d) * q_mass.powf(-exponent) * l2.powf(exponent) * grad;
    Ok(num / den)
}

/// Mass threshold below which solutions with focusing strength `gamma_plus`
/// are global: `gamma_plus^{d/4} ||Q||`.
pub fn critical_mass<T: Real>(gamma_plus: T, q_mass: T, dimension: usize) -> Result<T> {
    if !(gamma_plus > T::zero()) {
        return Err(invalid("gamma_plus", format!("must be > 0, got {gamma_plus}")));
    }
    Ok(gamma_plus.powf(T::from_count(dimension) / T::lit(4.0)) * q_mass)
}

/// Tabulated radial profile, refined by trigonometric interpolation of the
/// axis slice and evaluated with 6-point Lagrange interpolation.
#[derive(Debug, Clone)]
pub struct RadialProfile<T> {
    step: T,
    table: Vec<T>,
    dimension: usize,
    /// Beyond this radius the exponential asymptotics `r^{(1-d)/2} e^{-r}` take over.
    tail_start: T,
    tail_value: T,
}

const RADIAL_REFINEMENT: usize = 32;
const STENCIL: usize = 6;

impl<T: Real> RadialProfile<T> {
    fn from_ground_state(gs: &GroundState<T>) -> Self {
        let grid = gs.q_field.grid();
        let n = grid.points_per_axis();
        let d = grid.dimension();
        let centre = n / 2;
        let line: Vec<Complex<T>> = (0..n)
            .map(|i| {
                let mut idx = [centre; 3];
                idx[d - 1] = i;
                gs.q_field.values()[flat_index(&idx[..d], n)]
            })
            .collect();
        let line_grid = Grid::new(1, n, grid.half_length()).expect("valid axis grid");
        let coarse = Field::from_parts_unchecked(line_grid, line, Representation::Physical).spectral();
        let m = n * RADIAL_REFINEMENT;
        let fine_grid = Grid::new(1, m, grid.half_length()).expect("valid refined grid");
        let mut fine = vec![Complex::new(T::zero(), T::zero()); m];
        let scale = T::lit(RADIAL_REFINEMENT as f64).sqrt();
        let coeffs = coarse.values();
        let half = n / 2;
        for k in 0..half {
            fine[k] = coeffs[k] * scale;
        }
        for k in 1..half {
            fine[m - k] = coeffs[n - k] * scale;
        }
        // split the Nyquist mode symmetrically
        fine[half] = coeffs[half] * scale / T::lit(2.0);
        fine[m - half] = coeffs[half] * scale / T::lit(2.0);
        let phys = Field::from_parts_unchecked(fine_grid.clone(), fine, Representation::Spectral)
            .into_representation(Representation::Physical);
        let table: Vec<T> = phys.values()[m / 2..].iter().map(|v| v.re).collect();
        let step = fine_grid.spacing();
        // far enough from the box edge that periodic images are negligible
        let anchor = table.len() * 3 / 4;
        let mut out = Self {
            step,
            table,
            dimension: d,
            tail_start: T::infinity(),
            tail_value: T::zero(),
        };
        let tail_start = step * T::from_count(anchor);
        out.tail_value = out.eval(tail_start);
        out.tail_start = tail_start;
        out
    }

    /// `Q(r)` for any `r`.
    pub fn eval(&self, r: T) -> T {
        let r = r.abs();
        if r > self.tail_start {
            let decay = (self.tail_start - r).exp();
            let power = (T::one() - T::from_count(self.dimension)) / T::lit(2.0);
            return self.tail_value * (r / self.tail_start).powf(power) * decay;
        }
        let u = r / self.step;
        let Some(i) = u.floor().to_usize() else {
            return T::zero();
        };
        if i + STENCIL / 2 >= self.table.len() {
            return T::zero();
        }
        let s = u - T::from_count(i);
        // Lagrange interpolation on nodes i-2 .. i+3, reflecting through r = 0
        let first = i as isize - (STENCIL as isize / 2 - 1);
        let mut acc = T::zero();
        for j in 0..STENCIL {
            let node = T::from_count(j) - T::from_count(STENCIL / 2 - 1);
            let mut w = T::one();
            for k in 0..STENCIL {
                if k != j {
                    let other = T::from_count(k) - T::from_count(STENCIL / 2 - 1);
                    w = w * (s - other) / (node - other);
                }
            }
            acc += w * self.table[(first + j as isize).unsigned_abs()];
        }
        acc
    }

    /// Radius up to which values come from the table rather than the tail.
    pub fn table_radius(&self) -> T {
        self.tail_start
    }
}
