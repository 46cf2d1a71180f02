//! Periodic box discretization, unitary FFTs and discrete Sobolev norms.
//!
//! The box is `[-L, L)^d` sampled at `N` points per axis, stored row-major.
//! Spectral coefficients are kept in FFT storage order along each axis
//! (`k = 0, 1, .., N/2 - 1, -N/2, .., -1`) with angular wavenumber
//! `xi_k = pi k / L`. Both transforms carry a `N^{-d/2}` factor, so the sum
//! of `|u|^2` is identical in both representations.

use std::fmt;
use std::sync::Arc;

use rustfft::{Fft, FftDirection, FftPlanner};

use crate::error::{invalid, Error, Result};
use crate::scalar::{Complex, Real};

pub struct Grid<T: Real> {
    dimension: usize,
    points_per_axis: usize,
    half_length: T,
    spacing: T,
    /// Per-axis wavenumbers in FFT storage order.
    axis_wavenumbers: Vec<T>,
    /// Per-axis signed mode index in FFT storage order.
    axis_modes: Vec<i64>,
    /// `|xi|^2` for every flat spectral index.
    xi_sq: Vec<T>,
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
}

impl<T: Real> fmt::Debug for Grid<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("dimension", &self.dimension)
            .field("points_per_axis", &self.points_per_axis)
            .field("half_length", &self.half_length)
            .finish()
    }
}

impl<T: Real> PartialEq for Grid<T> {
    fn eq(&self, other: &Self) -> bool {
        self.dimension == other.dimension
            && self.points_per_axis == other.points_per_axis
            && self.half_length == other.half_length
    }
}

impl<T: Real> Grid<T> {
    pub fn new(dimension: usize, points_per_axis: usize, half_length: T) -> Result<Arc<Self>> {
        if !(1..=3).contains(&dimension) {
            return Err(invalid("dimension", format!("must be 1, 2 or 3, got {dimension}")));
        }
        if points_per_axis < 2 || !points_per_axis.is_multiple_of(2) {
            return Err(invalid(
                "points_per_axis",
                format!("must be a positive even integer, got {points_per_axis}"),
            ));
        }
        if !(half_length.is_finite() && half_length > T::zero()) {
            return Err(invalid("half_length", format!("must be > 0, got {half_length}")));
        }
        let n = points_per_axis;
        let spacing = T::lit(2.0) * half_length / T::from_count(n);
        let axis_modes: Vec<i64> = (0..n)
            .map(|j| if j < n / 2 { j as i64 } else { j as i64 - n as i64 })
            .collect();
        let axis_wavenumbers: Vec<T> = axis_modes
            .iter()
            .map(|&k| T::PI() * T::lit(k as f64) / half_length)
            .collect();
        let total = n.pow(dimension as u32);
        let mut xi_sq = vec![T::zero(); total];
        for (flat, v) in xi_sq.iter_mut().enumerate() {
            let mut rest = flat;
            let mut acc = T::zero();
            for _ in 0..dimension {
                let k = axis_wavenumbers[rest % n];
                acc += k * k;
                rest /= n;
            }
            *v = acc;
        }
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft(n, FftDirection::Forward);
        let inverse = planner.plan_fft(n, FftDirection::Inverse);
        Ok(Arc::new(Self {
            dimension,
            points_per_axis: n,
            half_length,
            spacing,
            axis_wavenumbers,
            axis_modes,
            xi_sq,
            forward,
            inverse,
        }))
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }
    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }
    pub fn half_length(&self) -> T {
        self.half_length
    }
    pub fn spacing(&self) -> T {
        self.spacing
    }
    pub fn len(&self) -> usize {
        self.xi_sq.len()
    }
    pub fn is_empty(&self) -> bool {
        self.xi_sq.is_empty()
    }

    /// Quadrature weight `(2L/N)^d` turning grid sums into integrals.
    pub fn weight(&self) -> T {
        self.spacing.powi(self.dimension as i32)
    }

    /// Sample positions along one axis, `x_j = -L + j h`.
    pub fn axis_coordinates(&self) -> Vec<T> {
        (0..self.points_per_axis)
            .map(|j| -self.half_length + self.spacing * T::from_count(j))
            .collect()
    }

    /// Wavenumber table `pi k / L` for `k = -N/2 .. N/2 - 1`, ascending.
    pub fn wavenumber_table(&self) -> Vec<T> {
        let n = self.points_per_axis as i64;
        (-n / 2..n / 2)
            .map(|k| T::PI() * T::lit(k as f64) / self.half_length)
            .collect()
    }

    /// Wavenumbers in FFT storage order.
    pub fn axis_wavenumbers(&self) -> &[T] {
        &self.axis_wavenumbers
    }

    pub fn axis_modes(&self) -> &[i64] {
        &self.axis_modes
    }

    /// `|xi|^2` per flat spectral index.
    pub fn xi_sq(&self) -> &[T] {
        &self.xi_sq
    }

    /// Multi-index of a flat index, first axis slowest.
    pub fn unflatten(&self, mut flat: usize) -> [usize; 3] {
        let n = self.points_per_axis;
        let mut idx = [0usize; 3];
        for a in (0..self.dimension).rev() {
            idx[a] = flat % n;
            flat /= n;
        }
        idx
    }

    /// Physical position of a flat sample index.
    pub fn position(&self, flat: usize) -> [T; 3] {
        let idx = self.unflatten(flat);
        let mut x = [T::zero(); 3];
        for a in 0..self.dimension {
            x[a] = -self.half_length + self.spacing * T::from_count(idx[a]);
        }
        x
    }

    /// `|x|^2` of a flat sample index.
    pub fn radius_sq(&self, flat: usize) -> T {
        let x = self.position(flat);
        x[..self.dimension].iter().map(|&c| c * c).sum()
    }

    /// Largest absolute signed mode index over all axes, per flat index.
    pub fn max_mode(&self, flat: usize) -> i64 {
        let idx = self.unflatten(flat);
        idx[..self.dimension]
            .iter()
            .map(|&i| self.axis_modes[i].abs())
            .max()
            .unwrap_or(0)
    }

    /// In-place unitary transform of row-major data.
    pub(crate) fn transform(&self, data: &mut [Complex<T>], direction: FftDirection) {
        let n = self.points_per_axis;
        let plan = match direction {
            FftDirection::Forward => &self.forward,
            FftDirection::Inverse => &self.inverse,
        };
        let mut scratch = vec![Complex::new(T::zero(), T::zero()); plan.get_inplace_scratch_len()];
        let total = data.len();
        // Last axis is contiguous.
        plan.process_with_scratch(data, &mut scratch);
        // Remaining axes: transpose each block so the axis becomes contiguous.
        let mut buf = Vec::new();
        for axis in (0..self.dimension - 1).rev() {
            let stride = n.pow((self.dimension - 1 - axis) as u32);
            let block = n * stride;
            buf.resize(block, Complex::new(T::zero(), T::zero()));
            for start in (0..total).step_by(block) {
                let chunk = &mut data[start..start + block];
                for k in 0..n {
                    for inner in 0..stride {
                        buf[inner * n + k] = chunk[k * stride + inner];
                    }
                }
                plan.process_with_scratch(&mut buf, &mut scratch);
                for k in 0..n {
                    for inner in 0..stride {
                        chunk[k * stride + inner] = buf[inner * n + k];
                    }
                }
            }
        }
        let norm = T::one() / T::from_count(total).sqrt();
        for v in data.iter_mut() {
            *v = v.scale(norm);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Representation {
    Physical,
    Spectral,
}

impl Representation {
    pub fn name(self) -> &'static str {
        match self {
            Representation::Physical => "physical",
            Representation::Spectral => "spectral",
        }
    }
}

/// Complex samples of a function on a [`Grid`], in one of two representations.
#[derive(Debug, Clone)]
pub struct Field<T: Real> {
    grid: Arc<Grid<T>>,
    values: Vec<Complex<T>>,
    representation: Representation,
}

impl<T: Real> Field<T> {
    pub fn new(grid: Arc<Grid<T>>, values: Vec<Complex<T>>, representation: Representation) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(invalid(
                "values",
                format!("expected {} samples, got {}", grid.len(), values.len()),
            ));
        }
        if let Some(i) = values.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::Domain(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            grid,
            values,
            representation,
        })
    }

    pub(crate) fn from_parts_unchecked(
        grid: Arc<Grid<T>>,
        values: Vec<Complex<T>>,
        representation: Representation,
    ) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self {
            grid,
            values,
            representation,
        }
    }

    pub fn zeros(grid: Arc<Grid<T>>) -> Self {
        let values = vec![Complex::new(T::zero(), T::zero()); grid.len()];
        Self::from_parts_unchecked(grid, values, Representation::Physical)
    }

    /// Samples `f(x)` at every grid point (physical representation).
    pub fn from_fn(grid: Arc<Grid<T>>, f: impl Fn(&[T]) -> Complex<T>) -> Result<Self> {
        let d = grid.dimension();
        let values = (0..grid.len())
            .map(|i| {
                let x = grid.position(i);
                f(&x[..d])
            })
            .collect();
        Self::new(grid, values, Representation::Physical)
    }

    pub fn grid(&self) -> &Arc<Grid<T>> {
        &self.grid
    }
    pub fn values(&self) -> &[Complex<T>] {
        &self.values
    }
    pub(crate) fn values_mut(&mut self) -> &mut [Complex<T>] {
        &mut self.values
    }
    pub fn into_values(self) -> Vec<Complex<T>> {
        self.values
    }
    pub fn representation(&self) -> Representation {
        self.representation
    }

    fn expect(&self, expected: Representation) -> Result<()> {
        if self.representation != expected {
            return Err(Error::Representation {
                expected: expected.name(),
                found: self.representation.name(),
            });
        }
        Ok(())
    }

    pub fn to_spectral(&self) -> Result<Self> {
        self.clone().into_spectral()
    }

    pub fn to_physical(&self) -> Result<Self> {
        self.clone().into_physical()
    }

    pub fn into_spectral(mut self) -> Result<Self> {
        self.expect(Representation::Physical)?;
        self.grid.transform(&mut self.values, FftDirection::Forward);
        self.representation = Representation::Spectral;
        Ok(self)
    }

    pub fn into_physical(mut self) -> Result<Self> {
        self.expect(Representation::Spectral)?;
        self.grid.transform(&mut self.values, FftDirection::Inverse);
        self.representation = Representation::Physical;
        Ok(self)
    }

    /// Converts to the requested representation, transforming if needed.
    pub fn into_representation(self, r: Representation) -> Self {
        match (self.representation, r) {
            (Representation::Physical, Representation::Spectral) => {
                self.into_spectral().expect("checked representation")
            }
            (Representation::Spectral, Representation::Physical) => {
                self.into_physical().expect("checked representation")
            }
            _ => self,
        }
    }

    pub fn physical(&self) -> Self {
        self.clone().into_representation(Representation::Physical)
    }

    pub fn spectral(&self) -> Self {
        self.clone().into_representation(Representation::Spectral)
    }

    /// Discrete L2 norm `(sum |u|^2 w)^{1/2}`; identical in both representations.
    pub fn l2_norm(&self) -> T {
        self.mass().sqrt()
    }

    /// `||u||_{L2}^2`.
    pub fn mass(&self) -> T {
        let s: T = self.values.iter().map(|v| v.norm_sqr()).sum();
        s * self.grid.weight()
    }

    /// `sum |u|^q w`, physical representation required.
    pub fn lp_integral(&self, q: T) -> Result<T> {
        self.expect(Representation::Physical)?;
        let half = q / T::lit(2.0);
        let s: T = self.values.iter().map(|v| v.norm_sqr().powf(half)).sum();
        Ok(s * self.grid.weight())
    }

    pub fn linf_norm(&self) -> Result<T> {
        self.expect(Representation::Physical)?;
        Ok(self.values.iter().map(|v| v.norm()).fold(T::zero(), |a, b| a.max(b)))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    pub fn same_grid(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    /// `self - other`, both brought to the representation of `self`.
    pub fn difference(&self, other: &Self) -> Result<Self> {
        if !self.same_grid(other) {
            return Err(Error::GridMismatch);
        }
        let other = other.clone().into_representation(self.representation);
        let values = self
            .values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| a - b)
            .collect();
        Ok(Self::from_parts_unchecked(
            self.grid.clone(),
            values,
            self.representation,
        ))
    }

    /// Relative L2 distance `||self - other|| / ||other||`.
    pub fn relative_l2_distance(&self, other: &Self) -> Result<T> {
        let diff = self.difference(other)?;
        Ok(diff.l2_norm() / other.l2_norm())
    }

    pub fn conj(&self) -> Self {
        let phys = self.physical();
        let values = phys.values.iter().map(|v| v.conj()).collect();
        Self::from_parts_unchecked(self.grid.clone(), values, Representation::Physical)
    }

    pub fn scale(&self, c: T) -> Self {
        let values = self.values.iter().map(|v| v.scale(c)).collect();
        Self::from_parts_unchecked(self.grid.clone(), values, self.representation)
    }

    /// Pointwise modulus as a real-valued field (physical).
    pub fn modulus(&self) -> Self {
        let phys = self.physical();
        let values = phys.values.iter().map(|v| Complex::new(v.norm(), T::zero())).collect();
        Self::from_parts_unchecked(self.grid.clone(), values, Representation::Physical)
    }
}

/// `(sum_k (1 + |xi_k|^2)^sigma |f_k|^2 w)^{1/2}`.
pub fn sobolev_norm<T: Real>(f: &Field<T>, sigma: T) -> T {
    let spec = f.spectral();
    let grid = spec.grid();
    let s: T = spec
        .values()
        .iter()
        .zip(grid.xi_sq())
        .map(|(v, &k2)| (T::one() + k2).powf(sigma) * v.norm_sqr())
        .sum();
    (s * grid.weight()).sqrt()
}

/// `||grad f||_{L2}^2 = sum_k |xi_k|^2 |f_k|^2 w`.
pub fn gradient_norm_sq<T: Real>(f: &Field<T>) -> T {
    let spec = f.spectral();
    gradient_norm_sq_spectral(spec.values(), spec.grid())
}

pub(crate) fn gradient_norm_sq_spectral<T: Real>(values: &[Complex<T>], grid: &Grid<T>) -> T {
    let s: T = values.iter().zip(grid.xi_sq()).map(|(v, &k2)| k2 * v.norm_sqr()).sum();
    s * grid.weight()
}

/// Fraction of spectral L2 mass on modes with `|k| > N/3` along some axis.
/// These are exactly the modes a 2/3-rule dealiaser removes.
pub fn spectral_tail_fraction<T: Real>(f: &Field<T>) -> T {
    let spec = f.spectral();
    let grid = spec.grid();
    tail_fraction_above(spec.values(), grid, grid.points_per_axis() as f64 / 3.0)
}

/// Fraction of spectral mass on modes with `max_axis |k| > cutoff`.
pub fn tail_fraction_above<T: Real>(values: &[Complex<T>], grid: &Grid<T>, cutoff: f64) -> T {
    let mut total = T::zero();
    let mut tail = T::zero();
    for (i, v) in values.iter().enumerate() {
        let e = v.norm_sqr();
        total += e;
        if grid.max_mode(i) as f64 > cutoff {
            tail += e;
        }
    }
    if total == T::zero() {
        T::zero()
    } else {
        tail / total
    }
}
