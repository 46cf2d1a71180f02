//! Piecewise-constant periodic dispersion maps.
//!
//! A [`DispersionMap`] alternates between a focusing value `gamma_plus` on
//! `(n*eps, (n + t_plus)*eps]` and a defocusing value `-gamma_minus` on
//! `((n + t_plus)*eps, (n + 1)*eps]`. The right-closed convention makes the
//! map total: the value at a period start equals the value at the end of the
//! previous period, i.e. `-gamma_minus`.
//!
//! The cumulative dispersion is evaluated in closed form from a periodic
//! primitive; nothing here uses quadrature.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::scalar::Real;

/// Direction of a jump in the dispersion coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SwitchKind {
    /// Focusing piece ends, defocusing piece starts (at `(n + t_plus)*eps`).
    ToDefocusing,
    /// Defocusing piece ends, a new period starts (at `n*eps`).
    ToFocusing,
}

impl SwitchKind {
    pub fn flipped(self) -> Self {
        match self {
            SwitchKind::ToDefocusing => SwitchKind::ToFocusing,
            SwitchKind::ToFocusing => SwitchKind::ToDefocusing,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Breakpoint<T> {
    pub time: T,
    pub switch_kind: SwitchKind,
}

/// Anything the solver can integrate against: a time-dependent dispersion
/// coefficient that is constant between breakpoints.
pub trait DispersionSchedule<T: Real>: Sync {
    fn gamma_at(&self, t: T) -> T;

    /// Time average of the coefficient over one period.
    fn average_dispersion(&self) -> T;

    /// `Gamma(t, s)`, the integral of the coefficient over `[s, t]`.
    fn cumulative_dispersion(&self, s: T, t: T) -> T;

    /// `Gamma(t, s) - <gamma> (t - s)`.
    fn mean_zero_integral(&self, s: T, t: T) -> T {
        self.cumulative_dispersion(s, t) - self.average_dispersion() * (t - s)
    }

    /// Jump times strictly inside `(s, t)`, increasing.
    fn breakpoints_between(&self, s: T, t: T) -> Result<Vec<Breakpoint<T>>>;

    /// Length of the shortest constant piece, `None` if the coefficient never jumps.
    fn min_piece_length(&self) -> Option<T>;
}

/// The `eps`-scaled map `gamma(t / eps)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispersionMap<T> {
    pub gamma_plus: T,
    pub gamma_minus: T,
    pub t_plus: T,
    pub epsilon: T,
}

impl<T: Real> DispersionMap<T> {
    pub fn new(gamma_plus: T, gamma_minus: T, t_plus: T, epsilon: T) -> Result<Self> {
        let map = Self {
            gamma_plus,
            gamma_minus,
            t_plus,
            epsilon,
        };
        map.validate()?;
        Ok(map)
    }

    /// Unscaled map (`epsilon = 1`).
    pub fn unit(gamma_plus: T, gamma_minus: T, t_plus: T) -> Result<Self> {
        Self::new(gamma_plus, gamma_minus, t_plus, T::one())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: T| v.is_finite() && v > T::zero();
        if !positive(self.gamma_plus) {
            return Err(invalid("gamma_plus", format!("must be > 0, got {}", self.gamma_plus)));
        }
        if !positive(self.gamma_minus) {
            return Err(invalid("gamma_minus", format!("must be > 0, got {}", self.gamma_minus)));
        }
        if !(self.t_plus > T::zero() && self.t_plus < T::one()) {
            return Err(invalid(
                "t_plus",
                format!("must satisfy 0 < t_plus < 1, got {}", self.t_plus),
            ));
        }
        if !positive(self.epsilon) {
            return Err(invalid("epsilon", format!("must be > 0, got {}", self.epsilon)));
        }
        Ok(())
    }

    pub fn with_epsilon(&self, epsilon: T) -> Result<Self> {
        Self::new(self.gamma_plus, self.gamma_minus, self.t_plus, epsilon)
    }

    pub fn period(&self) -> T {
        self.epsilon
    }

    /// Splits `t / eps` into `(n, phase)` with `phase` in `[0, 1)`.
    fn split(&self, t: T) -> (T, T) {
        let u = t / self.epsilon;
        let n = u.floor();
        let mut phase = u - n;
        if phase >= T::one() {
            phase = T::zero();
        }
        (n, phase)
    }

    /// Integral of the unscaled map over `[0, phase]`, for `phase` in `[0, 1]`.
    fn primitive_in_period(&self, phase: T) -> T {
        let up = phase.min(self.t_plus);
        let down = (phase - self.t_plus).max(T::zero());
        self.gamma_plus * up - self.gamma_minus * down
    }

    /// 1-periodic, mean-zero primitive of the oscillating part.
    fn periodic_primitive(&self, phase: T) -> T {
        self.primitive_in_period(phase) - self.average_dispersion() * phase
    }

    /// Start of the period containing `t` (period starts are `n*eps`).
    pub fn period_start_at_or_before(&self, t: T) -> T {
        self.split(t).0 * self.epsilon
    }

    /// Bounds `[lo, hi]` of `mean_zero_integral(s, t)` when `s` is a period start.
    pub fn oscillation_bounds(&self) -> (T, T) {
        let mean = self.average_dispersion();
        (
            -self.epsilon * (self.gamma_minus + mean),
            self.epsilon * (self.gamma_plus - mean),
        )
    }

    /// Largest `c >= 0` with `|Gamma(t, s)| >= c (t - s)` for every period
    /// start `s` and every `t >= s + 2 eps`. `None` when no positive constant
    /// can be guaranteed (zero mean, or oscillation dominating the drift).
    pub fn growth_constant(&self) -> Option<T> {
        let mean = self.average_dispersion();
        if mean == T::zero() {
            return None;
        }
        // From a period start the oscillating part lies in [0, t_plus (gamma_plus - mean)] eps.
        let c = if mean > T::zero() {
            mean
        } else {
            -mean - self.t_plus * (self.gamma_plus - mean) / T::lit(2.0)
        };
        (c > T::zero()).then_some(c)
    }
}

impl<T: Real> DispersionSchedule<T> for DispersionMap<T> {
    fn gamma_at(&self, t: T) -> T {
        let u = t / self.epsilon;
        let n = u.ceil() - T::one();
        let phase = u - n;
        if phase <= self.t_plus {
            self.gamma_plus
        } else {
            -self.gamma_minus
        }
    }

    fn average_dispersion(&self) -> T {
        self.gamma_plus * self.t_plus - self.gamma_minus * (T::one() - self.t_plus)
    }

    fn cumulative_dispersion(&self, s: T, t: T) -> T {
        if s == t {
            return T::zero();
        }
        self.average_dispersion() * (t - s) + self.mean_zero_integral(s, t)
    }

    fn mean_zero_integral(&self, s: T, t: T) -> T {
        if s == t {
            return T::zero();
        }
        let (_, ps) = self.split(s);
        let (_, pt) = self.split(t);
        self.epsilon * (self.periodic_primitive(pt) - self.periodic_primitive(ps))
    }

    fn breakpoints_between(&self, s: T, t: T) -> Result<Vec<Breakpoint<T>>> {
        if s > t {
            return Err(Error::ReversedInterval {
                s: s.as_f64(),
                t: t.as_f64(),
            });
        }
        let first = (s / self.epsilon).floor() - T::one();
        let last = (t / self.epsilon).ceil() + T::one();
        let mut out = Vec::new();
        let mut n = first;
        while n <= last {
            for (offset, kind) in [
                (T::zero(), SwitchKind::ToFocusing),
                (self.t_plus, SwitchKind::ToDefocusing),
            ] {
                let time = self.epsilon * (n + offset);
                if time > s && time < t {
                    out.push(Breakpoint {
                        time,
                        switch_kind: kind,
                    });
                }
            }
            n += T::one();
        }
        Ok(out)
    }

    fn min_piece_length(&self) -> Option<T> {
        Some(self.epsilon * self.t_plus.min(T::one() - self.t_plus))
    }
}

/// Constant coefficient; the averaged equation and plain focusing/defocusing
/// NLS runs use this.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantDispersion<T>(pub T);

impl<T: Real> DispersionSchedule<T> for ConstantDispersion<T> {
    fn gamma_at(&self, _t: T) -> T {
        self.0
    }
    fn average_dispersion(&self) -> T {
        self.0
    }
    fn cumulative_dispersion(&self, s: T, t: T) -> T {
        self.0 * (t - s)
    }
    fn mean_zero_integral(&self, _s: T, _t: T) -> T {
        T::zero()
    }
    fn breakpoints_between(&self, s: T, t: T) -> Result<Vec<Breakpoint<T>>> {
        if s > t {
            return Err(Error::ReversedInterval {
                s: s.as_f64(),
                t: t.as_f64(),
            });
        }
        Ok(Vec::new())
    }
    fn min_piece_length(&self) -> Option<T> {
        None
    }
}

/// Time reflection `tau -> pivot - tau` of another schedule. Backward
/// integration is forward integration of the conjugated field against this.
#[derive(Debug, Clone, Copy)]
pub struct Reversed<'a, S> {
    pub inner: &'a S,
    pub pivot: f64,
}

impl<'a, S> Reversed<'a, S> {
    pub fn new<T: Real>(inner: &'a S, pivot: T) -> Self {
        Self {
            inner,
            pivot: pivot.as_f64(),
        }
    }
}

impl<T: Real, S: DispersionSchedule<T>> DispersionSchedule<T> for Reversed<'_, S> {
    fn gamma_at(&self, t: T) -> T {
        self.inner.gamma_at(T::lit(self.pivot) - t)
    }
    fn average_dispersion(&self) -> T {
        self.inner.average_dispersion()
    }
    fn cumulative_dispersion(&self, s: T, t: T) -> T {
        let p = T::lit(self.pivot);
        self.inner.cumulative_dispersion(p - t, p - s)
    }
    fn mean_zero_integral(&self, s: T, t: T) -> T {
        let p = T::lit(self.pivot);
        self.inner.mean_zero_integral(p - t, p - s)
    }
    fn breakpoints_between(&self, s: T, t: T) -> Result<Vec<Breakpoint<T>>> {
        if s > t {
            return Err(Error::ReversedInterval {
                s: s.as_f64(),
                t: t.as_f64(),
            });
        }
        let p = T::lit(self.pivot);
        let mut bps: Vec<_> = self
            .inner
            .breakpoints_between(p - t, p - s)?
            .into_iter()
            .map(|b| Breakpoint {
                time: p - b.time,
                switch_kind: b.switch_kind.flipped(),
            })
            .filter(|b| b.time > s && b.time < t)
            .collect();
        bps.reverse();
        Ok(bps)
    }
    fn min_piece_length(&self) -> Option<T> {
        self.inner.min_piece_length()
    }
}
