//! Atomic and gridded approximations of a planar measure, and the single- and
//! pair-moment functionals evaluated on them.
//!
//! Pair functionals sum over ordered pairs of *distinct* atoms (particles or
//! cells). Keeping the self-pair would make every functional that is singular
//! on the diagonal infinite for any atomic measure. For a gridded density the
//! cells act as point masses at their centers (midpoint quadrature).

mod ensemble;
mod grid;
mod series;

pub use ensemble::WeightedEnsemble;
pub use grid::{GridDensity, GridFunctionals, PairMethod};

#[cfg(test)]
pub(crate) fn gaussian_grid_for_tests(half_width: f64, n: usize, var: f64, mass: f64) -> GridDensity {
    grid::gaussian_grid(half_width, n, Vec2::ZERO, var, mass)
}
pub use series::{DiagnosticRow, DiagnosticSeries, SeriesMeta, CSV_HEADER, EXTRA_CSV_HEADER};

use std::fmt;
use std::ops::Add;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::geometry::Vec2;

/// A nonnegative functional value that may be infinite, e.g. a singular pair
/// sum on a configuration with two coincident particles.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Extended {
    Finite(f64),
    Infinite,
}

impl Extended {
    pub fn is_infinite(self) -> bool {
        matches!(self, Extended::Infinite)
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Extended::Finite(v) => Some(v),
            Extended::Infinite => None,
        }
    }

    /// The value as a float, `+∞` for [`Extended::Infinite`].
    pub fn value(self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }
}

impl Add for Extended {
    type Output = Extended;
    fn add(self, rhs: Extended) -> Extended {
        match (self, rhs) {
            (Extended::Finite(a), Extended::Finite(b)) => Extended::Finite(a + b),
            _ => Extended::Infinite,
        }
    }
}

impl fmt::Display for Extended {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Extended::Finite(v) => write!(f, "{v}"),
            Extended::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for Extended {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Extended::Finite(v) => s.serialize_f64(*v),
            Extended::Infinite => s.serialize_str("inf"),
        }
    }
}

/// `L(r) = log(1 + 1/r)`.
#[inline]
pub fn log_weight(r: f64) -> f64 {
    (1.0 / r).ln_1p()
}

/// Functionals shared by particle ensembles and grid densities.
pub trait Measure {
    fn total_mass(&self) -> f64;

    fn center_of_mass(&self) -> Vec2;

    /// `∫ |x − center|^γ`, for `γ ∈ (0, 2]`.
    fn moment_gamma(&self, gamma: f64, center: Vec2) -> Result<f64>;

    /// `∬ |x − y|^γ` over distinct pairs, `γ ∈ (0, 2]`.
    fn pair_moment(&self, gamma: f64) -> Result<f64>;

    /// `∬ |x − y|^{γ−2}` over distinct pairs, `γ ∈ (0, 2)`.
    fn pair_dissipation(&self, gamma: f64) -> Result<Extended>;

    /// `(∬ log(1 + 1/|x−y|), ∬ log(1 + |x−y|^{−2}))`.
    fn log_pair_moments(&self) -> (Extended, Extended);

    /// `∬ log(1 + |x−y|^{−2}) · ε / (|x−y|² + ε)`.
    fn log_regularization_term(&self, epsilon: f64) -> Result<Extended>;

    /// Largest mass inside an open ball of radius `ν`, maximized over the
    /// candidate centers (particle positions, or grid nodes).
    fn max_ball_mass(&self, nu: f64) -> Result<f64>;
}

pub(crate) fn check_gamma_closed(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma <= 2.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("gamma must lie in (0, 2], got {gamma}")))
    }
}

pub(crate) fn check_gamma_open(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma < 2.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("gamma must lie in (0, 2), got {gamma}")))
    }
}

pub(crate) fn check_radius(nu: f64) -> Result<()> {
    if nu > 0.0 && nu.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("ball radius must be positive, got {nu}")))
    }
}

/// `|x|^γ` from `|x|²` without a square root for `γ = 2`.
#[inline]
pub(crate) fn pow_from_sq(r2: f64, gamma: f64) -> f64 {
    if gamma == 2.0 {
        r2
    } else {
        r2.powf(0.5 * gamma)
    }
}

/// Parameters of the sampled functionals that are not fixed by the dynamics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionalParams {
    /// Exponent of the moment, pair-moment and dissipation columns.
    pub gamma: f64,
    /// Radius of the ball-mass probe.
    pub nu: f64,
}

impl FunctionalParams {
    pub fn validate(&self) -> Result<()> {
        check_gamma_open(self.gamma)?;
        check_radius(self.nu)
    }
}
