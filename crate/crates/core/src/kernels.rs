//! The attraction kernel `K(z) = -z / (2π |z|²)` and its regularization
//! `K_ε(z) = -z / (2π (|z|² + ε))`.

use std::f64::consts::PI;
use std::sync::atomic::{AtomicBool, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec2;

static BOUND_CHECKS: AtomicBool = AtomicBool::new(true);

/// Toggle the debug-build assertions that certify kernel magnitudes.
/// They compile away in release builds regardless.
pub fn set_bound_checks(enabled: bool) {
    BOUND_CHECKS.store(enabled, Ordering::Relaxed);
}

#[inline]
fn bound_checks() -> bool {
    cfg!(debug_assertions) && BOUND_CHECKS.load(Ordering::Relaxed)
}

/// Regularization parameter of `K_ε`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct KernelParams {
    epsilon: f64,
}

impl KernelParams {
    /// `ε ∈ (0, 1]`, the range the regularized dynamics are defined on.
    pub fn new(epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        Ok(KernelParams { epsilon })
    }

    #[inline]
    pub fn epsilon(self) -> f64 {
        self.epsilon
    }

    #[inline]
    pub fn eval(self, z: Vec2) -> Vec2 {
        k_eps_unchecked(z, self.epsilon)
    }

    /// Sup of `|K_ε|`, attained at `|z| = √ε`.
    #[inline]
    pub fn sup_norm(self) -> f64 {
        1.0 / (4.0 * PI * self.epsilon.sqrt())
    }
}

pub(crate) fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon <= 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("epsilon must lie in (0, 1], got {epsilon}")))
    }
}

/// The singular kernel, with `K(0) = 0`.
pub fn eval_k(z: Vec2) -> Vec2 {
    let r2 = z.norm_sq();
    if r2 == 0.0 {
        return Vec2::ZERO;
    }
    z * (-1.0 / (2.0 * PI * r2))
}

pub fn eval_k_eps(z: Vec2, epsilon: f64) -> Result<Vec2> {
    check_epsilon(epsilon)?;
    Ok(k_eps_unchecked(z, epsilon))
}

#[inline]
pub(crate) fn k_eps_unchecked(z: Vec2, epsilon: f64) -> Vec2 {
    let k = z * (-1.0 / (2.0 * PI * (z.norm_sq() + epsilon)));
    if bound_checks() {
        let bound = 1.0 / (4.0 * PI * epsilon.sqrt());
        debug_assert!(k.norm() <= bound * (1.0 + 1e-12), "|K_eps| above 1/(4 pi sqrt eps)");
        debug_assert!(
            z.norm() * k.norm() <= 1.0 / (2.0 * PI) + 1e-15,
            "|z| |K_eps(z)| above 1/(2 pi)"
        );
    }
    k
}

/// `|z| · |K(z) − K_ε(z)|`, evaluated from the two kernels directly.
///
/// Analytically this is `ε / (2π (ε + |z|²))`; see [`kernel_gap_closed_form`].
pub fn kernel_gap(z: Vec2, epsilon: f64) -> Result<f64> {
    check_epsilon(epsilon)?;
    if z.norm_sq() == 0.0 {
        return Err(Error::domain("kernel gap is undefined at z = 0"));
    }
    let gap = z.norm() * (eval_k(z) - k_eps_unchecked(z, epsilon)).norm();
    if bound_checks() {
        debug_assert!((gap - kernel_gap_closed_form(z, epsilon)).abs() <= 1e-14);
    }
    Ok(gap)
}

pub fn kernel_gap_closed_form(z: Vec2, epsilon: f64) -> f64 {
    epsilon / (2.0 * PI * (epsilon + z.norm_sq()))
}

/// The three upper bounds on the kernel gap used to pass from `K_ε` to `K`:
/// `min(1, ε/|z|²)/(2π)`, `ε^{1-γ/2} |z|^{γ-2}/(2π)` and
/// `log(1+|z|^{-2}) / (2π log(1+1/ε))`.
#[derive(Clone, Copy, Debug)]
pub struct GapBounds {
    pub min_bound: f64,
    pub power_bound: f64,
    pub log_bound: f64,
}

pub fn kernel_gap_bounds(z: Vec2, epsilon: f64, gamma: f64) -> GapBounds {
    let r2 = z.norm_sq();
    let two_pi = 2.0 * PI;
    GapBounds {
        min_bound: (epsilon / r2).min(1.0) / two_pi,
        power_bound: epsilon.powf(1.0 - gamma / 2.0) * r2.powf(gamma / 2.0 - 1.0) / two_pi,
        log_bound: (1.0 / r2).ln_1p() / (two_pi * (1.0 / epsilon).ln_1p()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn singular_kernel_values() {
        let k = eval_k(Vec2::new(1.0, 0.0));
        assert!((k.x + 1.0 / (2.0 * PI)).abs() < 1e-16);
        assert_eq!(k.y, 0.0);
        assert!((k.x + 0.1591549).abs() < 1e-7);
        assert_eq!(eval_k(Vec2::ZERO), Vec2::ZERO);
        let k = eval_k(Vec2::new(0.0, 2.0));
        assert_eq!(k.x, 0.0);
        assert!((k.y + 1.0 / (4.0 * PI)).abs() < 1e-16);
    }

    #[test]
    fn regularized_kernel_values() {
        assert_eq!(eval_k_eps(Vec2::ZERO, 0.3).unwrap(), Vec2::ZERO);
        let k = eval_k_eps(Vec2::new(1.0, 0.0), 1.0).unwrap();
        assert!((k.x + 1.0 / (4.0 * PI)).abs() < 1e-16);
        assert!((k.x + 0.0795775).abs() < 1e-7);
        assert!(eval_k_eps(Vec2::new(1.0, 0.0), 0.0).is_err());
        assert!(eval_k_eps(Vec2::new(1.0, 0.0), -1.0).is_err());
        assert!(eval_k_eps(Vec2::new(1.0, 0.0), 1.5).is_err());
    }

    #[test]
    fn regularized_kernel_peaks_at_sqrt_eps() {
        // Grid search over |z| as an independent check of the calculus.
        let eps = 0.04;
        let (mut best_r, mut best) = (0.0, 0.0);
        for k in 1..200_000 {
            let r = k as f64 * 1e-5;
            let v = eval_k_eps(Vec2::new(r, 0.0), eps).unwrap().norm();
            if v > best {
                best = v;
                best_r = r;
            }
        }
        assert!((best_r - eps.sqrt()).abs() < 2e-5);
        let params = KernelParams::new(eps).unwrap();
        assert!((best - params.sup_norm()).abs() < 1e-12);
    }

    #[test]
    fn gap_values() {
        let eps: f64 = 0.25;
        let z = Vec2::new(0.0, eps.sqrt());
        assert!((kernel_gap(z, eps).unwrap() - 1.0 / (4.0 * PI)).abs() < 1e-15);
        assert!((kernel_gap(Vec2::new(1.0, 0.0), 1.0).unwrap() - 1.0 / (4.0 * PI)).abs() < 1e-15);
        assert!(kernel_gap(Vec2::new(1e6, 0.0), 0.5).unwrap() < 1e-12);
        assert!(kernel_gap(Vec2::ZERO, 0.5).is_err());
    }

    #[test]
    fn antisymmetry_is_exact() {
        let z = Vec2::new(0.37, -1.91);
        assert_eq!(eval_k_eps(-z, 0.01).unwrap(), -eval_k_eps(z, 0.01).unwrap());
    }
}
