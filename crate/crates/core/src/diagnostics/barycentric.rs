use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec2;

/// Registered nonincreasing weights on `(0, ∞)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum MonotoneFn {
    /// `r^{−p}`, `p ∈ (0, 2]`.
    InversePower { p: f64 },
    /// `1 / (r² + ε)`.
    Regularized { epsilon: f64 },
    /// `(a + r²)^{γ/2 − 1}`, `a > 0`, `γ ∈ (0, 2)`.
    ShiftedPower { a: f64, gamma: f64 },
    /// `log(1 + 1/r²)`.
    LogInverseSquare,
}

impl MonotoneFn {
    pub fn validate(self) -> Result<Self> {
        let ok = match self {
            MonotoneFn::InversePower { p } => p > 0.0 && p <= 2.0,
            MonotoneFn::Regularized { epsilon } => epsilon > 0.0 && epsilon.is_finite(),
            MonotoneFn::ShiftedPower { a, gamma } => a > 0.0 && a.is_finite() && gamma > 0.0 && gamma < 2.0,
            MonotoneFn::LogInverseSquare => true,
        };
        if ok {
            Ok(self)
        } else {
            Err(Error::domain(format!("parameters out of range for {self:?}")))
        }
    }

    #[inline]
    pub fn eval(self, r: f64) -> f64 {
        match self {
            MonotoneFn::InversePower { p } => r.powf(-p),
            MonotoneFn::Regularized { epsilon } => 1.0 / (r * r + epsilon),
            MonotoneFn::ShiftedPower { a, gamma } => (a + r * r).powf(0.5 * gamma - 1.0),
            MonotoneFn::LogInverseSquare => (1.0 / (r * r)).ln_1p(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BarycentricDelta {
    /// `[Σ φ(|V|) V] · [Σ ψ(|V|) V]` over `V ∈ {X, Y, Z}`.
    pub delta: f64,
    /// `[φ(a) − φ(b)] [ψ(a) − ψ(b)] a²` for the two smallest norms `a ≤ b`.
    pub refined_lb: f64,
    /// `(Σ φ(|V|)|V|)(Σ ψ(|V|)|V|)`, the rounding scale of `delta`.
    pub scale: f64,
}

/// The triangle form with `Z = −X − Y`.
pub fn barycentric_delta(x: Vec2, y: Vec2, phi: MonotoneFn, psi: MonotoneFn) -> Result<BarycentricDelta> {
    let z = -(x + y);
    let vs = [x, y, z];
    let norms = vs.map(|v| v.norm());
    if norms.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
        return Err(Error::domain("triangle sides must have positive finite length"));
    }
    let mut a = Vec2::ZERO;
    let mut b = Vec2::ZERO;
    let (mut sa, mut sb) = (0.0, 0.0);
    for (v, &r) in vs.iter().zip(&norms) {
        let (p, q) = (phi.eval(r), psi.eval(r));
        a += *v * p;
        b += *v * q;
        sa += p * r;
        sb += q * r;
    }
    let mut sorted = norms;
    sorted.sort_by(f64::total_cmp);
    let (r0, r1) = (sorted[0], sorted[1]);
    let refined_lb = (phi.eval(r0) - phi.eval(r1)) * (psi.eval(r0) - psi.eval(r1)) * r0 * r0;
    Ok(BarycentricDelta {
        delta: a.dot(b),
        refined_lb,
        scale: sa * sb,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn right_angle_example() {
        let f = MonotoneFn::InversePower { p: 1.0 };
        let d = barycentric_delta(Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0), f, f).unwrap();
        let want = 2.0 * (1.0 - 1.0 / 2f64.sqrt()).powi(2);
        assert!((d.delta - want).abs() < 1e-15);
        assert_eq!(d.refined_lb, 0.0);
    }

    #[test]
    fn equilateral_gives_zero() {
        let x = Vec2::new(1.0, 0.0);
        let y = Vec2::new(-0.5, 3f64.sqrt() / 2.0);
        let d = barycentric_delta(
            x,
            y,
            MonotoneFn::LogInverseSquare,
            MonotoneFn::Regularized { epsilon: 0.1 },
        )
        .unwrap();
        assert!(d.delta.abs() < 1e-15);
    }

    #[test]
    fn equal_weights_give_a_squared_norm() {
        let f = MonotoneFn::ShiftedPower { a: 0.3, gamma: 1.2 };
        let (x, y) = (Vec2::new(0.3, -2.0), Vec2::new(1.7, 0.4));
        let d = barycentric_delta(x, y, f, f).unwrap();
        let s = x * f.eval(x.norm()) + y * f.eval(y.norm()) - (x + y) * f.eval((x + y).norm());
        assert!((d.delta - s.norm_sq()).abs() < 1e-14 * d.scale);
    }

    #[test]
    fn degenerate_sides_are_rejected() {
        let f = MonotoneFn::LogInverseSquare;
        assert!(barycentric_delta(Vec2::ZERO, Vec2::new(1.0, 0.0), f, f).is_err());
        assert!(barycentric_delta(Vec2::new(1.0, 0.0), Vec2::new(-1.0, 0.0), f, f).is_err());
        assert!(MonotoneFn::InversePower { p: 2.5 }.validate().is_err());
        assert!(MonotoneFn::ShiftedPower { a: 0.0, gamma: 1.0 }.validate().is_err());
    }
}
