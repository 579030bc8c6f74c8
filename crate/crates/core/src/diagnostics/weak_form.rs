//! Residuals of the weak-form identities along a grid trajectory.
//!
//! For `φ(x) = e^{−|x|²/2}` the linear identity reads
//! `A(T) − A(0) = ∫ (B + C) dt` with `A = ∫φ f`, `B = ∫Δφ f` and
//! `C = ∫ ∇φ · (K_ε ∗ f) f`. For the pair weight `ψ(s) = (1 − s/R²)³` on
//! `s < R²` the pair identity reads `P(T) − P(0) = ∫ Q dt` with
//! `P = ∬ ψ(|x−y|²) f f` and
//! `Q = 8∬ [ψ′ + |x−y|² ψ″] f f + 4 ∫ (K_ε ∗ f)(x) · W(x) f(dx)`,
//! `W(x) = ∫ (x − y) ψ′(|x−y|²) f(dy)`.
//!
//! Cells act as point masses at their centers. The pair sums keep the
//! diagonal since `ψ` is smooth. Time integrals use the trapezoid rule over
//! every observed step.

use crate::error::{Error, Result};
use crate::fft::{PaddedConv, Spectrum};
use crate::geometry::Vec2;
use crate::kernels::{check_epsilon, k_eps_unchecked};
use crate::measures::GridDensity;

/// Support radius of the pair weight.
pub const PAIR_SUPPORT: f64 = 2.0;

fn psi(s: f64) -> (f64, f64, f64) {
    let r2 = PAIR_SUPPORT * PAIR_SUPPORT;
    if s >= r2 {
        return (0.0, 0.0, 0.0);
    }
    let u = 1.0 - s / r2;
    (u * u * u, -3.0 * u * u / r2, 6.0 * u / (r2 * r2))
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Sample {
    t: f64,
    a: f64,
    b_plus_c: f64,
    p: f64,
    q: f64,
}

pub struct WeakFormProbe {
    conv: PaddedConv,
    half_width: f64,
    n: usize,
    velocity: (Spectrum, Spectrum),
    pair: (Spectrum, Spectrum),
    w: (Spectrum, Spectrum),
    first: Option<Sample>,
    last: Option<Sample>,
    linear_integral: f64,
    pair_integral: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeakFormResiduals {
    /// `A(T) − A(0) − ∫(B + C)`.
    pub linear: f64,
    /// `P(T) − P(0) − ∫Q`.
    pub pair: f64,
    /// `|A(T) − A(0)|`, for scale.
    pub linear_change: f64,
    /// `|P(T) − P(0)|`, for scale.
    pub pair_change: f64,
}

impl WeakFormProbe {
    pub fn new(half_width: f64, n: usize, epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        let conv = PaddedConv::new(n);
        let h = 2.0 * half_width / n as f64;
        let at = |ox: i64, oy: i64| Vec2::new(ox as f64 * h, oy as f64 * h);
        let velocity = (
            conv.kernel_spectrum(n, n, |ox, oy| k_eps_unchecked(at(ox, oy), epsilon).x),
            conv.kernel_spectrum(n, n, |ox, oy| k_eps_unchecked(at(ox, oy), epsilon).y),
        );
        let pair = (
            conv.kernel_spectrum(n, n, |ox, oy| psi(at(ox, oy).norm_sq()).0),
            conv.kernel_spectrum(n, n, |ox, oy| {
                let s = at(ox, oy).norm_sq();
                let (_, d1, d2) = psi(s);
                d1 + s * d2
            }),
        );
        let w = (
            conv.kernel_spectrum(n, n, |ox, oy| {
                let d = at(ox, oy);
                d.x * psi(d.norm_sq()).1
            }),
            conv.kernel_spectrum(n, n, |ox, oy| {
                let d = at(ox, oy);
                d.y * psi(d.norm_sq()).1
            }),
        );
        Ok(WeakFormProbe {
            conv,
            half_width,
            n,
            velocity,
            pair,
            w,
            first: None,
            last: None,
            linear_integral: 0.0,
            pair_integral: 0.0,
        })
    }

    fn sample(&self, t: f64, grid: &GridDensity) -> Sample {
        let n = self.n;
        let masses = grid.cell_masses();
        let input = self.conv.input_spectrum(&masses);
        let (ux, uy) = self.conv.apply_pair(&input, &self.velocity.0, &self.velocity.1, n, n);
        let (p, q) = self.conv.apply_pair(&input, &self.pair.0, &self.pair.1, n, n);
        let (wx, wy) = self.conv.apply_pair(&input, &self.w.0, &self.w.1, n, n);
        let mut s = Sample {
            t,
            a: 0.0,
            b_plus_c: 0.0,
            p: 0.0,
            q: 0.0,
        };
        let mut uw = 0.0;
        let mut pp = 0.0;
        let mut qq = 0.0;
        for j in 0..n {
            for i in 0..n {
                let k = j * n + i;
                let m = masses[k];
                let x = grid.cell_center(i, j);
                let r2 = x.norm_sq();
                let phi = (-0.5 * r2).exp();
                s.a += m * phi;
                // ∇φ = −x φ, Δφ = (|x|² − 2) φ
                s.b_plus_c += m * ((r2 - 2.0) * phi - phi * (x.x * ux[k] + x.y * uy[k]));
                pp += m * p[k];
                qq += m * q[k];
                uw += m * (ux[k] * wx[k] + uy[k] * wy[k]);
            }
        }
        s.p = pp;
        s.q = 8.0 * qq + 4.0 * uw;
        s
    }

    /// Records the state at time `t`; times must increase.
    pub fn observe(&mut self, t: f64, grid: &GridDensity) -> Result<()> {
        if grid.cells_per_side() != self.n || grid.half_width() != self.half_width {
            return Err(Error::domain("grid geometry does not match the probe"));
        }
        let s = self.sample(t, grid);
        if let Some(prev) = self.last {
            if !(t > prev.t) {
                return Err(Error::domain(format!("probe time {t} does not follow {}", prev.t)));
            }
            let dt = t - prev.t;
            self.linear_integral += 0.5 * dt * (prev.b_plus_c + s.b_plus_c);
            self.pair_integral += 0.5 * dt * (prev.q + s.q);
        } else {
            self.first = Some(s);
        }
        self.last = Some(s);
        Ok(())
    }

    pub fn residuals(&self) -> Result<WeakFormResiduals> {
        let (Some(a), Some(b)) = (self.first, self.last) else {
            return Err(Error::TooFewRows { needed: 1, have: 0 });
        };
        Ok(WeakFormResiduals {
            linear: b.a - a.a - self.linear_integral,
            pair: b.p - a.p - self.pair_integral,
            linear_change: (b.a - a.a).abs(),
            pair_change: (b.p - a.p).abs(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_solver::{run_grid_from, AdvectionScheme, GridConfig};
    use crate::initial_data::InitialMeasure;
    use crate::measures::FunctionalParams;

    #[test]
    fn pair_weight_derivatives() {
        for s in [0.0, 0.7, 2.5, 3.99] {
            let d = 1e-6;
            let (f0, f1, f2) = psi(s);
            let fd1 = (psi(s + d).0 - psi(s - d).0) / (2.0 * d);
            let fd2 = (psi(s + d).1 - psi(s - d).1) / (2.0 * d);
            assert!((f1 - fd1).abs() < 1e-8 && (f2 - fd2).abs() < 1e-8);
            assert!(f0 > 0.0);
        }
        assert_eq!(psi(4.0), (0.0, 0.0, 0.0));
    }

    #[test]
    fn static_state_has_zero_residual() {
        let g = crate::measures::gaussian_grid_for_tests(3.0, 16, 0.5, 1.0);
        let mut p = WeakFormProbe::new(3.0, 16, 0.1).unwrap();
        p.observe(0.0, &g).unwrap();
        let r = p.residuals().unwrap();
        assert_eq!(r.linear, 0.0);
        assert_eq!(r.pair, 0.0);
        assert!(p.observe(0.0, &g).is_err());
    }

    #[test]
    fn residuals_shrink_under_refinement() {
        let f0 = InitialMeasure::gaussian(Vec2::ZERO, 0.5, 4.0 * std::f64::consts::PI).unwrap();
        let mut res = Vec::new();
        for n in [16, 32] {
            let mut cfg = GridConfig::new(4.0, n, 0.1, 0.25);
            cfg.advection = AdvectionScheme::VanLeer;
            let grid = f0.project_to_grid(0.1, 4.0, n).unwrap();
            let mut probe = WeakFormProbe::new(4.0, n, 0.1).unwrap();
            let mut obs = |t: f64, g: &GridDensity| probe.observe(t, g);
            run_grid_from(&cfg, grid, FunctionalParams { gamma: 1.0, nu: 0.5 }, Some(&mut obs)).unwrap();
            res.push(probe.residuals().unwrap());
        }
        assert!(res[1].linear.abs() < 0.5 * res[0].linear.abs());
        assert!(res[1].pair.abs() < 0.5 * res[0].pair.abs());
    }
}
