use rayon::prelude::*;

use super::{
    check_gamma_closed, check_gamma_open, check_radius, log_weight, pow_from_sq, DiagnosticRow, Extended, Measure,
};
use crate::cell_list::CellList;
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::kernels::check_epsilon;

/// `N` planar points carrying equal mass `w`; total mass `N · w`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedEnsemble {
    positions: Vec<Vec2>,
    weight: f64,
}

impl WeightedEnsemble {
    pub fn new(positions: Vec<Vec2>, weight: f64) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::domain("an ensemble needs at least one point"));
        }
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(Error::domain(format!(
                "weight must be positive and finite, got {weight}"
            )));
        }
        if let Some(i) = positions.iter().position(|p| !p.is_finite()) {
            return Err(Error::domain(format!("position {i} is not finite")));
        }
        Ok(WeightedEnsemble { positions, weight })
    }

    /// Equal weights `mass / N`.
    pub fn with_mass(positions: Vec<Vec2>, mass: f64) -> Result<Self> {
        let n = positions.len().max(1) as f64;
        Self::new(positions, mass / n)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn positions(&self) -> &[Vec2] {
        &self.positions
    }

    pub(crate) fn positions_mut(&mut self) -> &mut [Vec2] {
        &mut self.positions
    }

    /// `Σ_{i≠j} w² φ(|x_i − x_j|²)`. Partial sums are taken per row `i` over
    /// `j > i` and reduced in index order, so the result does not depend on
    /// the thread count.
    pub fn pair_sum<F>(&self, phi: F) -> f64
    where
        F: Fn(f64) -> f64 + Sync,
    {
        let pts = &self.positions;
        let rows: Vec<f64> = (0..pts.len())
            .into_par_iter()
            .map(|i| {
                let xi = pts[i];
                pts[i + 1..].iter().map(|&xj| phi((xi - xj).norm_sq())).sum::<f64>()
            })
            .collect();
        2.0 * self.weight * self.weight * rows.iter().sum::<f64>()
    }

    /// As [`pair_sum`](Self::pair_sum) for kernels singular at 0: any exact
    /// coincidence of two distinct points gives [`Extended::Infinite`].
    pub fn singular_pair_sum<F>(&self, phi: F) -> Extended
    where
        F: Fn(f64) -> f64 + Sync,
    {
        if self.has_coincident_pair() {
            return Extended::Infinite;
        }
        Extended::Finite(self.pair_sum(phi))
    }

    pub fn has_coincident_pair(&self) -> bool {
        let mut sorted: Vec<(u64, u64)> = self
            .positions
            .iter()
            // +0.0 normalizes -0.0 so equal coordinates share a bit pattern
            .map(|p| ((p.x + 0.0).to_bits(), (p.y + 0.0).to_bits()))
            .collect();
        sorted.sort_unstable();
        sorted.windows(2).any(|w| w[0] == w[1])
    }

    /// All per-row functionals in one pass over unordered pairs. The pass is
    /// sequential and therefore bit-reproducible.
    ///
    /// The triple functional uses the pair reduction
    /// `G = 3M Σ_{p≠q} w² g(r_pq) + 6 Σ_q w Ũ_q·Ṽ_q`
    /// with `g(r) = L(r²) r²/(r²+ε)`, `Ũ_q = Σ_{p≠q} w L(|x_p−x_q|²)(x_p−x_q)`
    /// and `Ṽ_q = Σ_{r≠q} w (x_q−x_r)/(|x_q−x_r|²+ε)`, which equals the sum
    /// over distinct ordered triples.
    pub fn diagnostic_row(&self, t: f64, gamma: f64, epsilon: f64, nu: f64) -> Result<DiagnosticRow> {
        check_gamma_open(gamma)?;
        check_epsilon(epsilon)?;
        check_radius(nu)?;
        let pts = &self.positions;
        let n = pts.len();
        let w = self.weight;
        let mass = self.mass();
        let com = self.center_of_mass();

        let (mut m2, mut mg) = (0.0, 0.0);
        for &p in pts {
            let r2 = p.norm_sq();
            m2 += r2;
            mg += pow_from_sq(r2, gamma);
        }

        let mut s_gamma = 0.0;
        let mut d_gamma = 0.0;
        let mut log1 = 0.0;
        let mut log2 = 0.0;
        let mut ccc1 = 0.0;
        let mut s_g = 0.0;
        let mut u = vec![Vec2::ZERO; n];
        let mut v = vec![Vec2::ZERO; n];
        let mut collision = false;
        for i in 0..n {
            let xi = pts[i];
            for j in (i + 1)..n {
                let d = xi - pts[j];
                let r2 = d.norm_sq();
                if r2 == 0.0 {
                    collision = true;
                    continue;
                }
                let rg = pow_from_sq(r2, gamma);
                s_gamma += rg;
                d_gamma += rg / r2;
                log1 += log_weight(r2.sqrt());
                let l2 = log_weight(r2);
                log2 += l2;
                let reg = 1.0 / (r2 + epsilon);
                ccc1 += l2 * epsilon * reg;
                s_g += l2 * r2 * reg;
                // d = x_i − x_j
                let ud = d * l2;
                let vd = d * reg;
                u[i] -= ud;
                u[j] += ud;
                v[i] += vd;
                v[j] -= vd;
            }
        }
        let w2 = 2.0 * w * w;
        let ext = |s: f64| {
            if collision {
                Extended::Infinite
            } else {
                Extended::Finite(w2 * s)
            }
        };
        let g_triple = if collision {
            Extended::Infinite
        } else {
            let uv: f64 = u.iter().zip(&v).map(|(a, b)| a.dot(*b)).sum();
            Extended::Finite(3.0 * mass * w2 * s_g + 6.0 * w * w * w * uv)
        };
        Ok(DiagnosticRow {
            t,
            mass,
            com,
            m2: w * m2,
            s_gamma: w2 * s_gamma,
            d_gamma: ext(d_gamma),
            logpair1: ext(log1),
            logpair2: ext(log2),
            max_ball_mass: self.max_ball_mass(nu)?,
            g_triple,
            moment_gamma: w * mg,
            ccc1: ext(ccc1),
        })
    }

    pub fn mass(&self) -> f64 {
        self.positions.len() as f64 * self.weight
    }
}

impl Measure for WeightedEnsemble {
    fn total_mass(&self) -> f64 {
        self.mass()
    }

    fn center_of_mass(&self) -> Vec2 {
        let mut s = Vec2::ZERO;
        for &p in &self.positions {
            s += p;
        }
        s * (1.0 / self.positions.len() as f64)
    }

    fn moment_gamma(&self, gamma: f64, center: Vec2) -> Result<f64> {
        check_gamma_closed(gamma)?;
        let s: f64 = self
            .positions
            .iter()
            .map(|&p| pow_from_sq((p - center).norm_sq(), gamma))
            .sum();
        Ok(self.weight * s)
    }

    fn pair_moment(&self, gamma: f64) -> Result<f64> {
        check_gamma_closed(gamma)?;
        Ok(self.pair_sum(|r2| pow_from_sq(r2, gamma)))
    }

    fn pair_dissipation(&self, gamma: f64) -> Result<Extended> {
        check_gamma_open(gamma)?;
        let e = 0.5 * gamma - 1.0;
        Ok(self.singular_pair_sum(|r2| r2.powf(e)))
    }

    fn log_pair_moments(&self) -> (Extended, Extended) {
        (
            self.singular_pair_sum(|r2| log_weight(r2.sqrt())),
            self.singular_pair_sum(log_weight),
        )
    }

    fn log_regularization_term(&self, epsilon: f64) -> Result<Extended> {
        check_epsilon(epsilon)?;
        Ok(self.singular_pair_sum(|r2| log_weight(r2) * epsilon / (r2 + epsilon)))
    }

    fn max_ball_mass(&self, nu: f64) -> Result<f64> {
        check_radius(nu)?;
        let pts = &self.positions;
        let list = CellList::new(pts, nu);
        let best = pts
            .par_iter()
            .map(|&c| {
                let mut count = 0usize;
                list.for_each_candidate(c, nu, |j| {
                    if (pts[j] - c).norm_sq() < nu * nu {
                        count += 1;
                    }
                });
                count
            })
            .max()
            .unwrap_or(0);
        Ok(best as f64 * self.weight)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    fn ens(pts: &[(f64, f64)], w: f64) -> WeightedEnsemble {
        WeightedEnsemble::new(pts.iter().map(|&(x, y)| Vec2::new(x, y)).collect(), w).unwrap()
    }

    #[test]
    fn construction_rejects_invalid_input() {
        assert!(WeightedEnsemble::new(vec![], 1.0).is_err());
        assert!(WeightedEnsemble::new(vec![Vec2::ZERO], 0.0).is_err());
        assert!(WeightedEnsemble::new(vec![Vec2::new(f64::NAN, 0.0)], 1.0).is_err());
        let e = ens(&[(0.0, 0.0), (1.0, 1.0), (2.0, 0.0)], 0.5);
        assert_eq!(e.mass(), 1.5);
    }

    #[test]
    fn moment_examples() {
        let e = ens(&[(3.0, 4.0)], 1.0);
        assert_eq!(e.moment_gamma(2.0, Vec2::ZERO).unwrap(), 25.0);
        let e = ens(&[(1.0, 0.0), (-1.0, 0.0)], 2.0);
        assert_eq!(e.moment_gamma(1.0, Vec2::ZERO).unwrap(), 4.0);
        assert!(e.moment_gamma(0.0, Vec2::ZERO).is_err());
        assert!(e.moment_gamma(2.5, Vec2::ZERO).is_err());
    }

    #[test]
    fn pair_examples() {
        let e = ens(&[(0.0, 0.0), (1.0, 0.0)], 1.0);
        assert_eq!(e.pair_moment(1.3).unwrap(), 2.0);
        assert_eq!(e.pair_dissipation(1.5).unwrap(), Extended::Finite(2.0));
        let e4 = ens(&[(0.0, 0.0), (4.0, 0.0)], 1.0);
        assert_eq!(e4.pair_dissipation(1.0).unwrap(), Extended::Finite(0.5));
        let same = ens(&[(0.5, 0.5), (0.5, 0.5), (0.5, 0.5)], 1.0);
        assert_eq!(same.pair_moment(1.0).unwrap(), 0.0);
        assert!(same.pair_dissipation(1.0).unwrap().is_infinite());
        let (l1, l2) = same.log_pair_moments();
        assert!(l1.is_infinite() && l2.is_infinite());

        let s = 1.7_f64;
        let h = s * 3f64.sqrt() / 2.0;
        let tri = ens(&[(0.0, 0.0), (s, 0.0), (s / 2.0, h)], 1.0);
        let gamma = 0.8;
        let got = tri.pair_moment(gamma).unwrap();
        assert!((got - 6.0 * s.powf(gamma)).abs() < 1e-12);
    }

    #[test]
    fn log_pair_examples() {
        let e = ens(&[(0.0, 0.0), (1.0, 0.0)], 1.0);
        let (a, b) = e.log_pair_moments();
        assert!((a.value() - 2.0 * LN_2).abs() < 1e-15);
        assert!((b.value() - 2.0 * LN_2).abs() < 1e-15);
        let e = ens(&[(0.0, 0.0), (0.5, 0.0)], 1.0);
        let (a, b) = e.log_pair_moments();
        assert!((a.value() - 2.0 * 3f64.ln()).abs() < 1e-15);
        assert!((b.value() - 2.0 * 5f64.ln()).abs() < 1e-15);
        let far = ens(&[(0.0, 0.0), (1e9, 0.0)], 1.0);
        let (a, b) = far.log_pair_moments();
        assert!(a.value() < 1e-8 && b.value() < 1e-17);
    }

    #[test]
    fn center_and_ball_examples() {
        let e = ens(&[(1.0, 0.0), (-1.0, 0.0)], 1.0);
        assert_eq!(e.center_of_mass(), Vec2::ZERO);
        let e = ens(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)], 2.0);
        let c = e.center_of_mass();
        assert!((c.x - 1.0 / 3.0).abs() < 1e-15 && (c.y - 1.0 / 3.0).abs() < 1e-15);

        let e = ens(&[(2.0, 2.0); 5], 0.3);
        assert!((e.max_ball_mass(1e-3).unwrap() - 1.5).abs() < 1e-15);
        let e = ens(&[(0.0, 0.0), (10.0, 0.0)], 2.5);
        assert_eq!(e.max_ball_mass(1.0).unwrap(), 2.5);
        assert!(e.max_ball_mass(0.0).is_err());
    }

    #[test]
    fn ball_mass_on_ring_matches_brute_force() {
        let n = 100;
        let pts: Vec<Vec2> = (0..n)
            .map(|k| {
                let a = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                Vec2::new(5.0 * a.cos(), 5.0 * a.sin())
            })
            .collect();
        let e = WeightedEnsemble::new(pts.clone(), 0.01).unwrap();
        for nu in [0.1, 0.35, 0.5, 2.0] {
            let brute = pts
                .iter()
                .map(|&c| pts.iter().filter(|&&p| (p - c).norm() < nu).count())
                .max()
                .unwrap() as f64
                * 0.01;
            assert!((e.max_ball_mass(nu).unwrap() - brute).abs() < 1e-15, "nu {nu}");
        }
        // neighbors on the ring are 2·5·sin(π/100) ≈ 0.314 apart
        assert_eq!(e.max_ball_mass(0.1).unwrap(), 0.01);
    }

    #[test]
    fn fused_row_matches_individual_functionals() {
        let pts: Vec<Vec2> = (0..37)
            .map(|i| {
                let t = i as f64;
                Vec2::new((t * 1.37).sin() * 2.0, (t * 0.71).cos() * 1.5 + 0.1 * t)
            })
            .collect();
        let e = WeightedEnsemble::new(pts, 0.3).unwrap();
        let (gamma, eps, nu) = (1.3, 0.05, 0.4);
        let row = e.diagnostic_row(0.0, gamma, eps, nu).unwrap();
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b.abs().max(1.0);
        assert!(close(row.m2, e.moment_gamma(2.0, Vec2::ZERO).unwrap()));
        assert!(close(row.moment_gamma, e.moment_gamma(gamma, Vec2::ZERO).unwrap()));
        assert!(close(row.s_gamma, e.pair_moment(gamma).unwrap()));
        assert!(close(row.d_gamma.value(), e.pair_dissipation(gamma).unwrap().value()));
        let (l1, l2) = e.log_pair_moments();
        assert!(close(row.logpair1.value(), l1.value()));
        assert!(close(row.logpair2.value(), l2.value()));
        assert!(close(row.ccc1.value(), e.log_regularization_term(eps).unwrap().value()));
        assert_eq!(row.max_ball_mass, e.max_ball_mass(nu).unwrap());
    }
}
