use rayon::prelude::*;

use crate::error::Result;
use crate::geometry::Vec2;
use crate::kernels::check_epsilon;
use crate::measures::{log_weight, Extended, WeightedEnsemble};

/// `G_ε(x, y, z)` with `X = x − y`, `Y = y − z`, `Z = z − x`:
/// `[Σ L(|V|²) V] · [Σ V / (|V|² + ε)]`, `L(r) = log(1 + 1/r)`.
/// Infinite when two of the points coincide.
pub fn g_eps(x: Vec2, y: Vec2, z: Vec2, epsilon: f64) -> f64 {
    let vs = [x - y, y - z, z - x];
    let mut a = Vec2::ZERO;
    let mut b = Vec2::ZERO;
    for v in vs {
        let r2 = v.norm_sq();
        if r2 == 0.0 {
            return f64::INFINITY;
        }
        a += v * log_weight(r2);
        b += v * (1.0 / (r2 + epsilon));
    }
    a.dot(b)
}

/// `w³ Σ G_ε(x_i, x_j, x_k)` over ordered triples of distinct indices, by
/// the direct `O(N³)` loop. The inner double sum for each `i` is sequential
/// and the per-`i` partials are added in index order.
pub fn g_eps_triple(e: &WeightedEnsemble, epsilon: f64) -> Result<Extended> {
    check_epsilon(epsilon)?;
    let pts = e.positions();
    let n = pts.len();
    if e.has_coincident_pair() {
        return Ok(Extended::Infinite);
    }
    let partials: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut s = 0.0;
            for j in 0..n {
                if j == i {
                    continue;
                }
                for k in 0..n {
                    if k != i && k != j {
                        s += g_eps(pts[i], pts[j], pts[k], epsilon);
                    }
                }
            }
            s
        })
        .collect();
    let mut total = 0.0;
    for p in partials {
        total += p;
    }
    let w = e.weight();
    Ok(Extended::Finite(w * w * w * total))
}
