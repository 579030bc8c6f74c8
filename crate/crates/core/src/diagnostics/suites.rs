//! Randomized property sweeps over synthetic configurations.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{barycentric_delta, g_eps, MonotoneFn};
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::kernels::{eval_k_eps, kernel_gap, kernel_gap_bounds, kernel_gap_closed_form};
use crate::measures::{log_weight, Measure, WeightedEnsemble};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Kernels,
    Geometry,
    Measures,
    All,
}

impl FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kernels" => Ok(Suite::Kernels),
            "geometry" => Ok(Suite::Geometry),
            "measures" => Ok(Suite::Measures),
            "all" => Ok(Suite::All),
            other => Err(Error::domain(format!(
                "unknown suite `{other}` (kernels, geometry, measures, all)"
            ))),
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suite::Kernels => "kernels",
            Suite::Geometry => "geometry",
            Suite::Measures => "measures",
            Suite::All => "all",
        })
    }
}

/// Worst normalized slack of one property over a sweep. Each sample passes
/// when its slack is at least `−tolerance`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PropertyResult {
    pub name: &'static str,
    pub samples: u64,
    pub tolerance: f64,
    pub worst_slack: f64,
    pub failures: u64,
    pub pass: bool,
}

struct Tally {
    name: &'static str,
    tolerance: f64,
    samples: u64,
    worst: f64,
    failures: u64,
}

impl Tally {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Tally {
            name,
            tolerance,
            samples: 0,
            worst: f64::INFINITY,
            failures: 0,
        }
    }

    fn record(&mut self, slack: f64) {
        self.samples += 1;
        // NaN counts as a failure
        if !(slack >= -self.tolerance) {
            self.failures += 1;
        }
        if slack.is_nan() {
            self.worst = f64::NAN;
        } else if !self.worst.is_nan() {
            self.worst = self.worst.min(slack);
        }
    }

    fn finish(self) -> PropertyResult {
        PropertyResult {
            name: self.name,
            samples: self.samples,
            tolerance: self.tolerance,
            worst_slack: self.worst,
            failures: self.failures,
            pass: self.failures == 0,
        }
    }
}

struct Sampler(ChaCha8Rng);

impl Sampler {
    fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Sampler(rng)
    }

    /// Uniform on (0, 1).
    fn uniform(&mut self) -> f64 {
        ((self.0.next_u64() >> 11) as f64 + 0.5) / (1u64 << 53) as f64
    }

    fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    fn log_uniform(&mut self, lo: f64, hi: f64) -> f64 {
        (lo.ln() + (hi.ln() - lo.ln()) * self.uniform()).exp()
    }

    fn vector(&mut self, lo: f64, hi: f64) -> Vec2 {
        let r = self.log_uniform(lo, hi);
        let a = self.range(0.0, 2.0 * PI);
        Vec2::new(r * a.cos(), r * a.sin())
    }
}

pub fn run_suite(suite: Suite, samples: u64, seed: u64) -> Result<Vec<PropertyResult>> {
    if samples == 0 {
        return Err(Error::domain("sample count must be at least 1"));
    }
    Ok(match suite {
        Suite::Kernels => kernel_properties(samples, seed),
        Suite::Geometry => geometry_properties(samples, seed),
        Suite::Measures => measure_properties(samples, seed),
        Suite::All => {
            let mut all = kernel_properties(samples, seed);
            all.extend(geometry_properties(samples, seed));
            all.extend(measure_properties(samples, seed));
            all
        }
    })
}

/// Kernel magnitude bounds, the gap identity, and the three gap bounds, for
/// `|z|` and `ε` log-uniform on `[1e−8, 1e8]` and `[1e−8, 1]`.
pub fn kernel_properties(samples: u64, seed: u64) -> Vec<PropertyResult> {
    let mut rng = Sampler::new(seed, 1);
    let mut norm_bound = Tally::new("kernel_norm_times_radius", 0.0);
    let mut sup_bound = Tally::new("kernel_sup_norm", 1e-15);
    let mut odd = Tally::new("kernel_antisymmetry", 0.0);
    let mut identity = Tally::new("kernel_gap_identity", 1e-14);
    let mut min_bound = Tally::new("kernel_gap_min_bound", 1e-12);
    let mut power_bound = Tally::new("kernel_gap_power_bound", 1e-12);
    let mut log_bound = Tally::new("kernel_gap_log_bound", 1e-12);
    for _ in 0..samples {
        let z = rng.vector(1e-8, 1e8);
        let eps = rng.log_uniform(1e-8, 1.0);
        let gamma = rng.range(0.0, 2.0).max(1e-12);
        let k = eval_k_eps(z, eps).expect("ε drawn inside (0, 1]");
        norm_bound.record(1.0 / (2.0 * PI) + 1e-15 - z.norm() * k.norm());
        let sup = 1.0 / (4.0 * PI * eps.sqrt());
        sup_bound.record((sup - k.norm()) / sup);
        let km = eval_k_eps(-z, eps).expect("ε drawn inside (0, 1]");
        odd.record(if km == -k { 0.0 } else { -1.0 });
        let gap = kernel_gap(z, eps).expect("z is nonzero");
        let closed = kernel_gap_closed_form(z, eps);
        identity.record(-(gap - closed).abs());
        let b = kernel_gap_bounds(z, eps, gamma);
        min_bound.record((b.min_bound - closed) / b.min_bound);
        power_bound.record((b.power_bound - closed) / b.power_bound);
        log_bound.record((b.log_bound - closed) / b.log_bound);
    }
    [norm_bound, sup_bound, odd, identity, min_bound, power_bound, log_bound]
        .map(Tally::finish)
        .to_vec()
}

fn random_family(rng: &mut Sampler, which: usize) -> MonotoneFn {
    match which {
        0 => MonotoneFn::InversePower {
            p: rng.range(0.0, 2.0).max(1e-9),
        },
        1 => MonotoneFn::Regularized { epsilon: rng.uniform() },
        2 => MonotoneFn::ShiftedPower {
            a: rng.log_uniform(1e-4, 1e2),
            gamma: rng.range(0.0, 2.0).max(1e-9),
        },
        _ => MonotoneFn::LogInverseSquare,
    }
}

/// The triangle inequality with its refined lower bound over all ordered
/// pairs of registered families (side lengths log-uniform on `[1e−4, 1e4]`),
/// and nonnegativity of `G_ε` on random point triples.
pub fn geometry_properties(samples: u64, seed: u64) -> Vec<PropertyResult> {
    let mut rng = Sampler::new(seed, 2);
    let mut refined = Tally::new("barycentric_refined_bound", 1e-10);
    let mut lb_sign = Tally::new("barycentric_refined_nonnegative", 0.0);
    let mut g_sign = Tally::new("g_eps_nonnegative", 1e-10);
    for _ in 0..samples {
        let x = rng.vector(1e-4, 1e4);
        let y = rng.vector(1e-4, 1e4);
        let fams: Vec<MonotoneFn> = (0..4).map(|k| random_family(&mut rng, k)).collect();
        for &phi in &fams {
            for &psi in &fams {
                // a zero side has probability zero; skip rather than fail
                let Ok(d) = barycentric_delta(x, y, phi, psi) else {
                    continue;
                };
                refined.record((d.delta - d.refined_lb) / d.scale);
                lb_sign.record(d.refined_lb.min(0.0));
            }
        }
        let a = rng.vector(1e-3, 1e3);
        let b = a + rng.vector(1e-3, 1e3);
        let c = a + rng.vector(1e-3, 1e3);
        let eps = rng.uniform();
        let g = g_eps(a, b, c, eps);
        let scale = [a - b, b - c, c - a]
            .iter()
            .map(|v| v.norm() * log_weight(v.norm_sq()))
            .sum::<f64>()
            * [a - b, b - c, c - a]
                .iter()
                .map(|v| v.norm() / (v.norm_sq() + eps))
                .sum::<f64>();
        g_sign.record(g / scale);
    }
    [refined, lb_sign, g_sign].map(Tally::finish).to_vec()
}

/// Moment identities and inequalities on random ensembles of 2 to 50 points.
pub fn measure_properties(samples: u64, seed: u64) -> Vec<PropertyResult> {
    let mut rng = Sampler::new(seed, 3);
    let mut shift = Tally::new("second_moment_shift", 1e-12);
    let mut variance = Tally::new("pair_variance_identity", 1e-12);
    let mut pair_bound = Tally::new("pair_moment_bound", 1e-12);
    let mut ball_monotone = Tally::new("ball_mass_monotone", 0.0);
    let mut ball_full = Tally::new("ball_mass_full", 1e-12);
    for _ in 0..samples {
        let n = 2 + (rng.uniform() * 49.0) as usize;
        let spread = rng.log_uniform(1e-2, 1e2);
        let offset = rng.vector(1e-3, 1e2);
        let pts: Vec<Vec2> = (0..n).map(|_| offset + rng.vector(1e-3, 1.0) * spread).collect();
        let e = WeightedEnsemble::new(pts, rng.log_uniform(1e-3, 1e3)).expect("finite points");
        let m = e.mass();
        let com = e.center_of_mass();
        let c = rng.vector(1e-3, 1e2);
        let m2c = e.moment_gamma(2.0, c).expect("γ = 2");
        let m2com = e.moment_gamma(2.0, com).expect("γ = 2");
        shift.record(-(m2c - m2com - m * (com - c).norm_sq()).abs() / m2c);
        let s2 = e.pair_moment(2.0).expect("γ = 2");
        variance.record(-(s2 - 2.0 * m * m2com).abs() / s2);
        let gamma = rng.range(0.0, 2.0).max(1e-9);
        let sg = e.pair_moment(gamma).expect("γ in range");
        let mg = e.moment_gamma(gamma, Vec2::ZERO).expect("γ in range");
        pair_bound.record((4.0 * m * mg - sg) / (4.0 * m * mg));
        let nu1 = rng.log_uniform(1e-3, 1e2) * spread;
        let nu2 = nu1 * rng.range(1.0, 10.0);
        let (b1, b2) = (
            e.max_ball_mass(nu1).expect("ν > 0"),
            e.max_ball_mass(nu2).expect("ν > 0"),
        );
        ball_monotone.record(b2 - b1);
        let diameter = 2.0 * spread * 1.0001 + 1e-9;
        ball_full.record(-(e.max_ball_mass(diameter).expect("ν > 0") - m).abs() / m);
    }
    [shift, variance, pair_bound, ball_monotone, ball_full]
        .map(Tally::finish)
        .to_vec()
}
