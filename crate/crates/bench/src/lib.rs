//! Fixtures shared by the benchmarks.

use kslab_core::initial_data::InitialMeasure;
use kslab_core::rng::StreamKey;
use kslab_core::{GridDensity, Vec2, WeightedEnsemble};

/// `n` standard normal points scaled by `spread`, total mass `mass`.
pub fn gaussian_cloud(n: usize, spread: f64, mass: f64, seed: u64) -> WeightedEnsemble {
    let key = StreamKey::new(seed, 0);
    let pts = (0..n).map(|i| key.at(i as u64).normal2() * spread).collect();
    WeightedEnsemble::with_mass(pts, mass).expect("positive mass and nonempty cloud")
}

/// A centred Gaussian of variance 1 projected onto an `n × n` grid on `[-6, 6]²`.
pub fn gaussian_grid(n: usize, mass: f64, epsilon: f64) -> GridDensity {
    InitialMeasure::gaussian(Vec2::ZERO, 1.0, mass)
        .and_then(|f0| f0.project_to_grid(epsilon, 6.0, n))
        .expect("the box holds the Gaussian")
}
