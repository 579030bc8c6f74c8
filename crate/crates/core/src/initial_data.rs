//! Initial measures built from atoms and isotropic Gaussians.
//!
//! The class is closed under mollification by the heat kernel at time `ε/2`
//! (an atom becomes a Gaussian of variance `ε`, a Gaussian of variance `σ²`
//! becomes one of variance `σ² + ε`), which gives exact densities, exact
//! sampling and closed-form moments.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::kernels::check_epsilon;
use crate::measures::{check_gamma_closed, GridDensity, WeightedEnsemble};
use crate::rng::{StreamKey, SAMPLING_STREAM};

/// Mass threshold separating the regimes.
pub const CRITICAL_MASS: f64 = 8.0 * PI;

/// Smallest fraction of the mollified mass a projection box must capture.
pub const MIN_CAPTURED_FRACTION: f64 = 1.0 - 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Atom {
    pub position: Vec2,
    pub mass: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianBlob {
    pub mean: Vec2,
    pub variance: f64,
    pub mass: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Subcritical,
    Critical,
    Supercritical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, try_from = "RawInitialMeasure")]
pub struct InitialMeasure {
    atoms: Vec<Atom>,
    gaussians: Vec<GaussianBlob>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInitialMeasure {
    #[serde(default)]
    atoms: Vec<Atom>,
    #[serde(default)]
    gaussians: Vec<GaussianBlob>,
}

impl TryFrom<RawInitialMeasure> for InitialMeasure {
    type Error = Error;
    fn try_from(raw: RawInitialMeasure) -> Result<Self> {
        InitialMeasure::new(raw.atoms, raw.gaussians)
    }
}

impl InitialMeasure {
    pub fn new(atoms: Vec<Atom>, gaussians: Vec<GaussianBlob>) -> Result<Self> {
        if atoms.is_empty() && gaussians.is_empty() {
            return Err(Error::domain("initial measure has no components"));
        }
        for a in &atoms {
            if !a.position.is_finite() || !(a.mass > 0.0 && a.mass.is_finite()) {
                return Err(Error::domain(format!("invalid atom {a:?}")));
            }
        }
        for g in &gaussians {
            let ok =
                g.mean.is_finite() && g.mass > 0.0 && g.mass.is_finite() && g.variance > 0.0 && g.variance.is_finite();
            if !ok {
                return Err(Error::domain(format!("invalid gaussian {g:?}")));
            }
        }
        Ok(InitialMeasure { atoms, gaussians })
    }

    pub fn atom(position: Vec2, mass: f64) -> Result<Self> {
        Self::new(vec![Atom { position, mass }], vec![])
    }

    pub fn gaussian(mean: Vec2, variance: f64, mass: f64) -> Result<Self> {
        Self::new(vec![], vec![GaussianBlob { mean, variance, mass }])
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn gaussians(&self) -> &[GaussianBlob] {
        &self.gaussians
    }

    pub fn mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.mass).sum::<f64>() + self.gaussians.iter().map(|g| g.mass).sum::<f64>()
    }

    /// The same measure with every component mass multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::domain(format!(
                "mass scale factor must be positive, got {factor}"
            )));
        }
        let atoms = self
            .atoms
            .iter()
            .map(|a| Atom {
                mass: a.mass * factor,
                ..*a
            })
            .collect();
        let gaussians = self
            .gaussians
            .iter()
            .map(|g| GaussianBlob {
                mass: g.mass * factor,
                ..*g
            })
            .collect();
        Self::new(atoms, gaussians)
    }

    /// Critical when the mass equals `8π` to a relative `1e−12`.
    pub fn regime(&self) -> Regime {
        let m = self.mass();
        if ((m - CRITICAL_MASS) / CRITICAL_MASS).abs() <= 1e-12 {
            Regime::Critical
        } else if m < CRITICAL_MASS {
            Regime::Subcritical
        } else {
            Regime::Supercritical
        }
    }

    /// Every atom carries mass strictly below `8π`.
    pub fn is_critically_admissible(&self) -> bool {
        self.atoms.iter().all(|a| a.mass < CRITICAL_MASS)
    }

    pub fn center_of_mass(&self) -> Vec2 {
        let mut s = Vec2::ZERO;
        for a in &self.atoms {
            s += a.position * a.mass;
        }
        for g in &self.gaussians {
            s += g.mean * g.mass;
        }
        s * (1.0 / self.mass())
    }

    /// `∫ |x − center|²` in closed form.
    pub fn second_moment(&self, center: Vec2) -> f64 {
        let atoms: f64 = self
            .atoms
            .iter()
            .map(|a| a.mass * (a.position - center).norm_sq())
            .sum();
        let blobs: f64 = self
            .gaussians
            .iter()
            .map(|g| g.mass * ((g.mean - center).norm_sq() + 2.0 * g.variance))
            .sum();
        atoms + blobs
    }

    /// `∫ |x|^γ` in closed form, `γ ∈ (0, 2]`.
    pub fn moment_gamma(&self, gamma: f64) -> Result<f64> {
        check_gamma_closed(gamma)?;
        let atoms: f64 = self.atoms.iter().map(|a| a.mass * a.position.norm().powf(gamma)).sum();
        let blobs: f64 = self
            .gaussians
            .iter()
            .map(|g| g.mass * gaussian_abs_moment(g.mean, g.variance, gamma))
            .sum();
        Ok(atoms + blobs)
    }

    /// The heat-smoothed measure `f_0^ε`, a pure Gaussian mixture.
    pub fn mollified(&self, epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        let gaussians = self
            .atoms
            .iter()
            .map(|a| GaussianBlob {
                mean: a.position,
                variance: epsilon,
                mass: a.mass,
            })
            .chain(self.gaussians.iter().map(|g| GaussianBlob {
                variance: g.variance + epsilon,
                ..*g
            }))
            .collect();
        Self::new(vec![], gaussians)
    }

    /// Density of `f_0^ε` at `x`.
    pub fn mollified_density(&self, epsilon: f64, x: Vec2) -> Result<f64> {
        check_epsilon(epsilon)?;
        Ok(self
            .mollified(epsilon)?
            .gaussians
            .iter()
            .map(|g| gaussian_density(g, x))
            .sum())
    }

    /// `N` independent draws from `f_0^ε / M`, each with weight `M / N`.
    /// Draw `i` uses only the counter stream at index `i`.
    pub fn sample_mollified(&self, epsilon: f64, n: usize, seed: u64) -> Result<WeightedEnsemble> {
        if n == 0 {
            return Err(Error::domain("sample count must be at least 1"));
        }
        let blobs = self.mollified(epsilon)?.gaussians;
        let total = self.mass();
        let mut cumulative = Vec::with_capacity(blobs.len());
        let mut acc = 0.0;
        for g in &blobs {
            acc += g.mass;
            cumulative.push(acc / total);
        }
        let key = StreamKey::new(seed, SAMPLING_STREAM);
        let positions = (0..n)
            .map(|i| {
                let mut draws = key.at(i as u64);
                let u = draws.uniform();
                let k = cumulative.iter().position(|&c| u < c).unwrap_or(blobs.len() - 1);
                let g = &blobs[k];
                g.mean + draws.normal2() * g.variance.sqrt()
            })
            .collect();
        WeightedEnsemble::with_mass(positions, total)
    }

    /// Fraction of the mass of `f_0^ε` inside `[−L, L]²`.
    pub fn captured_fraction(&self, epsilon: f64, half_width: f64) -> Result<f64> {
        let blobs = self.mollified(epsilon)?.gaussians;
        let axis = |mu: f64, var: f64| {
            let s = (2.0 * var).sqrt();
            0.5 * (libm::erf((half_width - mu) / s) + libm::erf((half_width + mu) / s))
        };
        let inside: f64 = blobs
            .iter()
            .map(|g| g.mass * axis(g.mean.x, g.variance) * axis(g.mean.y, g.variance))
            .sum();
        Ok(inside / self.mass())
    }

    /// Samples `f_0^ε` at cell centers and rescales to mass exactly `M`.
    pub fn project_to_grid(&self, epsilon: f64, half_width: f64, n: usize) -> Result<GridDensity> {
        let captured = self.captured_fraction(epsilon, half_width)?;
        if captured < MIN_CAPTURED_FRACTION {
            return Err(Error::MassCapture { half_width, captured });
        }
        let blobs = self.mollified(epsilon)?.gaussians;
        let mut grid = GridDensity::zeros(half_width, n)?;
        let mut values = vec![0.0; n * n];
        for j in 0..n {
            for i in 0..n {
                let x = grid.cell_center(i, j);
                values[j * n + i] = blobs.iter().map(|g| gaussian_density(g, x)).sum();
            }
        }
        let raw = GridDensity::new(half_width, n, values)?;
        let raw_mass = raw.mass();
        if !(raw_mass > 0.0) {
            return Err(Error::domain("grid is too coarse to resolve the initial data"));
        }
        let scale = self.mass() / raw_mass;
        grid = GridDensity::new(half_width, n, raw.values().iter().map(|v| v * scale).collect())?;
        Ok(grid)
    }
}

fn gaussian_density(g: &GaussianBlob, x: Vec2) -> f64 {
    g.mass * (-(x - g.mean).norm_sq() / (2.0 * g.variance)).exp() / (2.0 * PI * g.variance)
}

/// `E|X|^γ` for `X ~ N(μ, σ² I₂)`:
/// `(2σ²)^{γ/2} Γ(1+γ/2) e^{−x} ₁F₁(1+γ/2; 1; x)` with `x = |μ|²/(2σ²)`.
/// The series has positive terms and is summed in log space; far from the
/// origin the asymptotic expansion is used instead.
pub(crate) fn gaussian_abs_moment(mean: Vec2, variance: f64, gamma: f64) -> f64 {
    let x = mean.norm_sq() / (2.0 * variance);
    let a = 1.0 + 0.5 * gamma;
    let prefactor = (2.0 * variance).powf(0.5 * gamma) * libm::tgamma(a);
    if x == 0.0 {
        return prefactor;
    }
    if x > 50.0 {
        // large-x expansion: |μ|^γ Σ_k ((−γ/2)_k)² / (k! x^k)
        let b = -0.5 * gamma;
        let (mut term, mut sum, mut k) = (1.0_f64, 1.0_f64, 0.0_f64);
        while k < x {
            let next = term * (b + k) * (b + k) / ((k + 1.0) * x);
            if next.abs() >= term.abs() || next.abs() < 1e-17 * sum.abs() {
                sum += next;
                break;
            }
            sum += next;
            term = next;
            k += 1.0;
        }
        return mean.norm().powf(gamma) * sum;
    }
    let mut log_terms = Vec::new();
    let mut log_t = -x;
    let mut k = 0.0_f64;
    let mut peak = f64::NEG_INFINITY;
    loop {
        log_terms.push(log_t);
        peak = peak.max(log_t);
        if k > x && log_t < peak - 40.0 {
            break;
        }
        log_t += ((a + k) * x).ln() - 2.0 * (k + 1.0).ln();
        k += 1.0;
    }
    let sum: f64 = log_terms.iter().map(|l| (l - peak).exp()).sum();
    prefactor * (peak + sum.ln()).exp()
}
