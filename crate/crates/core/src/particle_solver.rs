//! Euler–Maruyama particle approximation of the regularized dynamics
//! `dX_i = b_i dt + √2 dW_i`, with `b_i = w Σ_{j≠i} K_ε(X_i − X_j)`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cell_list::CellList;
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::initial_data::InitialMeasure;
use crate::kernels::{check_epsilon, k_eps_unchecked};
use crate::measures::{DiagnosticSeries, FunctionalParams, SeriesMeta, WeightedEnsemble};
use crate::rng::StreamKey;

/// Rows per block of the direct force sum. The partition depends only on `N`,
/// so the result does not depend on the number of worker threads.
const DRIFT_BLOCK_ROWS: usize = 128;
const MAX_DRIFT_BLOCKS: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ForceMethod {
    Direct,
    /// Pairs farther apart than `cutoff` are dropped.
    CellList {
        cutoff: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticleConfig {
    pub n: usize,
    pub epsilon: f64,
    pub dt: f64,
    pub t_final: f64,
    pub seed: u64,
    pub sample_every: usize,
    #[serde(default = "default_force_method")]
    pub force_method: ForceMethod,
    /// Accept a time step above [`dt_max`].
    #[serde(default)]
    pub allow_large_dt: bool,
}

fn default_force_method() -> ForceMethod {
    ForceMethod::Direct
}

/// Largest default time step: `min(0.1, 4π√ε / (10 M))`, so that one drift
/// step moves a particle by at most `√ε / 10`.
pub fn dt_max(epsilon: f64, mass: f64) -> f64 {
    (4.0 * PI * epsilon.sqrt() / (10.0 * mass)).min(0.1)
}

/// Worst-case per-particle error of the cell-list drift with cutoff `r_c`.
pub fn cell_list_error_bound(mass: f64, cutoff: f64) -> f64 {
    mass / (2.0 * PI * cutoff)
}

impl ParticleConfig {
    pub fn validate(&self, mass: f64) -> Result<()> {
        if self.n == 0 {
            return Err(Error::config("n", "at least one particle is required"));
        }
        check_epsilon(self.epsilon).map_err(|e| Error::config("epsilon", e.to_string()))?;
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return Err(Error::config("t_final", "must be finite and nonnegative"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::config("dt", "must be positive"));
        }
        let cap = dt_max(self.epsilon, mass);
        if self.dt > cap && !self.allow_large_dt {
            return Err(Error::config(
                "dt",
                format!(
                    "{} exceeds the cap {cap} for this ε and mass (set allow_large_dt to override)",
                    self.dt
                ),
            ));
        }
        if self.sample_every == 0 {
            return Err(Error::config("sample_every", "must be at least 1"));
        }
        if let ForceMethod::CellList { cutoff } = self.force_method {
            if !(cutoff > 0.0 && cutoff.is_finite()) {
                return Err(Error::config("force_method.cutoff", "must be positive"));
            }
        }
        Ok(())
    }

    /// Number of steps and the step actually used, `T / steps ≤ dt`.
    pub fn schedule(&self) -> (u64, f64) {
        if self.t_final == 0.0 {
            return (0, self.dt);
        }
        let steps = (self.t_final / self.dt).ceil().max(1.0) as u64;
        (steps, self.t_final / steps as f64)
    }
}

/// `b_i = w Σ_{j≠i} K_ε(X_i − X_j)` by the direct pair sum.
pub fn drift_field(e: &WeightedEnsemble, epsilon: f64) -> Result<Vec<Vec2>> {
    check_epsilon(epsilon)?;
    Ok(direct_drift(e, epsilon))
}

pub fn drift_field_with(e: &WeightedEnsemble, epsilon: f64, method: ForceMethod) -> Result<Vec<Vec2>> {
    check_epsilon(epsilon)?;
    match method {
        ForceMethod::Direct => Ok(direct_drift(e, epsilon)),
        ForceMethod::CellList { cutoff } => {
            if !(cutoff > 0.0 && cutoff.is_finite()) {
                return Err(Error::domain(format!("cutoff must be positive, got {cutoff}")));
            }
            Ok(cell_list_drift(e, epsilon, cutoff))
        }
    }
}

/// Each unordered pair is evaluated once. Rows are split into a fixed set of
/// blocks whose partial fields are added in block order.
fn direct_drift(e: &WeightedEnsemble, epsilon: f64) -> Vec<Vec2> {
    let pts = e.positions();
    let n = pts.len();
    let blocks = n.div_ceil(DRIFT_BLOCK_ROWS).clamp(1, MAX_DRIFT_BLOCKS);
    // balance pair counts: block k covers rows with equal shares of n²/2
    let bounds: Vec<usize> = (0..=blocks)
        .map(|k| {
            let frac = k as f64 / blocks as f64;
            (n as f64 * (1.0 - (1.0 - frac).sqrt())).round() as usize
        })
        .collect();
    let partials: Vec<Vec<Vec2>> = (0..blocks)
        .into_par_iter()
        .map(|k| {
            let mut b = vec![Vec2::ZERO; n];
            for i in bounds[k]..bounds[k + 1] {
                let xi = pts[i];
                let mut bi = Vec2::ZERO;
                for j in (i + 1)..n {
                    let f = k_eps_unchecked(xi - pts[j], epsilon);
                    bi += f;
                    b[j] -= f;
                }
                b[i] += bi;
            }
            b
        })
        .collect();
    let w = e.weight();
    (0..n)
        .map(|i| {
            let mut s = Vec2::ZERO;
            for p in &partials {
                s += p[i];
            }
            s * w
        })
        .collect()
}

fn cell_list_drift(e: &WeightedEnsemble, epsilon: f64, cutoff: f64) -> Vec<Vec2> {
    let pts = e.positions();
    let list = CellList::new(pts, cutoff);
    let r2c = cutoff * cutoff;
    let w = e.weight();
    pts.par_iter()
        .enumerate()
        .map(|(i, &xi)| {
            let mut bi = Vec2::ZERO;
            list.for_each_candidate(xi, cutoff, |j| {
                let d = xi - pts[j];
                if j != i && d.norm_sq() < r2c {
                    bi += k_eps_unchecked(d, epsilon);
                }
            });
            bi * w
        })
        .collect()
}

/// Switches for isolating the two parts of a step in tests.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StepOptions {
    pub drift: bool,
    pub noise: bool,
}

impl Default for StepOptions {
    fn default() -> Self {
        StepOptions {
            drift: true,
            noise: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParticleState {
    pub ensemble: WeightedEnsemble,
    pub t: f64,
    pub epsilon: f64,
    pub seed: u64,
    /// Index of the next step; selects the noise stream.
    pub step: u64,
}

impl ParticleState {
    pub fn new(ensemble: WeightedEnsemble, epsilon: f64, seed: u64) -> Result<Self> {
        check_epsilon(epsilon)?;
        Ok(ParticleState {
            ensemble,
            t: 0.0,
            epsilon,
            seed,
            step: 0,
        })
    }
}

/// One step `X_i ← X_i + b_i dt + √(2dt) ξ_i`, with `ξ_i` read from the
/// counter stream `(seed, step, i)`.
pub fn em_step(state: &mut ParticleState, dt: f64, method: ForceMethod, opts: StepOptions) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::domain(format!("time step must be positive, got {dt}")));
    }
    let drift = if opts.drift {
        Some(drift_field_with(&state.ensemble, state.epsilon, method)?)
    } else {
        None
    };
    let key = StreamKey::new(state.seed, state.step);
    let scale = (2.0 * dt).sqrt();
    state
        .ensemble
        .positions_mut()
        .par_iter_mut()
        .enumerate()
        .for_each(|(i, x)| {
            if let Some(b) = &drift {
                *x += b[i] * dt;
            }
            if opts.noise {
                *x += key.at(i as u64).normal2() * scale;
            }
        });
    if let Some(i) = state.ensemble.positions().iter().position(|p| !p.is_finite()) {
        return Err(Error::domain(format!("particle {i} left the finite plane")));
    }
    state.t += dt;
    state.step += 1;
    Ok(())
}

pub struct ParticleRun {
    pub series: DiagnosticSeries,
    pub final_state: ParticleState,
}

pub fn run_particles(cfg: &ParticleConfig, f0: &InitialMeasure, params: FunctionalParams) -> Result<ParticleRun> {
    run_particles_with(cfg, f0, params, StepOptions::default())
}

/// Samples `f_0^ε`, steps to `T`, and records a row at step 0, every
/// `sample_every` steps, and at the final step.
pub fn run_particles_with(
    cfg: &ParticleConfig,
    f0: &InitialMeasure,
    params: FunctionalParams,
    opts: StepOptions,
) -> Result<ParticleRun> {
    let mass = f0.mass();
    cfg.validate(mass)?;
    params
        .validate()
        .map_err(|e| Error::config("diagnostics", e.to_string()))?;
    let ensemble = f0.sample_mollified(cfg.epsilon, cfg.n, cfg.seed)?;
    let mut state = ParticleState::new(ensemble, cfg.epsilon, cfg.seed)?;
    let mut series = DiagnosticSeries::new(SeriesMeta {
        gamma: params.gamma,
        epsilon: cfg.epsilon,
        nu: params.nu,
        mass,
        seed: Some(cfg.seed),
    });
    let (steps, dt) = cfg.schedule();
    let record = |state: &ParticleState, series: &mut DiagnosticSeries| -> Result<()> {
        series.push(
            state
                .ensemble
                .diagnostic_row(state.t, params.gamma, cfg.epsilon, params.nu)?,
        )
    };
    record(&state, &mut series)?;
    for k in 1..=steps {
        em_step(&mut state, dt, cfg.force_method, opts)?;
        if k == steps {
            // avoid accumulated rounding in the final time
            state.t = cfg.t_final;
        }
        if k % cfg.sample_every as u64 == 0 || k == steps {
            record(&state, &mut series)?;
        }
    }
    Ok(ParticleRun {
        series,
        final_state: state,
    })
}
