//! Conservative finite-volume solver for the regularized equation on a
//! truncated box `[−L, L]²` with zero-flux walls.
//!
//! Face flux is `F = U f − ∂f` with upwind advection and a centered
//! diffusive difference. The advected face value is either the upwind cell
//! average or a van Leer limited linear reconstruction from the upwind side. The velocity `U = K_ε ∗ f` is evaluated at face
//! centers, treating each cell as a point mass at its center.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::{PaddedConv, Spectrum};
use crate::geometry::Vec2;
use crate::initial_data::InitialMeasure;
use crate::kernels::{check_epsilon, k_eps_unchecked};
use crate::measures::{DiagnosticSeries, FunctionalParams, GridDensity, GridFunctionals, SeriesMeta};

/// Values at or above this are clamped to zero after a step; anything more
/// negative is a hard error.
pub const NEGATIVITY_TOLERANCE: f64 = 1e-13;

/// Fraction of the mass allowed in the outer ring of cells before a run is
/// flagged as box-truncated.
pub const LEAK_THRESHOLD: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvolutionMethod {
    DirectSum,
    FftPadded,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdvectionScheme {
    /// First order: the upwind cell average.
    #[default]
    Upwind,
    /// Second order away from extrema: van Leer limited reconstruction.
    VanLeer,
}

impl AdvectionScheme {
    /// Face values never exceed this multiple of the upwind cell average.
    fn face_factor(self) -> f64 {
        match self {
            AdvectionScheme::Upwind => 1.0,
            AdvectionScheme::VanLeer => 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub half_width: f64,
    pub n: usize,
    pub epsilon: f64,
    /// Fixed time step; `0` selects the step automatically each step.
    #[serde(default)]
    pub dt: f64,
    pub t_final: f64,
    #[serde(default = "default_cfl_safety")]
    pub cfl_safety: f64,
    #[serde(default = "default_true")]
    pub drift_enabled: bool,
    #[serde(default = "default_convolution")]
    pub convolution_method: ConvolutionMethod,
    #[serde(default)]
    pub advection: AdvectionScheme,
    /// Time between diagnostic rows; defaults to a tenth of `t_final`.
    #[serde(default)]
    pub sample_interval: Option<f64>,
}

fn default_cfl_safety() -> f64 {
    0.4
}

fn default_true() -> bool {
    true
}

fn default_convolution() -> ConvolutionMethod {
    ConvolutionMethod::FftPadded
}

impl GridConfig {
    pub fn new(half_width: f64, n: usize, epsilon: f64, t_final: f64) -> Self {
        GridConfig {
            half_width,
            n,
            epsilon,
            dt: 0.0,
            t_final,
            cfl_safety: default_cfl_safety(),
            drift_enabled: true,
            convolution_method: default_convolution(),
            advection: AdvectionScheme::Upwind,
            sample_interval: None,
        }
    }

    pub fn cell_size(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.half_width > 0.0 && self.half_width.is_finite()) {
            return Err(Error::config("half_width", "must be positive"));
        }
        if self.n < 4 {
            return Err(Error::config("n", "at least 4 cells per side are required"));
        }
        check_epsilon(self.epsilon).map_err(|e| Error::config("epsilon", e.to_string()))?;
        if !(self.dt >= 0.0 && self.dt.is_finite()) {
            return Err(Error::config("dt", "must be zero (automatic) or positive"));
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return Err(Error::config("t_final", "must be finite and nonnegative"));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(Error::config("cfl_safety", "must lie in (0, 1]"));
        }
        if let Some(s) = self.sample_interval {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::config("sample_interval", "must be positive"));
            }
        }
        Ok(())
    }

    fn sample_interval(&self) -> f64 {
        self.sample_interval.unwrap_or(self.t_final / 10.0)
    }
}

/// Normal velocity components on cell faces.
///
/// `ux` lives on the `(n + 1) × n` vertical faces at `x = −L + i h`,
/// `y = −L + (j + ½) h`, indexed `j * (n + 1) + i`; `uy` on the
/// `n × (n + 1)` horizontal faces, indexed `j * n + i`.
#[derive(Clone, Debug, PartialEq)]
pub struct FaceVelocity {
    pub n: usize,
    pub ux: Vec<f64>,
    pub uy: Vec<f64>,
}

impl FaceVelocity {
    pub fn zero(n: usize) -> Self {
        FaceVelocity {
            n,
            ux: vec![0.0; (n + 1) * n],
            uy: vec![0.0; n * (n + 1)],
        }
    }

    #[inline]
    pub fn x_face(&self, i: usize, j: usize) -> f64 {
        self.ux[j * (self.n + 1) + i]
    }

    #[inline]
    pub fn y_face(&self, i: usize, j: usize) -> f64 {
        self.uy[j * self.n + i]
    }

    pub fn max_speed(&self) -> f64 {
        self.ux.iter().chain(&self.uy).fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Face velocities for a fixed geometry, with kernel transforms cached.
pub struct VelocityEngine {
    half_width: f64,
    n: usize,
    epsilon: f64,
    method: ConvolutionMethod,
    fft: Option<(PaddedConv, Spectrum, Spectrum)>,
}

impl VelocityEngine {
    pub fn new(half_width: f64, n: usize, epsilon: f64, method: ConvolutionMethod) -> Result<Self> {
        check_epsilon(epsilon)?;
        let h = 2.0 * half_width / n as f64;
        let fft = match method {
            ConvolutionMethod::DirectSum => None,
            ConvolutionMethod::FftPadded => {
                let conv = PaddedConv::new(n);
                // both kernels on an (n + 1) × (n + 1) output; the extra row or
                // column of each is discarded
                let kx = conv.kernel_spectrum(n + 1, n + 1, |ox, oy| {
                    k_eps_unchecked(Vec2::new((ox as f64 - 0.5) * h, oy as f64 * h), epsilon).x
                });
                let ky = conv.kernel_spectrum(n + 1, n + 1, |ox, oy| {
                    k_eps_unchecked(Vec2::new(ox as f64 * h, (oy as f64 - 0.5) * h), epsilon).y
                });
                Some((conv, kx, ky))
            }
        };
        Ok(VelocityEngine {
            half_width,
            n,
            epsilon,
            method,
            fft,
        })
    }

    pub fn method(&self) -> ConvolutionMethod {
        self.method
    }

    pub fn faces(&self, grid: &GridDensity) -> Result<FaceVelocity> {
        let n = self.n;
        if grid.cells_per_side() != n || grid.half_width() != self.half_width {
            return Err(Error::domain("grid geometry does not match the velocity engine"));
        }
        let masses = grid.cell_masses();
        match &self.fft {
            Some((conv, kx, ky)) => {
                let input = conv.input_spectrum(&masses);
                let (ax, ay) = conv.apply_pair(&input, kx, ky, n + 1, n + 1);
                let mut ux = Vec::with_capacity((n + 1) * n);
                for j in 0..n {
                    ux.extend_from_slice(&ax[j * (n + 1)..(j + 1) * (n + 1)]);
                }
                let mut uy = Vec::with_capacity(n * (n + 1));
                for j in 0..=n {
                    uy.extend_from_slice(&ay[j * (n + 1)..j * (n + 1) + n]);
                }
                Ok(FaceVelocity { n, ux, uy })
            }
            None => Ok(self.direct(grid, &masses)),
        }
    }

    fn direct(&self, grid: &GridDensity, masses: &[f64]) -> FaceVelocity {
        let n = self.n;
        let h = grid.cell_size();
        let l = self.half_width;
        let eps = self.epsilon;
        let occupied: Vec<(Vec2, f64)> = (0..n * n)
            .filter(|&k| masses[k] != 0.0)
            .map(|k| (grid.cell_center(k % n, k / n), masses[k]))
            .collect();
        let sum_at = |p: Vec2| {
            let mut s = Vec2::ZERO;
            for &(c, m) in &occupied {
                s += k_eps_unchecked(p - c, eps) * m;
            }
            s
        };
        let ux = (0..(n + 1) * n)
            .into_par_iter()
            .map(|k| {
                let (i, j) = (k % (n + 1), k / (n + 1));
                sum_at(Vec2::new(-l + i as f64 * h, -l + (j as f64 + 0.5) * h)).x
            })
            .collect();
        let uy = (0..n * (n + 1))
            .into_par_iter()
            .map(|k| {
                let (i, j) = (k % n, k / n);
                sum_at(Vec2::new(-l + (i as f64 + 0.5) * h, -l + j as f64 * h)).y
            })
            .collect();
        FaceVelocity { n, ux, uy }
    }
}

/// One-shot face velocity `U = K_ε ∗ f`.
pub fn velocity_field(grid: &GridDensity, epsilon: f64, method: ConvolutionMethod) -> Result<FaceVelocity> {
    VelocityEngine::new(grid.half_width(), grid.cells_per_side(), epsilon, method)?.faces(grid)
}

/// Largest step for which the explicit upwind update has nonnegative
/// coefficients: `dt (4/h² + 4 U_max / h) ≤ 1`.
pub fn positivity_bound(h: f64, max_face_speed: f64) -> f64 {
    positivity_bound_for(AdvectionScheme::Upwind, h, max_face_speed)
}

/// Positivity bound for a scheme whose outflow face values are at most
/// `c` times the cell average: `dt (4/h² + 4c U_max / h) ≤ 1`.
pub fn positivity_bound_for(scheme: AdvectionScheme, h: f64, max_face_speed: f64) -> f64 {
    1.0 / (4.0 / (h * h) + 4.0 * scheme.face_factor() * max_face_speed / h)
}

/// `cfl_safety · min(h²/4, h/(2 U_max))`, capped by the upwind positivity bound.
pub fn auto_dt(h: f64, max_face_speed: f64, cfl_safety: f64) -> f64 {
    auto_dt_for(AdvectionScheme::Upwind, h, max_face_speed, cfl_safety)
}

pub fn auto_dt_for(scheme: AdvectionScheme, h: f64, max_face_speed: f64, cfl_safety: f64) -> f64 {
    let advective = if max_face_speed > 0.0 {
        h / (2.0 * max_face_speed)
    } else {
        f64::INFINITY
    };
    (cfl_safety * (0.25 * h * h).min(advective)).min(positivity_bound_for(scheme, h, max_face_speed))
}

#[inline]
fn van_leer(p: f64, q: f64) -> f64 {
    if p * q > 0.0 {
        2.0 * p * q / (p + q)
    } else {
        0.0
    }
}

/// One explicit upwind step. `velocity` is `None` for pure diffusion.
pub fn fv_step(grid: &GridDensity, velocity: Option<&FaceVelocity>, dt: f64) -> Result<GridDensity> {
    fv_step_with(grid, velocity, dt, AdvectionScheme::Upwind)
}

pub fn fv_step_with(
    grid: &GridDensity,
    velocity: Option<&FaceVelocity>,
    dt: f64,
    scheme: AdvectionScheme,
) -> Result<GridDensity> {
    let n = grid.cells_per_side();
    let h = grid.cell_size();
    let umax = velocity.map_or(0.0, |u| u.max_speed());
    let bound = positivity_bound_for(scheme, h, umax);
    if !(dt > 0.0) || dt > bound * (1.0 + 1e-12) {
        return Err(Error::Cfl {
            dt,
            bound,
            max_face_speed: umax,
        });
    }
    if let Some(u) = velocity {
        if u.n != n {
            return Err(Error::domain("velocity field does not match the grid"));
        }
    }
    let f = grid.values();
    let inv_h = 1.0 / h;
    // Advected value at the face between `a` (lower index) and `b` along a
    // line of cells; `a_prev` and `b_next` are the outer neighbours if any.
    let face_value = |v: f64, a_prev: Option<f64>, a: f64, b: f64, b_next: Option<f64>| match scheme {
        AdvectionScheme::Upwind => {
            if v >= 0.0 {
                a
            } else {
                b
            }
        }
        AdvectionScheme::VanLeer => {
            if v >= 0.0 {
                a + 0.5 * a_prev.map_or(0.0, |p| van_leer(a - p, b - a))
            } else {
                b - 0.5 * b_next.map_or(0.0, |q| van_leer(b - a, q - b))
            }
        }
    };
    // flux through the vertical face left of cell (i, j), 1 ≤ i ≤ n − 1
    let flux_x = |i: usize, j: usize| {
        let row = &f[j * n..(j + 1) * n];
        let (a, b) = (row[i - 1], row[i]);
        let adv = velocity.map_or(0.0, |u| {
            let v = u.x_face(i, j);
            let prev = if i >= 2 { Some(row[i - 2]) } else { None };
            let next = row.get(i + 1).copied();
            v * face_value(v, prev, a, b, next)
        });
        adv - (b - a) * inv_h
    };
    let flux_y = |i: usize, j: usize| {
        let (a, b) = (f[(j - 1) * n + i], f[j * n + i]);
        let adv = velocity.map_or(0.0, |u| {
            let v = u.y_face(i, j);
            let prev = if j >= 2 { Some(f[(j - 2) * n + i]) } else { None };
            let next = if j + 1 < n { Some(f[(j + 1) * n + i]) } else { None };
            v * face_value(v, prev, a, b, next)
        });
        adv - (b - a) * inv_h
    };
    let r = dt * inv_h;
    let mut out = vec![0.0; n * n];
    out.par_chunks_mut(n).enumerate().for_each(|(j, row)| {
        for (i, v) in row.iter_mut().enumerate() {
            let left = if i > 0 { flux_x(i, j) } else { 0.0 };
            let right = if i + 1 < n { flux_x(i + 1, j) } else { 0.0 };
            let down = if j > 0 { flux_y(i, j) } else { 0.0 };
            let up = if j + 1 < n { flux_y(i, j + 1) } else { 0.0 };
            *v = f[j * n + i] - r * (right - left + up - down);
        }
    });
    for (k, v) in out.iter_mut().enumerate() {
        if *v < 0.0 {
            if *v < -NEGATIVITY_TOLERANCE {
                return Err(Error::Negativity {
                    value: *v,
                    i: k % n,
                    j: k / n,
                });
            }
            *v = 0.0;
        }
    }
    Ok(GridDensity::from_values_unchecked(grid.half_width(), n, out))
}

pub struct GridRun {
    pub series: DiagnosticSeries,
    pub final_grid: GridDensity,
    pub steps: u64,
    /// Largest fraction of the mass seen in the outer ring of cells.
    pub max_boundary_fraction: f64,
    /// Largest single-cell mass seen; a resolution probe near concentration.
    pub max_cell_mass: f64,
}

impl GridRun {
    /// Set when mass reached the box walls beyond [`LEAK_THRESHOLD`].
    pub fn box_truncated(&self) -> bool {
        self.max_boundary_fraction > LEAK_THRESHOLD
    }
}

/// Called with `(t, grid)` at the start and after every step.
pub type StepObserver<'a> = dyn FnMut(f64, &GridDensity) -> Result<()> + 'a;

pub fn run_grid(cfg: &GridConfig, f0: &InitialMeasure, params: FunctionalParams) -> Result<GridRun> {
    let grid = f0.project_to_grid(cfg.epsilon, cfg.half_width, cfg.n)?;
    run_grid_from(cfg, grid, params, None)
}

/// Evolves `grid` to `t_final`, recording a row at every multiple of the
/// sample interval and at `t_final`. Steps are shortened to land on those
/// times exactly.
pub fn run_grid_from(
    cfg: &GridConfig,
    grid: GridDensity,
    params: FunctionalParams,
    mut observer: Option<&mut StepObserver<'_>>,
) -> Result<GridRun> {
    cfg.validate()?;
    params
        .validate()
        .map_err(|e| Error::config("diagnostics", e.to_string()))?;
    if grid.cells_per_side() != cfg.n || grid.half_width() != cfg.half_width {
        return Err(Error::config(
            "grid",
            "initial grid does not match the configured geometry",
        ));
    }
    let mass = grid.mass();
    let h = cfg.cell_size();
    let engine = VelocityEngine::new(cfg.half_width, cfg.n, cfg.epsilon, cfg.convolution_method)?;
    let functionals = GridFunctionals::new(cfg.half_width, cfg.n, params.gamma, cfg.epsilon, params.nu)?;
    let mut series = DiagnosticSeries::new(SeriesMeta {
        gamma: params.gamma,
        epsilon: cfg.epsilon,
        nu: params.nu,
        mass,
        seed: None,
    });
    let mut grid = grid;
    let mut t = 0.0;
    let mut steps = 0u64;
    let mut max_boundary_fraction = grid.boundary_ring_mass() / mass;
    let mut max_cell_mass = grid.cell_masses().into_iter().fold(0.0, f64::max);
    series.push(functionals.row(&grid, t)?)?;
    if let Some(obs) = observer.as_mut() {
        obs(t, &grid)?;
    }
    let interval = cfg.sample_interval();
    let mut k = 1u64;
    while t < cfg.t_final {
        let target = (k as f64 * interval).min(cfg.t_final);
        let velocity = if cfg.drift_enabled {
            Some(engine.faces(&grid)?)
        } else {
            None
        };
        let umax = velocity.as_ref().map_or(0.0, |u| u.max_speed());
        let mut dt = if cfg.dt > 0.0 {
            cfg.dt
        } else {
            auto_dt_for(cfg.advection, h, umax, cfg.cfl_safety)
        };
        let landing = t + dt >= target - 1e-12 * cfg.t_final;
        if landing {
            dt = target - t;
        }
        grid = fv_step_with(&grid, velocity.as_ref(), dt, cfg.advection)?;
        steps += 1;
        t = if landing { target } else { t + dt };
        max_boundary_fraction = max_boundary_fraction.max(grid.boundary_ring_mass() / mass);
        max_cell_mass = grid.cell_masses().into_iter().fold(max_cell_mass, f64::max);
        if let Some(obs) = observer.as_mut() {
            obs(t, &grid)?;
        }
        if landing {
            series.push(functionals.row(&grid, t)?)?;
            k += 1;
        }
    }
    Ok(GridRun {
        series,
        final_grid: grid,
        steps,
        max_boundary_fraction,
        max_cell_mass,
    })
}

/// Cell values of the heat flow `∂_t f = Δf` from an isotropic Gaussian of
/// variance `var0`, at cell centers.
pub fn heat_solution(half_width: f64, n: usize, mean: Vec2, var0: f64, mass: f64, t: f64) -> Vec<f64> {
    let var = var0 + 2.0 * t;
    let h = 2.0 * half_width / n as f64;
    let mut out = vec![0.0; n * n];
    for j in 0..n {
        for i in 0..n {
            let x = Vec2::new(-half_width + (i as f64 + 0.5) * h, -half_width + (j as f64 + 0.5) * h);
            out[j * n + i] = mass * (-(x - mean).norm_sq() / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var);
        }
    }
    out
}
