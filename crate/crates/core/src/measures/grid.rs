use serde::{Deserialize, Serialize};

use super::{
    check_gamma_closed, check_gamma_open, check_radius, log_weight, pow_from_sq, DiagnosticRow, Extended, Measure,
};
use crate::error::{Error, Result};
use crate::fft::{PaddedConv, Spectrum};
use crate::geometry::Vec2;
use crate::kernels::check_epsilon;

/// Grids up to this size evaluate pair sums by the direct double loop.
const DIRECT_PAIR_LIMIT: usize = 16;

/// Cell averages of a density on the box `[−L, L]²`, stored row-major
/// (`values[j * n + i]`, `i` along x).
#[derive(Clone, Debug, PartialEq)]
pub struct GridDensity {
    half_width: f64,
    n: usize,
    values: Vec<f64>,
}

/// How pair sums over cells are evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairMethod {
    Direct,
    Fft,
}

impl GridDensity {
    pub fn new(half_width: f64, n: usize, values: Vec<f64>) -> Result<Self> {
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::domain(format!("half width must be positive, got {half_width}")));
        }
        if n < 4 {
            return Err(Error::domain(format!("need at least 4 cells per side, got {n}")));
        }
        if values.len() != n * n {
            return Err(Error::domain(format!(
                "expected {} values, got {}",
                n * n,
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::domain(format!("cell {k} has invalid density {}", values[k])));
        }
        Ok(GridDensity { half_width, n, values })
    }

    pub fn zeros(half_width: f64, n: usize) -> Result<Self> {
        Self::new(half_width, n, vec![0.0; n * n])
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn cells_per_side(&self) -> usize {
        self.n
    }

    pub fn cell_size(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn from_values_unchecked(half_width: f64, n: usize, values: Vec<f64>) -> Self {
        GridDensity { half_width, n, values }
    }

    #[inline]
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.n + i]
    }

    #[inline]
    pub fn cell_center(&self, i: usize, j: usize) -> Vec2 {
        let h = self.cell_size();
        Vec2::new(
            -self.half_width + (i as f64 + 0.5) * h,
            -self.half_width + (j as f64 + 0.5) * h,
        )
    }

    /// Cell masses `h² · value`.
    pub fn cell_masses(&self) -> Vec<f64> {
        let a = self.cell_size().powi(2);
        self.values.iter().map(|v| v * a).collect()
    }

    pub fn mass(&self) -> f64 {
        self.cell_size().powi(2) * self.values.iter().sum::<f64>()
    }

    /// Mass held by the outermost ring of cells.
    pub fn boundary_ring_mass(&self) -> f64 {
        let n = self.n;
        let mut s = 0.0;
        for j in 0..n {
            for i in 0..n {
                if i == 0 || j == 0 || i == n - 1 || j == n - 1 {
                    s += self.value(i, j);
                }
            }
        }
        s * self.cell_size().powi(2)
    }

    /// `Σ_{c≠c'} m_c m_{c'} φ(|x_c − x_{c'}|²)` over ordered pairs of distinct cells.
    pub fn pair_sum_with<F>(&self, method: PairMethod, phi: F) -> f64
    where
        F: Fn(f64) -> f64 + Sync,
    {
        let n = self.n;
        let h = self.cell_size();
        let masses = self.cell_masses();
        match method {
            PairMethod::Direct => {
                let mut total = 0.0;
                for a in 0..n * n {
                    if masses[a] == 0.0 {
                        continue;
                    }
                    let (ai, aj) = ((a % n) as f64, (a / n) as f64);
                    let mut row = 0.0;
                    for b in 0..n * n {
                        if b == a {
                            continue;
                        }
                        let dx = (ai - (b % n) as f64) * h;
                        let dy = (aj - (b / n) as f64) * h;
                        row += masses[b] * phi(dx * dx + dy * dy);
                    }
                    total += masses[a] * row;
                }
                total
            }
            PairMethod::Fft => {
                let conv = PaddedConv::new(n);
                let input = conv.input_spectrum(&masses);
                let kernel = radial_spectrum(&conv, h, &phi);
                let smoothed = conv.apply(&input, &kernel, n, n);
                masses.iter().zip(&smoothed).map(|(m, s)| m * s).sum()
            }
        }
    }

    fn pair_sum(&self, phi: impl Fn(f64) -> f64 + Sync) -> f64 {
        let method = if self.n <= DIRECT_PAIR_LIMIT {
            PairMethod::Direct
        } else {
            PairMethod::Fft
        };
        self.pair_sum_with(method, phi)
    }

    /// Mass inside the open ball of radius `nu` around every grid node,
    /// as an `(n + 1) × (n + 1)` row-major array.
    pub fn node_ball_masses(&self, nu: f64, method: PairMethod) -> Vec<f64> {
        let n = self.n;
        let h = self.cell_size();
        let masses = self.cell_masses();
        // node a, cell k: center − node = (k + 1/2 − a) h = (1/2 − o) h with o = a − k
        let inside = |ox: i64, oy: i64| {
            let dx = (0.5 - ox as f64) * h;
            let dy = (0.5 - oy as f64) * h;
            dx * dx + dy * dy < nu * nu
        };
        match method {
            PairMethod::Direct => {
                let reach = (nu / h).ceil() as i64 + 1;
                let stencil: Vec<(i64, i64)> = (-reach..=reach)
                    .flat_map(|oy| (-reach..=reach).map(move |ox| (ox, oy)))
                    .filter(|&(ox, oy)| inside(ox, oy))
                    .collect();
                let mut out = vec![0.0; (n + 1) * (n + 1)];
                for b in 0..=n {
                    for a in 0..=n {
                        let mut s = 0.0;
                        for &(ox, oy) in &stencil {
                            let (k, l) = (a as i64 - ox, b as i64 - oy);
                            if k >= 0 && l >= 0 && (k as usize) < n && (l as usize) < n {
                                s += masses[l as usize * n + k as usize];
                            }
                        }
                        out[b * (n + 1) + a] = s;
                    }
                }
                out
            }
            PairMethod::Fft => {
                let conv = PaddedConv::new(n);
                let input = conv.input_spectrum(&masses);
                let kernel = conv.kernel_spectrum(n + 1, n + 1, |ox, oy| if inside(ox, oy) { 1.0 } else { 0.0 });
                conv.apply(&input, &kernel, n + 1, n + 1)
            }
        }
    }
}

fn radial_spectrum(conv: &PaddedConv, h: f64, phi: &(impl Fn(f64) -> f64 + Sync)) -> Spectrum {
    let n = conv.n();
    conv.kernel_spectrum(n, n, |ox, oy| {
        if ox == 0 && oy == 0 {
            0.0
        } else {
            phi(((ox * ox + oy * oy) as f64) * h * h)
        }
    })
}

fn ball_method(n: usize, nu: f64, h: f64) -> PairMethod {
    let stencil = (2.0 * nu / h + 3.0).powi(2);
    if stencil * ((n + 1) * (n + 1)) as f64 <= 4e7 {
        PairMethod::Direct
    } else {
        PairMethod::Fft
    }
}

impl Measure for GridDensity {
    fn total_mass(&self) -> f64 {
        self.mass()
    }

    fn center_of_mass(&self) -> Vec2 {
        let mut s = Vec2::ZERO;
        let mut m = 0.0;
        for j in 0..self.n {
            for i in 0..self.n {
                let v = self.value(i, j);
                s += self.cell_center(i, j) * v;
                m += v;
            }
        }
        s * (1.0 / m)
    }

    fn moment_gamma(&self, gamma: f64, center: Vec2) -> Result<f64> {
        check_gamma_closed(gamma)?;
        let mut s = 0.0;
        for j in 0..self.n {
            for i in 0..self.n {
                s += self.value(i, j) * pow_from_sq((self.cell_center(i, j) - center).norm_sq(), gamma);
            }
        }
        Ok(s * self.cell_size().powi(2))
    }

    fn pair_moment(&self, gamma: f64) -> Result<f64> {
        check_gamma_closed(gamma)?;
        Ok(self.pair_sum(|r2| pow_from_sq(r2, gamma)))
    }

    fn pair_dissipation(&self, gamma: f64) -> Result<Extended> {
        check_gamma_open(gamma)?;
        let e = 0.5 * gamma - 1.0;
        Ok(Extended::Finite(self.pair_sum(|r2| r2.powf(e))))
    }

    fn log_pair_moments(&self) -> (Extended, Extended) {
        (
            Extended::Finite(self.pair_sum(|r2| log_weight(r2.sqrt()))),
            Extended::Finite(self.pair_sum(log_weight)),
        )
    }

    fn log_regularization_term(&self, epsilon: f64) -> Result<Extended> {
        check_epsilon(epsilon)?;
        Ok(Extended::Finite(
            self.pair_sum(|r2| log_weight(r2) * epsilon / (r2 + epsilon)),
        ))
    }

    fn max_ball_mass(&self, nu: f64) -> Result<f64> {
        check_radius(nu)?;
        let method = ball_method(self.n, nu, self.cell_size());
        let best = self.node_ball_masses(nu, method).into_iter().fold(0.0, f64::max);
        Ok(best.min(self.mass()))
    }
}

/// Per-row grid diagnostics with all convolution kernels transformed once.
pub struct GridFunctionals {
    conv: PaddedConv,
    half_width: f64,
    n: usize,
    gamma: f64,
    nu: f64,
    pair_gamma: Spectrum,
    dissipation: Spectrum,
    log1: Spectrum,
    log2: Spectrum,
    ccc1: Spectrum,
    g_radial: Spectrum,
    u: (Spectrum, Spectrum),
    v: (Spectrum, Spectrum),
    ball: Option<Spectrum>,
}

impl GridFunctionals {
    pub fn new(half_width: f64, n: usize, gamma: f64, epsilon: f64, nu: f64) -> Result<Self> {
        check_gamma_open(gamma)?;
        check_epsilon(epsilon)?;
        check_radius(nu)?;
        let conv = PaddedConv::new(n);
        let h = 2.0 * half_width / n as f64;
        let radial = |phi: &(dyn Fn(f64) -> f64 + Sync)| radial_spectrum(&conv, h, &phi);
        let e = 0.5 * gamma - 1.0;
        let pair_gamma = radial(&|r2| pow_from_sq(r2, gamma));
        let dissipation = radial(&|r2| r2.powf(e));
        let log1 = radial(&|r2| log_weight(r2.sqrt()));
        let log2 = radial(&|r2| log_weight(r2));
        let ccc1 = radial(&|r2| log_weight(r2) * epsilon / (r2 + epsilon));
        let g_radial = radial(&|r2| log_weight(r2) * r2 / (r2 + epsilon));
        // Ũ(q) = Σ_p m_p u(x_p − x_q): kernel at offset o = q − p is u(−o h)
        let vector = |f: &(dyn Fn(Vec2) -> Vec2 + Sync)| {
            let at = |ox: i64, oy: i64| {
                if ox == 0 && oy == 0 {
                    Vec2::ZERO
                } else {
                    f(Vec2::new(ox as f64 * h, oy as f64 * h))
                }
            };
            (
                conv.kernel_spectrum(n, n, |ox, oy| at(ox, oy).x),
                conv.kernel_spectrum(n, n, |ox, oy| at(ox, oy).y),
            )
        };
        let u = vector(&|d: Vec2| d * (-log_weight(d.norm_sq())));
        let v = vector(&|d: Vec2| d * (1.0 / (d.norm_sq() + epsilon)));
        let ball = match ball_method(n, nu, h) {
            PairMethod::Direct => None,
            PairMethod::Fft => Some(conv.kernel_spectrum(n + 1, n + 1, |ox, oy| {
                let dx = (0.5 - ox as f64) * h;
                let dy = (0.5 - oy as f64) * h;
                if dx * dx + dy * dy < nu * nu {
                    1.0
                } else {
                    0.0
                }
            })),
        };
        Ok(GridFunctionals {
            conv,
            half_width,
            n,
            gamma,
            nu,
            pair_gamma,
            dissipation,
            log1,
            log2,
            ccc1,
            g_radial,
            u,
            v,
            ball,
        })
    }

    pub fn row(&self, grid: &GridDensity, t: f64) -> Result<DiagnosticRow> {
        if grid.cells_per_side() != self.n || grid.half_width() != self.half_width {
            return Err(Error::domain("grid geometry does not match the functional engine"));
        }
        let n = self.n;
        let masses = grid.cell_masses();
        let mass: f64 = masses.iter().sum();
        let input = self.conv.input_spectrum(&masses);
        let pair = |k: &Spectrum| -> f64 {
            let s = self.conv.apply(&input, k, n, n);
            masses.iter().zip(&s).map(|(m, s)| m * s).sum()
        };
        let (sg, dg) = (pair(&self.pair_gamma), pair(&self.dissipation));
        let (l1, l2, c1, g) = (
            pair(&self.log1),
            pair(&self.log2),
            pair(&self.ccc1),
            pair(&self.g_radial),
        );
        let (ux, uy) = self.conv.apply_pair(&input, &self.u.0, &self.u.1, n, n);
        let (vx, vy) = self.conv.apply_pair(&input, &self.v.0, &self.v.1, n, n);
        let uv: f64 = (0..n * n).map(|k| masses[k] * (ux[k] * vx[k] + uy[k] * vy[k])).sum();
        let max_ball = match &self.ball {
            Some(k) => self.conv.apply(&input, k, n + 1, n + 1).into_iter().fold(0.0, f64::max),
            None => grid
                .node_ball_masses(self.nu, PairMethod::Direct)
                .into_iter()
                .fold(0.0, f64::max),
        };
        Ok(DiagnosticRow {
            t,
            mass,
            com: grid.center_of_mass(),
            m2: grid.moment_gamma(2.0, Vec2::ZERO)?,
            s_gamma: sg,
            d_gamma: Extended::Finite(dg),
            logpair1: Extended::Finite(l1),
            logpair2: Extended::Finite(l2),
            max_ball_mass: max_ball.min(mass),
            g_triple: Extended::Finite(3.0 * mass * g + 6.0 * uv),
            moment_gamma: grid.moment_gamma(self.gamma, Vec2::ZERO)?,
            ccc1: Extended::Finite(c1),
        })
    }
}

/// Cell-center samples of an isotropic Gaussian (test helper).
#[cfg(test)]
pub(crate) fn gaussian_grid(half_width: f64, n: usize, center: Vec2, var: f64, mass: f64) -> GridDensity {
    use std::f64::consts::PI;
    let mut g = GridDensity::zeros(half_width, n).unwrap();
    let mut vals = vec![0.0; n * n];
    for j in 0..n {
        for i in 0..n {
            let x = g.cell_center(i, j);
            vals[j * n + i] = mass * (-(x - center).norm_sq() / (2.0 * var)).exp() / (2.0 * PI * var);
        }
    }
    g.values = vals;
    g
}
