//! Regularized Keller–Segel dynamics in the plane: particle and finite-volume
//! solvers, the functionals they are measured by, and inequality checks.

pub mod cell_list;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod fft;
pub mod geometry;
pub mod grid_solver;
pub mod initial_data;
pub mod kernels;
pub mod measures;
pub mod particle_solver;
pub mod rng;
pub mod runner;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use geometry::Vec2;
pub use initial_data::InitialMeasure;
pub use measures::{DiagnosticRow, DiagnosticSeries, GridDensity, WeightedEnsemble};
