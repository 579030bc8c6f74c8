//! Run configuration: one JSON document per experiment.
//!
//! Solver blocks carry only solver-specific fields. The initial measure, ε,
//! final time and seed live at the top level and are shared by both solvers.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid_solver::{AdvectionScheme, ConvolutionMethod, GridConfig};
use crate::initial_data::{InitialMeasure, Regime, MIN_CAPTURED_FRACTION};
use crate::kernels::check_epsilon;
use crate::measures::FunctionalParams;
use crate::particle_solver::{dt_max, ForceMethod, ParticleConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub f0: InitialMeasure,
    pub epsilon: f64,
    pub t_final: f64,
    #[serde(default)]
    pub seed: u64,
    pub solver: SolverBlock,
    pub diagnostics: DiagnosticsBlock,
    pub output_dir: PathBuf,
}

/// Exactly one of the two fields must be present.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub particles: Option<ParticleBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridBlock>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticleBlock {
    pub n: usize,
    /// Defaults to [`dt_max`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default = "default_sample_every")]
    pub sample_every: usize,
    #[serde(default = "default_force_method")]
    pub force_method: ForceMethod,
    #[serde(default)]
    pub allow_large_dt: bool,
}

fn default_sample_every() -> usize {
    1
}

fn default_force_method() -> ForceMethod {
    ForceMethod::Direct
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    pub half_width: f64,
    pub n: usize,
    #[serde(default)]
    pub dt: f64,
    #[serde(default = "default_cfl_safety")]
    pub cfl_safety: f64,
    #[serde(default = "default_true")]
    pub drift_enabled: bool,
    #[serde(default = "default_convolution")]
    pub convolution_method: ConvolutionMethod,
    #[serde(default)]
    pub advection: AdvectionScheme,
    #[serde(default, skip_serializing_if = "Option::is_none")]
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

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    /// Dissipation bound; needs `M < 8π` and `γ ∈ (M/4π, 2)`.
    Estimegamma,
    /// Second-moment slope bracket and exact law.
    SecondMoment,
    /// Finite log-pair integrals; needs an admissible critical `f0`.
    CriticalRun,
    Concentration,
    CompaciteMoment,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsBlock {
    pub gamma: f64,
    pub nu: f64,
    #[serde(default)]
    pub checks: BTreeSet<CheckKind>,
    #[serde(default)]
    pub tolerances: Tolerances,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Relative slack of the dissipation check.
    #[serde(default = "default_relative")]
    pub relative: f64,
    /// Absolute Monte Carlo band added for particle runs.
    #[serde(default)]
    pub band: f64,
    /// Relative slack of the exact second-moment law.
    #[serde(default = "default_law_relative")]
    pub law_relative: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub concentration_floor: Option<f64>,
    #[serde(default = "default_compacite_constant")]
    pub compacite_constant: f64,
}

fn default_relative() -> f64 {
    0.05
}

fn default_law_relative() -> f64 {
    0.10
}

fn default_compacite_constant() -> f64 {
    crate::diagnostics::COMPACITE_CONSTANT
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            relative: default_relative(),
            band: 0.0,
            law_relative: default_law_relative(),
            concentration_floor: None,
            compacite_constant: default_compacite_constant(),
        }
    }
}

/// The solver selected by a validated config.
#[derive(Clone, Debug, PartialEq)]
pub enum SolverChoice {
    Particles(ParticleConfig),
    Grid(GridConfig),
}

fn nonneg(field: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(field, "must be finite and nonnegative"))
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::config("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("config", format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn mass(&self) -> f64 {
        self.f0.mass()
    }

    pub fn params(&self) -> FunctionalParams {
        FunctionalParams {
            gamma: self.diagnostics.gamma,
            nu: self.diagnostics.nu,
        }
    }

    /// The solver config, with the shared fields filled in.
    pub fn solver_choice(&self) -> Result<SolverChoice> {
        match (&self.solver.particles, &self.solver.grid) {
            (Some(p), None) => Ok(SolverChoice::Particles(ParticleConfig {
                n: p.n,
                epsilon: self.epsilon,
                dt: p.dt.unwrap_or_else(|| dt_max(self.epsilon, self.mass())),
                t_final: self.t_final,
                seed: self.seed,
                sample_every: p.sample_every,
                force_method: p.force_method,
                allow_large_dt: p.allow_large_dt,
            })),
            (None, Some(g)) => Ok(SolverChoice::Grid(GridConfig {
                half_width: g.half_width,
                n: g.n,
                epsilon: self.epsilon,
                dt: g.dt,
                t_final: self.t_final,
                cfl_safety: g.cfl_safety,
                drift_enabled: g.drift_enabled,
                convolution_method: g.convolution_method,
                advection: g.advection,
                sample_interval: g.sample_interval,
            })),
            _ => Err(Error::config(
                "solver",
                "exactly one of `particles` or `grid` must be given",
            )),
        }
    }

    /// Field-level validation, including the hypothesis guards of the
    /// requested checks.
    pub fn validate(&self) -> Result<()> {
        check_epsilon(self.epsilon).map_err(|e| Error::config("epsilon", e.to_string()))?;
        nonneg("t_final", self.t_final)?;
        let mass = self.mass();
        let d = &self.diagnostics;
        self.params()
            .validate()
            .map_err(|e| Error::config("diagnostics", e.to_string()))?;
        let t = &d.tolerances;
        nonneg("diagnostics.tolerances.relative", t.relative)?;
        nonneg("diagnostics.tolerances.band", t.band)?;
        nonneg("diagnostics.tolerances.law_relative", t.law_relative)?;
        nonneg("diagnostics.tolerances.compacite_constant", t.compacite_constant)?;
        if let Some(floor) = t.concentration_floor {
            nonneg("diagnostics.tolerances.concentration_floor", floor)?;
        }
        if d.checks.contains(&CheckKind::Estimegamma) {
            if !(mass < 8.0 * PI) {
                return Err(Error::config("f0", format!("estimegamma needs M < 8π, got M = {mass}")));
            }
            let floor = mass / (4.0 * PI);
            if !(d.gamma > floor && d.gamma < 2.0) {
                return Err(Error::config(
                    "diagnostics.gamma",
                    format!(
                        "estimegamma needs γ in the open interval (M/4π, 2) = ({floor}, 2), got {}",
                        d.gamma
                    ),
                ));
            }
        }
        if d.checks.contains(&CheckKind::CriticalRun) {
            if self.f0.regime() != Regime::Critical {
                return Err(Error::config(
                    "f0",
                    format!("critical_run needs M = 8π, got M = {mass}"),
                ));
            }
            if !self.f0.is_critically_admissible() {
                return Err(Error::config(
                    "f0.atoms",
                    "critical_run needs every atom to carry mass below 8π",
                ));
            }
        }
        match self.solver_choice()? {
            SolverChoice::Particles(p) => p.validate(mass).map_err(|e| prefix("solver.particles", e)),
            SolverChoice::Grid(g) => {
                g.validate().map_err(|e| prefix("solver.grid", e))?;
                let captured = self.f0.captured_fraction(self.epsilon, g.half_width)?;
                if captured < MIN_CAPTURED_FRACTION {
                    return Err(Error::config(
                        "solver.grid.half_width",
                        format!("the box captures only {captured} of the mollified mass"),
                    ));
                }
                Ok(())
            }
        }
    }
}

fn prefix(block: &str, e: Error) -> Error {
    match e {
        Error::Config { field, message } => Error::Config {
            field: format!("{block}.{field}"),
            message,
        },
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base(solver: &str, extra: &str) -> String {
        format!(
            r#"{{"f0": {{"gaussians": [{{"mean": [0, 0], "variance": 1, "mass": 12.566370614359172}}]}},
                "epsilon": 0.1, "t_final": 0.5, "seed": 3,
                "solver": {solver},
                "diagnostics": {{"gamma": 1.5, "nu": 0.5 {extra}}},
                "output_dir": "out"}}"#
        )
    }

    fn field_of(e: Error) -> String {
        match e {
            Error::Config { field, .. } => field,
            other => panic!("expected a config error, got {other}"),
        }
    }

    #[test]
    fn parses_both_solvers_with_defaults() {
        let p = RunConfig::from_json(&base(r#"{"particles": {"n": 100}}"#, "")).unwrap();
        match p.solver_choice().unwrap() {
            SolverChoice::Particles(c) => {
                assert_eq!(c.dt, dt_max(0.1, p.mass()));
                assert_eq!(c.seed, 3);
            }
            _ => panic!(),
        }
        let g = RunConfig::from_json(&base(r#"{"grid": {"half_width": 6, "n": 32}}"#, "")).unwrap();
        match g.solver_choice().unwrap() {
            SolverChoice::Grid(c) => {
                assert_eq!(c.cfl_safety, 0.4);
                assert_eq!(c.t_final, 0.5);
            }
            _ => panic!(),
        }
        assert_eq!(g.diagnostics.tolerances, Tolerances::default());
    }

    #[test]
    fn exactly_one_solver_block() {
        let both = base(r#"{"particles": {"n": 10}, "grid": {"half_width": 6, "n": 32}}"#, "");
        assert_eq!(field_of(RunConfig::from_json(&both).unwrap_err()), "solver");
        assert_eq!(field_of(RunConfig::from_json(&base("{}", "")).unwrap_err()), "solver");
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = base(r#"{"grid": {"half_width": 6, "n": 32, "bogus": 1}}"#, "");
        let e = RunConfig::from_json(&text).unwrap_err();
        assert!(e.to_string().contains("bogus"));
    }

    #[test]
    fn estimegamma_guard_is_strict() {
        // M = 4π puts the lower end of the γ range at exactly 1
        let text = base(r#"{"particles": {"n": 10}}"#, r#", "checks": ["estimegamma"]"#).replace("1.5", "1.0");
        assert_eq!(field_of(RunConfig::from_json(&text).unwrap_err()), "diagnostics.gamma");
        let ok = base(r#"{"particles": {"n": 10}}"#, r#", "checks": ["estimegamma"]"#);
        RunConfig::from_json(&ok).unwrap();
    }

    #[test]
    fn critical_checks_need_critical_mass() {
        let text = base(r#"{"particles": {"n": 10}}"#, r#", "checks": ["critical_run"]"#);
        assert_eq!(field_of(RunConfig::from_json(&text).unwrap_err()), "f0");
        let crit = text.replace("12.566370614359172", &(8.0 * PI).to_string());
        RunConfig::from_json(&crit).unwrap();
    }

    #[test]
    fn solver_errors_name_the_block() {
        let text = base(r#"{"particles": {"n": 10, "dt": 5}}"#, "");
        assert_eq!(
            field_of(RunConfig::from_json(&text).unwrap_err()),
            "solver.particles.dt"
        );
        let small = base(r#"{"grid": {"half_width": 2, "n": 32}}"#, "");
        assert_eq!(
            field_of(RunConfig::from_json(&small).unwrap_err()),
            "solver.grid.half_width"
        );
    }
}
