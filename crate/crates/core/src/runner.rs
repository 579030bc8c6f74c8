//! Executes run configs and writes their output directories.
//!
//! A run directory holds `diagnostics.csv`, `diagnostics_extra.csv`,
//! `reports.json`, a snapshot of the final state and `manifest.json`. Only
//! the manifest carries a timestamp, under `generated_at_unix`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{CheckKind, RunConfig, SolverChoice};
use crate::diagnostics::{
    check_compacite_moment, check_concentration, check_critical_logmoment, check_critical_run, check_estimegamma,
    check_second_moment, critical_integrals, least_squares_slope, InequalityReport, SolverTolerance,
};
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::grid_solver::run_grid;
use crate::initial_data::Regime;
use crate::measures::{DiagnosticSeries, GridDensity};
use crate::particle_solver::run_particles;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Final state of a run.
#[derive(Clone, Debug)]
pub enum Snapshot {
    Particles {
        t: f64,
        epsilon: f64,
        weight: f64,
        positions: Vec<Vec2>,
    },
    Grid {
        t: f64,
        epsilon: f64,
        grid: GridDensity,
    },
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub series: DiagnosticSeries,
    pub reports: Vec<InequalityReport>,
    pub snapshot: Snapshot,
    /// Solver statistics echoed into `reports.json`.
    pub solver_stats: BTreeMap<String, Value>,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.reports.iter().all(|r| r.pass)
    }
}

/// Runs the solver and the requested checks without touching the disk.
pub fn execute(cfg: &RunConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let params = cfg.params();
    let mut stats = BTreeMap::new();
    let (series, snapshot, tolerance) = match cfg.solver_choice()? {
        SolverChoice::Particles(p) => {
            let run = run_particles(&p, &cfg.f0, params)?;
            let (steps, dt) = p.schedule();
            stats.insert("steps".into(), json!(steps));
            stats.insert("dt".into(), json!(dt));
            let s = run.final_state;
            let snap = Snapshot::Particles {
                t: s.t,
                epsilon: cfg.epsilon,
                weight: s.ensemble.weight(),
                positions: s.ensemble.positions().to_vec(),
            };
            let tol = &cfg.diagnostics.tolerances;
            (
                run.series,
                snap,
                SolverTolerance::Particle {
                    relative: tol.relative,
                    band: tol.band,
                },
            )
        }
        SolverChoice::Grid(g) => {
            let run = run_grid(&g, &cfg.f0, params)?;
            stats.insert("steps".into(), json!(run.steps));
            stats.insert("max_boundary_fraction".into(), json!(run.max_boundary_fraction));
            stats.insert("box_truncated".into(), json!(run.box_truncated()));
            stats.insert("max_cell_mass".into(), json!(run.max_cell_mass));
            let snap = Snapshot::Grid {
                t: cfg.t_final,
                epsilon: cfg.epsilon,
                grid: run.final_grid,
            };
            (
                run.series,
                snap,
                SolverTolerance::Grid {
                    relative: cfg.diagnostics.tolerances.relative,
                },
            )
        }
    };
    stats.insert("mass_drift".into(), json!(series.mass_drift()));
    let reports = evaluate_checks(cfg, &series, tolerance)?;
    Ok(RunOutcome {
        series,
        reports,
        snapshot,
        solver_stats: stats,
    })
}

/// The checks named in the config, in their canonical order.
pub fn evaluate_checks(
    cfg: &RunConfig,
    series: &DiagnosticSeries,
    tolerance: SolverTolerance,
) -> Result<Vec<InequalityReport>> {
    let tol = &cfg.diagnostics.tolerances;
    let mut out = Vec::new();
    for check in &cfg.diagnostics.checks {
        match check {
            CheckKind::Estimegamma => out.push(check_estimegamma(series, tolerance)?),
            CheckKind::SecondMoment => {
                let r = check_second_moment(series, tol.law_relative)?;
                out.extend(r.all().into_iter().cloned());
            }
            CheckKind::CriticalRun => out.push(check_critical_run(&cfg.f0, series)?),
            CheckKind::Concentration => {
                out.push(check_concentration(series, cfg.diagnostics.nu, tol.concentration_floor)?.report)
            }
            CheckKind::CompaciteMoment => out.push(check_compacite_moment(series, &cfg.f0, tol.compacite_constant)?),
        }
    }
    Ok(out)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Writes every output file of a finished run into `dir`.
pub fn write_outputs(cfg: &RunConfig, outcome: &RunOutcome, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = create(&dir.join("diagnostics.csv"))?;
    outcome.series.write_csv(&mut w)?;
    w.flush()?;
    let mut w = create(&dir.join("diagnostics_extra.csv"))?;
    outcome.series.write_extra_csv(&mut w)?;
    w.flush()?;
    write_json(
        &dir.join("reports.json"),
        &json!({
            "passed": outcome.passed(),
            "reports": outcome.reports,
            "solver": outcome.solver_stats,
        }),
    )?;
    let outputs = match &outcome.snapshot {
        Snapshot::Particles {
            t,
            epsilon,
            weight,
            positions,
        } => {
            let mut w = create(&dir.join("snapshot.csv"))?;
            writeln!(w, "x,y")?;
            for p in positions {
                writeln!(w, "{},{}", p.x, p.y)?;
            }
            w.flush()?;
            write_json(
                &dir.join("snapshot.json"),
                &json!({"t": t, "epsilon": epsilon, "weight": weight, "n": positions.len()}),
            )?;
            ["snapshot.csv", "snapshot.json"]
        }
        Snapshot::Grid { t, epsilon, grid } => {
            let n = grid.cells_per_side();
            let mut w = create(&dir.join("field.csv"))?;
            writeln!(w, "x,y,density")?;
            for j in 0..n {
                for i in 0..n {
                    let c = grid.cell_center(i, j);
                    writeln!(w, "{},{},{}", c.x, c.y, grid.value(i, j))?;
                }
            }
            w.flush()?;
            write_json(
                &dir.join("field.json"),
                &json!({
                    "half_width": grid.half_width(), "n": n, "t": t,
                    "epsilon": epsilon, "mass": outcome.series.meta().mass,
                }),
            )?;
            ["field.csv", "field.json"]
        }
    };
    let generated = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    write_json(
        &dir.join("manifest.json"),
        &json!({
            "version": VERSION,
            "seed": cfg.seed,
            "config": cfg,
            "outputs": ["diagnostics.csv", "diagnostics_extra.csv", "reports.json", outputs[0], outputs[1]],
            "generated_at_unix": generated,
        }),
    )
}

/// `execute` followed by `write_outputs` into the configured directory.
pub fn simulate(cfg: &RunConfig) -> Result<RunOutcome> {
    let outcome = execute(cfg)?;
    write_outputs(cfg, &outcome, &cfg.output_dir)?;
    Ok(outcome)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SweepAxis {
    #[serde(rename = "epsilon")]
    Epsilon,
    /// Particle count.
    #[serde(rename = "N")]
    Particles,
    /// Cells per side.
    #[serde(rename = "n")]
    Cells,
    /// Total mass; the components of `f0` are rescaled.
    #[serde(rename = "M")]
    Mass,
}

impl FromStr for SweepAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "epsilon" => Ok(SweepAxis::Epsilon),
            "N" => Ok(SweepAxis::Particles),
            "n" => Ok(SweepAxis::Cells),
            "M" => Ok(SweepAxis::Mass),
            other => Err(Error::config(
                "axis",
                format!("unknown axis `{other}` (expected epsilon, N, n or M)"),
            )),
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::Epsilon => "epsilon",
            SweepAxis::Particles => "N",
            SweepAxis::Cells => "n",
            SweepAxis::Mass => "M",
        })
    }
}

fn as_count(axis: SweepAxis, v: f64) -> Result<usize> {
    if v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
        Ok(v as usize)
    } else {
        Err(Error::config(
            "values",
            format!("axis {axis} takes positive integers, got {v}"),
        ))
    }
}

/// One config per value, each writing into `<output_dir>/<axis>-<index>`.
/// Values must be nonempty and strictly monotone; every config is validated
/// before any run starts.
pub fn sweep_configs(base: &RunConfig, axis: SweepAxis, values: &[f64]) -> Result<Vec<RunConfig>> {
    if values.is_empty() {
        return Err(Error::config("values", "at least one value is required"));
    }
    let increasing = values.windows(2).all(|w| w[0] < w[1]);
    let decreasing = values.windows(2).all(|w| w[0] > w[1]);
    if !(increasing || decreasing) {
        return Err(Error::config("values", "values must be strictly monotone"));
    }
    values
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            let mut cfg = base.clone();
            match axis {
                SweepAxis::Epsilon => cfg.epsilon = v,
                SweepAxis::Particles => match cfg.solver.particles.as_mut() {
                    Some(p) => p.n = as_count(axis, v)?,
                    None => return Err(Error::config("axis", "the N axis needs a particle solver")),
                },
                SweepAxis::Cells => match cfg.solver.grid.as_mut() {
                    Some(g) => g.n = as_count(axis, v)?,
                    None => return Err(Error::config("axis", "the n axis needs a grid solver")),
                },
                SweepAxis::Mass => {
                    if !(v > 0.0 && v.is_finite()) {
                        return Err(Error::config("values", format!("mass must be positive, got {v}")));
                    }
                    cfg.f0 = base.f0.scaled(v / base.mass())?;
                }
            }
            cfg.output_dir = base.output_dir.join(format!("{axis}-{k:02}"));
            cfg.validate().map_err(|e| match e {
                Error::Config { field, message } => Error::config(field, format!("{message} (at {axis} = {v})")),
                other => other,
            })?;
            Ok(cfg)
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct PointSummary {
    pub m2_slope: Option<f64>,
    pub m2_slope_stderr: Option<f64>,
    pub logpair2_integral: f64,
    pub ccc1_integral: f64,
    pub mass_drift: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepPoint {
    pub value: f64,
    pub output_dir: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<PointSummary>,
    /// Configs are validated up front, so any error here arose during the run.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepReport {
    pub axis: SweepAxis,
    pub points: Vec<SweepPoint>,
    /// Cross-point checks: the critical log-moment sweep on the ε axis.
    pub aggregate: Vec<InequalityReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aggregate_error: Option<String>,
}

impl SweepReport {
    pub fn any_runtime_failure(&self) -> bool {
        self.points.iter().any(|p| p.error.is_some())
    }

    pub fn passed(&self) -> bool {
        self.points.iter().all(|p| p.summary.as_ref().is_some_and(|s| s.passed))
            && self.aggregate.iter().all(|r| r.pass)
            && self.aggregate_error.is_none()
    }
}

fn summarize(outcome: &RunOutcome) -> PointSummary {
    let slope = least_squares_slope(&outcome.series.times(), &outcome.series.column(|r| r.m2)).ok();
    let c = critical_integrals(&outcome.series);
    PointSummary {
        m2_slope: slope.map(|s| s.0),
        m2_slope_stderr: slope.map(|s| s.1),
        logpair2_integral: c.logpair2.value(),
        ccc1_integral: c.ccc1.value(),
        mass_drift: outcome.series.mass_drift(),
        passed: outcome.passed(),
    }
}

/// Runs every sweep point in order. Failed points are recorded and the sweep
/// continues; `sweep.json` is rewritten after each point so partial results
/// survive an interruption.
pub fn run_sweep(base: &RunConfig, axis: SweepAxis, values: &[f64]) -> Result<SweepReport> {
    let configs = sweep_configs(base, axis, values)?;
    fs::create_dir_all(&base.output_dir)?;
    let report_path = base.output_dir.join("sweep.json");
    let mut report = SweepReport {
        axis,
        points: Vec::new(),
        aggregate: Vec::new(),
        aggregate_error: None,
    };
    let mut finished: Vec<DiagnosticSeries> = Vec::new();
    for (cfg, &value) in configs.iter().zip(values) {
        let point = match simulate(cfg) {
            Ok(outcome) => {
                let summary = summarize(&outcome);
                finished.push(outcome.series);
                SweepPoint {
                    value,
                    output_dir: cfg.output_dir.clone(),
                    summary: Some(summary),
                    error: None,
                }
            }
            Err(e) => SweepPoint {
                value,
                output_dir: cfg.output_dir.clone(),
                summary: None,
                error: Some(e.to_string()),
            },
        };
        report.points.push(point);
        write_json(&report_path, &report)?;
    }
    if axis == SweepAxis::Epsilon && base.f0.regime() == Regime::Critical && finished.len() >= 2 {
        let refs: Vec<&DiagnosticSeries> = finished.iter().collect();
        match check_critical_logmoment(&base.f0, &refs) {
            Ok(r) => report.aggregate = r,
            Err(e) => report.aggregate_error = Some(e.to_string()),
        }
        write_json(&report_path, &report)?;
    }
    Ok(report)
}
