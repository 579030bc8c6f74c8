use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kslab_core::diagnostics::suites::{run_suite, Suite};
use kslab_core::runner::{run_sweep, simulate, SweepAxis};
use kslab_core::{Error, RunConfig};

const EXIT_USAGE: u8 = 2;
const EXIT_RUNTIME: u8 = 3;
const EXIT_FAILED: u8 = 4;

#[derive(Parser)]
#[command(name = "kslab", version, about = "Regularized Keller-Segel experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configured experiment and write its output directory.
    Simulate { config: PathBuf },
    /// Run a randomized property suite: kernels, geometry, measures or all.
    Check {
        suite: String,
        #[arg(long, default_value_t = 10_000)]
        samples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a config once per value along one axis: epsilon, N, n or M.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        axis: String,
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<f64>,
    },
}

fn usage(e: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(EXIT_USAGE)
}

/// Errors raised after validation are solver failures, unless they still
/// concern the configuration.
fn runtime(e: Error) -> ExitCode {
    match e {
        Error::Config { .. } | Error::Hypothesis(_) => usage(e),
        other => {
            eprintln!("error: {other}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

fn cmd_simulate(path: PathBuf) -> ExitCode {
    let cfg = match RunConfig::load(&path) {
        Ok(c) => c,
        Err(e) => return usage(e),
    };
    match simulate(&cfg) {
        Ok(out) => {
            for r in &out.reports {
                println!(
                    "{} {} (lhs {:e}, rhs {:e}, slack {:e})",
                    if r.pass { "PASS" } else { "FAIL" },
                    r.name,
                    r.lhs,
                    r.rhs,
                    r.slack
                );
            }
            println!("wrote {}", cfg.output_dir.display());
            if out.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_FAILED)
            }
        }
        Err(e) => runtime(e),
    }
}

fn cmd_check(suite: &str, samples: u64, seed: u64) -> ExitCode {
    let suite: Suite = match suite.parse() {
        Ok(s) => s,
        Err(e) => return usage(e),
    };
    let results = match run_suite(suite, samples, seed) {
        Ok(r) => r,
        Err(e) => return usage(e),
    };
    for r in &results {
        println!(
            "{} {} samples={} failures={} worst_slack={:e}",
            if r.pass { "PASS" } else { "FAIL" },
            r.name,
            r.samples,
            r.failures,
            r.worst_slack
        );
    }
    if results.iter().all(|r| r.pass) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FAILED)
    }
}

fn cmd_sweep(path: PathBuf, axis: &str, values: &[f64]) -> ExitCode {
    let axis: SweepAxis = match axis.parse() {
        Ok(a) => a,
        Err(e) => return usage(e),
    };
    let cfg = match RunConfig::load(&path) {
        Ok(c) => c,
        Err(e) => return usage(e),
    };
    let report = match run_sweep(&cfg, axis, values) {
        Ok(r) => r,
        Err(e) => return runtime(e),
    };
    for p in &report.points {
        match (&p.summary, &p.error) {
            (Some(s), _) => println!(
                "{} {axis}={} logpair2_integral={:e} m2_slope={}",
                if s.passed { "PASS" } else { "FAIL" },
                p.value,
                s.logpair2_integral,
                s.m2_slope.map_or("n/a".to_string(), |v| format!("{v:e}"))
            ),
            (None, Some(e)) => println!("ERROR {axis}={}: {e}", p.value),
            (None, None) => unreachable!("a sweep point has either a summary or an error"),
        }
    }
    for r in &report.aggregate {
        println!(
            "{} {} (lhs {:e}, rhs {:e})",
            if r.pass { "PASS" } else { "FAIL" },
            r.name,
            r.lhs,
            r.rhs
        );
    }
    if let Some(e) = &report.aggregate_error {
        println!("ERROR aggregate: {e}");
    }
    println!("wrote {}", cfg.output_dir.join("sweep.json").display());
    if report.any_runtime_failure() {
        ExitCode::from(EXIT_RUNTIME)
    } else if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FAILED)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match cli.command {
        Command::Simulate { config } => cmd_simulate(config),
        Command::Check { suite, samples, seed } => cmd_check(&suite, samples, seed),
        Command::Sweep { config, axis, values } => cmd_sweep(config, &axis, &values),
    }
}
