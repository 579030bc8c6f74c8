use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::initial_data::{InitialMeasure, Regime};
use crate::measures::{DiagnosticSeries, Extended};

/// Frozen constant of the moment-growth envelope
/// `∫|x|^γ f_t ≤ 2∫|x|^γ f_0 + C (M + M²)(1 + t)`.
pub const COMPACITE_CONSTANT: f64 = 4.0;

/// Largest allowed growth factor of the time-integrated log pair moment per
/// halving of ε.
pub const LOG_MOMENT_RATIO_LIMIT: f64 = 1.5;

/// Allowed relative increase of the regularization-term integral from one
/// sweep point to the next smaller ε.
pub const CCC1_INCREASE_LIMIT: f64 = 0.10;

/// Outcome of one inequality `lhs ≤ rhs`; passes when `rhs − lhs ≥ −tolerance`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InequalityReport {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub pass: bool,
    pub tolerance: f64,
    pub context: BTreeMap<String, Value>,
}

impl InequalityReport {
    pub fn new(name: impl Into<String>, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        let slack = rhs - lhs;
        InequalityReport {
            name: name.into(),
            lhs,
            rhs,
            slack,
            pass: slack >= -tolerance,
            tolerance,
            context: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.context.insert(key.to_string(), value.into());
        self
    }

    fn with_series(self, series: &DiagnosticSeries) -> Self {
        let meta = series.meta();
        let t = series.times();
        let mut r = self
            .with("t_start", t.first().copied().unwrap_or(0.0))
            .with("t_end", t.last().copied().unwrap_or(0.0))
            .with("gamma", meta.gamma)
            .with("epsilon", meta.epsilon)
            .with("mass", meta.mass);
        if let Some(seed) = meta.seed {
            r = r.with("seed", seed);
        }
        r
    }
}

/// Trapezoid rule on sampled values.
pub fn trapezoid(t: &[f64], y: &[f64]) -> f64 {
    t.windows(2)
        .zip(y.windows(2))
        .map(|(t, y)| 0.5 * (t[1] - t[0]) * (y[0] + y[1]))
        .sum()
}

/// Trapezoid rule on a column that may hold infinite values.
pub fn trapezoid_extended(t: &[f64], y: &[Extended]) -> Extended {
    if y.iter().any(|v| v.is_infinite()) {
        Extended::Infinite
    } else {
        Extended::Finite(trapezoid(t, &y.iter().map(|v| v.value()).collect::<Vec<_>>()))
    }
}

/// Ordinary least-squares slope and its standard error.
pub fn least_squares_slope(t: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    let n = t.len();
    if n < 3 || y.len() != n {
        return Err(Error::TooFewRows {
            needed: 3,
            have: n.min(y.len()),
        });
    }
    let nf = n as f64;
    let mt = t.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = t.iter().map(|a| (a - mt).powi(2)).sum();
    let sxy: f64 = t.iter().zip(y).map(|(a, b)| (a - mt) * (b - my)).sum();
    if !(sxx > 0.0) {
        return Err(Error::domain("sample times do not vary"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mt;
    let rss: f64 = t.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    Ok((slope, (rss / (nf - 2.0) / sxx).sqrt()))
}

/// `4M / (2γ(γ − M/4π))`, defined for `M < 8π` and `γ ∈ (M/4π, 2)`.
pub fn estimegamma_constant(mass: f64, gamma: f64) -> Result<f64> {
    let floor = mass / (4.0 * PI);
    if !(mass > 0.0 && mass < 8.0 * PI) {
        return Err(Error::Hypothesis(format!(
            "the dissipation bound needs 0 < M < 8π, got M = {mass}"
        )));
    }
    if !(gamma > floor && gamma < 2.0) {
        return Err(Error::Hypothesis(format!(
            "the dissipation bound needs γ ∈ (M/4π, 2) = ({floor}, 2), got {gamma}"
        )));
    }
    Ok(4.0 * mass / (2.0 * gamma * (gamma - floor)))
}

/// How much slack a statistical or discretized check may take.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SolverTolerance {
    /// Deterministic grid run: the given relative tolerance.
    Grid { relative: f64 },
    /// Particle run: relative tolerance plus an absolute Monte Carlo band.
    Particle { relative: f64, band: f64 },
}

impl SolverTolerance {
    fn absolute(self, scale: f64) -> f64 {
        match self {
            SolverTolerance::Grid { relative } => relative * scale.abs(),
            SolverTolerance::Particle { relative, band } => relative * scale.abs() + band,
        }
    }

    fn label(self) -> &'static str {
        match self {
            SolverTolerance::Grid { .. } => "grid",
            SolverTolerance::Particle { .. } => "particles",
        }
    }
}

/// `∫₀ᵀ D_γ dt ≤ C(M, γ) ∫|x|^γ f_T`.
pub fn check_estimegamma(series: &DiagnosticSeries, tolerance: SolverTolerance) -> Result<InequalityReport> {
    let meta = series.meta();
    let c = estimegamma_constant(meta.mass, meta.gamma)?;
    let last = series.last().ok_or(Error::TooFewRows { needed: 1, have: 0 })?;
    let d: Vec<Extended> = series.rows().iter().map(|r| r.d_gamma).collect();
    let lhs = trapezoid_extended(&series.times(), &d).value();
    let rhs = c * last.moment_gamma;
    Ok(InequalityReport::new("estimegamma", lhs, rhs, tolerance.absolute(rhs))
        .with_series(series)
        .with("constant", c)
        .with("solver", tolerance.label()))
}

/// Slope reports for the second moment.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SecondMomentReports {
    pub slope: f64,
    pub slope_stderr: f64,
    /// `4M − M²/2π ≤ slope`.
    pub lower: InequalityReport,
    /// `slope ≤ 4M`.
    pub upper: InequalityReport,
    /// `|slope − 4M(1 − M/8π)| ≤ allowed deviation`.
    pub exact_law: InequalityReport,
}

impl SecondMomentReports {
    pub fn all(&self) -> [&InequalityReport; 3] {
        [&self.lower, &self.upper, &self.exact_law]
    }
}

/// `4M(1 − M/8π)`, the second-moment growth rate of the unregularized flow.
pub fn exact_second_moment_slope(mass: f64) -> f64 {
    4.0 * mass * (1.0 - mass / (8.0 * PI))
}

/// Builds the three slope reports from a measured slope.
///
/// Bracket reports take `band` as absolute tolerance. The exact-law report
/// allows `law_relative · |4M(1 − M/8π)|`, or `law_relative · 4M` when the
/// law vanishes, plus `band`.
pub fn second_moment_reports(slope: f64, stderr: f64, mass: f64, band: f64, law_relative: f64) -> SecondMomentReports {
    let lo = 4.0 * mass - mass * mass / (2.0 * PI);
    let hi = 4.0 * mass;
    let law = exact_second_moment_slope(mass);
    let scale = if law.abs() > 1e-12 * hi { law.abs() } else { hi };
    let allowed = law_relative * scale + band;
    let ctx = |r: InequalityReport| r.with("mass", mass).with("slope", slope).with("slope_stderr", stderr);
    SecondMomentReports {
        slope,
        slope_stderr: stderr,
        lower: ctx(InequalityReport::new("second_moment_lower", lo, slope, band)),
        upper: ctx(InequalityReport::new("second_moment_upper", slope, hi, band)),
        exact_law: ctx(InequalityReport::new(
            "second_moment_exact_law",
            (slope - law).abs(),
            allowed,
            0.0,
        ))
        .with("law", law),
    }
}

/// Least-squares slope of the `m2` column checked against the bracket and
/// the exact law. The band is four standard errors of the fitted slope.
pub fn check_second_moment(series: &DiagnosticSeries, law_relative: f64) -> Result<SecondMomentReports> {
    let (slope, se) = least_squares_slope(&series.times(), &series.column(|r| r.m2))?;
    let mut r = second_moment_reports(slope, se, series.meta().mass, 4.0 * se, law_relative);
    for rep in [&mut r.lower, &mut r.upper, &mut r.exact_law] {
        *rep = rep.clone().with_series(series);
    }
    Ok(r)
}

fn require_critical(f0: &InitialMeasure) -> Result<()> {
    if f0.regime() != Regime::Critical {
        return Err(Error::Hypothesis(format!(
            "critical checks need M = 8π, got M = {}",
            f0.mass()
        )));
    }
    if !f0.is_critically_admissible() {
        return Err(Error::Hypothesis("every atom of f0 must carry mass below 8π".into()));
    }
    Ok(())
}

/// Time integrals of the log pair moment and of the regularization term.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CriticalIntegrals {
    pub epsilon: f64,
    pub logpair2: Extended,
    pub ccc1: Extended,
}

pub fn critical_integrals(series: &DiagnosticSeries) -> CriticalIntegrals {
    let t = series.times();
    let l: Vec<Extended> = series.rows().iter().map(|r| r.logpair2).collect();
    let c: Vec<Extended> = series.rows().iter().map(|r| r.ccc1).collect();
    CriticalIntegrals {
        epsilon: series.meta().epsilon,
        logpair2: trapezoid_extended(&t, &l),
        ccc1: trapezoid_extended(&t, &c),
    }
}

/// Boundedness of the critical log moments along a sweep of decreasing ε.
///
/// Between consecutive sweep points the `logpair2` integral may grow by at
/// most [`LOG_MOMENT_RATIO_LIMIT`], and the regularization-term integral by
/// at most [`CCC1_INCREASE_LIMIT`].
pub fn check_critical_logmoment(f0: &InitialMeasure, sweep: &[&DiagnosticSeries]) -> Result<Vec<InequalityReport>> {
    require_critical(f0)?;
    let mut points: Vec<CriticalIntegrals> = sweep.iter().map(|s| critical_integrals(s)).collect();
    points.sort_by(|a, b| b.epsilon.total_cmp(&a.epsilon));
    let mut reports = Vec::new();
    for w in points.windows(2) {
        let (a, b) = (w[0], w[1]);
        let ratio = b.logpair2.value() / a.logpair2.value();
        reports.push(
            InequalityReport::new("critical_logpair2_ratio", ratio, LOG_MOMENT_RATIO_LIMIT, 0.0)
                .with("epsilon_from", a.epsilon)
                .with("epsilon_to", b.epsilon)
                .with("integral_from", a.logpair2.value())
                .with("integral_to", b.logpair2.value()),
        );
        reports.push(
            InequalityReport::new(
                "critical_ccc1_monotone",
                b.ccc1.value(),
                (1.0 + CCC1_INCREASE_LIMIT) * a.ccc1.value(),
                0.0,
            )
            .with("epsilon_from", a.epsilon)
            .with("epsilon_to", b.epsilon),
        );
    }
    Ok(reports)
}

/// Single-run form of the critical check: the hypotheses, plus finiteness of
/// both integrals.
pub fn check_critical_run(f0: &InitialMeasure, series: &DiagnosticSeries) -> Result<InequalityReport> {
    require_critical(f0)?;
    let c = critical_integrals(series);
    let lhs = c.logpair2.value() + c.ccc1.value();
    Ok(
        InequalityReport::new("critical_log_integrals_finite", lhs, f64::MAX, 0.0)
            .with_series(series)
            .with("logpair2_integral", c.logpair2.value())
            .with("ccc1_integral", c.ccc1.value()),
    )
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConcentrationProbe {
    pub times: Vec<f64>,
    /// `ζ(t) = M − max_ball_mass(t)`.
    pub zeta: Vec<f64>,
    pub running_min: Vec<f64>,
    /// `floor ≤ min_t ζ(t)`.
    pub report: InequalityReport,
}

/// Measured complement mass of the heaviest `ν`-ball. With `floor = None`
/// the report only records the minimum.
pub fn check_concentration(series: &DiagnosticSeries, nu: f64, floor: Option<f64>) -> Result<ConcentrationProbe> {
    let meta = series.meta();
    if nu != meta.nu {
        return Err(Error::domain(format!(
            "series was sampled with ν = {}, not {nu}",
            meta.nu
        )));
    }
    let times = series.times();
    let zeta: Vec<f64> = series
        .rows()
        .iter()
        .map(|r| (r.mass - r.max_ball_mass).max(0.0))
        .collect();
    let mut running_min = Vec::with_capacity(zeta.len());
    let mut m = f64::INFINITY;
    for &z in &zeta {
        m = m.min(z);
        running_min.push(m);
    }
    let report = InequalityReport::new("concentration", floor.unwrap_or(0.0), m, 0.0)
        .with_series(series)
        .with("nu", nu)
        .with("floor_enforced", floor.is_some());
    Ok(ConcentrationProbe {
        times,
        zeta,
        running_min,
        report,
    })
}

/// Moment-growth envelope `∫|x|^γ f_t ≤ 2∫|x|^γ f_0 + C(M + M²)(1 + t)` at
/// the sampled time closest to violation.
pub fn check_compacite_moment(
    series: &DiagnosticSeries,
    f0: &InitialMeasure,
    constant: f64,
) -> Result<InequalityReport> {
    let gamma = series.meta().gamma;
    let m0 = f0.moment_gamma(gamma)?;
    let mass = f0.mass();
    let mut worst: Option<(f64, f64, f64)> = None;
    for r in series.rows() {
        let env = 2.0 * m0 + constant * (mass + mass * mass) * (1.0 + r.t);
        if worst.is_none_or(|(_, lhs, rhs)| env - r.moment_gamma < rhs - lhs) {
            worst = Some((r.t, r.moment_gamma, env));
        }
    }
    let (t, lhs, rhs) = worst.ok_or(Error::TooFewRows { needed: 1, have: 0 })?;
    Ok(InequalityReport::new("compacite_moment", lhs, rhs, 0.0)
        .with_series(series)
        .with("constant", constant)
        .with("t_worst", t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec2;
    use crate::measures::{DiagnosticRow, SeriesMeta};

    fn series(mass: f64, gamma: f64, rows: &[(f64, f64, f64, f64)]) -> DiagnosticSeries {
        let mut s = DiagnosticSeries::new(SeriesMeta {
            gamma,
            epsilon: 0.1,
            nu: 0.5,
            mass,
            seed: None,
        });
        for &(t, m2, d, mg) in rows {
            s.push(DiagnosticRow {
                t,
                mass,
                com: Vec2::ZERO,
                m2,
                s_gamma: 0.0,
                d_gamma: Extended::Finite(d),
                logpair1: Extended::Finite(d),
                logpair2: Extended::Finite(d),
                max_ball_mass: 0.25 * mass,
                g_triple: Extended::Finite(0.0),
                moment_gamma: mg,
                ccc1: Extended::Finite(d),
            })
            .unwrap();
        }
        s
    }

    #[test]
    fn estimegamma_constant_values() {
        let c = estimegamma_constant(4.0 * PI, 1.5).unwrap();
        // independent arithmetic: 16π / (3 · 0.5)
        assert!((c - 32.0 * PI / 3.0).abs() < 1e-13);
        assert!((c - 33.510_321_638_291_124).abs() < 1e-12);
        assert!(matches!(estimegamma_constant(4.0 * PI, 1.0), Err(Error::Hypothesis(_))));
        assert!(matches!(estimegamma_constant(8.0 * PI, 1.9), Err(Error::Hypothesis(_))));
        let near = estimegamma_constant(4.0 * PI, 1.0 + 1e-9).unwrap();
        assert!(near > 1e9);
    }

    #[test]
    fn estimegamma_at_time_zero_passes() {
        let s = series(4.0 * PI, 1.5, &[(0.0, 1.0, 5.0, 2.0)]);
        let r = check_estimegamma(&s, SolverTolerance::Grid { relative: 0.05 }).unwrap();
        assert_eq!(r.lhs, 0.0);
        assert!(r.pass && r.slack > 0.0);
    }

    #[test]
    fn exact_slopes() {
        assert!((exact_second_moment_slope(4.0 * PI) - 8.0 * PI).abs() < 1e-13);
        assert_eq!(exact_second_moment_slope(8.0 * PI), 0.0);
        assert!((exact_second_moment_slope(12.0 * PI) + 24.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn slope_fit_and_bracket() {
        let m = 8.0 * PI;
        let rows: Vec<(f64, f64, f64, f64)> = (0..5)
            .map(|k| (k as f64 * 0.1, 10.0 + 3.0 * k as f64 * 0.1, 0.0, 0.0))
            .collect();
        let r = check_second_moment(&series(m, 1.0, &rows), 0.05).unwrap();
        assert!((r.slope - 3.0).abs() < 1e-12);
        assert!(r.slope_stderr < 1e-12);
        assert!(r.lower.pass && r.upper.pass);
        // law is 0 at the critical mass; 3 ≤ 0.05 · 32π
        assert!(r.exact_law.pass);
        assert!(matches!(
            check_second_moment(&series(m, 1.0, &rows[..2]), 0.05),
            Err(Error::TooFewRows { .. })
        ));
    }

    #[test]
    fn trapezoid_is_exact_for_lines() {
        let t = [0.0, 0.5, 2.0];
        let y: Vec<f64> = t.iter().map(|v| 3.0 * v + 1.0).collect();
        assert!((trapezoid(&t, &y) - 8.0).abs() < 1e-15);
        assert!(
            trapezoid_extended(&t, &[Extended::Finite(0.0), Extended::Infinite, Extended::Finite(0.0)]).is_infinite()
        );
    }

    #[test]
    fn critical_guards() {
        let single = InitialMeasure::atom(Vec2::ZERO, 8.0 * PI).unwrap();
        let s = series(8.0 * PI, 1.0, &[(0.0, 1.0, 1.0, 1.0), (1.0, 1.0, 1.0, 1.0)]);
        assert!(matches!(check_critical_run(&single, &s), Err(Error::Hypothesis(_))));
        let sub = InitialMeasure::atom(Vec2::ZERO, 4.0 * PI).unwrap();
        assert!(matches!(
            check_critical_logmoment(&sub, &[&s]),
            Err(Error::Hypothesis(_))
        ));
        let pair = InitialMeasure::new(
            vec![
                crate::initial_data::Atom {
                    position: Vec2::new(-5.0, 0.0),
                    mass: 4.0 * PI,
                },
                crate::initial_data::Atom {
                    position: Vec2::new(5.0, 0.0),
                    mass: 4.0 * PI,
                },
            ],
            vec![],
        )
        .unwrap();
        assert!(check_critical_run(&pair, &s).unwrap().pass);
    }

    #[test]
    fn concentration_probe() {
        let s = series(2.0, 1.0, &[(0.0, 1.0, 1.0, 1.0), (1.0, 1.0, 1.0, 1.0)]);
        let p = check_concentration(&s, 0.5, Some(1.0)).unwrap();
        assert_eq!(p.zeta, vec![1.5, 1.5]);
        assert!(p.report.pass);
        assert!(check_concentration(&s, 0.4, None).is_err());
    }

    #[test]
    fn compacite_envelope() {
        let f0 = InitialMeasure::gaussian(Vec2::ZERO, 1.0, 1.0).unwrap();
        let m0 = f0.moment_gamma(2.0).unwrap();
        // pure diffusion: m2 grows at 4M
        let rows: Vec<_> = (0..4)
            .map(|k| (k as f64, m0 + 4.0 * k as f64, 0.0, m0 + 4.0 * k as f64))
            .collect();
        let s = series(1.0, 2.0 - 1e-12, &rows);
        assert!(check_compacite_moment(&s, &f0, 4.0 / 2.0).unwrap().pass);
        assert!(!check_compacite_moment(&s, &f0, 0.0).unwrap().pass);
    }

    #[test]
    fn reports_serialize_with_fixed_keys() {
        let r = InequalityReport::new("x", 1.0, 2.0, 0.0).with("b", 2.0).with("a", 1.0);
        let j = serde_json::to_string(&r).unwrap();
        assert_eq!(
            j,
            r#"{"name":"x","lhs":1.0,"rhs":2.0,"slack":1.0,"pass":true,"tolerance":0.0,"context":{"a":1.0,"b":2.0}}"#
        );
    }
}
