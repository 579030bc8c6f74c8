//! The inequalities and identities of the model, as pure functions of sampled
//! configurations and diagnostic series.

mod barycentric;
mod checks;
pub mod suites;
mod triple;
mod weak_form;

pub use barycentric::{barycentric_delta, BarycentricDelta, MonotoneFn};
pub use checks::{
    check_compacite_moment, check_concentration, check_critical_logmoment, check_critical_run, check_estimegamma,
    check_second_moment, critical_integrals, estimegamma_constant, exact_second_moment_slope, least_squares_slope,
    second_moment_reports, trapezoid, trapezoid_extended, ConcentrationProbe, CriticalIntegrals, InequalityReport,
    SecondMomentReports, SolverTolerance, CCC1_INCREASE_LIMIT, COMPACITE_CONSTANT, LOG_MOMENT_RATIO_LIMIT,
};
pub use triple::{g_eps, g_eps_triple};
pub use weak_form::{WeakFormProbe, WeakFormResiduals, PAIR_SUPPORT};
