//! Ground truth independent of the parametric machinery: an exact rational
//! simplex, a sampling minimizer and a randomized soundness auditor.

mod audit;
mod sampling;
mod simplex;

pub use audit::{soundness_audit, AuditReport, Violation, Witness, EPS_AUDIT};
pub use sampling::{clamped, sample_min, SampleMin, CLAMP};
pub use simplex::{
    is_feasible, lp_min_exact, lp_min_system, rational_from_int, rational_to_f64, to_rational, LpOutcome,
    LpSummary, Rational,
};
