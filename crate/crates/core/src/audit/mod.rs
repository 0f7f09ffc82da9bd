//! Meta-game analysis on top of the engine: PNE audits against a library
//! of deviations, the separation-claims verifier, one-round revelation
//! analysis and belief meters.

mod beliefs;
mod claims;
mod deviations;
mod pne;
mod revelation;

pub use beliefs::{belief_trace, BeliefKind, BeliefPoint, BeliefTraceReport};
pub use claims::{verify_claims, ClaimCheck, ClaimsReport, DEFAULT_CLAIMS_TOL};
pub use deviations::{Deviation, DeviationLibrary};
pub use pne::{
    audit_pne, audit_pne_independent, deviation_gain, AuditReport, Baseline, DeviationResult,
    SkippedDeviation, Verdict,
};
pub use revelation::{revelation_analysis, ActionRevelation, RevelationReport};
