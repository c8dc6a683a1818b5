//! Synchronization checks, extraction of the synchronizable state and the
//! control-authority refinement probe.

mod probe;
mod report;
mod sync;

pub use probe::{noncontrollability_probe, sin2_bump, ProbeConfig, ProbeLevel, ProbeReport};
pub use report::VerificationReport;
pub use sync::{
    compare_state_independence, decoupled_coefficients, estimate_check, extract_sync_state, solve_decoupled_states,
    verify_synchronization, EstimatePoint, EstimateReport, IndependenceReport, DEFAULT_SYNC_TOL,
};
