//! Discrete min-norm boundary control: hat basis, control-to-final-state operator,
//! regularized solve and the Neumann-to-Robin lift.

mod basis;
mod modal;
mod operator;
mod synthesis;

pub use basis::ControlBasis;
pub use modal::ModalCoordinates;
pub use operator::{
    assemble_control_operator, free_final_state, gramian_spectrum, restricted_spectrum, ControlOperator,
};
pub use synthesis::{
    neumann_to_robin_lift, run_with_control, solve_null_control, synthesize_null_control, synthesize_sync_control,
    NullControlSynthesizer, Solver, SyncSynthesizer, SynthesisConfig, SynthesisResult, DEFAULT_COMPAT_TOL,
    DEFAULT_EPSILON,
};
