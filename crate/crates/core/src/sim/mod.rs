//! Finite-difference simulation of the coupled wave system on an interval or a rectangle.

mod domain;
mod duality;
mod robin;
mod solver;
mod system;

pub use domain::{BoxDomain, MIN_NODES};
pub use duality::{duality_residual, pairing, DualityReport};
pub use robin::{robin_via_neumann, EIGENPAIR_TOL};
pub use solver::{
    energy, final_state, project_mean_zero, simulate, simulate_adjoint, simulate_to, step, SimulationTrace,
};
pub use system::{ControlSignal, State, SystemInstance, TimeGrid, DEFAULT_CFL, SIMILARITY_TOL};
