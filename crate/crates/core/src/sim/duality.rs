use super::solver::SimulationTrace;
use super::system::{ControlSignal, State, SystemInstance};
use crate::error::{Error, Result};

/// Terms of the duality identity
/// `⟨⟨(U', -U), (Φ, Φ')⟩⟩(t) - ⟨⟨·⟩⟩(0) = ∫_0^t ∫_Γ (DH, Φ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualityReport {
    /// Change of the pairing between the first and last snapshot.
    pub pairing_change: f64,
    /// Trapezoid-in-time boundary work `∫∫_Γ (DH, Φ)`.
    pub boundary_work: f64,
    /// `|pairing_change - boundary_work|`.
    pub residual: f64,
}

impl DualityReport {
    /// Residual over `max(|work|, |Δpairing|)`; the absolute residual when both vanish.
    pub fn relative(&self) -> f64 {
        let scale = self.boundary_work.abs().max(self.pairing_change.abs());
        if scale > 0.0 {
            self.residual / scale
        } else {
            self.residual
        }
    }
}

/// `Σ_k ∫ (V_k Φ_k - U_k Ψ_k)`.
pub fn pairing(sys: &SystemInstance, fwd: &State, adj: &State) -> f64 {
    let dom = &sys.domain;
    (0..fwd.n)
        .map(|k| dom.inner(fwd.v_comp(k), adj.u_comp(k)) - dom.inner(fwd.u_comp(k), adj.v_comp(k)))
        .sum()
}

/// Checks the duality identity between a controlled forward run and an adjoint run
/// on the same grid.
pub fn duality_residual(
    sys: &SystemInstance,
    fwd: &SimulationTrace,
    adj: &SimulationTrace,
    control: &ControlSignal,
) -> Result<DualityReport> {
    if fwd.grid != adj.grid || fwd.nodes != adj.nodes || fwd.n != adj.n || fwd.boundary_index != adj.boundary_index {
        return Err(Error::GridMismatch("forward and adjoint traces differ in grid".into()));
    }
    if fwd.n != sys.n() || fwd.nodes != sys.domain.node_count() {
        return Err(Error::GridMismatch("traces do not match the system".into()));
    }
    if control.samples() > 1 && (control.dt - fwd.grid.dt).abs() > 1e-10 * fwd.grid.dt {
        return Err(Error::GridMismatch("control step differs from trace step".into()));
    }
    let pairing_change =
        pairing(sys, fwd.final_state(), adj.final_state()) - pairing(sys, fwd.initial_state(), adj.initial_state());

    let (n, m, nb) = (sys.n(), sys.m(), fwd.boundary_count());
    let d = &sys.coupling.d;
    let gamma = sys.domain.boundary_weights();
    let steps = fwd.grid.steps;
    let mut work = 0.0;
    for step in 0..=steps {
        let Some(h) = control.at(step) else { break };
        let wt = if step == 0 || step == steps { 0.5 } else { 1.0 } * fwd.grid.dt;
        let phi = adj.boundary_at(step);
        let mut s = 0.0;
        for b in 0..nb {
            for k in 0..n {
                let dh: f64 = (0..m).map(|c| d[(k, c)] * h[b * m + c]).sum();
                s += gamma[b] * dh * phi[k * nb + b];
            }
        }
        work += wt * s;
    }
    Ok(DualityReport {
        pairing_change,
        boundary_work: work,
        residual: (pairing_change - work).abs(),
    })
}
