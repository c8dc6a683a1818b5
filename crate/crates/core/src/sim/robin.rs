use nalgebra::{DMatrix, DVector};

use super::solver::{energy, verlet, SimulationTrace};
use super::system::{ControlSignal, State, SystemInstance, TimeGrid};
use crate::algebra::CouplingSpec;
use crate::error::{Error, Result};
use crate::linalg::{frobenius, inverse, real_eigen};

/// Tolerance on `‖B^T e - λ e‖ / (‖B‖ ‖e‖)`.
pub const EIGENPAIR_TOL: f64 = 1e-9;

/// Solves for `φ = (e, U)` on an interval by turning the Robin condition into a
/// Neumann one: with `B^T e = λ e` and `h(x) = x²/L - x` (so `h' = ν` on Γ),
/// `ψ = e^{λh} φ` satisfies a wave equation with first-order term
/// `-2λ h' ψ_x` and Neumann data `∂_ν ψ = (e, DH)`.
///
/// For `N > 1` the whole system is rewritten in an eigenbasis `Q` of `B^T`
/// (`φ = Q^T U`), every component transformed with its own eigenvalue, and `(e, U)`
/// recovered at the end. The returned trace has one component; its energy column
/// is that of a free scalar Robin wave with coefficient `λ`.
pub fn robin_via_neumann(
    sys: &SystemInstance,
    eigenpair: (f64, &DVector<f64>),
    init: &State,
    control: Option<&ControlSignal>,
    grid: TimeGrid,
    snapshot_every: usize,
) -> Result<SimulationTrace> {
    let dom = &sys.domain;
    if dom.dim() != 1 {
        return Err(Error::InvalidInput(
            "the Robin-to-Neumann transform is implemented in 1D only".into(),
        ));
    }
    let n = sys.n();
    let (lambda, e) = eigenpair;
    if e.len() != n {
        return Err(Error::dims("eigenvector", n, e.len()));
    }
    let bt = sys.coupling.b.transpose();
    let scale = frobenius(&bt).max(1.0) * e.norm();
    if e.norm() == 0.0 || (&bt * e - e * lambda).norm() > EIGENPAIR_TOL * scale {
        return Err(Error::InvalidInput(format!(
            "(λ = {lambda}, e) is not an eigenpair of B^T"
        )));
    }
    if init.n != n || init.nodes != dom.node_count() {
        return Err(Error::dims(
            "state",
            format!("{n} x {}", dom.node_count()),
            format!("{} x {}", init.n, init.nodes),
        ));
    }
    if grid.dt > sys.cfl_limit() * (1.0 + 1e-12) {
        return Err(Error::Cfl {
            dt: grid.dt,
            limit: sys.cfl_limit(),
        });
    }
    let m = sys.m();
    let nb = dom.boundary_nodes().len();
    if let Some(h) = control {
        if h.boundary_nodes != nb || h.channels != m {
            return Err(Error::dims(
                "control",
                format!("{nb} x {m}"),
                format!("{} x {}", h.boundary_nodes, h.channels),
            ));
        }
    }

    let is_diag = (0..n).all(|i| (0..n).all(|j| i == j || bt[(i, j)] == 0.0));
    let (q, lams) = if is_diag {
        (DMatrix::identity(n, n), (0..n).map(|i| bt[(i, i)]).collect::<Vec<_>>())
    } else {
        real_eigen(&bt, EIGENPAIR_TOL)?
    };
    let q_inv = inverse(&q, "eigenvector matrix of B^T")?;
    let c = q.transpose() * &sys.coupling.a * q_inv.transpose();
    let g = q.transpose() * &sys.coupling.d;
    let proj = &q_inv * e;

    let nodes = dom.node_count();
    let dx = dom.spacing(0);
    let len = dom.lengths()[0];
    let xs: Vec<f64> = (0..nodes).map(|i| i as f64 * dx).collect();
    let hfun: Vec<f64> = xs.iter().map(|x| x * x / len - x).collect();
    let hp: Vec<f64> = xs.iter().map(|x| 2.0 * x / len - 1.0).collect();
    let hpp = 2.0 / len;
    let gains = dom.boundary_gains();
    let bnodes = dom.boundary_nodes().to_vec();

    // Coupling weights e^{(λ_j - λ_k) h(x_i)}; exactly one when the eigenvalues agree.
    let weight = |j: usize, k: usize, i: usize| -> f64 {
        let dl = lams[j] - lams[k];
        if dl == 0.0 {
            1.0
        } else {
            (dl * hfun[i]).exp()
        }
    };

    let psi0 = {
        let phi = init.map_components(&q.transpose())?;
        let mut s = phi.clone();
        for j in 0..n {
            if lams[j] != 0.0 {
                for i in 0..nodes {
                    let f = (lams[j] * hfun[i]).exp();
                    s.u[j * nodes + i] *= f;
                    s.v[j * nodes + i] *= f;
                }
            }
        }
        s
    };

    let accel = |psi: &[f64], step: usize, out: &mut [f64]| {
        let hslice = control.filter(|_| m > 0).and_then(|h| h.at(step));
        for j in 0..n {
            dom.neumann_laplacian(&psi[j * nodes..(j + 1) * nodes], &mut out[j * nodes..(j + 1) * nodes]);
        }
        for j in 0..n {
            for k in 0..n {
                let cjk = c[(j, k)];
                if cjk == 0.0 {
                    continue;
                }
                for i in 0..nodes {
                    out[j * nodes + i] -= cjk * weight(j, k, i) * psi[k * nodes + i];
                }
            }
        }
        for (bi, (&node, &gain)) in bnodes.iter().zip(&gains).enumerate() {
            for j in 0..n {
                let mut flux = 0.0;
                if let Some(h) = hslice {
                    for ch in 0..m {
                        flux -= g[(j, ch)] * h[bi * m + ch];
                    }
                }
                out[j * nodes + node] -= gain * flux;
            }
        }
        for j in 0..n {
            let lam = lams[j];
            if lam == 0.0 {
                continue;
            }
            let row = &psi[j * nodes..(j + 1) * nodes];
            let flux_at =
                |bi: usize| -> f64 { hslice.map_or(0.0, |h| (0..m).map(|ch| g[(j, ch)] * h[bi * m + ch]).sum()) };
            for i in 0..nodes {
                // ψ_x from the ghost value at the ends: ∂_ν ψ = flux, ν = ∓1.
                let psi_x = if i == 0 {
                    -flux_at(0)
                } else if i == nodes - 1 {
                    flux_at(1)
                } else {
                    (row[i + 1] - row[i - 1]) / (2.0 * dx)
                };
                out[j * nodes + i] -= 2.0 * lam * hp[i] * psi_x + lam * (hpp - lam * hp[i] * hp[i]) * row[i];
            }
        }
    };

    let scalar = SystemInstance::new(
        CouplingSpec::new(
            DMatrix::zeros(1, 1),
            DMatrix::from_element(1, 1, lambda),
            DMatrix::zeros(1, 0),
        )?,
        dom.clone(),
    )?;
    let every = snapshot_every.max(1);
    let mut trace = SimulationTrace {
        grid,
        n: 1,
        nodes,
        boundary_index: bnodes.clone(),
        snapshot_steps: Vec::new(),
        times: Vec::new(),
        states: Vec::new(),
        energy: Vec::new(),
        boundary_u: Vec::with_capacity((grid.steps + 1) * nb),
    };
    let recover = |s: &State| -> State {
        let mut out = State::zeros(1, nodes);
        out.t = s.t;
        for j in 0..n {
            let pj = proj[j];
            if pj == 0.0 {
                continue;
            }
            for i in 0..nodes {
                let f = if lams[j] == 0.0 {
                    1.0
                } else {
                    (-lams[j] * hfun[i]).exp()
                };
                out.u[i] += pj * (f * s.u[j * nodes + i]);
                out.v[i] += pj * (f * s.v[j * nodes + i]);
            }
        }
        out
    };
    verlet(&psi0, grid, accel, |k, s| {
        let phi = recover(s);
        trace.boundary_u.extend(bnodes.iter().map(|&i| phi.u[i]));
        if k % every == 0 || k == grid.steps {
            trace.snapshot_steps.push(k);
            trace.times.push(phi.t);
            trace.energy.push(energy(&phi, &scalar));
            trace.states.push(phi);
        }
    })?;
    Ok(trace)
}
