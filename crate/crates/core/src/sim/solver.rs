use super::domain::BoxDomain;
use super::system::{ControlSignal, State, SystemInstance, TimeGrid};
use crate::error::{Error, Result};
use crate::linalg::fmt_f64;

/// Right-hand side of the semi-discrete system
/// `W U'' = -K U - W A U - Γ (B U - D H)`, i.e. the ghost-node Robin closure.
pub(crate) struct Dynamics<'a> {
    domain: &'a BoxDomain,
    n: usize,
    m: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    d: Vec<f64>,
    gains: Vec<f64>,
}

impl<'a> Dynamics<'a> {
    pub(crate) fn new(sys: &'a SystemInstance) -> Self {
        let c = &sys.coupling;
        let row_major = |m: &nalgebra::DMatrix<f64>| -> Vec<f64> {
            (0..m.nrows())
                .flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)]))
                .collect()
        };
        Self {
            domain: &sys.domain,
            n: c.n(),
            m: c.m(),
            a: row_major(&c.a),
            b: row_major(&c.b),
            d: row_major(&c.d),
            gains: sys.domain.boundary_gains(),
        }
    }

    /// `h` holds `nb * m` control values for this instant, or `None` for zero control.
    pub(crate) fn accel(&self, u: &[f64], h: Option<&[f64]>, out: &mut [f64]) {
        let (n, nodes) = (self.n, self.domain.node_count());
        for k in 0..n {
            self.domain
                .neumann_laplacian(&u[k * nodes..(k + 1) * nodes], &mut out[k * nodes..(k + 1) * nodes]);
        }
        for k in 0..n {
            for j in 0..n {
                let akj = self.a[k * n + j];
                if akj == 0.0 {
                    continue;
                }
                let (src, dst) = (j * nodes, k * nodes);
                for i in 0..nodes {
                    out[dst + i] -= akj * u[src + i];
                }
            }
        }
        for (bi, (&node, &g)) in self.domain.boundary_nodes().iter().zip(&self.gains).enumerate() {
            for k in 0..n {
                let mut flux = 0.0;
                for j in 0..n {
                    flux += self.b[k * n + j] * u[j * nodes + node];
                }
                if let Some(h) = h {
                    for c in 0..self.m {
                        flux -= self.d[k * self.m + c] * h[bi * self.m + c];
                    }
                }
                out[k * nodes + node] -= g * flux;
            }
        }
    }
}

/// Kick-drift-kick velocity Verlet with an acceleration callback `accel(u, step, out)`
/// evaluated at the step index. Calls `observe(step, &state)` after every step,
/// including step 0.
pub(crate) fn verlet<F, O>(init: &State, grid: TimeGrid, mut accel: F, mut observe: O) -> Result<State>
where
    F: FnMut(&[f64], usize, &mut [f64]),
    O: FnMut(usize, &State),
{
    let mut s = init.clone();
    let dt = grid.dt;
    let mut a = vec![0.0; s.u.len()];
    accel(&s.u, 0, &mut a);
    observe(0, &s);
    for step in 1..=grid.steps {
        for (v, ai) in s.v.iter_mut().zip(&a) {
            *v += 0.5 * dt * ai;
        }
        for (u, v) in s.u.iter_mut().zip(&s.v) {
            *u += dt * v;
        }
        accel(&s.u, step, &mut a);
        for (v, ai) in s.v.iter_mut().zip(&a) {
            *v += 0.5 * dt * ai;
        }
        s.t = init.t + grid.time(step);
        if !s.is_finite() {
            return Err(Error::BlowUp { step, t: s.t });
        }
        observe(step, &s);
    }
    Ok(s)
}

fn check_state(sys: &SystemInstance, s: &State) -> Result<()> {
    let nodes = sys.domain.node_count();
    if s.n != sys.n() || s.nodes != nodes || s.u.len() != s.n * nodes || s.v.len() != s.n * nodes {
        return Err(Error::dims(
            "state",
            format!("{} components x {nodes} nodes", sys.n()),
            format!("{} components x {} nodes", s.n, s.nodes),
        ));
    }
    if !s.is_finite() {
        return Err(Error::InvalidInput("initial state has non-finite entries".into()));
    }
    Ok(())
}

fn check_control(sys: &SystemInstance, h: &ControlSignal, dt: f64) -> Result<()> {
    let nb = sys.domain.boundary_nodes().len();
    if h.boundary_nodes != nb || h.channels != sys.m() {
        return Err(Error::dims(
            "control",
            format!("{nb} boundary nodes x {} channels", sys.m()),
            format!("{} x {}", h.boundary_nodes, h.channels),
        ));
    }
    if h.samples() > 1 && (h.dt - dt).abs() > 1e-10 * dt {
        return Err(Error::GridMismatch(format!(
            "control step {} differs from simulation step {dt}",
            h.dt
        )));
    }
    Ok(())
}

fn check_cfl(sys: &SystemInstance, dt: f64) -> Result<()> {
    let limit = sys.cfl_limit();
    if dt > limit * (1.0 + 1e-12) {
        return Err(Error::Cfl { dt, limit });
    }
    Ok(())
}

/// One Verlet step with control values `h_now` at `t` and `h_next` at `t + Δt`.
pub fn step(
    state: &State,
    sys: &SystemInstance,
    h_now: Option<&[f64]>,
    h_next: Option<&[f64]>,
    dt: f64,
) -> Result<State> {
    check_state(sys, state)?;
    check_cfl(sys, dt)?;
    let per = sys.domain.boundary_nodes().len() * sys.m();
    for h in [h_now, h_next].into_iter().flatten() {
        if h.len() != per {
            return Err(Error::dims("control slice", per, h.len()));
        }
    }
    let dyn_ = Dynamics::new(sys);
    let grid = TimeGrid { dt, steps: 1 };
    verlet(
        state,
        grid,
        |u, k, out| dyn_.accel(u, if k == 0 { h_now } else { h_next }, out),
        |_, _| {},
    )
}

/// Snapshots, per-step boundary values and energy of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub grid: TimeGrid,
    pub n: usize,
    pub nodes: usize,
    pub boundary_index: Vec<usize>,
    /// Step indices of the snapshots.
    pub snapshot_steps: Vec<usize>,
    pub times: Vec<f64>,
    pub states: Vec<State>,
    /// Energy at each snapshot.
    pub energy: Vec<f64>,
    /// `U` on Γ at every step: entry `(step * n + k) * nb + b`.
    pub boundary_u: Vec<f64>,
}

impl SimulationTrace {
    pub fn final_state(&self) -> &State {
        self.states.last().expect("trace holds the initial state")
    }

    pub fn initial_state(&self) -> &State {
        &self.states[0]
    }

    pub fn boundary_count(&self) -> usize {
        self.boundary_index.len()
    }

    /// `U` on Γ at a step, component-major (`k * nb + b`).
    pub fn boundary_at(&self, step: usize) -> &[f64] {
        let per = self.n * self.boundary_count();
        &self.boundary_u[step * per..(step + 1) * per]
    }

    /// CSV `t, comp, node, U, V` over all snapshots.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,comp,node,U,V\n");
        for s in &self.states {
            let t = fmt_f64(s.t);
            for k in 0..self.n {
                for i in 0..self.nodes {
                    let j = k * self.nodes + i;
                    out.push_str(&format!("{t},{k},{i},{},{}\n", fmt_f64(s.u[j]), fmt_f64(s.v[j])));
                }
            }
        }
        out
    }

    /// CSV `t, E`.
    pub fn energy_csv(&self) -> String {
        let mut out = String::from("t,E\n");
        for (t, e) in self.times.iter().zip(&self.energy) {
            out.push_str(&format!("{},{}\n", fmt_f64(*t), fmt_f64(*e)));
        }
        out
    }
}

/// Runs the controlled system over `grid`, keeping every `snapshot_every`-th state
/// and always the last one. `control` may be shorter than the run; it is zero past its end.
pub fn simulate(
    sys: &SystemInstance,
    init: &State,
    control: Option<&ControlSignal>,
    grid: TimeGrid,
    snapshot_every: usize,
) -> Result<SimulationTrace> {
    check_state(sys, init)?;
    check_cfl(sys, grid.dt)?;
    if let Some(h) = control {
        check_control(sys, h, grid.dt)?;
    }
    let control = control.filter(|_| sys.m() > 0);
    let every = snapshot_every.max(1);
    let dyn_ = Dynamics::new(sys);
    let nb = sys.domain.boundary_nodes().len();
    let bidx = sys.domain.boundary_nodes().to_vec();
    let mut trace = SimulationTrace {
        grid,
        n: sys.n(),
        nodes: sys.domain.node_count(),
        boundary_index: bidx.clone(),
        snapshot_steps: Vec::new(),
        times: Vec::new(),
        states: Vec::new(),
        energy: Vec::new(),
        boundary_u: Vec::with_capacity((grid.steps + 1) * sys.n() * nb),
    };
    let nodes = trace.nodes;
    verlet(
        init,
        grid,
        |u, k, out| dyn_.accel(u, control.and_then(|h| h.at(k)), out),
        |k, s| {
            for comp in 0..s.n {
                trace.boundary_u.extend(bidx.iter().map(|&i| s.u[comp * nodes + i]));
            }
            if k % every == 0 || k == grid.steps {
                trace.snapshot_steps.push(k);
                trace.times.push(s.t);
                trace.energy.push(energy(s, sys));
                trace.states.push(s.clone());
            }
        },
    )?;
    Ok(trace)
}

/// Convenience wrapper: the default CFL step (or the control's step) up to `t_end`.
pub fn simulate_to(
    sys: &SystemInstance,
    init: &State,
    control: Option<&ControlSignal>,
    t_end: f64,
    snapshot_every: usize,
) -> Result<SimulationTrace> {
    let grid = match control {
        Some(h) if h.samples() > 1 => TimeGrid {
            dt: h.dt,
            steps: ((t_end / h.dt) * (1.0 - 1e-12)).ceil() as usize,
        },
        _ => sys.time_grid(t_end, None)?,
    };
    simulate(sys, init, control, grid, snapshot_every)
}

/// Final state only.
pub fn final_state(
    sys: &SystemInstance,
    init: &State,
    control: Option<&ControlSignal>,
    grid: TimeGrid,
) -> Result<State> {
    check_state(sys, init)?;
    check_cfl(sys, grid.dt)?;
    if let Some(h) = control {
        check_control(sys, h, grid.dt)?;
    }
    let control = control.filter(|_| sys.m() > 0);
    let dyn_ = Dynamics::new(sys);
    verlet(
        init,
        grid,
        |u, k, out| dyn_.accel(u, control.and_then(|h| h.at(k)), out),
        |_, _| {},
    )
}

/// The adjoint system `Φ'' - ΔΦ + A^T Φ = 0`, `∂_ν Φ + B^T Φ = 0`.
pub fn simulate_adjoint(
    sys: &SystemInstance,
    init: &State,
    grid: TimeGrid,
    snapshot_every: usize,
) -> Result<SimulationTrace> {
    simulate(&sys.adjoint(), init, None, grid, snapshot_every)
}

/// `E = ½Σ‖V‖² + ½∫|∇U|² + ½∫(AU, U) + ½∫_Γ(BU, U)`, trapezoid quadrature.
pub fn energy(state: &State, sys: &SystemInstance) -> f64 {
    let dom = &sys.domain;
    let (n, nodes) = (state.n, state.nodes);
    let (a, b) = (&sys.coupling.a, &sys.coupling.b);
    let mut e = 0.0;
    for k in 0..n {
        e += dom.inner(state.v_comp(k), state.v_comp(k));
        e += dom.stiffness_form(state.u_comp(k));
        for j in 0..n {
            if a[(k, j)] != 0.0 {
                e += a[(k, j)] * dom.inner(state.u_comp(k), state.u_comp(j));
            }
        }
    }
    for (&i, &g) in dom.boundary_nodes().iter().zip(dom.boundary_weights()) {
        for k in 0..n {
            for j in 0..n {
                e += g * b[(k, j)] * state.u[k * nodes + i] * state.u[j * nodes + i];
            }
        }
    }
    0.5 * e
}

/// Removes the weighted mean of every component of `U` and `V`. Meant for pure
/// Neumann problems (`B = 0`), where constants are a kernel direction.
pub fn project_mean_zero(state: &State, domain: &BoxDomain) -> State {
    let mut s = state.clone();
    let area: f64 = domain.weights().iter().sum();
    let ones = vec![1.0; s.nodes];
    for k in 0..s.n {
        let r = k * s.nodes..(k + 1) * s.nodes;
        let mu = domain.inner(&s.u[r.clone()], &ones) / area;
        let mv = domain.inner(&s.v[r.clone()], &ones) / area;
        s.u[r.clone()].iter_mut().for_each(|x| *x -= mu);
        s.v[r].iter_mut().for_each(|x| *x -= mv);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::CouplingSpec;
    use nalgebra::DMatrix;
    use std::f64::consts::PI;

    fn scalar_sys(a: f64, b: f64, nodes: usize) -> SystemInstance {
        let c = CouplingSpec::new(
            DMatrix::from_element(1, 1, a),
            DMatrix::from_element(1, 1, b),
            DMatrix::identity(1, 1),
        )
        .unwrap();
        SystemInstance::new(c, BoxDomain::interval(1.0, nodes).unwrap()).unwrap()
    }

    #[test]
    fn constants_are_steady_for_neumann() {
        let sys = scalar_sys(0.0, 0.0, 21);
        let init = State::from_fn(&sys.domain, 1, |_, _| 2.5, |_, _| 0.0);
        let grid = sys.time_grid(1.0, None).unwrap();
        let fin = final_state(&sys, &init, None, grid).unwrap();
        assert!(fin.u.iter().all(|&u| u == 2.5));
        assert!(fin.v.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cfl_violation_is_reported() {
        let sys = scalar_sys(0.0, 0.0, 21);
        let init = State::zeros(1, 21);
        let err = step(&init, &sys, None, None, 0.1).unwrap_err();
        assert!(matches!(err, Error::Cfl { .. }));
    }

    #[test]
    fn reversibility() {
        let sys = scalar_sys(0.7, 0.3, 41);
        let init = State::from_fn(&sys.domain, 1, |_, x| (PI * x[0]).sin(), |_, x| x[0] * x[0]);
        let grid = sys.time_grid(2.0, None).unwrap();
        let fwd = final_state(&sys, &init, None, grid).unwrap();
        let back = final_state(&sys, &fwd.with_negated_velocity(), None, grid)
            .unwrap()
            .with_negated_velocity();
        let err = back
            .u
            .iter()
            .zip(&init.u)
            .chain(back.v.iter().zip(&init.v))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-11, "reversal error {err}");
    }

    #[test]
    fn blow_up_is_detected() {
        // Strongly negative boundary coupling with a large CFL factor.
        let sys = scalar_sys(0.0, 0.0, 21).with_cfl(3.0).unwrap();
        let init = State::from_fn(&sys.domain, 1, |_, x| x[0], |_, _| 0.0);
        let grid = TimeGrid {
            dt: sys.cfl_limit(),
            steps: 5000,
        };
        assert!(matches!(
            final_state(&sys, &init, None, grid),
            Err(Error::BlowUp { .. })
        ));
    }

    #[test]
    fn constant_state_energy_is_boundary_form() {
        let sys = scalar_sys(0.0, 1.5, 11);
        let s = State::from_fn(&sys.domain, 1, |_, _| 2.0, |_, _| 0.0);
        // ½ c (∫_Γ B) c = ½ * 2 * (1.5 * 2) * 2
        assert!((energy(&s, &sys) - 6.0).abs() < 1e-12);
        assert_eq!(energy(&State::zeros(1, 11), &sys), 0.0);
    }

    #[test]
    fn mean_zero_projection() {
        let d = BoxDomain::interval(2.0, 17).unwrap();
        let s = State::from_fn(&d, 2, |k, x| x[0] + k as f64, |_, _| 1.0);
        let p = project_mean_zero(&s, &d);
        let ones = vec![1.0; 17];
        for k in 0..2 {
            assert!(d.inner(p.u_comp(k), &ones).abs() < 1e-13);
            assert!(d.inner(p.v_comp(k), &ones).abs() < 1e-13);
        }
    }

    #[test]
    fn trace_csv_headers_and_snapshots() {
        let sys = scalar_sys(0.0, 0.0, 9);
        let init = State::from_fn(&sys.domain, 1, |_, x| x[0], |_, _| 0.0);
        let grid = TimeGrid { dt: 0.01, steps: 10 };
        let tr = simulate(&sys, &init, None, grid, 4).unwrap();
        assert_eq!(tr.snapshot_steps, vec![0, 4, 8, 10]);
        assert_eq!(tr.boundary_u.len(), 11 * 2);
        assert!(tr.to_csv().starts_with("t,comp,node,U,V\n"));
        assert_eq!(tr.energy_csv().lines().count(), 5);
        assert_eq!(&tr.initial_state().u, &init.u);
    }
}
