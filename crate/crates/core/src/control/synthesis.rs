use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use super::basis::ControlBasis;
use super::modal::ModalCoordinates;
use super::operator::{assemble_control_operator, free_final_state, ControlOperator};
use crate::algebra::{
    build_sync_matrix, rank_condition, reduce_coupling, CouplingSpec, GroupPartition, ReducedSystem, SyncMatrix,
};
use crate::error::{Error, Result};
use crate::linalg::{self, RANK_RTOL};
use crate::sim::{final_state, simulate, ControlSignal, SimulationTrace, State, SystemInstance, TimeGrid};

pub const DEFAULT_EPSILON: f64 = 1e-8;
pub const DEFAULT_COMPAT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Solver {
    /// Dense Cholesky factorization of the regularized Gram matrix.
    Cholesky,
    /// Conjugate gradient on the same system, relative tolerance `tol`.
    Cg { max_iter: usize, tol: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisConfig {
    /// Control time `T`; `None` means four domain diameters.
    pub horizon: Option<f64>,
    /// Controls live on `[0, support_fraction * T]`.
    pub support_fraction: f64,
    /// Interior time knots of the hat basis; `None` picks `Δτ ≈ Δx`.
    pub knots: Option<usize>,
    /// Tychonoff weight relative to `σ_max²`.
    pub epsilon: f64,
    pub solver: Solver,
    /// Time step; `None` uses the CFL limit.
    pub dt: Option<f64>,
    /// Fail with a synthesis error when `residual_final / ‖free state‖` exceeds this.
    pub residual_threshold: Option<f64>,
    /// Tolerance for compatibility checks in the synchronization path.
    pub compat_tol: f64,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            horizon: None,
            support_fraction: 1.0,
            knots: None,
            epsilon: DEFAULT_EPSILON,
            solver: Solver::Cholesky,
            dt: None,
            residual_threshold: None,
            compat_tol: DEFAULT_COMPAT_TOL,
        }
    }
}

impl SynthesisConfig {
    pub fn horizon_for(&self, sys: &SystemInstance) -> f64 {
        self.horizon.unwrap_or(4.0 * sys.domain.diameter())
    }
}

#[derive(Debug, Clone)]
pub struct SynthesisResult {
    pub control: ControlSignal,
    pub coefficients: DVector<f64>,
    /// Norm of the final state reached with the control (modal `H¹ x L²` norm).
    pub residual_final: f64,
    /// Norm of the final state reached without control.
    pub free_norm: f64,
    /// Euclidean norm of the coefficients, close to the `L²(0, T; L²(Γ))` norm
    /// of the control by the basis scaling.
    pub control_norm: f64,
    /// Singular values of the control operator, descending.
    pub gramian_spectrum: Vec<f64>,
    pub horizon: f64,
    pub grid: TimeGrid,
    /// CG relative residuals, empty for the direct solver.
    pub solver_history: Vec<f64>,
}

impl SynthesisResult {
    /// `residual_final / free_norm`, or the absolute residual when nothing needed control.
    pub fn relative_residual(&self) -> f64 {
        if self.free_norm > 0.0 {
            self.residual_final / self.free_norm
        } else {
            self.residual_final
        }
    }
}

/// Factorized regularized Gram system of an operator.
#[derive(Debug, Clone)]
struct GramSolver {
    /// `true` when the Gram matrix is `Λ Λ^T` (rows ≤ cols).
    row_side: bool,
    gram: DMatrix<f64>,
    mu: f64,
    chol: Option<Cholesky<f64, Dyn>>,
    spectrum: Vec<f64>,
}

impl GramSolver {
    fn new(op: &DMatrix<f64>, epsilon: f64, solver: Solver) -> Result<Self> {
        let row_side = op.nrows() <= op.ncols();
        let gram = if row_side {
            op * op.transpose()
        } else {
            op.transpose() * op
        };
        let mut eig: Vec<f64> = SymmetricEigen::new(gram.clone())
            .eigenvalues
            .iter()
            .map(|l| l.max(0.0))
            .collect();
        eig.sort_by(|a, b| b.total_cmp(a));
        let smax2 = eig.first().copied().unwrap_or(0.0);
        let spectrum = eig.iter().map(|l| l.sqrt()).collect();
        let mu = epsilon * smax2;
        let chol = match solver {
            Solver::Cholesky => {
                let mut reg = gram.clone();
                for i in 0..reg.nrows() {
                    reg[(i, i)] += if mu > 0.0 { mu } else { f64::MIN_POSITIVE };
                }
                Some(Cholesky::new(reg).ok_or_else(|| Error::NotSpd("regularized Gram matrix".into()))?)
            }
            Solver::Cg { .. } => None,
        };
        Ok(Self {
            row_side,
            gram,
            mu,
            chol,
            spectrum,
        })
    }

    fn solve_system(&self, rhs: &DVector<f64>, solver: Solver) -> Result<(DVector<f64>, Vec<f64>)> {
        match (solver, &self.chol) {
            (Solver::Cholesky, Some(ch)) => Ok((ch.solve(rhs), Vec::new())),
            (Solver::Cg { max_iter, tol }, _) => conjugate_gradient(&self.gram, self.mu, rhs, max_iter, tol),
            (Solver::Cholesky, None) => unreachable!("factorization is built for the direct solver"),
        }
    }

    /// Minimizer of `‖c‖² + μ⁻¹ ‖Λ c - t‖²`.
    fn coefficients(
        &self,
        op: &DMatrix<f64>,
        target: &DVector<f64>,
        solver: Solver,
    ) -> Result<(DVector<f64>, Vec<f64>)> {
        if target.iter().all(|&x| x == 0.0) {
            return Ok((DVector::zeros(op.ncols()), Vec::new()));
        }
        if self.row_side {
            let (y, h) = self.solve_system(target, solver)?;
            Ok((op.tr_mul(&y), h))
        } else {
            self.solve_system(&op.tr_mul(target), solver)
        }
    }
}

/// CG on `(G + μ I) x = b`.
fn conjugate_gradient(
    g: &DMatrix<f64>,
    mu: f64,
    b: &DVector<f64>,
    max_iter: usize,
    tol: f64,
) -> Result<(DVector<f64>, Vec<f64>)> {
    let apply = |x: &DVector<f64>| g * x + x * mu;
    let bnorm = b.norm();
    let mut x = DVector::zeros(b.len());
    let mut history = Vec::new();
    if bnorm == 0.0 {
        return Ok((x, history));
    }
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rr = r.dot(&r);
    for _ in 0..max_iter {
        let ap = apply(&p);
        let alpha = rr / p.dot(&ap);
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &ap, 1.0);
        let rr_new = r.dot(&r);
        history.push(rr_new.sqrt() / bnorm);
        if rr_new.sqrt() <= tol * bnorm {
            return Ok((x, history));
        }
        p = &r + &p * (rr_new / rr);
        rr = rr_new;
    }
    Err(Error::CgNotConverged {
        iterations: max_iter,
        history,
    })
}

/// Solves for the coefficients steering the final state to `target` (usually the
/// negated free final state). `residual_final` here is `‖Λ c - target‖`.
pub fn solve_null_control(
    op: &ControlOperator,
    target: &DVector<f64>,
    epsilon: f64,
    solver: Solver,
) -> Result<SynthesisResult> {
    let gs = GramSolver::new(&op.matrix, epsilon, solver)?;
    finish(op, &gs, target, solver)
}

fn finish(op: &ControlOperator, gs: &GramSolver, target: &DVector<f64>, solver: Solver) -> Result<SynthesisResult> {
    if target.len() != op.rows() {
        return Err(Error::dims("target", op.rows(), target.len()));
    }
    let (c, history) = gs.coefficients(&op.matrix, target, solver)?;
    let control = op.basis.signal(c.as_slice(), op.grid)?;
    Ok(SynthesisResult {
        residual_final: (op.apply(&c) - target).norm(),
        free_norm: target.norm(),
        control_norm: c.norm(),
        coefficients: c,
        control,
        gramian_spectrum: gs.spectrum.clone(),
        horizon: op.grid.t_end(),
        grid: op.grid,
        solver_history: history,
    })
}

/// Null-control synthesizer for one system: the operator is assembled and factorized
/// once, then reused for any number of initial data.
#[derive(Debug, Clone)]
pub struct NullControlSynthesizer {
    pub sys: SystemInstance,
    pub config: SynthesisConfig,
    pub operator: ControlOperator,
    gram: GramSolver,
}

impl NullControlSynthesizer {
    pub fn new(sys: &SystemInstance, config: &SynthesisConfig) -> Result<Self> {
        let horizon = config.horizon_for(sys);
        if !(config.support_fraction > 0.0 && config.support_fraction <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "support_fraction must lie in (0, 1], got {}",
                config.support_fraction
            )));
        }
        let grid = sys.time_grid(horizon, config.dt)?;
        let coords = Arc::new(ModalCoordinates::new(&sys.domain, sys.n()));
        let basis =
            ControlBasis::with_resolution(&sys.domain, sys.m(), config.support_fraction * horizon, config.knots)?;
        let operator = assemble_control_operator(sys, &basis, grid, coords)?;
        let gram = GramSolver::new(&operator.matrix, config.epsilon, config.solver)?;
        Ok(Self {
            sys: sys.clone(),
            config: config.clone(),
            operator,
            gram,
        })
    }

    pub fn grid(&self) -> TimeGrid {
        self.operator.grid
    }

    pub fn coords(&self) -> &ModalCoordinates {
        &self.operator.coords
    }

    /// Synthesizes a control for `init` and re-simulates to measure `residual_final`.
    pub fn solve(&self, init: &State) -> Result<SynthesisResult> {
        let grid = self.grid();
        let coords = self.coords();
        let free = free_final_state(&self.sys, init, grid, coords)?;
        let mut res = finish(&self.operator, &self.gram, &(-&free), self.config.solver)?;
        let fin = final_state(&self.sys, init, Some(&res.control), grid)?;
        res.residual_final = coords.norm(&fin)?;
        if let Some(th) = self.config.residual_threshold {
            if res.relative_residual() > th {
                return Err(Error::ResidualTooLarge {
                    residual: res.relative_residual(),
                    threshold: th,
                });
            }
        }
        Ok(res)
    }
}

/// Min-norm control driving `(U, U')(T)` of `sys` to zero.
pub fn synthesize_null_control(
    sys: &SystemInstance,
    init: &State,
    config: &SynthesisConfig,
) -> Result<SynthesisResult> {
    NullControlSynthesizer::new(sys, config)?.solve(init)
}

/// Synthesizer for synchronization by groups: works on the reduced system for
/// `W = C_p U`, and the resulting `H` is applied unchanged to the full system.
#[derive(Debug, Clone)]
pub struct SyncSynthesizer {
    pub full: SystemInstance,
    pub sync: SyncMatrix,
    pub reduced: ReducedSystem,
    pub inner: NullControlSynthesizer,
}

impl SyncSynthesizer {
    pub fn new(full: &SystemInstance, partition: &GroupPartition, config: &SynthesisConfig) -> Result<Self> {
        if partition.n() != full.n() {
            return Err(Error::dims("partition size", full.n(), partition.n()));
        }
        let sync = build_sync_matrix(partition);
        let reduced = reduce_coupling(&full.coupling, &sync, config.compat_tol)?;
        let rank = rank_condition(&sync, &full.coupling.d, RANK_RTOL)?;
        if !rank.satisfies {
            return Err(Error::RankCondition {
                rank: rank.rank_cpd,
                required: rank.required,
            });
        }
        let red_coupling =
            CouplingSpec::with_any_rank(reduced.a_red.clone(), reduced.b_red.clone(), reduced.d_red.clone())?;
        let red_sys = SystemInstance::new(red_coupling, full.domain.clone())?.with_cfl(full.cfl_factor)?;
        // Keep the full system's horizon (the reduced system lives on the same domain).
        let mut cfg = config.clone();
        cfg.horizon = Some(config.horizon_for(full));
        let inner = NullControlSynthesizer::new(&red_sys, &cfg)?;
        Ok(Self {
            full: full.clone(),
            sync,
            reduced,
            inner,
        })
    }

    /// `(C_p U_0, C_p U_1)`.
    pub fn reduce_state(&self, init: &State) -> Result<State> {
        init.map_components(self.sync.matrix())
    }

    pub fn solve(&self, init: &State) -> Result<SynthesisResult> {
        self.inner.solve(&self.reduce_state(init)?)
    }
}

pub fn synthesize_sync_control(
    full: &SystemInstance,
    partition: &GroupPartition,
    init: &State,
    config: &SynthesisConfig,
) -> Result<SynthesisResult> {
    SyncSynthesizer::new(full, partition, config)?.solve(init)
}

/// `H = Ĥ + D^{-1} B U|_Γ`, with `U` on Γ read from `trace` at every step.
pub fn neumann_to_robin_lift(
    h_neumann: &ControlSignal,
    trace: &SimulationTrace,
    d: &DMatrix<f64>,
    b: &DMatrix<f64>,
) -> Result<ControlSignal> {
    let n = trace.n;
    if d.shape() != (n, n) || b.shape() != (n, n) {
        return Err(Error::dims(
            "D and B",
            format!("{n}x{n}"),
            format!("{:?}, {:?}", d.shape(), b.shape()),
        ));
    }
    let nb = trace.boundary_count();
    if h_neumann.channels != n || h_neumann.boundary_nodes != nb {
        return Err(Error::dims(
            "Neumann control",
            format!("{nb} x {n}"),
            format!("{} x {}", h_neumann.boundary_nodes, h_neumann.channels),
        ));
    }
    let dinv_b = linalg::inverse(d, "control matrix D")? * b;
    let samples = trace.grid.steps + 1;
    let mut h = ControlSignal::zeros(trace.grid.dt, samples, nb, n);
    for step in 0..samples {
        let ub = trace.boundary_at(step);
        for bi in 0..nb {
            for k in 0..n {
                let lift: f64 = (0..n).map(|j| dinv_b[(k, j)] * ub[j * nb + bi]).sum();
                h.values[(step * nb + bi) * n + k] = h_neumann.get(step, bi, k) + lift;
            }
        }
    }
    Ok(h)
}

/// Forward run of `sys` with `control` over `[0, t_end]` on the synthesis step.
pub fn run_with_control(
    sys: &SystemInstance,
    init: &State,
    control: &ControlSignal,
    t_end: f64,
    snapshot_every: usize,
) -> Result<SimulationTrace> {
    let steps = ((t_end / control.dt) * (1.0 - 1e-12)).ceil() as usize;
    let grid = TimeGrid { dt: control.dt, steps };
    simulate(sys, init, Some(control), grid, snapshot_every)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::BoxDomain;

    fn scalar(nodes: usize) -> SystemInstance {
        let c = CouplingSpec::new(
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::zeros(1, 1),
            DMatrix::identity(1, 1),
        )
        .unwrap();
        SystemInstance::new(c, BoxDomain::interval(1.0, nodes).unwrap()).unwrap()
    }

    fn bump(x: f64) -> f64 {
        if x <= 0.2 || x >= 0.8 {
            0.0
        } else {
            (std::f64::consts::PI * (x - 0.2) / 0.6).sin().powi(2)
        }
    }

    #[test]
    fn zero_target_gives_zero_control() {
        let sys = scalar(20);
        let s = NullControlSynthesizer::new(&sys, &SynthesisConfig::default()).unwrap();
        let res = s.solve(&State::zeros(1, 20)).unwrap();
        assert!(res.coefficients.iter().all(|&c| c == 0.0));
        assert_eq!(res.residual_final, 0.0);
    }

    #[test]
    fn scalar_null_control_small_grid() {
        let sys = scalar(30);
        let init = State::from_fn(&sys.domain, 1, |_, x| bump(x[0]), |_, _| 0.0);
        let res = synthesize_null_control(&sys, &init, &SynthesisConfig::default()).unwrap();
        assert!(res.free_norm > 0.1);
        assert!(
            res.relative_residual() < 1e-3,
            "relative residual {}",
            res.relative_residual()
        );
    }

    #[test]
    fn cg_matches_cholesky_and_reports_failure() {
        let sys = scalar(16);
        let init = State::from_fn(&sys.domain, 1, |_, x| bump(x[0]), |_, _| 0.0);
        let cfg = SynthesisConfig {
            epsilon: 1e-4,
            ..Default::default()
        };
        let direct = synthesize_null_control(&sys, &init, &cfg).unwrap();
        let cg_cfg = SynthesisConfig {
            solver: Solver::Cg {
                max_iter: 5000,
                tol: 1e-13,
            },
            ..cfg.clone()
        };
        let cg = synthesize_null_control(&sys, &init, &cg_cfg).unwrap();
        assert!((&cg.coefficients - &direct.coefficients).norm() <= 1e-6 * direct.coefficients.norm());
        let bad = SynthesisConfig {
            solver: Solver::Cg {
                max_iter: 2,
                tol: 1e-14,
            },
            ..cfg
        };
        match synthesize_null_control(&sys, &init, &bad) {
            Err(Error::CgNotConverged { iterations, history }) => {
                assert_eq!(iterations, 2);
                assert_eq!(history.len(), 2);
            }
            other => panic!("expected CG failure, got {other:?}"),
        }
    }

    #[test]
    fn sync_rejects_rank_and_compatibility_failures() {
        let dom = BoxDomain::interval(1.0, 12).unwrap();
        let part = GroupPartition::new(vec![0, 3]).unwrap();
        let one_col = DMatrix::from_row_slice(3, 1, &[1.0, -1.0, 0.0]);
        let c = CouplingSpec::new(DMatrix::zeros(3, 3), DMatrix::zeros(3, 3), one_col).unwrap();
        let sys = SystemInstance::new(c, dom.clone()).unwrap();
        assert!(matches!(
            SyncSynthesizer::new(&sys, &part, &SynthesisConfig::default()),
            Err(Error::RankCondition { rank: 1, required: 2 })
        ));
        let part2 = GroupPartition::new(vec![0, 2]).unwrap();
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]);
        let c = CouplingSpec::new(a, DMatrix::zeros(2, 2), DMatrix::from_row_slice(2, 1, &[1.0, -1.0])).unwrap();
        let sys = SystemInstance::new(c, dom).unwrap();
        assert!(matches!(
            SyncSynthesizer::new(&sys, &part2, &SynthesisConfig::default()),
            Err(Error::Incompatible { .. })
        ));
    }

    #[test]
    fn lift_adds_boundary_trace() {
        let c = CouplingSpec::new(DMatrix::zeros(1, 1), DMatrix::identity(1, 1), DMatrix::identity(1, 1)).unwrap();
        let sys = SystemInstance::new(c, BoxDomain::interval(1.0, 10).unwrap()).unwrap();
        let init = State::from_fn(&sys.domain, 1, |_, x| x[0], |_, _| 0.0);
        let grid = sys.time_grid(0.5, None).unwrap();
        let tr = simulate(&sys, &init, None, grid, 1).unwrap();
        let hhat = ControlSignal::from_fn(grid.dt, grid.steps + 1, 2, 1, |t, _, _| t);
        let h = neumann_to_robin_lift(&hhat, &tr, &DMatrix::identity(1, 1), &DMatrix::identity(1, 1)).unwrap();
        for step in 0..=grid.steps {
            for b in 0..2 {
                let expected = hhat.get(step, b, 0) + tr.boundary_at(step)[b];
                assert!((h.get(step, b, 0) - expected).abs() < 1e-15);
            }
        }
        let zero_b = neumann_to_robin_lift(&hhat, &tr, &DMatrix::identity(1, 1), &DMatrix::zeros(1, 1)).unwrap();
        assert_eq!(zero_b.values, hhat.values);
        assert!(neumann_to_robin_lift(&hhat, &tr, &DMatrix::zeros(1, 1), &DMatrix::identity(1, 1)).is_err());
    }
}
