use nalgebra::DMatrix;

use super::report::VerificationReport;
use crate::algebra::{
    biorthogonal_family, build_sync_matrix, check_cp_compatibility, invariance_coefficients, kernel_basis,
    BiorthogonalFamily, CouplingSpec, GroupPartition,
};
use crate::control::{run_with_control, ModalCoordinates, SyncSynthesizer, SynthesisConfig, SynthesisResult};
use crate::error::{Error, Result};
use crate::linalg::frobenius;
use crate::sim::{simulate, SimulationTrace, State, SystemInstance, TimeGrid};

pub const DEFAULT_SYNC_TOL: f64 = 1e-3;

/// Simulates the full system under `result.control` on `[0, t_obs]` and measures
/// `‖C_p(U, U')(t)‖ / ‖C_p(U, U')(0)‖` (modal `H¹ x L²` norm) for `t ≥ T`.
/// When `C_p(U, U')(0) = 0` the absolute norm is reported instead.
pub fn verify_synchronization(
    full: &SystemInstance,
    partition: &GroupPartition,
    init: &State,
    result: &SynthesisResult,
    t_obs: f64,
    snapshot_every: usize,
) -> Result<VerificationReport> {
    if partition.n() != full.n() {
        return Err(Error::dims("partition size", full.n(), partition.n()));
    }
    let c = build_sync_matrix(partition);
    let trace = run_with_control(full, init, &result.control, t_obs, snapshot_every)?;
    let coords = ModalCoordinates::new(&full.domain, c.rows());
    let w0 = coords.norm(&init.map_components(c.matrix())?)?;
    let scale = if w0 > 0.0 { w0 } else { 1.0 };
    let t_sync = result.horizon;
    let mut rep = VerificationReport::default();
    let mut sync_error: f64 = 0.0;
    for s in &trace.states {
        let e = coords.norm(&s.map_components(c.matrix())?)? / scale;
        rep.sync_series.push((s.t, e));
        if s.t >= t_sync * (1.0 - 1e-12) {
            sync_error = sync_error.max(e);
        }
    }
    rep.sync_error = sync_error;
    rep.check("sync_error", sync_error, DEFAULT_SYNC_TOL);

    let family = biorthogonal_family(full.certificate(), &kernel_basis(partition))?;
    rep.state_traces = extract_sync_state(&trace, &family)?;
    let full_coords = ModalCoordinates::new(&full.domain, full.n());
    let u0 = full_coords.norm(init)?;
    let mut recon: f64 = 0.0;
    for (s, u) in trace.states.iter().zip(&rep.state_traces) {
        if s.t >= t_sync * (1.0 - 1e-12) {
            let rebuilt = u.map_components(kernel_basis(partition).matrix())?;
            let diff = s.axpy(-1.0, &rebuilt)?;
            recon = recon.max(full_coords.norm(&diff)? / if u0 > 0.0 { u0 } else { 1.0 });
        }
    }
    rep.comparison_errors.insert("reconstruction".into(), recon);
    rep.info.insert("horizon".into(), format!("{t_sync}"));
    rep.info.insert("t_obs".into(), format!("{}", trace.grid.t_end()));
    rep.info
        .insert("relative_residual".into(), format!("{}", result.relative_residual()));
    Ok(rep)
}

/// `u_r(t, x) = (E_r, U(t, x))` at every snapshot.
pub fn extract_sync_state(trace: &SimulationTrace, family: &BiorthogonalFamily) -> Result<Vec<State>> {
    let et = family.vectors.transpose();
    trace.states.iter().map(|s| s.map_components(&et)).collect()
}

/// The `p`-component system `φ'' - Δφ + α φ = 0`, `∂_ν φ + β φ = 0`, where
/// `α[(r, s)] = α_rs` with `A e_r = Σ_s α_sr e_s` (the compatibility coefficients).
pub fn solve_decoupled_states(
    full: &SystemInstance,
    alpha: &DMatrix<f64>,
    beta: &DMatrix<f64>,
    init_proj: &State,
    grid: TimeGrid,
    snapshot_every: usize,
) -> Result<SimulationTrace> {
    let p = alpha.nrows();
    let coupling = CouplingSpec::new(alpha.clone(), beta.clone(), DMatrix::zeros(p, 0))?;
    let sys = SystemInstance::new(coupling, full.domain.clone())?.with_cfl(full.cfl_factor)?;
    simulate(&sys, init_proj, None, grid, snapshot_every)
}

/// Compatibility coefficients `(α, β)` of `A` and `B`.
pub fn decoupled_coefficients(
    full: &SystemInstance,
    partition: &GroupPartition,
    tol: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let ca = check_cp_compatibility(&full.coupling.a, partition, tol)?;
    let cb = check_cp_compatibility(&full.coupling.b, partition, tol)?;
    for rep in [&ca, &cb] {
        if !rep.compatible {
            let (row_group, col_group, deviation) = rep.worst;
            return Err(Error::Incompatible {
                row_group,
                col_group,
                deviation,
            });
        }
    }
    Ok((ca.coefficients, cb.coefficients))
}

/// Modal `H¹ x L²` norm of every snapshot difference, maximized over time.
fn max_state_distance(coords: &ModalCoordinates, a: &[State], b: &[State]) -> Result<f64> {
    let mut d: f64 = 0.0;
    for (x, y) in a.iter().zip(b) {
        d = d.max(coords.norm(&x.axpy(-1.0, y)?)?);
    }
    Ok(d)
}

fn max_state_norm(coords: &ModalCoordinates, a: &[State]) -> Result<f64> {
    let mut d: f64 = 0.0;
    for x in a {
        d = d.max(coords.norm(x)?);
    }
    Ok(d)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndependenceReport {
    /// `max_t ‖u^{(1)} - u^{(2)}‖ / max_t ‖u^{(1)}‖`.
    pub discrepancy: f64,
    /// `A^T V ⊆ V`, `B^T V ⊆ V` and `D^T V = 0` all hold.
    pub invariant: bool,
    pub invariance_residual_a: f64,
    pub invariance_residual_b: f64,
    /// `‖D^T E‖ / ‖D‖`.
    pub kernel_residual: f64,
    /// Relative synthesis residuals of the two controls.
    pub residuals: (f64, f64),
    /// Independence is certified only when `invariant` holds.
    pub certified: bool,
}

/// Runs two syntheses and compares the extracted states `(E_r, U)` over `[0, t_obs]`.
pub fn compare_state_independence(
    full: &SystemInstance,
    partition: &GroupPartition,
    family: &BiorthogonalFamily,
    init: &State,
    configs: (&SynthesisConfig, &SynthesisConfig),
    t_obs: f64,
    tol: f64,
) -> Result<IndependenceReport> {
    let ia = invariance_coefficients(&full.coupling.a, family, tol)?;
    let ib = invariance_coefficients(&full.coupling.b, family, tol)?;
    let dte = full.coupling.d.transpose() * &family.vectors;
    let kernel_residual = frobenius(&dte) / frobenius(&full.coupling.d).max(f64::MIN_POSITIVE);
    let invariant = ia.invariant && ib.invariant && kernel_residual <= tol;

    let run = |cfg: &SynthesisConfig| -> Result<(Vec<State>, f64, TimeGrid)> {
        let res = SyncSynthesizer::new(full, partition, cfg)?.solve(init)?;
        let trace = run_with_control(full, init, &res.control, t_obs, 1)?;
        Ok((extract_sync_state(&trace, family)?, res.relative_residual(), trace.grid))
    };
    let (first, second) = rayon::join(|| run(configs.0), || run(configs.1));
    let ((u1, r1, g1), (u2, r2, g2)) = (first?, second?);
    if g1 != g2 {
        return Err(Error::GridMismatch(
            "the two configurations use different time grids".into(),
        ));
    }
    let coords = ModalCoordinates::new(&full.domain, family.p());
    let scale = max_state_norm(&coords, &u1)?;
    let d = max_state_distance(&coords, &u1, &u2)?;
    Ok(IndependenceReport {
        discrepancy: if scale > 0.0 { d / scale } else { d },
        invariant,
        invariance_residual_a: ia.residual,
        invariance_residual_b: ib.residual,
        kernel_residual,
        residuals: (r1, r2),
        certified: invariant,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatePoint {
    pub s: f64,
    /// `‖(u, u')(T) - (φ, φ')(T)‖`.
    pub lhs: f64,
    /// `‖C_p(Û_0, Û_1)‖`.
    pub rhs: f64,
}

impl EstimatePoint {
    pub fn ratio(&self) -> Option<f64> {
        (self.rhs > 0.0).then(|| self.lhs / self.rhs)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub points: Vec<EstimatePoint>,
    /// `LHS` for `s = 0` (synchronized data only).
    pub zero_lhs: f64,
    /// Largest ratio, the empirical constant.
    pub constant: f64,
    /// Largest over smallest ratio on the ladder.
    pub spread: f64,
}

impl EstimateReport {
    /// CSV `s, lhs, rhs, ratio`.
    pub fn to_csv(&self) -> String {
        use crate::linalg::fmt_f64;
        let mut out = String::from("s,lhs,rhs,ratio\n");
        for p in &self.points {
            out.push_str(&format!(
                "{},{},{},{}\n",
                fmt_f64(p.s),
                fmt_f64(p.lhs),
                fmt_f64(p.rhs),
                fmt_f64(p.ratio().unwrap_or(f64::NAN))
            ));
        }
        out
    }
}

/// For `Û = Û_sync + s Û_transverse`, compares the extracted state at `T` of the
/// controlled run with the decoupled `φ` started from `(E_r, Û)`.
pub fn estimate_check(
    full: &SystemInstance,
    partition: &GroupPartition,
    family: &BiorthogonalFamily,
    sync_part: &State,
    transverse: &State,
    ladder: &[f64],
    config: &SynthesisConfig,
) -> Result<EstimateReport> {
    let synth = SyncSynthesizer::new(full, partition, config)?;
    let (alpha, beta) = decoupled_coefficients(full, partition, config.compat_tol)?;
    let grid = synth.inner.grid();
    let p_coords = ModalCoordinates::new(&full.domain, family.p());
    let et = family.vectors.transpose();

    let lhs_rhs = |s: f64| -> Result<EstimatePoint> {
        let init = sync_part.axpy(s, transverse)?;
        let res = synth.solve(&init)?;
        let trace = run_with_control(full, &init, &res.control, grid.t_end(), usize::MAX)?;
        let u_t = trace.final_state().map_components(&et)?;
        let phi = solve_decoupled_states(full, &alpha, &beta, &init.map_components(&et)?, grid, usize::MAX)?;
        let lhs = p_coords.norm(&u_t.axpy(-1.0, phi.final_state())?)?;
        let rhs = synth.inner.coords().norm(&synth.reduce_state(&init)?)?;
        Ok(EstimatePoint { s, lhs, rhs })
    };
    let zero_lhs = lhs_rhs(0.0)?.lhs;
    let points = ladder.iter().map(|&s| lhs_rhs(s)).collect::<Result<Vec<_>>>()?;
    let ratios: Vec<f64> = points.iter().filter_map(EstimatePoint::ratio).collect();
    let constant = ratios.iter().copied().fold(0.0, f64::max);
    let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(EstimateReport {
        points,
        zero_lhs,
        constant,
        spread: if min > 0.0 && min.is_finite() {
            constant / min
        } else {
            f64::INFINITY
        },
    })
}
