use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use robinsync::algebra::{
    build_sync_matrix, check_cp_compatibility, kernel_basis, rank_condition, reduce_matrix, symmetric_similarity,
    two_group_kalman, within_block_condition, zero_sum_condition, GroupPartition,
};
use robinsync::control::{synthesize_null_control, SyncSynthesizer, SynthesisResult};
use robinsync::linalg::{fmt_f64, format_csv_matrix, RANK_RTOL};
use robinsync::sim::{simulate, SystemInstance, SIMILARITY_TOL};
use robinsync::verify::{noncontrollability_probe, verify_synchronization, DEFAULT_SYNC_TOL};
use robinsync::{Error, ErrorKind};

use crate::config::ExperimentConfig;

#[derive(Debug)]
pub enum Failure {
    Core(Error),
    /// Unreadable config or unwritable output.
    Io(String),
    /// The command ran but a checked condition does not hold.
    Check {
        code: u8,
        message: String,
    },
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Core(e) => match e.kind() {
                ErrorKind::MatrixCondition => 2,
                ErrorKind::Synthesis => 3,
                ErrorKind::Input => 4,
                ErrorKind::Simulation => 5,
            },
            Failure::Io(_) => 4,
            Failure::Check { code, .. } => *code,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Core(e) => write!(f, "{e}"),
            Failure::Io(m) => write!(f, "{m}"),
            Failure::Check { message, .. } => write!(f, "{message}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

pub type Outcome = std::result::Result<(), Failure>;

pub struct Context {
    pub config: ExperimentConfig,
    pub out: PathBuf,
    pub seed: Option<u64>,
}

impl Context {
    fn write(&self, name: &str, contents: &str) -> Outcome {
        let path = self.out.join(name);
        fs::write(&path, contents).map_err(|e| Failure::Io(format!("cannot write {}: {e}", path.display())))
    }
}

pub fn prepare_output(dir: &Path) -> Outcome {
    fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("cannot create {}: {e}", dir.display())))
}

fn kv(out: &mut String, key: &str, value: impl std::fmt::Display) {
    let _ = writeln!(out, "{key} = {value}");
}

fn matrix_line(m: &nalgebra::DMatrix<f64>) -> String {
    format_csv_matrix(m).trim_end().replace('\n', "; ")
}

fn need_partition(cfg: &ExperimentConfig, command: &str) -> Result<GroupPartition, Failure> {
    cfg.partition()?
        .ok_or_else(|| Failure::Core(Error::InvalidInput(format!("`{command}` needs system.partition"))))
}

pub fn analyze(ctx: &Context) -> Outcome {
    let cfg = &ctx.config;
    let part = need_partition(cfg, "analyze")?;
    let tol = cfg.compat_tol();
    let (a, b) = (cfg.a()?, cfg.b()?);
    let c = build_sync_matrix(&part);
    let mut out = String::new();
    let mut violations = Vec::new();
    kv(&mut out, "N", part.n());
    kv(&mut out, "p", part.p());
    kv(&mut out, "C_p", matrix_line(c.matrix()));

    for (name, m) in [("A", &a), ("B", &b)] {
        let rep = check_cp_compatibility(m, &part, tol)?;
        kv(&mut out, &format!("{name}.compatible"), rep.compatible);
        kv(
            &mut out,
            &format!("{name}.block_row_sums"),
            matrix_line(&rep.coefficients),
        );
        kv(&mut out, &format!("{name}.worst_deviation"), fmt_f64(rep.worst.2));
        kv(
            &mut out,
            &format!("{name}.zero_sum"),
            zero_sum_condition(m, &part, tol)?,
        );
        kv(
            &mut out,
            &format!("{name}.within_block"),
            within_block_condition(m, &part, tol)?,
        );
        if rep.compatible {
            kv(
                &mut out,
                &format!("{name}.reduced"),
                matrix_line(&reduce_matrix(m, &c, tol)?),
            );
        } else {
            violations.push(format!("{name} is not C_p-compatible"));
        }
    }

    let cert = symmetric_similarity(&b, SIMILARITY_TOL);
    kv(&mut out, "B.similar_to_symmetric", cert.is_ok());
    match &cert {
        Ok(cert) => kv(&mut out, "B.certificate_residual", fmt_f64(cert.residual)),
        Err(e) => {
            kv(&mut out, "B.similarity_error", e);
            violations.push(format!("B is not similar to a symmetric matrix: {e}"));
        }
    }

    let d = cfg.d(&b)?;
    kv(&mut out, "D", matrix_line(&d));
    let rank = rank_condition(&c, &d, RANK_RTOL)?;
    kv(&mut out, "rank_CpD", rank.rank_cpd);
    kv(&mut out, "rank_required", rank.required);
    kv(&mut out, "rank_condition", rank.satisfies);
    if !rank.satisfies {
        violations.push(format!(
            "rank(C_p D) = {} but N - p = {} is required",
            rank.rank_cpd, rank.required
        ));
    }

    if let (Some(d2), Ok(cert)) = (cfg.system.kalman_d2, &cert) {
        let k = two_group_kalman(cert, &kernel_basis(&part), &nalgebra::DVector::from_row_slice(&d2))?;
        kv(&mut out, "kalman.lambda_hat", matrix_line(&k.lambda_hat));
        kv(&mut out, "kalman.rank", k.rank);
    }
    kv(
        &mut out,
        "status",
        if violations.is_empty() { "ok" } else { "violated" },
    );
    print!("{out}");
    ctx.write("analysis.txt", &out)?;
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Failure::Check {
            code: 2,
            message: violations.join("; "),
        })
    }
}

pub fn simulate_cmd(ctx: &Context) -> Outcome {
    let cfg = &ctx.config;
    let sys = cfg.system()?;
    let init = cfg.initial(&sys)?;
    let grid = sys.time_grid(cfg.horizon(&sys), cfg.time.dt)?;
    let trace = simulate(&sys, &init, None, grid, cfg.output.snapshot_stride.max(1))?;
    ctx.write("trace.csv", &trace.to_csv())?;
    ctx.write("energy.csv", &trace.energy_csv())?;
    let mut out = String::new();
    kv(&mut out, "dt", fmt_f64(grid.dt));
    kv(&mut out, "steps", grid.steps);
    kv(&mut out, "t_end", fmt_f64(grid.t_end()));
    kv(&mut out, "energy_initial", fmt_f64(trace.energy[0]));
    kv(
        &mut out,
        "energy_final",
        fmt_f64(*trace.energy.last().unwrap_or(&f64::NAN)),
    );
    print!("{out}");
    ctx.write("simulation.txt", &out)
}

fn synthesis_summary(res: &SynthesisResult, sync: bool) -> String {
    let mut out = String::new();
    kv(&mut out, "target", if sync { "synchronization" } else { "null" });
    kv(&mut out, "horizon", fmt_f64(res.horizon));
    kv(&mut out, "dt", fmt_f64(res.grid.dt));
    kv(&mut out, "steps", res.grid.steps);
    kv(&mut out, "coefficients", res.coefficients.len());
    kv(&mut out, "residual_final", fmt_f64(res.residual_final));
    kv(&mut out, "free_norm", fmt_f64(res.free_norm));
    kv(&mut out, "relative_residual", fmt_f64(res.relative_residual()));
    kv(&mut out, "control_norm", fmt_f64(res.control_norm));
    kv(
        &mut out,
        "sigma_max",
        fmt_f64(res.gramian_spectrum.first().copied().unwrap_or(0.0)),
    );
    kv(
        &mut out,
        "sigma_min",
        fmt_f64(res.gramian_spectrum.last().copied().unwrap_or(0.0)),
    );
    kv(&mut out, "solver_iterations", res.solver_history.len());
    out
}

fn series_csv(header: &str, values: &[f64]) -> String {
    let mut out = format!("index,{header}\n");
    for (i, v) in values.iter().enumerate() {
        let _ = writeln!(out, "{i},{}", fmt_f64(*v));
    }
    out
}

fn write_synthesis(ctx: &Context, sys: &SystemInstance, res: &SynthesisResult, sync: bool) -> Outcome {
    ctx.write("control.csv", &res.control.to_csv(sys.domain.boundary_nodes()))?;
    ctx.write("spectrum.csv", &series_csv("sigma", &res.gramian_spectrum))?;
    if !res.solver_history.is_empty() {
        ctx.write(
            "solver_history.csv",
            &series_csv("relative_residual", &res.solver_history),
        )?;
    }
    let summary = synthesis_summary(res, sync);
    print!("{summary}");
    ctx.write("synthesis.txt", &summary)
}

pub fn synthesize(ctx: &Context) -> Outcome {
    let cfg = &ctx.config;
    let sys = cfg.system()?;
    let init = cfg.initial(&sys)?;
    let scfg = cfg.synthesis(&sys)?;
    match cfg.partition()? {
        Some(part) => {
            let res = SyncSynthesizer::new(&sys, &part, &scfg)?.solve(&init)?;
            write_synthesis(ctx, &sys, &res, true)
        }
        None => {
            let res = synthesize_null_control(&sys, &init, &scfg)?;
            write_synthesis(ctx, &sys, &res, false)
        }
    }
}

pub fn verify(ctx: &Context) -> Outcome {
    let cfg = &ctx.config;
    let part = need_partition(cfg, "verify")?;
    let sys = cfg.system()?;
    let init = cfg.initial(&sys)?;
    let scfg = cfg.synthesis(&sys)?;
    let res = SyncSynthesizer::new(&sys, &part, &scfg)?.solve(&init)?;
    write_synthesis(ctx, &sys, &res, true)?;
    let rep = verify_synchronization(
        &sys,
        &part,
        &init,
        &res,
        cfg.t_obs(&sys),
        cfg.output.snapshot_stride.max(1),
    )?;
    let text = rep.to_key_value();
    print!("{text}");
    ctx.write("report.txt", &text)?;
    ctx.write("sync_error.csv", &rep.sync_csv())?;
    let mut states = String::from("t,group,node,u,v\n");
    for s in &rep.state_traces {
        for r in 0..s.n {
            for (i, (u, v)) in s.u_comp(r).iter().zip(s.v_comp(r)).enumerate() {
                let _ = writeln!(states, "{},{r},{i},{},{}", fmt_f64(s.t), fmt_f64(*u), fmt_f64(*v));
            }
        }
    }
    ctx.write("states.csv", &states)?;
    if rep.all_pass() {
        Ok(())
    } else {
        Err(Failure::Check {
            code: 3,
            message: format!(
                "synchronization error {:e} exceeds {:e}",
                rep.sync_error, DEFAULT_SYNC_TOL
            ),
        })
    }
}

pub fn probe(ctx: &Context) -> Outcome {
    let cfg = &ctx.config;
    let sys = cfg.system()?;
    let part = if cfg.probe.use_partition {
        cfg.partition()?
    } else {
        None
    };
    // The seed only picks the direction of the special data inside Ker(D^T).
    let direction = ctx.seed.map(|s| {
        let mut r = ChaCha8Rng::seed_from_u64(s);
        (0..sys.n()).map(|_| r.random_range(-1.0..1.0)).collect()
    });
    let rep = noncontrollability_probe(&sys, part.as_ref(), &cfg.probe(&sys, direction)?)?;
    let text = rep.to_key_value();
    print!("{text}");
    ctx.write("probe.txt", &text)?;
    ctx.write("probe.csv", &rep.to_csv())
}
