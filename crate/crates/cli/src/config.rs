//! Experiment configuration (JSON). Unknown keys are rejected; every optional
//! key has the default documented on its field.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use robinsync::algebra::{
    biorthogonal_family, build_control_matrix, kernel_basis, symmetric_similarity, ControlMatrixMode, CouplingSpec,
    GroupPartition,
};
use robinsync::control::{Solver, SynthesisConfig, DEFAULT_COMPAT_TOL, DEFAULT_EPSILON};
use robinsync::sim::{BoxDomain, State, SystemInstance, DEFAULT_CFL, SIMILARITY_TOL};
use robinsync::verify::{sin2_bump, ProbeConfig};
use robinsync::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub domain: DomainBlock,
    #[serde(default)]
    pub time: TimeBlock,
    pub system: SystemBlock,
    #[serde(default)]
    pub control: ControlBlock,
    #[serde(default)]
    pub initial: Option<InitialBlock>,
    #[serde(default)]
    pub probe: ProbeBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainBlock {
    /// 1 or 2.
    pub dim: usize,
    /// Side lengths, one per axis.
    pub lengths: Vec<f64>,
    /// Grid nodes per axis (at least 8).
    pub nodes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeBlock {
    /// Control / simulation horizon. Default: four domain diameters.
    #[serde(rename = "T", default)]
    pub t: Option<f64>,
    /// Observation end for `verify`. Default: `1.5 T`.
    #[serde(rename = "T_obs", default)]
    pub t_obs: Option<f64>,
    /// `dt ≤ cfl_factor · Δx_min / sqrt(dim)`. Default: 0.5.
    #[serde(default)]
    pub cfl_factor: Option<f64>,
    /// Explicit upper bound on the step. Default: the CFL limit.
    #[serde(default)]
    pub dt: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DSpec {
    /// `"canonical"` (`C_p^T`), `"family"` (`Ker(D^T) = span{E_r}`) or `"identity"`.
    Mode(String),
    Rows(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemBlock {
    #[serde(rename = "N")]
    pub n: usize,
    /// Breakpoints `0 = n_0 < ... < n_p = N`. Required by `verify`; when present,
    /// `synthesize` targets synchronization instead of null control.
    #[serde(default)]
    pub partition: Option<Vec<usize>>,
    /// Allow groups of size one. Default: false.
    #[serde(default)]
    pub allow_singletons: bool,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    /// Default: zero.
    #[serde(rename = "B", default)]
    pub b: Option<Vec<Vec<f64>>>,
    /// Default: `"identity"` without a partition, `"canonical"` with one.
    #[serde(rename = "D", default)]
    pub d: Option<DSpec>,
    /// `D_2` for the two-group Kalman test in `analyze` (needs `p = 2`). Default: skipped.
    #[serde(default)]
    pub kalman_d2: Option<[f64; 2]>,
    /// Tolerance for compatibility checks. Default: 1e-9.
    #[serde(default)]
    pub compat_tol: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlBlock {
    /// Interior time knots of the control basis. Default: `Δτ ≈ Δx`.
    #[serde(default)]
    pub knots: Option<usize>,
    /// Relative Tychonoff weight. Default: 1e-8.
    #[serde(default)]
    pub epsilon: Option<f64>,
    /// Use conjugate gradient with this iteration cap instead of Cholesky. Default: Cholesky.
    #[serde(default)]
    pub max_cg_iterations: Option<usize>,
    /// CG relative tolerance. Default: 1e-12.
    #[serde(default)]
    pub cg_tol: Option<f64>,
    /// Controls act on `[0, support_fraction · T]`. Default: 1.
    #[serde(default)]
    pub support_fraction: Option<f64>,
    /// Relative residual above which `synthesize` and `verify` fail (exit 3).
    /// Default: none for `synthesize`; `verify` also fails when sync_error > 1e-3.
    #[serde(default)]
    pub residual_threshold: Option<f64>,
}

/// `amplitude · Π_a sin²(π (x_a - c_a + r_a) / (2 r_a))` on `|x_a - c_a| < r_a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bump {
    pub amplitude: f64,
    pub center: Vec<f64>,
    pub radius: Vec<f64>,
}

impl Bump {
    fn eval(&self, x: &[f64]) -> f64 {
        let mut v = self.amplitude;
        for ((xa, c), r) in x.iter().zip(&self.center).zip(&self.radius) {
            let s = (xa - c) / r;
            if s.abs() >= 1.0 {
                return 0.0;
            }
            v *= (std::f64::consts::FRAC_PI_2 * (s + 1.0)).sin().powi(2);
        }
        v
    }
}

/// Sums of bumps per component. Default (whole block absent): component `k`
/// starts at rest with `U_k = θ / (k + 1)`, `θ` the centred sin² bump.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialBlock {
    #[serde(default)]
    pub u: Vec<Vec<Bump>>,
    #[serde(default)]
    pub v: Vec<Vec<Bump>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeBlock {
    /// Nodes per axis at each level. Default: [17, 33, 65].
    #[serde(default = "default_levels")]
    pub levels: Vec<usize>,
    /// Low-mode cut for `σ_min`. Default: 0.5.
    #[serde(default = "default_filter")]
    pub filter_fraction: f64,
    /// Probe the reduced system when a partition is given. Default: true.
    #[serde(default = "default_true")]
    pub use_partition: bool,
}

impl Default for ProbeBlock {
    fn default() -> Self {
        Self {
            levels: default_levels(),
            filter_fraction: default_filter(),
            use_partition: true,
        }
    }
}

fn default_levels() -> Vec<usize> {
    vec![17, 33, 65]
}

fn default_filter() -> f64 {
    0.5
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    /// Default: `out`; `--out` overrides.
    #[serde(default = "default_dir")]
    pub directory: String,
    /// Snapshot every this many steps. Default: 10.
    #[serde(default = "default_stride")]
    pub snapshot_stride: usize,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self {
            directory: default_dir(),
            snapshot_stride: default_stride(),
        }
    }
}

fn default_dir() -> String {
    "out".into()
}

fn default_stride() -> usize {
    10
}

fn matrix(name: &str, rows: &[Vec<f64>], n_rows: usize, n_cols: Option<usize>) -> Result<DMatrix<f64>> {
    if rows.len() != n_rows {
        return Err(Error::InvalidInput(format!(
            "{name} needs {n_rows} rows, got {}",
            rows.len()
        )));
    }
    let cols = n_cols.unwrap_or_else(|| rows.first().map_or(0, Vec::len));
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != cols) {
        return Err(Error::InvalidInput(format!(
            "{name} row {i} has {} entries, expected {cols}",
            r.len()
        )));
    }
    Ok(DMatrix::from_fn(n_rows, cols, |i, j| rows[i][j]))
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("config: {e}")))
    }

    pub fn domain(&self) -> Result<BoxDomain> {
        let d = &self.domain;
        if d.lengths.len() != d.dim || d.nodes.len() != d.dim {
            return Err(Error::InvalidInput(format!(
                "domain.dim = {} but {} lengths and {} node counts given",
                d.dim,
                d.lengths.len(),
                d.nodes.len()
            )));
        }
        BoxDomain::new(d.lengths.clone(), d.nodes.clone())
    }

    pub fn partition(&self) -> Result<Option<GroupPartition>> {
        let Some(bps) = &self.system.partition else {
            return Ok(None);
        };
        let p = GroupPartition::with_options(bps.clone(), self.system.allow_singletons)?;
        if p.n() != self.system.n {
            return Err(Error::InvalidInput(format!(
                "partition ends at {} but N = {}",
                p.n(),
                self.system.n
            )));
        }
        Ok(Some(p))
    }

    pub fn a(&self) -> Result<DMatrix<f64>> {
        matrix("A", &self.system.a, self.system.n, Some(self.system.n))
    }

    pub fn b(&self) -> Result<DMatrix<f64>> {
        match &self.system.b {
            Some(rows) => matrix("B", rows, self.system.n, Some(self.system.n)),
            None => Ok(DMatrix::zeros(self.system.n, self.system.n)),
        }
    }

    pub fn d(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let n = self.system.n;
        let part = self.partition()?;
        let mode = match (&self.system.d, &part) {
            (Some(DSpec::Rows(rows)), _) => return matrix("D", rows, n, None),
            (Some(DSpec::Mode(m)), _) => m.as_str(),
            (None, Some(_)) => "canonical",
            (None, None) => "identity",
        };
        match mode {
            "identity" => Ok(DMatrix::identity(n, n)),
            "canonical" | "family" => {
                let part = part.ok_or_else(|| Error::InvalidInput(format!("D = \"{mode}\" needs system.partition")))?;
                if mode == "canonical" {
                    return build_control_matrix(&part, ControlMatrixMode::Canonical);
                }
                let cert = symmetric_similarity(b, SIMILARITY_TOL)?;
                let fam = biorthogonal_family(&cert, &kernel_basis(&part))?;
                build_control_matrix(&part, ControlMatrixMode::FromFamily(&fam))
            }
            other => Err(Error::InvalidInput(format!(
                "unknown D mode {other:?} (expected \"canonical\", \"family\", \"identity\" or explicit rows)"
            ))),
        }
    }

    pub fn compat_tol(&self) -> f64 {
        self.system.compat_tol.unwrap_or(DEFAULT_COMPAT_TOL)
    }

    /// `D` may be rank deficient here; the rank condition is checked by the commands that need it.
    pub fn coupling(&self) -> Result<CouplingSpec> {
        let b = self.b()?;
        let d = self.d(&b)?;
        CouplingSpec::with_any_rank(self.a()?, b, d)
    }

    pub fn system(&self) -> Result<SystemInstance> {
        let sys = SystemInstance::new(self.coupling()?, self.domain()?)?;
        sys.with_cfl(self.time.cfl_factor.unwrap_or(DEFAULT_CFL))
    }

    pub fn horizon(&self, sys: &SystemInstance) -> f64 {
        self.time.t.unwrap_or(4.0 * sys.domain.diameter())
    }

    pub fn t_obs(&self, sys: &SystemInstance) -> f64 {
        self.time.t_obs.unwrap_or(1.5 * self.horizon(sys))
    }

    pub fn synthesis(&self, sys: &SystemInstance) -> Result<SynthesisConfig> {
        let c = &self.control;
        let solver = match c.max_cg_iterations {
            Some(max_iter) => Solver::Cg {
                max_iter,
                tol: c.cg_tol.unwrap_or(1e-12),
            },
            None => Solver::Cholesky,
        };
        let cfg = SynthesisConfig {
            horizon: Some(self.horizon(sys)),
            support_fraction: c.support_fraction.unwrap_or(1.0),
            knots: c.knots,
            epsilon: c.epsilon.unwrap_or(DEFAULT_EPSILON),
            solver,
            dt: self.time.dt,
            residual_threshold: c.residual_threshold,
            compat_tol: self.compat_tol(),
        };
        if !(cfg.epsilon >= 0.0 && cfg.epsilon.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "control.epsilon must be nonnegative, got {}",
                cfg.epsilon
            )));
        }
        Ok(cfg)
    }

    pub fn probe(&self, sys: &SystemInstance, direction: Option<Vec<f64>>) -> Result<ProbeConfig> {
        Ok(ProbeConfig {
            levels: self.probe.levels.clone(),
            filter_fraction: self.probe.filter_fraction,
            synthesis: self.synthesis(sys)?,
            direction,
        })
    }

    pub fn initial(&self, sys: &SystemInstance) -> Result<State> {
        let n = sys.n();
        let dom = &sys.domain;
        let Some(init) = &self.initial else {
            return Ok(State::from_fn(
                dom,
                n,
                |k, x| sin2_bump(dom, x) / (k + 1) as f64,
                |_, _| 0.0,
            ));
        };
        for (name, list) in [("u", &init.u), ("v", &init.v)] {
            if !list.is_empty() && list.len() != n {
                return Err(Error::InvalidInput(format!(
                    "initial.{name} needs {n} component lists, got {}",
                    list.len()
                )));
            }
            for b in list.iter().flatten() {
                if b.center.len() != dom.dim() || b.radius.len() != dom.dim() || b.radius.iter().any(|r| *r <= 0.0) {
                    return Err(Error::InvalidInput(format!(
                        "initial.{name}: bump needs {} centre coordinates and positive radii",
                        dom.dim()
                    )));
                }
            }
        }
        let eval = |list: &Vec<Vec<Bump>>, k: usize, x: &[f64]| {
            list.get(k).map_or(0.0, |bs| bs.iter().map(|b| b.eval(x)).sum())
        };
        Ok(State::from_fn(
            dom,
            n,
            |k, x| eval(&init.u, k, x),
            |k, x| eval(&init.v, k, x),
        ))
    }
}
