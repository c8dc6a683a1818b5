use nalgebra::DVector;
use rayon::prelude::*;

use crate::algebra::{build_sync_matrix, reduce_coupling, CouplingSpec, GroupPartition};
use crate::control::{
    free_final_state, restricted_spectrum, ModalCoordinates, NullControlSynthesizer, SynthesisConfig,
};
use crate::error::{Error, Result};
use crate::linalg::{fmt_f64, null_space, RANK_RTOL};
use crate::sim::{BoxDomain, State, SystemInstance};

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeConfig {
    /// Grid nodes per axis at each refinement level.
    pub levels: Vec<usize>,
    /// `σ_min` is taken over modal rows with `ω ≤ filter_fraction · ω_max`.
    pub filter_fraction: f64,
    pub synthesis: SynthesisConfig,
    /// Weights on an orthonormal basis of `Ker(D^T)` picking `e`; `None` takes the
    /// first basis vector. Extra or missing weights are ignored or read as zero.
    pub direction: Option<Vec<f64>>,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            levels: vec![17, 33, 65],
            filter_fraction: 0.5,
            synthesis: SynthesisConfig::default(),
            direction: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeLevel {
    pub nodes: usize,
    /// Smallest singular value of the control operator restricted to the low modes.
    pub sigma_min: f64,
    /// Smallest singular value over all rows.
    pub sigma_min_all: f64,
    /// Best achievable final norm for the special data.
    pub residual: f64,
    /// Final norm of the special data without control.
    pub free_norm: f64,
    pub coefficients: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    pub levels: Vec<ProbeLevel>,
    /// Probe ran on the reduced system `W = C_p U`.
    pub reduced: bool,
    /// Components and controls of the probed system.
    pub components: usize,
    pub controls: usize,
    /// The special data `U' = e θ` used a genuine `e ≠ 0` with `D^T e = 0`.
    pub special_data: bool,
    pub filter_fraction: f64,
}

impl ProbeReport {
    /// `σ_min(level k) / σ_min(level k+1)`.
    pub fn ratios(&self) -> Vec<f64> {
        self.levels
            .windows(2)
            .map(|w| w[0].sigma_min / w[1].sigma_min)
            .collect()
    }

    /// CSV `level, nodes, sigma_min, sigma_min_all, residual, free_norm`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("level,nodes,sigma_min,sigma_min_all,residual,free_norm\n");
        for (k, l) in self.levels.iter().enumerate() {
            out.push_str(&format!(
                "{k},{},{},{},{},{}\n",
                l.nodes,
                fmt_f64(l.sigma_min),
                fmt_f64(l.sigma_min_all),
                fmt_f64(l.residual),
                fmt_f64(l.free_norm)
            ));
        }
        out
    }

    pub fn to_key_value(&self) -> String {
        let mut out = format!(
            "evidence = control operator degeneration under grid refinement\nreduced = {}\ncomponents = {}\ncontrols = {}\nspecial_data = {}\nfilter_fraction = {}\n",
            self.reduced, self.components, self.controls, self.special_data, self.filter_fraction
        );
        for (k, l) in self.levels.iter().enumerate() {
            out.push_str(&format!("level.{k}.nodes = {}\n", l.nodes));
            out.push_str(&format!("level.{k}.sigma_min = {}\n", fmt_f64(l.sigma_min)));
            out.push_str(&format!("level.{k}.residual = {}\n", fmt_f64(l.residual)));
        }
        for (k, r) in self.ratios().iter().enumerate() {
            out.push_str(&format!("ratio.{k} = {}\n", fmt_f64(*r)));
        }
        out
    }
}

/// Centred bump `Π_a sin²(π x_a / L_a)`.
pub fn sin2_bump(domain: &BoxDomain, x: &[f64]) -> f64 {
    x.iter()
        .zip(domain.lengths())
        .map(|(xa, la)| (std::f64::consts::PI * xa / la).sin().powi(2))
        .product()
}

/// Grid refinement study of control authority. With a partition the study runs on
/// the reduced system (`N - p` components, `C_p D` controls), otherwise on `full`.
/// For each level nodes per axis are set to the level value on the same box.
pub fn noncontrollability_probe(
    full: &SystemInstance,
    partition: Option<&GroupPartition>,
    config: &ProbeConfig,
) -> Result<ProbeReport> {
    if config.levels.is_empty() {
        return Err(Error::InvalidInput("probe needs at least one refinement level".into()));
    }
    if !(config.filter_fraction > 0.0 && config.filter_fraction <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "filter_fraction must lie in (0, 1], got {}",
            config.filter_fraction
        )));
    }
    let coupling = match partition {
        Some(p) => {
            if p.n() != full.n() {
                return Err(Error::dims("partition size", full.n(), p.n()));
            }
            let red = reduce_coupling(&full.coupling, &build_sync_matrix(p), config.synthesis.compat_tol)?;
            CouplingSpec::with_any_rank(red.a_red, red.b_red, red.d_red)?
        }
        None => full.coupling.clone(),
    };
    let n = coupling.n();
    let m = coupling.m();
    let kernel = null_space(&coupling.d.transpose(), RANK_RTOL);
    let special_data = kernel.ncols() > 0;
    let e: DVector<f64> = if special_data {
        match &config.direction {
            Some(w) => {
                let w = DVector::from_fn(kernel.ncols(), |i, _| w.get(i).copied().unwrap_or(0.0));
                let e = &kernel * w;
                if e.norm() == 0.0 {
                    return Err(Error::InvalidInput("probe direction is zero".into()));
                }
                e.normalize()
            }
            None => kernel.column(0).into_owned(),
        }
    } else {
        let mut e = DVector::zeros(n);
        e[0] = 1.0;
        e
    };
    // The horizon follows the coarse domain so all levels share it.
    let mut synth_cfg = config.synthesis.clone();
    synth_cfg.horizon = Some(config.synthesis.horizon_for(full));

    let levels = config
        .levels
        .par_iter()
        .map(|&nodes| {
            let domain = BoxDomain::new(full.domain.lengths().to_vec(), vec![nodes; full.domain.dim()])?;
            let sys = SystemInstance::new(coupling.clone(), domain)?.with_cfl(full.cfl_factor)?;
            let init = State::from_fn(&sys.domain, n, |_, _| 0.0, |k, x| e[k] * sin2_bump(&sys.domain, x));
            probe_level(&sys, &init, &synth_cfg, config.filter_fraction)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ProbeReport {
        levels,
        reduced: partition.is_some(),
        components: n,
        controls: m,
        special_data,
        filter_fraction: config.filter_fraction,
    })
}

fn probe_level(sys: &SystemInstance, init: &State, cfg: &SynthesisConfig, frac: f64) -> Result<ProbeLevel> {
    let nodes = sys.domain.grid_nodes()[0];
    if sys.m() == 0 {
        // No control authority at all.
        let coords = ModalCoordinates::new(&sys.domain, sys.n());
        let grid = sys.time_grid(cfg.horizon_for(sys), cfg.dt)?;
        let free = free_final_state(sys, init, grid, &coords)?.norm();
        return Ok(ProbeLevel {
            nodes,
            sigma_min: 0.0,
            sigma_min_all: 0.0,
            residual: free,
            free_norm: free,
            coefficients: 0,
        });
    }
    let synth = NullControlSynthesizer::new(sys, cfg)?;
    let rows = synth.coords().low_frequency_rows(frac);
    let low = restricted_spectrum(&synth.operator, &rows);
    let all = crate::control::gramian_spectrum(&synth.operator);
    let res = synth.solve(init)?;
    Ok(ProbeLevel {
        nodes,
        sigma_min: low.last().copied().unwrap_or(0.0),
        sigma_min_all: all.last().copied().unwrap_or(0.0),
        residual: res.residual_final,
        free_norm: res.free_norm,
        coefficients: synth.operator.cols(),
    })
}
