use nalgebra::DMatrix;

use super::domain::BoxDomain;
use crate::algebra::{symmetric_similarity, CouplingSpec, SimilarityCertificate};
use crate::error::{Error, Result};
use crate::linalg::fmt_f64;

pub const DEFAULT_CFL: f64 = 0.5;

/// Tolerance used to certify that `B` is similar to a symmetric matrix.
pub const SIMILARITY_TOL: f64 = 1e-9;

/// The controlled system `U'' - ΔU + AU = 0`, `∂_ν U + BU = DH` on a box, wave speed 1.
#[derive(Debug, Clone)]
pub struct SystemInstance {
    pub coupling: CouplingSpec,
    pub domain: BoxDomain,
    pub cfl_factor: f64,
    certificate: SimilarityCertificate,
}

impl SystemInstance {
    pub fn new(coupling: CouplingSpec, domain: BoxDomain) -> Result<Self> {
        let certificate = symmetric_similarity(&coupling.b, SIMILARITY_TOL)?;
        Ok(Self {
            coupling,
            domain,
            cfl_factor: DEFAULT_CFL,
            certificate,
        })
    }

    pub fn with_cfl(mut self, cfl_factor: f64) -> Result<Self> {
        if !(cfl_factor > 0.0 && cfl_factor.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "cfl_factor must be positive, got {cfl_factor}"
            )));
        }
        self.cfl_factor = cfl_factor;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.coupling.n()
    }

    pub fn m(&self) -> usize {
        self.coupling.m()
    }

    /// Certificate that `B` is similar to a symmetric matrix.
    pub fn certificate(&self) -> &SimilarityCertificate {
        &self.certificate
    }

    /// Transposed couplings, homogeneous boundary condition.
    pub fn adjoint(&self) -> Self {
        let coupling = self.coupling.adjoint();
        let certificate = SimilarityCertificate {
            matrix: coupling.b.clone(),
            p: self.certificate.p.clone(),
            b_hat: self.certificate.b_hat.clone(),
            residual: self.certificate.residual,
        };
        let mut adj = Self {
            coupling,
            domain: self.domain.clone(),
            cfl_factor: self.cfl_factor,
            certificate,
        };
        // B^T = P^{-T} B̂ P^T, so the adjoint certificate uses P^{-T}.
        if let Ok(q) = self.certificate.symmetrizer() {
            adj.certificate.p = q.transpose();
        }
        adj
    }

    /// Same system with a different control matrix.
    pub fn with_control_matrix(&self, d: DMatrix<f64>) -> Result<Self> {
        let coupling = CouplingSpec::new(self.coupling.a.clone(), self.coupling.b.clone(), d)?;
        Ok(Self {
            coupling,
            domain: self.domain.clone(),
            cfl_factor: self.cfl_factor,
            certificate: self.certificate.clone(),
        })
    }

    /// Largest admissible time step.
    pub fn cfl_limit(&self) -> f64 {
        self.domain.cfl_limit(self.cfl_factor)
    }

    /// Uniform grid on `[0, T]` whose step does not exceed `dt_max` nor the CFL limit.
    pub fn time_grid(&self, t_end: f64, dt_max: Option<f64>) -> Result<TimeGrid> {
        let limit = self.cfl_limit();
        let dt = dt_max.unwrap_or(limit);
        if dt > limit * (1.0 + 1e-12) {
            return Err(Error::Cfl { dt, limit });
        }
        TimeGrid::new(t_end, dt)
    }
}

/// `steps` uniform steps of size `dt` covering `[0, steps * dt]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub dt: f64,
    pub steps: usize,
}

impl TimeGrid {
    /// Smallest step count with `dt_eff = T / steps ≤ dt_max`.
    pub fn new(t_end: f64, dt_max: f64) -> Result<Self> {
        if !(t_end >= 0.0 && t_end.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "final time must be nonnegative, got {t_end}"
            )));
        }
        if !(dt_max > 0.0 && dt_max.is_finite()) {
            return Err(Error::InvalidInput(format!("time step must be positive, got {dt_max}")));
        }
        if t_end == 0.0 {
            return Ok(Self { dt: dt_max, steps: 0 });
        }
        let steps = ((t_end / dt_max) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        Ok(Self {
            dt: t_end / steps as f64,
            steps,
        })
    }

    pub fn t_end(&self) -> f64 {
        self.dt * self.steps as f64
    }

    pub fn time(&self, step: usize) -> f64 {
        self.dt * step as f64
    }

    /// Same step, `steps` extended to reach at least `t_end`.
    pub fn extended_to(&self, t_end: f64) -> Self {
        let steps = ((t_end / self.dt) * (1.0 - 1e-12)).ceil().max(self.steps as f64) as usize;
        Self { dt: self.dt, steps }
    }
}

/// Displacement and velocity, component-major: entry `k * nodes + i` is component `k` at node `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub n: usize,
    pub nodes: usize,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub t: f64,
}

impl State {
    pub fn zeros(n: usize, nodes: usize) -> Self {
        Self {
            n,
            nodes,
            u: vec![0.0; n * nodes],
            v: vec![0.0; n * nodes],
            t: 0.0,
        }
    }

    pub fn from_parts(n: usize, nodes: usize, u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if u.len() != n * nodes {
            return Err(Error::dims("U", n * nodes, u.len()));
        }
        if v.len() != n * nodes {
            return Err(Error::dims("V", n * nodes, v.len()));
        }
        Ok(Self { n, nodes, u, v, t: 0.0 })
    }

    /// State `U(x) = Σ_k f_k(x) ε_k`, `V(x) = Σ_k g_k(x) ε_k` sampled at node coordinates.
    pub fn from_fn(
        domain: &BoxDomain,
        n: usize,
        f: impl Fn(usize, &[f64]) -> f64,
        g: impl Fn(usize, &[f64]) -> f64,
    ) -> Self {
        let nodes = domain.node_count();
        let mut s = Self::zeros(n, nodes);
        for i in 0..nodes {
            let x = domain.coords(i);
            for k in 0..n {
                s.u[k * nodes + i] = f(k, &x);
                s.v[k * nodes + i] = g(k, &x);
            }
        }
        s
    }

    pub fn u_comp(&self, k: usize) -> &[f64] {
        &self.u[k * self.nodes..(k + 1) * self.nodes]
    }

    pub fn v_comp(&self, k: usize) -> &[f64] {
        &self.v[k * self.nodes..(k + 1) * self.nodes]
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(&self.v).all(|x| x.is_finite())
    }

    /// Applies a `q x n` matrix pointwise in space, giving a `q`-component state.
    pub fn map_components(&self, m: &DMatrix<f64>) -> Result<State> {
        if m.ncols() != self.n {
            return Err(Error::dims("component map columns", self.n, m.ncols()));
        }
        let q = m.nrows();
        let mut out = State::zeros(q, self.nodes);
        out.t = self.t;
        for r in 0..q {
            for k in 0..self.n {
                let c = m[(r, k)];
                if c == 0.0 {
                    continue;
                }
                let dst = r * self.nodes..(r + 1) * self.nodes;
                for ((ou, ov), (su, sv)) in out.u[dst.clone()]
                    .iter_mut()
                    .zip(&mut out.v[dst])
                    .zip(self.u_comp(k).iter().zip(self.v_comp(k)))
                {
                    *ou += c * su;
                    *ov += c * sv;
                }
            }
        }
        Ok(out)
    }

    /// Same displacement, velocity negated: runs the time-reversed problem.
    pub fn with_negated_velocity(&self) -> State {
        let mut s = self.clone();
        s.v.iter_mut().for_each(|x| *x = -*x);
        s
    }

    pub fn scaled(&self, c: f64) -> State {
        let mut s = self.clone();
        s.u.iter_mut().chain(s.v.iter_mut()).for_each(|x| *x *= c);
        s
    }

    /// `self + c * other`.
    pub fn axpy(&self, c: f64, other: &State) -> Result<State> {
        if (self.n, self.nodes) != (other.n, other.nodes) {
            return Err(Error::GridMismatch("states of different shape".into()));
        }
        let mut s = self.clone();
        for (a, b) in s.u.iter_mut().zip(&other.u) {
            *a += c * b;
        }
        for (a, b) in s.v.iter_mut().zip(&other.v) {
            *a += c * b;
        }
        Ok(s)
    }
}

/// Boundary control `H` sampled at the time grid nodes `t_n = n Δt`, `n = 0..=steps`,
/// on every boundary node and channel. Entry `(n * nb + b) * m + c`.
/// Samples past the stored range are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSignal {
    pub dt: f64,
    pub boundary_nodes: usize,
    pub channels: usize,
    pub values: Vec<f64>,
}

impl ControlSignal {
    pub fn zeros(dt: f64, samples: usize, boundary_nodes: usize, channels: usize) -> Self {
        Self {
            dt,
            boundary_nodes,
            channels,
            values: vec![0.0; samples * boundary_nodes * channels],
        }
    }

    pub fn new(dt: f64, boundary_nodes: usize, channels: usize, values: Vec<f64>) -> Result<Self> {
        let per = boundary_nodes * channels;
        if per > 0 && values.len() % per != 0 {
            return Err(Error::dims(
                "control samples",
                format!("multiple of {per}"),
                values.len(),
            ));
        }
        Ok(Self {
            dt,
            boundary_nodes,
            channels,
            values,
        })
    }

    /// Sampled from `h(t, boundary_index, channel)` on `samples` time nodes.
    pub fn from_fn(
        dt: f64,
        samples: usize,
        boundary_nodes: usize,
        channels: usize,
        h: impl Fn(f64, usize, usize) -> f64,
    ) -> Self {
        let mut s = Self::zeros(dt, samples, boundary_nodes, channels);
        for n in 0..samples {
            for b in 0..boundary_nodes {
                for c in 0..channels {
                    s.values[(n * boundary_nodes + b) * channels + c] = h(n as f64 * dt, b, c);
                }
            }
        }
        s
    }

    pub fn samples(&self) -> usize {
        let per = self.boundary_nodes * self.channels;
        if per == 0 {
            0
        } else {
            self.values.len() / per
        }
    }

    /// End of the stored window; the control vanishes afterwards.
    pub fn support_end(&self) -> f64 {
        self.dt * self.samples().saturating_sub(1) as f64
    }

    /// Slice for time node `n`, `None` past the stored range.
    pub fn at(&self, n: usize) -> Option<&[f64]> {
        let per = self.boundary_nodes * self.channels;
        let lo = n * per;
        (per > 0 && lo + per <= self.values.len()).then(|| &self.values[lo..lo + per])
    }

    pub fn get(&self, n: usize, b: usize, c: usize) -> f64 {
        self.at(n).map_or(0.0, |s| s[b * self.channels + c])
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut s = self.clone();
        s.values.iter_mut().for_each(|x| *x *= c);
        s
    }

    /// `self + c * other`, padding the shorter signal with zeros.
    pub fn axpy(&self, c: f64, other: &ControlSignal) -> Result<Self> {
        if (self.boundary_nodes, self.channels) != (other.boundary_nodes, other.channels)
            || (self.dt - other.dt).abs() > 1e-12 * self.dt
        {
            return Err(Error::GridMismatch("control signals on different grids".into()));
        }
        let mut s = self.clone();
        if other.values.len() > s.values.len() {
            s.values.resize(other.values.len(), 0.0);
        }
        for (a, b) in s.values.iter_mut().zip(&other.values) {
            *a += c * b;
        }
        Ok(s)
    }

    /// Discrete `L²(0, T; L²(Γ))` norm: trapezoid in time, boundary weights on Γ.
    pub fn l2_norm(&self, boundary_weights: &[f64]) -> f64 {
        let ns = self.samples();
        let mut s = 0.0;
        for n in 0..ns {
            let wt = if n == 0 || n + 1 == ns { 0.5 * self.dt } else { self.dt };
            let slice = self.at(n).expect("in range");
            for (b, w) in boundary_weights.iter().enumerate() {
                for c in 0..self.channels {
                    s += wt * w * slice[b * self.channels + c].powi(2);
                }
            }
        }
        s.sqrt()
    }

    /// CSV with header `t, boundary_node, channel, value`; `boundary_node` is the
    /// grid index taken from `boundary_index`.
    pub fn to_csv(&self, boundary_index: &[usize]) -> String {
        let mut out = String::from("t,boundary_node,channel,value\n");
        for n in 0..self.samples() {
            let t = fmt_f64(n as f64 * self.dt);
            for b in 0..self.boundary_nodes {
                for c in 0..self.channels {
                    out.push_str(&format!(
                        "{t},{},{c},{}\n",
                        boundary_index.get(b).copied().unwrap_or(b),
                        fmt_f64(self.get(n, b, c))
                    ));
                }
            }
        }
        out
    }

    /// Inverse of [`ControlSignal::to_csv`]. Rows may come in any order.
    pub fn from_csv(text: &str, boundary_index: &[usize], channels: usize) -> Result<Self> {
        let mut rows = Vec::new();
        for (ln, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 4 {
                return Err(Error::InvalidInput(format!(
                    "control csv line {}: expected 4 fields",
                    ln + 1
                )));
            }
            let bad = |e: &dyn std::fmt::Display| Error::InvalidInput(format!("control csv line {}: {e}", ln + 1));
            let t: f64 = f[0].parse().map_err(|e| bad(&e))?;
            let node: usize = f[1].parse().map_err(|e| bad(&e))?;
            let ch: usize = f[2].parse().map_err(|e| bad(&e))?;
            let v: f64 = f[3].parse().map_err(|e| bad(&e))?;
            let b = boundary_index
                .iter()
                .position(|&x| x == node)
                .ok_or_else(|| bad(&format!("node {node} is not a boundary node")))?;
            if ch >= channels {
                return Err(bad(&format!("channel {ch} out of range")));
            }
            rows.push((t, b, ch, v));
        }
        let mut times: Vec<f64> = rows.iter().map(|r| r.0).collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        let dt = if times.len() > 1 { times[1] - times[0] } else { 0.0 };
        let mut s = Self::zeros(dt, times.len(), boundary_index.len(), channels);
        for (t, b, c, v) in rows {
            let n = if dt > 0.0 { (t / dt).round() as usize } else { 0 };
            s.values[(n * boundary_index.len() + b) * channels + c] = v;
        }
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn time_grid_rounds_up() {
        let g = TimeGrid::new(1.0, 0.3).unwrap();
        assert_eq!(g.steps, 4);
        assert!((g.dt - 0.25).abs() < 1e-15);
        let exact = TimeGrid::new(1.0, 0.25).unwrap();
        assert_eq!(exact.steps, 4);
        assert_eq!(exact.extended_to(1.5).steps, 6);
        assert!(TimeGrid::new(1.0, 0.0).is_err());
    }

    #[test]
    fn control_csv_round_trip() {
        let h = ControlSignal::from_fn(0.1, 5, 2, 2, |t, b, c| t.sin() + b as f64 - 0.5 * c as f64);
        let idx = [0, 40];
        let text = h.to_csv(&idx);
        assert!(text.starts_with("t,boundary_node,channel,value\n"));
        let back = ControlSignal::from_csv(&text, &idx, 2).unwrap();
        assert_eq!(back.values, h.values);
        assert_eq!(back.samples(), 5);
    }

    #[test]
    fn control_beyond_window_is_zero() {
        let h = ControlSignal::from_fn(0.5, 3, 1, 1, |_, _, _| 1.0);
        assert_eq!(h.get(2, 0, 0), 1.0);
        assert_eq!(h.get(3, 0, 0), 0.0);
        assert!(h.at(3).is_none());
        assert_eq!(h.support_end(), 1.0);
        // trapezoid: 0.25 + 0.5 + 0.25
        assert!((h.l2_norm(&[1.0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn map_components_applies_matrix_pointwise() {
        let d = BoxDomain::interval(1.0, 10).unwrap();
        let s = State::from_fn(&d, 2, |k, x| (k + 1) as f64 * x[0], |k, _| k as f64);
        let c = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
        let w = s.map_components(&c).unwrap();
        for i in 0..10 {
            assert!((w.u[i] + d.coords(i)[0]).abs() < 1e-15);
            assert_eq!(w.v[i], -1.0);
        }
    }
}
