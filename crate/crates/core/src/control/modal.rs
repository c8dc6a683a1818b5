use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::sim::{BoxDomain, State};

/// Coordinates of a state in the Neumann eigenmodes of the grid, weighted so that
/// the Euclidean norm is the discrete `H¹ x L²` norm:
/// `‖z‖² = Σ_k (u_k, (W + K) u_k) + (v_k, W v_k)`.
///
/// Layout: `[u-part of every component, v-part of every component]`, each block
/// `nodes` long, modes in ascending frequency.
#[derive(Debug, Clone)]
pub struct ModalCoordinates {
    n: usize,
    nodes: usize,
    /// Orthonormal eigenvectors of `W^{-1/2} K W^{-1/2}`.
    y: DMatrix<f64>,
    sqrt_w: Vec<f64>,
    /// Mode frequencies `ω`.
    freq: Vec<f64>,
}

impl ModalCoordinates {
    pub fn new(domain: &BoxDomain, n: usize) -> Self {
        let nodes = domain.node_count();
        let w = domain.weights();
        let sqrt_w: Vec<f64> = w.iter().map(|x| x.sqrt()).collect();
        // Columns of K via its action: K e_j = -W lap(e_j).
        let mut k = DMatrix::zeros(nodes, nodes);
        let mut unit = vec![0.0; nodes];
        let mut lap = vec![0.0; nodes];
        for j in 0..nodes {
            unit[j] = 1.0;
            domain.neumann_laplacian(&unit, &mut lap);
            for i in 0..nodes {
                k[(i, j)] = -w[i] * lap[i] / (sqrt_w[i] * sqrt_w[j]);
            }
            unit[j] = 0.0;
        }
        let k = (&k + k.transpose()) * 0.5;
        let eig = SymmetricEigen::new(k);
        let mut order: Vec<usize> = (0..nodes).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let y = DMatrix::from_fn(nodes, nodes, |i, j| eig.eigenvectors[(i, order[j])]);
        let freq = order.iter().map(|&j| eig.eigenvalues[j].max(0.0).sqrt()).collect();
        Self {
            n,
            nodes,
            y,
            sqrt_w,
            freq,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn len(&self) -> usize {
        2 * self.n * self.nodes
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.freq
    }

    fn check(&self, s: &State) -> Result<()> {
        if s.n != self.n || s.nodes != self.nodes {
            return Err(Error::dims(
                "state for modal coordinates",
                format!("{} x {}", self.n, self.nodes),
                format!("{} x {}", s.n, s.nodes),
            ));
        }
        Ok(())
    }

    pub fn stack(&self, s: &State) -> Result<DVector<f64>> {
        self.check(s)?;
        let nn = self.nodes;
        let mut z = DVector::zeros(self.len());
        for k in 0..self.n {
            let wu = DVector::from_iterator(nn, s.u_comp(k).iter().zip(&self.sqrt_w).map(|(a, b)| a * b));
            let wv = DVector::from_iterator(nn, s.v_comp(k).iter().zip(&self.sqrt_w).map(|(a, b)| a * b));
            let au = self.y.tr_mul(&wu);
            let av = self.y.tr_mul(&wv);
            for j in 0..nn {
                z[k * nn + j] = (1.0 + self.freq[j] * self.freq[j]).sqrt() * au[j];
                z[(self.n + k) * nn + j] = av[j];
            }
        }
        Ok(z)
    }

    pub fn unstack(&self, z: &DVector<f64>) -> Result<State> {
        if z.len() != self.len() {
            return Err(Error::dims("modal vector", self.len(), z.len()));
        }
        let nn = self.nodes;
        let mut s = State::zeros(self.n, nn);
        for k in 0..self.n {
            let au = DVector::from_fn(nn, |j, _| z[k * nn + j] / (1.0 + self.freq[j] * self.freq[j]).sqrt());
            let av = DVector::from_fn(nn, |j, _| z[(self.n + k) * nn + j]);
            let u = &self.y * au;
            let v = &self.y * av;
            for i in 0..nn {
                s.u[k * nn + i] = u[i] / self.sqrt_w[i];
                s.v[k * nn + i] = v[i] / self.sqrt_w[i];
            }
        }
        Ok(s)
    }

    /// Discrete `H¹ x L²` norm.
    pub fn norm(&self, s: &State) -> Result<f64> {
        Ok(self.stack(s)?.norm())
    }

    /// Rows of the stacked vector belonging to modes with `ω ≤ fraction * ω_max`.
    pub fn low_frequency_rows(&self, fraction: f64) -> Vec<usize> {
        let wmax = self.freq.iter().copied().fold(0.0, f64::max);
        let keep: Vec<usize> = (0..self.nodes).filter(|&j| self.freq[j] <= fraction * wmax).collect();
        (0..2 * self.n)
            .flat_map(|blk| keep.iter().map(move |&j| blk * self.nodes + j))
            .collect()
    }
}
