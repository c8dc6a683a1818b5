use crate::error::{Error, Result};

/// Minimal node count per axis.
pub const MIN_NODES: usize = 8;

/// An interval `[0, L]` or a rectangle `[0, Lx] x [0, Ly]` with a uniform grid.
///
/// Nodes are numbered x-fastest: node `ix + nx * iy`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxDomain {
    lengths: Vec<f64>,
    nodes: Vec<usize>,
    weights: Vec<f64>,
    boundary: Vec<usize>,
    boundary_weights: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lengths: Vec<f64>, nodes: Vec<usize>) -> Result<Self> {
        if lengths.is_empty() || lengths.len() > 2 {
            return Err(Error::InvalidInput(format!(
                "domain dimension must be 1 or 2, got {}",
                lengths.len()
            )));
        }
        if nodes.len() != lengths.len() {
            return Err(Error::dims("grid node counts", lengths.len(), nodes.len()));
        }
        if let Some(l) = lengths.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(Error::InvalidInput(format!("domain length must be positive, got {l}")));
        }
        if let Some(n) = nodes.iter().find(|n| **n < MIN_NODES) {
            return Err(Error::InvalidInput(format!(
                "need at least {MIN_NODES} nodes per axis, got {n}"
            )));
        }
        let axis_w: Vec<Vec<f64>> = lengths
            .iter()
            .zip(&nodes)
            .map(|(&l, &n)| trapezoid_weights(n, l / (n - 1) as f64))
            .collect();
        let (weights, boundary, boundary_weights) = if lengths.len() == 1 {
            let n = nodes[0];
            (axis_w[0].clone(), vec![0, n - 1], vec![1.0, 1.0])
        } else {
            let (nx, ny) = (nodes[0], nodes[1]);
            let mut w = Vec::with_capacity(nx * ny);
            for iy in 0..ny {
                for ix in 0..nx {
                    w.push(axis_w[0][ix] * axis_w[1][iy]);
                }
            }
            // Faces x = 0, Lx carry the y-weights, faces y = 0, Ly the x-weights;
            // corners collect both.
            let mut gamma = vec![0.0; nx * ny];
            for iy in 0..ny {
                gamma[iy * nx] += axis_w[1][iy];
                gamma[iy * nx + nx - 1] += axis_w[1][iy];
            }
            for ix in 0..nx {
                gamma[ix] += axis_w[0][ix];
                gamma[(ny - 1) * nx + ix] += axis_w[0][ix];
            }
            let boundary: Vec<usize> = (0..nx * ny).filter(|&i| gamma[i] > 0.0).collect();
            let bw = boundary.iter().map(|&i| gamma[i]).collect();
            (w, boundary, bw)
        };
        let dom = Self {
            lengths,
            nodes,
            weights,
            boundary,
            boundary_weights,
        };
        debug_assert!(dom.multiplier_condition());
        Ok(dom)
    }

    pub fn interval(length: f64, nodes: usize) -> Result<Self> {
        Self::new(vec![length], vec![nodes])
    }

    pub fn rectangle(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Self> {
        Self::new(vec![lx, ly], vec![nx, ny])
    }

    pub fn dim(&self) -> usize {
        self.lengths.len()
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn grid_nodes(&self) -> &[usize] {
        &self.nodes
    }

    /// Total grid node count.
    pub fn node_count(&self) -> usize {
        self.weights.len()
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.lengths[axis] / (self.nodes[axis] - 1) as f64
    }

    pub fn min_spacing(&self) -> f64 {
        (0..self.dim()).map(|a| self.spacing(a)).fold(f64::INFINITY, f64::min)
    }

    pub fn diameter(&self) -> f64 {
        self.lengths.iter().map(|l| l * l).sum::<f64>().sqrt()
    }

    /// Largest stable-by-policy time step: `cfl * Δx` in 1D, `cfl * Δx / √2` in 2D.
    pub fn cfl_limit(&self, cfl_factor: f64) -> f64 {
        cfl_factor * self.min_spacing() / (self.dim() as f64).sqrt()
    }

    /// Trapezoid quadrature weights on the grid.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Boundary node indices, ascending.
    pub fn boundary_nodes(&self) -> &[usize] {
        &self.boundary
    }

    /// Trapezoid weights of the boundary nodes on Γ (1 at each end of an interval).
    pub fn boundary_weights(&self) -> &[f64] {
        &self.boundary_weights
    }

    /// Coordinates of node `i`.
    pub fn coords(&self, i: usize) -> Vec<f64> {
        if self.dim() == 1 {
            vec![i as f64 * self.spacing(0)]
        } else {
            let nx = self.nodes[0];
            vec![(i % nx) as f64 * self.spacing(0), (i / nx) as f64 * self.spacing(1)]
        }
    }

    /// `Σ w_i f_i g_i`.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        self.weights.iter().zip(f).zip(g).map(|((w, a), b)| w * a * b).sum()
    }

    /// `-W^{-1} K u`: second-order Laplacian with the Neumann ghost-node closure
    /// (zero flux). Writes into `out`, which must have `node_count` entries.
    pub fn neumann_laplacian(&self, u: &[f64], out: &mut [f64]) {
        if self.dim() == 1 {
            lap_1d(u, out, self.spacing(0), 1, self.nodes[0], false);
        } else {
            let (nx, ny) = (self.nodes[0], self.nodes[1]);
            for iy in 0..ny {
                let row = iy * nx..(iy + 1) * nx;
                lap_1d(&u[row.clone()], &mut out[row], self.spacing(0), 1, nx, false);
            }
            for ix in 0..nx {
                lap_1d(&u[ix..], &mut out[ix..], self.spacing(1), nx, ny, true);
            }
        }
    }

    /// `(K u, u)`: the discrete Dirichlet integral `∫|∇u|²`.
    pub fn stiffness_form(&self, u: &[f64]) -> f64 {
        let hx = self.spacing(0);
        if self.dim() == 1 {
            return u.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum::<f64>() / hx;
        }
        let (nx, ny) = (self.nodes[0], self.nodes[1]);
        let hy = self.spacing(1);
        let wx = trapezoid_weights(nx, hx);
        let wy = trapezoid_weights(ny, hy);
        let mut s = 0.0;
        for iy in 0..ny {
            for ix in 0..nx - 1 {
                s += wy[iy] * (u[iy * nx + ix + 1] - u[iy * nx + ix]).powi(2) / hx;
            }
        }
        for ix in 0..nx {
            for iy in 0..ny - 1 {
                s += wx[ix] * (u[(iy + 1) * nx + ix] - u[iy * nx + ix]).powi(2) / hy;
            }
        }
        s
    }

    /// Ratio `γ_i / w_i` at boundary nodes: how strongly a boundary flux enters
    /// the nodal acceleration. Equals `2/Δx` on faces, `2/Δx + 2/Δy` at corners.
    pub fn boundary_gains(&self) -> Vec<f64> {
        self.boundary
            .iter()
            .zip(&self.boundary_weights)
            .map(|(&i, g)| g / self.weights[i])
            .collect()
    }

    /// Multiplier condition `(x - x0, ν) > 0` on Γ with `x0` the box centre.
    /// Always holds for a box; kept as a construction-time sanity check.
    fn multiplier_condition(&self) -> bool {
        self.boundary.iter().all(|&i| {
            let x = self.coords(i);
            (0..self.dim()).any(|a| {
                let c = x[a] - 0.5 * self.lengths[a];
                let on_face = x[a] == 0.0 || (x[a] - self.lengths[a]).abs() < 1e-12 * self.lengths[a];
                on_face && c.abs() > 0.0
            })
        })
    }
}

/// Lumped trapezoid weights: `h/2` at the ends, `h` inside.
pub(crate) fn trapezoid_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; n];
    w[0] = 0.5 * h;
    w[n - 1] = 0.5 * h;
    w
}

/// 1D Neumann Laplacian along a strided line of `n` nodes. With `accumulate`
/// the result is added to `out`.
fn lap_1d(u: &[f64], out: &mut [f64], h: f64, stride: usize, n: usize, accumulate: bool) {
    let inv = 1.0 / (h * h);
    let at = |k: usize| u[k * stride];
    let mut put = |k: usize, v: f64| {
        if accumulate {
            out[k * stride] += v;
        } else {
            out[k * stride] = v;
        }
    };
    put(0, 2.0 * (at(1) - at(0)) * inv);
    for k in 1..n - 1 {
        put(k, (at(k + 1) - 2.0 * at(k) + at(k - 1)) * inv);
    }
    put(n - 1, 2.0 * (at(n - 2) - at(n - 1)) * inv);
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn validation() {
        assert!(BoxDomain::interval(1.0, 7).is_err());
        assert!(BoxDomain::interval(0.0, 20).is_err());
        assert!(BoxDomain::new(vec![1.0; 3], vec![10; 3]).is_err());
        assert!(BoxDomain::new(vec![1.0, 1.0], vec![10]).is_err());
    }

    #[test]
    fn weights_integrate_constants() {
        let d = BoxDomain::rectangle(2.0, 0.5, 11, 9).unwrap();
        assert_relative_eq!(d.weights().iter().sum::<f64>(), 1.0, epsilon = 1e-14);
        // perimeter
        assert_relative_eq!(d.boundary_weights().iter().sum::<f64>(), 5.0, epsilon = 1e-14);
        assert_eq!(d.boundary_nodes().len(), 2 * 11 + 2 * 9 - 4);
        let i = BoxDomain::interval(3.0, 31).unwrap();
        assert_relative_eq!(i.weights().iter().sum::<f64>(), 3.0, epsilon = 1e-14);
        assert_eq!(i.boundary_nodes(), &[0, 30]);
    }

    #[test]
    fn laplacian_of_quadratic_and_stiffness_of_linear() {
        let d = BoxDomain::interval(1.0, 21).unwrap();
        let h = d.spacing(0);
        let u: Vec<f64> = (0..21).map(|i| (i as f64 * h).powi(2)).collect();
        let mut out = vec![0.0; 21];
        d.neumann_laplacian(&u, &mut out);
        for v in &out[1..20] {
            assert_relative_eq!(*v, 2.0, epsilon = 1e-9);
        }
        let lin: Vec<f64> = (0..21).map(|i| 3.0 * i as f64 * h).collect();
        assert_relative_eq!(d.stiffness_form(&lin), 9.0, epsilon = 1e-12);
    }

    #[test]
    fn stiffness_matches_laplacian_pairing() {
        let d = BoxDomain::rectangle(1.0, 1.5, 9, 12).unwrap();
        let u: Vec<f64> = (0..d.node_count()).map(|i| ((i * 37 % 11) as f64).sin()).collect();
        let mut lap = vec![0.0; u.len()];
        d.neumann_laplacian(&u, &mut lap);
        // (Ku, u) = -(W lap, u)
        assert_relative_eq!(
            d.stiffness_form(&u),
            -d.inner(&lap, &u),
            epsilon = 1e-10,
            max_relative = 1e-12
        );
    }

    #[test]
    fn boundary_gains_on_faces_and_corners() {
        let d = BoxDomain::rectangle(1.0, 2.0, 11, 11).unwrap();
        let (hx, hy) = (d.spacing(0), d.spacing(1));
        let gains = d.boundary_gains();
        let pos = |i: usize| d.boundary_nodes().iter().position(|&b| b == i).unwrap();
        assert_relative_eq!(gains[pos(0)], 2.0 / hx + 2.0 / hy, epsilon = 1e-12);
        assert_relative_eq!(gains[pos(5)], 2.0 / hy, epsilon = 1e-12);
        assert_relative_eq!(gains[pos(5 * 11)], 2.0 / hx, epsilon = 1e-12);
        assert!(d.multiplier_condition());
    }
}
