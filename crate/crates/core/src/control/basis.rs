use crate::error::{Error, Result};
use crate::sim::{BoxDomain, ControlSignal, TimeGrid};

/// Piecewise-linear hats in time on `[0, T_s]`, one per (interior knot, boundary
/// node, channel). Each hat vanishes at `0` and `T_s`, and is scaled by
/// `1 / sqrt(Δτ γ_b)` so that coefficient norms approximate `L²(Σ)` norms.
///
/// Coefficient `j = (knot * nb + b) * channels + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlBasis {
    /// Hat centres `τ_q = (q + 1) Δτ`.
    pub knots: Vec<f64>,
    pub width: f64,
    pub support_end: f64,
    pub boundary_nodes: usize,
    pub channels: usize,
    scales: Vec<f64>,
}

impl ControlBasis {
    /// `knots` interior knots on `[0, support_end]`.
    pub fn new(domain: &BoxDomain, channels: usize, support_end: f64, knots: usize) -> Result<Self> {
        if !(support_end > 0.0 && support_end.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "control support must be positive, got {support_end}"
            )));
        }
        let width = support_end / (knots + 1) as f64;
        let scales = domain
            .boundary_weights()
            .iter()
            .map(|g| 1.0 / (width * g).sqrt())
            .collect();
        Ok(Self {
            knots: (1..=knots).map(|q| q as f64 * width).collect(),
            width,
            support_end,
            boundary_nodes: domain.boundary_nodes().len(),
            channels,
            scales,
        })
    }

    /// Default resolution: `Δτ ≈ Δx`.
    pub fn default_knots(domain: &BoxDomain, support_end: f64) -> usize {
        ((support_end / domain.min_spacing()).round() as usize)
            .saturating_sub(1)
            .max(1)
    }

    /// Upper bound on the knot count: `Δτ ≥ Δx / 2` (twice the grid Nyquist rate).
    pub fn max_knots(domain: &BoxDomain, support_end: f64) -> usize {
        ((2.0 * support_end / domain.min_spacing()).floor() as usize)
            .saturating_sub(1)
            .max(1)
    }

    /// Knot count clamped to `[1, max_knots]`.
    pub fn with_resolution(
        domain: &BoxDomain,
        channels: usize,
        support_end: f64,
        knots: Option<usize>,
    ) -> Result<Self> {
        let k = knots
            .unwrap_or_else(|| Self::default_knots(domain, support_end))
            .clamp(1, Self::max_knots(domain, support_end));
        Self::new(domain, channels, support_end, k)
    }

    /// Coefficient count `K`.
    pub fn len(&self) -> usize {
        self.knots.len() * self.boundary_nodes * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(knot, boundary index, channel)` of coefficient `j`.
    pub fn index(&self, j: usize) -> (usize, usize, usize) {
        let c = j % self.channels;
        let rest = j / self.channels;
        (rest / self.boundary_nodes, rest % self.boundary_nodes, c)
    }

    fn hat(&self, q: usize, t: f64) -> f64 {
        (1.0 - (t - self.knots[q]).abs() / self.width).max(0.0)
    }

    /// A time step up to which coefficient `j` is zero (one step of slack for roundoff).
    pub fn first_active_step(&self, j: usize, grid: TimeGrid) -> usize {
        let (q, _, _) = self.index(j);
        let start = self.knots[q] - self.width;
        (((start / grid.dt).floor() - 1.0).max(0.0) as usize).min(grid.steps)
    }

    /// `Σ_j c_j φ_j` sampled on `grid` (zero at and after `support_end`).
    pub fn signal(&self, coeffs: &[f64], grid: TimeGrid) -> Result<ControlSignal> {
        if coeffs.len() != self.len() {
            return Err(Error::dims("control coefficients", self.len(), coeffs.len()));
        }
        let (nb, m) = (self.boundary_nodes, self.channels);
        let mut h = ControlSignal::zeros(grid.dt, grid.steps + 1, nb, m);
        for n in 0..=grid.steps {
            let t = grid.time(n);
            if t >= self.support_end {
                break;
            }
            let lo = ((t / self.width).floor() as usize).saturating_sub(1);
            for q in lo..(lo + 3).min(self.knots.len()) {
                let v = self.hat(q, t);
                if v == 0.0 {
                    continue;
                }
                for b in 0..nb {
                    for c in 0..m {
                        let j = (q * nb + b) * m + c;
                        h.values[(n * nb + b) * m + c] += coeffs[j] * v * self.scales[b];
                    }
                }
            }
        }
        Ok(h)
    }

    /// Signal of the single basis function `j`.
    pub fn unit_signal(&self, j: usize, grid: TimeGrid) -> ControlSignal {
        let (q, b, c) = self.index(j);
        let (nb, m) = (self.boundary_nodes, self.channels);
        let mut h = ControlSignal::zeros(grid.dt, grid.steps + 1, nb, m);
        for n in 0..=grid.steps {
            let v = self.hat(q, grid.time(n));
            if v != 0.0 {
                h.values[(n * nb + b) * m + c] = v * self.scales[b];
            }
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hats_vanish_at_window_ends_and_sum_linearly() {
        let d = BoxDomain::interval(1.0, 11).unwrap();
        let basis = ControlBasis::new(&d, 1, 2.0, 7).unwrap();
        assert_eq!(basis.len(), 14);
        let grid = TimeGrid { dt: 0.01, steps: 250 };
        let ones = vec![1.0; basis.len()];
        let h = basis.signal(&ones, grid).unwrap();
        assert_eq!(h.get(0, 0, 0), 0.0);
        assert_eq!(h.get(200, 1, 0), 0.0);
        assert_eq!(h.get(230, 1, 0), 0.0);
        // partition of unity between the first and last knot
        assert!((h.get(100, 0, 0) - 1.0 / basis.width.sqrt()).abs() < 1e-12);
        let mut sum = ControlSignal::zeros(grid.dt, grid.steps + 1, 2, 1);
        for j in 0..basis.len() {
            sum = sum.axpy(1.0, &basis.unit_signal(j, grid)).unwrap();
        }
        for (a, b) in sum.values.iter().zip(&h.values) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn resolution_is_capped() {
        let d = BoxDomain::interval(1.0, 11).unwrap();
        let b = ControlBasis::with_resolution(&d, 1, 4.0, Some(10_000)).unwrap();
        assert_eq!(b.knots.len(), ControlBasis::max_knots(&d, 4.0));
        assert!(b.width >= 0.5 * d.min_spacing() - 1e-12);
        assert_eq!(ControlBasis::default_knots(&d, 4.0), 39);
    }

    #[test]
    fn first_active_step_precedes_support() {
        let d = BoxDomain::interval(1.0, 11).unwrap();
        let basis = ControlBasis::new(&d, 2, 1.0, 4).unwrap();
        let grid = TimeGrid { dt: 0.05, steps: 20 };
        for j in 0..basis.len() {
            let h = basis.unit_signal(j, grid);
            let s = basis.first_active_step(j, grid);
            for n in 0..=s {
                assert!(h.at(n).unwrap().iter().all(|&v| v == 0.0));
            }
        }
    }
}
