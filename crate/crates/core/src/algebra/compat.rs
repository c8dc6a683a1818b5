use nalgebra::DMatrix;

use super::partition::{GroupPartition, SyncMatrix};
use crate::error::{Error, Result};
use crate::linalg::{self, frobenius, numerical_rank, RANK_RTOL};

/// Internal coupling `A`, boundary coupling `B` and control matrix `D` of the
/// system `U'' - ΔU + AU = 0`, `∂_ν U + BU = DH`.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingSpec {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub d: DMatrix<f64>,
}

impl CouplingSpec {
    /// Checks shapes and that `D` has full column rank.
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, d: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if !a.is_square() {
            return Err(Error::dims(
                "A",
                format!("{n}x{n}"),
                format!("{}x{}", a.nrows(), a.ncols()),
            ));
        }
        if b.shape() != (n, n) {
            return Err(Error::dims(
                "B",
                format!("{n}x{n}"),
                format!("{}x{}", b.nrows(), b.ncols()),
            ));
        }
        if d.nrows() != n {
            return Err(Error::dims("D rows", n, d.nrows()));
        }
        if d.ncols() > n {
            return Err(Error::InvalidInput(format!(
                "D has {} columns, more than N = {n}",
                d.ncols()
            )));
        }
        if d.ncols() > 0 && numerical_rank(&d, RANK_RTOL) < d.ncols() {
            return Err(Error::InvalidInput("D must have full column rank".into()));
        }
        Ok(Self { a, b, d })
    }

    /// Shape checks only; `D` may be rank deficient. Used for reduced systems,
    /// where `C_p D` has `M` columns but rank `N - p`.
    pub fn with_any_rank(a: DMatrix<f64>, b: DMatrix<f64>, d: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if !a.is_square() || b.shape() != (n, n) || d.nrows() != n {
            return Err(Error::dims(
                "couplings",
                format!("A, B {n}x{n}, D {n}xM"),
                format!("A {:?}, B {:?}, D {:?}", a.shape(), b.shape(), d.shape()),
            ));
        }
        Ok(Self { a, b, d })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// Number of control channels `M`.
    pub fn m(&self) -> usize {
        self.d.ncols()
    }

    /// Couplings of the adjoint system: `A^T`, `B^T`, no control.
    pub fn adjoint(&self) -> Self {
        Self {
            a: self.a.transpose(),
            b: self.b.transpose(),
            d: DMatrix::zeros(self.n(), 0),
        }
    }
}

/// Outcome of the block row-sum test.
#[derive(Debug, Clone, PartialEq)]
pub struct CompatibilityReport {
    pub compatible: bool,
    /// `alpha[(s, r)]`: common row sum over the columns of group `r`, rows of group `s`,
    /// so that `M e_r = Σ_s alpha[(s, r)] e_s` when compatible.
    pub coefficients: DMatrix<f64>,
    /// Largest spread of block row sums, with its (row group, column group).
    pub worst: (usize, usize, f64),
}

pub fn check_cp_compatibility(m: &DMatrix<f64>, partition: &GroupPartition, tol: f64) -> Result<CompatibilityReport> {
    let n = partition.n();
    if m.shape() != (n, n) {
        return Err(Error::dims(
            "matrix",
            format!("{n}x{n}"),
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    let p = partition.p();
    let mut alpha = DMatrix::zeros(p, p);
    let mut worst = (0, 0, 0.0_f64);
    for (r, cols) in partition.groups().enumerate() {
        for (s, rows) in partition.groups().enumerate() {
            let sums: Vec<f64> = rows
                .clone()
                .map(|i| cols.clone().map(|j| m[(i, j)]).sum::<f64>())
                .collect();
            let lo = sums.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = sums.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            alpha[(s, r)] = sums.iter().sum::<f64>() / sums.len() as f64;
            if hi - lo > worst.2 {
                worst = (s, r, hi - lo);
            }
        }
    }
    let compatible = worst.2 <= tol * frobenius(m);
    Ok(CompatibilityReport {
        compatible,
        coefficients: alpha,
        worst,
    })
}

/// Zero-sum condition by blocks: compatible with all block row sums zero (`M e_r = 0`).
pub fn zero_sum_condition(m: &DMatrix<f64>, partition: &GroupPartition, tol: f64) -> Result<bool> {
    let rep = check_cp_compatibility(m, partition, tol)?;
    let scale = tol * frobenius(m);
    Ok(rep.compatible && rep.coefficients.iter().all(|a| a.abs() <= scale))
}

/// `M e_r ∈ V_r` for every group: the image of each indicator stays inside the
/// coordinates of its own group.
pub fn within_block_condition(m: &DMatrix<f64>, partition: &GroupPartition, tol: f64) -> Result<bool> {
    let n = partition.n();
    if m.shape() != (n, n) {
        return Err(Error::dims(
            "matrix",
            format!("{n}x{n}"),
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    let scale = tol * frobenius(m);
    for (r, cols) in partition.groups().enumerate() {
        for i in (0..n).filter(|i| partition.group_of(*i) != Some(r)) {
            let v: f64 = cols.clone().map(|j| m[(i, j)]).sum();
            if v.abs() > scale {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// `M_red = C_p M C_p^T (C_p C_p^T)^{-1}`, the unique solution of `C_p M = M_red C_p`
/// once `M` is `C_p`-compatible.
pub fn reduce_matrix(m: &DMatrix<f64>, c: &SyncMatrix, tol: f64) -> Result<DMatrix<f64>> {
    let rep = check_cp_compatibility(m, c.partition(), tol)?;
    if !rep.compatible {
        let (row_group, col_group, deviation) = rep.worst;
        return Err(Error::Incompatible {
            row_group,
            col_group,
            deviation,
        });
    }
    let cm = c.matrix();
    let cct = cm * cm.transpose();
    let cct_inv = linalg::inverse(&cct, "C_p C_p^T")?;
    Ok(cm * m * cm.transpose() * cct_inv)
}

/// Reduced couplings `(Ā_p, B̄_p, D̄_p)` governing `W = C_p U`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedSystem {
    pub a_red: DMatrix<f64>,
    pub b_red: DMatrix<f64>,
    pub d_red: DMatrix<f64>,
}

pub fn reduce_coupling(coupling: &CouplingSpec, c: &SyncMatrix, tol: f64) -> Result<ReducedSystem> {
    if coupling.n() != c.partition().n() {
        return Err(Error::dims("coupling size", c.partition().n(), coupling.n()));
    }
    Ok(ReducedSystem {
        a_red: reduce_matrix(&coupling.a, c, tol)?,
        b_red: reduce_matrix(&coupling.b, c, tol)?,
        d_red: c.matrix() * &coupling.d,
    })
}
