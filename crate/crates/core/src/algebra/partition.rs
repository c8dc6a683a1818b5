use std::fmt;
use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Division `0 = n_0 < n_1 < ... < n_p = N` of the state components into `p` groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupPartition {
    breakpoints: Vec<usize>,
}

impl GroupPartition {
    /// Validates a partition; every group must hold at least two components.
    pub fn new(breakpoints: Vec<usize>) -> Result<Self> {
        Self::with_options(breakpoints, false)
    }

    /// Like [`GroupPartition::new`], but `allow_singletons` lowers the minimal
    /// block size to one.
    pub fn with_options(breakpoints: Vec<usize>, allow_singletons: bool) -> Result<Self> {
        if breakpoints.len() < 2 {
            return Err(Error::InvalidPartition(
                "need at least two breakpoints (0 and N)".into(),
            ));
        }
        if breakpoints[0] != 0 {
            return Err(Error::InvalidPartition(format!(
                "first breakpoint must be 0, got {}",
                breakpoints[0]
            )));
        }
        let min_block = if allow_singletons { 1 } else { 2 };
        for w in breakpoints.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::InvalidPartition(format!(
                    "breakpoints must be strictly increasing ({} then {})",
                    w[0], w[1]
                )));
            }
            if w[1] - w[0] < min_block {
                return Err(Error::InvalidPartition(format!(
                    "group [{}, {}) has size {} < {min_block}",
                    w[0],
                    w[1],
                    w[1] - w[0]
                )));
            }
        }
        Ok(Self { breakpoints })
    }

    /// Parse a comma separated breakpoint list such as `"0,2,4"`.
    pub fn parse(s: &str, allow_singletons: bool) -> Result<Self> {
        let bps = s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|e| Error::InvalidPartition(format!("cannot parse {t:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::with_options(bps, allow_singletons)
    }

    /// Evenly sized groups, e.g. `uniform(3, 2)` is `0,2,4,6`.
    pub fn uniform(groups: usize, size: usize) -> Result<Self> {
        Self::new((0..=groups).map(|r| r * size).collect())
    }

    pub fn breakpoints(&self) -> &[usize] {
        &self.breakpoints
    }

    /// Total component count `N`.
    pub fn n(&self) -> usize {
        *self.breakpoints.last().expect("validated")
    }

    /// Group count `p`.
    pub fn p(&self) -> usize {
        self.breakpoints.len() - 1
    }

    /// Component index ranges of the groups (0-based, half-open).
    pub fn groups(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        self.breakpoints.windows(2).map(|w| w[0]..w[1])
    }

    pub fn group(&self, r: usize) -> Range<usize> {
        self.breakpoints[r]..self.breakpoints[r + 1]
    }

    pub fn group_of(&self, component: usize) -> Option<usize> {
        self.groups().position(|g| g.contains(&component))
    }
}

impl fmt::Display for GroupPartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.breakpoints.iter().map(usize::to_string).collect();
        f.write_str(&parts.join(","))
    }
}

/// The `(N-p) x N` matrix of synchronization by `p` groups: block diagonal with
/// consecutive-difference blocks `S_r`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyncMatrix {
    entries: DMatrix<f64>,
    partition: GroupPartition,
}

impl SyncMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn partition(&self) -> &GroupPartition {
        &self.partition
    }

    pub fn rows(&self) -> usize {
        self.entries.nrows()
    }

    /// Applies `C_p` to a component vector.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.rows());
        for g in self.partition.groups() {
            for i in g.start..g.end - 1 {
                out.push(x[i] - x[i + 1]);
            }
        }
        out
    }
}

pub fn build_sync_matrix(partition: &GroupPartition) -> SyncMatrix {
    let n = partition.n();
    let mut c = DMatrix::zeros(n - partition.p(), n);
    let mut row = 0;
    for g in partition.groups() {
        for i in g.start..g.end - 1 {
            c[(row, i)] = 1.0;
            c[(row, i + 1)] = -1.0;
            row += 1;
        }
    }
    SyncMatrix {
        entries: c,
        partition: partition.clone(),
    }
}

/// Group indicator vectors `e_1..e_p` spanning `Ker(C_p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelBasis {
    vectors: DMatrix<f64>,
}

impl KernelBasis {
    /// `N x p` matrix whose columns are the `e_r`.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn vector(&self, r: usize) -> DVector<f64> {
        self.vectors.column(r).into_owned()
    }

    pub fn p(&self) -> usize {
        self.vectors.ncols()
    }
}

pub fn kernel_basis(partition: &GroupPartition) -> KernelBasis {
    let mut e = DMatrix::zeros(partition.n(), partition.p());
    for (r, g) in partition.groups().enumerate() {
        for i in g {
            e[(i, r)] = 1.0;
        }
    }
    KernelBasis { vectors: e }
}
