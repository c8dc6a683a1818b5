use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad failure class, used by the CLI to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Algebraic hypotheses on A, B, D do not hold.
    MatrixCondition,
    /// A control could not be synthesized to the requested accuracy.
    Synthesis,
    /// Malformed input: shapes, partitions, parse errors.
    Input,
    /// A simulation produced non-finite values or violated its stability bound.
    Simulation,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("dimension mismatch for {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: String,
        actual: String,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(
        "matrix is not C_p-compatible: block row sums differ by {deviation:.3e} \
         (row group {row_group}, column group {col_group})"
    )]
    Incompatible {
        row_group: usize,
        col_group: usize,
        deviation: f64,
    },

    #[error("rank(C_p D) = {rank}, but N - p = {required} is needed")]
    RankCondition { rank: usize, required: usize },

    #[error("matrix has a complex eigenvalue pair (imaginary part {imag:.3e})")]
    NotRealSpectrum { imag: f64 },

    #[error("matrix is not diagonalizable ({0})")]
    NotDiagonalizable(String),

    #[error("biorthogonal family is degenerate: Gram matrix (E_r, e_s) is singular")]
    DegenerateFamily,

    #[error("matrix is not symmetric positive definite: {0}")]
    NotSpd(String),

    #[error("matrix is singular: {0}")]
    Singular(String),

    #[error("CFL violation: dt = {dt:.6e} exceeds the limit {limit:.6e}")]
    Cfl { dt: f64, limit: f64 },

    #[error("simulation blew up at step {step} (t = {t:.6e})")]
    BlowUp { step: usize, t: f64 },

    #[error("conjugate gradient did not converge in {iterations} iterations (last relative residual {:.3e})", history.last().copied().unwrap_or(f64::NAN))]
    CgNotConverged { iterations: usize, history: Vec<f64> },

    #[error("synthesis residual {residual:.3e} exceeds threshold {threshold:.3e}")]
    ResidualTooLarge { residual: f64, threshold: f64 },

    #[error("empty control basis: no coefficients to assemble")]
    EmptyBasis,

    #[error("grid mismatch: {0}")]
    GridMismatch(String),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Incompatible { .. }
            | Error::RankCondition { .. }
            | Error::NotRealSpectrum { .. }
            | Error::NotDiagonalizable(_)
            | Error::DegenerateFamily
            | Error::NotSpd(_)
            | Error::Singular(_) => ErrorKind::MatrixCondition,
            Error::CgNotConverged { .. } | Error::ResidualTooLarge { .. } | Error::EmptyBasis => ErrorKind::Synthesis,
            Error::InvalidPartition(_)
            | Error::DimensionMismatch { .. }
            | Error::InvalidInput(_)
            | Error::GridMismatch(_) => ErrorKind::Input,
            Error::Cfl { .. } | Error::BlowUp { .. } => ErrorKind::Simulation,
        }
    }

    pub(crate) fn dims(what: &'static str, expected: impl ToString, actual: impl ToString) -> Self {
        Error::DimensionMismatch {
            what,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}
