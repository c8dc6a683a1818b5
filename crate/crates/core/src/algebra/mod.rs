//! Synchronization algebra: partitions, compatibility, reductions and certificates.

mod compat;
mod family;
mod partition;
mod similarity;

pub use compat::{
    check_cp_compatibility, reduce_coupling, reduce_matrix, within_block_condition, zero_sum_condition,
    CompatibilityReport, CouplingSpec, ReducedSystem,
};
pub use family::{
    biorthogonal_family, build_control_matrix, invariance_coefficients, rank_condition, two_group_kalman,
    BiorthogonalFamily, ControlMatrixMode, InvarianceReport, KalmanReport, RankReport,
};
pub use partition::{build_sync_matrix, kernel_basis, GroupPartition, KernelBasis, SyncMatrix};
pub use similarity::{reduced_similarity, symmetric_similarity, ReducedCertificate, SimilarityCertificate};
