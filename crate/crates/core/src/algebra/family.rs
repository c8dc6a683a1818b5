use nalgebra::{DMatrix, DVector};

use super::partition::{GroupPartition, KernelBasis, SyncMatrix};
use super::similarity::SimilarityCertificate;
use crate::error::{Error, Result};
use crate::linalg::{self, frobenius, lstsq, null_space, numerical_rank, spd_sqrt_pair, RANK_RTOL};

/// Vectors `E_1..E_p` with `(E_r, e_s) = δ_rs`.
#[derive(Debug, Clone, PartialEq)]
pub struct BiorthogonalFamily {
    /// `N x p`, columns are the `E_r`.
    pub vectors: DMatrix<f64>,
    /// Symmetrizing transform `Q` the family was built from (`E_r ∝ Q^T Q e_r`).
    pub source: DMatrix<f64>,
}

impl BiorthogonalFamily {
    /// Family for `Q = I`: `E_r = e_r / ‖e_r‖²`, i.e. group averages.
    pub fn canonical(basis: &KernelBasis) -> Self {
        let n = basis.matrix().nrows();
        let mut v = basis.matrix().clone();
        for mut col in v.column_iter_mut() {
            let nrm2 = col.norm_squared();
            col /= nrm2;
        }
        Self {
            vectors: v,
            source: DMatrix::identity(n, n),
        }
    }

    pub fn p(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn n(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn vector(&self, r: usize) -> DVector<f64> {
        self.vectors.column(r).into_owned()
    }

    /// Gram matrix `(E_r, e_s)`.
    pub fn gram(&self, basis: &KernelBasis) -> DMatrix<f64> {
        self.vectors.transpose() * basis.matrix()
    }
}

/// Builds `E_r = Q^T Q e_r` from a certificate (`Q = P^{-1}`, so that
/// `B^T E_r = Q^T Q B e_r`) and renormalizes by the inverse Gram matrix.
pub fn biorthogonal_family(cert: &SimilarityCertificate, basis: &KernelBasis) -> Result<BiorthogonalFamily> {
    if cert.n() != basis.matrix().nrows() {
        return Err(Error::dims("certificate size", basis.matrix().nrows(), cert.n()));
    }
    let q = cert.symmetrizer()?;
    let raw = q.transpose() * &q * basis.matrix();
    let gram = raw.transpose() * basis.matrix();
    if numerical_rank(&gram, RANK_RTOL) < basis.p() {
        return Err(Error::DegenerateFamily);
    }
    let gram_inv_t = linalg::inverse(&gram, "family Gram matrix")
        .map_err(|_| Error::DegenerateFamily)?
        .transpose();
    Ok(BiorthogonalFamily {
        vectors: raw * gram_inv_t,
        source: q,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvarianceReport {
    pub invariant: bool,
    /// `c[(r, s)]` with `M^T E_r ≈ Σ_s c[(r, s)] E_s`.
    pub coefficients: DMatrix<f64>,
    pub residual: f64,
}

/// Least-squares test of `M^T span{E_r} ⊆ span{E_r}`.
pub fn invariance_coefficients(m: &DMatrix<f64>, family: &BiorthogonalFamily, tol: f64) -> Result<InvarianceReport> {
    let n = family.n();
    if m.shape() != (n, n) {
        return Err(Error::dims(
            "matrix",
            format!("{n}x{n}"),
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    let e = &family.vectors;
    let mte = m.transpose() * e;
    let ct = lstsq(e, &mte);
    let residual = frobenius(&(&mte - e * &ct));
    Ok(InvarianceReport {
        invariant: residual <= tol * frobenius(m),
        coefficients: ct.transpose(),
        residual,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum ControlMatrixMode<'a> {
    /// `D = C_p^T`.
    Canonical,
    /// Columns form an orthonormal basis of `V^⊥`, `V = span{E_r}`, so `Ker(D^T) = V`.
    FromFamily(&'a BiorthogonalFamily),
}

pub fn build_control_matrix(partition: &GroupPartition, mode: ControlMatrixMode<'_>) -> Result<DMatrix<f64>> {
    match mode {
        ControlMatrixMode::Canonical => Ok(super::partition::build_sync_matrix(partition).matrix().transpose()),
        ControlMatrixMode::FromFamily(family) => {
            if family.n() != partition.n() {
                return Err(Error::dims("family length", partition.n(), family.n()));
            }
            if family.p() != partition.p() || numerical_rank(&family.vectors, RANK_RTOL) != partition.p() {
                return Err(Error::DegenerateFamily);
            }
            let d = null_space(&family.vectors.transpose(), RANK_RTOL);
            if d.ncols() != partition.n() - partition.p() {
                return Err(Error::DegenerateFamily);
            }
            Ok(d)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankReport {
    pub rank_cpd: usize,
    pub required: usize,
    pub satisfies: bool,
}

/// Checks `rank(C_p D) = N - p`, counting singular values above `tol * σ_max`.
pub fn rank_condition(c: &SyncMatrix, d: &DMatrix<f64>, tol: f64) -> Result<RankReport> {
    if d.nrows() != c.partition().n() {
        return Err(Error::dims("D rows", c.partition().n(), d.nrows()));
    }
    let required = c.rows();
    let rank_cpd = if d.ncols() == 0 {
        0
    } else {
        numerical_rank(&(c.matrix() * d), tol)
    };
    Ok(RankReport {
        rank_cpd,
        required,
        satisfies: rank_cpd == required,
    })
}

/// Objects of the two-group Kalman criterion.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanReport {
    pub l: DMatrix<f64>,
    pub lambda: DMatrix<f64>,
    pub lambda_hat: DMatrix<f64>,
    pub d_hat: DVector<f64>,
    /// Numerical rank of `[D̂ | Λ̂ D̂]`.
    pub rank: usize,
}

/// `L = (Q e_i, Q e_j)`, `Λ = (B̂ Q e_i, Q e_j)`, `Λ̂ = L^{-1/2} Λ L^{-1/2}`,
/// `D̂ = L^{-1/2} D_2`, with `Q = P^{-1}` so that `B̂ = Q B Q^{-1}`.
pub fn two_group_kalman(cert: &SimilarityCertificate, basis: &KernelBasis, d2: &DVector<f64>) -> Result<KalmanReport> {
    if basis.p() != 2 {
        return Err(Error::InvalidInput(format!(
            "two-group criterion needs p = 2, got {}",
            basis.p()
        )));
    }
    if d2.len() != 2 {
        return Err(Error::dims("D2", 2, d2.len()));
    }
    if d2.iter().all(|&v| v == 0.0) {
        return Err(Error::InvalidInput("D2 must be non-zero".into()));
    }
    if cert.n() != basis.matrix().nrows() {
        return Err(Error::dims("certificate size", basis.matrix().nrows(), cert.n()));
    }
    let qe = cert.symmetrizer()? * basis.matrix();
    let l = qe.transpose() * &qe;
    let lambda = linalg::symmetrize(&(qe.transpose() * &cert.b_hat * &qe));
    let (_, l_inv_half) = spd_sqrt_pair(&l).map_err(|e| Error::NotSpd(format!("L: {e}")))?;
    let lambda_hat = linalg::symmetrize(&(&l_inv_half * &lambda * &l_inv_half));
    let d_hat = &l_inv_half * d2;
    let krylov = DMatrix::from_columns(&[d_hat.clone(), &lambda_hat * &d_hat]);
    let rank = numerical_rank(&krylov, RANK_RTOL);
    Ok(KalmanReport {
        l,
        lambda,
        lambda_hat,
        d_hat,
        rank,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::partition::{build_sync_matrix, kernel_basis};
    use crate::algebra::similarity::symmetric_similarity;
    use approx::assert_relative_eq;

    fn part22() -> GroupPartition {
        GroupPartition::new(vec![0, 2, 4]).unwrap()
    }

    #[test]
    fn identity_certificate_gives_scaled_indicators() {
        let basis = kernel_basis(&part22());
        let cert = symmetric_similarity(&DMatrix::identity(4, 4), 1e-10).unwrap();
        let fam = biorthogonal_family(&cert, &basis).unwrap();
        assert_relative_eq!(
            fam.vectors,
            BiorthogonalFamily::canonical(&basis).vectors,
            epsilon = 1e-15
        );
        assert_eq!(fam.vector(0).as_slice(), &[0.5, 0.5, 0.0, 0.0]);
        assert_relative_eq!(fam.gram(&basis), DMatrix::identity(2, 2), epsilon = 1e-15);
    }

    #[test]
    fn family_from_nonsymmetric_b_is_invariant() {
        // Compatible (block row sums constant) with real spectrum.
        let part = part22();
        let b = DMatrix::from_row_slice(
            4,
            4,
            &[
                2.0, 1.0, 0.5, 0.0, 0.5, 2.5, 0.25, 0.25, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.2, 0.8,
            ],
        );
        let cert = symmetric_similarity(&b, 1e-10).unwrap();
        let basis = kernel_basis(&part);
        let fam = biorthogonal_family(&cert, &basis).unwrap();
        assert_relative_eq!(fam.gram(&basis), DMatrix::identity(2, 2), epsilon = 1e-10);
        let inv = invariance_coefficients(&b, &fam, 1e-9).unwrap();
        assert!(inv.invariant, "residual {}", inv.residual);
    }

    #[test]
    fn invariance_of_trivial_matrices() {
        let basis = kernel_basis(&part22());
        let fam = BiorthogonalFamily::canonical(&basis);
        let id = invariance_coefficients(&DMatrix::identity(4, 4), &fam, 1e-10).unwrap();
        assert!(id.invariant);
        assert_relative_eq!(id.coefficients, DMatrix::identity(2, 2), epsilon = 1e-12);
        let z = invariance_coefficients(&DMatrix::zeros(4, 4), &fam, 1e-10).unwrap();
        assert!(z.invariant);
        assert_relative_eq!(z.coefficients, DMatrix::zeros(2, 2), epsilon = 1e-15);
    }

    #[test]
    fn invariance_coefficients_of_explicit_transpose_action() {
        // M^T e1 = e1 + e2, M^T e2 = e2.
        let basis = kernel_basis(&part22());
        let fam = BiorthogonalFamily::canonical(&basis);
        let mt = DMatrix::from_row_slice(
            4,
            4,
            &[
                0.5, 0.5, 0.0, 0.0, 0.5, 0.5, 0.0, 0.0, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5,
            ],
        );
        let rep = invariance_coefficients(&mt.transpose(), &fam, 1e-10).unwrap();
        assert!(rep.invariant);
        assert_relative_eq!(
            rep.coefficients,
            DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]),
            epsilon = 1e-12
        );
    }

    #[test]
    fn canonical_control_matrix() {
        let part = part22();
        let d = build_control_matrix(&part, ControlMatrixMode::Canonical).unwrap();
        let c = build_sync_matrix(&part);
        assert_eq!(&d, &c.matrix().transpose());
        let rep = rank_condition(&c, &d, RANK_RTOL).unwrap();
        assert!(rep.satisfies);
        assert_eq!(rep.rank_cpd, 2);
        let basis = kernel_basis(&part);
        assert!((d.transpose() * basis.matrix()).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn family_control_matrix_matches_canonical_kernel() {
        let part = GroupPartition::new(vec![0, 3, 5]).unwrap();
        let basis = kernel_basis(&part);
        let fam = BiorthogonalFamily::canonical(&basis);
        let d = build_control_matrix(&part, ControlMatrixMode::FromFamily(&fam)).unwrap();
        assert_eq!(d.shape(), (5, 3));
        assert!((d.transpose() * basis.matrix()).norm() < 1e-12);
        assert_relative_eq!(d.transpose() * &d, DMatrix::identity(3, 3), epsilon = 1e-12);
        let c = build_sync_matrix(&part);
        assert!(rank_condition(&c, &d, RANK_RTOL).unwrap().satisfies);
    }

    #[test]
    fn rank_condition_failures() {
        let part = GroupPartition::new(vec![0, 3]).unwrap();
        let c = build_sync_matrix(&part);
        let in_kernel = DMatrix::from_row_slice(3, 1, &[1.0, 1.0, 1.0]);
        let rep = rank_condition(&c, &in_kernel, RANK_RTOL).unwrap();
        assert_eq!(rep.rank_cpd, 0);
        assert!(!rep.satisfies);
        let one_col = DMatrix::from_row_slice(3, 1, &[1.0, 0.0, 0.0]);
        let rep = rank_condition(&c, &one_col, RANK_RTOL).unwrap();
        assert_eq!(rep.rank_cpd, 1);
        assert!(!rep.satisfies);
    }

    #[test]
    fn kalman_identity_boundary_coupling_has_rank_one() {
        let basis = kernel_basis(&part22());
        let cert = symmetric_similarity(&DMatrix::identity(4, 4), 1e-10).unwrap();
        let rep = two_group_kalman(&cert, &basis, &DVector::from_row_slice(&[0.3, -1.2])).unwrap();
        assert_relative_eq!(rep.l, DMatrix::identity(2, 2) * 2.0, epsilon = 1e-14);
        assert_relative_eq!(rep.lambda, DMatrix::identity(2, 2) * 2.0, epsilon = 1e-14);
        assert_relative_eq!(rep.lambda_hat, DMatrix::identity(2, 2), epsilon = 1e-14);
        assert_eq!(rep.rank, 1);
    }

    #[test]
    fn kalman_distinct_block_values_have_rank_two() {
        let basis = kernel_basis(&part22());
        let b = DMatrix::from_diagonal(&DVector::from_row_slice(&[1.0, 1.0, 2.0, 2.0]));
        let cert = symmetric_similarity(&b, 1e-10).unwrap();
        let d2 = DVector::from_row_slice(&[1.0, 1.0]);
        let rep = two_group_kalman(&cert, &basis, &d2).unwrap();
        assert_relative_eq!(
            rep.lambda_hat,
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]),
            epsilon = 1e-14
        );
        assert_eq!(rep.rank, 2);
        assert_eq!(two_group_kalman(&cert, &basis, &(d2 * -7.5)).unwrap().rank, 2);
        assert!(two_group_kalman(&cert, &basis, &DVector::zeros(2)).is_err());
    }
}
