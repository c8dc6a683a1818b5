use nalgebra::DMatrix;

use super::compat::{check_cp_compatibility, reduce_matrix};
use super::partition::SyncMatrix;
use crate::error::{Error, Result};
use crate::linalg::{self, frobenius, is_exactly_symmetric, real_eigen, spd_sqrt_pair, symmetrize};

/// Witness that `B = P B̂ P^{-1}` with `B̂` symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityCertificate {
    /// The certified matrix `B`.
    pub matrix: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub b_hat: DMatrix<f64>,
    /// `‖B − P B̂ P^{-1}‖_F`.
    pub residual: f64,
}

impl SimilarityCertificate {
    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    /// `P B̂ P^{-1}`.
    pub fn reconstruct(&self) -> Result<DMatrix<f64>> {
        let p_inv = linalg::inverse(&self.p, "similarity transform P")?;
        Ok(&self.p * &self.b_hat * p_inv)
    }

    /// `Q = P^{-1}`, the transform for which `Q B Q^{-1} = B̂`.
    pub fn symmetrizer(&self) -> Result<DMatrix<f64>> {
        linalg::inverse(&self.p, "similarity transform P")
    }
}

/// Decides whether `B` is similar to a real symmetric matrix (equivalently, real
/// diagonalizable) and returns a certificate. Symmetric input yields `P = I`,
/// otherwise `P` holds unit eigenvectors and `B̂` the diagonal of eigenvalues.
pub fn symmetric_similarity(b: &DMatrix<f64>, tol: f64) -> Result<SimilarityCertificate> {
    if !b.is_square() {
        return Err(Error::dims("B", "square", format!("{}x{}", b.nrows(), b.ncols())));
    }
    let n = b.nrows();
    if is_exactly_symmetric(b) {
        return Ok(SimilarityCertificate {
            matrix: b.clone(),
            p: DMatrix::identity(n, n),
            b_hat: b.clone(),
            residual: 0.0,
        });
    }
    let (v, lambdas) = real_eigen(b, tol)?;
    let b_hat = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(lambdas));
    let mut cert = SimilarityCertificate {
        matrix: b.clone(),
        p: v,
        b_hat,
        residual: 0.0,
    };
    cert.residual = frobenius(&(b - cert.reconstruct()?));
    Ok(cert)
}

/// Certificate for the reduced matrix `B̄_p`, built from the closed form
/// `B̄_p = C_p P B̂ P^T C_p^T (C_p P P^T C_p^T)^{-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedCertificate {
    pub certificate: SimilarityCertificate,
    /// `B̄_p` evaluated from the closed form.
    pub from_formula: DMatrix<f64>,
    /// `reduce_matrix(B)` for comparison.
    pub from_reduction: DMatrix<f64>,
}

impl ReducedCertificate {
    /// `‖from_formula − from_reduction‖_F`.
    pub fn path_discrepancy(&self) -> f64 {
        frobenius(&(&self.from_formula - &self.from_reduction))
    }
}

pub fn reduced_similarity(cert: &SimilarityCertificate, c: &SyncMatrix, tol: f64) -> Result<ReducedCertificate> {
    let rep = check_cp_compatibility(&cert.matrix, c.partition(), tol)?;
    if !rep.compatible {
        let (row_group, col_group, deviation) = rep.worst;
        return Err(Error::Incompatible {
            row_group,
            col_group,
            deviation,
        });
    }
    let cp = c.matrix() * &cert.p;
    let gram = &cp * cp.transpose();
    let f = &cp * &cert.b_hat * cp.transpose();
    let gram_inv = linalg::inverse(&gram, "C_p P P^T C_p^T")?;
    let from_formula = &f * gram_inv;
    let (g_half, g_inv_half) = spd_sqrt_pair(&gram)?;
    let b_hat = symmetrize(&(&g_inv_half * &f * &g_inv_half));
    let from_reduction = reduce_matrix(&cert.matrix, c, tol)?;
    let mut red = SimilarityCertificate {
        matrix: from_reduction.clone(),
        p: g_half,
        b_hat,
        residual: 0.0,
    };
    red.residual = frobenius(&(&from_reduction - red.reconstruct()?));
    Ok(ReducedCertificate {
        certificate: red,
        from_formula,
        from_reduction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::partition::{build_sync_matrix, GroupPartition};
    use approx::assert_relative_eq;

    #[test]
    fn symmetric_input_gets_identity_transform() {
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, -2.0]);
        let cert = symmetric_similarity(&b, 1e-10).unwrap();
        assert_eq!(cert.p, DMatrix::identity(2, 2));
        assert_eq!(cert.b_hat, b);
        assert_eq!(cert.residual, 0.0);
    }

    #[test]
    fn jordan_block_is_rejected() {
        let b = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(matches!(
            symmetric_similarity(&b, 1e-10),
            Err(Error::NotDiagonalizable(_))
        ));
    }

    #[test]
    fn rotation_is_rejected() {
        let b = DMatrix::from_row_slice(2, 2, &[1.0, -2.0, 2.0, 1.0]);
        assert!(matches!(
            symmetric_similarity(&b, 1e-10),
            Err(Error::NotRealSpectrum { .. })
        ));
    }

    #[test]
    fn nonsymmetric_real_spectrum() {
        let b = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 3.0, 4.0]);
        let cert = symmetric_similarity(&b, 1e-10).unwrap();
        let mut eig: Vec<f64> = cert.b_hat.diagonal().iter().copied().collect();
        eig.sort_by(f64::total_cmp);
        assert_relative_eq!(eig[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(eig[1], 5.0, epsilon = 1e-12);
        assert!(cert.residual <= 1e-10);
        assert_eq!(cert.b_hat, cert.b_hat.transpose());
    }

    #[test]
    fn scalar_multiple_of_identity_reduces_to_itself() {
        let part = GroupPartition::new(vec![0, 2, 5]).unwrap();
        let c = build_sync_matrix(&part);
        let b = DMatrix::identity(5, 5) * 2.5;
        let red = reduced_similarity(&symmetric_similarity(&b, 1e-10).unwrap(), &c, 1e-10).unwrap();
        assert_relative_eq!(red.from_formula, DMatrix::identity(3, 3) * 2.5, epsilon = 1e-12);
        assert!(red.path_discrepancy() <= 1e-12);
        assert!(red.certificate.residual <= 1e-12);
    }

    #[test]
    fn symmetric_compatible_paths_agree() {
        let part = GroupPartition::new(vec![0, 2, 4]).unwrap();
        let c = build_sync_matrix(&part);
        let b = DMatrix::from_row_slice(
            4,
            4,
            &[
                1.0, 2.0, 0.5, 0.5, 2.0, 1.0, 0.5, 0.5, 0.5, 0.5, 3.0, -1.0, 0.5, 0.5, -1.0, 3.0,
            ],
        );
        let cert = symmetric_similarity(&b, 1e-10).unwrap();
        let red = reduced_similarity(&cert, &c, 1e-10).unwrap();
        assert!(red.path_discrepancy() <= 1e-10);
        assert_eq!(red.certificate.b_hat, red.certificate.b_hat.transpose());
    }

    #[test]
    fn incompatible_matrix_is_propagated() {
        let part = GroupPartition::new(vec![0, 2]).unwrap();
        let c = build_sync_matrix(&part);
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]);
        let cert = symmetric_similarity(&b, 1e-10).unwrap();
        assert!(matches!(
            reduced_similarity(&cert, &c, 1e-10),
            Err(Error::Incompatible { .. })
        ));
    }
}
