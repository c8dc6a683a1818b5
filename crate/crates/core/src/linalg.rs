//! Small dense linear-algebra helpers shared by the algebra and control layers.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative cutoff below which a singular value is treated as zero.
pub const RANK_RTOL: f64 = 1e-8;

/// Largest accepted condition number of an eigenvector matrix.
pub const EIGVEC_COND_LIMIT: f64 = 1e8;

pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Numerical rank: singular values above `rtol * sigma_max` count.
pub fn numerical_rank(m: &DMatrix<f64>, rtol: f64) -> usize {
    let s = singular_values(m);
    match s.first() {
        Some(&smax) if smax > 0.0 => s.iter().filter(|&&v| v > rtol * smax).count(),
        _ => 0,
    }
}

pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let s = singular_values(m);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

pub fn frobenius(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn is_exactly_symmetric(m: &DMatrix<f64>) -> bool {
    m.is_square() && (0..m.nrows()).all(|i| (0..i).all(|j| m[(i, j)] == m[(j, i)]))
}

/// Symmetric square root and inverse square root of an SPD matrix.
pub fn spd_sqrt_pair(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if !m.is_square() {
        return Err(Error::dims(
            "SPD matrix",
            "square",
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let lmax = eig.eigenvalues.iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
    if let Some(&lmin) = eig.eigenvalues.iter().min_by(|a, b| a.total_cmp(b)) {
        if lmin <= 1e-14 * lmax.max(f64::MIN_POSITIVE) {
            return Err(Error::NotSpd(format!("smallest eigenvalue {lmin:.3e}")));
        }
    }
    let q = &eig.eigenvectors;
    let root = DVector::from_iterator(eig.eigenvalues.len(), eig.eigenvalues.iter().map(|l| l.sqrt()));
    let inv_root = root.map(|r| 1.0 / r);
    let sqrt = q * DMatrix::from_diagonal(&root) * q.transpose();
    let inv_sqrt = q * DMatrix::from_diagonal(&inv_root) * q.transpose();
    Ok((symmetrize(&sqrt), symmetrize(&inv_sqrt)))
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    m.clone().try_inverse().ok_or_else(|| Error::Singular(what.to_string()))
}

/// Orthonormal basis of the null space of `m` (columns), using `rtol * sigma_max`
/// as the zero threshold.
pub fn null_space(m: &DMatrix<f64>, rtol: f64) -> DMatrix<f64> {
    let n = m.ncols();
    if m.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    // Pad to at least n rows so the SVD returns a full right basis.
    let mut padded = DMatrix::zeros(m.nrows().max(n), n);
    padded.view_mut((0, 0), (m.nrows(), n)).copy_from(m);
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let smax = svd.singular_values.iter().fold(0.0_f64, |a, &b| a.max(b));
    let cols: Vec<DVector<f64>> = (0..n)
        .filter(|&i| svd.singular_values[i] <= rtol * smax || smax == 0.0)
        .map(|i| vt.row(i).transpose())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Orthonormal basis of the column space of `m` (columns).
pub fn range_basis(m: &DMatrix<f64>, rtol: f64) -> DMatrix<f64> {
    if m.ncols() == 0 || m.nrows() == 0 {
        return DMatrix::zeros(m.nrows(), 0);
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("requested U");
    let smax = svd.singular_values.iter().fold(0.0_f64, |a, &b| a.max(b));
    let cols: Vec<DVector<f64>> = (0..svd.singular_values.len())
        .filter(|&i| smax > 0.0 && svd.singular_values[i] > rtol * smax)
        .map(|i| u.column(i).into_owned())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(m.nrows(), 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Real eigendecomposition `m = V diag(lambda) V^{-1}` of a real-diagonalizable matrix.
///
/// Symmetric input goes through the symmetric solver (orthogonal V). Otherwise the
/// spectrum comes from the real Schur form; eigenvalues are clustered and each
/// cluster's eigenspace is taken as a numerical null space of `m - lambda I`.
pub fn real_eigen(m: &DMatrix<f64>, tol: f64) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let n = m.nrows();
    if !m.is_square() {
        return Err(Error::dims(
            "eigen input",
            "square",
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    if n == 0 {
        return Ok((DMatrix::zeros(0, 0), Vec::new()));
    }
    if is_exactly_symmetric(m) {
        let eig = SymmetricEigen::new(m.clone());
        return Ok((eig.eigenvectors, eig.eigenvalues.iter().copied().collect()));
    }
    let scale = frobenius(m).max(1.0);
    let eigs = m.complex_eigenvalues();
    let mut lams = Vec::with_capacity(n);
    for z in eigs.iter() {
        if z.im.abs() > tol * scale {
            return Err(Error::NotRealSpectrum { imag: z.im });
        }
        lams.push(z.re);
    }
    lams.sort_by(|a, b| a.total_cmp(b));

    let cluster_tol = tol.max(f64::EPSILON.sqrt()) * scale;
    let mut clusters: Vec<Vec<f64>> = Vec::new();
    for &l in &lams {
        match clusters.last_mut() {
            Some(c) if (l - c[c.len() - 1]).abs() <= cluster_tol => c.push(l),
            _ => clusters.push(vec![l]),
        }
    }

    let mut vecs: Vec<DVector<f64>> = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n);
    let null_tol = 1e-6 * scale;
    for c in &clusters {
        let mult = c.len();
        let mean = c.iter().sum::<f64>() / mult as f64;
        let shifted = m - DMatrix::identity(n, n) * mean;
        let svd = shifted.svd(false, true);
        let vt = svd.v_t.expect("requested V^T");
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
        let worst = svd.singular_values[order[mult - 1]];
        if worst > null_tol {
            return Err(Error::NotDiagonalizable(format!(
                "eigenvalue {mean:.6e} has algebraic multiplicity {mult} but a deficient eigenspace \
                 (singular value {worst:.3e})"
            )));
        }
        for &i in order.iter().take(mult) {
            vecs.push(vt.row(i).transpose().normalize());
            values.push(mean);
        }
    }
    let v = DMatrix::from_columns(&vecs);
    let cond = condition_number(&v);
    if !(cond <= EIGVEC_COND_LIMIT) {
        return Err(Error::NotDiagonalizable(format!(
            "eigenvector matrix condition number {cond:.3e} exceeds {EIGVEC_COND_LIMIT:.0e}"
        )));
    }
    Ok((v, values))
}

/// Least-squares solve of `a x = b` (columnwise) through the SVD pseudo-inverse.
pub fn lstsq(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().fold(0.0_f64, |x, &y| x.max(y));
    let eps = (RANK_RTOL * smax).max(f64::MIN_POSITIVE);
    svd.solve(b, eps)
        .unwrap_or_else(|_| DMatrix::zeros(a.ncols(), b.ncols()))
}

/// Parse a row-major CSV matrix (one row per line, `,` separated, `.` decimals).
pub fn parse_csv_matrix(text: &str) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidInput(format!("line {}: cannot parse {tok:?}: {e}", lineno + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    matrix_from_rows(&rows)
}

pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != ncols) {
        return Err(Error::InvalidInput(format!(
            "ragged matrix: row {i} has {} entries, expected {ncols}",
            r.len()
        )));
    }
    Ok(DMatrix::from_row_iterator(
        rows.len(),
        ncols,
        rows.iter().flatten().copied(),
    ))
}

/// Format a float with 17 significant digits (round-trip exact).
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn format_csv_matrix(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| fmt_f64(m[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}
