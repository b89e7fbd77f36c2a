//! Small dense helpers shared by the analysis modules: SVD nullspaces,
//! ordered rank detection, principal angles and eigenvalues.

use nalgebra::{Complex, DMatrix, DVector, Schur};

use crate::error::{Error, Result};

const SCHUR_EPS: f64 = 1e-15;
const SCHUR_MAX_ITER: usize = 10_000;

/// Eigenvalues of a general real square matrix, sorted by real part
/// (ties broken by imaginary part).
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    let schur = Schur::try_new(m.clone(), SCHUR_EPS, SCHUR_MAX_ITER).ok_or(Error::EigenSolverFailed)?;
    let mut ev: Vec<Complex<f64>> = schur.complex_eigenvalues().iter().copied().collect();
    if ev.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::EigenSolverFailed);
    }
    ev.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok(ev)
}

/// Unit vector spanning (approximately) the nullspace of `m - z I`: the
/// right singular vector of the smallest singular value.
pub fn eigenvector(m: &DMatrix<f64>, z: Complex<f64>) -> DVector<Complex<f64>> {
    let n = m.nrows();
    let shifted = m.map(|v| Complex::new(v, 0.0)) - DMatrix::from_diagonal_element(n, n, z);
    let svd = shifted.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let (i, _) = svd.singular_values.argmin();
    v_t.row(i).adjoint()
}

/// Singular values in descending order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut sv: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Orthonormal basis (as columns) of the nullspace of `m`. A singular value
/// counts as zero when it is at most `rel_tol` times the largest one.
pub fn nullspace(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let ncols = m.ncols();
    if ncols == 0 {
        return DMatrix::zeros(0, 0);
    }
    // Pad to at least square so the SVD yields a complete right basis.
    let nrows = m.nrows().max(ncols);
    let mut padded = DMatrix::zeros(nrows, ncols);
    padded.view_mut((0, 0), (m.nrows(), ncols)).copy_from(m);

    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let smax = svd.singular_values.max();
    let tol = rel_tol * smax;

    let null_rows: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| smax == 0.0 || svd.singular_values[i] <= tol)
        .collect();
    let mut basis = DMatrix::zeros(ncols, null_rows.len());
    for (k, &i) in null_rows.iter().enumerate() {
        basis.set_column(k, &v_t.row(i).transpose());
    }
    basis
}

/// Indices of the first maximal linearly independent subset of columns,
/// scanning left to right. A column is dependent when its residual after
/// projecting out the accepted columns is at most `tol`.
pub fn independent_columns(m: &DMatrix<f64>, tol: f64) -> Vec<usize> {
    let mut accepted: Vec<DVector<f64>> = Vec::new();
    let mut idx = Vec::new();
    for j in 0..m.ncols() {
        let mut r = m.column(j).clone_owned();
        // Two passes of modified Gram-Schmidt.
        for _ in 0..2 {
            for q in &accepted {
                let d = q.dot(&r);
                r.axpy(-d, q, 1.0);
            }
        }
        let norm = r.norm();
        if norm > tol {
            accepted.push(r / norm);
            idx.push(j);
        }
    }
    idx
}

/// Largest principal angle (radians) between the column spans of two
/// orthonormal bases of equal dimension.
pub fn max_principal_angle(u: &DMatrix<f64>, v: &DMatrix<f64>) -> f64 {
    if u.ncols() != v.ncols() {
        return std::f64::consts::FRAC_PI_2;
    }
    if u.ncols() == 0 {
        return 0.0;
    }
    // The sine of the largest angle is the spectral norm of the part of `v`
    // outside span(u); this stays accurate for tiny angles.
    let resid = v - u * (u.transpose() * v);
    let sin = singular_values(&resid).first().copied().unwrap_or(0.0).min(1.0);
    sin.asin()
}

/// Orthonormalizes the columns of `m` in order (modified Gram-Schmidt),
/// dropping columns whose residual falls below `tol`.
pub fn orthonormalize(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let keep = independent_columns(m, tol);
    let mut out: Vec<DVector<f64>> = Vec::with_capacity(keep.len());
    for &j in &keep {
        let mut r = m.column(j).clone_owned();
        for _ in 0..2 {
            for q in &out {
                let d = q.dot(&r);
                r.axpy(-d, q, 1.0);
            }
        }
        let n = r.norm();
        out.push(r / n);
    }
    if out.is_empty() {
        return DMatrix::zeros(m.nrows(), 0);
    }
    DMatrix::from_columns(&out)
}
