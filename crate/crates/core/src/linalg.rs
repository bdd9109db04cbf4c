//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Singular values in descending order.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = a.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Spectral norm (largest singular value).
///
/// Tall matrices go through the small Gram matrix, which is accurate for the
/// largest singular value.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    let gram = if a.nrows() >= a.ncols() { a.tr_mul(a) } else { a * a.transpose() };
    let lmax = sym_eigenvalues(&gram).last().copied().unwrap_or(0.0);
    lmax.max(0.0).sqrt()
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(h: &DMatrix<f64>) -> Vec<f64> {
    if h.nrows() == 0 {
        return Vec::new();
    }
    let sym = symmetrize(h);
    let mut ev: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
    ev.sort_by(|x, y| x.total_cmp(y));
    ev
}

pub fn lambda_min(h: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(h).first().copied().unwrap_or(0.0)
}

/// Spectral norm of a symmetric matrix (largest absolute eigenvalue).
pub fn sym_norm(h: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(h).iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Ratio of extreme singular values; infinite for rank-deficient input.
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let s = singular_values(a);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

pub fn symmetrize(h: &DMatrix<f64>) -> DMatrix<f64> {
    (h + h.transpose()) * 0.5
}

/// Largest absolute entry of `a - a^T`.
pub fn asymmetry(h: &DMatrix<f64>) -> f64 {
    (h - h.transpose()).amax()
}

pub fn stack(x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
    let mut v = DVector::zeros(x.len() + y.len());
    v.rows_mut(0, x.len()).copy_from(x);
    v.rows_mut(x.len(), y.len()).copy_from(y);
    v
}

/// Relative error `|a - b| / max(|b|, floor)`, entrywise maximum over matrices.
pub fn max_rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>, floor: f64) -> f64 {
    let scale = b.amax().max(floor);
    (a - b).amax() / scale
}
