//! Small dense helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, Dyn};

/// Relative cutoff below which a singular value counts as zero.
pub const RANK_TOL: f64 = 1e-10;

/// Singular values of `a`, padded with zero rows so that a wide matrix
/// still yields one value per column.
fn padded_svd(a: &DMatrix<f64>) -> nalgebra::SVD<f64, Dyn, Dyn> {
    let (rows, cols) = a.shape();
    let padded = if rows < cols {
        let mut p = DMatrix::zeros(cols, cols);
        p.view_mut((0, 0), (rows, cols)).copy_from(a);
        p
    } else {
        a.clone()
    };
    padded.svd(false, true)
}

pub fn rank(a: &DMatrix<f64>) -> usize {
    if a.is_empty() {
        return 0;
    }
    let svd = padded_svd(a);
    let largest = svd.singular_values.max();
    if largest == 0.0 {
        return 0;
    }
    svd.singular_values
        .iter()
        .filter(|&&s| s > RANK_TOL * largest)
        .count()
}

/// Orthonormal basis of the null space of `a`, one basis vector per column.
///
/// A matrix with zero rows has the whole space as its null space.
pub fn null_space(a: &DMatrix<f64>) -> DMatrix<f64> {
    let cols = a.ncols();
    if a.nrows() == 0 || a.iter().all(|&v| v == 0.0) {
        return DMatrix::identity(cols, cols);
    }
    let svd = padded_svd(a);
    let largest = svd.singular_values.max();
    let v_t = svd.v_t.expect("v_t requested");
    let null_rows: Vec<usize> = (0..cols)
        .filter(|&i| svd.singular_values[i] <= RANK_TOL * largest)
        .collect();
    let mut basis = DMatrix::zeros(cols, null_rows.len());
    for (k, &i) in null_rows.iter().enumerate() {
        basis.set_column(k, &v_t.row(i).transpose());
    }
    basis
}

/// Cholesky factorization that also rejects numerically singular matrices.
pub fn cholesky_checked(a: DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    let chol = a.cholesky()?;
    let diag = chol.l_dirty().diagonal();
    let max = diag.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let min = diag.iter().fold(f64::INFINITY, |acc, v| acc.min(v.abs()));
    // pivots are square roots, so this is a 1e-14 cutoff on the eigen scale
    if max == 0.0 || min < 1e-7 * max {
        return None;
    }
    Some(chol)
}
