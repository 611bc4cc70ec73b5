use nalgebra::DMatrix;

use crate::feasible::coordinate_index;

/// Orthonormal basis (as columns) of `{ d : rows * d = 0 }`.
///
/// Singular values at or below `tol` count as zero. When every row is a
/// signed unit coordinate vector the basis is the exact set of remaining
/// coordinate axes, which keeps box projections in closed form.
pub fn null_space_basis(rows: &DMatrix<f64>, n: usize, tol: f64) -> DMatrix<f64> {
    if rows.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    let coords: Option<Vec<usize>> = rows
        .row_iter()
        .map(|r| coordinate_index(&r.transpose()))
        .collect();
    if let Some(coords) = coords {
        let free: Vec<usize> = (0..n).filter(|j| !coords.contains(j)).collect();
        let mut basis = DMatrix::zeros(n, free.len());
        for (col, &j) in free.iter().enumerate() {
            basis[(j, col)] = 1.0;
        }
        return basis;
    }
    let m = rows.nrows().max(n);
    let mut padded = DMatrix::zeros(m, n);
    padded.rows_mut(0, rows.nrows()).copy_from(rows);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let null: Vec<usize> = (0..n)
        .filter(|&k| svd.singular_values[k] <= tol)
        .collect();
    let mut basis = DMatrix::zeros(n, null.len());
    for (col, &k) in null.iter().enumerate() {
        basis.set_column(col, &v_t.row(k).transpose());
    }
    basis
}

/// Numerical rank with an absolute singular value threshold.
pub fn rank(rows: &DMatrix<f64>, tol: f64) -> usize {
    if rows.nrows() == 0 || rows.ncols() == 0 {
        return 0;
    }
    rows.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .filter(|s| **s > tol)
        .count()
}
