//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::DMatrix;

/// Singular values, largest first.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    s
}

/// `#{sigma_i > rel_tol * sigma_max}`; zero for the zero matrix.
pub fn numerical_rank(singular: &[f64], rel_tol: f64) -> usize {
    match singular.first() {
        Some(&top) if top > 0.0 => singular.iter().filter(|&&s| s > rel_tol * top).count(),
        _ => 0,
    }
}

/// Orthonormal basis (columns) of the numerical nullspace of `m`.
///
/// `scale` is the reference magnitude for the relative tolerance; pass `None`
/// to use the largest singular value.
pub fn nullspace(m: &DMatrix<f64>, rel_tol: f64, scale: Option<f64>) -> DMatrix<f64> {
    let n = m.ncols();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    // Pad to at least n rows so the SVD returns a full right factor.
    let rows = m.nrows().max(n);
    let mut padded = DMatrix::<f64>::zeros(rows, n);
    padded.view_mut((0, 0), (m.nrows(), n)).copy_from(m);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let top = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let reference = scale.unwrap_or(top);
    let cols: Vec<usize> = (0..n)
        .filter(|&i| svd.singular_values[i] <= rel_tol * reference)
        .collect();
    let mut out = DMatrix::<f64>::zeros(n, cols.len());
    for (j, &i) in cols.iter().enumerate() {
        for r in 0..n {
            out[(r, j)] = v_t[(i, r)];
        }
    }
    out
}

/// Reduced row echelon form of the columns of `basis` (n x m), returned as
/// columns. Pivot search runs over rows in the given order, so the result
/// is canonical for a fixed row ordering.
pub fn column_echelon(basis: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    // Work on the transpose: rows = basis vectors.
    let mut a = basis.transpose();
    let (m, n) = (a.nrows(), a.ncols());
    let mut pivot_row = 0;
    for col in 0..n {
        if pivot_row >= m {
            break;
        }
        let (best, val) = (pivot_row..m)
            .map(|r| (r, a[(r, col)].abs()))
            .fold((pivot_row, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if val <= tol {
            continue;
        }
        a.swap_rows(best, pivot_row);
        let p = a[(pivot_row, col)];
        for c in 0..n {
            a[(pivot_row, c)] /= p;
        }
        for r in 0..m {
            if r != pivot_row {
                let f = a[(r, col)];
                if f != 0.0 {
                    for c in 0..n {
                        a[(r, c)] -= f * a[(pivot_row, c)];
                    }
                }
            }
        }
        pivot_row += 1;
    }
    for v in a.iter_mut() {
        if v.abs() <= tol {
            *v = 0.0;
        }
    }
    a.transpose()
}

/// Determinant of a symmetric positive semidefinite matrix (LU based).
pub fn determinant(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    m.clone().lu().determinant()
}
