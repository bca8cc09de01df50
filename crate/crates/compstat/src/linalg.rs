//! Dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

/// Largest absolute entry, zero for empty matrices.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn max_abs_vec(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// Largest entry of |M - Mᵀ|.
pub fn symmetry_residual(m: &DMatrix<f64>) -> f64 {
    if m.nrows() != m.ncols() {
        return f64::INFINITY;
    }
    max_abs(&(m - m.transpose()))
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigen-decomposition of the symmetric part, eigenvalues ascending with
/// matching eigenvector columns.
pub fn sym_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = m.nrows();
    if n == 0 {
        return (DVector::zeros(0), DMatrix::zeros(0, 0));
    }
    let eig = symmetrize(m).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (c, &i) in order.iter().enumerate() {
        vectors.set_column(c, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

pub fn sym_eigenvalues(m: &DMatrix<f64>) -> DVector<f64> {
    sym_eigen(m).0
}

/// Number of eigenvalues whose magnitude exceeds `rel_tol` times the largest.
/// The zero matrix has rank zero.
pub fn rank_from_eigenvalues(values: &DVector<f64>, rel_tol: f64) -> usize {
    let scale = max_abs_vec(values);
    if scale == 0.0 {
        return 0;
    }
    values.iter().filter(|v| v.abs() > rel_tol * scale).count()
}

/// Singular values in descending order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Numerical rank with a threshold relative to the largest singular value.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    let s = singular_values(m);
    match s.first() {
        Some(&top) if top > 0.0 => s.iter().filter(|v| **v > rel_tol * top).count(),
        _ => 0,
    }
}

/// Orthonormal basis of the null space of a C×N matrix, returned as the
/// columns of an N×(N−rank) matrix, together with the numerical rank.
pub fn nullspace(m: &DMatrix<f64>, rel_tol: f64) -> (DMatrix<f64>, usize) {
    let n = m.ncols();
    if n == 0 {
        return (DMatrix::zeros(0, 0), 0);
    }
    if m.nrows() == 0 {
        return (DMatrix::identity(n, n), 0);
    }
    // Pad to a square system so the SVD exposes the full right singular basis.
    let rows = m.nrows().max(n);
    let mut padded = DMatrix::zeros(rows, n);
    padded.view_mut((0, 0), (m.nrows(), n)).copy_from(m);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let s = &svd.singular_values;
    let top = s.iter().fold(0.0_f64, |a, v| a.max(*v));
    let keep: Vec<usize> = (0..s.len())
        .filter(|&i| top == 0.0 || s[i] <= rel_tol * top)
        .collect();
    let rank = n - keep.len();
    let mut basis = DMatrix::zeros(n, keep.len());
    for (c, &i) in keep.iter().enumerate() {
        basis.set_column(c, &v_t.row(i).transpose());
    }
    (basis, rank)
}

/// Ratio of smallest to largest singular value; zero when singular or empty.
pub fn inverse_condition(m: &DMatrix<f64>) -> f64 {
    let s = singular_values(m);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if hi > 0.0 => {
            if s.len() < m.nrows().max(m.ncols()) {
                0.0
            } else {
                lo / hi
            }
        }
        _ => 0.0,
    }
}

/// Matrix from a row-major nested vector.
pub fn from_rows(rows: &[Vec<f64>], ncols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j])
}

/// Row-major nested vector of a matrix.
pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nullspace_of_wide_matrix_is_orthogonal() {
        let m = DMatrix::from_row_slice(2, 4, &[1.0, 2.0, 0.0, 1.0, 0.0, 1.0, 1.0, -1.0]);
        let (basis, rank) = nullspace(&m, 1e-10);
        assert_eq!(rank, 2);
        assert_eq!(basis.ncols(), 2);
        assert!(max_abs(&(&m * &basis)) < 1e-12);
        let gram = basis.transpose() * &basis;
        assert!(max_abs(&(gram - DMatrix::identity(2, 2))) < 1e-12);
    }

    #[test]
    fn zero_matrix_has_rank_zero() {
        let v = DVector::from_vec(vec![0.0, 0.0]);
        assert_eq!(rank_from_eigenvalues(&v, 1e-7), 0);
    }

    #[test]
    fn eigenvalues_sorted_ascending() {
        let m = DMatrix::from_row_slice(2, 2, &[-0.25, 0.25, 0.25, -0.25]);
        let v = sym_eigenvalues(&m);
        assert!((v[0] + 0.5).abs() < 1e-14);
        assert!(v[1].abs() < 1e-14);
    }
}
