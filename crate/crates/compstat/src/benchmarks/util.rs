//! Small helpers shared by the property suites.

use std::ops::Range;

use nalgebra::DMatrix;

use crate::csm::SignConvention;
use crate::diagnostics::{self, CheckReport};
use crate::linalg;

pub fn block(m: &DMatrix<f64>, rows: Range<usize>, cols: Range<usize>) -> DMatrix<f64> {
    m.view((rows.start, cols.start), (rows.len(), cols.len())).into_owned()
}

pub fn nsd(name: &str, m: &DMatrix<f64>, tol: f64) -> CheckReport {
    diagnostics::check_semidefinite(name, m, SignConvention::NegativeSemidefiniteExpected, tol, 1e-6)
}

pub fn psd(name: &str, m: &DMatrix<f64>, tol: f64) -> CheckReport {
    diagnostics::check_semidefinite(name, m, SignConvention::PositiveSemidefiniteExpected, tol, 1e-6)
}

/// Max-norm distance between two matrices against an absolute tolerance.
pub fn abs_close(name: &str, property: &str, a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> CheckReport {
    if a.shape() != b.shape() {
        return CheckReport::flag(name, property, false, "shape mismatch");
    }
    CheckReport::compare(name, property, linalg::max_abs(&(a - b)), tol)
}

/// Relative max-norm distance, scaled by the larger matrix.
pub fn rel_close(name: &str, property: &str, a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> CheckReport {
    let mut r = diagnostics::check_coherence(name, a, b, tol);
    r.property = property.to_string();
    r
}

pub fn scalar(name: &str, property: &str, value: f64, expected: f64, tol: f64) -> CheckReport {
    CheckReport::compare(name, property, (value - expected).abs(), tol)
        .with_note(format!("value {value:.12e}, expected {expected:.12e}"))
}

/// Numerical rank of a symmetric matrix.
pub fn sym_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    linalg::rank_from_eigenvalues(&linalg::sym_eigenvalues(&linalg::symmetrize(m)), rel_tol)
}

pub fn rank_at_most(name: &str, m: &DMatrix<f64>, bound: usize, rel_tol: f64) -> CheckReport {
    diagnostics::check_rank_bound(name, sym_rank(m, rel_tol), bound)
}

pub fn rank_equals(name: &str, m: &DMatrix<f64>, expected: usize, rel_tol: f64) -> CheckReport {
    let r = sym_rank(m, rel_tol);
    CheckReport::flag(name, "rank equals the expected value", r == expected, format!("rank {r}, expected {expected}"))
}

pub fn diag(v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(v))
}

/// Column vector from a slice.
pub fn col(v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_column_slice(v.len(), 1, v)
}
