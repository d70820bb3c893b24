//! Dense helpers shared by the covariance and detection code.

use nalgebra::{ComplexField, DMatrix, DVector, SymmetricEigen};

use crate::{Error, Result, C64};

/// Relative eigenvalue floor below which a Hermitian matrix is treated as
/// singular when forming `Ω^{-1/2}`.
pub const EIGEN_FLOOR: f64 = 1e-12;

pub fn to_complex(m: &DMatrix<f64>) -> DMatrix<C64> {
    m.map(|v| C64::new(v, 0.0))
}

/// Largest entrywise deviation from Hermitian symmetry.
pub fn hermitian_defect<T: ComplexField<RealField = f64>>(m: &DMatrix<T>) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in i..m.ncols() {
            let d = (m[(i, j)].clone() - m[(j, i)].clone().conjugate()).modulus();
            worst = worst.max(d);
        }
    }
    worst
}

pub fn is_hermitian<T: ComplexField<RealField = f64>>(m: &DMatrix<T>, tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = m
        .iter()
        .map(|v| v.clone().modulus())
        .fold(0.0, f64::max)
        .max(1.0);
    hermitian_defect(m) <= tol * scale
}

/// Eigenvalues of a Hermitian matrix in descending order.
pub fn hermitian_eigenvalues<T: ComplexField<RealField = f64>>(m: DMatrix<T>) -> Vec<f64> {
    let mut eig = SymmetricEigen::new(m)
        .eigenvalues
        .iter()
        .copied()
        .collect::<Vec<_>>();
    eig.sort_by(|a, b| b.total_cmp(a));
    eig
}

/// `Ω^{-1/2}` of a Hermitian positive-definite matrix.
///
/// Fails when the smallest eigenvalue is below `EIGEN_FLOOR` times the
/// largest one.
pub fn inverse_sqrt(omega: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    if !is_hermitian(omega, 1e-10) {
        return Err(Error::SquareRoot("matrix is not Hermitian".into()));
    }
    let n = omega.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(omega.clone());
    let max = eig.eigenvalues.iter().copied().fold(f64::MIN, f64::max);
    let min = eig.eigenvalues.iter().copied().fold(f64::MAX, f64::min);
    if max.is_nan() || max <= 0.0 || min <= EIGEN_FLOOR * max {
        return Err(Error::SquareRoot(format!(
            "matrix is not positive definite (eigenvalues in [{min:e}, {max:e}])"
        )));
    }
    let scale = DVector::from_iterator(
        n,
        eig.eigenvalues.iter().map(|l| C64::new(l.powf(-0.5), 0.0)),
    );
    let v = &eig.eigenvectors;
    Ok(v * DMatrix::from_diagonal(&scale) * v.adjoint())
}

/// Numerical rank from singular values, relative to the largest.
pub fn numerical_rank(m: &DMatrix<C64>, rel_tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|s| **s > rel_tol * max).count()
}
