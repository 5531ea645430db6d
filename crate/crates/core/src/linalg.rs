//! Symmetric-matrix helpers built on `nalgebra`'s eigendecomposition.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    m.is_square() && (m - m.transpose()).amax() <= tol
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigen-pairs of a symmetric matrix, eigenvalues in ascending order.
pub fn sym_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(symmetrize(m));
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (c, &i) in order.iter().enumerate() {
        vectors.set_column(c, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

/// Applies a scalar function to the spectrum: U f(Λ) Uᵀ.
pub fn sym_apply(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let (values, vectors) = sym_eigen(m);
    let mapped = DMatrix::from_diagonal(&values.map(f));
    &vectors * mapped * vectors.transpose()
}

/// Eigenvalues of an SPD matrix, rejecting any below `rel_floor · λ_max`.
pub fn spd_eigenvalues(m: &DMatrix<f64>, rel_floor: f64, what: &str) -> Result<DVector<f64>> {
    if !m.is_square() {
        return Err(Error::Shape(format!("{what} is not square")));
    }
    if !is_symmetric(m, 1e-12 * (1.0 + m.amax())) {
        return Err(Error::InvalidMeasure(format!("{what} is not symmetric")));
    }
    let (values, _) = sym_eigen(m);
    let max = values.max();
    if values.is_empty() || max <= 0.0 || values.min() <= rel_floor * max {
        return Err(Error::InvalidMeasure(format!(
            "{what} is not positive definite (eigenvalues {:?})",
            values.as_slice()
        )));
    }
    Ok(values)
}

pub fn log_det_spd(m: &DMatrix<f64>) -> f64 {
    sym_eigen(m).0.iter().map(|v| v.ln()).sum()
}

pub fn hs_norm_sq(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v * v).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sqrt_squares_back() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 3.0]);
        let r = sym_apply(&m, f64::sqrt);
        assert!((&r * &r - &m).amax() < 1e-14);
    }

    #[test]
    fn rejects_indefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(spd_eigenvalues(&m, 1e-12, "m").is_err());
    }
}
