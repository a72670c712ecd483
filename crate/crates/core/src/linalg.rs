//! Thin aliases over `nalgebra` used throughout the crate.

use nalgebra::{DMatrix, DVector};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Smallest and largest eigenvalue of a symmetric matrix.
pub fn sym_eig_bounds(m: &Matrix) -> (f64, f64) {
    let diagonal = m
        .column_iter()
        .enumerate()
        .all(|(j, col)| col.iter().enumerate().all(|(i, &v)| i == j || v == 0.0));
    let values = if diagonal {
        m.diagonal()
    } else {
        m.clone().symmetric_eigenvalues()
    };
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

pub(crate) fn check_dim(expected: usize, actual: usize) -> crate::Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(crate::Error::DimensionMismatch { expected, actual })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eig_bounds_dense_and_diagonal() {
        let d = Matrix::from_diagonal(&Vector::from_vec(vec![3.0, 1.0, 2.0]));
        assert_eq!(sym_eig_bounds(&d), (1.0, 3.0));
        let m = Matrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let (lo, hi) = sym_eig_bounds(&m);
        assert!((lo - 1.0).abs() < 1e-12 && (hi - 3.0).abs() < 1e-12);
    }
}
