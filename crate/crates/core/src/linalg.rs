//! Dense symmetric helpers shared by the matrix-building modules.
//!
//! Eigenvalues are always returned in descending order so that index `k`
//! holds the `(k+1)`-th largest eigenvalue, i.e. `values[0]` is the largest
//! and `values[n-1]` the smallest.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Absolute tolerance on `|a_ij - a_ji|`, applied relative to `max(1, max|a|)`.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Eigenvalues in `[-PSD_TOL * lambda_1, 0]` are treated as zero.
pub const PSD_TOL: f64 = 1e-10;

pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn max_asymmetry(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0_f64;
    for j in 0..n {
        for i in (j + 1)..n {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

pub fn ensure_square(a: &DMatrix<f64>, what: &str) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "{what} must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(())
}

pub fn ensure_symmetric(a: &DMatrix<f64>) -> Result<()> {
    ensure_square(a, "matrix")?;
    let asym = max_asymmetry(a);
    if asym > SYMMETRY_TOL * max_abs(a).max(1.0) {
        return Err(Error::NotSymmetric {
            max_asymmetry: asym,
        });
    }
    Ok(())
}

/// `(A + A^T) / 2`.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Symmetric eigendecomposition with eigenpairs sorted by descending eigenvalue.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl SymEigen {
    pub fn new(a: &DMatrix<f64>) -> Self {
        let eig = a.clone().symmetric_eigen();
        let n = eig.eigenvalues.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
        let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
        let mut vectors = DMatrix::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            vectors.set_column(dst, &eig.eigenvectors.column(src));
        }
        SymEigen { values, vectors }
    }

    pub fn largest(&self) -> f64 {
        self.values[0]
    }

    pub fn smallest(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// `V f(Λ) V^T`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let mut scaled = self.vectors.clone();
        for (k, mut col) in scaled.column_iter_mut().enumerate() {
            col *= f(self.values[k]);
        }
        symmetrize(&(&scaled * self.vectors.transpose()))
    }
}

/// Eigenvalues only, descending. Cheaper than a full decomposition.
pub fn eigenvalues_desc(a: &DMatrix<f64>) -> Vec<f64> {
    let mut values: Vec<f64> = a.clone().symmetric_eigenvalues().iter().copied().collect();
    values.sort_by(|x, y| y.total_cmp(x));
    values
}

pub fn relative_frobenius_error(approx: &DMatrix<f64>, exact: &DMatrix<f64>) -> f64 {
    let denom = exact.norm();
    let diff = (approx - exact).norm();
    if denom == 0.0 {
        diff
    } else {
        diff / denom
    }
}

/// Number of eigenvalues strictly above `rel_tol * lambda_1`.
pub fn numerical_rank(values: &[f64], rel_tol: f64) -> usize {
    let top = values.first().copied().unwrap_or(0.0).max(0.0);
    if top == 0.0 {
        return 0;
    }
    values.iter().filter(|&&v| v > rel_tol * top).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_sorted_descending() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 5.0, 3.0]));
        let eig = SymEigen::new(&a);
        assert_eq!(eig.values.as_slice(), &[5.0, 3.0, 1.0]);
        assert_eq!(eigenvalues_desc(&a), vec![5.0, 3.0, 1.0]);
        let back = eig.reconstruct_with(|v| v);
        assert!(relative_frobenius_error(&back, &a) < 1e-14);
    }

    #[test]
    fn asymmetry_detected() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.5, 1.0]);
        assert!(matches!(
            ensure_symmetric(&a),
            Err(Error::NotSymmetric { .. })
        ));
        assert!(ensure_symmetric(&symmetrize(&a)).is_ok());
    }

    #[test]
    fn rank_counts_above_tolerance() {
        assert_eq!(numerical_rank(&[4.0, 1.0, 1e-12, -1e-13], 1e-10), 2);
        assert_eq!(numerical_rank(&[0.0, 0.0], 1e-10), 0);
    }
}
