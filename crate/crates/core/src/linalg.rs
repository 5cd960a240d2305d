//! Small dense symmetric-matrix helpers on top of nalgebra.

use nalgebra::{DMatrix, SymmetricEigen};

pub(crate) fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Outcome of inverting a symmetric matrix that should be positive definite.
pub(crate) struct SymmetricInverse {
    pub inverse: DMatrix<f64>,
    /// Cholesky failed and the Moore–Penrose pseudo-inverse was used.
    pub pseudo: bool,
    /// Number of eigenvalues treated as nonzero.
    pub rank: usize,
    pub min_eigenvalue: f64,
}

impl SymmetricInverse {
    pub fn is_singular(&self) -> bool {
        self.rank < self.inverse.nrows()
    }
}

/// Relative cutoff below which an eigenvalue counts as zero.
const RANK_TOLERANCE: f64 = 1e-10;

pub(crate) fn invert_symmetric(m: &DMatrix<f64>) -> SymmetricInverse {
    let n = m.nrows();
    let eig = SymmetricEigen::new(m.clone());
    let max_abs = eig.eigenvalues.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let min_eig = eig.eigenvalues.iter().fold(f64::INFINITY, |a, &v| a.min(v));
    let cutoff = RANK_TOLERANCE * max_abs.max(f64::MIN_POSITIVE);
    let rank = eig.eigenvalues.iter().filter(|v| v.abs() > cutoff).count();

    if n > 0 && min_eig > cutoff {
        if let Some(chol) = m.clone().cholesky() {
            let mut inverse = chol.inverse();
            symmetrize(&mut inverse);
            return SymmetricInverse {
                inverse,
                pseudo: false,
                rank,
                min_eigenvalue: min_eig,
            };
        }
    }

    let mut inverse = DMatrix::zeros(n, n);
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda.abs() <= cutoff {
            continue;
        }
        let v = eig.eigenvectors.column(k);
        inverse += (v * v.transpose()) / lambda;
    }
    symmetrize(&mut inverse);
    SymmetricInverse {
        inverse,
        pseudo: true,
        rank,
        min_eigenvalue: min_eig,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn positive_definite_uses_cholesky() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let inv = invert_symmetric(&m);
        assert!(!inv.pseudo);
        assert_eq!(inv.rank, 2);
        let id = &m * &inv.inverse;
        assert!((id - DMatrix::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn singular_matrix_falls_back_to_pseudo_inverse() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let inv = invert_symmetric(&m);
        assert!(inv.pseudo);
        assert_eq!(inv.rank, 1);
        // A A+ A = A
        let back = &m * &inv.inverse * &m;
        assert!((back - m).norm() < 1e-12);
    }

    #[test]
    fn indefinite_matrix_counts_full_rank() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -2.0]);
        let inv = invert_symmetric(&m);
        assert!(inv.pseudo);
        assert_eq!(inv.rank, 2);
        assert!((inv.inverse[(1, 1)] + 0.5).abs() < 1e-12);
    }
}
