use nalgebra::{DMatrix, SymmetricEigen};

/// Moore–Penrose pseudoinverse; singular values at or below
/// `rel_tol · σ_max` count as zero.
///
/// The singular triples come from the symmetric eigenproblem of
/// `[[0, A], [Aᵀ, 0]]`, whose eigenpairs are `±σ` with vectors
/// `(u, ±v)/√2`. nalgebra's bidiagonal SVD can return factors that do not
/// recompose `A` when exact zero singular values are present; the
/// symmetric solver does not have that failure. The `σ`-block
/// `Σ v uᵀ` is independent of the basis chosen inside repeated
/// eigenvalues, so ties are harmless.
pub fn pseudoinverse(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let (r, c) = m.shape();
    let mut out = DMatrix::zeros(c, r);
    if r == 0 || c == 0 {
        return out;
    }
    let mut aug = DMatrix::zeros(r + c, r + c);
    aug.view_mut((0, r), (r, c)).copy_from(m);
    aug.view_mut((r, 0), (c, r)).copy_from(&m.transpose());
    let eig = SymmetricEigen::new(aug);
    let smax = eig.eigenvalues.max();
    if smax <= 0.0 {
        return out;
    }
    for (k, &s) in eig.eigenvalues.iter().enumerate() {
        if s > rel_tol * smax {
            let w = eig.eigenvectors.column(k);
            // w = (u; v)/√2, so v uᵀ / σ = 2 w_v w_uᵀ / σ
            out.ger(2.0 / s, &w.rows(r, c), &w.rows(0, r), 1.0);
        }
    }
    out
}

/// Symmetrizes and clips eigenvalues below zero. Returns the repaired
/// matrix and the most negative eigenvalue seen (0 if none).
pub fn clip_psd(m: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let s = (m + m.transpose()) * 0.5;
    if s.nrows() == 0 {
        return (s, 0.0);
    }
    let eig = SymmetricEigen::new(s.clone());
    let min = eig.eigenvalues.min();
    if min >= 0.0 {
        return (s, 0.0);
    }
    let d = eig.eigenvalues.map(|l| l.max(0.0));
    (
        &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose(),
        min,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invertible() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 4.0]);
        let p = pseudoinverse(&m, 1e-12);
        assert!((p - DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.25])).norm() < 1e-15);
    }

    #[test]
    fn zero() {
        assert_eq!(
            pseudoinverse(&DMatrix::zeros(2, 3), 1e-12),
            DMatrix::zeros(3, 2)
        );
    }

    #[test]
    fn rank_one() {
        let m = DMatrix::from_element(2, 2, 1.0);
        let p = pseudoinverse(&m, 1e-12);
        assert!((p - DMatrix::from_element(2, 2, 0.25)).norm() < 1e-15);
    }
}
