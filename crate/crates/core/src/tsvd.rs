//! Truncated-SVD least squares.

use nalgebra::{DMatrix, DVector};

use crate::scalar::Real;

/// Minimum-norm least-squares solution restricted to the singular values
/// `sigma_i >= tol * sigma_1`.
#[derive(Debug, Clone)]
pub struct TsvdSolution<T: Real> {
    pub z: DVector<T>,
    pub rank: usize,
    /// Singular values of the system matrix, non-increasing.
    pub sigma: Vec<T>,
}

/// Solves `min ||A z - b||` by truncated SVD.
///
/// Tall systems are first reduced with a Householder QR, `A = Q R`, so the SVD
/// runs on the square factor `R` (same singular values and right vectors).
pub fn tsvd_solve<T: Real>(a: &DMatrix<T>, b: &DVector<T>, tol: T) -> TsvdSolution<T> {
    let (m, n) = a.shape();
    assert_eq!(b.len(), m, "right-hand side length");
    if m == 0 || n == 0 {
        return TsvdSolution {
            z: DVector::zeros(n),
            rank: 0,
            sigma: Vec::new(),
        };
    }
    let (core, rhs) = if m > n {
        let qr = a.clone().qr();
        let mut qtb = b.clone();
        qr.q_tr_mul(&mut qtb);
        (qr.r(), qtb.rows(0, n).into_owned())
    } else {
        (a.clone(), b.clone())
    };

    let svd = core.svd(true, true);
    let sigma: Vec<T> = svd.singular_values.iter().copied().collect();
    let s1 = sigma[0];
    let rank = if s1 > T::zero() {
        sigma.iter().take_while(|&&s| s >= tol * s1).count()
    } else {
        0
    };
    let u = svd.u.as_ref().expect("requested");
    let vt = svd.v_t.as_ref().expect("requested");
    let mut z = DVector::zeros(n);
    for (i, &sv) in sigma.iter().enumerate().take(rank) {
        let coef = u.column(i).dot(&rhs) / sv;
        z.axpy(coef, &vt.row(i).transpose(), T::one());
    }
    TsvdSolution { z, rank, sigma }
}
