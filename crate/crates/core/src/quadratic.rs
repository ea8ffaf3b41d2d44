//! Kronecker-indexed quadratic operators `Q ∈ R^{n x n²}`.
//!
//! Column `j1 * n + j2` of `Q` multiplies the monomial `v[j1] * w[j2]`.

use nalgebra::{DMatrix, DVector};

use crate::error::{shape_err, Result};
use crate::scalar::{lit, Entry, Real};

/// Computes `Q (v ⊗ w)` without materializing the Kronecker product.
///
/// The contraction runs `j1` outer, `j2` inner and accumulates each output
/// entry in column order, so the result is bitwise identical to multiplying
/// `Q` by an explicit `v ⊗ w` with a sequential dot product.
pub fn quad_apply<T: Real, V: Entry<T>>(
    q: &DMatrix<T>,
    v: &DVector<V>,
    w: &DVector<V>,
) -> Result<DVector<V>> {
    let n = v.len();
    if w.len() != n {
        return Err(shape_err("w", n, w.len()));
    }
    if q.nrows() != n || q.ncols() != n * n {
        return Err(shape_err(
            "Q",
            format!("{n}x{}", n * n),
            format!("{}x{}", q.nrows(), q.ncols()),
        ));
    }
    let mut out = DVector::<V>::zeros(n);
    quad_accumulate(q, v.as_slice(), w.as_slice(), out.as_mut_slice());
    Ok(out)
}

/// `out += Q (v ⊗ w)` for pre-validated shapes; the hot path of QB simulation.
pub(crate) fn quad_accumulate<T: Real, V: Entry<T>>(q: &DMatrix<T>, v: &[V], w: &[V], out: &mut [V]) {
    let n = v.len();
    let data = q.as_slice();
    for j1 in 0..n {
        let vj1 = v[j1];
        for j2 in 0..n {
            let k = vj1 * w[j2];
            let col = &data[(j1 * n + j2) * n..(j1 * n + j2 + 1) * n];
            for (o, &qij) in out.iter_mut().zip(col) {
                *o += k.scale(qij);
            }
        }
    }
}

/// Averages `Q` over the perfect shuffle of its Kronecker index:
/// `Q'[:, j1 n + j2] = (Q[:, j1 n + j2] + Q[:, j2 n + j1]) / 2`.
///
/// The result satisfies `Q'(v ⊗ w) = Q'(w ⊗ v)` exactly and agrees with `Q`
/// on symmetric arguments `v ⊗ v`. Applying it twice changes nothing.
pub fn symmetrize_q<T: Real>(q: &DMatrix<T>) -> DMatrix<T> {
    let n = q.nrows();
    assert_eq!(q.ncols(), n * n, "Q must be n x n^2");
    let half = lit::<T>(0.5);
    let mut out = q.clone();
    for j1 in 0..n {
        for j2 in (j1 + 1)..n {
            let (c12, c21) = (j1 * n + j2, j2 * n + j1);
            for i in 0..n {
                let avg = (q[(i, c12)] + q[(i, c21)]) * half;
                out[(i, c12)] = avg;
                out[(i, c21)] = avg;
            }
        }
    }
    out
}

/// Entrywise check of `Q[:, j1 n + j2] == Q[:, j2 n + j1]`.
pub fn is_symmetric<T: Real>(q: &DMatrix<T>) -> bool {
    let n = q.nrows();
    (0..n).all(|j1| {
        ((j1 + 1)..n).all(|j2| q.column(j1 * n + j2) == q.column(j2 * n + j1))
    })
}

/// Kronecker product of two column vectors.
pub fn kron_vec<T: Real, V: Entry<T>>(v: &DVector<V>, w: &DVector<V>) -> DVector<V> {
    let (n, m) = (v.len(), w.len());
    DVector::from_fn(n * m, |k, _| v[k / m] * w[k % m])
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;
    use proptest::prelude::*;

    /// Explicit Kronecker-then-multiply oracle with a sequential dot product.
    fn explicit(q: &DMatrix<f64>, v: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        let k = kron_vec(v, w);
        let mut out = DVector::zeros(q.nrows());
        for col in 0..q.ncols() {
            for i in 0..q.nrows() {
                out[i] += k[col] * q[(i, col)];
            }
        }
        out
    }

    #[test]
    fn symmetric_example() {
        let q = DMatrix::from_row_slice(2, 4, &[0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let v = dvector![1.0, 0.0];
        let w = dvector![0.0, 1.0];
        assert_eq!(quad_apply(&q, &v, &w).unwrap(), dvector![1.0, 0.0]);
        assert_eq!(quad_apply(&q, &w, &v).unwrap(), dvector![1.0, 0.0]);
    }

    #[test]
    fn zero_operator() {
        let q = DMatrix::<f64>::zeros(3, 9);
        let v = dvector![1.0, -2.0, 3.0];
        assert_eq!(quad_apply(&q, &v, &v).unwrap(), DVector::zeros(3));
    }

    #[test]
    fn shape_mismatch() {
        let q = DMatrix::<f64>::zeros(2, 3);
        assert!(quad_apply(&q, &dvector![1.0, 2.0], &dvector![1.0, 2.0]).is_err());
        let q = DMatrix::<f64>::zeros(2, 4);
        assert!(quad_apply(&q, &dvector![1.0, 2.0], &dvector![1.0]).is_err());
    }

    #[test]
    fn symmetrize_hand_example() {
        let q = DMatrix::from_row_slice(2, 4, &[0.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let s = symmetrize_q(&q);
        assert_eq!(s.row(0).iter().copied().collect::<Vec<_>>(), vec![0.0, 1.0, 1.0, 0.0]);
        assert_eq!(s.row(1).iter().copied().collect::<Vec<_>>(), vec![0.0; 4]);
    }

    #[test]
    fn symmetric_q_is_fixed_point() {
        let q = DMatrix::from_row_slice(2, 4, &[3.0, 1.5, 1.5, -2.0, 0.25, 7.0, 7.0, 1.0]);
        assert!(is_symmetric(&q));
        assert_eq!(symmetrize_q(&q), q);
    }

    #[test]
    fn complex_arguments() {
        use num_complex::Complex64;
        let q = DMatrix::from_row_slice(1, 1, &[2.0]);
        let v = dvector![Complex64::new(1.0, 1.0)];
        let out = quad_apply(&q, &v, &v).unwrap();
        assert_eq!(out[0], Complex64::new(0.0, 4.0));
    }

    fn matrix(n: usize, m: usize) -> impl Strategy<Value = DMatrix<f64>> {
        proptest::collection::vec(-10.0..10.0f64, n * m)
            .prop_map(move |d| DMatrix::from_vec(n, m, d))
    }

    fn vector(n: usize) -> impl Strategy<Value = DVector<f64>> {
        proptest::collection::vec(-10.0..10.0f64, n).prop_map(DVector::from_vec)
    }

    fn case() -> impl Strategy<Value = (DMatrix<f64>, DVector<f64>, DVector<f64>)> {
        (1usize..=20).prop_flat_map(|n| (matrix(n, n * n), vector(n), vector(n)))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn matches_explicit_kronecker_bitwise((q, v, w) in case()) {
            prop_assert_eq!(quad_apply(&q, &v, &w).unwrap(), explicit(&q, &v, &w));
        }

        #[test]
        fn symmetrize_is_idempotent((q, _v, _w) in case()) {
            let once = symmetrize_q(&q);
            prop_assert!(is_symmetric(&once));
            prop_assert_eq!(symmetrize_q(&once), once);
        }

        #[test]
        fn symmetrize_preserves_symmetric_arguments((q, v, w) in case()) {
            let s = symmetrize_q(&q);
            let qa = q.abs();
            let (va, wa) = (v.abs(), w.abs());
            let bound = quad_apply(&qa, &va, &va).unwrap().amax().max(quad_apply(&qa, &va, &wa).unwrap().amax());
            let tol = 1e-15 * (q.ncols() as f64) * bound.max(1.0);

            let lhs = quad_apply(&s, &v, &v).unwrap();
            let rhs = quad_apply(&q, &v, &v).unwrap();
            prop_assert!((lhs - rhs).amax() <= tol);

            let avg = (quad_apply(&q, &v, &w).unwrap() + quad_apply(&q, &w, &v).unwrap()) * 0.5;
            let sym = quad_apply(&s, &v, &w).unwrap();
            prop_assert!((avg - sym).amax() <= tol);
        }
    }
}
