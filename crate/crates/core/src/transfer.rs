//! Resolvents and the first two generalized (symmetric) transfer functions
//!
//! ```text
//! Φ(s)         = (sE - A)^{-1}
//! H1(s1)       = C Φ(s1) B
//! H2(s1, s2)   = C Φ(s1+s2) Q (Φ(s1)B ⊗ Φ(s2)B) + ½ C Φ(s1+s2) N (Φ(s1)B + Φ(s2)B)
//! ```
//!
//! Resolvents are always applied through an LU factorization of `sE - A`,
//! never by forming the inverse.

use nalgebra::{ComplexField, DMatrix, DVector, Dyn, RowDVector, LU};
use num_complex::Complex;

use crate::error::{shape_err, Error, Result};
use crate::quadratic;
use crate::scalar::{lit, to_f64, Entry, Real};
use crate::system::{QbSystem, StateSpace};

/// LU factorization of `sE - A` (or its transpose) at a fixed frequency.
pub struct Resolvent<T: Real> {
    lu: LU<Complex<T>, Dyn, Dyn>,
}

impl<T: Real> Resolvent<T> {
    /// Factors `sE - A`; `transpose` factors `(sE - A)^T` for row-vector solves.
    pub fn new<S: StateSpace<T>>(sys: &S, s: Complex<T>, transpose: bool) -> Result<Self> {
        let pencil = shifted_pencil(sys, s);
        let pencil = if transpose { pencil.transpose() } else { pencil };
        let n = pencil.nrows();
        let lu = pencil.lu();
        // Partial-pivoting LU: an exactly singular pencil leaves a pivot at
        // roundoff level relative to the largest one.
        let u = lu.u();
        let (mut lo, mut hi) = (T::max_value().unwrap(), T::zero());
        for k in 0..n {
            let p = u[(k, k)].modulus();
            lo = lo.min(p);
            hi = hi.max(p);
        }
        let eps = T::default_epsilon() * lit::<T>(n as f64);
        if !(hi > T::zero()) || !(lo > eps * hi) {
            return Err(Error::SingularResolvent {
                re: to_f64(s.re),
                im: to_f64(s.im),
                pair: None,
            });
        }
        Ok(Self { lu })
    }

    /// `(sE - A)^{-1} v` (or `(sE - A)^{-T} v` for a transposed factorization).
    pub fn solve(&self, v: &DVector<Complex<T>>) -> DVector<Complex<T>> {
        self.lu.solve(v).expect("nonsingular by construction")
    }
}

fn shifted_pencil<T: Real, S: StateSpace<T>>(sys: &S, s: Complex<T>) -> DMatrix<Complex<T>> {
    let n = sys.order();
    let mut m = sys.a().map(|x| -x.to_complex());
    if sys.e_is_identity() {
        for k in 0..n {
            m[(k, k)] += s;
        }
    } else {
        m.zip_apply(sys.e(), |mij, eij| *mij += s * eij.to_complex());
    }
    m
}

/// Returns `(sE - A)^{-1} v`.
pub fn resolvent_apply<T: Real, S: StateSpace<T>>(
    sys: &S,
    s: Complex<T>,
    v: &DVector<Complex<T>>,
) -> Result<DVector<Complex<T>>> {
    if v.len() != sys.order() {
        return Err(shape_err("v", sys.order(), v.len()));
    }
    Ok(Resolvent::new(sys, s, false)?.solve(v))
}

/// Returns the row vector `w (sE - A)^{-1}`.
pub fn resolvent_apply_left<T: Real, S: StateSpace<T>>(
    sys: &S,
    s: Complex<T>,
    w: &RowDVector<Complex<T>>,
) -> Result<RowDVector<Complex<T>>> {
    if w.len() != sys.order() {
        return Err(shape_err("w", sys.order(), w.len()));
    }
    Ok(Resolvent::new(sys, s, true)?.solve(&w.transpose()).transpose())
}

/// `Φ(s) B` as a complex vector.
pub fn resolvent_input<T: Real, S: StateSpace<T>>(sys: &S, s: Complex<T>) -> Result<DVector<Complex<T>>> {
    let b = sys.b().map(|x| x.to_complex());
    Ok(Resolvent::new(sys, s, false)?.solve(&b))
}

/// `C Φ(s)` as a complex row vector.
pub fn resolvent_output<T: Real, S: StateSpace<T>>(sys: &S, s: Complex<T>) -> Result<RowDVector<Complex<T>>> {
    let c = sys.c().map(|x| x.to_complex()).transpose();
    Ok(Resolvent::new(sys, s, true)?.solve(&c).transpose())
}

/// First generalized transfer function `H1(s) = C Φ(s) B`.
pub fn eval_h1<T: Real, S: StateSpace<T>>(sys: &S, s: Complex<T>) -> Result<Complex<T>> {
    let x = resolvent_input(sys, s)?;
    Ok(dot_row(sys.c(), &x))
}

/// Second symmetric generalized transfer function `H2(s1, s2)`.
pub fn eval_h2<T: Real>(sys: &QbSystem<T>, s1: Complex<T>, s2: Complex<T>) -> Result<Complex<T>> {
    let p1 = resolvent_input(sys, s1)?;
    let p2 = if s2 == s1 { p1.clone() } else { resolvent_input(sys, s2)? };
    eval_h2_from_inputs(sys, s1 + s2, &p1, &p2)
}

/// `H2` given precomputed `Φ(s1)B` and `Φ(s2)B`; lets grid evaluations reuse
/// the per-frequency solves.
pub fn eval_h2_from_inputs<T: Real>(
    sys: &QbSystem<T>,
    sum: Complex<T>,
    p1: &DVector<Complex<T>>,
    p2: &DVector<Complex<T>>,
) -> Result<Complex<T>> {
    let n = sys.order();
    let mut forcing = DVector::<Complex<T>>::zeros(n);
    if let Some(q) = sys.q() {
        quadratic::quad_accumulate(q, p1.as_slice(), p2.as_slice(), forcing.as_mut_slice());
    }
    let half = lit::<T>(0.5);
    let bil = sys.bilinear();
    let psum = p1 + p2;
    for j in 0..n {
        let pj = psum[j] * half;
        for i in 0..n {
            forcing[i] += pj.scale(bil[(i, j)]);
        }
    }
    let x = Resolvent::new(sys, sum, false)?.solve(&forcing);
    Ok(dot_row(sys.c(), &x))
}

pub(crate) fn dot_row<T: Real, N: Entry<T>>(c: &RowDVector<N>, x: &DVector<Complex<T>>) -> Complex<T> {
    c.iter()
        .zip(x.iter())
        .fold(Complex::new(T::zero(), T::zero()), |acc, (ci, xi)| acc + ci.to_complex() * xi)
}
