//! Two diode/capacitor blocks in series driven by a current `I(t)`.
//!
//! With `x_i = V_i / Vt_i`, `a = 1/(C1 Vt1)`, `b = 1/(C2 Vt2)`, `c = Ir1`, `d = Ir2`:
//!
//! ```text
//! x1' = a I - a c (exp(x1) - 1)
//! x2' = b I - b d (exp(x2) - 1)
//! y   = Vt1 x1 + Vt2 x2
//! ```

use nalgebra::{DMatrix, DVector, RowDVector};
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use super::{carleman_bilinear, expm1_guarded, NonlinearModel};
use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Real};
use crate::system::{LinearSystem, QbSystem, StateSpace};

/// Circuit constants of the toy model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiodeToyParams {
    #[serde(rename = "C1")]
    pub c1: f64,
    #[serde(rename = "C2")]
    pub c2: f64,
    #[serde(rename = "Ir1")]
    pub ir1: f64,
    #[serde(rename = "Ir2")]
    pub ir2: f64,
    #[serde(rename = "Vt1")]
    pub vt1: f64,
    #[serde(rename = "Vt2")]
    pub vt2: f64,
}

impl Default for DiodeToyParams {
    fn default() -> Self {
        Self {
            c1: 1.0,
            c2: 1.0,
            ir1: 1.0,
            ir2: 1.0,
            vt1: 1.0,
            vt2: 1.0,
        }
    }
}

impl DiodeToyParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("C1", self.c1),
            ("C2", self.c2),
            ("Ir1", self.ir1),
            ("Ir2", self.ir2),
            ("Vt1", self.vt1),
            ("Vt2", self.vt2),
        ];
        for (name, v) in all {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn a(&self) -> f64 {
        1.0 / (self.c1 * self.vt1)
    }

    pub fn b(&self) -> f64 {
        1.0 / (self.c2 * self.vt2)
    }

    pub fn c(&self) -> f64 {
        self.ir1
    }

    pub fn d(&self) -> f64 {
        self.ir2
    }
}

struct Coeffs<T> {
    a: T,
    b: T,
    ac: T,
    bd: T,
    vt1: T,
    vt2: T,
}

fn coeffs<T: Real>(p: &DiodeToyParams) -> Result<Coeffs<T>> {
    p.validate()?;
    Ok(Coeffs {
        a: lit(p.a()),
        b: lit(p.b()),
        ac: lit(p.a() * p.c()),
        bd: lit(p.b() * p.d()),
        vt1: lit(p.vt1),
        vt2: lit(p.vt2),
    })
}

/// The original exponential model.
pub fn toy_nonlinear<T: Real>(p: &DiodeToyParams) -> Result<NonlinearModel<T>> {
    let k = coeffs::<T>(p)?;
    let (vt1, vt2) = (k.vt1, k.vt2);
    Ok(NonlinearModel::new(
        2,
        "toy",
        move |x, u, out| {
            let (e1, f1) = expm1_guarded(x[0]);
            let (e2, f2) = expm1_guarded(x[1]);
            out[0] = k.a * u - k.ac * e1;
            out[1] = k.b * u - k.bd * e2;
            f1 || f2
        },
        move |x| vt1 * x[0] + vt2 * x[1],
    ))
}

/// First-order Taylor model: `A = diag(-ac, -bd)`, `B = (a, b)`, `C = (Vt1, Vt2)`.
pub fn toy_linearized<T: Real>(p: &DiodeToyParams) -> Result<LinearSystem<T>> {
    let k = coeffs::<T>(p)?;
    let z = T::zero();
    LinearSystem::standard(
        DMatrix::from_row_slice(2, 2, &[-k.ac, z, z, -k.bd]),
        DVector::from_vec(vec![k.a, k.b]),
        RowDVector::from_vec(vec![k.vt1, k.vt2]),
    )
    .map(|s| s.with_provenance("toy linearized"))
}

/// Six-state Carleman bilinear model on `(x1, x2, x1², x1x2, x2x1, x2²)`.
pub fn toy_carleman_bilinear<T: Real>(p: &DiodeToyParams) -> Result<QbSystem<T>> {
    let lin = toy_linearized::<T>(p)?;
    let k = coeffs::<T>(p)?;
    // exp(x) - 1 = x + x²/2 + ..., so f_i has Hessian -ac at (0; 0, 0) and -bd at (1; 1, 1).
    let mut a2 = DMatrix::zeros(2, 4);
    a2[(0, 0)] = -k.ac;
    a2[(1, 3)] = -k.bd;
    carleman_bilinear(lin.a(), &a2, lin.b(), lin.c()).map(|s| s.with_provenance("toy carleman"))
}

/// Exact lifting with `x3 = exp(x1) - 1`, `x4 = exp(x2) - 1`:
///
/// ```text
/// x1' = a u - ac x3
/// x3' = a u - ac x3 - ac x3² + a x3 u
/// ```
/// and likewise for `(x2, x4)`.
pub fn toy_lifted_qb<T: Real>(p: &DiodeToyParams) -> Result<QbSystem<T>> {
    let k = coeffs::<T>(p)?;
    let mut a = DMatrix::zeros(4, 4);
    a[(0, 2)] = -k.ac;
    a[(1, 3)] = -k.bd;
    a[(2, 2)] = -k.ac;
    a[(3, 3)] = -k.bd;
    let mut q = DMatrix::zeros(4, 16);
    q[(2, 2 * 4 + 2)] = -k.ac;
    q[(3, 3 * 4 + 3)] = -k.bd;
    let mut n = DMatrix::zeros(4, 4);
    n[(2, 2)] = k.a;
    n[(3, 3)] = k.b;
    let b = DVector::from_vec(vec![k.a, k.b, k.a, k.b]);
    let z = T::zero();
    let c = RowDVector::from_vec(vec![k.vt1, k.vt2, z, z]);
    QbSystem::new(DMatrix::identity(4, 4), a, Some(q), n, b, c).map(|s| s.with_provenance("toy lifted"))
}

fn pole_guard<T: Real>(den: Complex<T>, s: Complex<T>) -> Result<()> {
    if den.re == T::zero() && den.im == T::zero() {
        return Err(Error::PoleHit {
            re: to_f64(s.re),
            im: to_f64(s.im),
        });
    }
    Ok(())
}

/// `H1(s) = Vt1/(C1 Vt1 s + Ir1) + Vt2/(C2 Vt2 s + Ir2)`.
pub fn toy_h1_closed_form<T: Real>(p: &DiodeToyParams, s: Complex<T>) -> Result<Complex<T>> {
    let mut h = Complex::new(T::zero(), T::zero());
    for (c, vt, ir) in [(p.c1, p.vt1, p.ir1), (p.c2, p.vt2, p.ir2)] {
        let den = s * lit::<T>(c * vt) + lit::<T>(ir);
        pole_guard(den, s)?;
        h += Complex::new(lit::<T>(vt), T::zero()) / den;
    }
    Ok(h)
}

/// `H2(s, s) = -Σ Ir Vt / (2 (Ir + C Vt s)² (Ir + 2 C Vt s))` over both blocks.
pub fn toy_h2_diag_closed_form<T: Real>(p: &DiodeToyParams, s: Complex<T>) -> Result<Complex<T>> {
    let mut h = Complex::new(T::zero(), T::zero());
    for (c, vt, ir) in [(p.c1, p.vt1, p.ir1), (p.c2, p.vt2, p.ir2)] {
        let (cv, ir_t) = (lit::<T>(c * vt), lit::<T>(ir));
        let d1 = s * cv + ir_t;
        let d2 = s * (cv * lit::<T>(2.0)) + ir_t;
        pole_guard(d1, s)?;
        pole_guard(d2, s)?;
        h -= Complex::new(lit::<T>(ir * vt), T::zero()) / (d1 * d1 * d2 * lit::<T>(2.0));
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::StateSpace;
    use crate::transfer::{eval_h1, eval_h2, resolvent_apply};
    use num_complex::Complex64;
    use rand::{rngs::StdRng, Rng, SeedableRng};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn ones() -> DiodeToyParams {
        DiodeToyParams::default()
    }

    fn skewed() -> DiodeToyParams {
        DiodeToyParams {
            c1: 0.7,
            c2: 1.9,
            ir1: 0.3,
            ir2: 2.2,
            vt1: 1.4,
            vt2: 0.6,
        }
    }

    #[test]
    fn nonlinear_rhs_examples() {
        let m = toy_nonlinear::<f64>(&ones()).unwrap();
        assert_eq!(m.rhs(&DVector::zeros(2), 1.0), DVector::from_vec(vec![1.0, 1.0]));
        assert_eq!(m.rhs(&DVector::zeros(2), 0.0), DVector::zeros(2));
        let x = DVector::from_vec(vec![2f64.ln(), 0.0]);
        assert!((m.rhs(&x, 0.0)[0] + 1.0).abs() < 1e-15);
        assert_eq!(m.output(&DVector::zeros(2)), 0.0);
    }

    #[test]
    fn overflow_guard_flags() {
        let m = toy_nonlinear::<f64>(&ones()).unwrap();
        let mut out = DVector::zeros(2);
        assert!(m.rhs_into(&DVector::from_vec(vec![800.0, 0.0]), 0.0, &mut out));
        assert!(out[0].is_finite());
        assert!(!m.rhs_into(&DVector::from_vec(vec![1.0, 0.0]), 0.0, &mut out));
    }

    #[test]
    fn linearized_matrices() {
        let l = toy_linearized::<f64>(&ones()).unwrap();
        assert_eq!(l.a(), &(-DMatrix::identity(2, 2)));
        assert_eq!(l.b().as_slice(), &[1.0, 1.0]);
        assert_eq!(l.c().as_slice(), &[1.0, 1.0]);
        assert_eq!(eval_h1(&l, c(0.0, 0.0)).unwrap(), c(2.0, 0.0));
    }

    #[test]
    fn closed_forms_at_origin() {
        assert_eq!(toy_h1_closed_form(&ones(), c(0.0, 0.0)).unwrap(), c(2.0, 0.0));
        assert_eq!(toy_h2_diag_closed_form(&ones(), c(0.0, 0.0)).unwrap(), c(-1.0, 0.0));
        assert!((toy_h1_closed_form(&ones(), c(0.0, 1.0)).unwrap() - c(1.0, -1.0)).norm() < 1e-15);
        assert!(toy_h1_closed_form(&ones(), c(0.0, 1e9)).unwrap().norm() < 1e-8);
        assert!(matches!(toy_h1_closed_form(&ones(), c(-1.0, 0.0)), Err(Error::PoleHit { .. })));
        assert!(matches!(toy_h2_diag_closed_form(&ones(), c(-0.5, 0.0)), Err(Error::PoleHit { .. })));
    }

    #[test]
    fn lifted_matrices_all_ones() {
        let q = toy_lifted_qb::<f64>(&ones()).unwrap();
        assert_eq!(q.a()[(2, 2)], -1.0);
        assert_eq!(q.a()[(3, 3)], -1.0);
        assert_eq!(q.bilinear()[(2, 2)], 1.0);
        assert_eq!(q.bilinear()[(3, 3)], 1.0);
        assert_eq!(q.b().as_slice(), &[1.0; 4]);
        assert!(q.is_symmetric());
    }

    #[test]
    fn lifted_matches_closed_forms() {
        let mut rng = StdRng::seed_from_u64(21);
        for p in [ones(), skewed()] {
            let q = toy_lifted_qb::<f64>(&p).unwrap();
            for _ in 0..20 {
                let s = c(0.0, rng.random_range(-20.0..20.0));
                let (h1, w1) = (eval_h1(&q, s).unwrap(), toy_h1_closed_form(&p, s).unwrap());
                assert!((h1 - w1).norm() <= 1e-10 * w1.norm());
                let (h2, w2) = (eval_h2(&q, s, s).unwrap(), toy_h2_diag_closed_form(&p, s).unwrap());
                assert!((h2 - w2).norm() <= 1e-10 * w2.norm());
            }
            // Near the origin (the lifted A is singular at 0 itself).
            let s = c(0.0, 1e-7);
            assert!((eval_h1(&q, s).unwrap() - toy_h1_closed_form(&p, s).unwrap()).norm() < 1e-6);
        }
    }

    #[test]
    fn lifted_resolvent_matches_dense_inverse() {
        let q = toy_lifted_qb::<f64>(&ones()).unwrap();
        let s = c(0.0, 1.0);
        let b = q.b().map(|x| c(x, 0.0));
        let inv = (DMatrix::<Complex64>::identity(4, 4) * s - q.a().map(|x| c(x, 0.0))).try_inverse().unwrap();
        let got = resolvent_apply(&q, s, &b).unwrap();
        assert!((got - inv * b).norm() < 1e-12);
    }

    #[test]
    fn lifted_rhs_equals_nonlinear_rhs_on_manifold() {
        let mut rng = StdRng::seed_from_u64(22);
        let p = skewed();
        let nl = toy_nonlinear::<f64>(&p).unwrap();
        let qb = toy_lifted_qb::<f64>(&p).unwrap();
        for _ in 0..10 {
            let x: DVector<f64> = DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
            let u = rng.random_range(-1.0..1.0);
            let z = DVector::from_vec(vec![x[0], x[1], x[0].exp_m1(), x[1].exp_m1()]);
            let q = qb.q().unwrap();
            let zdot = qb.a() * &z + crate::quadratic::quad_apply(q, &z, &z).unwrap() + qb.bilinear() * &z * u + qb.b() * u;
            let xdot = nl.rhs(&x, u);
            assert!((zdot[0] - xdot[0]).abs() < 1e-13);
            assert!((zdot[1] - xdot[1]).abs() < 1e-13);
            // d/dt (exp(x) - 1) = exp(x) x'
            assert!((zdot[2] - x[0].exp() * xdot[0]).abs() < 1e-12);
            assert!((zdot[3] - x[1].exp() * xdot[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn carleman_rows() {
        let cb = toy_carleman_bilinear::<f64>(&ones()).unwrap();
        assert_eq!(cb.order(), 6);
        assert!(cb.q().is_none());
        // Row of d/dt x1²: -2 on x1², 2 on x1 u.
        assert_eq!(cb.a()[(2, 2)], -2.0);
        assert_eq!(cb.bilinear()[(2, 0)], 2.0);
        // Row of d/dt x1: -ac x1 - (ac/2) x1².
        assert_eq!(cb.a()[(0, 0)], -1.0);
        assert_eq!(cb.a()[(0, 2)], -0.5);
        assert_eq!(&cb.b().as_slice()[..2], &[1.0, 1.0]);
        assert!(cb.b().as_slice()[2..].iter().all(|&x| x == 0.0));
        // Cross term x1 x2: -(ac + bd) and bilinear b on x1, a on x2.
        assert_eq!(cb.a()[(3, 3)], -2.0);
        assert_eq!(cb.bilinear()[(3, 0)], 1.0);
        assert_eq!(cb.bilinear()[(3, 1)], 1.0);
    }

    #[test]
    fn f32_models() {
        let q = toy_lifted_qb::<f32>(&ones()).unwrap();
        let h = eval_h1(&q, num_complex::Complex32::new(0.0, 1.0)).unwrap();
        assert!((h - num_complex::Complex32::new(1.0, -1.0)).norm() < 1e-5);
    }
}
