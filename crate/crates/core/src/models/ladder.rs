//! Nonlinear RC ladder with Shockley diodes.
//!
//! With node voltages `v`, branch voltages `d = D v` (`d_1 = v_1`,
//! `d_k = v_{k-1} - v_k`) and `g(d) = iS (exp(uP d) - 1) + d`:
//!
//! ```text
//! v' = -D^T g(D v) + e_1 u,   y = v_1
//! ```

use nalgebra::{DMatrix, DVector, RowDVector};
use serde::{Deserialize, Serialize};

use super::{carleman_bilinear, expm1_guarded, NonlinearModel};
use crate::error::{Error, Result};
use crate::scalar::{lit, Real};
use crate::system::QbSystem;

/// Largest ladder size accepted by [`ladder_carleman_bilinear`] (state `n² + n`).
pub const LADDER_CARLEMAN_CAP: usize = 80;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LadderParams {
    /// Number of circuit blocks.
    pub n: usize,
    /// Diode saturation current.
    #[serde(rename = "iS", default = "default_is")]
    pub i_s: f64,
    /// Exponent factor.
    #[serde(rename = "uP", default = "default_up")]
    pub u_p: f64,
}

fn default_is() -> f64 {
    1.0
}

fn default_up() -> f64 {
    40.0
}

impl LadderParams {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            i_s: default_is(),
            u_p: default_up(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidParameter(format!("ladder needs n >= 2, got {}", self.n)));
        }
        if !(self.i_s > 0.0 && self.i_s.is_finite()) {
            return Err(Error::InvalidParameter(format!("iS must be positive, got {}", self.i_s)));
        }
        if !(self.u_p > 0.0 && self.u_p.is_finite()) {
            return Err(Error::InvalidParameter(format!("uP must be positive, got {}", self.u_p)));
        }
        Ok(())
    }
}

/// Lower bidiagonal difference matrix mapping node to branch voltages.
fn difference<T: Real>(n: usize) -> DMatrix<T> {
    let mut d = DMatrix::zeros(n, n);
    d[(0, 0)] = T::one();
    for k in 1..n {
        d[(k, k - 1)] = T::one();
        d[(k, k)] = -T::one();
    }
    d
}

/// The original ladder equations.
pub fn ladder_nonlinear<T: Real>(p: &LadderParams) -> Result<NonlinearModel<T>> {
    p.validate()?;
    let n = p.n;
    let (is, up) = (lit::<T>(p.i_s), lit::<T>(p.u_p));
    let g = move |d: T| {
        let (e, clamped) = expm1_guarded(up * d);
        (is * e + d, clamped)
    };
    Ok(NonlinearModel::new(
        n,
        format!("ladder n={n}"),
        move |v, u, out| {
            let mut clamped = false;
            let mut branch = |k: usize| {
                let d = if k == 0 { v[0] } else { v[k - 1] - v[k] };
                let (gk, c) = g(d);
                clamped |= c;
                gk
            };
            // Node k gains the current of branch k and loses that of branch k+1;
            // node 0 is fed by u and loses both its branches.
            let g0 = branch(0);
            let mut g_cur = g0;
            for k in 0..n {
                let g_next = if k + 1 < n { branch(k + 1) } else { T::zero() };
                out[k] = g_cur - g_next;
                g_cur = g_next;
            }
            out[0] = out[0] - g0 - g0 + u;
            clamped
        },
        |v| v[0],
    ))
}

/// Exact QB lifting of dimension `2n`.
///
/// States are `(v, w)` with `w_k = exp(uP d_k) - 1`, so `g(d) = iS w + D v`
/// and
///
/// ```text
/// v' = -D^T D v - iS D^T w + e_1 u
/// w' = uP (w + 1) ∘ D v'
/// ```
///
/// which is linear plus `w_k × (linear)` quadratic terms and `w_k u`
/// bilinear terms.
pub fn ladder_lifted_qb<T: Real>(p: &LadderParams) -> Result<QbSystem<T>> {
    p.validate()?;
    let n = p.n;
    let m = 2 * n;
    let (is, up) = (lit::<T>(p.i_s), lit::<T>(p.u_p));
    let half = lit::<T>(0.5);
    let d = difference::<T>(n);
    let mv = -(d.transpose() * &d);
    let mw = -(d.transpose() * is);
    let lv = &d * &mv;
    let lw = &d * &mw;
    let lb = d.column(0).into_owned();

    let mut a = DMatrix::zeros(m, m);
    a.view_mut((0, 0), (n, n)).copy_from(&mv);
    a.view_mut((0, n), (n, n)).copy_from(&mw);
    a.view_mut((n, 0), (n, n)).copy_from(&(&lv * up));
    a.view_mut((n, n), (n, n)).copy_from(&(&lw * up));

    let mut b = DVector::zeros(m);
    b[0] = T::one();
    b.rows_mut(n, n).copy_from(&(&lb * up));

    let mut bil = DMatrix::zeros(m, m);
    let mut q = DMatrix::zeros(m, m * m);
    for k in 0..n {
        let row = n + k;
        let wk = n + k;
        bil[(row, wk)] = up * lb[k];
        // uP w_k (Lv v + Lw w), split evenly over both Kronecker orders.
        for j in 0..n {
            let cv = up * lv[(k, j)] * half;
            if cv != T::zero() {
                q[(row, wk * m + j)] += cv;
                q[(row, j * m + wk)] += cv;
            }
            let cw = up * lw[(k, j)] * half;
            if cw != T::zero() {
                q[(row, wk * m + n + j)] += cw;
                q[(row, (n + j) * m + wk)] += cw;
            }
        }
    }
    let mut c = RowDVector::zeros(m);
    c[0] = T::one();
    QbSystem::new(DMatrix::identity(m, m), a, Some(q), bil, b, c)
        .map(|s| s.with_provenance(format!("ladder lifted n={n}")))
}

/// Second-order Carleman bilinearization, state `[v; v ⊗ v]` of size `n² + n`.
///
/// `A1 = -g'(0) D^T D`; the Hessian is
/// `A2[i, j n + l] = -g''(0) Σ_k D[k,i] D[k,j] D[k,l]` with
/// `g'(0) = 1 + iS uP`, `g''(0) = iS uP²`.
pub fn ladder_carleman_bilinear<T: Real>(p: &LadderParams) -> Result<QbSystem<T>> {
    p.validate()?;
    let n = p.n;
    if n > LADDER_CARLEMAN_CAP {
        return Err(Error::DimensionCap {
            model: "ladder carleman",
            dim: n * n + n,
            cap: LADDER_CARLEMAN_CAP * LADDER_CARLEMAN_CAP + LADDER_CARLEMAN_CAP,
        });
    }
    let (is, up) = (lit::<T>(p.i_s), lit::<T>(p.u_p));
    let g1 = T::one() + is * up;
    let g2 = is * up * up;
    let d = difference::<T>(n);
    let a1 = -(d.transpose() * &d) * g1;
    let mut a2 = DMatrix::zeros(n, n * n);
    for k in 0..n {
        // Row k of D has support {k-1, k}.
        let support: Vec<usize> = (k.saturating_sub(1)..=k).collect();
        for &i in &support {
            for &j in &support {
                for &l in &support {
                    a2[(i, j * n + l)] -= g2 * d[(k, i)] * d[(k, j)] * d[(k, l)];
                }
            }
        }
    }
    let mut b = DVector::zeros(n);
    b[0] = T::one();
    let mut c = RowDVector::zeros(n);
    c[0] = T::one();
    carleman_bilinear(&a1, &a2, &b, &c).map(|s| s.with_provenance(format!("ladder carleman n={n}")))
}
