//! Reference nonlinear circuits and their polynomial reformulations.

mod ladder;
mod toy;

use nalgebra::{DMatrix, DVector, RowDVector};

use crate::scalar::{lit, Real};
use crate::system::QbSystem;
use crate::Result;

pub use ladder::{ladder_carleman_bilinear, ladder_lifted_qb, ladder_nonlinear, LadderParams, LADDER_CARLEMAN_CAP};
pub use toy::{
    toy_carleman_bilinear, toy_h1_closed_form, toy_h2_diag_closed_form, toy_lifted_qb, toy_linearized,
    toy_nonlinear, DiodeToyParams,
};

/// Largest exponent argument passed to `exp` by the model right-hand sides.
pub const EXP_CLAMP: f64 = 700.0;

type RhsFn<T> = dyn Fn(&DVector<T>, T, &mut DVector<T>) -> bool + Send + Sync;
type OutputFn<T> = dyn Fn(&DVector<T>) -> T + Send + Sync;

/// `x' = f(x, u)`, `y = h(x)` with `f(0, 0) = 0`.
pub struct NonlinearModel<T: Real> {
    n: usize,
    rhs: Box<RhsFn<T>>,
    output: Box<OutputFn<T>>,
    name: String,
}

impl<T: Real> NonlinearModel<T> {
    /// `rhs(x, u, out)` writes `f(x, u)` into `out` and returns `true` when an
    /// exponent had to be clamped.
    pub fn new(
        n: usize,
        name: impl Into<String>,
        rhs: impl Fn(&DVector<T>, T, &mut DVector<T>) -> bool + Send + Sync + 'static,
        output: impl Fn(&DVector<T>) -> T + Send + Sync + 'static,
    ) -> Self {
        Self {
            n,
            rhs: Box::new(rhs),
            output: Box::new(output),
            name: name.into(),
        }
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Writes `f(x, u)` into `out`; returns `true` if the overflow clamp was hit.
    pub fn rhs_into(&self, x: &DVector<T>, u: T, out: &mut DVector<T>) -> bool {
        (self.rhs)(x, u, out)
    }

    pub fn rhs(&self, x: &DVector<T>, u: T) -> DVector<T> {
        let mut out = DVector::zeros(self.n);
        self.rhs_into(x, u, &mut out);
        out
    }

    pub fn output(&self, x: &DVector<T>) -> T {
        (self.output)(x)
    }
}

impl<T: Real> std::fmt::Debug for NonlinearModel<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NonlinearModel").field("n", &self.n).field("name", &self.name).finish()
    }
}

/// `exp(arg) - 1` with `arg` clamped at [`EXP_CLAMP`]; the flag reports clamping.
pub(crate) fn expm1_guarded<T: Real>(arg: T) -> (T, bool) {
    let cap = lit::<T>(EXP_CLAMP);
    if arg > cap {
        (cap.exp_m1(), true)
    } else {
        (arg.exp_m1(), false)
    }
}

/// Second-order Carleman bilinearization of `x' = A1 x + ½ A2 (x ⊗ x) + b u`, `y = c x`.
///
/// `a2` is the `n x n²` Hessian (`A2[i, j n + l] = ∂²f_i / ∂x_j ∂x_l`). The
/// state is `[x; x ⊗ x]`; cubic and higher terms are dropped, so the result
/// is purely bilinear:
///
/// ```text
/// A = [[A1, ½A2], [0, A1⊗I + I⊗A1]],  N = [[0, 0], [b⊗I + I⊗b, 0]]
/// ```
pub fn carleman_bilinear<T: Real>(
    a1: &DMatrix<T>,
    a2: &DMatrix<T>,
    b: &DVector<T>,
    c: &RowDVector<T>,
) -> Result<QbSystem<T>> {
    let n = a1.nrows();
    let m = n + n * n;
    let half = lit::<T>(0.5);
    let mut a = DMatrix::zeros(m, m);
    a.view_mut((0, 0), (n, n)).copy_from(a1);
    a.view_mut((0, n), (n, n * n)).copy_from(&(a2 * half));
    // (A1 ⊗ I + I ⊗ A1)[(i k), (j l)] = A1[i, j] δ_kl + δ_ij A1[k, l]
    for i in 0..n {
        for k in 0..n {
            let row = n + i * n + k;
            for j in 0..n {
                a[(row, n + j * n + k)] += a1[(i, j)];
                a[(row, n + i * n + j)] += a1[(k, j)];
            }
        }
    }
    // (b ⊗ I + I ⊗ b)[(i k), j] = b_i δ_kj + δ_ij b_k
    let mut bil = DMatrix::zeros(m, m);
    for i in 0..n {
        for k in 0..n {
            let row = n + i * n + k;
            bil[(row, k)] += b[i];
            bil[(row, i)] += b[k];
        }
    }
    let mut bb = DVector::zeros(m);
    bb.rows_mut(0, n).copy_from(b);
    let mut cc = RowDVector::zeros(m);
    cc.columns_mut(0, n).copy_from(c);
    QbSystem::new(DMatrix::identity(m, m), a, None, bil, bb, cc)
}
