//! Linear descriptor systems and single-input single-output quadratic-bilinear systems.
//!
//! Both keep their matrices private so the shape and nonsingularity invariants
//! established at construction cannot be broken afterwards.

use nalgebra::{ComplexField, DMatrix, DVector, RowDVector, LU};
use num_complex::Complex;

use crate::error::{shape_err, Error, Result};
use crate::quadratic;
use crate::scalar::{lit, to_f64, Entry, Real};

/// Relative threshold on `sigma_min(E) / sigma_max(E)` below which `E` is rejected.
pub const E_SINGULAR_RTOL: f64 = 1e-12;

/// A frequency sample `(s, H(s))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexSample<T: Real> {
    pub s: Complex<T>,
    pub value: Complex<T>,
}

impl<T: Real> ComplexSample<T> {
    pub fn new(s: Complex<T>, value: Complex<T>) -> Self {
        Self { s, value }
    }

    pub fn is_finite(&self) -> bool {
        let f = |z: Complex<T>| to_f64(z.re).is_finite() && to_f64(z.im).is_finite();
        f(self.s) && f(self.value)
    }

    pub fn conj(&self) -> Self {
        Self::new(self.s.conj(), self.value.conj())
    }
}

/// Read access shared by every realization `(E, A, B, C)`.
pub trait StateSpace<T: Real> {
    type Entry: Entry<T>;

    fn order(&self) -> usize;
    fn e(&self) -> &DMatrix<Self::Entry>;
    fn a(&self) -> &DMatrix<Self::Entry>;
    fn b(&self) -> &DVector<Self::Entry>;
    fn c(&self) -> &RowDVector<Self::Entry>;
    /// True when `E` is exactly the identity, which lets solvers skip it.
    fn e_is_identity(&self) -> bool;
}

/// Descriptor linear system `E x' = A x + B u`, `y = C x`.
///
/// `N` is the entry type: `T` for real realizations, `Complex<T>` for the
/// intermediate Loewner realizations.
#[derive(Debug, Clone)]
pub struct LinearSystem<T: Real, N: Entry<T> = T> {
    e: DMatrix<N>,
    a: DMatrix<N>,
    b: DVector<N>,
    c: RowDVector<N>,
    e_identity: bool,
    provenance: String,
    _real: std::marker::PhantomData<T>,
}

impl<T: Real, N: Entry<T>> LinearSystem<T, N> {
    pub fn new(e: DMatrix<N>, a: DMatrix<N>, b: DVector<N>, c: RowDVector<N>) -> Result<Self> {
        let n = a.nrows();
        if n == 0 {
            return Err(shape_err("A", "n >= 1", "0x0"));
        }
        check_square("A", &a, n)?;
        check_square("E", &e, n)?;
        if b.len() != n {
            return Err(shape_err("B", format!("{n}x1"), format!("{}x1", b.len())));
        }
        if c.len() != n {
            return Err(shape_err("C", format!("1x{n}"), format!("1x{}", c.len())));
        }
        let e_identity = is_identity(&e);
        if !e_identity {
            check_nonsingular(&e)?;
        }
        Ok(Self {
            e,
            a,
            b,
            c,
            e_identity,
            provenance: String::new(),
            _real: std::marker::PhantomData,
        })
    }

    /// Standard state-space system with `E = I`.
    pub fn standard(a: DMatrix<N>, b: DVector<N>, c: RowDVector<N>) -> Result<Self> {
        let n = a.nrows();
        Self::new(DMatrix::identity(n, n), a, b, c)
    }

    pub fn with_provenance(mut self, provenance: impl Into<String>) -> Self {
        self.provenance = provenance.into();
        self
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    /// Equivalent realization with `E = I` (`A <- E^{-1} A`, `B <- E^{-1} B`).
    pub fn to_standard(&self) -> Result<Self> {
        if self.e_identity {
            return Ok(self.clone());
        }
        let lu = self.e.clone().lu();
        let a = lu.solve(&self.a).ok_or(Error::SingularE { ratio: 0.0 })?;
        let b = lu.solve(&self.b).ok_or(Error::SingularE { ratio: 0.0 })?;
        Ok(Self::standard(a, b, self.c.clone())?.with_provenance(self.provenance.clone()))
    }
}

impl<T: Real> LinearSystem<T, Complex<T>> {
    /// Drops the imaginary parts when every entry is real up to `rtol` relative
    /// to the largest entry modulus; `None` otherwise.
    pub fn to_real(&self, rtol: T) -> Option<LinearSystem<T>> {
        let entries = || {
            self.e
                .iter()
                .chain(self.a.iter())
                .chain(self.b.iter())
                .chain(self.c.iter())
        };
        let scale = entries().fold(T::zero(), |m, z| m.max(z.modulus()));
        let imag = entries().fold(T::zero(), |m, z| m.max(z.im.abs()));
        if imag > rtol * scale {
            return None;
        }
        LinearSystem::new(
            self.e.map(|z| z.re),
            self.a.map(|z| z.re),
            self.b.map(|z| z.re),
            self.c.map(|z| z.re),
        )
        .ok()
        .map(|s| s.with_provenance(self.provenance.clone()))
    }
}

impl<T: Real> LinearSystem<T> {
    /// Embeds a real system into the complex entry type.
    pub fn to_complex(&self) -> LinearSystem<T, Complex<T>> {
        LinearSystem {
            e: self.e.map(|x| x.to_complex()),
            a: self.a.map(|x| x.to_complex()),
            b: self.b.map(|x| x.to_complex()),
            c: self.c.map(|x| x.to_complex()),
            e_identity: self.e_identity,
            provenance: self.provenance.clone(),
            _real: std::marker::PhantomData,
        }
    }
}

impl<T: Real, N: Entry<T>> StateSpace<T> for LinearSystem<T, N> {
    type Entry = N;
    fn order(&self) -> usize {
        self.a.nrows()
    }
    fn e(&self) -> &DMatrix<N> {
        &self.e
    }
    fn a(&self) -> &DMatrix<N> {
        &self.a
    }
    fn b(&self) -> &DVector<N> {
        &self.b
    }
    fn c(&self) -> &RowDVector<N> {
        &self.c
    }
    fn e_is_identity(&self) -> bool {
        self.e_identity
    }
}

/// Quadratic-bilinear system
/// `E x' = A x + Q (x ⊗ x) + N x u + B u`, `y = C x`, `x(0) = 0`.
///
/// `Q` is stored dense and row-major in the Kronecker index: column
/// `j1 * n + j2` multiplies `x[j1] * x[j2]`. A missing `Q` means the system is
/// purely bilinear, which keeps Carleman models of dimension `n² + n` from
/// allocating an `(n²+n) x (n²+n)²` zero block.
#[derive(Debug, Clone)]
pub struct QbSystem<T: Real> {
    e: DMatrix<T>,
    a: DMatrix<T>,
    q: Option<DMatrix<T>>,
    bilinear: DMatrix<T>,
    b: DVector<T>,
    c: RowDVector<T>,
    e_identity: bool,
    e_lu: Option<LU<T, nalgebra::Dyn, nalgebra::Dyn>>,
    /// Nonzero entries `(i, j1, j2, Q[i, j1 n + j2])` for time stepping.
    q_terms: Vec<(usize, usize, usize, T)>,
    symmetric: bool,
    provenance: String,
}

impl<T: Real> QbSystem<T> {
    pub fn new(
        e: DMatrix<T>,
        a: DMatrix<T>,
        q: Option<DMatrix<T>>,
        bilinear: DMatrix<T>,
        b: DVector<T>,
        c: RowDVector<T>,
    ) -> Result<Self> {
        let lin = LinearSystem::new(e, a, b, c)?;
        let n = lin.order();
        check_square("N", &bilinear, n)?;
        if let Some(q) = &q {
            if q.nrows() != n || q.ncols() != n * n {
                return Err(shape_err(
                    "Q",
                    format!("{n}x{}", n * n),
                    format!("{}x{}", q.nrows(), q.ncols()),
                ));
            }
        }
        let symmetric = q.as_ref().is_none_or(quadratic::is_symmetric);
        let e_lu = (!lin.e_identity).then(|| lin.e.clone().lu());
        let q_terms = q.as_ref().map_or_else(Vec::new, nonzero_terms);
        Ok(Self {
            e: lin.e,
            a: lin.a,
            q_terms,
            q,
            bilinear,
            b: lin.b,
            c: lin.c,
            e_identity: lin.e_identity,
            e_lu,
            symmetric,
            provenance: lin.provenance,
        })
    }

    /// QB system whose nonlinear operators vanish.
    pub fn from_linear(lin: &LinearSystem<T>) -> Self {
        let n = lin.order();
        Self {
            e: lin.e.clone(),
            a: lin.a.clone(),
            q: None,
            bilinear: DMatrix::zeros(n, n),
            b: lin.b.clone(),
            c: lin.c.clone(),
            e_identity: lin.e_identity,
            e_lu: (!lin.e_identity).then(|| lin.e.clone().lu()),
            q_terms: Vec::new(),
            symmetric: true,
            provenance: lin.provenance.clone(),
        }
    }

    pub fn with_provenance(mut self, provenance: impl Into<String>) -> Self {
        self.provenance = provenance.into();
        self
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    /// The quadratic operator, `None` when it is identically zero.
    pub fn q(&self) -> Option<&DMatrix<T>> {
        self.q.as_ref()
    }

    /// The bilinear operator `N`.
    pub fn bilinear(&self) -> &DMatrix<T> {
        &self.bilinear
    }

    /// Whether `Q(v ⊗ w) = Q(w ⊗ v)` holds entrywise.
    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// Same system with `Q` replaced by its symmetrization.
    pub fn symmetrized(&self) -> Self {
        let mut out = self.clone();
        if let Some(q) = &self.q {
            let q = quadratic::symmetrize_q(q);
            out.q_terms = nonzero_terms(&q);
            out.q = Some(q);
        }
        out.symmetric = true;
        out
    }

    pub fn linear_part(&self) -> LinearSystem<T> {
        LinearSystem {
            e: self.e.clone(),
            a: self.a.clone(),
            b: self.b.clone(),
            c: self.c.clone(),
            e_identity: self.e_identity,
            provenance: self.provenance.clone(),
            _real: std::marker::PhantomData,
        }
    }

    /// Solves `E x = rhs` in place using the factorization computed at construction.
    pub(crate) fn solve_e_in_place(&self, rhs: &mut DVector<T>) {
        if let Some(lu) = &self.e_lu {
            lu.solve_mut(rhs);
        }
    }

    pub(crate) fn q_terms(&self) -> &[(usize, usize, usize, T)] {
        &self.q_terms
    }
}

fn nonzero_terms<T: Real>(q: &DMatrix<T>) -> Vec<(usize, usize, usize, T)> {
    let n = q.nrows();
    let mut out = Vec::new();
    for (col, column) in q.column_iter().enumerate() {
        for (i, &v) in column.iter().enumerate() {
            if v != T::zero() {
                out.push((i, col / n, col % n, v));
            }
        }
    }
    out
}

impl<T: Real> StateSpace<T> for QbSystem<T> {
    type Entry = T;
    fn order(&self) -> usize {
        self.a.nrows()
    }
    fn e(&self) -> &DMatrix<T> {
        &self.e
    }
    fn a(&self) -> &DMatrix<T> {
        &self.a
    }
    fn b(&self) -> &DVector<T> {
        &self.b
    }
    fn c(&self) -> &RowDVector<T> {
        &self.c
    }
    fn e_is_identity(&self) -> bool {
        self.e_identity
    }
}

fn check_square<T: Real, N: Entry<T>>(what: &'static str, m: &DMatrix<N>, n: usize) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(shape_err(
            what,
            format!("{n}x{n}"),
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    Ok(())
}

fn is_identity<T: Real, N: Entry<T>>(m: &DMatrix<N>) -> bool {
    m.is_square()
        && m.iter().enumerate().all(|(k, x)| {
            let (i, j) = (k % m.nrows(), k / m.nrows());
            if i == j {
                *x == N::one()
            } else {
                *x == N::zero()
            }
        })
}

/// Rejects `E` when `sigma_min / sigma_max < E_SINGULAR_RTOL`.
pub(crate) fn check_nonsingular<T: Real, N: Entry<T>>(e: &DMatrix<N>) -> Result<()> {
    let sv = e.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if max == T::zero() || min < lit::<T>(E_SINGULAR_RTOL) * max {
        let ratio = if max == T::zero() { 0.0 } else { to_f64(min / max) };
        return Err(Error::SingularE { ratio });
    }
    Ok(())
}
