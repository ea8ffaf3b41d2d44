//! Loewner framework: partitioned frequency data, the Loewner pencil, SVD
//! truncation and the projected descriptor realization.
//!
//! ```text
//! L(i,j)  = (v_i - w_j) / (mu_i - lambda_j)
//! Ls(i,j) = (mu_i v_i - lambda_j w_j) / (mu_i - lambda_j)
//! E = -X* L Y,  A = -X* Ls Y,  B = X* V,  C = W Y
//! ```

use nalgebra::{DMatrix, DVector, RowDVector};
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Entry, Real};
use crate::system::{ComplexSample, LinearSystem, StateSpace};
use crate::transfer::eval_h1;

/// Default relative truncation threshold on `sigma_i / sigma_1`.
pub const DEFAULT_LOEWNER_TOL: f64 = 1e-12;

/// Relative tolerance used to match a sample with its conjugate partner.
const CONJ_RTOL: f64 = 1e-12;

/// How samples are split into left and right data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PartitionScheme {
    /// Sorted by `|Im s|`, conjugate groups assigned to right and left in turn.
    #[default]
    Alternating,
    /// Sorted by `|Im s|`, first half right, second half left.
    HalfSplit,
}

/// Right data `(lambda_j, w_j)` and left data `(mu_i, v_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolationData<T: Real> {
    pub right: Vec<ComplexSample<T>>,
    pub left: Vec<ComplexSample<T>>,
}

impl<T: Real> InterpolationData<T> {
    /// Checks equal counts and that no left frequency equals a right one.
    pub fn new(right: Vec<ComplexSample<T>>, left: Vec<ComplexSample<T>>) -> Result<Self> {
        if right.len() != left.len() {
            return Err(Error::UnbalancedPartition);
        }
        if right.is_empty() {
            return Err(Error::EmptyPencil);
        }
        for l in &left {
            if let Some(r) = right.iter().find(|r| r.s == l.s) {
                return Err(Error::CoincidentFrequency {
                    re: to_f64(r.s.re),
                    im: to_f64(r.s.im),
                });
            }
        }
        Ok(Self { right, left })
    }

    /// Number of samples per side.
    pub fn k(&self) -> usize {
        self.right.len()
    }

    /// True when both sides are closed under conjugation.
    pub fn is_conjugate_closed(&self) -> bool {
        conjugate_transform(&self.right).is_ok() && conjugate_transform(&self.left).is_ok()
    }
}

/// Splits samples into disjoint left/right sets of equal size.
///
/// Samples are ordered by `|Im s|` (then `Re s`); a sample and its conjugate
/// always land on the same side.
pub fn partition_samples<T: Real>(
    samples: &[ComplexSample<T>],
    scheme: PartitionScheme,
) -> Result<InterpolationData<T>> {
    let n = samples.len();
    if n % 2 == 1 {
        return Err(Error::OddCount(n));
    }
    if n < 4 {
        return Err(Error::MinimumCount(n));
    }
    for (i, a) in samples.iter().enumerate() {
        if samples[..i].iter().any(|b| b.s == a.s) {
            return Err(Error::DuplicateFrequency {
                re: to_f64(a.s.re),
                im: to_f64(a.s.im),
            });
        }
    }

    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| {
        let ka = (a.s.im.abs(), a.s.re, -a.s.im);
        let kb = (b.s.im.abs(), b.s.re, -b.s.im);
        ka.partial_cmp(&kb).unwrap_or(std::cmp::Ordering::Equal)
    });

    // Group each sample with its conjugate partner when present.
    let mut groups: Vec<Vec<ComplexSample<T>>> = Vec::new();
    let mut used = vec![false; n];
    for i in 0..n {
        if used[i] {
            continue;
        }
        used[i] = true;
        let mut g = vec![sorted[i]];
        if sorted[i].s.im != T::zero() {
            let partner = (i + 1..n).find(|&j| !used[j] && sorted[j].s == sorted[i].s.conj());
            if let Some(j) = partner {
                used[j] = true;
                g.push(sorted[j]);
            }
        }
        groups.push(g);
    }

    let half = n / 2;
    let (mut right, mut left) = (Vec::with_capacity(half), Vec::with_capacity(half));
    match scheme {
        PartitionScheme::Alternating => {
            for (k, g) in groups.into_iter().enumerate() {
                if k % 2 == 0 {
                    right.extend(g);
                } else {
                    left.extend(g);
                }
            }
        }
        PartitionScheme::HalfSplit => {
            for g in groups {
                if right.len() < half {
                    right.extend(g);
                } else {
                    left.extend(g);
                }
            }
        }
    }
    if right.len() != left.len() {
        return Err(Error::UnbalancedPartition);
    }
    InterpolationData::new(right, left)
}

/// The Loewner and shifted Loewner matrices together with the data vectors.
///
/// `N` is `Complex<T>` for the pencil built from data and `T` after
/// realification.
#[derive(Debug, Clone, PartialEq)]
pub struct LoewnerPencil<T: Real, N: Entry<T> = Complex<T>> {
    pub l: DMatrix<N>,
    pub ls: DMatrix<N>,
    pub v: DVector<N>,
    pub w: RowDVector<N>,
    _real: std::marker::PhantomData<T>,
}

impl<T: Real, N: Entry<T>> LoewnerPencil<T, N> {
    pub fn k(&self) -> usize {
        self.l.nrows()
    }

    /// The unprojected realization `(-L, -Ls, V, W)`.
    pub fn realization(&self) -> Result<LinearSystem<T, N>> {
        LinearSystem::new(-&self.l, -&self.ls, self.v.clone(), self.w.clone())
    }
}

/// Assembles `L`, `Ls`, `V`, `W`; row `i` belongs to `left[i]`, column `j` to `right[j]`.
pub fn build_pencil<T: Real>(data: &InterpolationData<T>) -> Result<LoewnerPencil<T>> {
    let k = data.k();
    if k == 0 || data.left.len() != k {
        return Err(Error::EmptyPencil);
    }
    let mut l = DMatrix::zeros(k, k);
    let mut ls = DMatrix::zeros(k, k);
    for (i, left) in data.left.iter().enumerate() {
        let (mu, v) = (left.s, left.value);
        for (j, right) in data.right.iter().enumerate() {
            let (lam, w) = (right.s, right.value);
            let d = mu - lam;
            if d == Complex::new(T::zero(), T::zero()) {
                return Err(Error::CoincidentFrequency {
                    re: to_f64(mu.re),
                    im: to_f64(mu.im),
                });
            }
            l[(i, j)] = (v - w) / d;
            ls[(i, j)] = (mu * v - lam * w) / d;
        }
    }
    Ok(LoewnerPencil {
        l,
        ls,
        v: DVector::from_iterator(k, data.left.iter().map(|x| x.value)),
        w: RowDVector::from_iterator(k, data.right.iter().map(|x| x.value)),
        _real: std::marker::PhantomData,
    })
}

/// Unitary `J` with one `(1/√2)[[1, -i], [1, i]]` block per conjugate pair and
/// `1` for real frequencies, so that `J* M J` is real for conjugate-symmetric data.
fn conjugate_transform<T: Real>(samples: &[ComplexSample<T>]) -> Result<DMatrix<Complex<T>>> {
    let k = samples.len();
    let scale = samples
        .iter()
        .fold(T::zero(), |m, x| m.max(x.value.norm_sqr().sqrt()).max(x.s.norm_sqr().sqrt()));
    let tol = lit::<T>(CONJ_RTOL) * scale;
    let close = |a: Complex<T>, b: Complex<T>| (a - b).norm_sqr().sqrt() <= tol;

    let mut j = DMatrix::zeros(k, k);
    let mut paired = vec![false; k];
    let h = T::one() / lit::<T>(2.0).sqrt();
    let zero = T::zero();
    for a in 0..k {
        if paired[a] {
            continue;
        }
        paired[a] = true;
        let x = samples[a];
        if x.s.im.abs() <= tol {
            if x.value.im.abs() > tol {
                return Err(Error::NotConjugateClosed(format!(
                    "real frequency {} carries a complex value",
                    to_f64(x.s.re)
                )));
            }
            j[(a, a)] = Complex::new(T::one(), zero);
            continue;
        }
        let b = (a + 1..k)
            .find(|&b| !paired[b] && close(samples[b].s, x.s.conj()))
            .ok_or_else(|| {
                Error::NotConjugateClosed(format!(
                    "no conjugate partner for s = {}{:+}i",
                    to_f64(x.s.re),
                    to_f64(x.s.im)
                ))
            })?;
        if !close(samples[b].value, x.value.conj()) {
            return Err(Error::NotConjugateClosed(format!(
                "H(conj s) != conj H(s) at s = {}{:+}i",
                to_f64(x.s.re),
                to_f64(x.s.im)
            )));
        }
        paired[b] = true;
        j[(a, a)] = Complex::new(h, zero);
        j[(a, b)] = Complex::new(zero, -h);
        j[(b, a)] = Complex::new(h, zero);
        j[(b, b)] = Complex::new(zero, h);
    }
    Ok(j)
}

/// Unitary congruence turning the pencil of conjugate-closed data into a real one.
pub fn realify_pencil<T: Real>(
    pencil: &LoewnerPencil<T>,
    data: &InterpolationData<T>,
) -> Result<LoewnerPencil<T, T>> {
    let jl = conjugate_transform(&data.left)?;
    let jr = conjugate_transform(&data.right)?;
    if jl.nrows() != pencil.k() || jr.nrows() != pencil.k() {
        return Err(crate::error::shape_err("pencil", data.k(), pencil.k()));
    }
    let jla = jl.adjoint();
    let re = |m: DMatrix<Complex<T>>| m.map(|z| z.re);
    Ok(LoewnerPencil {
        l: re(&jla * &pencil.l * &jr),
        ls: re(&jla * &pencil.ls * &jr),
        v: (&jla * &pencil.v).map(|z| z.re),
        w: (&pencil.w * &jr).map(|z| z.re),
        _real: std::marker::PhantomData,
    })
}

/// Real realization of a complex system of the data's full order `k`, using
/// the congruence `(J_left* E J_right, J_left* A J_right, J_left* B, C J_right)`.
///
/// Applies to the unprojected Loewner realization (rows indexed by left data,
/// columns by right data). An already-real system over real-frequency data is
/// returned unchanged.
pub fn realify<T: Real>(
    sys: &LinearSystem<T, Complex<T>>,
    data: &InterpolationData<T>,
) -> Result<LinearSystem<T>> {
    let k = data.k();
    if sys.order() != k {
        return Err(crate::error::shape_err("system order", k, sys.order()));
    }
    let jl = conjugate_transform(&data.left)?;
    let jr = conjugate_transform(&data.right)?;
    let jla = jl.adjoint();
    let re = |m: DMatrix<Complex<T>>| m.map(|z| z.re);
    LinearSystem::new(
        re(&jla * sys.e() * &jr),
        re(&jla * sys.a() * &jr),
        (&jla * sys.b()).map(|z| z.re),
        (sys.c() * &jr).map(|z| z.re),
    )
    .map(|s| s.with_provenance(sys.provenance().to_string()))
}

/// Result of [`svd_truncate`].
#[derive(Debug, Clone)]
pub struct Truncation<T: Real, N: Entry<T>> {
    pub r: usize,
    /// Leading `r` left singular vectors of `[L, Ls]`.
    pub xr: DMatrix<N>,
    /// Leading `r` right singular vectors of `[L; Ls]`.
    pub yr: DMatrix<N>,
    /// All singular values of `[L, Ls]`, non-increasing.
    pub sigma: Vec<T>,
}

/// Chooses the order `r` as the number of singular values of `[L, Ls]` with
/// `sigma_i / sigma_1 >= tol`, capped at `rmax`.
pub fn svd_truncate<T: Real, N: Entry<T>>(
    pencil: &LoewnerPencil<T, N>,
    tol: T,
    rmax: usize,
) -> Result<Truncation<T, N>> {
    let k = pencil.k();
    if k == 0 {
        return Err(Error::EmptyPencil);
    }
    let mut row = DMatrix::zeros(k, 2 * k);
    row.columns_mut(0, k).copy_from(&pencil.l);
    row.columns_mut(k, k).copy_from(&pencil.ls);
    let mut col = DMatrix::zeros(2 * k, k);
    col.rows_mut(0, k).copy_from(&pencil.l);
    col.rows_mut(k, k).copy_from(&pencil.ls);

    let left = row.svd(true, false);
    let right = col.svd(false, true);
    let sigma: Vec<T> = left.singular_values.iter().copied().collect();
    let s1 = sigma[0];
    let r = if s1 > T::zero() {
        sigma.iter().take_while(|&&s| s / s1 >= tol).count()
    } else {
        0
    };
    let r = r.min(rmax).min(k);
    let u = left.u.expect("requested");
    let vt = right.v_t.expect("requested");
    Ok(Truncation {
        r,
        xr: u.columns(0, r).into_owned(),
        yr: vt.rows(0, r).adjoint(),
        sigma,
    })
}

/// Projected realization `(-X* L Y, -X* Ls Y, X* V, W Y)`.
pub fn reduce<T: Real, N: Entry<T>>(
    pencil: &LoewnerPencil<T, N>,
    xr: &DMatrix<N>,
    yr: &DMatrix<N>,
) -> Result<LinearSystem<T, N>> {
    let k = pencil.k();
    if xr.ncols() != yr.ncols() || xr.nrows() != k || yr.nrows() != k {
        return Err(crate::error::shape_err(
            "projection",
            format!("{k}x{}", xr.ncols()),
            format!("{}x{}", yr.nrows(), yr.ncols()),
        ));
    }
    if xr.ncols() == 0 {
        return Err(Error::EmptyPencil);
    }
    let xa = xr.adjoint();
    LinearSystem::new(
        -(&xa * &pencil.l * yr),
        -(&xa * &pencil.ls * yr),
        &xa * &pencil.v,
        &pencil.w * yr,
    )
}

/// `m` log-spaced angular frequencies on `[w_lo, w_hi]`, each followed by its
/// conjugate: `i w_1, -i w_1, i w_2, ...`.
pub fn imag_axis_points<T: Real>(w_lo: T, w_hi: T, m: usize) -> Vec<Complex<T>> {
    logspace(w_lo, w_hi, m)
        .into_iter()
        .flat_map(|w| [Complex::new(T::zero(), w), Complex::new(T::zero(), -w)])
        .collect()
}

/// `m` log-spaced values on `[lo, hi]` (endpoints included).
pub fn logspace<T: Real>(lo: T, hi: T, m: usize) -> Vec<T> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..m)
        .map(|i| {
            if m == 1 {
                lo
            } else {
                let t = lit::<T>(i as f64) / lit::<T>((m - 1) as f64);
                (a + (b - a) * t).exp()
            }
        })
        .collect()
}

/// Evaluates `H1` of `sys` at each point.
pub fn sample_h1<T: Real, S: StateSpace<T>>(sys: &S, points: &[Complex<T>]) -> Result<Vec<ComplexSample<T>>> {
    points
        .iter()
        .enumerate()
        .map(|(i, &s)| eval_h1(sys, s).map(|h| ComplexSample::new(s, h)).map_err(|e| e.at_pair(i)))
        .collect()
}

/// A fitted real linear model together with the truncation diagnostics.
#[derive(Debug, Clone)]
pub struct LinearFit<T: Real> {
    pub system: LinearSystem<T>,
    pub r: usize,
    pub sigma: Vec<T>,
}

/// Partition, build, realify, truncate and reduce in one call.
///
/// Data must be closed under conjugation so the result is real.
pub fn fit_linear<T: Real>(
    samples: &[ComplexSample<T>],
    scheme: PartitionScheme,
    tol: T,
    rmax: Option<usize>,
) -> Result<LinearFit<T>> {
    let data = partition_samples(samples, scheme)?;
    let pencil = realify_pencil(&build_pencil(&data)?, &data)?;
    let tr = svd_truncate(&pencil, tol, rmax.unwrap_or(data.k()))?;
    let system = reduce(&pencil, &tr.xr, &tr.yr)?.with_provenance(format!("loewner r={}", tr.r));
    Ok(LinearFit {
        system,
        r: tr.r,
        sigma: tr.sigma,
    })
}
