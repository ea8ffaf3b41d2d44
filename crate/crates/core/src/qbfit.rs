//! Least-squares inference of the quadratic and bilinear operators from
//! samples of the second kernel, given a fitted linear realization.
//!
//! For a pair `(z1, z2)` the kernel of a QB system with linear part
//! `(E, A, B, C)` is linear in the unknowns:
//!
//! ```text
//! O  = C Φ(z1+z2),  Rq = Φ(z1)B ⊗ Φ(z2)B,  Rb = Φ(z1)B + Φ(z2)B
//! H2 = (O ⊗ Rq^T) vec(Q) + (O ⊗ Rb^T) vec(N)/2
//! ```
//!
//! with `vec` stacking rows. Stacking one row per pair gives `T z = v`.

use nalgebra::{DMatrix, DVector, RowDVector};
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loewner::logspace;
use crate::quadratic::symmetrize_q;
use crate::scalar::{lit, to_f64, Real};
use crate::system::{LinearSystem, QbSystem, StateSpace};
use crate::transfer::{eval_h2_from_inputs, resolvent_input, resolvent_output};
use crate::tsvd::tsvd_solve;

/// Default relative tSVD truncation threshold.
pub const DEFAULT_TSVD_TOL: f64 = 1e-10;

/// Frequency pairs `(z1, z2)` at which the second kernel is sampled.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleGrid<T: Real> {
    pub pairs: Vec<(Complex<T>, Complex<T>)>,
}

impl<T: Real> SampleGrid<T> {
    pub fn new(pairs: Vec<(Complex<T>, Complex<T>)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::EmptyGrid);
        }
        Ok(Self { pairs })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Imaginary-axis tensor grid over `[w_lo, w_hi]` rad/s.
    ///
    /// The first axis has `m1` log-spaced points including both ends, the
    /// second `m2` points at the geometric midpoints of an `(m2+1)`-point
    /// log grid, so the axes interleave. Every pair `(i w1, ±i w2)` is taken
    /// together with its conjugate, giving up to `4 m1 m2` pairs; pairs with
    /// `z1 + z2 = 0` (where `Φ(z1+z2)` is evaluated at the origin) are dropped.
    pub fn staggered(w_lo: T, w_hi: T, m1: usize, m2: usize) -> Result<Self> {
        if m1 == 0 || m2 == 0 {
            return Err(Error::EmptyGrid);
        }
        if !(w_lo > T::zero()) || !(w_hi >= w_lo) {
            return Err(Error::InvalidParameter(format!(
                "frequency range [{}, {}] must be positive and increasing",
                to_f64(w_lo),
                to_f64(w_hi)
            )));
        }
        let first = logspace(w_lo, w_hi, m1);
        let edges = logspace(w_lo, w_hi, m2 + 1);
        let second: Vec<T> = edges.windows(2).map(|e| (e[0] * e[1]).sqrt()).collect();
        let i = |w: T| Complex::new(T::zero(), w);
        let gap = lit::<T>(1e-12);
        let mut pairs = Vec::with_capacity(4 * m1 * m2);
        for &w1 in &first {
            for &w2 in &second {
                for (a, b) in [(i(w1), i(w2)), (i(w1), i(-w2))] {
                    if (a + b).im.abs() <= gap * w1.max(w2) {
                        continue;
                    }
                    pairs.push((a, b));
                    pairs.push((a.conj(), b.conj()));
                }
            }
        }
        Self::new(pairs)
    }
}

/// Second-kernel samples `v_i = H2(z1_i, z2_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSamples<T: Real> {
    pub grid: SampleGrid<T>,
    pub v: Vec<Complex<T>>,
}

impl<T: Real> KernelSamples<T> {
    pub fn new(grid: SampleGrid<T>, v: Vec<Complex<T>>) -> Result<Self> {
        if grid.len() != v.len() {
            return Err(Error::SampleCountMismatch {
                samples: v.len(),
                grid: grid.len(),
            });
        }
        Ok(Self { grid, v })
    }
}

/// Caches `Φ(z)B` per distinct frequency.
struct InputCache<T: Real> {
    keys: Vec<Complex<T>>,
    values: Vec<DVector<Complex<T>>>,
}

impl<T: Real> InputCache<T> {
    fn new() -> Self {
        Self {
            keys: Vec::new(),
            values: Vec::new(),
        }
    }

    fn get<S: StateSpace<T>>(&mut self, sys: &S, s: Complex<T>) -> Result<&DVector<Complex<T>>> {
        let idx = match self.keys.iter().position(|&k| k == s) {
            Some(i) => i,
            None => {
                self.values.push(resolvent_input(sys, s)?);
                self.keys.push(s);
                self.keys.len() - 1
            }
        };
        Ok(&self.values[idx])
    }
}

/// Evaluates `H2` of a QB system on every grid pair, reusing the per-frequency solves.
pub fn sample_h2<T: Real>(sys: &QbSystem<T>, grid: &SampleGrid<T>) -> Result<KernelSamples<T>> {
    let mut cache = InputCache::new();
    let mut v = Vec::with_capacity(grid.len());
    for (i, &(z1, z2)) in grid.pairs.iter().enumerate() {
        let h = (|| {
            let p1 = cache.get(sys, z1)?.clone();
            let p2 = cache.get(sys, z2)?;
            eval_h2_from_inputs(sys, z1 + z2, &p1, p2)
        })()
        .map_err(|e| e.at_pair(i))?;
        v.push(h);
    }
    KernelSamples::new(grid.clone(), v)
}

/// Regressors of one sample pair.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressorRow<T: Real> {
    /// `C Φ(z1+z2)`, `1 x r`.
    pub o: RowDVector<Complex<T>>,
    /// `Φ(z1)B ⊗ Φ(z2)B`, `r² x 1`.
    pub rq: DVector<Complex<T>>,
    /// `Φ(z1)B + Φ(z2)B`, `r x 1`.
    pub rb: DVector<Complex<T>>,
}

impl<T: Real> RegressorRow<T> {
    fn from_inputs(o: RowDVector<Complex<T>>, p1: &DVector<Complex<T>>, p2: &DVector<Complex<T>>) -> Self {
        Self {
            o,
            rq: crate::quadratic::kron_vec(p1, p2),
            rb: p1 + p2,
        }
    }

    /// The row `[O ⊗ Rq^T, O ⊗ Rb^T]` of `T`.
    pub fn t_row(&self) -> RowDVector<Complex<T>> {
        let r = self.o.len();
        let (r2, r3) = (r * r, r * r * r);
        let mut row = RowDVector::zeros(r3 + r2);
        for a in 0..r {
            let oa = self.o[a];
            for b in 0..r2 {
                row[a * r2 + b] = oa * self.rq[b];
            }
            for b in 0..r {
                row[r3 + a * r + b] = oa * self.rb[b];
            }
        }
        row
    }
}

/// Computes `O`, `Rq`, `Rb` for a pair using only `(E, A, B, C)`.
pub fn build_regressors<T: Real>(
    lin: &LinearSystem<T>,
    pair: (Complex<T>, Complex<T>),
) -> Result<RegressorRow<T>> {
    let (z1, z2) = pair;
    let p1 = resolvent_input(lin, z1)?;
    let p2 = if z2 == z1 { p1.clone() } else { resolvent_input(lin, z2)? };
    let o = resolvent_output(lin, z1 + z2)?;
    Ok(RegressorRow::from_inputs(o, &p1, &p2))
}

/// Assembles the `K x (r³ + r²)` regressor matrix, one row per grid pair.
pub fn assemble_t<T: Real>(lin: &LinearSystem<T>, grid: &SampleGrid<T>) -> Result<DMatrix<Complex<T>>> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let r = lin.order();
    let mut t = DMatrix::zeros(grid.len(), r * r * r + r * r);
    let mut inputs = InputCache::new();
    let mut outputs: Vec<(Complex<T>, RowDVector<Complex<T>>)> = Vec::new();
    for (i, &(z1, z2)) in grid.pairs.iter().enumerate() {
        let row = (|| {
            let sum = z1 + z2;
            let o = match outputs.iter().find(|(k, _)| *k == sum) {
                Some((_, o)) => o.clone(),
                None => {
                    let o = resolvent_output(lin, sum)?;
                    outputs.push((sum, o.clone()));
                    o
                }
            };
            let p1 = inputs.get(lin, z1)?.clone();
            let p2 = inputs.get(lin, z2)?;
            Ok::<_, Error>(RegressorRow::from_inputs(o, &p1, p2).t_row())
        })()
        .map_err(|e| e.at_pair(i))?;
        t.row_mut(i).copy_from(&row);
    }
    Ok(t)
}

/// Stacks the rows of `x` into one vector.
pub fn vec_rowmajor<T: Real>(x: &DMatrix<T>) -> DVector<T> {
    DVector::from_iterator(x.len(), x.transpose().iter().copied())
}

/// Inverse of [`vec_rowmajor`].
pub fn unvec<T: Real>(z: &[T], rows: usize, cols: usize) -> DMatrix<T> {
    assert_eq!(z.len(), rows * cols, "length must be rows * cols");
    DMatrix::from_row_slice(rows, cols, z)
}

/// Solver report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Number of singular values retained.
    pub rank: usize,
    /// `||T z - v|| / ||v||` (0 for zero data).
    pub residual_rel: f64,
    /// Singular values of the real-stacked system, non-increasing.
    pub sigma: Vec<f64>,
    #[serde(rename = "K")]
    pub k: usize,
    pub r: usize,
    /// `K < r³ + r²`: the system cannot have full column rank.
    #[serde(default)]
    pub insufficient_data: bool,
    /// All kernel samples were zero; operators set to zero without solving.
    #[serde(default)]
    pub zero_data: bool,
}

/// Fitted operators.
#[derive(Debug, Clone)]
pub struct Operators<T: Real> {
    /// `r x r²`, symmetrized.
    pub q: DMatrix<T>,
    pub n: DMatrix<T>,
    pub diagnostics: Diagnostics,
}

/// Solves `[Re T; Im T] z = [Re v; Im v]` for real `z = [vec(Q); vec(N)/2]`
/// by truncated SVD and unpacks it.
pub fn solve_operators<T: Real>(t: &DMatrix<Complex<T>>, v: &[Complex<T>], tol: T) -> Result<Operators<T>> {
    let (k, cols) = t.shape();
    if v.len() != k {
        return Err(Error::SampleCountMismatch {
            samples: v.len(),
            grid: k,
        });
    }
    let r = (1..=cols).find(|&r| r * r * r + r * r >= cols).unwrap_or(0);
    if r * r * r + r * r != cols {
        return Err(crate::error::shape_err("T columns", "r^3 + r^2", cols));
    }
    let insufficient_data = k < cols;
    let vnorm = v.iter().fold(T::zero(), |m, z| m + z.norm_sqr()).sqrt();
    if vnorm == T::zero() {
        return Ok(Operators {
            q: DMatrix::zeros(r, r * r),
            n: DMatrix::zeros(r, r),
            diagnostics: Diagnostics {
                rank: 0,
                residual_rel: 0.0,
                sigma: Vec::new(),
                k,
                r,
                insufficient_data,
                zero_data: true,
            },
        });
    }

    let mut stacked = DMatrix::zeros(2 * k, cols);
    stacked.rows_mut(0, k).copy_from(&t.map(|z| z.re));
    stacked.rows_mut(k, k).copy_from(&t.map(|z| z.im));
    let rhs = DVector::from_iterator(2 * k, v.iter().map(|z| z.re).chain(v.iter().map(|z| z.im)));
    let sol = tsvd_solve(&stacked, &rhs, tol);

    let fit = &stacked * &sol.z - &rhs;
    let residual_rel = to_f64(fit.norm() / vnorm);
    let (r2, r3) = (r * r, r * r * r);
    let q = symmetrize_q(&unvec(&sol.z.as_slice()[..r3], r, r2));
    let n = unvec(&sol.z.as_slice()[r3..], r, r) * lit::<T>(2.0);
    Ok(Operators {
        q,
        n,
        diagnostics: Diagnostics {
            rank: sol.rank,
            residual_rel,
            sigma: sol.sigma.iter().map(|&s| to_f64(s)).collect(),
            k,
            r,
            insufficient_data,
            zero_data: false,
        },
    })
}

/// Options of [`fit_qb`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions<T: Real> {
    pub tsvd_tol: T,
}

impl<T: Real> Default for FitOptions<T> {
    fn default() -> Self {
        Self {
            tsvd_tol: lit(DEFAULT_TSVD_TOL),
        }
    }
}

/// Fitted QB model and solver report.
#[derive(Debug, Clone)]
pub struct QbFit<T: Real> {
    pub system: QbSystem<T>,
    pub diagnostics: Diagnostics,
}

/// Completes a real linear model with quadratic and bilinear operators fitted
/// to second-kernel samples.
///
/// The linear part is first brought to `E = I`; the returned system is in
/// those coordinates. The minimum-norm operators depend on the state
/// coordinates, and ill-conditioned descriptor coordinates give operators
/// that match the kernel but are poorly behaved in time.
pub fn fit_qb<T: Real>(lin: &LinearSystem<T>, samples: &KernelSamples<T>, options: &FitOptions<T>) -> Result<QbFit<T>> {
    let std = lin.to_standard()?;
    let t = assemble_t(&std, &samples.grid)?;
    let ops = solve_operators(&t, &samples.v, options.tsvd_tol)?;
    let r = std.order();
    let system = QbSystem::new(
        DMatrix::identity(r, r),
        std.a().clone(),
        Some(ops.q),
        ops.n,
        std.b().clone(),
        std.c().clone(),
    )?
    .with_provenance(format!("qbfit r={r} K={}", samples.v.len()));
    Ok(QbFit {
        system,
        diagnostics: ops.diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transfer::eval_h2;
    use nalgebra::{dmatrix, dvector};
    use num_complex::Complex64;
    use rand::{rngs::StdRng, Rng, SeedableRng};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn scalar_system() -> LinearSystem<f64> {
        LinearSystem::new(dmatrix![1.0], dmatrix![-1.0], dvector![1.0], RowDVector::from_row_slice(&[1.0])).unwrap()
    }

    fn random_stable(rng: &mut StdRng, r: usize) -> LinearSystem<f64> {
        let a = DMatrix::from_fn(r, r, |_, _| rng.random_range(-0.5..0.5)) - DMatrix::identity(r, r) * 2.0;
        let b = DVector::from_fn(r, |_, _| rng.random_range(-1.0..1.0));
        let cc = RowDVector::from_fn(r, |_, _| rng.random_range(-1.0..1.0));
        LinearSystem::standard(a, b, cc).unwrap()
    }

    fn random_pair(rng: &mut StdRng) -> (Complex64, Complex64) {
        (c(0.0, rng.random_range(-5.0..5.0)), c(0.0, rng.random_range(-5.0..5.0)))
    }

    #[test]
    fn scalar_regressors_at_origin() {
        let row = build_regressors(&scalar_system(), (c(0.0, 0.0), c(0.0, 0.0))).unwrap();
        assert_eq!(row.o[0], c(1.0, 0.0));
        assert_eq!(row.rq[0], c(1.0, 0.0));
        assert_eq!(row.rb[0], c(2.0, 0.0));
        let t = assemble_t(&scalar_system(), &SampleGrid::new(vec![(c(0.0, 0.0), c(0.0, 0.0))]).unwrap()).unwrap();
        assert_eq!(t.shape(), (1, 2));
        assert_eq!(t[(0, 0)], c(1.0, 0.0));
        assert_eq!(t[(0, 1)], c(2.0, 0.0));
    }

    #[test]
    fn equal_arguments_double_rb() {
        let mut rng = StdRng::seed_from_u64(1);
        let lin = random_stable(&mut rng, 3);
        let z = c(0.0, 1.3);
        let row = build_regressors(&lin, (z, z)).unwrap();
        let p = resolvent_input(&lin, z).unwrap();
        assert_eq!(row.rb, &p * c(2.0, 0.0));
    }

    #[test]
    fn regressors_match_dense_inverse() {
        let mut rng = StdRng::seed_from_u64(2);
        let lin = random_stable(&mut rng, 2);
        let (z1, z2) = random_pair(&mut rng);
        let inv = |s: Complex64| (DMatrix::<Complex64>::identity(2, 2) * s - lin.a().map(|x| c(x, 0.0))).try_inverse().unwrap();
        let bc = lin.b().map(|x| c(x, 0.0));
        let (p1, p2) = (inv(z1) * &bc, inv(z2) * &bc);
        let o = lin.c().map(|x| c(x, 0.0)) * inv(z1 + z2);
        let row = build_regressors(&lin, (z1, z2)).unwrap();
        assert!((row.o - o).norm() < 1e-13);
        assert!((row.rb - (&p1 + &p2)).norm() < 1e-13);
        let rq = DVector::from_fn(4, |k, _| p1[k / 2] * p2[k % 2]);
        assert!((row.rq - rq).norm() < 1e-13);
    }

    #[test]
    fn t_shape() {
        let mut rng = StdRng::seed_from_u64(4);
        let lin = random_stable(&mut rng, 2);
        let grid = SampleGrid::new((0..12).map(|_| random_pair(&mut rng)).collect()).unwrap();
        assert_eq!(assemble_t(&lin, &grid).unwrap().shape(), (12, 12));
    }

    #[test]
    fn row_identity() {
        let mut rng = StdRng::seed_from_u64(6);
        for r in 1..=4 {
            let lin = random_stable(&mut rng, r);
            let q = DMatrix::from_fn(r, r * r, |_, _| rng.random_range(-1.0..1.0));
            let n = DMatrix::from_fn(r, r, |_, _| rng.random_range(-1.0..1.0));
            let mut z = vec_rowmajor(&q).as_slice().to_vec();
            z.extend((vec_rowmajor(&n) * 0.5).iter());
            let z = DVector::from_vec(z).map(|x| c(x, 0.0));
            let row = build_regressors(&lin, random_pair(&mut rng)).unwrap();
            let lhs = (row.t_row() * z)[0];
            let qc = q.map(|x| c(x, 0.0));
            let nc = n.map(|x| c(x, 0.0));
            let rhs = (&row.o * qc * &row.rq)[0] + (&row.o * nc * &row.rb)[0] * 0.5;
            assert!((lhs - rhs).norm() <= 1e-12 * rhs.norm());
        }
    }

    #[test]
    fn vec_examples() {
        let x = dmatrix![1.0, 2.0; 3.0, 4.0];
        assert_eq!(vec_rowmajor(&x).as_slice(), &[1.0, 2.0, 3.0, 4.0]);
        let row = DMatrix::from_row_slice(1, 3, &[5.0, 6.0, 7.0]);
        assert_eq!(vec_rowmajor(&row).as_slice(), &[5.0, 6.0, 7.0]);
        let mut rng = StdRng::seed_from_u64(7);
        let m = DMatrix::from_fn(3, 9, |_, _| rng.random_range(-1.0..1.0));
        assert_eq!(unvec(vec_rowmajor(&m).as_slice(), 3, 9), m);
    }

    #[test]
    fn zero_kernel_gives_zero_operators() {
        let mut rng = StdRng::seed_from_u64(8);
        let lin = random_stable(&mut rng, 2);
        let grid = SampleGrid::new((0..20).map(|_| random_pair(&mut rng)).collect()).unwrap();
        let t = assemble_t(&lin, &grid).unwrap();
        let ops = solve_operators(&t, &vec![c(0.0, 0.0); 20], 1e-10).unwrap();
        assert!(ops.diagnostics.zero_data);
        assert_eq!(ops.q, DMatrix::zeros(2, 4));
        assert_eq!(ops.n, DMatrix::zeros(2, 2));
    }

    #[test]
    fn empty_grid_rejected() {
        assert!(matches!(SampleGrid::<f64>::new(vec![]), Err(Error::EmptyGrid)));
        assert!(matches!(SampleGrid::<f64>::staggered(0.1, 10.0, 0, 0), Err(Error::EmptyGrid)));
        let grid = SampleGrid::new(vec![(c(0.0, 1.0), c(0.0, 2.0))]).unwrap();
        assert!(matches!(
            KernelSamples::new(grid, vec![]),
            Err(Error::SampleCountMismatch { samples: 0, grid: 1 })
        ));
    }

    #[test]
    fn staggered_grid_avoids_zero_sums() {
        for m in [4, 17, 18] {
            let g = SampleGrid::<f64>::staggered(0.1, 10.0, m, m).unwrap();
            assert!(g.pairs.iter().all(|(a, b)| (a + b).norm() > 1e-6));
            // Conjugate closure.
            for &(a, b) in &g.pairs {
                assert!(g.pairs.contains(&(a.conj(), b.conj())));
            }
            if m % 2 == 0 {
                assert_eq!(g.len(), 4 * m * m);
            }
        }
    }

    /// Random `r = 2` QB system with known operators.
    fn synthetic_qb(rng: &mut StdRng) -> QbSystem<f64> {
        let lin = random_stable(rng, 2);
        let q = DMatrix::from_fn(2, 4, |_, _| rng.random_range(-1.0..1.0));
        let n = DMatrix::from_fn(2, 2, |_, _| rng.random_range(-1.0..1.0));
        QbSystem::new(DMatrix::identity(2, 2), lin.a().clone(), Some(q), n, lin.b().clone(), lin.c().clone())
            .unwrap()
            .symmetrized()
    }

    #[test]
    fn self_consistency_fit() {
        let mut rng = StdRng::seed_from_u64(9);
        let truth = synthetic_qb(&mut rng);
        let mut pairs = Vec::new();
        for _ in 0..20 {
            let p = random_pair(&mut rng);
            pairs.push(p);
            pairs.push((p.0.conj(), p.1.conj()));
        }
        let samples = sample_h2(&truth, &SampleGrid::new(pairs).unwrap()).unwrap();
        let fit = fit_qb(&truth.linear_part(), &samples, &FitOptions::default()).unwrap();
        assert!(fit.system.is_symmetric());
        assert!(!fit.diagnostics.insufficient_data);
        for _ in 0..50 {
            let (z1, z2) = random_pair(&mut rng);
            let a = eval_h2(&truth, z1, z2).unwrap();
            let b = eval_h2(&fit.system, z1, z2).unwrap();
            assert!((a - b).norm() <= 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn linear_only_data_fits_zero_operators() {
        let mut rng = StdRng::seed_from_u64(10);
        let lin = random_stable(&mut rng, 2);
        let grid = SampleGrid::staggered(0.1, 10.0, 4, 4).unwrap();
        let samples = sample_h2(&QbSystem::from_linear(&lin), &grid).unwrap();
        let fit = fit_qb(&lin, &samples, &FitOptions::default()).unwrap();
        assert!(fit.system.q().unwrap().norm() <= 1e-10);
        assert!(fit.system.bilinear().norm() <= 1e-10);
    }

    #[test]
    fn insufficient_data_is_flagged() {
        let mut rng = StdRng::seed_from_u64(11);
        let truth = synthetic_qb(&mut rng);
        let grid = SampleGrid::new(vec![(c(0.0, 1.0), c(0.0, 2.0)), (c(0.0, -1.0), c(0.0, -2.0))]).unwrap();
        let samples = sample_h2(&truth, &grid).unwrap();
        let fit = fit_qb(&truth.linear_part(), &samples, &FitOptions::default()).unwrap();
        assert!(fit.diagnostics.insufficient_data);
    }

    #[test]
    fn singular_pair_reports_index() {
        let lin = scalar_system();
        let grid = SampleGrid::new(vec![(c(0.0, 1.0), c(0.0, 2.0)), (c(-1.0, 0.0), c(0.0, 1.0))]).unwrap();
        match assemble_t(&lin, &grid) {
            Err(Error::SingularResolvent { pair, .. }) => assert_eq!(pair, Some(1)),
            other => panic!("unexpected {other:?}"),
        }
    }
}
