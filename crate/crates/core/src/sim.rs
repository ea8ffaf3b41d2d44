//! Time-domain simulation with the Dormand–Prince 5(4) pair and its
//! fourth-order dense output, plus trajectory comparison.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::models::NonlinearModel;
use crate::scalar::{lit, to_f64, Real};
use crate::system::{LinearSystem, QbSystem, StateSpace};

/// Right-hand side `x' = f(x, u)` and output `y = h(x)` of a SISO model.
pub trait Dynamics<T: Real> {
    fn dim(&self) -> usize;
    /// Writes `f(x, u)` into `out`; returns `true` if the model had to clamp
    /// an argument to stay finite.
    fn rhs(&self, x: &DVector<T>, u: T, out: &mut DVector<T>) -> bool;
    fn output(&self, x: &DVector<T>) -> T;
}

impl<T: Real> Dynamics<T> for NonlinearModel<T> {
    fn dim(&self) -> usize {
        self.order()
    }
    fn rhs(&self, x: &DVector<T>, u: T, out: &mut DVector<T>) -> bool {
        self.rhs_into(x, u, out)
    }
    fn output(&self, x: &DVector<T>) -> T {
        NonlinearModel::output(self, x)
    }
}

impl<T: Real> Dynamics<T> for QbSystem<T> {
    fn dim(&self) -> usize {
        self.order()
    }
    fn rhs(&self, x: &DVector<T>, u: T, out: &mut DVector<T>) -> bool {
        self.a().mul_to(x, out);
        for &(i, j1, j2, q) in self.q_terms() {
            out[i] += q * x[j1] * x[j2];
        }
        if u != T::zero() {
            out.gemv(u, self.bilinear(), x, T::one());
            out.axpy(u, self.b(), T::one());
        }
        self.solve_e_in_place(out);
        false
    }
    fn output(&self, x: &DVector<T>) -> T {
        self.c().dot(&x.transpose())
    }
}

impl<T: Real> Dynamics<T> for LinearSystem<T> {
    fn dim(&self) -> usize {
        self.order()
    }
    fn rhs(&self, x: &DVector<T>, u: T, out: &mut DVector<T>) -> bool {
        self.a().mul_to(x, out);
        out.axpy(u, self.b(), T::one());
        if !self.e_is_identity() {
            if let Some(y) = self.e().clone().lu().solve(out) {
                out.copy_from(&y);
            }
        }
        false
    }
    fn output(&self, x: &DVector<T>) -> T {
        self.c().dot(&x.transpose())
    }
}

/// Integrator settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig<T: Real> {
    pub rel_tol: T,
    pub abs_tol: T,
    pub t0: T,
    pub t1: T,
    /// Upper bound on the step size (`None`: the whole span).
    pub max_step: Option<T>,
    /// Number of uniform output points on `[t0, t1]`; `None` records every accepted step.
    pub grid_points: Option<usize>,
    /// Record the state alongside the output.
    pub keep_states: bool,
    pub max_steps: usize,
}

impl<T: Real> Default for IntegratorConfig<T> {
    fn default() -> Self {
        Self {
            rel_tol: lit(1e-10),
            abs_tol: lit(1e-12),
            t0: T::zero(),
            t1: lit(10.0),
            max_step: None,
            grid_points: Some(2001),
            keep_states: false,
            max_steps: 10_000_000,
        }
    }
}

impl<T: Real> IntegratorConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > T::zero()) || !(self.abs_tol > T::zero()) {
            return Err(Error::InvalidParameter("tolerances must be positive".into()));
        }
        if !(self.t1 > self.t0) {
            return Err(Error::InvalidParameter("t1 must exceed t0".into()));
        }
        if matches!(self.grid_points, Some(m) if m < 2) {
            return Err(Error::InvalidParameter("output grid needs at least 2 points".into()));
        }
        if matches!(self.max_step, Some(h) if !(h > T::zero())) {
            return Err(Error::InvalidParameter("max_step must be positive".into()));
        }
        Ok(())
    }

    /// The uniform output grid, if one is configured.
    pub fn output_grid(&self) -> Option<Vec<T>> {
        self.grid_points.map(|m| {
            let span = self.t1 - self.t0;
            (0..m)
                .map(|i| {
                    if i + 1 == m {
                        self.t1
                    } else {
                        self.t0 + span * lit::<T>(i as f64) / lit::<T>((m - 1) as f64)
                    }
                })
                .collect()
        })
    }
}

/// Sampled solution.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T: Real> {
    pub t: Vec<T>,
    pub y: Vec<T>,
    pub x: Option<Vec<DVector<T>>>,
    /// Set when the model clamped an exponent; the trajectory is then not trustworthy.
    pub overflow: bool,
    pub steps: usize,
    pub rejected: usize,
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// Dense output (Hairer & Wanner, DOPRI5 `CONTD5`).
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

fn combo<T: Real>(out: &mut DVector<T>, y: &DVector<T>, h: T, terms: &[(f64, &DVector<T>)]) {
    out.copy_from(y);
    for &(c, k) in terms {
        if c != 0.0 {
            out.axpy(h * lit::<T>(c), k, T::one());
        }
    }
}

fn rms_norm<T: Real>(v: &DVector<T>, y0: &DVector<T>, y1: &DVector<T>, cfg: &IntegratorConfig<T>) -> T {
    let n = v.len();
    if n == 0 {
        return T::zero();
    }
    let mut acc = T::zero();
    for i in 0..n {
        let sc = cfg.abs_tol + cfg.rel_tol * y0[i].abs().max(y1[i].abs());
        let r = v[i] / sc;
        acc += r * r;
    }
    (acc / lit::<T>(n as f64)).sqrt()
}

/// Integrates `model` from `x0` under input `u(t)`.
pub fn integrate<T: Real, M: Dynamics<T> + ?Sized>(
    model: &M,
    u: impl Fn(T) -> T,
    x0: &DVector<T>,
    cfg: &IntegratorConfig<T>,
) -> Result<Trajectory<T>> {
    cfg.validate()?;
    let n = model.dim();
    if x0.len() != n {
        return Err(crate::error::shape_err("x0", n, x0.len()));
    }
    if x0.iter().any(|v| !to_f64(*v).is_finite()) {
        return Err(Error::InvalidParameter("x0 must be finite".into()));
    }

    let grid = cfg.output_grid();
    let mut traj = Trajectory {
        t: Vec::new(),
        y: Vec::new(),
        x: cfg.keep_states.then(Vec::new),
        overflow: false,
        steps: 0,
        rejected: 0,
    };
    let record = |traj: &mut Trajectory<T>, t: T, x: &DVector<T>| {
        traj.t.push(t);
        traj.y.push(model.output(x));
        if let Some(xs) = traj.x.as_mut() {
            xs.push(x.clone());
        }
    };

    let (t0, t1) = (cfg.t0, cfg.t1);
    let span = t1 - t0;
    let hmax = cfg.max_step.unwrap_or(span).min(span);
    let mut overflow = false;
    let mut f = |t: T, x: &DVector<T>, out: &mut DVector<T>| {
        overflow |= model.rhs(x, u(t), out);
    };

    let mut t = t0;
    let mut y = x0.clone();
    let mut k1 = DVector::zeros(n);
    let (mut k2, mut k3, mut k4, mut k5, mut k6, mut k7) = (
        DVector::zeros(n),
        DVector::zeros(n),
        DVector::zeros(n),
        DVector::zeros(n),
        DVector::zeros(n),
        DVector::zeros(n),
    );
    let mut ys = DVector::zeros(n);
    let mut y1 = DVector::zeros(n);
    let mut err = DVector::zeros(n);
    f(t, &y, &mut k1);

    // Initial step (Hairer's heuristic).
    let mut h = {
        let zero = DVector::zeros(n);
        let d0 = rms_norm(&y, &y, &zero, cfg);
        let d1 = rms_norm(&k1, &y, &zero, cfg);
        let small = lit::<T>(1e-5);
        let h0 = if d0 < small || d1 < small { lit::<T>(1e-6) } else { lit::<T>(0.01) * d0 / d1 };
        let h0 = h0.min(hmax);
        combo(&mut ys, &y, h0, &[(1.0, &k1)]);
        f(t + h0, &ys, &mut k2);
        let diff = &k2 - &k1;
        let d2 = rms_norm(&diff, &y, &ys, cfg) / h0;
        let m = d1.max(d2);
        let h1 = if m <= lit::<T>(1e-15) {
            (h0 * lit::<T>(1e-3)).max(lit::<T>(1e-6))
        } else {
            (lit::<T>(0.01) / m).powf(lit::<T>(0.2))
        };
        (h0 * lit::<T>(100.0)).min(h1).min(hmax)
    };

    let mut next_out = 0usize;
    match &grid {
        Some(g) => {
            record(&mut traj, g[0], &y);
            next_out = 1;
        }
        None => record(&mut traj, t, &y),
    }

    let (safety, facmin, facmax) = (lit::<T>(0.9), lit::<T>(0.2), lit::<T>(10.0));
    let mut last_rejected = false;
    let tiny = T::default_epsilon() * lit::<T>(16.0);
    while t < t1 {
        if traj.steps + traj.rejected >= cfg.max_steps {
            return Err(Error::StepSizeUnderflow {
                t: to_f64(t),
                h: to_f64(h),
            });
        }
        if h <= tiny * t.abs().max(T::one()) {
            return Err(Error::StepSizeUnderflow {
                t: to_f64(t),
                h: to_f64(h),
            });
        }
        let last = t + h >= t1;
        if last {
            h = t1 - t;
        }

        combo(&mut ys, &y, h, &[(A21, &k1)]);
        f(t + h * lit(C2), &ys, &mut k2);
        combo(&mut ys, &y, h, &[(A31, &k1), (A32, &k2)]);
        f(t + h * lit(C3), &ys, &mut k3);
        combo(&mut ys, &y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]);
        f(t + h * lit(C4), &ys, &mut k4);
        combo(&mut ys, &y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]);
        f(t + h * lit(C5), &ys, &mut k5);
        combo(&mut ys, &y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]);
        let tn = if last { t1 } else { t + h };
        f(tn, &ys, &mut k6);
        combo(&mut y1, &y, h, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
        f(tn, &y1, &mut k7);

        combo(
            &mut err,
            &DVector::zeros(n),
            h,
            &[(E1, &k1), (E3, &k3), (E4, &k4), (E5, &k5), (E6, &k6), (E7, &k7)],
        );
        let e = rms_norm(&err, &y, &y1, cfg);
        if !to_f64(e).is_finite() {
            h *= facmin;
            traj.rejected += 1;
            last_rejected = true;
            continue;
        }

        if e <= T::one() {
            // Dense output over (t, tn].
            if let Some(g) = &grid {
                if next_out < g.len() && g[next_out] <= tn {
                    let ydiff = &y1 - &y;
                    let bspl = &k1 * h - &ydiff;
                    let r4 = &ydiff - &k7 * h - &bspl;
                    let mut r5 = DVector::zeros(n);
                    combo(
                        &mut r5,
                        &DVector::zeros(n),
                        h,
                        &[(D1, &k1), (D3, &k3), (D4, &k4), (D5, &k5), (D6, &k6), (D7, &k7)],
                    );
                    let mut xi = DVector::zeros(n);
                    while next_out < g.len() && g[next_out] <= tn {
                        let th = (g[next_out] - t) / h;
                        let th1 = T::one() - th;
                        // y(θ) = r1 + θ(r2 + (1-θ)(r3 + θ(r4 + (1-θ) r5)))
                        for i in 0..n {
                            xi[i] = y[i] + th * (ydiff[i] + th1 * (bspl[i] + th * (r4[i] + th1 * r5[i])));
                        }
                        if last && next_out + 1 == g.len() {
                            xi.copy_from(&y1);
                        }
                        record(&mut traj, g[next_out], &xi);
                        next_out += 1;
                    }
                }
            }
            t = tn;
            std::mem::swap(&mut y, &mut y1);
            std::mem::swap(&mut k1, &mut k7);
            traj.steps += 1;
            if grid.is_none() {
                record(&mut traj, t, &y);
            }
            let mut fac = safety * e.max(lit::<T>(1e-10)).powf(lit::<T>(-0.2));
            fac = fac.max(facmin).min(if last_rejected { T::one() } else { facmax });
            h = (h * fac).min(hmax);
            last_rejected = false;
        } else {
            let fac = (safety * e.powf(lit::<T>(-0.2))).max(facmin);
            h *= fac;
            traj.rejected += 1;
            last_rejected = true;
        }
    }
    traj.overflow = overflow;
    Ok(traj)
}

/// `(max |y_a - y_b|, sqrt(∫ (y_a - y_b)² dt))` with the trapezoidal rule.
pub fn output_error<T: Real>(a: &Trajectory<T>, b: &Trajectory<T>) -> Result<(T, T)> {
    if a.t.len() != b.t.len() || a.t.iter().zip(&b.t).any(|(x, y)| x != y) {
        return Err(Error::GridMismatch);
    }
    let d: Vec<T> = a.y.iter().zip(&b.y).map(|(x, y)| *x - *y).collect();
    let linf = d.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let half = lit::<T>(0.5);
    let mut integral = T::zero();
    for i in 1..d.len() {
        integral += (a.t[i] - a.t[i - 1]) * (d[i] * d[i] + d[i - 1] * d[i - 1]) * half;
    }
    Ok((linf, integral.sqrt()))
}

/// Input signals: `const:A`, `expdecay:A,tau` (`A exp(-t/tau)`) and
/// `twotone:A,w1,w2` (`A (sin(w1 t) + sin(w2 t))`, angular frequencies).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InputSignal {
    Const(f64),
    ExpDecay { amplitude: f64, tau: f64 },
    TwoTone { amplitude: f64, w1: f64, w2: f64 },
}

impl InputSignal {
    pub fn eval<T: Real>(&self, t: T) -> T {
        match *self {
            InputSignal::Const(a) => lit(a),
            InputSignal::ExpDecay { amplitude, tau } => lit::<T>(amplitude) * (-t / lit::<T>(tau)).exp(),
            InputSignal::TwoTone { amplitude, w1, w2 } => {
                lit::<T>(amplitude) * ((lit::<T>(w1) * t).sin() + (lit::<T>(w2) * t).sin())
            }
        }
    }

    /// Same signal with the amplitude multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        match *self {
            InputSignal::Const(a) => InputSignal::Const(a * k),
            InputSignal::ExpDecay { amplitude, tau } => InputSignal::ExpDecay {
                amplitude: amplitude * k,
                tau,
            },
            InputSignal::TwoTone { amplitude, w1, w2 } => InputSignal::TwoTone {
                amplitude: amplitude * k,
                w1,
                w2,
            },
        }
    }
}

impl FromStr for InputSignal {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("invalid input signal '{s}'"));
        let (kind, args) = s.split_once(':').ok_or_else(bad)?;
        let nums = args
            .split(',')
            .map(|a| a.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<Vec<f64>>>()?;
        if nums.iter().any(|v| !v.is_finite()) {
            return Err(bad());
        }
        match (kind.trim(), nums.as_slice()) {
            ("const", [a]) => Ok(InputSignal::Const(*a)),
            ("expdecay", [a, tau]) if *tau > 0.0 => Ok(InputSignal::ExpDecay { amplitude: *a, tau: *tau }),
            ("twotone", [a, w1, w2]) => Ok(InputSignal::TwoTone {
                amplitude: *a,
                w1: *w1,
                w2: *w2,
            }),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for InputSignal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InputSignal::Const(a) => write!(f, "const:{a}"),
            InputSignal::ExpDecay { amplitude, tau } => write!(f, "expdecay:{amplitude},{tau}"),
            InputSignal::TwoTone { amplitude, w1, w2 } => write!(f, "twotone:{amplitude},{w1},{w2}"),
        }
    }
}
