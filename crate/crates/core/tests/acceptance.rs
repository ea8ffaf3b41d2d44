//! End-to-end acceptance checks. Runs without the libtest harness so every
//! check prints exactly one `PASS`/`FAIL` line, with measured value, limit and
//! wall time, regardless of output capturing.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, RowDVector};
use qbloewner::experiment::{self, PipelineConfig};
use qbloewner::loewner::{fit_linear, PartitionScheme};
use qbloewner::models::{
    ladder_lifted_qb, ladder_nonlinear, toy_carleman_bilinear, toy_lifted_qb, toy_nonlinear, DiodeToyParams,
    LadderParams,
};
use qbloewner::qbfit::{build_regressors, fit_qb, sample_h2, vec_rowmajor, FitOptions, SampleGrid};
use qbloewner::sim::{integrate, output_error, IntegratorConfig};
use qbloewner::{
    eval_h1, eval_h2, quad_apply, symmetrize_q, Complex64, ComplexSample, LinearSystem, QbSystem, StateSpace,
};
use rand::{rngs::StdRng, Rng, SeedableRng};

struct Check {
    name: &'static str,
    pass: bool,
    detail: String,
    elapsed: Duration,
    limit: Option<Duration>,
}

/// Runs one check; a panic inside counts as a failure with its message.
fn timed<F: FnOnce() -> (bool, String)>(name: &'static str, limit: Option<Duration>, f: F) -> Check {
    let t0 = Instant::now();
    let (ok, detail) = match std::panic::catch_unwind(std::panic::AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            (false, format!("panicked: {msg}"))
        }
    };
    let elapsed = t0.elapsed();
    Check {
        name,
        pass: ok && limit.is_none_or(|l| elapsed <= l),
        detail,
        elapsed,
        limit,
    }
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn log_uniform(rng: &mut StdRng, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

fn u_exp(t: f64) -> f64 {
    0.01 * (-t).exp()
}

// ---------------------------------------------------------------------------

fn lifting_exactness() -> Check {
    timed("lifted ladder (n=50) reproduces the nonlinear ladder", Some(Duration::from_secs(30)), || {
        let p = LadderParams::new(50);
        let cfg = IntegratorConfig::default();
        let nl = ladder_nonlinear::<f64>(&p).unwrap();
        let qb = ladder_lifted_qb::<f64>(&p).unwrap();
        let a = integrate(&nl, u_exp, &DVector::zeros(50), &cfg).unwrap();
        let b = integrate(&qb, u_exp, &DVector::zeros(100), &cfg).unwrap();
        let (linf, _) = output_error(&a, &b).unwrap();
        (linf <= 1e-8 && !a.overflow, format!("linf = {linf:.3e} (limit 1e-8)"))
    })
}

/// Independent ladder linear-fit check: samples, Loewner fit, validation.
fn loewner_fit(cfg: &PipelineConfig) -> (Check, Option<qbloewner::loewner::LinearFit<f64>>) {
    let mut fit = None;
    let check = timed("Loewner fit of the ladder H1", Some(Duration::from_secs(10)), || {
        let truth = cfg.model.lifted().unwrap();
        let samples = qbloewner::loewner::sample_h1(&truth, &cfg.h1_points()).unwrap();
        let lin = experiment::fit_linear_stage(cfg, &samples).unwrap();
        let ratio = lin.sigma[10] / lin.sigma[0];
        let reduced = QbSystem::from_linear(&lin.system);
        let err = experiment::h1_error(&truth, &reduced, &cfg.validation_points()).unwrap();
        let ok = samples.len() >= 200 && ratio <= 1e-9 && lin.r == 10 && err <= 1e-7;
        let detail = format!(
            "{} samples, sigma11/sigma1 = {ratio:.3e} (limit 1e-9), r = {} (want 10), max |H1 - H1r| = {err:.3e} over {} points (limit 1e-7)",
            samples.len(),
            lin.r,
            cfg.h1_validation
        );
        fit = Some(lin);
        (ok, detail)
    });
    (check, fit)
}

fn h2_fit(cfg: &PipelineConfig, lin: &qbloewner::loewner::LinearFit<f64>) -> (Check, Option<QbSystem<f64>>) {
    let mut out = None;
    let check = timed("second-kernel fit on held-out pairs", Some(Duration::from_secs(300)), || {
        let truth = cfg.model.lifted().unwrap();
        let samples = sample_h2(&truth, &cfg.omega_grid().unwrap()).unwrap();
        let fit = experiment::fit_qb_stage(cfg, lin, &samples).unwrap();
        let holdout = cfg.holdout_grid().unwrap();
        let err = experiment::h2_error(&truth, &fit.system, &holdout).unwrap();
        let k = samples.v.len();
        let r = fit.system.order();
        let ok = r == 10 && k >= r * r * r + r * r && err <= 1e-6;
        let detail = format!(
            "r = {r}, K = {k} (need >= {}), tSVD rank {}, held-out max |H2 - H2r| = {err:.3e} over {} pairs (limit 1e-6)",
            r * r * r + r * r,
            fit.diagnostics.rank,
            holdout.len()
        );
        out = Some(fit.system);
        (ok, detail)
    });
    (check, out)
}

fn surrogate_in_time(cfg: &PipelineConfig, fitted: &QbSystem<f64>) -> Check {
    timed("fitted r=10 surrogate vs nonlinear ladder in time", Some(Duration::from_secs(60)), || {
        let nl = cfg.model.nonlinear().unwrap();
        let a = experiment::simulate(cfg, &nl).unwrap();
        let b = experiment::simulate(cfg, fitted).unwrap();
        let (linf, l2) = output_error(&a, &b).unwrap();
        (
            linf <= 1e-5 && !a.overflow && !b.overflow,
            format!("linf = {linf:.3e} (limit 1e-5), l2 = {l2:.3e}"),
        )
    })
}

/// Printed closed forms of the toy kernels, written out here independently.
fn toy_h1(p: &DiodeToyParams, s: Complex64) -> Complex64 {
    c(p.vt1, 0.0) / (s * p.c1 * p.vt1 + p.ir1) + c(p.vt2, 0.0) / (s * p.c2 * p.vt2 + p.ir2)
}

fn toy_h2_diag(p: &DiodeToyParams, s: Complex64) -> Complex64 {
    let term = |ir: f64, vt: f64, cap: f64| {
        let d1 = s * (cap * vt) + ir;
        let d2 = s * (2.0 * cap * vt) + ir;
        -c(ir * vt, 0.0) / (d1 * d1 * d2 * 2.0)
    };
    term(p.ir1, p.vt1, p.c1) + term(p.ir2, p.vt2, p.c2)
}

fn toy_closed_forms() -> Check {
    timed("toy lifted kernels match the closed forms", Some(Duration::from_secs(1)), || {
        let mut rng = StdRng::seed_from_u64(2024);
        let mut worst = 0.0f64;
        for params in [
            DiodeToyParams::default(),
            DiodeToyParams {
                c1: 0.5,
                c2: 2.0,
                ir1: 1.5,
                ir2: 0.7,
                vt1: 0.8,
                vt2: 1.3,
            },
        ] {
            let sys = toy_lifted_qb::<f64>(&params).unwrap();
            for _ in 0..50 {
                let w = log_uniform(&mut rng, 1e-2, 1e2) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                let s = c(0.0, w);
                let (h1, want1) = (eval_h1(&sys, s).unwrap(), toy_h1(&params, s));
                let (h2, want2) = (eval_h2(&sys, s, s).unwrap(), toy_h2_diag(&params, s));
                worst = worst.max((h1 - want1).norm() / want1.norm()).max((h2 - want2).norm() / want2.norm());
            }
        }
        (worst <= 1e-10, format!("max relative error {worst:.3e} at 2 x 50 frequencies (limit 1e-10)"))
    })
}

fn random_stable(rng: &mut StdRng, r: usize) -> LinearSystem<f64> {
    let a = DMatrix::from_fn(r, r, |_, _| rng.random_range(-0.5..0.5)) - DMatrix::identity(r, r) * 2.0;
    let b = DVector::from_fn(r, |_, _| rng.random_range(-1.0..1.0));
    let cc = RowDVector::from_fn(r, |_, _| rng.random_range(-1.0..1.0));
    LinearSystem::standard(a, b, cc).unwrap()
}

fn random_imag(rng: &mut StdRng) -> Complex64 {
    c(0.0, rng.random_range(-5.0..5.0))
}

fn row_identity() -> Check {
    timed("regressor row reproduces the kernel formula", None, || {
        let mut rng = StdRng::seed_from_u64(1);
        let mut worst = 0.0f64;
        for i in 0..100 {
            let r = 1 + i % 4;
            let lin = random_stable(&mut rng, r);
            let q = DMatrix::from_fn(r, r * r, |_, _| rng.random_range(-1.0..1.0));
            let nb = DMatrix::from_fn(r, r, |_, _| rng.random_range(-1.0..1.0));
            let sys = QbSystem::new(
                DMatrix::identity(r, r),
                lin.a().clone(),
                Some(q.clone()),
                nb.clone(),
                lin.b().clone(),
                lin.c().clone(),
            )
            .unwrap();
            let pair = (random_imag(&mut rng), random_imag(&mut rng));
            let row = build_regressors(&lin, pair).unwrap().t_row();
            let mut z = vec_rowmajor(&q).iter().copied().collect::<Vec<_>>();
            z.extend(vec_rowmajor(&nb).iter().map(|v| v * 0.5));
            let lhs: Complex64 = row.iter().zip(&z).map(|(t, z)| t * z).sum();
            let rhs = eval_h2(&sys, pair.0, pair.1).unwrap();
            worst = worst.max((lhs - rhs).norm() / rhs.norm().max(1e-300));
        }
        (worst <= 1e-12, format!("max relative mismatch {worst:.3e} over 100 instances (limit 1e-12)"))
    })
}

fn loewner_interpolation() -> Check {
    timed("Loewner model interpolates rational data of orders 1..5", None, || {
        let mut rng = StdRng::seed_from_u64(7);
        let mut worst = 0.0f64;
        let mut orders_ok = true;
        for order in 1..=5 {
            let sys = random_stable(&mut rng, order);
            let pts = qbloewner::loewner::imag_axis_points(0.1, 10.0, 2 * order + 2);
            let samples: Vec<ComplexSample<f64>> =
                pts.iter().map(|&s| ComplexSample::new(s, eval_h1(&sys, s).unwrap())).collect();
            let fit = fit_linear(&samples, PartitionScheme::Alternating, 1e-10, None).unwrap();
            orders_ok &= fit.r == order;
            for smp in &samples {
                let h = eval_h1(&fit.system, smp.s).unwrap();
                worst = worst.max((h - smp.value).norm() / smp.value.norm());
            }
        }
        (
            worst <= 1e-8 && orders_ok,
            format!("max relative interpolation error {worst:.3e} (limit 1e-8), orders recovered: {orders_ok}"),
        )
    })
}

fn carleman_slope() -> Check {
    timed("toy Carleman error is third order in the amplitude", None, || {
        let p = DiodeToyParams::default();
        let nl = toy_nonlinear::<f64>(&p).unwrap();
        let cb = toy_carleman_bilinear::<f64>(&p).unwrap();
        let cfg = IntegratorConfig::default();
        let amps = [1e-3, 1e-2, 1e-1];
        let errs: Vec<f64> = amps
            .iter()
            .map(|&a| {
                let u = move |t: f64| a * (-t).exp();
                let y0 = integrate(&nl, u, &DVector::zeros(2), &cfg).unwrap();
                let y1 = integrate(&cb, u, &DVector::zeros(6), &cfg).unwrap();
                output_error(&y0, &y1).unwrap().0
            })
            .collect();
        // Least-squares slope of log(err) against log(amplitude).
        let xs: Vec<f64> = amps.iter().map(|a| a.log10()).collect();
        let ys: Vec<f64> = errs.iter().map(|e| e.log10()).collect();
        let (mx, my) = (xs.iter().sum::<f64>() / 3.0, ys.iter().sum::<f64>() / 3.0);
        let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
            / xs.iter().map(|x| (x - mx) * (x - mx)).sum::<f64>();
        (
            (slope - 3.0).abs() <= 0.5,
            format!("slope {slope:.3} (want 3 +- 0.5), errors [{:.2e}, {:.2e}, {:.2e}]", errs[0], errs[1], errs[2]),
        )
    })
}

fn symmetrization() -> Check {
    timed("Q symmetrization is idempotent and keeps Q(v x v)", None, || {
        let mut rng = StdRng::seed_from_u64(3);
        let mut idem = 0.0f64;
        let mut keep = 0.0f64;
        let mut swap = 0.0f64;
        for n in 1..=8 {
            let q = DMatrix::from_fn(n, n * n, |_, _| rng.random_range(-1.0..1.0));
            let s = symmetrize_q(&q);
            idem = idem.max((symmetrize_q(&s) - &s).amax());
            let v = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let w = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            keep = keep.max((quad_apply(&s, &v, &v).unwrap() - quad_apply(&q, &v, &v).unwrap()).amax());
            swap = swap.max((quad_apply(&s, &v, &w).unwrap() - quad_apply(&s, &w, &v).unwrap()).amax());
        }
        (
            idem == 0.0 && keep <= 1e-14 && swap <= 1e-14,
            format!("idempotence {idem:.1e}, Q(v x v) change {keep:.1e}, Q(v x w) - Q(w x v) {swap:.1e}"),
        )
    })
}

fn self_consistency() -> Check {
    timed("r=2 QB system refitted from its own kernel", None, || {
        let mut rng = StdRng::seed_from_u64(9);
        let lin = random_stable(&mut rng, 2);
        let q = DMatrix::from_fn(2, 4, |_, _| rng.random_range(-1.0..1.0));
        let nb = DMatrix::from_fn(2, 2, |_, _| rng.random_range(-1.0..1.0));
        let truth = QbSystem::new(
            DMatrix::identity(2, 2),
            lin.a().clone(),
            Some(q),
            nb,
            lin.b().clone(),
            lin.c().clone(),
        )
        .unwrap()
        .symmetrized();
        let mut pairs = Vec::new();
        for _ in 0..20 {
            let p = (random_imag(&mut rng), random_imag(&mut rng));
            pairs.push(p);
            pairs.push((p.0.conj(), p.1.conj()));
        }
        let samples = sample_h2(&truth, &SampleGrid::new(pairs).unwrap()).unwrap();
        let fit = fit_qb(&truth.linear_part(), &samples, &FitOptions::default()).unwrap();
        let mut worst = 0.0f64;
        for _ in 0..50 {
            let (z1, z2) = (random_imag(&mut rng), random_imag(&mut rng));
            worst = worst.max((eval_h2(&truth, z1, z2).unwrap() - eval_h2(&fit.system, z1, z2).unwrap()).norm());
        }
        (worst <= 1e-8, format!("K = 40, held-out max |H2 - H2r| = {worst:.3e} over 50 pairs (limit 1e-8)"))
    })
}

fn main() -> ExitCode {
    let cfg = PipelineConfig::default();
    let mut checks = vec![lifting_exactness()];
    let (c2, lin) = loewner_fit(&cfg);
    checks.push(c2);
    if let Some(lin) = lin {
        let (c3, fitted) = h2_fit(&cfg, &lin);
        checks.push(c3);
        if let Some(fitted) = fitted {
            checks.push(surrogate_in_time(&cfg, &fitted));
        }
    }
    checks.push(toy_closed_forms());
    checks.push(row_identity());
    checks.push(loewner_interpolation());
    checks.push(carleman_slope());
    checks.push(symmetrization());
    checks.push(self_consistency());

    println!();
    for ch in &checks {
        let limit = ch.limit.map(|l| format!(", limit {} s", l.as_secs())).unwrap_or_default();
        println!(
            "{} {}: {} [{:.2} s{limit}]",
            if ch.pass { "PASS" } else { "FAIL" },
            ch.name,
            ch.detail,
            ch.elapsed.as_secs_f64()
        );
    }
    let failed = checks.iter().filter(|c| !c.pass).count();
    println!("\nacceptance: {} passed, {failed} failed\n", checks.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
