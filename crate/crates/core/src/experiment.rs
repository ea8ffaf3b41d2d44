//! The two-step fitting experiment as a reusable pipeline: sample the lifted
//! ground truth, fit the linear part, fit the quadratic/bilinear operators and
//! compare the surrogate with the original nonlinear circuit in time.

use std::path::PathBuf;

use nalgebra::DVector;
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loewner::{fit_linear, imag_axis_points, logspace, sample_h1, LinearFit, PartitionScheme};
use crate::models::{
    ladder_carleman_bilinear, ladder_lifted_qb, ladder_nonlinear, toy_carleman_bilinear, toy_lifted_qb,
    toy_nonlinear, DiodeToyParams, LadderParams, NonlinearModel,
};
use crate::qbfit::{fit_qb, sample_h2, FitOptions, KernelSamples, QbFit, SampleGrid};
use crate::sim::{integrate, output_error, InputSignal, IntegratorConfig, Trajectory};
use crate::system::{ComplexSample, QbSystem};
use crate::transfer::{eval_h1, eval_h2};

/// Which benchmark circuit, with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum ModelParams {
    Ladder(LadderParams),
    Toy(DiodeToyParams),
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams::Ladder(LadderParams::new(50))
    }
}

impl ModelParams {
    pub fn name(&self) -> &'static str {
        match self {
            ModelParams::Ladder(_) => "ladder",
            ModelParams::Toy(_) => "toy",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelParams::Ladder(p) => p.validate(),
            ModelParams::Toy(p) => p.validate(),
        }
    }

    pub fn nonlinear(&self) -> Result<NonlinearModel<f64>> {
        match self {
            ModelParams::Ladder(p) => ladder_nonlinear(p),
            ModelParams::Toy(p) => toy_nonlinear(p),
        }
    }

    /// Exact QB lifting (the sampling ground truth).
    pub fn lifted(&self) -> Result<QbSystem<f64>> {
        match self {
            ModelParams::Ladder(p) => ladder_lifted_qb(p),
            ModelParams::Toy(p) => toy_lifted_qb(p),
        }
    }

    pub fn carleman(&self) -> Result<QbSystem<f64>> {
        match self {
            ModelParams::Ladder(p) => ladder_carleman_bilinear(p),
            ModelParams::Toy(p) => toy_carleman_bilinear(p),
        }
    }
}

/// Imaginary-axis band `[w_lo, w_hi]` in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub w_lo: f64,
    pub w_hi: f64,
}

impl Band {
    fn validate(&self) -> Result<()> {
        if !(self.w_lo > 0.0 && self.w_hi > self.w_lo && self.w_hi.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "frequency band [{}, {}] must satisfy 0 < w_lo < w_hi",
                self.w_lo, self.w_hi
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct H1Spec {
    /// Total number of samples (log-spaced frequencies and their conjugates).
    pub count: usize,
    #[serde(flatten)]
    pub band: Band,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OmegaSpec {
    pub m1: usize,
    pub m2: usize,
    #[serde(flatten)]
    pub band: Band,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub t1: f64,
    pub grid_points: usize,
    /// Input signal in the `kind:args` syntax of [`InputSignal`].
    pub input: String,
}

impl SimSpec {
    pub fn integrator(&self) -> IntegratorConfig<f64> {
        IntegratorConfig {
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol,
            t1: self.t1,
            grid_points: Some(self.grid_points),
            ..Default::default()
        }
    }

    pub fn signal(&self) -> Result<InputSignal> {
        self.input.parse()
    }
}

/// Everything needed to run the experiment end to end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    #[serde(flatten)]
    pub model: ModelParams,
    pub h1: H1Spec,
    pub omega: OmegaSpec,
    pub loewner_tol: f64,
    /// Optional cap on the reduced order.
    pub rmax: Option<usize>,
    pub tsvd_tol: f64,
    /// Points of the H1 validation grid (positive frequencies, same band).
    pub h1_validation: usize,
    /// `(m1, m2)` of the held-out H2 grid.
    pub h2_holdout: (usize, usize),
    pub sim: SimSpec,
    pub output_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let band = Band { w_lo: 0.1, w_hi: 10.0 };
        Self {
            model: ModelParams::default(),
            h1: H1Spec { count: 200, band },
            omega: OmegaSpec { m1: 18, m2: 18, band },
            loewner_tol: 1e-9,
            rmax: None,
            tsvd_tol: 1e-10,
            h1_validation: 1000,
            h2_holdout: (9, 10),
            sim: SimSpec {
                rel_tol: 1e-10,
                abs_tol: 1e-12,
                t1: 10.0,
                grid_points: 2001,
                input: "expdecay:0.01,1".into(),
            },
            output_dir: PathBuf::from("out"),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.h1.band.validate()?;
        self.omega.band.validate()?;
        if self.h1.count < 4 || !self.h1.count.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "H1 sample count must be even and at least 4, got {}",
                self.h1.count
            )));
        }
        if self.omega.m1 == 0 || self.omega.m2 == 0 || self.h2_holdout.0 == 0 || self.h2_holdout.1 == 0 {
            return Err(Error::EmptyGrid);
        }
        if !(self.loewner_tol >= 0.0) || !(self.tsvd_tol >= 0.0) {
            return Err(Error::InvalidParameter("tolerances must be non-negative".into()));
        }
        self.sim.integrator().validate()?;
        self.sim.signal()?;
        Ok(())
    }

    pub fn h1_points(&self) -> Vec<Complex<f64>> {
        imag_axis_points(self.h1.band.w_lo, self.h1.band.w_hi, self.h1.count / 2)
    }

    pub fn omega_grid(&self) -> Result<SampleGrid<f64>> {
        SampleGrid::staggered(self.omega.band.w_lo, self.omega.band.w_hi, self.omega.m1, self.omega.m2)
    }

    /// Held-out H2 pairs: a coarser staggered grid on a slightly narrowed
    /// band, so no pair coincides with a fitting pair.
    pub fn holdout_grid(&self) -> Result<SampleGrid<f64>> {
        let shrink = 1.07;
        SampleGrid::staggered(
            self.omega.band.w_lo * shrink,
            self.omega.band.w_hi / shrink,
            self.h2_holdout.0,
            self.h2_holdout.1,
        )
    }

    /// Positive frequencies for validating the linear fit, offset from the samples.
    pub fn validation_points(&self) -> Vec<Complex<f64>> {
        let (lo, hi) = (self.h1.band.w_lo, self.h1.band.w_hi);
        let step = (hi / lo).powf(0.5 / self.h1_validation as f64);
        logspace(lo * step.sqrt(), hi / step.sqrt(), self.h1_validation)
            .into_iter()
            .map(|w| Complex::new(0.0, w))
            .collect()
    }
}

/// Max absolute first-kernel mismatch over `points`.
pub fn h1_error(truth: &QbSystem<f64>, fit: &QbSystem<f64>, points: &[Complex<f64>]) -> Result<f64> {
    points.iter().try_fold(0.0f64, |m, &s| Ok(m.max((eval_h1(truth, s)? - eval_h1(fit, s)?).norm())))
}

/// Max absolute second-kernel mismatch over a grid.
pub fn h2_error(truth: &QbSystem<f64>, fit: &QbSystem<f64>, grid: &SampleGrid<f64>) -> Result<f64> {
    grid.pairs
        .iter()
        .enumerate()
        .try_fold(0.0f64, |m, (i, &(z1, z2))| {
            let d = (|| Ok::<_, Error>(eval_h2(truth, z1, z2)? - eval_h2(fit, z1, z2)?))().map_err(|e| e.at_pair(i))?;
            Ok(m.max(d.norm()))
        })
}

/// Samples of both kernels of the ground truth.
#[derive(Debug, Clone)]
pub struct Measurements {
    pub h1: Vec<ComplexSample<f64>>,
    pub h2: KernelSamples<f64>,
}

pub fn measure(cfg: &PipelineConfig, truth: &QbSystem<f64>) -> Result<Measurements> {
    Ok(Measurements {
        h1: sample_h1(truth, &cfg.h1_points())?,
        h2: sample_h2(truth, &cfg.omega_grid()?)?,
    })
}

pub fn fit_linear_stage(cfg: &PipelineConfig, h1: &[ComplexSample<f64>]) -> Result<LinearFit<f64>> {
    fit_linear(h1, PartitionScheme::Alternating, cfg.loewner_tol, cfg.rmax)
}

pub fn fit_qb_stage(cfg: &PipelineConfig, lin: &LinearFit<f64>, h2: &KernelSamples<f64>) -> Result<QbFit<f64>> {
    fit_qb(&lin.system, h2, &FitOptions { tsvd_tol: cfg.tsvd_tol })
}

/// Integrates `model` from rest under the configured input.
pub fn simulate<M: crate::sim::Dynamics<f64> + ?Sized>(cfg: &PipelineConfig, model: &M) -> Result<Trajectory<f64>> {
    let u = cfg.sim.signal()?;
    integrate(model, |t| u.eval(t), &DVector::zeros(model.dim()), &cfg.sim.integrator())
}

/// Summary of a full run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub model: String,
    pub h1_samples: usize,
    pub r: usize,
    /// `sigma_{r+1} / sigma_1` (0 when all values were kept).
    pub sigma_next_rel: f64,
    pub h1_error: f64,
    #[serde(rename = "K")]
    pub k: usize,
    pub tsvd_rank: usize,
    pub residual_rel: f64,
    pub h2_error: f64,
    pub linf_lifted: f64,
    pub l2_lifted: f64,
    pub linf_fitted: f64,
    pub l2_fitted: f64,
    pub overflow: bool,
}

/// Products of a full run.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub truth: QbSystem<f64>,
    pub measurements: Measurements,
    pub linear: LinearFit<f64>,
    pub qb: QbFit<f64>,
    pub y_nonlinear: Trajectory<f64>,
    pub y_lifted: Trajectory<f64>,
    pub y_fitted: Trajectory<f64>,
    pub report: Report,
}

pub fn run(cfg: &PipelineConfig) -> Result<Outcome> {
    cfg.validate()?;
    let truth = cfg.model.lifted()?;
    let measurements = measure(cfg, &truth)?;
    let linear = fit_linear_stage(cfg, &measurements.h1)?;
    let qb = fit_qb_stage(cfg, &linear, &measurements.h2)?;

    let h1_err = h1_error(&truth, &qb.system, &cfg.validation_points())?;
    let h2_err = h2_error(&truth, &qb.system, &cfg.holdout_grid()?)?;

    let y_nonlinear = simulate(cfg, &cfg.model.nonlinear()?)?;
    let y_lifted = simulate(cfg, &truth)?;
    let y_fitted = simulate(cfg, &qb.system)?;
    let (linf_lifted, l2_lifted) = output_error(&y_nonlinear, &y_lifted)?;
    let (linf_fitted, l2_fitted) = output_error(&y_nonlinear, &y_fitted)?;

    let sigma = &linear.sigma;
    let report = Report {
        model: cfg.model.name().into(),
        h1_samples: measurements.h1.len(),
        r: linear.r,
        sigma_next_rel: sigma.get(linear.r).map_or(0.0, |s| s / sigma[0]),
        h1_error: h1_err,
        k: measurements.h2.v.len(),
        tsvd_rank: qb.diagnostics.rank,
        residual_rel: qb.diagnostics.residual_rel,
        h2_error: h2_err,
        linf_lifted,
        l2_lifted,
        linf_fitted,
        l2_fitted,
        overflow: y_nonlinear.overflow || y_lifted.overflow || y_fitted.overflow,
    };
    Ok(Outcome {
        truth,
        measurements,
        linear,
        qb,
        y_nonlinear,
        y_lifted,
        y_fitted,
        report,
    })
}
