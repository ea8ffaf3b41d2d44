//! Data-driven fitting of reduced quadratic-bilinear (QB) models.
//!
//! The linear part is recovered from samples of the first generalized transfer
//! function with the Loewner framework ([`loewner`]); the quadratic and
//! bilinear operators are then fitted to samples of the second kernel by a
//! truncated-SVD least-squares solve ([`qbfit`]). [`models`] provides the diode
//! toy circuit and the nonlinear RC ladder with their exact QB liftings and
//! Carleman bilinearizations, [`sim`] integrates all of them in time.
//!
//! Everything is generic over the real scalar type; `f64` aliases are
//! provided at the crate root.

// `!(a > b)` is used deliberately so NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiment;
pub mod io;
pub mod loewner;
pub mod models;
pub mod qbfit;
pub mod quadratic;
pub mod scalar;
pub mod sim;
pub mod system;
pub mod transfer;
pub mod tsvd;

pub use error::{Error, Result};
pub use quadratic::{kron_vec, quad_apply, symmetrize_q};
pub use scalar::{Entry, Real};
pub use system::{ComplexSample, LinearSystem, QbSystem, StateSpace};
pub use transfer::{eval_h1, eval_h2, resolvent_apply, resolvent_apply_left};

pub use num_complex::Complex;

pub type Complex64 = num_complex::Complex<f64>;
pub type LinearSystem64 = LinearSystem<f64>;
pub type ComplexLinearSystem64 = LinearSystem<f64, Complex<f64>>;
pub type QbSystem64 = QbSystem<f64>;
pub type ComplexSample64 = ComplexSample<f64>;
pub use loewner::{
    build_pencil, fit_linear, partition_samples, realify, reduce, svd_truncate, InterpolationData, LoewnerPencil,
    PartitionScheme,
};
pub use qbfit::{fit_qb, sample_h2, Diagnostics, FitOptions, KernelSamples, SampleGrid};
pub use sim::{integrate, output_error, Dynamics, InputSignal, IntegratorConfig, Trajectory};
