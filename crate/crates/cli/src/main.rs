//! `qbloewner` command line driver.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use qbloewner::experiment::{self, ModelParams, PipelineConfig};
use qbloewner::io::{self, Model};
use qbloewner::loewner::{fit_linear, PartitionScheme};
use qbloewner::models::NonlinearModel;
use qbloewner::qbfit::{fit_qb, FitOptions};
use qbloewner::sim::{integrate, output_error, Dynamics, InputSignal, IntegratorConfig, Trajectory};
use qbloewner::{Error, QbSystem, Result, StateSpace};
use serde_json::json;

#[derive(Parser)]
#[command(name = "qbloewner", version, about = "Fit quadratic-bilinear surrogates from transfer function samples")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample H1 and H2 of the lifted ground-truth model.
    Sample(PipelineArgs),
    /// Loewner fit of the linear part from H1 samples.
    FitLinear {
        /// H1 sample CSV (`im_s,re_H,im_H`).
        #[arg(long)]
        samples: PathBuf,
        /// Relative singular value cut-off.
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[arg(long)]
        rmax: Option<usize>,
        #[arg(long, value_enum, default_value_t = Scheme::Alternating)]
        partition: Scheme,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Least-squares fit of Q and N from H2 samples.
    FitQb {
        /// Linear model JSON.
        #[arg(long)]
        linear: PathBuf,
        /// H2 sample CSV (`re_s1,im_s1,re_s2,im_s2,re_H2,im_H2`).
        #[arg(long)]
        samples: PathBuf,
        /// Relative tSVD cut-off.
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Write the QB lifting or the Carleman bilinearization of a circuit.
    Lift {
        #[command(flatten)]
        circuit: CircuitArgs,
        #[arg(long, value_enum, default_value_t = LiftKind::Qb)]
        kind: LiftKind,
        /// Output model JSON.
        #[arg(long)]
        out: PathBuf,
    },
    /// Integrate one model and write its trajectory.
    Simulate {
        /// Model JSON, or circuit parameter JSON for the original nonlinear circuit.
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        sim: SimArgs,
        /// Also write the states.
        #[arg(long)]
        states: bool,
        /// Trajectory CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Integrate two models under the same input and report the output error.
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Full experiment: sample, fit both steps, compare in time.
    ReproPaper(PipelineArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Scheme {
    Alternating,
    HalfSplit,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum LiftKind {
    Qb,
    Carleman,
}

#[derive(Clone, Copy, ValueEnum)]
enum Circuit {
    Ladder,
    Toy,
}

#[derive(Args)]
struct CircuitArgs {
    /// Circuit parameter JSON (`{"model": "ladder", "n": 50, ...}`).
    #[arg(long, conflicts_with_all = ["circuit", "n"])]
    params: Option<PathBuf>,
    #[arg(long, value_enum)]
    circuit: Option<Circuit>,
    /// Ladder size.
    #[arg(long)]
    n: Option<usize>,
}

impl CircuitArgs {
    fn resolve(&self, base: ModelParams) -> Result<ModelParams> {
        if let Some(p) = &self.params {
            return Ok(serde_json::from_str(&read(p)?)?);
        }
        let mut m = match self.circuit {
            Some(Circuit::Ladder) => ModelParams::Ladder(qbloewner::models::LadderParams::new(50)),
            Some(Circuit::Toy) => ModelParams::Toy(Default::default()),
            None => base,
        };
        if let Some(n) = self.n {
            match &mut m {
                ModelParams::Ladder(p) => p.n = n,
                ModelParams::Toy(_) => {
                    return Err(Error::InvalidParameter("--n only applies to the ladder".into()));
                }
            }
        }
        Ok(m)
    }
}

#[derive(Args)]
struct SimArgs {
    /// `const:A`, `expdecay:A,tau` or `twotone:A,w1,w2`.
    #[arg(long, default_value = "expdecay:0.01,1")]
    input: String,
    #[arg(long, default_value_t = 10.0)]
    t1: f64,
    #[arg(long, default_value_t = 1e-10)]
    rtol: f64,
    #[arg(long, default_value_t = 1e-12)]
    atol: f64,
    /// Output grid size.
    #[arg(long, default_value_t = 2001)]
    points: usize,
}

impl SimArgs {
    fn config(&self, keep_states: bool) -> IntegratorConfig<f64> {
        IntegratorConfig {
            rel_tol: self.rtol,
            abs_tol: self.atol,
            t1: self.t1,
            grid_points: Some(self.points),
            keep_states,
            ..Default::default()
        }
    }
}

#[derive(Args)]
struct PipelineArgs {
    /// Pipeline configuration JSON; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    circuit: CircuitArgs,
    /// Total H1 samples (frequencies and conjugates).
    #[arg(long)]
    h1_count: Option<usize>,
    #[arg(long)]
    w_lo: Option<f64>,
    #[arg(long)]
    w_hi: Option<f64>,
    #[arg(long)]
    m1: Option<usize>,
    #[arg(long)]
    m2: Option<usize>,
    #[arg(long)]
    loewner_tol: Option<f64>,
    #[arg(long)]
    tsvd_tol: Option<f64>,
    #[arg(long)]
    input: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl PipelineArgs {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut cfg: PipelineConfig = match &self.config {
            Some(p) => serde_json::from_str(&read(p)?)?,
            None => PipelineConfig::default(),
        };
        cfg.model = self.circuit.resolve(cfg.model)?;
        if let Some(k) = self.h1_count {
            cfg.h1.count = k;
        }
        for band in [&mut cfg.h1.band, &mut cfg.omega.band] {
            band.w_lo = self.w_lo.unwrap_or(band.w_lo);
            band.w_hi = self.w_hi.unwrap_or(band.w_hi);
        }
        cfg.omega.m1 = self.m1.unwrap_or(cfg.omega.m1);
        cfg.omega.m2 = self.m2.unwrap_or(cfg.omega.m2);
        cfg.loewner_tol = self.loewner_tol.unwrap_or(cfg.loewner_tol);
        cfg.tsvd_tol = self.tsvd_tol.unwrap_or(cfg.tsvd_tol);
        if let Some(u) = &self.input {
            cfg.sim.input = u.clone();
        }
        if let Some(o) = &self.out {
            cfg.output_dir = o.clone();
        }
        Ok(cfg)
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn write(dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, text)?;
    Ok(path)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    Ok(())
}

/// Something that can be integrated: a state-space model or a nonlinear circuit.
#[allow(clippy::large_enum_variant)]
enum Simulable {
    Qb(QbSystem<f64>),
    Circuit(NonlinearModel<f64>),
}

impl Simulable {
    fn load(path: &Path) -> Result<Self> {
        let text = read(path)?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        if value.get("model").is_some() {
            let params: ModelParams = serde_json::from_value(value)?;
            return Ok(Simulable::Circuit(params.nonlinear()?));
        }
        Ok(Simulable::Qb(io::model_from_json::<f64>(&text)?.into_qb()))
    }

    fn simulate(&self, u: InputSignal, cfg: &IntegratorConfig<f64>) -> Result<Trajectory<f64>> {
        let model: &dyn Dynamics<f64> = match self {
            Simulable::Qb(s) => s,
            Simulable::Circuit(m) => m,
        };
        integrate(model, |t| u.eval(t), &DVector::zeros(model.dim()), cfg)
    }
}

fn print(value: serde_json::Value) -> Result<()> {
    print!("{}", io::to_json(&value)?);
    Ok(())
}

fn cmd_sample(cfg: &PipelineConfig) -> Result<()> {
    cfg.validate()?;
    let truth = cfg.model.lifted()?;
    let m = experiment::measure(cfg, &truth)?;
    let dir = &cfg.output_dir;
    let h1 = write(dir, "h1_samples.csv", &io::h1_samples_to_csv(&m.h1))?;
    let h2 = write(dir, "h2_samples.csv", &io::h2_samples_to_csv(&m.h2))?;
    print(json!({
        "model": cfg.model.name(),
        "h1_samples": m.h1.len(),
        "h2_samples": m.h2.v.len(),
        "files": [h1, h2],
    }))
}

fn cmd_fit_linear(samples: &Path, tol: f64, rmax: Option<usize>, scheme: Scheme, out: &Path) -> Result<()> {
    let data = io::h1_samples_from_csv::<f64>(&read(samples)?)?;
    let scheme = match scheme {
        Scheme::Alternating => PartitionScheme::Alternating,
        Scheme::HalfSplit => PartitionScheme::HalfSplit,
    };
    let fit = fit_linear(&data, scheme, tol, rmax)?;
    let model = write(out, "linear_model.json", &io::linear_to_json(&fit.system)?)?;
    let sigma = write(out, "singular_values.csv", &io::sigma_to_csv(&fit.sigma))?;
    print(json!({
        "r": fit.r,
        "k": fit.sigma.len(),
        "sigma_next_rel": fit.sigma.get(fit.r).map_or(0.0, |s| s / fit.sigma[0]),
        "files": [model, sigma],
    }))
}

fn cmd_fit_qb(linear: &Path, samples: &Path, tol: f64, out: &Path) -> Result<()> {
    let lin = match io::model_from_json::<f64>(&read(linear)?)? {
        Model::Linear(l) => l,
        Model::Qb(q) => q.linear_part(),
    };
    let samples = io::h2_samples_from_csv::<f64>(&read(samples)?)?;
    let fit = fit_qb(&lin, &samples, &FitOptions { tsvd_tol: tol })?;
    let model = write(out, "qb_model.json", &io::qb_to_json(&fit.system)?)?;
    let diag = write(out, "diagnostics.json", &io::to_json(&fit.diagnostics)?)?;
    if fit.diagnostics.insufficient_data {
        eprintln!("warning: K < r^3 + r^2, the least-squares problem is underdetermined");
    }
    print(json!({
        "rank": fit.diagnostics.rank,
        "residual_rel": fit.diagnostics.residual_rel,
        "K": fit.diagnostics.k,
        "r": fit.diagnostics.r,
        "files": [model, diag],
    }))
}

fn cmd_lift(params: ModelParams, kind: LiftKind, out: &Path) -> Result<()> {
    let sys = match kind {
        LiftKind::Qb => params.lifted()?,
        LiftKind::Carleman => params.carleman()?,
    };
    let sys = sys.with_provenance(format!(
        "{} {}",
        params.name(),
        if kind == LiftKind::Qb { "lifted" } else { "carleman" }
    ));
    write_file(out, &io::qb_to_json(&sys)?)?;
    print(json!({ "n": sys.order(), "file": out }))
}

fn cmd_simulate(model: &Path, sim: &SimArgs, states: bool, out: &Path) -> Result<()> {
    let u: InputSignal = sim.input.parse()?;
    let traj = Simulable::load(model)?.simulate(u, &sim.config(states))?;
    write_file(out, &io::trajectory_to_csv(&traj, states))?;
    print(json!({
        "points": traj.t.len(),
        "steps": traj.steps,
        "rejected": traj.rejected,
        "overflow": traj.overflow,
        "file": out,
    }))
}

fn cmd_compare(a: &Path, b: &Path, sim: &SimArgs, out: &Path) -> Result<()> {
    let u: InputSignal = sim.input.parse()?;
    let cfg = sim.config(false);
    let ya = Simulable::load(a)?.simulate(u, &cfg)?;
    let yb = Simulable::load(b)?.simulate(u, &cfg)?;
    let (linf, l2) = output_error(&ya, &yb)?;
    write(out, "trajectory_a.csv", &io::trajectory_to_csv(&ya, false))?;
    write(out, "trajectory_b.csv", &io::trajectory_to_csv(&yb, false))?;
    let report = json!({
        "linf": linf,
        "l2": l2,
        "overflow": ya.overflow || yb.overflow,
        "input": u.to_string(),
    });
    write(out, "compare.json", &io::to_json(&report)?)?;
    print(report)
}

fn cmd_repro(cfg: &PipelineConfig) -> Result<()> {
    let o = experiment::run(cfg)?;
    let dir = &cfg.output_dir;
    write(dir, "config.json", &io::to_json(cfg)?)?;
    write(dir, "h1_samples.csv", &io::h1_samples_to_csv(&o.measurements.h1))?;
    write(dir, "h2_samples.csv", &io::h2_samples_to_csv(&o.measurements.h2))?;
    write(dir, "singular_values.csv", &io::sigma_to_csv(&o.linear.sigma))?;
    write(dir, "linear_model.json", &io::linear_to_json(&o.linear.system)?)?;
    write(dir, "qb_model.json", &io::qb_to_json(&o.qb.system)?)?;
    write(dir, "diagnostics.json", &io::to_json(&o.qb.diagnostics)?)?;
    write(dir, "trajectory_nonlinear.csv", &io::trajectory_to_csv(&o.y_nonlinear, false))?;
    write(dir, "trajectory_lifted.csv", &io::trajectory_to_csv(&o.y_lifted, false))?;
    write(dir, "trajectory_fitted.csv", &io::trajectory_to_csv(&o.y_fitted, false))?;
    write(dir, "report.json", &io::to_json(&o.report)?)?;
    print(serde_json::to_value(&o.report)?)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Sample(args) => cmd_sample(&args.resolve()?),
        Command::FitLinear {
            samples,
            tol,
            rmax,
            partition,
            out,
        } => cmd_fit_linear(&samples, tol, rmax, partition, &out),
        Command::FitQb {
            linear,
            samples,
            tol,
            out,
        } => cmd_fit_qb(&linear, &samples, tol, &out),
        Command::Lift { circuit, kind, out } => cmd_lift(circuit.resolve(ModelParams::default())?, kind, &out),
        Command::Simulate {
            model,
            sim,
            states,
            out,
        } => cmd_simulate(&model, &sim, states, &out),
        Command::Compare { a, b, sim, out } => cmd_compare(&a, &b, &sim, &out),
        Command::ReproPaper(args) => cmd_repro(&args.resolve()?),
    }
}

fn fail(kind: &str, message: String, code: u8) -> ExitCode {
    eprintln!("{}", json!({ "error": kind, "message": message }));
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("Usage", e.render().to_string().trim_end().to_string(), 2),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.kind(), e.to_string(), 1),
    }
}
