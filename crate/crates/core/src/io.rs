//! JSON model files and the CSV sample, spectrum and trajectory formats.
//!
//! Every float is written with 17 significant digits, so a write/read cycle is
//! lossless and repeated runs produce identical bytes.

use std::io;

use nalgebra::{DMatrix, DVector, RowDVector};
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qbfit::{KernelSamples, SampleGrid};
use crate::scalar::{lit, to_f64, Real};
use crate::sim::Trajectory;
use crate::system::{ComplexSample, LinearSystem, QbSystem, StateSpace};

/// `x` with 17 significant digits; non-finite values as `NaN`/`inf`/`-inf`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// serde_json formatter printing floats with [`fmt_f64`] (non-finite as `null`).
#[derive(Default)]
struct FixedDigits(serde_json::ser::PrettyFormatter<'static>);

impl serde_json::ser::Formatter for FixedDigits {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            w.write_all(fmt_f64(value).as_bytes())
        } else {
            w.write_all(b"null")
        }
    }
    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Pretty-printed JSON with 17-digit floats.
pub fn to_json<S: Serialize + ?Sized>(value: &S) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FixedDigits::default());
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

/// On-disk model: dense row-major matrices. `Q` and `N` are absent for
/// linear models; a bilinear model may omit `Q` alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDoc {
    pub n: usize,
    #[serde(rename = "E")]
    pub e: Vec<f64>,
    #[serde(rename = "A")]
    pub a: Vec<f64>,
    #[serde(rename = "Q", default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<f64>>,
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub bilinear: Option<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<f64>,
    #[serde(rename = "C")]
    pub c: Vec<f64>,
    #[serde(default)]
    pub symmetric: bool,
    #[serde(default)]
    pub provenance: String,
}

/// A model read from disk.
#[derive(Debug, Clone)]
pub enum Model<T: Real> {
    Linear(LinearSystem<T>),
    Qb(QbSystem<T>),
}

impl<T: Real> Model<T> {
    pub fn order(&self) -> usize {
        match self {
            Model::Linear(s) => s.order(),
            Model::Qb(s) => s.order(),
        }
    }

    /// The model as a QB system (zero nonlinear operators for linear models).
    pub fn into_qb(self) -> QbSystem<T> {
        match self {
            Model::Linear(s) => QbSystem::from_linear(&s),
            Model::Qb(s) => s,
        }
    }

    pub fn provenance(&self) -> &str {
        match self {
            Model::Linear(s) => s.provenance(),
            Model::Qb(s) => s.provenance(),
        }
    }
}

fn rowmajor<T: Real>(m: &DMatrix<T>) -> Vec<f64> {
    m.row_iter().flat_map(|r| r.iter().map(|x| to_f64(*x)).collect::<Vec<_>>()).collect()
}

fn matrix<T: Real>(what: &'static str, data: &[f64], rows: usize, cols: usize) -> Result<DMatrix<T>> {
    if data.len() != rows * cols {
        return Err(crate::error::shape_err(what, rows * cols, data.len()));
    }
    Ok(DMatrix::from_row_iterator(rows, cols, data.iter().map(|&x| lit::<T>(x))))
}

impl ModelDoc {
    pub fn from_linear<T: Real>(sys: &LinearSystem<T>) -> Self {
        Self {
            n: sys.order(),
            e: rowmajor(sys.e()),
            a: rowmajor(sys.a()),
            q: None,
            bilinear: None,
            b: sys.b().iter().map(|x| to_f64(*x)).collect(),
            c: sys.c().iter().map(|x| to_f64(*x)).collect(),
            symmetric: true,
            provenance: sys.provenance().to_string(),
        }
    }

    pub fn from_qb<T: Real>(sys: &QbSystem<T>) -> Self {
        Self {
            n: sys.order(),
            e: rowmajor(sys.e()),
            a: rowmajor(sys.a()),
            q: sys.q().map(rowmajor),
            bilinear: Some(rowmajor(sys.bilinear())),
            b: sys.b().iter().map(|x| to_f64(*x)).collect(),
            c: sys.c().iter().map(|x| to_f64(*x)).collect(),
            symmetric: sys.is_symmetric(),
            provenance: sys.provenance().to_string(),
        }
    }

    pub fn to_model<T: Real>(&self) -> Result<Model<T>> {
        let n = self.n;
        let e = matrix("E", &self.e, n, n)?;
        let a = matrix("A", &self.a, n, n)?;
        let b: DVector<T> = matrix("B", &self.b, n, 1)?.column(0).into_owned();
        let c: RowDVector<T> = matrix("C", &self.c, 1, n)?.row(0).into_owned();
        match (&self.q, &self.bilinear) {
            (None, None) => Ok(Model::Linear(
                LinearSystem::new(e, a, b, c)?.with_provenance(self.provenance.clone()),
            )),
            (q, bil) => {
                let q = q.as_ref().map(|q| matrix("Q", q, n, n * n)).transpose()?;
                let bil = match bil {
                    Some(bil) => matrix("N", bil, n, n)?,
                    None => DMatrix::zeros(n, n),
                };
                let sys = QbSystem::new(e, a, q, bil, b, c)?.with_provenance(self.provenance.clone());
                if self.symmetric && !sys.is_symmetric() {
                    return Err(Error::Parse("model is flagged symmetric but Q is not".into()));
                }
                Ok(Model::Qb(sys))
            }
        }
    }
}

pub fn linear_to_json<T: Real>(sys: &LinearSystem<T>) -> Result<String> {
    to_json(&ModelDoc::from_linear(sys))
}

pub fn qb_to_json<T: Real>(sys: &QbSystem<T>) -> Result<String> {
    to_json(&ModelDoc::from_qb(sys))
}

pub fn model_from_json<T: Real>(text: &str) -> Result<Model<T>> {
    serde_json::from_str::<ModelDoc>(text)?.to_model()
}

/// Numeric CSV body after checking that the header starts with `header`.
/// `#` comment lines are skipped.
fn csv_rows(text: &str, header: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let head = rdr.headers().map_err(csv_err)?.clone();
    if head.len() < header.len() || head.iter().zip(header).any(|(a, b)| a != *b) {
        return Err(Error::Parse(format!(
            "expected CSV header starting with '{}', found '{}'",
            header.join(","),
            head.iter().collect::<Vec<_>>().join(",")
        )));
    }
    rdr.records()
        .map(|rec| {
            let rec = rec.map_err(csv_err)?;
            rec.iter()
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|e| Error::Parse(format!("line {}: {e}", rec.position().map_or(0, |p| p.line()))))
                })
                .collect()
        })
        .collect()
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::Writer::from_writer(Vec::new())
}

fn push_row(w: &mut csv::Writer<Vec<u8>>, fields: &[f64]) {
    w.write_record(fields.iter().map(|x| fmt_f64(*x))).expect("in-memory write");
}

fn finish(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("in-memory write")).expect("CSV of ASCII fields")
}

/// First-kernel samples on the imaginary axis: `im_s,re_H,im_H`.
pub fn h1_samples_to_csv<T: Real>(samples: &[ComplexSample<T>]) -> String {
    let mut w = csv_writer();
    w.write_record(["im_s", "re_H", "im_H"]).expect("in-memory write");
    for smp in samples {
        push_row(&mut w, &[to_f64(smp.s.im), to_f64(smp.value.re), to_f64(smp.value.im)]);
    }
    finish(w)
}

pub fn h1_samples_from_csv<T: Real>(text: &str) -> Result<Vec<ComplexSample<T>>> {
    csv_rows(text, &["im_s", "re_H", "im_H"])?
        .into_iter()
        .map(|r| {
            Ok(ComplexSample::new(
                Complex::new(T::zero(), lit(r[0])),
                Complex::new(lit(r[1]), lit(r[2])),
            ))
        })
        .collect()
}

/// Singular values: `index,sigma,sigma_rel` (1-based index).
pub fn sigma_to_csv<T: Real>(sigma: &[T]) -> String {
    let mut w = csv_writer();
    w.write_record(["index", "sigma", "sigma_rel"]).expect("in-memory write");
    let s1 = sigma.first().map_or(0.0, |s| to_f64(*s));
    for (i, s) in sigma.iter().enumerate() {
        let s = to_f64(*s);
        let rel = if s1 > 0.0 { s / s1 } else { 0.0 };
        w.write_record([(i + 1).to_string(), fmt_f64(s), fmt_f64(rel)])
            .expect("in-memory write");
    }
    finish(w)
}

/// Second-kernel samples: `re_s1,im_s1,re_s2,im_s2,re_H2,im_H2`.
pub fn h2_samples_to_csv<T: Real>(samples: &KernelSamples<T>) -> String {
    let mut w = csv_writer();
    w.write_record(["re_s1", "im_s1", "re_s2", "im_s2", "re_H2", "im_H2"])
        .expect("in-memory write");
    for ((z1, z2), v) in samples.grid.pairs.iter().zip(&samples.v) {
        push_row(&mut w, &[z1.re, z1.im, z2.re, z2.im, v.re, v.im].map(to_f64));
    }
    finish(w)
}

pub fn h2_samples_from_csv<T: Real>(text: &str) -> Result<KernelSamples<T>> {
    let rows = csv_rows(text, &["re_s1", "im_s1", "re_s2", "im_s2", "re_H2", "im_H2"])?;
    let c = |re: f64, im: f64| Complex::new(lit::<T>(re), lit::<T>(im));
    let pairs = rows.iter().map(|r| (c(r[0], r[1]), c(r[2], r[3]))).collect();
    let v = rows.iter().map(|r| c(r[4], r[5])).collect();
    KernelSamples::new(SampleGrid::new(pairs)?, v)
}

/// Trajectory: `t,y` plus `x_1..x_n` when states were kept and `with_states` is set.
pub fn trajectory_to_csv<T: Real>(traj: &Trajectory<T>, with_states: bool) -> String {
    let states = traj.x.as_ref().filter(|_| with_states);
    let mut w = csv_writer();
    let mut head = vec!["t".to_string(), "y".to_string()];
    if let Some(x) = states.and_then(|x| x.first()) {
        head.extend((1..=x.len()).map(|i| format!("x_{i}")));
    }
    w.write_record(&head).expect("in-memory write");
    let mut row = Vec::new();
    for (k, (t, y)) in traj.t.iter().zip(&traj.y).enumerate() {
        row.clear();
        row.push(to_f64(*t));
        row.push(to_f64(*y));
        if let Some(xs) = states {
            row.extend(xs[k].iter().map(|v| to_f64(*v)));
        }
        push_row(&mut w, &row);
    }
    finish(w)
}
