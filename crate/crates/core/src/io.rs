//! File formats: CSV data, label files and the JSON documents.
//!
//! CSV is comma separated with `.` decimals and at most one header row.
//! Values are written with 17 significant digits so they re-read exactly.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::GmmParams;
use crate::moments::MomentSet;
use crate::symtensor::SymmetricTensor;
use crate::waring::Decomposition;

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

pub fn write_string(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
        }
    }
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

/// Parsed CSV matrix with its header, if one was present.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvData {
    pub header: Option<Vec<String>>,
    pub data: DMatrix<f64>,
}

/// Parses CSV text. A first row that does not parse as numbers is taken as
/// the header.
pub fn parse_csv(text: &str) -> Result<CsvData> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut header = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse(e.to_string()))?;
        let line = record.position().map_or(idx as u64 + 1, |p| p.line());
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        let values = match parsed {
            Ok(v) => v,
            Err(_) if idx == 0 => {
                header = Some(record.iter().map(str::to_string).collect::<Vec<_>>());
                width = Some(record.len());
                continue;
            }
            Err(e) => return Err(Error::Parse(format!("line {line}: {e}"))),
        };
        if let Some(w) = width {
            if values.len() != w {
                return Err(Error::Parse(format!(
                    "line {line}: expected {w} fields, found {}",
                    values.len()
                )));
            }
        } else {
            width = Some(values.len());
        }
        if let Some(bad) = values.iter().position(|x| !x.is_finite()) {
            return Err(Error::Parse(format!("line {line}: non-finite value in column {}", bad + 1)));
        }
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(Error::Parse("no data rows".into()));
    }
    let m = rows[0].len();
    let data = DMatrix::from_fn(rows.len(), m, |i, j| rows[i][j]);
    Ok(CsvData { header, data })
}

pub fn read_csv(path: &Path) -> Result<CsvData> {
    parse_csv(&read_to_string(path)?)
}

pub fn format_value(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn csv_string(data: &DMatrix<f64>, header: Option<&[String]>) -> String {
    let mut out = String::new();
    if let Some(h) = header {
        out.push_str(&h.join(","));
        out.push('\n');
    }
    for row in data.row_iter() {
        let fields: Vec<String> = row.iter().map(|&x| format_value(x)).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn write_csv(path: &Path, data: &DMatrix<f64>, header: Option<&[String]>) -> Result<()> {
    write_string(path, &csv_string(data, header))
}

/// One 0-based integer label per line.
pub fn parse_labels(text: &str) -> Result<Vec<usize>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim()
                .parse::<usize>()
                .map_err(|e| Error::Parse(format!("label line {}: {e}", i + 1)))
        })
        .collect()
}

pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    parse_labels(&read_to_string(path)?)
}

pub fn labels_string(labels: &[usize]) -> String {
    let mut out = String::with_capacity(labels.len() * 2);
    for l in labels {
        out.push_str(&l.to_string());
        out.push('\n');
    }
    out
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("plain data serialises")
}

fn from_json<'a, T: Deserialize<'a>>(text: &'a str, what: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse(format!("{what}: {e}")))
}

#[derive(Serialize, Deserialize)]
struct TensorDoc {
    dim: usize,
    order: usize,
    coeffs: Vec<f64>,
}

pub fn tensor_to_json(t: &SymmetricTensor) -> String {
    to_json(t)
}

pub fn tensor_from_json(text: &str) -> Result<SymmetricTensor> {
    let doc: TensorDoc = from_json(text, "tensor")?;
    SymmetricTensor::from_coeffs(doc.dim, doc.order, doc.coeffs)
}

pub fn params_to_json(p: &GmmParams) -> String {
    to_json(p)
}

pub fn params_from_json(text: &str) -> Result<GmmParams> {
    let p: GmmParams = from_json(text, "mixture parameters")?;
    p.validate()?;
    Ok(p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionDoc {
    pub weights: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub residual: f64,
}

impl From<&Decomposition> for DecompositionDoc {
    fn from(d: &Decomposition) -> Self {
        Self {
            weights: d.waring.weights.clone(),
            points: d.waring.points.clone(),
            residual: d.residual,
        }
    }
}

pub fn decomposition_to_json(d: &Decomposition) -> String {
    to_json(&DecompositionDoc::from(d))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentsDoc {
    pub sigma_bar_sq: f64,
    pub v: Vec<f64>,
    pub m1: Vec<f64>,
    pub m2: Vec<Vec<f64>>,
    pub m3: SymmetricTensor,
}

impl From<&MomentSet> for MomentsDoc {
    fn from(ms: &MomentSet) -> Self {
        Self {
            sigma_bar_sq: ms.sigma_bar_sq,
            v: ms.v.clone(),
            m1: ms.m1.clone(),
            m2: ms
                .m2
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect(),
            m3: ms.m3.clone(),
        }
    }
}

pub fn moments_to_json(ms: &MomentSet) -> String {
    to_json(&MomentsDoc::from(ms))
}

/// Writes `contents` to `path`, or to stdout when `path` is `None`.
pub fn emit(path: Option<&Path>, contents: &str) -> Result<()> {
    match path {
        Some(p) => write_string(p, contents),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(contents.as_bytes())
                .and_then(|_| if contents.ends_with('\n') { Ok(()) } else { stdout.write_all(b"\n") })
                .map_err(|e| io_err(Path::new("<stdout>"), e))
        }
    }
}
