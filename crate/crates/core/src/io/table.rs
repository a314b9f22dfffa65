use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::forward::{EchoVector, SamplingMask};
use crate::linalg::C64;
use crate::solvers::{IterationRecord, SolverTrace};

pub const RESULT_COLUMNS: [&str; 11] = [
    "method",
    "sr",
    "snr_db",
    "seed",
    "psnr_db",
    "ssim",
    "nmse",
    "iterations",
    "final_residual",
    "wall_seconds",
    "error",
];

pub const TRACE_COLUMNS: [&str; 6] = [
    "t",
    "residual",
    "data_fidelity",
    "prior",
    "cg_iterations",
    "wall_seconds",
];

const ECHO_COLUMNS: [&str; 3] = ["row", "re", "im"];

/// One line of the results table. Metric fields are NaN on failed cells and
/// `error` is empty on success.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub method: String,
    pub sr: f64,
    pub snr_db: f64,
    pub seed: u64,
    pub psnr_db: f64,
    pub ssim: f64,
    pub nmse: f64,
    pub iterations: usize,
    pub final_residual: f64,
    pub wall_seconds: f64,
    pub error: String,
}

impl ResultRow {
    pub fn failed(&self) -> bool {
        !self.error.is_empty()
    }

    /// Field-wise equality that treats NaN as equal to NaN.
    pub fn same_as(&self, other: &ResultRow) -> bool {
        let eq = |a: f64, b: f64| a == b || (a.is_nan() && b.is_nan());
        self.method == other.method
            && eq(self.sr, other.sr)
            && eq(self.snr_db, other.snr_db)
            && self.seed == other.seed
            && eq(self.psnr_db, other.psnr_db)
            && eq(self.ssim, other.ssim)
            && eq(self.nmse, other.nmse)
            && self.iterations == other.iterations
            && eq(self.final_residual, other.final_residual)
            && eq(self.wall_seconds, other.wall_seconds)
            && self.error == other.error
    }
}

/// Shortest exact decimal form in scientific notation, padded to at least six
/// significant digits. Parsing the output gives back the same `f64`.
pub fn format_number(v: f64) -> String {
    if !v.is_finite() {
        return if v.is_nan() {
            "NaN".into()
        } else if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let short = format!("{v:e}");
    let mantissa = short.split('e').next().unwrap_or("");
    let digits = mantissa.chars().filter(|c| c.is_ascii_digit()).count();
    if digits < 6 {
        format!("{v:.5e}")
    } else {
        short
    }
}

fn parse_f64(field: &str, line: usize, column: &str) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::Table(format!("line {line}, column `{column}`: bad number `{field}`")))
}

fn parse_int<T: std::str::FromStr>(field: &str, line: usize, column: &str) -> Result<T> {
    field
        .trim()
        .parse::<T>()
        .map_err(|_| Error::Table(format!("line {line}, column `{column}`: bad integer `{field}`")))
}

/// Writes through a sibling temp file and a rename, so readers never see a
/// partial file.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".part");
    let tmp = std::path::PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn to_csv(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::Table(e.to_string());
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(&r).map_err(err)?;
    }
    w.into_inner().map_err(|e| Error::Table(e.to_string()))
}

fn from_csv(path: &Path, header: &[&str]) -> Result<Vec<csv::StringRecord>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(bytes.as_slice());
    let got = r.headers().map_err(|e| Error::Table(e.to_string()))?.clone();
    if got.iter().ne(header.iter().copied()) {
        return Err(Error::Table(format!(
            "{}: expected header {:?}, found {:?}",
            path.display(),
            header,
            got.iter().collect::<Vec<_>>()
        )));
    }
    r.records()
        .map(|rec| rec.map_err(|e| Error::Table(format!("{}: {e}", path.display()))))
        .collect()
}

pub fn write_results(path: impl AsRef<Path>, rows: &[ResultRow]) -> Result<()> {
    let bytes = to_csv(
        &RESULT_COLUMNS,
        rows.iter().map(|r| {
            vec![
                r.method.clone(),
                format_number(r.sr),
                format_number(r.snr_db),
                r.seed.to_string(),
                format_number(r.psnr_db),
                format_number(r.ssim),
                format_number(r.nmse),
                r.iterations.to_string(),
                format_number(r.final_residual),
                format_number(r.wall_seconds),
                r.error.clone(),
            ]
        }),
    )?;
    write_atomic(path.as_ref(), &bytes)
}

pub fn read_results(path: impl AsRef<Path>) -> Result<Vec<ResultRow>> {
    let records = from_csv(path.as_ref(), &RESULT_COLUMNS)?;
    records
        .iter()
        .enumerate()
        .map(|(i, rec)| {
            let line = i + 2;
            let f = |k: usize| parse_f64(&rec[k], line, RESULT_COLUMNS[k]);
            Ok(ResultRow {
                method: rec[0].to_string(),
                sr: f(1)?,
                snr_db: f(2)?,
                seed: parse_int(&rec[3], line, "seed")?,
                psnr_db: f(4)?,
                ssim: f(5)?,
                nmse: f(6)?,
                iterations: parse_int(&rec[7], line, "iterations")?,
                final_residual: f(8)?,
                wall_seconds: f(9)?,
                error: rec[10].to_string(),
            })
        })
        .collect()
}

pub fn write_trace(path: impl AsRef<Path>, trace: &SolverTrace) -> Result<()> {
    let bytes = to_csv(
        &TRACE_COLUMNS,
        trace.records.iter().map(|r| {
            vec![
                r.t.to_string(),
                format_number(r.residual),
                format_number(r.data_fidelity),
                r.prior.map(format_number).unwrap_or_default(),
                r.cg_iterations.to_string(),
                format_number(r.wall_seconds),
            ]
        }),
    )?;
    write_atomic(path.as_ref(), &bytes)
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<SolverTrace> {
    let records = from_csv(path.as_ref(), &TRACE_COLUMNS)?;
    let records = records
        .iter()
        .enumerate()
        .map(|(i, rec)| {
            let line = i + 2;
            Ok(IterationRecord {
                t: parse_int(&rec[0], line, "t")?,
                residual: parse_f64(&rec[1], line, "residual")?,
                data_fidelity: parse_f64(&rec[2], line, "data_fidelity")?,
                prior: if rec[3].is_empty() {
                    None
                } else {
                    Some(parse_f64(&rec[3], line, "prior")?)
                },
                cg_iterations: parse_int(&rec[4], line, "cg_iterations")?,
                wall_seconds: parse_f64(&rec[5], line, "wall_seconds")?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SolverTrace { records })
}

/// Writes a (possibly subsampled) echo with the full-aperture row index of
/// every sample, so the sampling mask is recoverable from the file.
pub fn write_echo(path: impl AsRef<Path>, echo: &EchoVector, mask: &SamplingMask) -> Result<()> {
    if mask.kept_rows.len() != echo.len() {
        return Err(Error::invalid(format!(
            "mask keeps {} rows, echo has {}",
            mask.kept_rows.len(),
            echo.len()
        )));
    }
    let bytes = to_csv(
        &ECHO_COLUMNS,
        mask.kept_rows.iter().zip(&echo.values).map(|(row, v)| {
            vec![row.to_string(), format_number(v.re), format_number(v.im)]
        }),
    )?;
    write_atomic(path.as_ref(), &bytes)
}

/// Reads an echo file back as the kept row indices and the sample values.
pub fn read_echo(path: impl AsRef<Path>) -> Result<(Vec<usize>, EchoVector)> {
    let records = from_csv(path.as_ref(), &ECHO_COLUMNS)?;
    let mut rows = Vec::with_capacity(records.len());
    let mut values = Vec::with_capacity(records.len());
    for (i, rec) in records.iter().enumerate() {
        let line = i + 2;
        rows.push(parse_int(&rec[0], line, "row")?);
        values.push(C64::new(
            parse_f64(&rec[1], line, "re")?,
            parse_f64(&rec[2], line, "im")?,
        ));
    }
    Ok((rows, EchoVector::new(values)))
}
