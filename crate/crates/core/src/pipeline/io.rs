//! CSV and JSON-lines input/output. Every writer replaces its file atomically.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Label};
use crate::error::{AwarError, Result};
use crate::pipeline::metrics::PerformanceCurve;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> AwarError + '_ {
    move |source| AwarError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> AwarError + '_ {
    move |source| AwarError::Csv {
        path: path.display().to_string(),
        source,
    }
}

/// Write `bytes` to a temporary file next to `path`, then rename it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(path))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| AwarError::Io {
        path: path.display().to_string(),
        source: e.error,
    })?;
    Ok(())
}

fn csv_bytes(path: &Path, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(csv_err(path))?;
    for row in rows {
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.into_inner().map_err(|e| AwarError::Io {
        path: path.display().to_string(),
        source: e.into_error(),
    })
}

/// Dataset CSV: columns `f0, f1, ...` and an optional trailing `label`.
///
/// Label cells are either all filled (`1` / `-1`) or all empty.
pub fn read_dataset_csv(path: &Path, id: &str) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err(path))?;
    let header = rdr.headers().map_err(csv_err(path))?.clone();
    let has_label = header.iter().next_back().is_some_and(|h| h.eq_ignore_ascii_case("label"));
    let d = header.len() - usize::from(has_label);
    if d == 0 {
        return Err(AwarError::InvalidData(format!("{}: no feature columns", path.display())));
    }
    let mut values = Vec::new();
    let mut labels: Vec<Option<Label>> = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        let row = line + 2;
        for j in 0..d {
            let cell = &rec[j];
            let v: f64 = cell.parse().map_err(|_| {
                AwarError::InvalidData(format!("{}:{row}: bad number {cell:?} in column {}", path.display(), j + 1))
            })?;
            values.push(v);
        }
        if has_label {
            let cell = &rec[d];
            labels.push(if cell.is_empty() {
                None
            } else {
                Some(Label::parse(cell).ok_or_else(|| {
                    AwarError::InvalidData(format!("{}:{row}: bad label {cell:?}", path.display()))
                })?)
            });
        }
    }
    let rows = values.len() / d;
    let x = DMatrix::from_row_slice(rows, d, &values);
    let filled = labels.iter().filter(|l| l.is_some()).count();
    let labels = if filled == 0 {
        None
    } else if filled == rows {
        Some(labels.into_iter().map(|l| l.expect("all filled")).collect())
    } else {
        return Err(AwarError::InvalidData(format!(
            "{}: {filled} of {rows} rows are labeled; label all rows or none",
            path.display()
        )));
    };
    Dataset::new(id, x, labels)
}

pub fn write_dataset_csv(path: &Path, data: &Dataset) -> Result<()> {
    let d = data.dim();
    let mut header: Vec<String> = (0..d).map(|j| format!("f{j}")).collect();
    let labels = data.labels();
    if labels.is_some() {
        header.push("label".into());
    }
    let x = data.features();
    let rows = (0..data.n_rows()).map(|i| {
        let mut r: Vec<String> = (0..d).map(|j| x[(i, j)].to_string()).collect();
        if let Some(l) = labels {
            r.push(l[i].to_string());
        }
        r
    });
    write_atomic(path, &csv_bytes(path, &header, rows)?)
}

/// One line of the per-point curves file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub algorithm: String,
    pub repeat: usize,
    pub m_l: usize,
    pub fpr: f64,
    pub fnr: f64,
    pub bca: f64,
}

/// One line of the per-curve summary file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub algorithm: String,
    pub repeat: usize,
    pub aupc: f64,
}

/// Points without a model are left out.
pub fn write_curves_csv(path: &Path, curves: &[PerformanceCurve]) -> Result<()> {
    let header: Vec<String> = ["algorithm", "repeat", "m_l", "fpr", "fnr", "bca"].map(String::from).to_vec();
    let rows = curves.iter().flat_map(|c| {
        c.points.iter().filter_map(move |p| {
            p.metrics.map(|m| {
                vec![
                    c.algorithm.clone(),
                    c.repeat.to_string(),
                    p.m_l.to_string(),
                    m.fpr.to_string(),
                    m.fnr.to_string(),
                    m.bca.to_string(),
                ]
            })
        })
    });
    write_atomic(path, &csv_bytes(path, &header, rows)?)
}

/// Curves with fewer than two present points have no area and are left out.
pub fn write_summary_csv(path: &Path, curves: &[PerformanceCurve]) -> Result<()> {
    let header: Vec<String> = ["algorithm", "repeat", "aupc"].map(String::from).to_vec();
    let rows = curves
        .iter()
        .filter_map(|c| c.aupc.map(|a| vec![c.algorithm.clone(), c.repeat.to_string(), a.to_string()]));
    write_atomic(path, &csv_bytes(path, &header, rows)?)
}

/// Per-curve areas for each value of a swept parameter.
pub fn write_sweep_csv(path: &Path, param: &str, runs: &[(f64, &[PerformanceCurve])]) -> Result<()> {
    let header: Vec<String> = ["param", "value", "algorithm", "repeat", "aupc"].map(String::from).to_vec();
    let rows = runs.iter().flat_map(|(value, curves)| {
        curves.iter().filter_map(move |c| {
            c.aupc
                .map(|a| vec![param.to_string(), value.to_string(), c.algorithm.clone(), c.repeat.to_string(), a.to_string()])
        })
    });
    write_atomic(path, &csv_bytes(path, &header, rows)?)
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err(path))?;
    rdr.deserialize().map(|r| r.map_err(csv_err(path))).collect()
}

pub fn read_curves_csv(path: &Path) -> Result<Vec<CurveRow>> {
    read_rows(path)
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRow>> {
    read_rows(path)
}

/// Column names of a CSV file's header.
pub fn read_header(path: &Path) -> Result<Vec<String>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err(path))?;
    Ok(rdr.headers().map_err(csv_err(path))?.iter().map(String::from).collect())
}

/// Write each record as one JSON object per line.
pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(|source| AwarError::Json {
            path: path.display().to_string(),
            source,
        })?;
        out.push(b'\n');
    }
    write_atomic(path, &out)
}
