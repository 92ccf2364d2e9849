//! JSON and CSV report output.
//!
//! Reports are `serde_json` objects. The default map type keeps keys sorted,
//! which gives a stable key order. Every real is written with 17 significant
//! digits so a read-back reproduces the exact bits. Files are written to a
//! temporary sibling and renamed into place, so an interrupted or failed run
//! never leaves a partial report.

use std::io::{self, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde_json::ser::{Formatter, PrettyFormatter};
use serde_json::{json, Map, Value};
use stablepca::dual::{DualReport, DualStep};
use stablepca::mirrorprox::{SimplexWeights, SolveReport};
use stablepca::{Error, Result};

/// Matrices with either side above this are written to a sibling CSV and
/// referenced by file name.
pub const INLINE_LIMIT: usize = 64;

/// Formats `x` with 17 significant digits.
pub fn real(x: f64) -> String {
    format!("{x:.16e}")
}

/// Pretty printer that writes floats through [`real`].
struct ReportFormatter(PrettyFormatter<'static>);

impl Formatter for ReportFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        w.write_all(real(value).as_bytes())
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Serializes `value` as pretty JSON with 17-digit reals and a trailing newline.
pub fn to_json_bytes(value: &Value) -> Vec<u8> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, ReportFormatter(PrettyFormatter::new()));
    serde::Serialize::serialize(value, &mut ser).expect("serializing a Value into memory cannot fail");
    out.push(b'\n');
    out
}

fn io_err(path: &Path, source: io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_err(path, e))?;
    tmp.write_all(bytes).map_err(|e| io_err(path, e))?;
    tmp.as_file().sync_all().map_err(|e| io_err(path, e))?;
    tmp.persist(path).map_err(|e| io_err(path, e.error))?;
    Ok(())
}

/// One row per matrix row, comma separated, no header.
pub fn matrix_csv(m: &DMatrix<f64>) -> Vec<u8> {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| real(m[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out.into_bytes()
}

/// `report.json` + `tag` → `report.<tag>.csv` next to it.
pub fn sibling(path: &Path, tag: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "report".into());
    path.with_file_name(format!("{stem}.{tag}.csv"))
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// A JSON report plus the matrix CSVs that go with it.
pub struct Report {
    path: PathBuf,
    fields: Map<String, Value>,
    files: Vec<(PathBuf, DMatrix<f64>)>,
}

impl Report {
    pub fn new(path: &Path) -> Self {
        Report {
            path: path.to_path_buf(),
            fields: Map::new(),
            files: Vec::new(),
        }
    }

    pub fn set(&mut self, key: &str, value: Value) {
        self.fields.insert(key.to_string(), value);
    }

    /// Stores a matrix under `key`. Small matrices are inlined as nested
    /// arrays; large ones, or any with `export`, also go to
    /// `<stem>.<tag>.csv`. Large ones are then referenced by that file name
    /// instead of being inlined.
    pub fn matrix(&mut self, key: &str, tag: &str, m: &DMatrix<f64>, export: bool) {
        let large = m.nrows() > INLINE_LIMIT || m.ncols() > INLINE_LIMIT;
        let csv = sibling(&self.path, tag);
        let value = if large {
            json!({ "csv": file_name(&csv), "rows": m.nrows(), "cols": m.ncols() })
        } else {
            matrix_value(m)
        };
        if large || export {
            self.set(&format!("{key}_csv"), Value::String(file_name(&csv)));
            self.files.push((csv, m.clone()));
        }
        self.set(key, value);
    }

    pub fn value(&self) -> Value {
        Value::Object(self.fields.clone())
    }

    /// Writes the CSVs first, then the JSON, each atomically.
    pub fn write(&self) -> Result<()> {
        for (path, m) in &self.files {
            write_atomic(path, &matrix_csv(m))?;
        }
        write_atomic(&self.path, &to_json_bytes(&self.value()))
    }
}

pub fn matrix_value(m: &DMatrix<f64>) -> Value {
    Value::Array(
        (0..m.nrows())
            .map(|i| Value::from((0..m.ncols()).map(|j| m[(i, j)]).collect::<Vec<_>>()))
            .collect(),
    )
}

fn weights_value(w: &SimplexWeights) -> Value {
    Value::from(w.as_slice().to_vec())
}

fn trace_value(trace: &[(usize, f64)], name: &str) -> Value {
    Value::Array(
        trace
            .iter()
            .map(|(t, v)| {
                let mut row = Map::new();
                row.insert("iteration".into(), Value::from(*t));
                row.insert(name.into(), Value::from(*v));
                Value::Object(row)
            })
            .collect(),
    )
}

/// Fields of a Mirror-Prox run. Wall time is left out so reruns are
/// byte-identical. `P̂` and `M̂` are always exported as CSV.
pub fn add_solve_report(report: &mut Report, r: &SolveReport) {
    report.set("tau", r.tau.into());
    report.set("relaxed_value", r.relaxed_value.into());
    report.set("gap", r.gap.into());
    report.set("gap_trace", trace_value(&r.gap_trace, "gap"));
    report.set("per_source_ev", r.per_source_ev.clone().into());
    report.set("worst_case_ev", r.worst_case_ev.into());
    report.set("weights", weights_value(&r.omega_avg));
    report.set("eigengap", r.eigengap.into());
    report.set("tight", r.tight.into());
    report.set("classical", r.classical.into());
    report.set("iterations", r.iterations.into());
    report.set(
        "steps",
        match r.steps {
            Some(s) => json!({ "eta": s.eta, "eta_m": s.eta_m, "eta_omega": s.eta_omega }),
            None => Value::Null,
        },
    );
    report.set("rank", r.p_rounded.rank().into());
    report.matrix("p_rounded", "P", r.p_rounded.matrix(), true);
    report.matrix("m_avg", "M", r.m_avg.matrix(), true);
}

/// Fields of a dual mirror-descent run.
pub fn add_dual_report(report: &mut Report, r: &DualReport) {
    report.set("weights", weights_value(&r.omega_avg));
    report.set("phi_trace", trace_value(&r.phi_trace, "phi"));
    report.set("phi_at_avg", r.phi_at_avg.into());
    report.set("eigengap", r.eigengap.into());
    report.set("tight", r.tight.into());
    report.set("gap_tol", r.gap_tol.into());
    report.set("iterations", r.iterations.into());
    report.set(
        "step",
        match r.step {
            DualStep::Constant(eta) => json!({ "rule": "constant", "value": eta }),
            DualStep::InverseSqrt(c) => json!({ "rule": "inverse_sqrt", "value": c }),
        },
    );
    report.matrix("m_candidate", "candidate", r.m_candidate.matrix(), false);
}

/// Reads a report back.
pub fn read_report(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        row: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

/// Rebuilds a matrix field, following a CSV reference relative to the
/// report's directory.
pub fn read_matrix(report_path: &Path, value: &Value) -> Result<DMatrix<f64>> {
    let bad = || Error::InvalidArgument("malformed matrix field".into());
    if let Some(name) = value.get("csv").and_then(Value::as_str) {
        let path = report_path.with_file_name(name);
        return read_matrix_csv(&path);
    }
    let rows = value.as_array().ok_or_else(bad)?;
    let mut data = Vec::new();
    let mut ncols = None;
    for row in rows {
        let row = row.as_array().ok_or_else(bad)?;
        if *ncols.get_or_insert(row.len()) != row.len() {
            return Err(bad());
        }
        for x in row {
            data.push(x.as_f64().ok_or_else(bad)?);
        }
    }
    Ok(DMatrix::from_row_slice(rows.len(), ncols.unwrap_or(0), &data))
}

/// Parses a headerless CSV written by [`matrix_csv`].
pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut data = Vec::new();
    let mut rows = 0;
    let mut cols = 0;
    for (i, line) in text.lines().enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if i == 0 {
            cols = cells.len();
        } else if cells.len() != cols {
            return Err(Error::Shape(format!("{}: ragged row {}", path.display(), i + 1)));
        }
        for (j, c) in cells.iter().enumerate() {
            data.push(c.trim().parse::<f64>().map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                row: i + 1,
                column: j + 1,
                message: e.to_string(),
            })?);
        }
        rows += 1;
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}
