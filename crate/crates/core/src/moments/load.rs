//! CSV ingestion for sample tables and moment matrices.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use super::{SecondMomentSet, SourceSamples};
use crate::error::{Error, Result};

/// Whether the first CSV record is a header row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HeaderMode {
    /// A first row in which no cell parses as a number is a header.
    #[default]
    Auto,
    Present,
    Absent,
}

/// Where the per-source samples live.
#[derive(Debug, Clone, PartialEq)]
pub enum SourceLayout {
    /// One CSV per source; the label is the file stem. A directory expands to
    /// every `*.csv` file inside it.
    PerFile(Vec<PathBuf>),
    /// One CSV with a label column naming the source of each row.
    SingleFile {
        path: PathBuf,
        source_column: String,
    },
}

struct Table {
    header: Option<Vec<String>>,
    rows: Vec<Vec<String>>,
    /// 1-based file line of each entry in `rows`.
    lines: Vec<usize>,
}

fn read_table(path: &Path, header: HeaderMode) -> Result<Table> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut records = Vec::new();
    let mut lines = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::io(path, std::io::Error::other(e.to_string())),
            _ => Error::Parse {
                path: path.to_path_buf(),
                row: e.position().map(|p| p.line() as usize).unwrap_or(i + 1),
                column: 0,
                message: e.to_string(),
            },
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(i + 1);
        let cells: Vec<String> = rec.iter().map(str::to_owned).collect();
        if cells.len() == 1 && cells[0].is_empty() {
            continue;
        }
        records.push(cells);
        lines.push(line);
    }
    let has_header = match header {
        HeaderMode::Present => true,
        HeaderMode::Absent => false,
        HeaderMode::Auto => records
            .first()
            .is_some_and(|r| r.iter().all(|c| c.parse::<f64>().is_err())),
    };
    let header = if has_header && !records.is_empty() {
        lines.remove(0);
        Some(records.remove(0))
    } else {
        None
    };
    Ok(Table {
        header,
        rows: records,
        lines,
    })
}

fn parse_cell(path: &Path, row: usize, column: usize, cell: &str) -> Result<f64> {
    let err = |message: String| Error::Parse {
        path: path.to_path_buf(),
        row,
        column,
        message,
    };
    let v: f64 = cell
        .parse()
        .map_err(|_| err(format!("non-numeric cell {cell:?}")))?;
    if !v.is_finite() {
        return Err(err(format!("non-finite cell {cell:?}")));
    }
    Ok(v)
}

fn numeric_rows(
    path: &Path,
    rows: &[Vec<String>],
    lines: &[usize],
    skip: Option<usize>,
) -> Result<DMatrix<f64>> {
    let width = rows.first().map(Vec::len).unwrap_or(0);
    let d = width - usize::from(skip.is_some());
    let mut values = Vec::with_capacity(rows.len() * d);
    for (r, line) in rows.iter().zip(lines) {
        if r.len() != width {
            return Err(Error::Shape(format!(
                "{}: line {line} has {} columns, expected {width}",
                path.display(),
                r.len()
            )));
        }
        for (c, cell) in r.iter().enumerate() {
            if Some(c) == skip {
                continue;
            }
            values.push(parse_cell(path, *line, c + 1, cell)?);
        }
    }
    Ok(DMatrix::from_row_slice(rows.len(), d, &values))
}

fn expand_paths(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let entries = std::fs::read_dir(p).map_err(|e| Error::io(p, e))?;
            let mut files = Vec::new();
            for entry in entries {
                let path = entry.map_err(|e| Error::io(p, e))?.path();
                if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
                    files.push(path);
                }
            }
            if files.is_empty() {
                return Err(Error::io(
                    p,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "no .csv files"),
                ));
            }
            out.extend(files);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Reads per-source sample tables. Sources are ordered lexicographically by
/// label.
pub fn load_sources(layout: &SourceLayout, header: HeaderMode) -> Result<SourceSamples> {
    let mut by_label: BTreeMap<String, DMatrix<f64>> = BTreeMap::new();
    match layout {
        SourceLayout::PerFile(paths) => {
            for path in expand_paths(paths)? {
                let table = read_table(&path, header)?;
                if table.rows.is_empty() {
                    return Err(Error::Shape(format!("{}: no data rows", path.display())));
                }
                let x = numeric_rows(&path, &table.rows, &table.lines, None)?;
                let mut label = stem(&path);
                // Same stem in two directories: keep both, disambiguated.
                while by_label.contains_key(&label) {
                    label.push('\'');
                }
                by_label.insert(label, x);
            }
        }
        SourceLayout::SingleFile {
            path,
            source_column,
        } => {
            let mode = if header == HeaderMode::Absent {
                return Err(Error::InvalidArgument(
                    "single-file mode needs a header row naming the source column".into(),
                ));
            } else {
                HeaderMode::Present
            };
            let table = read_table(path, mode)?;
            let names = table.header.unwrap_or_default();
            let col = names.iter().position(|h| h == source_column).ok_or_else(|| {
                Error::Shape(format!(
                    "{}: no column named {source_column:?}",
                    path.display()
                ))
            })?;
            let mut groups: BTreeMap<String, (Vec<Vec<String>>, Vec<usize>)> = BTreeMap::new();
            for (row, line) in table.rows.into_iter().zip(table.lines) {
                if row.len() != names.len() {
                    return Err(Error::Shape(format!(
                        "{}: line {line} has {} columns, expected {}",
                        path.display(),
                        row.len(),
                        names.len()
                    )));
                }
                let entry = groups.entry(row[col].clone()).or_default();
                entry.0.push(row);
                entry.1.push(line);
            }
            for (label, (rows, lines)) in groups {
                let x = numeric_rows(path, &rows, &lines, Some(col))?;
                by_label.insert(label, x);
            }
        }
    }
    let (labels, data) = by_label.into_iter().unzip();
    SourceSamples::new(labels, data)
}

/// Reads one `d × d` moment matrix per CSV file, ordered by label.
pub fn load_moment_matrices(paths: &[PathBuf], header: HeaderMode) -> Result<SecondMomentSet> {
    let mut by_label: BTreeMap<String, DMatrix<f64>> = BTreeMap::new();
    for path in expand_paths(paths)? {
        let table = read_table(&path, header)?;
        let m = numeric_rows(&path, &table.rows, &table.lines, None)?;
        if m.nrows() != m.ncols() {
            return Err(Error::Shape(format!(
                "{}: moment matrix is {}×{}",
                path.display(),
                m.nrows(),
                m.ncols()
            )));
        }
        by_label.insert(stem(&path), m);
    }
    let (labels, matrices) = by_label.into_iter().unzip();
    SecondMomentSet::new(labels, matrices, None)
}
