//! CSV and JSON readers and writers for grids, samples, measures, Gram
//! matrices and results. Numbers are written with 17 significant digits and
//! every file is written atomically through a temporary file in the target
//! directory.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

use crate::sampling::PowerRow;
use crate::spaces::{DiscreteMeasure, FunctionSample, Point, PointSpace, QuadratureGrid};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed file contents.
    #[error("{}:{line}: {msg}", path.display())]
    Parse { path: PathBuf, line: u64, msg: String },

    /// Well-formed contents that do not fit the kernel or space.
    #[error("{}: {msg}", path.display())]
    Data { path: PathBuf, msg: String },
}

pub type IoResult<T> = std::result::Result<T, IoError>;

fn io_err(path: &Path, source: std::io::Error) -> IoError {
    IoError::Io { path: path.to_path_buf(), source }
}

fn data_err(path: &Path, msg: impl std::fmt::Display) -> IoError {
    IoError::Data { path: path.to_path_buf(), msg: msg.to_string() }
}

/// Formats a float so that it parses back to the same value.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// A numeric CSV table with an optional header row.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Option<Vec<String>>,
    /// `(line number, values)` for each data row.
    pub rows: Vec<(u64, Vec<f64>)>,
}

impl Table {
    pub fn width(&self) -> Option<usize> {
        self.rows.first().map(|(_, r)| r.len())
    }
}

/// Reads a comma-separated numeric table. A first row whose first field is
/// not a number is taken as the header; blank lines are skipped and every
/// row must have the same number of fields.
pub fn read_table(path: &Path) -> IoResult<Table> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut header = None;
    let mut rows: Vec<(u64, Vec<f64>)> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            IoError::Parse { path: path.to_path_buf(), line, msg: e.to_string() }
        })?;
        let line = rec.position().map_or(i as u64 + 1, |p| p.line());
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        if i == 0 && rec.get(0).is_some_and(|f| f.parse::<f64>().is_err()) {
            header = Some(rec.iter().map(str::to_string).collect());
            continue;
        }
        let values = rec
            .iter()
            .map(|f| {
                f.parse::<f64>().map_err(|_| IoError::Parse {
                    path: path.to_path_buf(),
                    line,
                    msg: format!("'{f}' is not a number"),
                })
            })
            .collect::<IoResult<Vec<f64>>>()?;
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(IoError::Parse { path: path.to_path_buf(), line, msg: format!("non-finite value {bad}") });
        }
        if let Some((_, first)) = rows.first() {
            if first.len() != values.len() {
                return Err(IoError::Parse {
                    path: path.to_path_buf(),
                    line,
                    msg: format!("expected {} fields, found {}", first.len(), values.len()),
                });
            }
        }
        rows.push((line, values));
    }
    Ok(Table { header, rows })
}

fn require_header(path: &Path, table: &Table, expected: &[&str]) -> IoResult<()> {
    match &table.header {
        Some(h) if h.iter().map(String::as_str).ne(expected.iter().copied()) => Err(IoError::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: format!("expected header '{}', found '{}'", expected.join(","), h.join(",")),
        }),
        _ => Ok(()),
    }
}

/// Reads a quadrature grid from a `node,weight` CSV.
pub fn read_grid(path: &Path) -> IoResult<QuadratureGrid> {
    let table = read_table(path)?;
    require_header(path, &table, &["node", "weight"])?;
    if table.width().is_some_and(|w| w != 2) {
        return Err(IoError::Parse {
            path: path.to_path_buf(),
            line: table.rows[0].0,
            msg: "a grid row must be 'node,weight'".into(),
        });
    }
    let (nodes, weights) = table.rows.iter().map(|(_, r)| (r[0], r[1])).unzip();
    QuadratureGrid::new(nodes, weights).map_err(|e| data_err(path, e))
}

pub fn write_grid(path: &Path, grid: &QuadratureGrid) -> IoResult<()> {
    let mut s = String::from("node,weight\n");
    for (x, w) in grid.nodes().iter().zip(grid.weights()) {
        s.push_str(&format!("{},{}\n", fmt_f64(*x), fmt_f64(*w)));
    }
    write_atomic(path, s.as_bytes())
}

fn expect_width(path: &Path, table: &Table, width: usize, what: &str) -> IoResult<()> {
    match table.width() {
        Some(w) if w != width => Err(data_err(path, format!("{what} needs {width} columns per row, found {w}"))),
        _ => Ok(()),
    }
}

/// Reads a sample of points on `space`, one point per row. Vectors take `d`
/// columns, functions one column per grid node, and measures use long form
/// `id,x1,..,xd,weight` with the atoms of each measure sharing an id.
pub fn read_points(path: &Path, space: &PointSpace) -> IoResult<Vec<Point>> {
    let table = read_table(path)?;
    match space {
        PointSpace::Euclidean { dim } => {
            expect_width(path, &table, *dim, &format!("a point of {space}"))?;
            Ok(table.rows.into_iter().map(|(_, r)| Point::Vector(r)).collect())
        }
        PointSpace::FuncLp { grid, .. } => {
            expect_width(path, &table, grid.len(), "a function sampled on the grid")?;
            table
                .rows
                .into_iter()
                .map(|(line, r)| {
                    FunctionSample::new(grid.clone(), r)
                        .map(Point::Function)
                        .map_err(|e| IoError::Parse { path: path.to_path_buf(), line, msg: e.to_string() })
                })
                .collect()
        }
        PointSpace::MeasurePoints { base } => {
            let PointSpace::Euclidean { dim } = base.as_ref() else {
                return Err(data_err(path, format!("measure files are only supported over R^d, not {base}")));
            };
            expect_width(path, &table, dim + 2, "a measure atom 'id,x1..xd,weight'")?;
            let mut groups: Vec<(f64, Vec<Point>, Vec<f64>)> = Vec::new();
            for (_, r) in table.rows {
                let id = r[0];
                let atom = Point::Vector(r[1..=*dim].to_vec());
                let w = r[dim + 1];
                match groups.iter_mut().find(|g| g.0 == id) {
                    Some(g) => {
                        g.1.push(atom);
                        g.2.push(w);
                    }
                    None => groups.push((id, vec![atom], vec![w])),
                }
            }
            groups
                .into_iter()
                .map(|(id, pts, ws)| {
                    DiscreteMeasure::new(base.as_ref().clone(), pts, ws)
                        .map(Point::Measure)
                        .map_err(|e| data_err(path, format!("measure {id}: {e}")))
                })
                .collect()
        }
    }
}

/// Reads a single-column weight file with an optional `weight` header.
pub fn read_weights(path: &Path) -> IoResult<Vec<f64>> {
    let table = read_table(path)?;
    require_header(path, &table, &["weight"])?;
    expect_width(path, &table, 1, "a weight file")?;
    Ok(table.rows.into_iter().map(|(_, r)| r[0]).collect())
}

/// Reads a finitely supported measure. With a weight file the atoms are read
/// as in [`read_points`]; without one, points of `R^d` carry their weight in
/// an extra last column and other spaces get uniform weights.
pub fn read_measure(path: &Path, space: &PointSpace, weights: Option<&Path>) -> IoResult<DiscreteMeasure> {
    let (points, weights) = match (weights, space) {
        (Some(wp), _) => {
            let pts = read_points(path, space)?;
            let ws = read_weights(wp)?;
            if ws.len() != pts.len() {
                return Err(data_err(wp, format!("{} weights for {} atoms", ws.len(), pts.len())));
            }
            (pts, ws)
        }
        (None, PointSpace::Euclidean { dim }) => {
            let table = read_table(path)?;
            expect_width(path, &table, dim + 1, "a weighted atom 'x1..xd,weight'")?;
            table
                .rows
                .into_iter()
                .map(|(_, mut r)| {
                    let w = r.pop().expect("width checked");
                    (Point::Vector(r), w)
                })
                .unzip()
        }
        (None, _) => {
            let pts = read_points(path, space)?;
            let n = pts.len();
            (pts, vec![1.0 / n as f64; n])
        }
    };
    if points.is_empty() {
        return Err(data_err(path, "the measure has no atoms"));
    }
    DiscreteMeasure::new(space.clone(), points, weights).map_err(|e| data_err(path, e))
}

/// Writes `bytes` to a temporary file next to `path` and renames it over
/// `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> IoResult<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_err(path, e))?;
    tmp.write_all(bytes).map_err(|e| io_err(path, e))?;
    tmp.flush().map_err(|e| io_err(path, e))?;
    tmp.persist(path).map_err(|e| io_err(path, e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> IoResult<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| data_err(path, e))?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

/// Writes a matrix as CSV, one row per line and no header.
pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> IoResult<()> {
    let mut s = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| fmt_f64(m[(i, j)])).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    write_atomic(path, s.as_bytes())
}

pub fn read_matrix(path: &Path) -> IoResult<DMatrix<f64>> {
    let table = read_table(path)?;
    let ncols = table.width().unwrap_or(0);
    let data: Vec<f64> = table.rows.iter().flat_map(|(_, r)| r.iter().copied()).collect();
    Ok(DMatrix::from_row_slice(table.rows.len(), ncols, &data))
}

/// Writes per-observation scores followed by a `mean` row.
pub fn write_scores(path: &Path, scores: &[f64], mean: f64) -> IoResult<()> {
    let mut s = String::from("observation,score\n");
    for (i, v) in scores.iter().enumerate() {
        s.push_str(&format!("{i},{}\n", fmt_f64(*v)));
    }
    s.push_str(&format!("mean,{}\n", fmt_f64(mean)));
    write_atomic(path, s.as_bytes())
}

pub fn write_power(path: &Path, rows: &[PowerRow]) -> IoResult<()> {
    let mut s = String::from("shift,rejection_rate,trials,mc_stderr\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{}\n",
            fmt_f64(r.shift),
            fmt_f64(r.rejection_rate),
            r.trials,
            fmt_f64(r.mc_stderr)
        ));
    }
    write_atomic(path, s.as_bytes())
}
