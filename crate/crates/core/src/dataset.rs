//! Point sets, standardization and CSV ingestion.

use std::io::Read;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// An `n × d` point set (one point per row) together with the per-feature
/// statistics used to standardize it.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    points: DMatrix<f64>,
    feature_means: Vec<f64>,
    feature_stds: Vec<f64>,
}

impl Dataset {
    /// Wraps points as-is (means 0, stds 1 recorded).
    pub fn new(points: DMatrix<f64>) -> Result<Self> {
        check_shape_and_finite(&points, 1)?;
        let d = points.ncols();
        Ok(Self {
            points,
            feature_means: vec![0.0; d],
            feature_stds: vec![1.0; d],
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(rows_to_matrix(rows)?)
    }

    pub fn n(&self) -> usize {
        self.points.nrows()
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn points(&self) -> &DMatrix<f64> {
        &self.points
    }

    pub fn point(&self, i: usize) -> Vec<f64> {
        self.points.row(i).iter().copied().collect()
    }

    pub fn feature_means(&self) -> &[f64] {
        &self.feature_means
    }

    pub fn feature_stds(&self) -> &[f64] {
        &self.feature_stds
    }

    /// Rows permuted so that row `i` of the result is row `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let points = DMatrix::from_fn(self.n(), self.dim(), |i, j| self.points[(perm[i], j)]);
        Self {
            points,
            feature_means: self.feature_means.clone(),
            feature_stds: self.feature_stds.clone(),
        }
    }
}

fn check_shape_and_finite(points: &DMatrix<f64>, min_rows: usize) -> Result<()> {
    if points.nrows() < min_rows || points.ncols() == 0 {
        return Err(Error::DataQuality(format!(
            "need at least {min_rows} row(s) and 1 column, got {}x{}",
            points.nrows(),
            points.ncols()
        )));
    }
    if let Some(pos) = points.iter().position(|v| !v.is_finite()) {
        // column-major storage
        let (r, c) = (pos % points.nrows(), pos / points.nrows());
        return Err(Error::DataQuality(format!(
            "non-finite value at row {r}, column {c}"
        )));
    }
    Ok(())
}

fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let d = rows.first().map_or(0, Vec::len);
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != d) {
        return Err(Error::DataQuality(format!(
            "row {i} has {} columns, expected {d}",
            r.len()
        )));
    }
    Ok(DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]))
}

/// Centers every column and scales it to unit population variance.
///
/// Constant columns become zero columns and record a standard deviation of 1.
pub fn standardize(raw: &DMatrix<f64>) -> Result<Dataset> {
    check_shape_and_finite(raw, 2)?;
    let (n, d) = raw.shape();
    let mut points = raw.clone();
    let mut means = Vec::with_capacity(d);
    let mut stds = Vec::with_capacity(d);
    for j in 0..d {
        let col = raw.column(j);
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        let std = var.sqrt();
        // Scale-aware constant test: differences below rounding of the mean are noise.
        let constant = std <= f64::EPSILON * mean.abs().max(f64::MIN_POSITIVE) * 4.0 || std == 0.0;
        let std = if constant { 1.0 } else { std };
        for i in 0..n {
            points[(i, j)] = if constant { 0.0 } else { (raw[(i, j)] - mean) / std };
        }
        means.push(mean);
        stds.push(std);
    }
    Ok(Dataset {
        points,
        feature_means: means,
        feature_stds: stds,
    })
}

/// Which column, if any, to discard while reading a CSV file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DropColumn {
    Index(usize),
    Name(String),
}

impl std::str::FromStr for DropColumn {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.trim().parse::<usize>() {
            Ok(i) => DropColumn::Index(i),
            Err(_) => DropColumn::Name(s.trim().to_string()),
        })
    }
}

/// Raw numeric table read from CSV, before standardization.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub header: Option<Vec<String>>,
    pub values: DMatrix<f64>,
}

fn parse_field(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok()
}

/// Parses a comma-separated numeric matrix, one point per row.
///
/// A header is detected when any field of the first record is not numeric.
/// Blank lines are skipped. Non-finite numbers are accepted here and rejected by
/// [`standardize`].
pub fn parse_csv<R: Read>(reader: R, drop: Option<&DropColumn>) -> Result<CsvTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);

    let mut header: Option<Vec<String>> = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;
    let mut drop_idx: Option<usize> = match drop {
        Some(DropColumn::Index(i)) => Some(*i),
        _ => None,
    };

    for (line, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::Parse(format!("csv: {e}")))?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let is_first = header.is_none() && rows.is_empty();
        if is_first && record.iter().any(|f| parse_field(f).is_none()) {
            let names: Vec<String> = record.iter().map(str::to_string).collect();
            if let Some(DropColumn::Name(name)) = drop {
                drop_idx = Some(names.iter().position(|h| h == name).ok_or_else(|| {
                    Error::Parse(format!("drop column `{name}` not found in header"))
                })?);
            }
            width = Some(names.len());
            header = Some(names);
            continue;
        }
        let w = *width.get_or_insert(record.len());
        if record.len() != w {
            return Err(Error::Parse(format!(
                "record {line} has {} fields, expected {w}",
                record.len()
            )));
        }
        let mut row = Vec::with_capacity(w);
        for (j, field) in record.iter().enumerate() {
            if Some(j) == drop_idx {
                continue;
            }
            let v = parse_field(field).ok_or_else(|| {
                Error::Parse(format!("record {line}, field {j}: `{field}` is not a number"))
            })?;
            row.push(v);
        }
        rows.push(row);
    }

    if let (Some(DropColumn::Name(name)), None) = (drop, &header) {
        return Err(Error::Parse(format!(
            "drop column `{name}` given by name but the file has no header"
        )));
    }
    if let (Some(i), Some(w)) = (drop_idx, width) {
        if i >= w {
            return Err(Error::Parse(format!("drop column {i} out of range for {w} columns")));
        }
    }
    if rows.is_empty() {
        return Err(Error::DataQuality("csv contains no data rows".into()));
    }
    let header = header.map(|mut h| {
        if let Some(i) = drop_idx {
            h.remove(i);
        }
        h
    });
    Ok(CsvTable {
        header,
        values: rows_to_matrix(&rows)?,
    })
}

/// Reads and standardizes a CSV dataset.
pub fn load_csv(path: &Path, drop: Option<&DropColumn>) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    let table = parse_csv(std::io::BufReader::new(file), drop)?;
    standardize(&table.values)
}
