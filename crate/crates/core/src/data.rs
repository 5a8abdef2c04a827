//! Feature matrices, datasets and CSV ingestion.
//!
//! A [`Dataset`] is a dense row-major feature matrix plus a response vector.
//! CSV files carry a header row; the response column is selected by name (or
//! defaults to the last column) and every other column must be numeric.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major matrix of finite features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(n_rows: usize, n_cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_rows * n_cols {
            return Err(Error::InvalidArgument(format!(
                "matrix data has {} values, expected {}x{}",
                data.len(),
                n_rows,
                n_cols
            )));
        }
        Ok(Self {
            n_rows,
            n_cols,
            data,
        })
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            data: vec![0.0; n_rows * n_cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * n_cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n_cols {
                return Err(Error::InvalidArgument(format!(
                    "row {i} has {} columns, expected {n_cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), n_cols, data)
    }

    #[inline]
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    #[inline]
    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n_cols + j] = v;
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.get(i, j)).collect()
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.n_cols.max(1)).take(self.n_rows)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Features, responses and column names.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Vec<f64>,
    pub feature_names: Vec<String>,
    pub target_name: String,
}

impl Dataset {
    pub fn new(x: Matrix, y: Vec<f64>, feature_names: Vec<String>, target_name: String) -> Result<Self> {
        if x.n_rows() != y.len() {
            return Err(Error::InvalidArgument(format!(
                "{} feature rows but {} responses",
                x.n_rows(),
                y.len()
            )));
        }
        if feature_names.len() != x.n_cols() {
            return Err(Error::InvalidArgument(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                x.n_cols()
            )));
        }
        Ok(Self {
            x,
            y,
            feature_names,
            target_name,
        })
    }

    /// Dataset with generated names `x1..xp` and target `y`.
    pub fn unnamed(x: Matrix, y: Vec<f64>) -> Result<Self> {
        let names = (1..=x.n_cols()).map(|j| format!("x{j}")).collect();
        Self::new(x, y, names, "y".to_string())
    }

    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    pub fn n_features(&self) -> usize {
        self.x.n_cols()
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        let p = self.n_features();
        let mut data = Vec::with_capacity(rows.len() * p);
        for &i in rows {
            data.extend_from_slice(self.x.row(i));
        }
        Dataset {
            x: Matrix::new(rows.len(), p, data).expect("consistent shape"),
            y: rows.iter().map(|&i| self.y[i]).collect(),
            feature_names: self.feature_names.clone(),
            target_name: self.target_name.clone(),
        }
    }

    pub fn read_csv_path(path: &Path, target: Option<&str>) -> Result<Dataset> {
        let file = std::fs::File::open(path)
            .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
        Self::read_csv(file, target)
    }

    /// Reads a headed CSV. Every cell must parse as a finite number.
    pub fn read_csv<R: Read>(reader: R, target: Option<&str>) -> Result<Dataset> {
        let (header, rows) = read_numeric_csv(reader)?;
        let target_idx = match target {
            Some(name) => header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Data(format!("target column '{name}' not found in header")))?,
            None => header
                .len()
                .checked_sub(1)
                .ok_or_else(|| Error::Data("CSV header is empty".into()))?,
        };
        let feature_names: Vec<String> = header
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != target_idx)
            .map(|(_, h)| h.clone())
            .collect();
        let p = feature_names.len();
        let mut data = Vec::with_capacity(rows.len() * p);
        let mut y = Vec::with_capacity(rows.len());
        for row in &rows {
            for (j, v) in row.iter().enumerate() {
                if j == target_idx {
                    y.push(*v);
                } else {
                    data.push(*v);
                }
            }
        }
        let x = Matrix::new(rows.len(), p, data)?;
        Dataset::new(x, y, feature_names, header[target_idx].clone())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = self.feature_names.clone();
        header.push(self.target_name.clone());
        w.write_record(&header).map_err(csv_err)?;
        for i in 0..self.n_rows() {
            let mut rec: Vec<String> = self.x.row(i).iter().map(|v| v.to_string()).collect();
            rec.push(self.y[i].to_string());
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_path(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Features only (no response), aligned to a set of expected names.
pub fn read_features_csv<R: Read>(reader: R, expected: &[String]) -> Result<Matrix> {
    let (header, rows) = read_numeric_csv(reader)?;
    let mut cols = Vec::with_capacity(expected.len());
    for name in expected {
        let j = header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Data(format!("feature '{name}' missing from input header")))?;
        cols.push(j);
    }
    let mut data = Vec::with_capacity(rows.len() * cols.len());
    for row in &rows {
        data.extend(cols.iter().map(|&j| row[j]));
    }
    Matrix::new(rows.len(), cols.len(), data)
}

fn read_numeric_csv<R: Read>(reader: R) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    if header.is_empty() {
        return Err(Error::Data("CSV header is empty".into()));
    }
    let mut rows = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        // header is line 1
        let line = r + 2;
        let rec = rec.map_err(|e| Error::Data(format!("row {line}: {e}")))?;
        if rec.len() != header.len() {
            return Err(Error::Data(format!(
                "row {line}: {} fields, header has {}",
                rec.len(),
                header.len()
            )));
        }
        let mut vals = Vec::with_capacity(rec.len());
        for (j, cell) in rec.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| {
                Error::Data(format!(
                    "row {line}, column '{}': non-numeric value '{cell}'",
                    header[j]
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::Data(format!(
                    "row {line}, column '{}': non-finite value '{cell}'",
                    header[j]
                )));
            }
            vals.push(v);
        }
        rows.push(vals);
    }
    if rows.is_empty() {
        return Err(Error::Data("CSV has no data rows".into()));
    }
    Ok((header, rows))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Data(e.to_string())
}
