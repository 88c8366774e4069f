use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{FieldBundle, Grid, GroundTruthEquation, Matrix};
use crate::error::DataError;

pub const MANIFEST_FILE: &str = "manifest.json";

/// On-disk description of a dataset directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub nx: usize,
    pub nt: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub fields: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<GroundTruthEquation>,
}

impl Manifest {
    pub fn grid(&self) -> Result<Grid, DataError> {
        Grid::new(
            self.nx,
            self.nt,
            (self.x_min, self.x_max),
            (self.t_min, self.t_max),
        )
    }

    pub fn read(dir: &Path) -> Result<Self, DataError> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|source| DataError::Io {
            path: path.clone(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| DataError::Manifest(e.to_string()))
    }
}

/// File name for a field: `/` is not allowed in file names.
pub fn field_file_name(name: &str) -> String {
    format!("{}.csv", name.replace('/', "_"))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> DataError + '_ {
    move |source| DataError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `bundle` into `dir` (created if needed): a manifest plus one CSV per
/// field with full round-trip precision.
pub fn save_bundle(bundle: &FieldBundle, dir: &Path) -> Result<(), DataError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let g = bundle.grid;
    let manifest = Manifest {
        nx: g.nx,
        nt: g.nt,
        x_min: g.x_min,
        x_max: g.x_max,
        t_min: g.t_min,
        t_max: g.t_max,
        fields: bundle.field_names().map(str::to_string).collect(),
        ground_truth: bundle.ground_truth.clone(),
    };
    let path = dir.join(MANIFEST_FILE);
    let text =
        serde_json::to_string_pretty(&manifest).map_err(|e| DataError::Manifest(e.to_string()))?;
    fs::write(&path, text + "\n").map_err(io_err(&path))?;

    for (name, m) in bundle.fields() {
        let path = dir.join(field_file_name(name));
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_path(&path)
            .map_err(csv_err(&path))?;
        for r in 0..m.rows() {
            // Debug formatting of f64 is the shortest exact round-trip form.
            w.write_record(m.row(r).iter().map(|v| format!("{v:?}")))
                .map_err(csv_err(&path))?;
        }
        w.flush().map_err(io_err(&path))?;
    }
    Ok(())
}

fn read_field(path: &PathBuf, name: &str, nt: usize, nx: usize) -> Result<Matrix, DataError> {
    if !path.is_file() {
        return Err(DataError::MissingField(path.clone()));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err(path))?;
    let mut data = Vec::with_capacity(nt * nx);
    let mut rows = 0;
    let mut bad_cols = None;
    for record in rdr.records() {
        let record = record.map_err(csv_err(path))?;
        if record.len() != nx && bad_cols.is_none() {
            bad_cols = Some(record.len());
        }
        for (col, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                DataError::Manifest(format!(
                    "unparseable number `{cell}` in {} row {rows}",
                    path.display()
                ))
            })?;
            if !v.is_finite() {
                return Err(DataError::NonFinite {
                    field: name.to_string(),
                    row: rows,
                    col,
                });
            }
            data.push(v);
        }
        rows += 1;
    }
    if rows != nt || bad_cols.is_some() {
        return Err(DataError::ShapeMismatch {
            field: name.to_string(),
            rows,
            cols: bad_cols.unwrap_or(nx),
            nt,
            nx,
        });
    }
    Ok(Matrix::from_vec(nt, nx, data))
}

/// Loads a dataset directory written by [`save_bundle`].
pub fn load_bundle(dir: &Path) -> Result<FieldBundle, DataError> {
    let manifest = Manifest::read(dir)?;
    let grid = manifest.grid()?;
    if let Some(truth) = &manifest.ground_truth {
        truth.validate()?;
    }
    let mut bundle = FieldBundle::new(grid);
    for name in &manifest.fields {
        let path = dir.join(field_file_name(name));
        let m = read_field(&path, name, grid.nt, grid.nx)?;
        bundle.insert(name.clone(), m)?;
    }
    bundle.ground_truth = manifest.ground_truth;
    Ok(bundle)
}
