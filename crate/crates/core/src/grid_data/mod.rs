//! Gridded field data: benchmark generation, dataset IO and a finite
//! difference fallback for externally supplied fields.

mod finite_diff;
mod io;
mod jet;
mod manufactured;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::DataError;

pub use finite_diff::{finite_difference_fields, stencil_weights};
pub use io::{field_file_name, load_bundle, save_bundle, Manifest};
pub use manufactured::{generate_differenced, generate_manufactured, kdv_soliton, ProblemId};

/// Canonical token field names.
pub mod names {
    pub const U: &str = "u";
    pub const U_X: &str = "du/dx";
    pub const U_XX: &str = "d^2u/dx^2";
    pub const U_XXX: &str = "d^3u/dx^3";
    pub const U_T: &str = "du/dt";
    pub const U_TT: &str = "d^2u/dt^2";
    pub const FORCING: &str = "forcing";
}

/// Name of the pure derivative of `u` of the given order along `axis`
/// (`"x"` or `"t"`). Order 0 is the field itself.
pub fn derivative_name(axis: &str, order: usize) -> String {
    match order {
        0 => names::U.to_string(),
        1 => format!("du/d{axis}"),
        k => format!("d^{k}u/d{axis}^{k}"),
    }
}

/// Uniform rectangular space-time grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub nx: usize,
    pub nt: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub t_min: f64,
    pub t_max: f64,
}

impl Grid {
    pub fn new(
        nx: usize,
        nt: usize,
        (x_min, x_max): (f64, f64),
        (t_min, t_max): (f64, f64),
    ) -> Result<Self, DataError> {
        let grid = Grid {
            nx,
            nt,
            x_min,
            x_max,
            t_min,
            t_max,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.nx < 2 || self.nt < 2 {
            return Err(DataError::InvalidGrid(format!(
                "need at least 2 points per axis, got nx={} nt={}",
                self.nx, self.nt
            )));
        }
        let bounds = [self.x_min, self.x_max, self.t_min, self.t_max];
        if bounds.iter().any(|b| !b.is_finite()) {
            return Err(DataError::InvalidGrid("non-finite bounds".into()));
        }
        if self.x_min >= self.x_max || self.t_min >= self.t_max {
            return Err(DataError::InvalidGrid(format!(
                "empty domain [{}, {}] x [{}, {}]",
                self.x_min, self.x_max, self.t_min, self.t_max
            )));
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.nx - 1) as f64
    }

    pub fn dt(&self) -> f64 {
        (self.t_max - self.t_min) / (self.nt - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        if i == self.nx - 1 {
            self.x_max
        } else {
            self.x_min + i as f64 * self.dx()
        }
    }

    pub fn t(&self, k: usize) -> f64 {
        if k == self.nt - 1 {
            self.t_max
        } else {
            self.t_min + k as f64 * self.dt()
        }
    }

    pub fn len(&self) -> usize {
        self.nx * self.nt
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Dense row-major matrix; rows are time levels, columns are space points.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Matrix { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.data[row * self.cols + col] = v;
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    /// Flattened row-major view.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn first_non_finite(&self) -> Option<(usize, usize)> {
        self.data
            .iter()
            .position(|v| !v.is_finite())
            .map(|p| (p / self.cols, p % self.cols))
    }
}

/// A discovered or reference equation `sum_s c_s * term_s = 0` keyed by
/// canonical term signature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthEquation {
    pub terms: Vec<(String, f64)>,
    pub normalization_term: String,
}

impl GroundTruthEquation {
    pub fn coefficient(&self, signature: &str) -> Option<f64> {
        self.terms
            .iter()
            .find(|(s, _)| s == signature)
            .map(|(_, c)| *c)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        match self.coefficient(&self.normalization_term) {
            Some(c) if c != 0.0 => Ok(()),
            _ => Err(DataError::Manifest(format!(
                "normalization term `{}` missing or zero in ground truth",
                self.normalization_term
            ))),
        }
    }
}

/// Token fields sampled on a shared grid.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldBundle {
    pub grid: Grid,
    fields: BTreeMap<String, Matrix>,
    pub ground_truth: Option<GroundTruthEquation>,
}

impl FieldBundle {
    pub fn new(grid: Grid) -> Self {
        FieldBundle {
            grid,
            fields: BTreeMap::new(),
            ground_truth: None,
        }
    }

    /// Adds a field, enforcing the shape and finiteness invariants.
    pub fn insert(&mut self, name: impl Into<String>, field: Matrix) -> Result<(), DataError> {
        let name = name.into();
        if field.rows() != self.grid.nt || field.cols() != self.grid.nx {
            return Err(DataError::ShapeMismatch {
                field: name,
                rows: field.rows(),
                cols: field.cols(),
                nt: self.grid.nt,
                nx: self.grid.nx,
            });
        }
        if let Some((row, col)) = field.first_non_finite() {
            return Err(DataError::NonFinite {
                field: name,
                row,
                col,
            });
        }
        if self.fields.contains_key(&name) {
            return Err(DataError::DuplicateField(name));
        }
        self.fields.insert(name, field);
        Ok(())
    }

    pub fn field(&self, name: &str) -> Option<&Matrix> {
        self.fields.get(name)
    }

    pub fn field_names(&self) -> impl Iterator<Item = &str> {
        self.fields.keys().map(String::as_str)
    }

    pub fn fields(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.fields.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Pointwise product of the named token fields, flattened row-major.
    /// Signature factors are separated by `*`.
    pub fn term_values(&self, signature: &str) -> Option<Vec<f64>> {
        let mut out = vec![1.0; self.grid.len()];
        for name in signature.split('*') {
            let f = self.field(name)?;
            for (o, v) in out.iter_mut().zip(f.as_slice()) {
                *o *= v;
            }
        }
        Some(out)
    }

    /// Max-norm over the grid of the ground-truth equation residual.
    pub fn ground_truth_residual(&self) -> Option<f64> {
        let truth = self.ground_truth.as_ref()?;
        let mut residual = vec![0.0; self.grid.len()];
        for (sig, coef) in &truth.terms {
            let values = self.term_values(sig)?;
            for (r, v) in residual.iter_mut().zip(values) {
                *r += coef * v;
            }
        }
        Some(residual.iter().fold(0.0_f64, |m, r| m.max(r.abs())))
    }
}
