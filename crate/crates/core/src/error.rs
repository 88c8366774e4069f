use std::path::PathBuf;

use thiserror::Error;

/// Errors from dataset generation, loading and differentiation.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("unknown problem `{0}` (valid: burgers_inviscid, wave, kdv, burgers_viscous, kdv_homogeneous)")]
    UnknownProblem(String),
    #[error("closed-form solution is singular inside the domain: {0}")]
    Singular(String),
    #[error("missing field file {}", .0.display())]
    MissingField(PathBuf),
    #[error("field `{field}` has shape {rows}x{cols}, manifest declares {nt}x{nx}")]
    ShapeMismatch {
        field: String,
        rows: usize,
        cols: usize,
        nt: usize,
        nx: usize,
    },
    #[error("non-finite value in field `{field}` at row {row}, column {col}")]
    NonFinite {
        field: String,
        row: usize,
        col: usize,
    },
    #[error(
        "grid too small: {axis} axis has {points} points, order {order} needs at least {needed}"
    )]
    GridTooSmall {
        axis: &'static str,
        points: usize,
        order: usize,
        needed: usize,
    },
    #[error("bad manifest: {0}")]
    Manifest(String),
    #[error("duplicate field `{0}`")]
    DuplicateField(String),
    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error in {}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

#[derive(Debug, Error, PartialEq)]
pub enum GenotypeError {
    #[error("term has {size} factors, maximum is {max}")]
    TooManyFactors { size: usize, max: usize },
    #[error("term must contain at least one factor")]
    EmptyTerm,
    #[error("unknown token `{0}`")]
    UnknownToken(String),
    #[error("vocabulary exhausted after {attempts} attempts")]
    Exhausted { attempts: usize },
    #[error("term `{0}` violates structural restrictions")]
    Restricted(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum ImportanceError {
    #[error("count table total is zero")]
    ZeroTotal,
    #[error("biased regimes need a nonempty set of boosted terms")]
    EmptyBoost,
    #[error("boosted term `{0}` is not in the vocabulary")]
    UnknownBoost(String),
    #[error("no term with positive probability outside the excluded set")]
    EmptySupport,
    #[error("invalid distribution: {0}")]
    Invalid(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum SolverError {
    #[error("non-finite value encountered in regression problem")]
    NonFinite,
    #[error("design has {rows} rows but target has {target}")]
    DimensionMismatch { rows: usize, target: usize },
    #[error("invalid solver parameter: {0}")]
    InvalidParameter(&'static str),
}

#[derive(Debug, Error, PartialEq)]
pub enum FitnessError {
    #[error("model needs at least two terms, has {0}")]
    TooFewTerms(usize),
    #[error("term `{0}` cannot be evaluated on this bundle")]
    UnknownTerm(String),
    #[error("non-finite field values in term `{0}`")]
    NonFinite(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// Crate-level error used by the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Genotype(#[from] GenotypeError),
    #[error(transparent)]
    Importance(#[from] ImportanceError),
    #[error(transparent)]
    Fitness(#[from] FitnessError),
    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
