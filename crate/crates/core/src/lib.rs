//! Evolutionary discovery of partial differential equations from gridded
//! field data, with classical (uniform) and importance-directed mutation and
//! crossover operators.

pub mod error;
pub mod evaluation;
pub mod evolution;
pub mod experiment;
pub mod fitness;
pub mod genotype;
pub mod grid_data;
pub mod importance;
pub mod seeding;
pub mod sparse_solver;

pub use error::{Error, Result};
pub use grid_data::{FieldBundle, Grid, GroundTruthEquation, Matrix, ProblemId};
