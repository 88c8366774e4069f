//! Closed-form benchmark fields that satisfy the target PDEs exactly.

use std::fmt;
use std::str::FromStr;

use super::jet::Jet;
use super::{finite_difference_fields, names, FieldBundle, Grid, GroundTruthEquation, Matrix};
use crate::error::DataError;

/// Benchmark problems with manufactured solutions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ProblemId {
    /// `u_t + u u_x = 0`, field `x / (1 + t)`.
    BurgersInviscid,
    /// `u_tt - u_xx / 25 = 0`, standing mode plus a travelling pulse.
    Wave,
    /// `u_t + 6 u u_x + u_xxx = f` with the forcing emitted as a token.
    Kdv,
    /// `u_t + u u_x - 0.1 u_xx = 0`, two merging Cole-Hopf fronts.
    BurgersViscous,
    /// `u_t + 6 u u_x + u_xxx = 0`, two-soliton solution.
    KdvHomogeneous,
}

const VISCOSITY: f64 = 0.1;
const WAVE_SPEED: f64 = 0.2;

impl ProblemId {
    pub const ALL: [ProblemId; 5] = [
        ProblemId::BurgersInviscid,
        ProblemId::Wave,
        ProblemId::Kdv,
        ProblemId::BurgersViscous,
        ProblemId::KdvHomogeneous,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ProblemId::BurgersInviscid => "burgers_inviscid",
            ProblemId::Wave => "wave",
            ProblemId::Kdv => "kdv",
            ProblemId::BurgersViscous => "burgers_viscous",
            ProblemId::KdvHomogeneous => "kdv_homogeneous",
        }
    }

    /// Default 101x101 grid over the problem's native domain.
    pub fn default_grid(&self) -> Grid {
        let (x, t) = match self {
            ProblemId::BurgersInviscid => ((-1.0, 1.0), (0.0, 1.0)),
            ProblemId::Wave => ((0.0, 1.0), (0.0, 1.0)),
            ProblemId::Kdv => ((-4.0, 4.0), (0.0, 2.0)),
            ProblemId::BurgersViscous => ((-8.0, 8.0), (0.0, 10.0)),
            ProblemId::KdvHomogeneous => ((-10.0, 10.0), (0.0, 1.0)),
        };
        Grid::new(101, 101, x, t).expect("default grids are valid")
    }

    /// Token fields emitted for this problem.
    pub fn token_names(&self) -> &'static [&'static str] {
        use names::*;
        match self {
            ProblemId::BurgersInviscid | ProblemId::BurgersViscous => &[U, U_X, U_XX, U_T],
            ProblemId::Wave => &[U, U_X, U_XX, U_T, U_TT],
            ProblemId::Kdv => &[U, U_X, U_XX, U_XXX, U_T, FORCING],
            ProblemId::KdvHomogeneous => &[U, U_X, U_XX, U_XXX, U_T],
        }
    }

    pub fn ground_truth(&self) -> GroundTruthEquation {
        let terms: Vec<(&str, f64)> = match self {
            ProblemId::BurgersInviscid => vec![("du/dt", 1.0), ("du/dx*u", 1.0)],
            ProblemId::Wave => vec![("d^2u/dt^2", 1.0), ("d^2u/dx^2", -WAVE_SPEED * WAVE_SPEED)],
            ProblemId::Kdv => vec![
                ("du/dt", 1.0),
                ("du/dx*u", 6.0),
                ("d^3u/dx^3", 1.0),
                ("forcing", -1.0),
            ],
            ProblemId::BurgersViscous => {
                vec![("du/dt", 1.0), ("du/dx*u", 1.0), ("d^2u/dx^2", -VISCOSITY)]
            }
            ProblemId::KdvHomogeneous => {
                vec![("du/dt", 1.0), ("du/dx*u", 6.0), ("d^3u/dx^3", 1.0)]
            }
        };
        let normalization_term = match self {
            ProblemId::Wave => names::U_TT,
            _ => names::U_T,
        };
        GroundTruthEquation {
            terms: terms.into_iter().map(|(s, c)| (s.to_string(), c)).collect(),
            normalization_term: normalization_term.to_string(),
        }
    }

    fn field(&self, x: Jet, t: Jet) -> Jet {
        match self {
            ProblemId::BurgersInviscid => x / (t + 1.0),
            ProblemId::Wave => {
                let pi = std::f64::consts::PI;
                let standing = (pi * x).sin() * (pi * WAVE_SPEED * t).cos();
                let s = (x - 0.3 - WAVE_SPEED * t) * (1.0 / 0.15);
                standing + 0.5 * (-s.square()).exp()
            }
            ProblemId::Kdv => {
                let s = x - 0.5 * t;
                (-s.square()).exp() * ((0.7 * t).sin() * 0.3 + 1.0) + 0.3 * (x + 1.5 * t).sin()
            }
            ProblemId::BurgersViscous => {
                // Cole-Hopf: u = -2 nu (ln phi)_x with phi_t = nu phi_xx.
                let front = |a: f64, d: f64| (a * x + VISCOSITY * a * a * t + d).exp();
                let phi = front(-1.0, 1.0) + front(-2.0, 1.0) + 1.0;
                -2.0 * VISCOSITY * phi.ln().dx()
            }
            ProblemId::KdvHomogeneous => kdv_solitons(x, t, &[(1.0, 0.0), (1.5, 4.5)]),
        }
    }
}

/// Forcing of the inhomogeneous KdV benchmark: whatever `u_t + 6 u u_x +
/// u_xxx` evaluates to for the manufactured field.
fn kdv_forcing(u: &Jet) -> f64 {
    u.derivative(0, 1) + 6.0 * u.value() * u.derivative(1, 0) + u.derivative(3, 0)
}

/// Hirota N-soliton (N <= 2) of `u_t + 6 u u_x + u_xxx = 0` as `2 (ln F)_xx`.
fn kdv_solitons(x: Jet, t: Jet, waves: &[(f64, f64)]) -> Jet {
    let phase = |k: f64, d: f64| k * x - k.powi(3) * t + d;
    let tau = match waves {
        [(k, d)] => phase(*k, *d).exp() + 1.0,
        [(k1, d1), (k2, d2)] => {
            let coupling = ((k1 - k2) / (k1 + k2)).powi(2);
            let (e1, e2) = (phase(*k1, *d1), phase(*k2, *d2));
            e1.exp() + e2.exp() + coupling * (e1 + e2).exp() + 1.0
        }
        _ => panic!("only one- and two-soliton solutions are supported"),
    };
    2.0 * tau.ln().dx().dx()
}

/// Single KdV soliton `(c/2) sech^2(sqrt(c) (x - c t) / 2)` sampled on a grid,
/// with its derivative fields and the homogeneous KdV ground truth.
pub fn kdv_soliton(speed: f64, grid: &Grid) -> Result<FieldBundle, DataError> {
    if !(speed > 0.0) {
        return Err(DataError::InvalidGrid(
            "soliton speed must be positive".into(),
        ));
    }
    let k = speed.sqrt();
    sample(
        grid,
        ProblemId::KdvHomogeneous.token_names(),
        |x, t| kdv_solitons(x, t, &[(k, 0.0)]),
        None,
        ProblemId::KdvHomogeneous.ground_truth(),
    )
}

impl fmt::Display for ProblemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProblemId {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ProblemId::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| DataError::UnknownProblem(s.to_string()))
    }
}

fn orders_of(name: &str) -> Option<(usize, usize)> {
    use names::*;
    Some(match name {
        U => (0, 0),
        U_X => (1, 0),
        U_XX => (2, 0),
        U_XXX => (3, 0),
        U_T => (0, 1),
        U_TT => (0, 2),
        _ => return None,
    })
}

fn sample(
    grid: &Grid,
    tokens: &[&str],
    field: impl Fn(Jet, Jet) -> Jet,
    forcing: Option<fn(&Jet) -> f64>,
    truth: GroundTruthEquation,
) -> Result<FieldBundle, DataError> {
    grid.validate()?;
    let mut mats: Vec<(&str, Matrix)> = tokens
        .iter()
        .map(|n| (*n, Matrix::zeros(grid.nt, grid.nx)))
        .collect();
    for k in 0..grid.nt {
        let t = grid.t(k);
        for i in 0..grid.nx {
            let x = grid.x(i);
            let u = field(Jet::var_x(x), Jet::var_t(t));
            for (name, m) in mats.iter_mut() {
                let v = match orders_of(name) {
                    Some((ox, ot)) => u.derivative(ox, ot),
                    None => forcing.expect("forcing token requires a forcing function")(&u),
                };
                m.set(k, i, v);
            }
        }
    }
    let mut bundle = FieldBundle::new(*grid);
    for (name, m) in mats {
        if let Some((row, col)) = m.first_non_finite() {
            return Err(DataError::Singular(format!(
                "field `{name}` is not finite at (x={}, t={})",
                grid.x(col),
                grid.t(row)
            )));
        }
        bundle.insert(name, m)?;
    }
    bundle.ground_truth = Some(truth);
    Ok(bundle)
}

/// Samples the manufactured solution of `problem` and its exact token fields
/// on `grid`.
pub fn generate_manufactured(problem: ProblemId, grid: &Grid) -> Result<FieldBundle, DataError> {
    grid.validate()?;
    if problem == ProblemId::BurgersInviscid && grid.t_min <= -1.0 && grid.t_max >= -1.0 {
        return Err(DataError::Singular(
            "x / (1 + t) is singular at t = -1".into(),
        ));
    }
    let forcing = (problem == ProblemId::Kdv).then_some(kdv_forcing as fn(&Jet) -> f64);
    sample(
        grid,
        problem.token_names(),
        |x, t| problem.field(x, t),
        forcing,
        problem.ground_truth(),
    )
}

/// Like [`generate_manufactured`], but every derivative token is recomputed
/// from the sampled `u` by finite differences, as it would be for measured
/// data. The forcing field, an input of the equation, stays exact.
pub fn generate_differenced(problem: ProblemId, grid: &Grid) -> Result<FieldBundle, DataError> {
    let exact = generate_manufactured(problem, grid)?;
    let u = exact.field(names::U).expect("every problem samples u");
    let orders: Vec<(usize, usize)> = problem
        .token_names()
        .iter()
        .filter_map(|n| orders_of(n))
        .collect();
    let max_x = orders.iter().map(|o| o.0).max().unwrap_or(1).max(1);
    let max_t = orders.iter().map(|o| o.1).max().unwrap_or(1).max(1);
    let fd = finite_difference_fields(u, grid, max_x, max_t)?;
    let mut bundle = FieldBundle::new(*grid);
    for name in problem.token_names() {
        let source = if orders_of(name).is_some() {
            &fd
        } else {
            &exact
        };
        let field = source
            .field(name)
            .expect("token covered by the requested orders");
        bundle.insert(*name, field.clone())?;
    }
    bundle.ground_truth = exact.ground_truth.clone();
    Ok(bundle)
}
