//! LASSO by cyclic coordinate descent with exact soft-threshold updates.
//!
//! Objective, in standardized column units `b_j = C_j * s_j`:
//!
//! ```text
//! ||y - X C||^2 / (2 m) + lambda * sum_j |b_j|,   s_j = sqrt(<x_j, x_j> / m)
//! ```
//!
//! Columns are scaled to unit second moment but not centred: the equation
//! models have no intercept, so centring would change the fitted problem.

use serde::{Deserialize, Serialize};

use crate::error::SolverError;

/// Columns whose scale falls below this fraction of the largest column scale
/// are treated as having zero variance.
const ZERO_VARIANCE_RATIO: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LassoConfig {
    /// L1 penalty in standardized units.
    pub lambda: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LassoConfig {
    fn default() -> Self {
        LassoConfig {
            lambda: 1e-2,
            tol: 1e-8,
            max_iter: 10_000,
        }
    }
}

/// Dense regression problem, design stored column by column.
#[derive(Clone, Debug, PartialEq)]
pub struct RegressionProblem {
    pub columns: Vec<Vec<f64>>,
    pub target: Vec<f64>,
    pub lambda: f64,
}

/// Sufficient statistics of a least-squares problem: `X^T X`, `X^T y`,
/// `y^T y` and the row count.
#[derive(Clone, Debug, PartialEq)]
pub struct GramSystem {
    pub k: usize,
    /// Row-major `k x k`.
    pub gram: Vec<f64>,
    pub xty: Vec<f64>,
    pub yty: f64,
    pub rows: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LassoSolution {
    /// Coefficients in the original (unscaled) column units.
    pub coefficients: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Columns forced to zero for lack of variance.
    pub zero_variance: Vec<usize>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl RegressionProblem {
    pub fn new(columns: Vec<Vec<f64>>, target: Vec<f64>, lambda: f64) -> Self {
        RegressionProblem {
            columns,
            target,
            lambda,
        }
    }

    pub fn gram_system(&self) -> Result<GramSystem, SolverError> {
        let m = self.target.len();
        if let Some(c) = self.columns.iter().find(|c| c.len() != m) {
            return Err(SolverError::DimensionMismatch {
                rows: c.len(),
                target: m,
            });
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !finite(&self.target) || !self.columns.iter().all(|c| finite(c)) {
            return Err(SolverError::NonFinite);
        }
        let k = self.columns.len();
        let mut gram = vec![0.0; k * k];
        for i in 0..k {
            for j in i..k {
                let g = dot(&self.columns[i], &self.columns[j]);
                gram[i * k + j] = g;
                gram[j * k + i] = g;
            }
        }
        let xty = self.columns.iter().map(|c| dot(c, &self.target)).collect();
        Ok(GramSystem {
            k,
            gram,
            xty,
            yty: dot(&self.target, &self.target),
            rows: m,
        })
    }
}

/// Fits the LASSO problem; see [`lasso_fit_gram`].
pub fn lasso_fit(
    problem: &RegressionProblem,
    tol: f64,
    max_iter: usize,
) -> Result<LassoSolution, SolverError> {
    let sys = problem.gram_system()?;
    lasso_fit_gram(&sys, problem.lambda, tol, max_iter, None)
}

/// Scaled problem used by the coordinate descent.
struct Standardized {
    k: usize,
    scale: Vec<f64>,
    gram: Vec<f64>,
    corr: Vec<f64>,
    yty: f64,
    active: Vec<bool>,
}

impl Standardized {
    fn new(sys: &GramSystem) -> Self {
        let k = sys.k;
        let m = sys.rows as f64;
        let raw: Vec<f64> = (0..k).map(|j| (sys.gram[j * k + j] / m).sqrt()).collect();
        let largest = raw.iter().copied().fold(0.0, f64::max);
        let active: Vec<bool> = raw
            .iter()
            .map(|&s| s > 0.0 && s > ZERO_VARIANCE_RATIO * largest)
            .collect();
        let scale: Vec<f64> = raw
            .iter()
            .zip(&active)
            .map(|(&s, &a)| if a { s } else { 1.0 })
            .collect();
        let mut gram = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..k {
                if active[i] && active[j] {
                    gram[i * k + j] = sys.gram[i * k + j] / (m * scale[i] * scale[j]);
                }
            }
        }
        let corr = (0..k)
            .map(|j| {
                if active[j] {
                    sys.xty[j] / (m * scale[j])
                } else {
                    0.0
                }
            })
            .collect();
        Standardized {
            k,
            scale,
            gram,
            corr,
            yty: sys.yty / m,
            active,
        }
    }

    fn objective(&self, b: &[f64], lambda: f64) -> f64 {
        let k = self.k;
        let mut quad = 0.0;
        for i in 0..k {
            for j in 0..k {
                quad += b[i] * self.gram[i * k + j] * b[j];
            }
        }
        0.5 * self.yty - dot(b, &self.corr)
            + 0.5 * quad
            + lambda * b.iter().map(|v| v.abs()).sum::<f64>()
    }

    /// Largest violation of the subgradient optimality conditions.
    fn kkt_violation(&self, b: &[f64], lambda: f64) -> f64 {
        let k = self.k;
        (0..k)
            .filter(|&j| self.active[j])
            .map(|j| {
                let g = self.corr[j] - (0..k).map(|i| self.gram[j * k + i] * b[i]).sum::<f64>();
                if b[j] != 0.0 {
                    (g - lambda * b[j].signum()).abs()
                } else {
                    (g.abs() - lambda).max(0.0)
                }
            })
            .fold(0.0, f64::max)
    }
}

fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

/// Coordinate descent on precomputed sufficient statistics. `warm` gives
/// starting coefficients in original units.
pub fn lasso_fit_gram(
    sys: &GramSystem,
    lambda: f64,
    tol: f64,
    max_iter: usize,
    warm: Option<&[f64]>,
) -> Result<LassoSolution, SolverError> {
    if !(tol > 0.0) {
        return Err(SolverError::InvalidParameter("tol must be positive"));
    }
    if max_iter == 0 {
        return Err(SolverError::InvalidParameter("max_iter must be at least 1"));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(SolverError::InvalidParameter("lambda must be nonnegative"));
    }
    if sys.rows == 0 {
        return Err(SolverError::DimensionMismatch { rows: 0, target: 0 });
    }
    let all_finite = sys.gram.iter().chain(&sys.xty).all(|v| v.is_finite()) && sys.yty.is_finite();
    if !all_finite {
        return Err(SolverError::NonFinite);
    }
    let st = Standardized::new(sys);
    let k = st.k;
    let mut b: Vec<f64> = match warm {
        Some(w) => (0..k)
            .map(|j| {
                if st.active[j] {
                    w[j] * st.scale[j]
                } else {
                    0.0
                }
            })
            .collect(),
        None => vec![0.0; k],
    };
    // q = G b, maintained incrementally
    let mut q: Vec<f64> = (0..k)
        .map(|i| (0..k).map(|j| st.gram[i * k + j] * b[j]).sum())
        .collect();

    let mut iterations = 0;
    let mut converged = false;
    let mut last_objective = st.objective(&b, lambda);
    while iterations < max_iter {
        iterations += 1;
        let mut max_delta: f64 = 0.0;
        for j in 0..k {
            let gjj = st.gram[j * k + j];
            if !st.active[j] || gjj <= 0.0 {
                continue;
            }
            let old = b[j];
            let rho = st.corr[j] - (q[j] - gjj * old);
            let new = soft_threshold(rho, lambda) / gjj;
            let delta = new - old;
            if delta != 0.0 {
                b[j] = new;
                for i in 0..k {
                    q[i] += st.gram[i * k + j] * delta;
                }
                max_delta = max_delta.max(delta.abs());
            }
        }
        if cfg!(debug_assertions) {
            let objective = st.objective(&b, lambda);
            debug_assert!(
                objective <= last_objective + 1e-10 * (1.0 + last_objective.abs()),
                "objective increased: {last_objective} -> {objective}"
            );
            last_objective = objective;
        }
        if !max_delta.is_finite() {
            return Err(SolverError::NonFinite);
        }
        if max_delta < tol {
            converged = true;
            break;
        }
    }
    let _ = last_objective;
    let coefficients: Vec<f64> = (0..k).map(|j| b[j] / st.scale[j]).collect();
    if coefficients.iter().any(|c| !c.is_finite()) {
        return Err(SolverError::NonFinite);
    }
    Ok(LassoSolution {
        coefficients,
        iterations,
        converged,
        zero_variance: (0..k).filter(|&j| !st.active[j]).collect(),
    })
}

/// Unpenalized least squares on the normal equations by Gaussian
/// elimination with partial pivoting, in standardized units. Returns `None`
/// when the scaled Gram matrix is numerically singular.
pub fn least_squares_gram(sys: &GramSystem) -> Option<Vec<f64>> {
    let st = Standardized::new(sys);
    let k = st.k;
    let mut a = st.gram.clone();
    let mut b = st.corr.clone();
    for col in 0..k {
        if !st.active[col] {
            a[col * k + col] = 1.0;
            b[col] = 0.0;
        }
    }
    for col in 0..k {
        let pivot =
            (col..k).max_by(|&i, &j| a[i * k + col].abs().total_cmp(&a[j * k + col].abs()))?;
        // Unit diagonal after scaling, so this threshold is relative.
        if a[pivot * k + col].abs() < 1e-10 {
            return None;
        }
        if pivot != col {
            for j in 0..k {
                a.swap(col * k + j, pivot * k + j);
            }
            b.swap(col, pivot);
        }
        for row in col + 1..k {
            let f = a[row * k + col] / a[col * k + col];
            if f != 0.0 {
                for j in col..k {
                    a[row * k + j] -= f * a[col * k + j];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; k];
    for row in (0..k).rev() {
        let tail: f64 = (row + 1..k).map(|j| a[row * k + j] * x[j]).sum();
        x[row] = (b[row] - tail) / a[row * k + row];
    }
    let coefs: Vec<f64> = x.iter().zip(&st.scale).map(|(v, s)| v / s).collect();
    coefs.iter().all(|c| c.is_finite()).then_some(coefs)
}

/// Largest subgradient-condition violation of `coefficients` (original units)
/// measured in standardized units.
pub fn optimality_violation(sys: &GramSystem, lambda: f64, coefficients: &[f64]) -> f64 {
    let st = Standardized::new(sys);
    let b: Vec<f64> = coefficients
        .iter()
        .zip(&st.scale)
        .zip(&st.active)
        .map(|((c, s), a)| if *a { c * s } else { 0.0 })
        .collect();
    st.kkt_violation(&b, lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn standardized_column(rng: &mut impl Rng, m: usize) -> Vec<f64> {
        let raw: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mean = raw.iter().sum::<f64>() / m as f64;
        let centred: Vec<f64> = raw.iter().map(|v| v - mean).collect();
        let s = (dot(&centred, &centred) / m as f64).sqrt();
        centred.iter().map(|v| v / s).collect()
    }

    #[test]
    fn one_variable_least_squares() {
        let x: Vec<f64> = (0..50).map(|i| i as f64 * 0.1 - 2.0).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let sol = lasso_fit(&RegressionProblem::new(vec![x], y, 0.0), 1e-12, 1000).unwrap();
        assert!((sol.coefficients[0] - 2.0).abs() < 1e-10);
        assert!(sol.converged);
    }

    #[test]
    fn zero_target_gives_zero_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cols: Vec<Vec<f64>> = (0..3).map(|_| standardized_column(&mut rng, 40)).collect();
        for lambda in [0.0, 0.1, 5.0] {
            let sol = lasso_fit(
                &RegressionProblem::new(cols.clone(), vec![0.0; 40], lambda),
                1e-8,
                100,
            )
            .unwrap();
            assert!(sol.coefficients.iter().all(|c| *c == 0.0));
        }
    }

    #[test]
    fn soft_threshold_matches_grid_search_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = 64;
        let x = standardized_column(&mut rng, m);
        let y: Vec<f64> = x
            .iter()
            .map(|v| 0.7 * v + 0.3 * rng.random_range(-1.0..1.0))
            .collect();
        let rho = dot(&x, &y) / m as f64;
        for lambda in [0.0, 0.05, 0.3, 0.69, 1.0] {
            let sol = lasso_fit(
                &RegressionProblem::new(vec![x.clone()], y.clone(), lambda),
                1e-12,
                100,
            )
            .unwrap();
            let closed = rho.signum() * (rho.abs() - lambda).max(0.0);
            assert!((sol.coefficients[0] - closed).abs() < 1e-10);
            // Grid-search oracle over the objective.
            let objective = |c: f64| {
                let r: f64 = x.iter().zip(&y).map(|(a, b)| (b - c * a).powi(2)).sum();
                r / (2.0 * m as f64) + lambda * c.abs()
            };
            let best = (0..=60_000)
                .map(|i| -3.0 + i as f64 * 1e-4)
                .min_by(|a, b| objective(*a).total_cmp(&objective(*b)))
                .unwrap();
            assert!(
                (sol.coefficients[0] - best).abs() <= 1e-4,
                "lambda {lambda}"
            );
        }
    }

    #[test]
    fn large_penalty_zeroes_everything() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = 30;
        let cols: Vec<Vec<f64>> = (0..4).map(|_| standardized_column(&mut rng, m)).collect();
        let y: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let lambda_max = cols
            .iter()
            .map(|c| (dot(c, &y) / m as f64).abs())
            .fold(0.0, f64::max);
        let sol = lasso_fit(&RegressionProblem::new(cols, y, lambda_max), 1e-10, 100).unwrap();
        assert!(sol.coefficients.iter().all(|c| *c == 0.0));
    }

    #[test]
    fn zero_variance_column_is_flagged() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y = x.clone();
        let sol = lasso_fit(
            &RegressionProblem::new(vec![vec![0.0; 10], x], y, 0.0),
            1e-12,
            100,
        )
        .unwrap();
        assert_eq!(sol.zero_variance, vec![0]);
        assert_eq!(sol.coefficients[0], 0.0);
        assert!((sol.coefficients[1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn bad_inputs_are_errors() {
        let p = RegressionProblem::new(vec![vec![1.0, f64::NAN]], vec![1.0, 2.0], 0.0);
        assert_eq!(lasso_fit(&p, 1e-8, 10), Err(SolverError::NonFinite));
        let p = RegressionProblem::new(vec![vec![1.0]], vec![1.0, 2.0], 0.0);
        assert!(matches!(
            lasso_fit(&p, 1e-8, 10),
            Err(SolverError::DimensionMismatch { .. })
        ));
        let p = RegressionProblem::new(vec![vec![1.0, 2.0]], vec![1.0, 2.0], 0.0);
        assert!(lasso_fit(&p, 0.0, 10).is_err());
        assert!(lasso_fit(&p, 1e-8, 0).is_err());
    }

    fn random_problem(seed: u64, m: usize, k: usize, lambda: f64) -> RegressionProblem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cols: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..m).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let target = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
        RegressionProblem::new(cols, target, lambda)
    }

    #[test]
    fn unpenalized_fit_matches_normal_equations() {
        for seed in 0..50 {
            let p = random_problem(seed, 5, 3, 0.0);
            let x = DMatrix::from_fn(5, 3, |i, j| p.columns[j][i]);
            let y = DVector::from_vec(p.target.clone());
            let oracle = (x.transpose() * &x)
                .lu()
                .solve(&(x.transpose() * y))
                .unwrap();
            let sol = lasso_fit(&p, 1e-14, 100_000).unwrap();
            for j in 0..3 {
                assert!(
                    (sol.coefficients[j] - oracle[j]).abs() < 1e-8,
                    "seed {seed}: {} vs {}",
                    sol.coefficients[j],
                    oracle[j]
                );
            }
        }
    }

    #[test]
    fn direct_solve_matches_normal_equations() {
        for seed in 0..50 {
            let p = random_problem(seed, 5, 3, 0.0);
            let x = DMatrix::from_fn(5, 3, |i, j| p.columns[j][i]);
            let y = DVector::from_vec(p.target.clone());
            let oracle = (x.transpose() * &x)
                .lu()
                .solve(&(x.transpose() * y))
                .unwrap();
            let c = least_squares_gram(&p.gram_system().unwrap()).unwrap();
            for j in 0..3 {
                assert!((c[j] - oracle[j]).abs() < 1e-10 * (1.0 + oracle[j].abs()));
            }
        }
        let col: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let p = RegressionProblem::new(vec![col.clone(), col.clone()], col, 0.0);
        assert_eq!(least_squares_gram(&p.gram_system().unwrap()), None);
    }

    proptest! {
        #[test]
        fn solution_satisfies_subgradient_conditions(seed in any::<u64>(), lambda in 0.0f64..0.5) {
            let p = random_problem(seed, 40, 4, lambda);
            let tol = 1e-9;
            let sol = lasso_fit(&p, tol, 10_000).unwrap();
            let sys = p.gram_system().unwrap();
            prop_assume!(sol.converged);
            prop_assert!(optimality_violation(&sys, lambda, &sol.coefficients) < 10.0 * tol);
        }

        #[test]
        fn column_permutation_permutes_coefficients(seed in any::<u64>(), lambda in 0.0f64..0.3) {
            let p = random_problem(seed, 30, 4, lambda);
            let tol = 1e-12;
            let a = lasso_fit(&p, tol, 50_000).unwrap();
            let perm = [2, 0, 3, 1];
            let q = RegressionProblem::new(
                perm.iter().map(|&j| p.columns[j].clone()).collect(),
                p.target.clone(),
                lambda,
            );
            let b = lasso_fit(&q, tol, 50_000).unwrap();
            for (pos, &j) in perm.iter().enumerate() {
                prop_assert!((a.coefficients[j] - b.coefficients[pos]).abs() < 1e-8);
            }
        }
    }
}
