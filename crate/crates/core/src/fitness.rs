//! Fitness of an equation model: one term is picked as the target, the rest
//! are balanced against it by LASSO, small coefficients are pruned and the
//! fitness is the reciprocal of the remaining residual.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::FitnessError;
use crate::genotype::{EquationModel, TermVocabulary};
use crate::grid_data::FieldBundle;
use crate::sparse_solver::{lasso_fit_gram, least_squares_gram, GramSystem};

/// Refit-and-prune rounds before the support is accepted as final.
const MAX_PRUNE_ROUNDS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitnessConfig {
    pub lambda: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Coefficients below this magnitude (relative to the target's -1) are
    /// removed from the model.
    pub prune_threshold: f64,
    pub epsilon_floor: f64,
    /// Measure the residual with the target scaled to unit RMS, so models
    /// are not rewarded for picking a small-magnitude target.
    pub normalize_target: bool,
    /// Least-squares refit of the surviving terms after LASSO selection.
    pub refit: bool,
}

impl Default for FitnessConfig {
    fn default() -> Self {
        FitnessConfig {
            lambda: 1e-2,
            tol: 1e-8,
            max_iter: 10_000,
            prune_threshold: 1e-4,
            epsilon_floor: 1e-12,
            normalize_target: true,
            refit: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitnessResult {
    /// Zero marks an unfit individual.
    pub fitness: f64,
    /// Surviving `(signature, coefficient)` pairs, target included at -1.
    pub coefficients: Vec<(String, f64)>,
    pub pruned: Vec<String>,
    pub residual_norm: f64,
    pub target: String,
}

impl FitnessResult {
    pub fn unfit(target: impl Into<String>) -> Self {
        FitnessResult {
            fitness: 0.0,
            coefficients: Vec::new(),
            pruned: Vec::new(),
            residual_norm: f64::INFINITY,
            target: target.into(),
        }
    }
}

/// Flattened term columns and their Gram matrix for a whole vocabulary, so
/// each evaluation only solves a small system.
#[derive(Clone, Debug)]
pub struct TermCache {
    vocabulary: TermVocabulary,
    columns: Vec<Vec<f64>>,
    gram: Vec<f64>,
    rows: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl TermCache {
    pub fn new(bundle: &FieldBundle, vocabulary: TermVocabulary) -> Result<Self, FitnessError> {
        let columns = vocabulary
            .signatures()
            .map(|sig| {
                let col = bundle
                    .term_values(sig)
                    .ok_or_else(|| FitnessError::UnknownTerm(sig.to_string()))?;
                if col.iter().any(|v| !v.is_finite()) {
                    return Err(FitnessError::NonFinite(sig.to_string()));
                }
                Ok(col)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let n = columns.len();
        let mut gram = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let g = dot(&columns[i], &columns[j]);
                if !g.is_finite() {
                    return Err(FitnessError::NonFinite(
                        vocabulary.terms()[i].signature().to_string(),
                    ));
                }
                gram[i * n + j] = g;
                gram[j * n + i] = g;
            }
        }
        Ok(TermCache {
            vocabulary,
            columns,
            gram,
            rows: bundle.grid.len(),
        })
    }

    pub fn vocabulary(&self) -> &TermVocabulary {
        &self.vocabulary
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn column(&self, signature: &str) -> Option<&[f64]> {
        self.vocabulary
            .position(signature)
            .map(|i| self.columns[i].as_slice())
    }

    fn gram(&self, i: usize, j: usize) -> f64 {
        self.gram[i * self.columns.len() + j]
    }

    fn positions(&self, model: &EquationModel) -> Result<Vec<usize>, FitnessError> {
        model
            .terms
            .iter()
            .map(|t| {
                self.vocabulary
                    .position(t.signature())
                    .ok_or_else(|| FitnessError::UnknownTerm(t.signature().to_string()))
            })
            .collect()
    }
}

/// Evaluates `model` with a target drawn uniformly from its terms.
pub fn evaluate<R: Rng + ?Sized>(
    model: &mut EquationModel,
    cache: &TermCache,
    rng: &mut R,
    cfg: &FitnessConfig,
) -> Result<FitnessResult, FitnessError> {
    if model.len() < 2 {
        return Err(FitnessError::TooFewTerms(model.len()));
    }
    let target = rng.random_range(0..model.len());
    evaluate_with_target(model, cache, target, cfg)
}

/// Evaluates `model` with `model.terms[target]` as the target term. On
/// success the model is pruned in place and carries its coefficients.
pub fn evaluate_with_target(
    model: &mut EquationModel,
    cache: &TermCache,
    target: usize,
    cfg: &FitnessConfig,
) -> Result<FitnessResult, FitnessError> {
    if model.len() < 2 {
        return Err(FitnessError::TooFewTerms(model.len()));
    }
    assert!(target < model.len(), "target index out of range");
    let pos = cache.positions(model)?;
    let target_sig = model.terms[target].signature().to_string();
    let t = pos[target];
    let m = cache.rows as f64;

    let target_sq = cache.gram(t, t);
    if !(target_sq > 0.0) {
        return Ok(FitnessResult::unfit(target_sig));
    }
    // Regressions run on the target scaled to unit RMS; coefficients are
    // mapped back to the target's own units afterwards.
    let scale = (target_sq / m).sqrt();

    let mut support: Vec<usize> = (0..model.len()).filter(|&i| i != target).collect();
    let idx = &pos;
    let system = |support: &[usize]| GramSystem {
        k: support.len(),
        gram: support
            .iter()
            .flat_map(|&a| support.iter().map(move |&b| cache.gram(idx[a], idx[b])))
            .collect(),
        xty: support
            .iter()
            .map(|&a| cache.gram(idx[a], t) / scale)
            .collect(),
        yty: target_sq / (scale * scale),
        rows: cache.rows,
    };

    let lasso = lasso_fit_gram(&system(&support), cfg.lambda, cfg.tol, cfg.max_iter, None)?;
    let mut coefs = lasso.coefficients;
    let mut pruned: Vec<usize> = Vec::new();
    for _ in 0..MAX_PRUNE_ROUNDS {
        let (keep, drop): (Vec<usize>, Vec<usize>) =
            (0..support.len()).partition(|&j| coefs[j].abs() * scale >= cfg.prune_threshold);
        pruned.extend(drop.iter().map(|&j| support[j]));
        let next: Vec<usize> = keep.iter().map(|&j| support[j]).collect();
        let warm: Vec<f64> = keep.iter().map(|&j| coefs[j]).collect();
        let changed = next.len() != support.len();
        support = next;
        if support.is_empty() {
            break;
        }
        if !cfg.refit {
            coefs = warm;
            if !changed {
                break;
            }
            continue;
        }
        let sys = system(&support);
        coefs = match least_squares_gram(&sys) {
            Some(c) => c,
            // Collinear survivors: any minimizer will do.
            None => lasso_fit_gram(&sys, 0.0, cfg.tol, cfg.max_iter, Some(&warm))?.coefficients,
        };
        if coefs.iter().all(|c| c.abs() * scale >= cfg.prune_threshold) {
            break;
        }
    }
    // Anything still below threshold after the last round goes too.
    let (support, coefs): (Vec<usize>, Vec<f64>) = support
        .into_iter()
        .zip(coefs)
        .filter(|&(i, c)| {
            let keep = c.abs() * scale >= cfg.prune_threshold;
            if !keep {
                pruned.push(i);
            }
            keep
        })
        .unzip();
    pruned.sort_unstable();
    let pruned_sigs: Vec<String> = pruned
        .iter()
        .map(|&i| model.terms[i].signature().to_string())
        .collect();
    if support.is_empty() {
        return Ok(FitnessResult {
            pruned: pruned_sigs,
            ..FitnessResult::unfit(target_sig)
        });
    }

    // Residual -y + sum c_j T_j, computed directly on the columns.
    let y = &cache.columns[t];
    let unit = if cfg.normalize_target {
        1.0 / scale
    } else {
        1.0
    };
    let raw: Vec<f64> = coefs.iter().map(|c| c * scale).collect();
    let mut sq = 0.0;
    for r in 0..cache.rows {
        let mut v = -y[r];
        for (&i, &c) in support.iter().zip(&raw) {
            v += c * cache.columns[pos[i]][r];
        }
        sq += (v * unit) * (v * unit);
    }
    let residual_norm = sq.sqrt();
    if !residual_norm.is_finite() {
        return Err(FitnessError::NonFinite(target_sig));
    }
    let fitness = 1.0 / residual_norm.max(cfg.epsilon_floor);

    // Rewrite the model: target first in its original slot order.
    let mut keep: Vec<(usize, f64)> = support.iter().copied().zip(raw).collect();
    keep.push((target, -1.0));
    keep.sort_unstable_by_key(|&(i, _)| i);
    let terms = keep.iter().map(|&(i, _)| model.terms[i].clone()).collect();
    let coefficients: Vec<f64> = keep.iter().map(|&(_, c)| c).collect();
    let target_index = keep.iter().position(|&(i, _)| i == target);
    model.terms = terms;
    model.coefficients = coefficients.clone();
    model.target_index = target_index;

    Ok(FitnessResult {
        fitness,
        coefficients: model
            .terms
            .iter()
            .map(|t| t.signature().to_string())
            .zip(coefficients)
            .collect(),
        pruned: pruned_sigs,
        residual_norm,
        target: target_sig,
    })
}
