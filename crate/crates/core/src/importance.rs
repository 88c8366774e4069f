//! Term-importance distributions that steer the directed operators.
//!
//! The primary table is over term signatures. Token-level importance, used by
//! directed token mutation and crossover, is the marginal: the summed
//! probability of every term that contains the token.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::ImportanceError;
use crate::genotype::{generate_term, TermVocabulary};

/// Multiplier applied to boosted term counts in the biased regime.
pub const BIAS_FACTOR: f64 = 1.2;
/// Multiplier applied to boosted term counts in the highly biased regime.
pub const HIGH_BIAS_FACTOR: f64 = 2.0;

/// Observed term frequencies of the classical generator.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct CountTable {
    counts: BTreeMap<String, f64>,
}

impl CountTable {
    pub fn new(counts: BTreeMap<String, f64>) -> Self {
        CountTable { counts }
    }

    pub fn get(&self, signature: &str) -> f64 {
        self.counts.get(signature).copied().unwrap_or(0.0)
    }

    pub fn counts(&self) -> &BTreeMap<String, f64> {
        &self.counts
    }

    pub fn total(&self) -> f64 {
        self.counts.values().sum()
    }
}

/// Samples the classical generator `runs * draws_per_run` times without the
/// uniqueness check and tallies the resulting signatures. Every vocabulary
/// term gets an entry, possibly zero.
pub fn estimate_counts<R: Rng + ?Sized>(
    runs: usize,
    draws_per_run: usize,
    rng: &mut R,
    vocabulary: &TermVocabulary,
) -> CountTable {
    assert!(runs >= 1 && draws_per_run >= 1, "need at least one draw");
    let families = vocabulary.families();
    let none = BTreeSet::new();
    let mut counts: BTreeMap<String, f64> = vocabulary
        .signatures()
        .map(|s| (s.to_string(), 0.0))
        .collect();
    for _ in 0..runs * draws_per_run {
        let term = generate_term(rng, vocabulary.max_factors(), &families, &none)
            .expect("an empty exclusion set cannot exhaust the vocabulary");
        *counts.entry(term.signature().to_string()).or_default() += 1.0;
    }
    CountTable { counts }
}

/// How the importance table is derived from generator counts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistributionRegime {
    /// Generator frequencies as observed.
    Fixed,
    /// Boosted term counts scaled by [`BIAS_FACTOR`].
    Biased,
    /// Boosted term counts scaled by [`HIGH_BIAS_FACTOR`].
    HighlyBiased,
    /// Every vocabulary term equally likely.
    Uniform,
}

impl DistributionRegime {
    pub const ALL: [DistributionRegime; 4] = [
        DistributionRegime::Fixed,
        DistributionRegime::Biased,
        DistributionRegime::HighlyBiased,
        DistributionRegime::Uniform,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            DistributionRegime::Fixed => "fixed",
            DistributionRegime::Biased => "biased",
            DistributionRegime::HighlyBiased => "highly_biased",
            DistributionRegime::Uniform => "uniform",
        }
    }

    fn boost_factor(&self) -> Option<f64> {
        match self {
            DistributionRegime::Biased => Some(BIAS_FACTOR),
            DistributionRegime::HighlyBiased => Some(HIGH_BIAS_FACTOR),
            _ => None,
        }
    }
}

impl fmt::Display for DistributionRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DistributionRegime {
    type Err = ImportanceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DistributionRegime::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| ImportanceError::Invalid(format!("unknown regime `{s}`")))
    }
}

/// Normalized probability table over term signatures with its token marginal.
#[derive(Clone, Debug, PartialEq)]
pub struct ImportanceTable {
    signatures: Vec<String>,
    probs: Vec<f64>,
    token_names: Vec<String>,
    token_marginal: Vec<f64>,
}

impl ImportanceTable {
    /// Normalizes nonnegative weights into a table.
    pub fn from_weights(weights: BTreeMap<String, f64>) -> Result<Self, ImportanceError> {
        if let Some((s, w)) = weights.iter().find(|(_, w)| !w.is_finite() || **w < 0.0) {
            return Err(ImportanceError::Invalid(format!(
                "weight {w} for `{s}` is not a nonnegative number"
            )));
        }
        let total: f64 = weights.values().sum();
        if !(total > 0.0) {
            return Err(ImportanceError::ZeroTotal);
        }
        let (signatures, probs): (Vec<String>, Vec<f64>) =
            weights.into_iter().map(|(s, w)| (s, w / total)).unzip();

        let mut marginal: BTreeMap<String, f64> = BTreeMap::new();
        for (sig, p) in signatures.iter().zip(&probs) {
            let tokens: BTreeSet<&str> = sig.split('*').collect();
            for t in tokens {
                *marginal.entry(t.to_string()).or_default() += p;
            }
        }
        let marginal_total: f64 = marginal.values().sum();
        let (token_names, token_marginal) = marginal
            .into_iter()
            .map(|(t, p)| (t, p / marginal_total))
            .unzip();
        Ok(ImportanceTable {
            signatures,
            probs,
            token_names,
            token_marginal,
        })
    }

    pub fn probability(&self, signature: &str) -> f64 {
        self.signatures
            .binary_search_by(|s| s.as_str().cmp(signature))
            .map(|i| self.probs[i])
            .unwrap_or(0.0)
    }

    pub fn token_probability(&self, token: &str) -> f64 {
        self.token_names
            .binary_search_by(|s| s.as_str().cmp(token))
            .map(|i| self.token_marginal[i])
            .unwrap_or(0.0)
    }

    pub fn probs(&self) -> impl Iterator<Item = (&str, f64)> {
        self.signatures
            .iter()
            .map(String::as_str)
            .zip(self.probs.iter().copied())
    }

    pub fn token_marginal(&self) -> impl Iterator<Item = (&str, f64)> {
        self.token_names
            .iter()
            .map(String::as_str)
            .zip(self.token_marginal.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.signatures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signatures.is_empty()
    }

    /// Re-keys the table onto a vocabulary: unknown signatures are an error,
    /// vocabulary terms absent from the table get probability zero.
    pub fn aligned_to(&self, vocabulary: &TermVocabulary) -> Result<Self, ImportanceError> {
        if let Some(s) = self.signatures.iter().find(|s| !vocabulary.contains(s)) {
            return Err(ImportanceError::Invalid(format!(
                "term `{s}` is not in the vocabulary"
            )));
        }
        let weights = vocabulary
            .signatures()
            .map(|s| (s.to_string(), self.probability(s)))
            .collect();
        Self::from_weights(weights)
    }

    /// `{signature: probability}` JSON object.
    pub fn to_json(&self) -> String {
        let map: BTreeMap<&str, f64> = self.probs().collect();
        serde_json::to_string_pretty(&map).expect("string-keyed map serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ImportanceError> {
        let map: BTreeMap<String, f64> =
            serde_json::from_str(text).map_err(|e| ImportanceError::Invalid(e.to_string()))?;
        let total: f64 = map.values().sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(ImportanceError::Invalid(format!(
                "probabilities sum to {total}, expected 1"
            )));
        }
        Self::from_weights(map)
    }

    /// Draws a signature with probability proportional to its table entry,
    /// restricted to signatures outside `exclude`.
    pub fn sample_term<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        exclude: &BTreeSet<String>,
    ) -> Result<&str, ImportanceError> {
        let weights =
            self.signatures
                .iter()
                .zip(&self.probs)
                .map(|(s, p)| if exclude.contains(s) { 0.0 } else { *p });
        let dist = WeightedIndex::new(weights).map_err(|_| ImportanceError::EmptySupport)?;
        Ok(&self.signatures[dist.sample(rng)])
    }

    /// Draws a token name by its marginal importance, skipping `exclude`.
    pub fn sample_token<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        exclude: &str,
    ) -> Result<&str, ImportanceError> {
        let weights = self
            .token_names
            .iter()
            .zip(&self.token_marginal)
            .map(|(t, p)| if t == exclude { 0.0 } else { *p });
        let dist = WeightedIndex::new(weights).map_err(|_| ImportanceError::EmptySupport)?;
        Ok(&self.token_names[dist.sample(rng)])
    }
}

/// Turns generator counts into the importance table of a regime.
pub fn build_distribution(
    counts: &CountTable,
    regime: DistributionRegime,
    boost_terms: &BTreeSet<String>,
) -> Result<ImportanceTable, ImportanceError> {
    if !(counts.total() > 0.0) {
        return Err(ImportanceError::ZeroTotal);
    }
    let weights: BTreeMap<String, f64> = match regime {
        DistributionRegime::Fixed => counts.counts.clone(),
        DistributionRegime::Uniform => counts.counts.keys().map(|s| (s.clone(), 1.0)).collect(),
        DistributionRegime::Biased | DistributionRegime::HighlyBiased => {
            if boost_terms.is_empty() {
                return Err(ImportanceError::EmptyBoost);
            }
            if let Some(s) = boost_terms.iter().find(|s| !counts.counts.contains_key(*s)) {
                return Err(ImportanceError::UnknownBoost(s.clone()));
            }
            let factor = regime
                .boost_factor()
                .expect("biased regimes carry a factor");
            counts
                .counts
                .iter()
                .map(|(s, c)| {
                    let c = if boost_terms.contains(s) {
                        c * factor
                    } else {
                        *c
                    };
                    (s.clone(), c)
                })
                .collect()
        }
    };
    ImportanceTable::from_weights(weights)
}
