//! Scoring discovered equations against a known ground truth and ranking
//! regimes run by run.

use std::collections::BTreeMap;

use num_traits::{FromPrimitive, Signed};
use serde::{Deserialize, Serialize};

use crate::genotype::EquationModel;
use crate::grid_data::GroundTruthEquation;

/// Two MAEs closer than this count as a tie when ranking a row. Differences
/// below it are solver noise, not better recoveries.
pub const TIE_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Recovered,
    NotRecovered,
}

impl RunStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            RunStatus::Recovered => "recovered",
            RunStatus::NotRecovered => "n/a",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunVerdict {
    pub status: RunStatus,
    pub mae: Option<f64>,
    /// Surviving terms that are not part of the ground truth, normalized.
    pub noise_terms: Vec<(String, f64)>,
    pub elapsed_s: f64,
    pub equation: String,
}

impl RunVerdict {
    pub fn is_recovered(&self) -> bool {
        self.status == RunStatus::Recovered
    }
}

/// Outcome of scoring coefficient lists in an arbitrary number type.
#[derive(Clone, Debug, PartialEq)]
pub enum Score<T> {
    Recovered {
        mae: T,
        normalized: Vec<(String, T)>,
        noise: Vec<(String, T)>,
    },
    NotRecovered,
}

/// Normalizes `model` so its coefficient on `normalization` matches the
/// truth's, then averages the absolute coefficient errors over the truth
/// terms. Any truth term missing (or zero) in the model means no recovery.
pub fn score_coefficients<T>(
    model: &[(String, T)],
    truth: &[(String, T)],
    normalization: &str,
) -> Score<T>
where
    T: Signed + FromPrimitive + Clone,
{
    let lookup = |sig: &str| {
        model
            .iter()
            .find(|(s, c)| s == sig && !c.is_zero())
            .map(|(_, c)| c.clone())
    };
    let (Some(model_norm), Some(truth_norm)) = (
        lookup(normalization),
        truth
            .iter()
            .find(|(s, _)| s == normalization)
            .map(|(_, c)| c.clone()),
    ) else {
        return Score::NotRecovered;
    };
    if truth.iter().any(|(s, _)| lookup(s).is_none()) {
        return Score::NotRecovered;
    }
    let factor = truth_norm / model_norm;
    let normalized: Vec<(String, T)> = model
        .iter()
        .map(|(s, c)| (s.clone(), c.clone() * factor.clone()))
        .collect();
    let mut total = T::zero();
    for (sig, c_truth) in truth {
        let c = normalized
            .iter()
            .find(|(s, _)| s == sig)
            .map(|(_, c)| c.clone())
            .expect("checked above");
        total = total + (c - c_truth.clone()).abs();
    }
    let n = T::from_usize(truth.len()).expect("term count fits the number type");
    let noise = normalized
        .iter()
        .filter(|(s, _)| !truth.iter().any(|(t, _)| t == s))
        .cloned()
        .collect();
    Score::Recovered {
        mae: total / n,
        normalized,
        noise,
    }
}

/// Scores an evaluated model against the ground truth.
pub fn canonicalize_and_score(model: &EquationModel, truth: &GroundTruthEquation) -> RunVerdict {
    let equation = model.render();
    let coefs: Vec<(String, f64)> = model
        .terms
        .iter()
        .zip(&model.coefficients)
        .map(|(t, c)| (t.signature().to_string(), *c))
        .collect();
    match score_coefficients(&coefs, &truth.terms, &truth.normalization_term) {
        Score::Recovered { mae, noise, .. } if mae.is_finite() => RunVerdict {
            status: RunStatus::Recovered,
            mae: Some(mae),
            noise_terms: noise,
            elapsed_s: 0.0,
            equation,
        },
        _ => RunVerdict {
            status: RunStatus::NotRecovered,
            mae: None,
            noise_terms: Vec::new(),
            elapsed_s: 0.0,
            equation,
        },
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeSummary {
    pub runs: usize,
    pub recovered: usize,
    /// Rows in which this regime reached the row's smallest MAE.
    pub min_mae_run_count: usize,
    pub recovery_rate: f64,
    pub median_elapsed_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    /// Verdicts per regime, indexed by run.
    pub verdicts: BTreeMap<String, Vec<RunVerdict>>,
    /// `flags[regime][run]`: the regime reached the row minimum.
    pub flags: BTreeMap<String, Vec<bool>>,
    pub summary: BTreeMap<String, RegimeSummary>,
    /// Number of run rows compared.
    pub rows: usize,
}

impl ExperimentReport {
    /// Fraction of rows in which `regime` reached the minimal MAE.
    pub fn min_mae_share(&self, regime: &str) -> f64 {
        match self.summary.get(regime) {
            Some(s) if self.rows > 0 => s.min_mae_run_count as f64 / self.rows as f64,
            _ => 0.0,
        }
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Ranks regimes row by row (row = run index) and summarizes each regime.
/// Every regime within [`TIE_TOLERANCE`] of a row's minimal MAE is flagged.
pub fn aggregate(verdicts: BTreeMap<String, Vec<RunVerdict>>) -> ExperimentReport {
    let rows = verdicts.values().map(Vec::len).max().unwrap_or(0);
    let mut flags: BTreeMap<String, Vec<bool>> = verdicts
        .iter()
        .map(|(r, v)| (r.clone(), vec![false; v.len()]))
        .collect();
    for row in 0..rows {
        let best = verdicts
            .values()
            .filter_map(|v| v.get(row).and_then(|x| x.mae))
            .fold(f64::INFINITY, f64::min);
        if !best.is_finite() {
            continue;
        }
        for (regime, v) in &verdicts {
            if let Some(mae) = v.get(row).and_then(|x| x.mae) {
                if mae <= best + TIE_TOLERANCE {
                    flags.get_mut(regime).expect("same keys")[row] = true;
                }
            }
        }
    }
    let summary = verdicts
        .iter()
        .map(|(regime, v)| {
            let recovered = v.iter().filter(|x| x.is_recovered()).count();
            let s = RegimeSummary {
                runs: v.len(),
                recovered,
                min_mae_run_count: flags[regime].iter().filter(|f| **f).count(),
                recovery_rate: if v.is_empty() {
                    0.0
                } else {
                    recovered as f64 / v.len() as f64
                },
                median_elapsed_s: median(v.iter().map(|x| x.elapsed_s).collect()),
            };
            (regime.clone(), s)
        })
        .collect();
    ExperimentReport {
        verdicts,
        flags,
        summary,
        rows,
    }
}

/// Pools several reports (e.g. one per benchmark problem): rows, verdicts
/// and flag counts add up.
pub fn pool<'a>(reports: impl IntoIterator<Item = &'a ExperimentReport>) -> ExperimentReport {
    let mut out = ExperimentReport {
        verdicts: BTreeMap::new(),
        flags: BTreeMap::new(),
        summary: BTreeMap::new(),
        rows: 0,
    };
    for r in reports {
        for (regime, v) in &r.verdicts {
            out.verdicts
                .entry(regime.clone())
                .or_default()
                .extend(v.iter().cloned());
            out.flags
                .entry(regime.clone())
                .or_default()
                .extend(r.flags[regime].iter().copied());
        }
        out.rows += r.rows;
    }
    for (regime, v) in &out.verdicts {
        let recovered = v.iter().filter(|x| x.is_recovered()).count();
        out.summary.insert(
            regime.clone(),
            RegimeSummary {
                runs: v.len(),
                recovered,
                min_mae_run_count: out.flags[regime].iter().filter(|f| **f).count(),
                recovery_rate: if v.is_empty() {
                    0.0
                } else {
                    recovered as f64 / v.len() as f64
                },
                median_elapsed_s: median(v.iter().map(|x| x.elapsed_s).collect()),
            },
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genotype::{Term, Token};
    use crate::grid_data::ProblemId;
    use num_rational::Ratio;
    use proptest::prelude::*;

    fn model(pairs: &[(&str, f64)]) -> EquationModel {
        let terms = pairs
            .iter()
            .map(|(s, _)| {
                let tokens = s.split('*').map(|n| Token::from_name(n).unwrap()).collect();
                Term::new(tokens, 3).unwrap()
            })
            .collect();
        let mut m = EquationModel::new(terms);
        m.coefficients = pairs.iter().map(|(_, c)| *c).collect();
        m
    }

    fn verdict(mae: Option<f64>) -> RunVerdict {
        RunVerdict {
            status: if mae.is_some() {
                RunStatus::Recovered
            } else {
                RunStatus::NotRecovered
            },
            mae,
            noise_terms: Vec::new(),
            elapsed_s: 1.0,
            equation: "x".into(),
        }
    }

    #[test]
    fn exact_burgers_model_scores_zero() {
        let truth = ProblemId::BurgersInviscid.ground_truth();
        let v = canonicalize_and_score(&model(&[("du/dt", 1.0), ("du/dx*u", 1.0)]), &truth);
        assert_eq!(v.status, RunStatus::Recovered);
        assert_eq!(v.mae, Some(0.0));
        assert!(v.noise_terms.is_empty());
        // Fitted form with target at -1 scores the same.
        let v = canonicalize_and_score(&model(&[("du/dt", -1.0), ("du/dx*u", -1.0)]), &truth);
        assert_eq!(v.mae, Some(0.0));
    }

    #[test]
    fn worked_kdv_example_is_exact_in_rationals() {
        let r = |n: i64, d: i64| Ratio::new(n, d);
        let model = vec![
            ("du/dt".to_string(), r(2, 1)),
            ("du/dx*u".to_string(), r(1206, 100)),
            ("d^3u/dx^3".to_string(), r(1994, 1000)),
        ];
        let truth = vec![
            ("du/dt".to_string(), r(1, 1)),
            ("du/dx*u".to_string(), r(6, 1)),
            ("d^3u/dx^3".to_string(), r(1, 1)),
        ];
        match score_coefficients(&model, &truth, "du/dt") {
            Score::Recovered {
                mae,
                normalized,
                noise,
            } => {
                assert_eq!(mae, r(11, 1000));
                assert_eq!(normalized[1].1, r(603, 100));
                assert_eq!(normalized[2].1, r(997, 1000));
                assert!(noise.is_empty());
            }
            Score::NotRecovered => panic!("expected recovery"),
        }
    }

    #[test]
    fn missing_truth_term_is_not_recovered() {
        let truth = ProblemId::BurgersInviscid.ground_truth();
        let v = canonicalize_and_score(&model(&[("du/dt", -1.0), ("u", 0.5)]), &truth);
        assert_eq!(v.status, RunStatus::NotRecovered);
        assert_eq!(v.mae, None);
        let unevaluated = EquationModel::new(model(&[("du/dt", 1.0), ("du/dx*u", 1.0)]).terms);
        assert!(!canonicalize_and_score(&unevaluated, &truth).is_recovered());
    }

    #[test]
    fn noise_terms_are_reported_not_scored() {
        let truth = ProblemId::BurgersInviscid.ground_truth();
        let v = canonicalize_and_score(
            &model(&[("du/dt", -2.0), ("du/dx*u", -2.0), ("u", 0.001)]),
            &truth,
        );
        assert_eq!(v.mae, Some(0.0));
        assert_eq!(v.noise_terms, vec![("u".to_string(), -0.0005)]);
    }

    #[test]
    fn wrong_sign_still_counts_as_recovered() {
        let truth = ProblemId::BurgersInviscid.ground_truth();
        let v = canonicalize_and_score(&model(&[("du/dt", 1.0), ("du/dx*u", -1.0)]), &truth);
        assert_eq!(v.mae, Some(1.0));
    }

    #[test]
    fn table_six_shares() {
        // 15 ties, 24 biased-only wins, 11 classical-only wins.
        let mut biased = Vec::new();
        let mut classical = Vec::new();
        for row in 0..50 {
            let (b, c) = match row {
                0..15 => (0.01, 0.01),
                15..39 => (0.01, 0.02),
                _ => (0.02, 0.01),
            };
            biased.push(verdict(Some(b)));
            classical.push(verdict(Some(c)));
        }
        let report = aggregate(BTreeMap::from([
            ("biased".to_string(), biased),
            ("classical".to_string(), classical),
        ]));
        assert_eq!(report.summary["biased"].min_mae_run_count, 39);
        assert_eq!(report.summary["classical"].min_mae_run_count, 26);
        assert_eq!(report.min_mae_share("biased"), 0.78);
        assert_eq!(report.min_mae_share("classical"), 0.52);
    }

    #[test]
    fn ties_flag_everyone_and_na_flags_no_one() {
        let report = aggregate(BTreeMap::from([
            ("a".to_string(), vec![verdict(Some(0.5)), verdict(None)]),
            ("b".to_string(), vec![verdict(Some(0.5)), verdict(None)]),
        ]));
        assert_eq!(report.flags["a"], vec![true, false]);
        assert_eq!(report.flags["b"], vec![true, false]);

        let report = aggregate(BTreeMap::from([(
            "only".to_string(),
            vec![verdict(None), verdict(None)],
        )]));
        assert_eq!(report.summary["only"].recovery_rate, 0.0);
        assert_eq!(report.summary["only"].min_mae_run_count, 0);
        assert_eq!(report.summary["only"].median_elapsed_s, 1.0);
    }

    #[test]
    fn pooling_sums_counts() {
        let one = aggregate(BTreeMap::from([
            ("a".to_string(), vec![verdict(Some(0.1))]),
            ("b".to_string(), vec![verdict(Some(0.2))]),
        ]));
        let two = aggregate(BTreeMap::from([
            ("a".to_string(), vec![verdict(None)]),
            ("b".to_string(), vec![verdict(Some(0.2))]),
        ]));
        let p = pool([&one, &two]);
        assert_eq!(p.rows, 2);
        assert_eq!(p.summary["a"].min_mae_run_count, 1);
        assert_eq!(p.summary["b"].min_mae_run_count, 1);
        assert_eq!(p.summary["a"].recovered, 1);
        assert_eq!(p.min_mae_share("b"), 0.5);
    }

    proptest! {
        #[test]
        fn score_is_invariant_under_rescaling(
            a in 0.1f64..10.0, b in -10.0f64..10.0, c in -10.0f64..10.0, k in prop_oneof![-100.0f64..-0.01, 0.01f64..100.0],
        ) {
            let truth = ProblemId::KdvHomogeneous.ground_truth();
            let base = model(&[("du/dt", a), ("du/dx*u", b), ("d^3u/dx^3", c), ("u", 0.3)]);
            let mut scaled = base.clone();
            for x in scaled.coefficients.iter_mut() {
                *x *= k;
            }
            let (v1, v2) = (canonicalize_and_score(&base, &truth), canonicalize_and_score(&scaled, &truth));
            prop_assert_eq!(v1.status, v2.status);
            if let (Some(m1), Some(m2)) = (v1.mae, v2.mae) {
                prop_assert!((m1 - m2).abs() <= 1e-12 * (1.0 + m1));
            }
        }

        #[test]
        fn every_recovered_row_flags_someone(maes in proptest::collection::vec(proptest::option::of(0.0f64..1.0), 3)) {
            let verdicts: BTreeMap<String, Vec<RunVerdict>> = maes
                .iter()
                .enumerate()
                .map(|(i, m)| (format!("r{i}"), vec![verdict(*m)]))
                .collect();
            let report = aggregate(verdicts);
            let flagged: usize = report.summary.values().map(|s| s.min_mae_run_count).sum();
            if maes.iter().any(Option::is_some) {
                prop_assert!(flagged >= 1);
            } else {
                prop_assert_eq!(flagged, 0);
            }
        }
    }
}
