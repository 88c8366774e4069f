//! Multi-run experiments: every regime is run with the same per-run seeds,
//! the best model of each run is scored against the ground truth, and the
//! results are written as a CSV report, a JSON summary and per-run logs.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{DataError, Error};
use crate::evaluation::{aggregate, canonicalize_and_score, ExperimentReport, RegimeSummary};
use crate::evolution::{run, EvolutionConfig, Mode};
use crate::fitness::{FitnessConfig, TermCache};
use crate::genotype::{canonical_signature, EquationModel, StructuralRules, TermVocabulary, Token};
use crate::grid_data::FieldBundle;
use crate::importance::{
    build_distribution, estimate_counts, CountTable, DistributionRegime, ImportanceTable,
};
use crate::seeding;

pub const REPORT_FILE: &str = "report.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const LOG_DIR: &str = "logs";

const COUNT_STREAM: u64 = 10;
const RUN_STREAM: u64 = 11;

/// Classical operators, or directed ones driven by a distribution regime.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Regime {
    Classical,
    Directed(DistributionRegime),
}

impl Regime {
    pub const ALL: [Regime; 5] = [
        Regime::Classical,
        Regime::Directed(DistributionRegime::Fixed),
        Regime::Directed(DistributionRegime::Biased),
        Regime::Directed(DistributionRegime::HighlyBiased),
        Regime::Directed(DistributionRegime::Uniform),
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::Classical => "classical",
            Regime::Directed(d) => d.as_str(),
        }
    }

    pub fn mode(&self) -> Mode {
        match self {
            Regime::Classical => Mode::Classical,
            Regime::Directed(_) => Mode::Directed,
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Regime {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        if s == "classical" {
            return Ok(Regime::Classical);
        }
        s.parse::<DistributionRegime>()
            .map(Regime::Directed)
            .map_err(|_| {
                Error::Config(format!(
                    "unknown regime `{s}` (expected one of: classical, fixed, biased, highly_biased, uniform)"
                ))
            })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub regimes: Vec<String>,
    pub runs: usize,
    pub seed: u64,
    /// Operator settings; `seed` and `mode` are set per run and regime.
    pub evolution: EvolutionConfig,
    pub fitness: FitnessConfig,
    /// Generator sampling used to estimate the fixed distribution.
    pub count_runs: usize,
    pub count_draws: usize,
    /// Terms to boost in the biased regimes; defaults to the ground truth.
    pub boost_terms: Option<Vec<String>>,
    /// Importance table used for every directed regime instead of the
    /// estimated ones.
    pub distribution_file: Option<PathBuf>,
    /// When false, elapsed times are written as zero so reruns are
    /// byte-identical.
    pub record_timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            regimes: Regime::ALL.iter().map(|r| r.as_str().to_string()).collect(),
            runs: 10,
            seed: 0,
            evolution: EvolutionConfig::default(),
            fitness: FitnessConfig::default(),
            count_runs: 10,
            count_draws: 10_000,
            boost_terms: None,
            distribution_file: None,
            record_timing: true,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, Error> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<Self, Error> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Regimes in the order given, duplicates dropped.
    pub fn parsed_regimes(&self) -> Result<Vec<Regime>, Error> {
        let mut out: Vec<Regime> = Vec::new();
        for name in &self.regimes {
            let r: Regime = name.trim().parse()?;
            if !out.contains(&r) {
                out.push(r);
            }
        }
        if out.is_empty() {
            return Err(Error::Config("no regimes selected".into()));
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.runs == 0 {
            return Err(Error::Config("runs must be at least 1".into()));
        }
        if self.count_runs == 0 || self.count_draws == 0 {
            return Err(Error::Config(
                "count_runs and count_draws must be at least 1".into(),
            ));
        }
        self.parsed_regimes()?;
        self.evolution.validate()
    }

    /// Seed of run `run`, shared by every regime.
    pub fn run_seed(&self, run: usize) -> u64 {
        seeding::derive_seed(self.seed, &[RUN_STREAM, run as u64])
    }
}

/// Canonical signature of a term written as `*`-separated token names in
/// any order, e.g. `u*du/dx` becomes `du/dx*u`.
pub fn canonical_term(text: &str) -> Result<String, Error> {
    let tokens = text
        .split('*')
        .map(|t| Token::from_name(t.trim()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(canonical_signature(&tokens, tokens.len().max(1))?)
}

/// Generator term counts used by every directed regime of `cfg`.
pub fn generator_counts(cfg: &ExperimentConfig, vocabulary: &TermVocabulary) -> CountTable {
    let mut rng = seeding::stream(cfg.seed, &[COUNT_STREAM]);
    estimate_counts(cfg.count_runs, cfg.count_draws, &mut rng, vocabulary)
}

/// Importance tables for the directed regimes of `cfg`, keyed by regime name.
pub fn regime_tables(
    cfg: &ExperimentConfig,
    bundle: &FieldBundle,
    vocabulary: &TermVocabulary,
) -> Result<BTreeMap<String, ImportanceTable>, Error> {
    let regimes = cfg.parsed_regimes()?;
    let mut tables = BTreeMap::new();
    if let Some(path) = &cfg.distribution_file {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let table = ImportanceTable::from_json(&text)?.aligned_to(vocabulary)?;
        for r in regimes.iter().filter(|r| r.mode() == Mode::Directed) {
            tables.insert(r.as_str().to_string(), table.clone());
        }
        return Ok(tables);
    }
    if regimes.iter().all(|r| r.mode() == Mode::Classical) {
        return Ok(tables);
    }
    let counts = generator_counts(cfg, vocabulary);
    let boost = match &cfg.boost_terms {
        Some(list) => list
            .iter()
            .map(|s| canonical_term(s))
            .collect::<Result<_, _>>()?,
        None => bundle
            .ground_truth
            .as_ref()
            .map(|t| t.terms.iter().map(|(s, _)| s.clone()).collect())
            .unwrap_or_default(),
    };
    for r in regimes {
        if let Regime::Directed(d) = r {
            tables.insert(
                r.as_str().to_string(),
                build_distribution(&counts, d, &boost)?,
            );
        }
    }
    Ok(tables)
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub report: ExperimentReport,
    /// Best final model of every run, per regime.
    pub best_models: BTreeMap<String, Vec<EquationModel>>,
    pub tables: BTreeMap<String, ImportanceTable>,
}

#[derive(Serialize)]
struct Summary<'a> {
    seed: u64,
    runs: usize,
    rows: usize,
    regimes: &'a BTreeMap<String, RegimeSummary>,
    distribution_file: Option<String>,
    distributions: BTreeMap<&'a str, BTreeMap<&'a str, f64>>,
    config: &'a ExperimentConfig,
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| {
        Error::Data(DataError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Runs every regime `cfg.runs` times on `bundle`. With `out`, writes the
/// report, the summary and one JSON-lines log per run below it.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    bundle: &FieldBundle,
    out: Option<&Path>,
) -> Result<ExperimentOutcome, Error> {
    cfg.validate()?;
    let truth = bundle.ground_truth.as_ref().ok_or_else(|| {
        DataError::Manifest("dataset has no ground-truth equation to score against".into())
    })?;
    let vocabulary = TermVocabulary::from_field_names(
        bundle.field_names(),
        cfg.evolution.t_max,
        StructuralRules::default(),
    )?;
    let cache = TermCache::new(bundle, vocabulary)?;
    let tables = regime_tables(cfg, bundle, cache.vocabulary())?;
    if let Some(dir) = out {
        fs::create_dir_all(dir.join(LOG_DIR)).map_err(io_error(dir))?;
    }

    let mut verdicts = BTreeMap::new();
    let mut best_models = BTreeMap::new();
    for regime in cfg.parsed_regimes()? {
        let name = regime.as_str().to_string();
        let mut list = Vec::with_capacity(cfg.runs);
        let mut models = Vec::with_capacity(cfg.runs);
        for r in 0..cfg.runs {
            let evo = EvolutionConfig {
                seed: cfg.run_seed(r),
                mode: regime.mode(),
                ..cfg.evolution.clone()
            };
            let outcome = run(&evo, &cache, &cfg.fitness, tables.get(&name), None)?;
            let mut verdict = canonicalize_and_score(outcome.best(), truth);
            if cfg.record_timing {
                verdict.elapsed_s = outcome.elapsed_s;
            }
            if let Some(dir) = out {
                let path = dir.join(LOG_DIR).join(format!("{name}_run{r:02}.jsonl"));
                let mut text = String::new();
                for rec in &outcome.records {
                    let mut rec = rec.clone();
                    if !cfg.record_timing {
                        rec.elapsed_s = 0.0;
                    }
                    text.push_str(&serde_json::to_string(&rec).expect("record serializes"));
                    text.push('\n');
                }
                fs::write(&path, text).map_err(io_error(&path))?;
            }
            list.push(verdict);
            models.push(outcome.best().clone());
        }
        verdicts.insert(name.clone(), list);
        best_models.insert(name, models);
    }
    let report = aggregate(verdicts);
    if let Some(dir) = out {
        write_report(&report, &dir.join(REPORT_FILE))?;
        let summary = Summary {
            seed: cfg.seed,
            runs: cfg.runs,
            rows: report.rows,
            regimes: &report.summary,
            distribution_file: cfg
                .distribution_file
                .as_ref()
                .map(|p| p.display().to_string()),
            distributions: tables
                .iter()
                .map(|(k, t)| (k.as_str(), t.probs().collect()))
                .collect(),
            config: cfg,
        };
        let path = dir.join(SUMMARY_FILE);
        let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
        fs::write(&path, text + "\n").map_err(io_error(&path))?;
    }
    Ok(ExperimentOutcome {
        report,
        best_models,
        tables,
    })
}

/// `regime,run,status,mae,elapsed_s`, sorted by regime then run.
pub fn write_report(report: &ExperimentReport, path: &Path) -> Result<(), Error> {
    let csv_error = |source| {
        Error::Data(DataError::Csv {
            path: path.to_path_buf(),
            source,
        })
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record(["regime", "run", "status", "mae", "elapsed_s"])
        .map_err(csv_error)?;
    for (regime, list) in &report.verdicts {
        for (run, v) in list.iter().enumerate() {
            let mae = v.mae.map(|m| format!("{m:?}")).unwrap_or_default();
            w.write_record([
                regime.as_str(),
                &run.to_string(),
                v.status.as_str(),
                &mae,
                &format!("{:.6}", v.elapsed_s),
            ])
            .map_err(csv_error)?;
        }
    }
    w.flush().map_err(io_error(path))?;
    Ok(())
}
