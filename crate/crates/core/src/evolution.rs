//! The population loop: evaluation, elitism, tournament selection, crossover
//! and mutation, in classical (uniform) or directed (importance-weighted)
//! flavour.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, ImportanceError};
use crate::fitness::{evaluate, FitnessConfig, FitnessResult, TermCache};
use crate::genotype::{generate_term, EquationModel, Term, TermVocabulary, TokenFamilies};
use crate::importance::ImportanceTable;
use crate::seeding;

/// Resampling attempts before an operator gives up and leaves its input alone.
pub const OPERATOR_ATTEMPTS: usize = 8;

const INIT_STREAM: u64 = 1;
const OPERATOR_STREAM: u64 = 2;
const EVAL_STREAM: u64 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Classical,
    Directed,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Classical => "classical",
            Mode::Directed => "directed",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "classical" => Ok(Mode::Classical),
            "directed" => Ok(Mode::Directed),
            other => Err(Error::Config(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvolutionConfig {
    pub population_size: usize,
    pub generations: usize,
    pub crossover_rate: f64,
    pub token_mutation_rate: f64,
    pub term_mutation_rate: f64,
    pub mode: Mode,
    /// Terms per individual at initialization.
    pub n_terms: usize,
    /// Maximum factors per term.
    pub t_max: usize,
    pub seed: u64,
    pub elitism: usize,
    pub tournament_size: usize,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        EvolutionConfig {
            population_size: 64,
            generations: 100,
            crossover_rate: 0.8,
            token_mutation_rate: 0.3,
            term_mutation_rate: 0.3,
            mode: Mode::Classical,
            n_terms: 5,
            t_max: 2,
            seed: 0,
            elitism: 1,
            tournament_size: 2,
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<(), Error> {
        let bad = |msg: String| Err(Error::Config(msg));
        for (name, rate) in [
            ("crossover_rate", self.crossover_rate),
            ("token_mutation_rate", self.token_mutation_rate),
            ("term_mutation_rate", self.term_mutation_rate),
        ] {
            if !(0.0..=1.0).contains(&rate) {
                return bad(format!("{name} must lie in [0, 1], got {rate}"));
            }
        }
        if self.population_size < 4 {
            return bad(format!(
                "population_size must be at least 4, got {}",
                self.population_size
            ));
        }
        if self.elitism >= self.population_size {
            return bad("elitism must be smaller than population_size".into());
        }
        if self.n_terms < 2 {
            return bad("n_terms must be at least 2".into());
        }
        if self.t_max == 0 {
            return bad("t_max must be at least 1".into());
        }
        if self.tournament_size == 0 {
            return bad("tournament_size must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Individual {
    pub model: EquationModel,
    /// `None` until evaluated; reset whenever an operator changes the model.
    pub fitness: Option<FitnessResult>,
}

impl Individual {
    pub fn new(model: EquationModel) -> Self {
        Individual {
            model,
            fitness: None,
        }
    }

    pub fn fitness_value(&self) -> f64 {
        self.fitness.as_ref().map_or(0.0, |f| f.fitness)
    }

    /// Total number of factors over all terms.
    pub fn complexity(&self) -> usize {
        self.model.terms.iter().map(Term::len).sum()
    }

    /// Whether `self` ranks above `other`: higher fitness, then (for equal
    /// fitness, e.g. two exact models at the cap) lower complexity.
    pub fn beats(&self, other: &Individual) -> bool {
        match self.fitness_value().total_cmp(&other.fitness_value()) {
            std::cmp::Ordering::Greater => true,
            std::cmp::Ordering::Less => false,
            std::cmp::Ordering::Equal => self.complexity() < other.complexity(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Population {
    pub individuals: Vec<Individual>,
    pub generation: usize,
}

impl Population {
    /// Index of the fittest individual; ties go to the lowest index.
    pub fn best_index(&self) -> usize {
        let mut best = 0;
        for (i, ind) in self.individuals.iter().enumerate() {
            if ind.beats(&self.individuals[best]) {
                best = i;
            }
        }
        best
    }

    pub fn best(&self) -> &Individual {
        &self.individuals[self.best_index()]
    }

    pub fn mean_fitness(&self) -> f64 {
        let n = self.individuals.len() as f64;
        self.individuals
            .iter()
            .map(Individual::fitness_value)
            .sum::<f64>()
            / n
    }
}

/// What the operators need to know about the search space.
#[derive(Clone, Copy)]
pub struct OperatorContext<'a> {
    pub mode: Mode,
    pub importance: Option<&'a ImportanceTable>,
    pub vocabulary: &'a TermVocabulary,
    pub families: &'a TokenFamilies,
}

impl OperatorContext<'_> {
    fn table(&self) -> Option<&ImportanceTable> {
        match self.mode {
            Mode::Classical => None,
            Mode::Directed => self.importance,
        }
    }

    /// Importance-weighted vocabulary term outside `exclude`, falling back to
    /// a uniform draw when the table puts no mass on what is left.
    fn sample_directed_term<R: Rng + ?Sized>(
        &self,
        table: &ImportanceTable,
        rng: &mut R,
        exclude: &BTreeSet<String>,
    ) -> Option<Term> {
        match table.sample_term(rng, exclude) {
            Ok(sig) => self.vocabulary.get(sig).cloned(),
            Err(_) => {
                let rest: Vec<&Term> = self
                    .vocabulary
                    .terms()
                    .iter()
                    .filter(|t| !exclude.contains(t.signature()))
                    .collect();
                if rest.is_empty() {
                    None
                } else {
                    Some(rest[rng.random_range(0..rest.len())].clone())
                }
            }
        }
    }

    fn fresh_term<R: Rng + ?Sized>(&self, rng: &mut R, exclude: &BTreeSet<String>) -> Option<Term> {
        match self.table() {
            Some(table) => self.sample_directed_term(table, rng, exclude),
            None => generate_term(rng, self.vocabulary.max_factors(), self.families, exclude).ok(),
        }
    }
}

/// Builds `cfg.population_size` individuals of `cfg.n_terms` distinct terms.
pub fn initialize<R: Rng + ?Sized>(
    cfg: &EvolutionConfig,
    ctx: &OperatorContext<'_>,
    rng: &mut R,
) -> Result<Population, Error> {
    if ctx.vocabulary.len() < cfg.n_terms {
        return Err(Error::Config(format!(
            "vocabulary has {} terms, fewer than n_terms = {}",
            ctx.vocabulary.len(),
            cfg.n_terms
        )));
    }
    if ctx.mode == Mode::Directed && ctx.importance.is_none() {
        return Err(
            ImportanceError::Invalid("directed mode needs an importance table".into()).into(),
        );
    }
    let mut individuals = Vec::with_capacity(cfg.population_size);
    for _ in 0..cfg.population_size {
        let mut terms: Vec<Term> = Vec::with_capacity(cfg.n_terms);
        let mut present = BTreeSet::new();
        while terms.len() < cfg.n_terms {
            let term = match ctx.table() {
                Some(table) => ctx
                    .sample_directed_term(table, rng, &present)
                    .expect("vocabulary larger than n_terms"),
                None => generate_term(rng, ctx.vocabulary.max_factors(), ctx.families, &present)?,
            };
            present.insert(term.signature().to_string());
            terms.push(term);
        }
        individuals.push(Individual::new(EquationModel::new(terms)));
    }
    Ok(Population {
        individuals,
        generation: 0,
    })
}

fn pick_weighted<R: Rng + ?Sized>(rng: &mut R, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return rng.random_range(0..weights.len());
    }
    let mut r = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if r < *w {
            return i;
        }
        r -= w;
    }
    // Rounding left r just above the last positive weight.
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

/// Index of the term in `model` that takes part in a crossover.
fn crossover_point<R: Rng + ?Sized>(
    model: &EquationModel,
    ctx: &OperatorContext<'_>,
    rng: &mut R,
) -> usize {
    match ctx.table() {
        None => rng.random_range(0..model.len()),
        Some(table) => {
            let weights: Vec<f64> = model
                .terms
                .iter()
                .map(|t| {
                    t.tokens()
                        .iter()
                        .map(|tok| table.token_probability(tok.name()))
                        .fold(0.0, f64::max)
                })
                .collect();
            pick_weighted(rng, &weights)
        }
    }
}

fn reset(mut model: EquationModel) -> EquationModel {
    model.coefficients.clear();
    model.target_index = None;
    model
}

/// Swaps one term between the parents. Swaps that would duplicate a
/// signature are redrawn; after [`OPERATOR_ATTEMPTS`] failures the parents
/// come back unchanged.
pub fn crossover<R: Rng + ?Sized>(
    a: &EquationModel,
    b: &EquationModel,
    ctx: &OperatorContext<'_>,
    rng: &mut R,
) -> (EquationModel, EquationModel) {
    let rules = ctx.vocabulary.rules();
    for _ in 0..OPERATOR_ATTEMPTS {
        let i = crossover_point(a, ctx, rng);
        let j = crossover_point(b, ctx, rng);
        let (ta, tb) = (&a.terms[i], &b.terms[j]);
        if ta.signature() == tb.signature()
            || a.contains(tb.signature())
            || b.contains(ta.signature())
        {
            continue;
        }
        let mut ca = reset(a.clone());
        let mut cb = reset(b.clone());
        ca.terms[i] = tb.clone();
        cb.terms[j] = ta.clone();
        if ca.is_valid(&rules) && cb.is_valid(&rules) {
            return (ca, cb);
        }
    }
    (a.clone(), b.clone())
}

fn mutate_token<R: Rng + ?Sized>(
    model: &EquationModel,
    ctx: &OperatorContext<'_>,
    rng: &mut R,
) -> Option<EquationModel> {
    let pool = ctx.vocabulary.tokens();
    for _ in 0..OPERATOR_ATTEMPTS {
        let i = rng.random_range(0..model.len());
        let term = &model.terms[i];
        let p = rng.random_range(0..term.len());
        let old = &term.tokens()[p];
        let replacement = match ctx.table() {
            Some(table) => match table.sample_token(rng, old.name()) {
                Ok(name) => pool.iter().find(|t| t.name() == name),
                Err(_) => None,
            },
            None => None,
        };
        let replacement = match replacement {
            Some(t) => t.clone(),
            None => {
                let others: Vec<_> = pool.iter().filter(|t| *t != old).collect();
                if others.is_empty() {
                    return None;
                }
                others[rng.random_range(0..others.len())].clone()
            }
        };
        let mut tokens = term.tokens().to_vec();
        tokens[p] = replacement;
        let Some(new_term) = ctx.vocabulary.term_for(&tokens) else {
            continue;
        };
        if model.contains(new_term.signature()) {
            continue;
        }
        let mut out = model.clone();
        out.terms[i] = new_term.clone();
        return Some(out);
    }
    None
}

fn mutate_term<R: Rng + ?Sized>(
    model: &EquationModel,
    ctx: &OperatorContext<'_>,
    rng: &mut R,
) -> Option<EquationModel> {
    let i = rng.random_range(0..model.len());
    let present = model.signatures();
    let term = ctx.fresh_term(rng, &present)?;
    let mut out = model.clone();
    out.terms[i] = term;
    Some(out)
}

/// Token mutation then term mutation, each applied with its own rate.
/// Operators that cannot find a valid change leave the model alone.
pub fn mutate<R: Rng + ?Sized>(
    model: &EquationModel,
    ctx: &OperatorContext<'_>,
    rng: &mut R,
    cfg: &EvolutionConfig,
) -> EquationModel {
    let mut current = model.clone();
    let mut changed = false;
    if rng.random::<f64>() < cfg.token_mutation_rate {
        if let Some(m) = mutate_token(&current, ctx, rng) {
            current = m;
            changed = true;
        }
    }
    if rng.random::<f64>() < cfg.term_mutation_rate {
        if let Some(m) = mutate_term(&current, ctx, rng) {
            current = m;
            changed = true;
        }
    }
    debug_assert!(
        current.is_valid(&ctx.vocabulary.rules()) || !model.is_valid(&ctx.vocabulary.rules())
    );
    if changed {
        reset(current)
    } else {
        current
    }
}

fn tournament<R: Rng + ?Sized>(pop: &Population, size: usize, rng: &mut R) -> usize {
    let n = pop.individuals.len();
    let mut best = rng.random_range(0..n);
    for _ in 1..size {
        let c = rng.random_range(0..n);
        if pop.individuals[c].beats(&pop.individuals[best]) {
            best = c;
        }
    }
    best
}

/// Evaluates every individual without a cached fitness. Each evaluation
/// draws from its own stream keyed by (seed, generation, index), so the
/// result does not depend on how rayon schedules the work.
pub fn evaluate_population(
    pop: &mut Population,
    cache: &TermCache,
    fitness_cfg: &FitnessConfig,
    seed: u64,
) {
    let generation = pop.generation as u64;
    pop.individuals
        .par_iter_mut()
        .enumerate()
        .filter(|(_, ind)| ind.fitness.is_none())
        .for_each(|(i, ind)| {
            let mut rng = seeding::stream(seed, &[EVAL_STREAM, generation, i as u64]);
            let mut model = ind.model.clone();
            let result = match evaluate(&mut model, cache, &mut rng, fitness_cfg) {
                Ok(r) => {
                    if r.fitness > 0.0 {
                        ind.model = model;
                    }
                    r
                }
                Err(_) => FitnessResult::unfit(""),
            };
            ind.fitness = Some(result);
        });
}

/// One line of the run log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: usize,
    pub best_fitness: f64,
    pub best_equation: String,
    pub mean_fitness: f64,
    pub elapsed_s: f64,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub records: Vec<GenerationRecord>,
    /// Best model of each generation, parallel to `records`.
    pub best_models: Vec<EquationModel>,
    pub population: Population,
    pub elapsed_s: f64,
}

impl RunOutcome {
    pub fn best(&self) -> &EquationModel {
        self.best_models
            .last()
            .expect("at least the initial generation")
    }

    pub fn best_fitness(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.best_fitness).collect()
    }
}

/// Runs the whole evolution. When `log` is given, one JSON line per
/// generation is written to it.
pub fn run(
    cfg: &EvolutionConfig,
    cache: &TermCache,
    fitness_cfg: &FitnessConfig,
    importance: Option<&ImportanceTable>,
    mut log: Option<&mut dyn Write>,
) -> Result<RunOutcome, Error> {
    cfg.validate()?;
    let vocabulary = cache.vocabulary();
    if vocabulary.max_factors() != cfg.t_max {
        return Err(Error::Config(format!(
            "vocabulary built for {} factors per term, config asks for {}",
            vocabulary.max_factors(),
            cfg.t_max
        )));
    }
    let importance = match (cfg.mode, importance) {
        (Mode::Directed, None) => {
            return Err(Error::Config(
                "directed mode needs an importance table".into(),
            ))
        }
        (Mode::Directed, Some(t)) => Some(t.aligned_to(vocabulary)?),
        (Mode::Classical, _) => None,
    };
    let families = vocabulary.families();
    let ctx = OperatorContext {
        mode: cfg.mode,
        importance: importance.as_ref(),
        vocabulary,
        families: &families,
    };

    let start = Instant::now();
    let mut records = Vec::with_capacity(cfg.generations + 1);
    let mut best_models = Vec::with_capacity(cfg.generations + 1);
    let mut rng = seeding::stream(cfg.seed, &[INIT_STREAM]);
    let mut pop = initialize(cfg, &ctx, &mut rng)?;
    let mut rng = seeding::stream(cfg.seed, &[OPERATOR_STREAM]);

    loop {
        evaluate_population(&mut pop, cache, fitness_cfg, cfg.seed);
        let best = pop.best();
        let record = GenerationRecord {
            generation: pop.generation,
            best_fitness: best.fitness_value(),
            best_equation: best.model.render(),
            mean_fitness: pop.mean_fitness(),
            elapsed_s: start.elapsed().as_secs_f64(),
        };
        if let Some(w) = log.as_mut() {
            let line = serde_json::to_string(&record).expect("record serializes");
            writeln!(w, "{line}").map_err(|e| Error::Config(format!("writing run log: {e}")))?;
        }
        best_models.push(best.model.clone());
        records.push(record);
        if pop.generation >= cfg.generations {
            break;
        }
        pop = next_generation(&pop, cfg, &ctx, &mut rng);
    }
    Ok(RunOutcome {
        records,
        best_models,
        population: pop,
        elapsed_s: start.elapsed().as_secs_f64(),
    })
}

fn next_generation<R: Rng + ?Sized>(
    pop: &Population,
    cfg: &EvolutionConfig,
    ctx: &OperatorContext<'_>,
    rng: &mut R,
) -> Population {
    let n = pop.individuals.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let (x, y) = (&pop.individuals[a], &pop.individuals[b]);
        y.fitness_value()
            .total_cmp(&x.fitness_value())
            .then(x.complexity().cmp(&y.complexity()))
            .then(a.cmp(&b))
    });
    let mut next: Vec<Individual> = order[..cfg.elitism]
        .iter()
        .map(|&i| pop.individuals[i].clone())
        .collect();
    while next.len() < n {
        let pa = &pop.individuals[tournament(pop, cfg.tournament_size, rng)].model;
        let pb = &pop.individuals[tournament(pop, cfg.tournament_size, rng)].model;
        let (ca, cb) = if rng.random::<f64>() < cfg.crossover_rate {
            crossover(pa, pb, ctx, rng)
        } else {
            (pa.clone(), pb.clone())
        };
        for child in [ca, cb] {
            if next.len() < n {
                let child = mutate(&child, ctx, rng, cfg);
                next.push(Individual::new(child));
            }
        }
    }
    Population {
        individuals: next,
        generation: pop.generation + 1,
    }
}
