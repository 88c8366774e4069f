use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use eqdisco::error::DataError;
use eqdisco::experiment::{
    canonical_term, generator_counts, run_experiment, ExperimentConfig, REPORT_FILE,
};
use eqdisco::genotype::{StructuralRules, TermVocabulary};
use eqdisco::grid_data::{generate_differenced, generate_manufactured, load_bundle, save_bundle};
use eqdisco::importance::{build_distribution, DistributionRegime};
use eqdisco::{Error, Grid, ProblemId};

#[derive(Parser)]
#[command(
    name = "eqdisco",
    version,
    about = "Discover PDEs from gridded field data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a benchmark dataset (manifest + field CSVs).
    Generate(GenerateArgs),
    /// Print or save the importance table of one regime.
    Distribution(DistributionArgs),
    /// Run the discovery experiment and write report.csv, summary.json and logs.
    Discover(DiscoverArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Derivatives {
    Exact,
    Fd,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    problem: String,
    #[arg(long, default_value_t = 101)]
    nx: usize,
    #[arg(long, default_value_t = 101)]
    nt: usize,
    /// Spatial domain as `lo,hi`; defaults to the problem's own.
    #[arg(long, value_parser = parse_range, allow_hyphen_values = true)]
    x_range: Option<(f64, f64)>,
    #[arg(long, value_parser = parse_range, allow_hyphen_values = true)]
    t_range: Option<(f64, f64)>,
    #[arg(long, value_enum, default_value = "exact")]
    derivatives: Derivatives,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct DistributionArgs {
    #[arg(long)]
    data: PathBuf,
    /// fixed, uniform, biased or highly_biased.
    #[arg(long)]
    regime: String,
    /// Comma-separated term signatures, e.g. `du/dt,u*du/dx`.
    #[arg(long, value_delimiter = ',')]
    boost_terms: Option<Vec<String>>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Maximum factors per term.
    #[arg(long)]
    t_max: Option<usize>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct DiscoverArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated list from classical, fixed, uniform, biased, highly_biased.
    #[arg(long, value_delimiter = ',')]
    regimes: Option<Vec<String>>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    generations: Option<usize>,
    #[arg(long)]
    population: Option<usize>,
    #[arg(long)]
    t_max: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    boost_terms: Option<Vec<String>>,
    /// Load one table for every directed regime instead of estimating it.
    #[arg(long)]
    distribution_file: Option<PathBuf>,
    /// Write the tables actually used, keyed by regime, to this file.
    #[arg(long)]
    dump_distribution: Option<PathBuf>,
    /// Record zero elapsed times so reruns are byte-identical.
    #[arg(long)]
    no_timing: bool,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    force: bool,
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl fmt::Display) -> Self {
        Failure {
            code: 1,
            message: message.to_string(),
        }
    }

    fn data(message: impl fmt::Display) -> Self {
        Failure {
            code: 2,
            message: message.to_string(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Data(_) | Error::Fitness(_) => Failure::data(e),
            _ => Failure::usage(e),
        }
    }
}

impl From<DataError> for Failure {
    fn from(e: DataError) -> Self {
        Failure::data(e)
    }
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected `lo,hi`, got `{s}`"))?;
    let lo = a.trim().parse::<f64>().map_err(|e| e.to_string())?;
    let hi = b.trim().parse::<f64>().map_err(|e| e.to_string())?;
    Ok((lo, hi))
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn ensure_writable_dir(dir: &Path, force: bool) -> Result<(), Failure> {
    if dir.is_file() {
        return Err(Failure::usage(format!("{} is a file", dir.display())));
    }
    let non_empty = dir
        .read_dir()
        .map(|mut entries| entries.next().is_some())
        .unwrap_or(false);
    if non_empty && !force {
        return Err(Failure::usage(format!(
            "output directory {} is not empty (use --force to overwrite)",
            dir.display()
        )));
    }
    Ok(())
}

fn ensure_writable_file(path: &Path, force: bool) -> Result<(), Failure> {
    if path.exists() && !force {
        return Err(Failure::usage(format!(
            "{} exists (use --force to overwrite)",
            path.display()
        )));
    }
    Ok(())
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text)
        .map_err(|e| Failure::data(format!("cannot write {}: {e}", path.display())))
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, Failure> {
    Ok(match path {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    })
}

fn cmd_generate(args: GenerateArgs) -> Result<(), Failure> {
    let problem: ProblemId = args.problem.parse().map_err(Failure::usage)?;
    let d = problem.default_grid();
    let (x_min, x_max) = args.x_range.unwrap_or((d.x_min, d.x_max));
    let (t_min, t_max) = args.t_range.unwrap_or((d.t_min, d.t_max));
    let grid =
        Grid::new(args.nx, args.nt, (x_min, x_max), (t_min, t_max)).map_err(Failure::usage)?;
    ensure_writable_dir(&args.out, args.force)?;
    let bundle = match args.derivatives {
        Derivatives::Exact => generate_manufactured(problem, &grid)?,
        Derivatives::Fd => generate_differenced(problem, &grid)?,
    };
    save_bundle(&bundle, &args.out)?;
    println!(
        "wrote {} ({} fields, {}x{}) to {}",
        problem.as_str(),
        bundle.field_names().count(),
        grid.nt,
        grid.nx,
        args.out.display()
    );
    Ok(())
}

fn cmd_distribution(args: DistributionArgs) -> Result<(), Failure> {
    let regime: DistributionRegime = args.regime.parse().map_err(Failure::usage)?;
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(t) = args.t_max {
        cfg.evolution.t_max = t;
    }
    if let Some(b) = args.boost_terms {
        cfg.boost_terms = Some(b);
    }
    cfg.validate()?;
    if let Some(out) = &args.out {
        ensure_writable_file(out, args.force)?;
    }
    let bundle = load_bundle(&args.data)?;
    let vocabulary = TermVocabulary::from_field_names(
        bundle.field_names(),
        cfg.evolution.t_max,
        StructuralRules::default(),
    )
    .map_err(Failure::data)?;
    // Unlike `discover`, no ground-truth default: the boost set must be named.
    let boost: BTreeSet<String> = cfg
        .boost_terms
        .iter()
        .flatten()
        .map(|s| canonical_term(s))
        .collect::<Result<_, _>>()?;
    let counts = generator_counts(&cfg, &vocabulary);
    let table = build_distribution(&counts, regime, &boost).map_err(Failure::usage)?;
    let text = table.to_json();
    match &args.out {
        Some(path) => write_file(path, &(text + "\n")),
        None => {
            // A closed pipe (`| head`) is not an error worth reporting.
            let _ = writeln!(std::io::stdout(), "{text}");
            Ok(())
        }
    }
}

fn cmd_discover(args: DiscoverArgs) -> Result<(), Failure> {
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(r) = args.regimes {
        cfg.regimes = r;
    }
    if let Some(n) = args.runs {
        cfg.runs = n;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(g) = args.generations {
        cfg.evolution.generations = g;
    }
    if let Some(p) = args.population {
        cfg.evolution.population_size = p;
    }
    if let Some(t) = args.t_max {
        cfg.evolution.t_max = t;
    }
    if let Some(b) = args.boost_terms {
        cfg.boost_terms = Some(b);
    }
    if let Some(f) = args.distribution_file {
        cfg.distribution_file = Some(f);
    }
    if args.no_timing {
        cfg.record_timing = false;
    }
    cfg.validate()?;
    ensure_writable_dir(&args.out, args.force)?;
    if let Some(path) = &args.dump_distribution {
        ensure_writable_file(path, args.force)?;
    }
    let bundle = load_bundle(&args.data)?;
    let outcome = run_experiment(&cfg, &bundle, Some(&args.out))?;
    if let Some(path) = &args.dump_distribution {
        let tables: serde_json::Map<String, serde_json::Value> = outcome
            .tables
            .iter()
            .map(|(k, t)| {
                let probs = t
                    .probs()
                    .map(|(s, p)| (s.to_string(), serde_json::Value::from(p)))
                    .collect();
                (k.clone(), serde_json::Value::Object(probs))
            })
            .collect();
        let text = serde_json::to_string_pretty(&tables).expect("tables serialize");
        write_file(path, &(text + "\n"))?;
    }
    for (regime, s) in &outcome.report.summary {
        println!(
            "{regime:>14}: recovered {}/{}  min-MAE rows {}",
            s.recovered, s.runs, s.min_mae_run_count
        );
    }
    println!("report: {}", args.out.join(REPORT_FILE).display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("error: {}", one_line(first.trim_start_matches("error:")));
            return ExitCode::from(1);
        }
    };
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Distribution(a) => cmd_distribution(a),
        Command::Discover(a) => cmd_discover(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", one_line(&f.message));
            ExitCode::from(f.code)
        }
    }
}
