use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use medestim::analyze::{self, AnalyzeConfig};
use medestim::benchmark::{self, EstimatorConfig, RunConfig};
use medestim::io::write_dataset_csv;
use medestim::simulation::{self, DEFAULT_MC_SAMPLES, N_SETTINGS};
use medestim::{Error, EstimatorId, ModelFamily, NuisanceSpec};

#[derive(Parser)]
#[command(name = "medestim", version, about = "Causal mediation effect estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run estimators over simulated settings and write results tables.
    Benchmark(BenchmarkArgs),
    /// Monte-Carlo true effects of canonical settings as CSV.
    TrueEffects(TrueEffectsArgs),
    /// Estimate effects on a CSV file.
    Analyze(AnalyzeArgs),
    /// Write one simulated dataset as CSV.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct BenchmarkArgs {
    /// JSON run configuration; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Setting ids, e.g. `13,14` or `1-12`.
    #[arg(long)]
    settings: Option<String>,
    #[arg(long, value_delimiter = ',')]
    sample_sizes: Option<Vec<usize>>,
    /// Estimator names; each uses the nuisance options below.
    #[arg(long, value_delimiter = ',')]
    estimators: Option<Vec<String>>,
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    crossfit_folds: Option<usize>,
    #[arg(long)]
    repetitions: Option<usize>,
    #[arg(long)]
    bootstrap_b: Option<usize>,
    #[arg(long)]
    master_seed: Option<u64>,
    #[arg(long)]
    parallelism: Option<usize>,
    #[arg(long)]
    mc_samples: Option<usize>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Args)]
struct TrueEffectsArgs {
    /// Setting ids, e.g. `1-36` (default) or `1,5,13`; empty for none.
    #[arg(long)]
    settings: Option<String>,
    #[arg(long, default_value_t = DEFAULT_MC_SAMPLES)]
    mc_samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// JSON analysis configuration.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    bootstrap_b: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Report file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    setting: u32,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// A failure with its exit code: 1 for configuration problems, 2 for data
/// problems.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: e.exit_code() as u8,
            message: e.to_string(),
        }
    }
}

fn config_failure(message: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        message: message.into(),
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_failure(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| config_failure(format!("{}: {e}", path.display())))
}

/// Parses `1,3,5-8`; the empty string is the empty list.
fn parse_ids(text: &str) -> Result<Vec<u32>, Failure> {
    let mut ids = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let bad = || config_failure(format!("bad setting list entry {part:?}"));
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u32, u32) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
                ids.extend(a..=b);
            }
            None => ids.push(part.parse().map_err(|_| bad())?),
        }
    }
    Ok(ids)
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(Error::from)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn cmd_benchmark(args: BenchmarkArgs) -> Result<(), Failure> {
    let mut cfg: RunConfig = match &args.config {
        Some(p) => read_json(p)?,
        None => RunConfig {
            settings: Vec::new(),
            sample_sizes: Vec::new(),
            estimators: Vec::new(),
            repetitions: 200,
            bootstrap_b: medestim::inference::DEFAULT_BOOTSTRAP_B,
            master_seed: None,
            parallelism: 0,
            output_dir: PathBuf::from("medestim_out"),
            mc_samples: DEFAULT_MC_SAMPLES,
        },
    };
    if let Some(s) = &args.settings {
        cfg.settings = parse_ids(s)?;
    }
    if let Some(v) = args.sample_sizes {
        cfg.sample_sizes = v;
    }
    if let Some(names) = &args.estimators {
        let mut spec = NuisanceSpec::default();
        if let Some(f) = &args.family {
            spec.family = f.parse::<ModelFamily>()?;
        }
        if let Some(k) = args.crossfit_folds {
            spec.crossfit_folds = k;
        }
        cfg.estimators = names
            .iter()
            .map(|n| Ok(EstimatorConfig::new(n.parse::<EstimatorId>()?, spec.clone())))
            .collect::<Result<_, Error>>()?;
    } else if args.family.is_some() || args.crossfit_folds.is_some() {
        return Err(config_failure("--family and --crossfit-folds need --estimators"));
    }
    if let Some(v) = args.repetitions {
        cfg.repetitions = v;
    }
    if let Some(v) = args.bootstrap_b {
        cfg.bootstrap_b = v;
    }
    if let Some(v) = args.master_seed {
        cfg.master_seed = Some(v);
    }
    if let Some(v) = args.parallelism {
        cfg.parallelism = v;
    }
    if let Some(v) = args.mc_samples {
        cfg.mc_samples = v;
    }
    if let Some(v) = args.output_dir {
        cfg.output_dir = v;
    }

    let out = benchmark::run_benchmark(&cfg)?;
    benchmark::write_outputs(&cfg.output_dir, &out)?;
    let failed = out.records.iter().filter(|r| r.estimate.is_none()).count();
    eprintln!(
        "{} records ({} failed), {} groups written to {}",
        out.records.len(),
        failed,
        out.summaries.len(),
        cfg.output_dir.display()
    );
    Ok(())
}

fn cmd_true_effects(args: TrueEffectsArgs) -> Result<(), Failure> {
    let ids = match &args.settings {
        Some(s) => parse_ids(s)?,
        None => (1..=N_SETTINGS).collect(),
    };
    let mut rows = Vec::with_capacity(ids.len());
    for id in ids {
        let s = simulation::make_setting(id, 500)?;
        rows.push((s, simulation::true_effects(&s, args.mc_samples, args.seed)?));
    }
    simulation::write_true_effects_csv(output(args.out.as_deref())?, &rows)?;
    Ok(())
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<(), Failure> {
    let mut cfg: AnalyzeConfig = read_json(&args.config)?;
    if let Some(p) = args.csv {
        cfg.csv_path = p;
    }
    if let Some(b) = args.bootstrap_b {
        cfg.bootstrap_b = b;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let report = analyze::analyze(&cfg)?;
    if report.rows_dropped > 0 {
        eprintln!("warning: dropped {} rows with missing values", report.rows_dropped);
    }
    let mut out = output(args.out.as_deref())?;
    serde_json::to_writer_pretty(&mut out, &report).map_err(Error::from)?;
    out.write_all(b"\n").map_err(Error::from)?;
    out.flush().map_err(Error::from)?;
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), Failure> {
    let s = simulation::make_setting(args.setting, args.n)?;
    let ds = simulation::generate_dataset(&s, args.seed)?;
    let file = File::create(&args.out).map_err(Error::from)?;
    write_dataset_csv(BufWriter::new(file), &ds)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Benchmark(a) => cmd_benchmark(a),
        Command::TrueEffects(a) => cmd_true_effects(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Simulate(a) => cmd_simulate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
