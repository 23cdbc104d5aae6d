use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use log::info;
use serde::Serialize;

use mobmix::pipeline::{self, EvalFlags};
use mobmix::synth::PingConfig;
use mobmix::{Error, PipelineConfig, Result};

/// Next-location prediction by entropy-weighted mixing of individual and
/// collective Markov models.
#[derive(Debug, Parser)]
#[command(name = "mobmix", version, about)]
struct Cli {
    /// Pipeline configuration (TOML); defaults are used for missing keys.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,

    /// Print the effective configuration and exit.
    #[arg(long)]
    print_config: bool,

    /// Cap on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Overrides `paths.output_dir`.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,

    /// Overrides `paths.model_store`.
    #[arg(long, global = true)]
    model_store: Option<PathBuf>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Detect stops in raw pings and cut them into daily trajectories.
    Ingest {
        /// Raw CSV; overrides `paths.input`.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Filter, split and train; writes the model store.
    Train(TrajectoryArgs),
    /// Score every test trajectory's overlap with its user's training set.
    Stratify,
    /// Evaluate the stored models and write the report tables.
    Evaluate(EvaluateArgs),
    /// Generate a synthetic dataset from a scenario file.
    Synth {
        /// Scenario (TOML); library defaults when omitted.
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Directory for the generated files.
        #[arg(long)]
        out: PathBuf,
        /// Also write GPS pings scattered around each stop.
        #[arg(long)]
        pings: bool,
    },
    /// Train before a cutoff date and score each later month.
    ShiftEval {
        #[command(flatten)]
        data: TrajectoryArgs,
        /// Overrides `shift.cutoff`.
        #[arg(long)]
        cutoff: Option<NaiveDate>,
    },
    /// Prune the collective model and compute the ensemble spatial accuracy.
    Prune,
}

#[derive(Debug, Args)]
struct TrajectoryArgs {
    /// Trajectory store; defaults to `trajectories.csv` in the output directory.
    #[arg(long)]
    trajectories: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Per-bin accuracies, confidence distributions and overlap scores.
    #[arg(long)]
    stratify: bool,
    /// Per-tile accuracy maps and Moran's I.
    #[arg(long)]
    spatial: bool,
    /// Ensemble accuracy over pruned collective models.
    #[arg(long)]
    prune: bool,
    /// Entropy and travel distances around the POI anchor; needs `paths.poi`.
    #[arg(long)]
    pois: bool,
    /// Monthly accuracy after `shift.cutoff`.
    #[arg(long)]
    shift: bool,
    /// Every analysis except `--shift`.
    #[arg(long)]
    all: bool,
}

fn seed_override() -> Result<Option<u64>> {
    match std::env::var("MOBMIX_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::Usage(format!("MOBMIX_SEED = '{v}' is not an unsigned integer"))),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(Error::Usage(format!("MOBMIX_SEED: {e}"))),
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = seed_override()? {
        cfg.seed = seed;
    }
    if let Some(dir) = &cli.output_dir {
        cfg.paths.output_dir = dir.clone();
    }
    if let Some(dir) = &cli.model_store {
        cfg.paths.model_store = dir.clone();
    }
    Ok(cfg)
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn trajectories(cfg: &PipelineConfig, args: &TrajectoryArgs) -> PathBuf {
    args.trajectories
        .clone()
        .unwrap_or_else(|| cfg.paths.output_dir.join(pipeline::TRAJECTORIES_FILE))
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli)?;
    if cli.print_config {
        print!("{}", cfg.to_toml_string()?);
        return Ok(());
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Usage(e.to_string()))?;
    }
    let Some(command) = cli.command else {
        return Err(Error::Usage("no command given; see --help".into()));
    };
    match command {
        Command::Ingest { input } => {
            if input.is_some() {
                cfg.paths.input = input;
            }
            let s = pipeline::cmd_ingest(&cfg)?;
            info!("ingested {} rows into {} trajectories", s.rows, s.trajectories);
            print_json(&s)
        }
        Command::Train(args) => print_json(&pipeline::cmd_train(&cfg, &trajectories(&cfg, &args))?),
        Command::Stratify => {
            let bins = pipeline::cmd_stratify(&cfg)?;
            print_json(&bins.iter().map(|(b, n)| (b.label(), *n)).collect::<std::collections::BTreeMap<_, _>>())
        }
        Command::Evaluate(a) => {
            let flags = EvalFlags {
                stratify: a.stratify || a.all,
                spatial: a.spatial || a.all,
                prune: a.prune || a.all,
                pois: a.pois || a.all,
                shift: a.shift,
            };
            let s = pipeline::cmd_evaluate(&cfg, flags)?;
            println!("consistency gap {:e} (tolerance {:e})", s.consistency_gap, pipeline::CONSISTENCY_TOLERANCE);
            print_json(&s.overall)
        }
        Command::Synth { scenario, out, pings } => {
            let mut scenario = match scenario {
                Some(path) => pipeline::load_scenario(&path)?,
                None => Default::default(),
            };
            if let Some(seed) = seed_override()? {
                scenario.seed = seed;
            }
            let ping_cfg = PingConfig::default();
            print_json(&pipeline::cmd_synth(&scenario, &out, pings.then_some(&ping_cfg))?)
        }
        Command::ShiftEval { data, cutoff } => {
            if cutoff.is_some() {
                cfg.shift.cutoff = cutoff;
            }
            let r = pipeline::cmd_shift_eval(&cfg, &trajectories(&cfg, &data))?;
            print_json(&r.relative_drop)
        }
        Command::Prune => print_json(&pipeline::cmd_prune(&cfg)?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mobmix: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
