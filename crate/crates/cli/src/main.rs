//! `fedmoo` experiment runner.
//!
//! Settings are resolved in this order, later wins: config file,
//! `FEDMOO_SEED`, command-line flags.

use clap::{Args, Parser, Subcommand};
use fedmoo::config::{run_compare, run_repeats, write_run_outputs, ExperimentConfig};
use fedmoo::federation::{Engine, GramVariant};
use fedmoo::weights::PreferenceVector;
use fedmoo::FedMooError;
use std::path::PathBuf;
use std::process::ExitCode;

const EXIT_ERROR: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_DIVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "fedmoo", version, about = "Federated multi-objective optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one engine for every repeat and write rounds.csv, ledger.csv and summary.json.
    Run(RunArgs),
    /// Run every engine listed under [compare] and write compare.csv.
    Compare(RunArgs),
    /// Check a config without running it.
    Validate(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML config, or a summary.json / JSON config echo.
    config: PathBuf,
    /// Output directory (default: `output_dir` from the config, else `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    engine: Option<Engine>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    clients_per_round: Option<usize>,
    #[arg(long)]
    local_steps: Option<usize>,
    #[arg(long)]
    lr_local: Option<f64>,
    #[arg(long)]
    lr_global: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gram_variant: Option<GramVariant>,
    /// Comma-separated preference vector, e.g. `2,1`.
    #[arg(long, value_delimiter = ',')]
    preference: Option<Vec<f64>>,
    /// Comma-separated engine list for `compare`.
    #[arg(long, value_delimiter = ',')]
    engines: Option<Vec<Engine>>,
}

impl RunArgs {
    fn load(&self) -> Result<ExperimentConfig, FedMooError> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Ok(seed) = std::env::var("FEDMOO_SEED") {
            cfg.seed = seed
                .trim()
                .parse()
                .map_err(|_| FedMooError::Config(format!("FEDMOO_SEED `{seed}` is not an unsigned integer")))?;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.engine {
            cfg.run.engine = v;
        }
        if let Some(v) = self.rounds {
            cfg.run.rounds = v;
        }
        if let Some(v) = self.repeats {
            cfg.repeats = v;
        }
        if let Some(v) = self.clients_per_round {
            cfg.run.clients_per_round = v;
        }
        if let Some(v) = self.local_steps {
            cfg.run.local_steps = v;
        }
        if let Some(v) = self.lr_local {
            cfg.run.lr_local = v;
        }
        if let Some(v) = self.lr_global {
            cfg.run.lr_global = v;
        }
        if let Some(v) = self.beta {
            cfg.run.beta = Some(v);
        }
        if let Some(v) = self.gram_variant {
            cfg.run.gram_variant = v;
        }
        if let Some(v) = &self.preference {
            cfg.run.preference =
                Some(PreferenceVector::new(v.clone()).map_err(|e| FedMooError::Config(format!("preference: {e}")))?);
        }
        if let Some(v) = &self.engines {
            cfg.compare = Some(fedmoo::config::CompareConfig { engines: v.clone() });
        }
        Ok(cfg)
    }

    fn out_dir(&self, cfg: &ExperimentConfig) -> PathBuf {
        self.out
            .clone()
            .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"))
    }
}

fn exit_code(e: &FedMooError) -> u8 {
    match e.root() {
        FedMooError::Config(_) => EXIT_CONFIG,
        _ if e.is_divergence() => EXIT_DIVERGED,
        _ => EXIT_ERROR,
    }
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn run(args: &RunArgs) -> Result<(), FedMooError> {
    let cfg = args.load()?;
    let dir = args.out_dir(&cfg);
    let runs = run_repeats(&cfg, |repeat, rec| {
        log::debug!("repeat {repeat} round {} stationarity {:.3e}", rec.round, rec.stationarity);
    })?;
    write_run_outputs(&dir, &cfg, &runs)?;
    for r in &runs {
        if let Some(last) = r.output.records.last() {
            println!(
                "repeat {} (seed {}): {} rounds, stationarity {:.6e}, losses {}",
                r.repeat,
                r.seed,
                last.round,
                last.stationarity,
                fmt_vec(&last.losses)
            );
        }
    }
    println!("wrote {}", dir.display());
    Ok(())
}

fn compare(args: &RunArgs) -> Result<(), FedMooError> {
    let cfg = args.load()?;
    let dir = args.out_dir(&cfg);
    let all = run_compare(&cfg, &dir)?;
    for (engine, runs) in &all {
        for r in runs {
            if let Some(last) = r.output.records.last() {
                println!(
                    "{} repeat {}: stationarity {:.6e}, losses {}, uploaded {} floats",
                    engine.name(),
                    r.repeat,
                    last.stationarity,
                    fmt_vec(&last.losses),
                    last.cumulative_upload_floats
                );
            }
        }
    }
    println!("wrote {}", dir.join("compare.csv").display());
    Ok(())
}

fn validate(args: &RunArgs) -> Result<(), FedMooError> {
    let cfg = args.load()?;
    cfg.validate()?;
    let p = cfg.build_problem(cfg.seed)?;
    println!(
        "ok: {} with d={}, M={}, N={}; engine {}, {} rounds, {} repeat(s)",
        match cfg.problem {
            fedmoo::config::ProblemConfig::Quadratic(_) => "quadratic",
            fedmoo::config::ProblemConfig::Logistic(_) => "logistic",
        },
        p.dim(),
        p.num_tasks(),
        p.num_clients(),
        cfg.run.engine.name(),
        cfg.run.rounds,
        cfg.repeats
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => run(a),
        Command::Compare(a) => compare(a),
        Command::Validate(a) => validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
