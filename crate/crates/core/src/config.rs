//! Experiment configuration (TOML, or the JSON echo written to
//! `summary.json`) and the file outputs of `run` and `compare`.

use crate::error::{FedMooError, Result};
use crate::federation::{run_experiment, Engine, RoundConfig, RunOutput};
use crate::metrics::{rounds_csv_header, RoundRecord};
use crate::objectives::{GradOracleSpec, LogisticProblem, LogisticSpec, Problem, QuadraticProblem, QuadraticSpec};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ProblemConfig {
    Quadratic(QuadraticSpec),
    Logistic(LogisticSpec),
}

impl ProblemConfig {
    pub fn build(&self, oracle: GradOracleSpec, seed: u64) -> Result<Box<dyn Problem>> {
        Ok(match self {
            ProblemConfig::Quadratic(s) => Box::new(QuadraticProblem::from_spec(s, oracle, seed)?),
            ProblemConfig::Logistic(s) => Box::new(LogisticProblem::from_spec(s, oracle, seed)?),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    pub engines: Vec<Engine>,
}

fn default_repeats() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default)]
    pub output_dir: Option<String>,
    pub problem: ProblemConfig,
    #[serde(default)]
    pub oracle: GradOracleSpec,
    pub run: RoundConfig,
    #[serde(default)]
    pub compare: Option<CompareConfig>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| FedMooError::Config(e.to_string()))
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| FedMooError::Config(e.to_string()))
    }

    /// Reads TOML, or JSON when the extension is `.json`. A `summary.json`
    /// is accepted too, through its `config` field.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| FedMooError::Io(format!("{}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e == "json") {
            let value: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| FedMooError::Config(e.to_string()))?;
            let inner = match value.get("config") {
                Some(c) if value.get("runs").is_some() => c.clone(),
                _ => value,
            };
            serde_json::from_value(inner).map_err(|e| FedMooError::Config(e.to_string()))
        } else {
            Self::from_toml_str(&text)
        }
    }

    pub fn to_json(&self) -> Result<serde_json::Value> {
        serde_json::to_value(self).map_err(|e| FedMooError::Config(e.to_string()))
    }

    pub fn build_problem(&self, seed: u64) -> Result<Box<dyn Problem>> {
        self.oracle.validate().map_err(|e| FedMooError::Config(format!("oracle: {e}")))?;
        self.problem.build(self.oracle, seed).map_err(|e| match e {
            e @ FedMooError::Io(_) => e,
            e => FedMooError::Config(format!("problem: {e}")),
        })
    }

    /// Full validation: builds the problem for the first seed and checks
    /// the run settings against it.
    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(FedMooError::Config("repeats must be >= 1".into()));
        }
        if let Some(c) = &self.compare {
            if c.engines.is_empty() {
                return Err(FedMooError::Config("compare.engines is empty".into()));
            }
        }
        let p = self.build_problem(self.seed)?;
        let engines: Vec<Engine> = match &self.compare {
            Some(c) => c.engines.clone(),
            None => vec![self.run.engine],
        };
        for engine in engines {
            let mut run = self.run.clone();
            run.engine = engine;
            run.validate(p.num_clients(), p.num_tasks(), p.dim())
                .map_err(|e| FedMooError::Config(format!("run ({}): {e}", engine.name())))?;
        }
        Ok(())
    }

    pub fn repeat_seed(&self, repeat: usize) -> u64 {
        self.seed.wrapping_add(repeat as u64)
    }
}

/// Result of one repeat.
#[derive(Clone, Debug)]
pub struct RepeatOutput {
    pub repeat: usize,
    pub seed: u64,
    pub output: RunOutput,
}

/// Runs every repeat of `config.run`; the problem of repeat `r` and its
/// randomness both use seed `seed + r`.
pub fn run_repeats(config: &ExperimentConfig, mut on_record: impl FnMut(usize, &RoundRecord)) -> Result<Vec<RepeatOutput>> {
    config.validate()?;
    let mut out = Vec::with_capacity(config.repeats);
    for repeat in 0..config.repeats {
        let seed = config.repeat_seed(repeat);
        let problem = config.build_problem(seed)?;
        let output = run_experiment(&config.run, problem.as_ref(), seed, |r| on_record(repeat, r))?;
        out.push(RepeatOutput { repeat, seed, output });
    }
    Ok(out)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let f = File::create(&path).map_err(|e| FedMooError::Io(format!("{}: {e}", path.display())))?;
    Ok(BufWriter::new(f))
}

fn csv_io(e: csv::Error) -> FedMooError {
    FedMooError::Io(e.to_string())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; zero for a single repeat.
    pub std: f64,
}

fn mean_std(values: &[f64]) -> MeanStd {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    MeanStd { mean, std }
}

/// Writes `rounds.csv`, `ledger.csv` and `summary.json` into `dir`.
pub fn write_run_outputs(dir: &Path, config: &ExperimentConfig, runs: &[RepeatOutput]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| FedMooError::Io(format!("{}: {e}", dir.display())))?;
    let m = runs
        .first()
        .and_then(|r| r.output.records.first())
        .map_or(0, |r| r.losses.len());

    let mut w = csv::Writer::from_writer(create(dir, "rounds.csv")?);
    let mut header = vec!["repeat".to_string()];
    header.extend(rounds_csv_header(m));
    w.write_record(&header).map_err(csv_io)?;
    for run in runs {
        for rec in &run.output.records {
            let mut row = vec![run.repeat.to_string()];
            row.extend(rec.csv_fields());
            w.write_record(&row).map_err(csv_io)?;
        }
    }
    w.flush()?;

    let mut w = csv::Writer::from_writer(create(dir, "ledger.csv")?);
    w.write_record(["repeat", "round", "client", "kind", "direction", "floats"]).map_err(csv_io)?;
    for run in runs {
        for e in run.output.ledger.entries() {
            let dir = match e.kind.direction() {
                crate::metrics::Direction::Up => "up",
                crate::metrics::Direction::Down => "down",
            };
            w.write_record([
                run.repeat.to_string(),
                e.round.to_string(),
                e.client.to_string(),
                e.kind.name().to_string(),
                dir.to_string(),
                e.floats.to_string(),
            ])
            .map_err(csv_io)?;
        }
    }
    w.flush()?;

    let summary = build_summary(config, runs)?;
    let mut f = create(dir, "summary.json")?;
    serde_json::to_writer_pretty(&mut f, &summary).map_err(|e| FedMooError::Io(e.to_string()))?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

fn build_summary(config: &ExperimentConfig, runs: &[RepeatOutput]) -> Result<serde_json::Value> {
    use serde_json::json;
    let mut per_run = Vec::new();
    let mut columns: Vec<(String, Vec<f64>)> = Vec::new();
    let mut push = |name: String, v: f64| match columns.iter_mut().find(|(n, _)| *n == name) {
        Some((_, vals)) => vals.push(v),
        None => columns.push((name, vec![v])),
    };
    for run in runs {
        let last = run.output.records.last();
        let totals = run.output.ledger.totals();
        let mut entry = json!({
            "repeat": run.repeat,
            "seed": run.seed,
            "final_round": last.map(|r| r.round),
            "final_losses": last.map(|r| r.losses.clone()),
            "final_stationarity": last.map(|r| r.stationarity),
            "final_stationarity_at_w": last.map(|r| r.stationarity_at_w),
            "final_weights": last.map(|r| r.weights.clone()),
            "upload_floats": totals.upload,
            "download_floats": totals.download,
            "sidechannel_floats": totals.sidechannel,
        });
        if config.run.engine == Engine::FedcmooPref {
            let series: Vec<Option<f64>> = run.output.records.iter().map(|r| r.mu_r).collect();
            entry["mu_r"] = json!(series);
        }
        per_run.push(entry);
        if let Some(r) = last {
            for (k, l) in r.losses.iter().enumerate() {
                push(format!("loss_{}", k + 1), *l);
            }
            push("stationarity".into(), r.stationarity);
            push("stationarity_at_w".into(), r.stationarity_at_w);
            if let Some(mu) = r.mu_r {
                push("mu_r".into(), mu);
            }
        }
        push("upload_floats".into(), totals.upload as f64);
    }
    let aggregate: serde_json::Map<String, serde_json::Value> = columns
        .iter()
        .map(|(name, vals)| (name.clone(), serde_json::to_value(mean_std(vals)).expect("plain numbers")))
        .collect();
    Ok(json!({
        "config": config.to_json()?,
        "engine": config.run.engine.name(),
        "runs": per_run,
        "aggregate": aggregate,
    }))
}

/// Column names of the joined compare CSV for `m` tasks.
pub fn compare_csv_header(m: usize) -> Vec<String> {
    let mut h = vec!["engine".to_string(), "repeat".to_string()];
    h.extend(rounds_csv_header(m));
    h
}

/// Runs each engine of `config.compare` on identical problems and seeds and
/// writes `compare.csv` keyed by (engine, repeat, round). Returns the runs
/// per engine.
pub fn run_compare(config: &ExperimentConfig, dir: &Path) -> Result<Vec<(Engine, Vec<RepeatOutput>)>> {
    config.validate()?;
    let engines = match &config.compare {
        Some(c) => c.engines.clone(),
        None => return Err(FedMooError::Config("compare needs a [compare] section with engines".into())),
    };
    let mut all = Vec::with_capacity(engines.len());
    for engine in engines {
        let mut cfg = config.clone();
        cfg.run.engine = engine;
        cfg.compare = None;
        all.push((engine, run_repeats(&cfg, |_, _| {})?));
    }
    std::fs::create_dir_all(dir).map_err(|e| FedMooError::Io(format!("{}: {e}", dir.display())))?;
    let m = all
        .first()
        .and_then(|(_, runs)| runs.first())
        .and_then(|r| r.output.records.first())
        .map_or(0, |r| r.losses.len());
    let mut w = csv::Writer::from_writer(create(dir, "compare.csv")?);
    w.write_record(compare_csv_header(m)).map_err(csv_io)?;
    for (engine, runs) in &all {
        for run in runs {
            for rec in &run.output.records {
                let mut row = vec![engine.name().to_string(), run.repeat.to_string()];
                row.extend(rec.csv_fields());
                w.write_record(&row).map_err(csv_io)?;
            }
        }
    }
    w.flush()?;
    Ok(all)
}
