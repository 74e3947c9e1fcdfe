//! Batch front end: `generate`, `train` and `report`.
//!
//! Exit codes are 0 on success, 2 for usage, config and input-validation
//! problems, and 1 for anything else. Relative paths inside an experiment
//! config are resolved against the config file's directory.

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::data::{generate_stratified, load_scores, write_scores, GenerationConfig, StratifiedDataset};
use crate::error::DroError;
use crate::metrics::{compare_reports, percentile_report};
use crate::trainer::{cross_validate, ensemble_scores, TrainConfig, TrainMode};

pub const SEED_ENV: &str = "DRO_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmConfigs {
    pub erm: TrainConfig,
    pub dro: TrainConfig,
}

/// Everything one experiment needs, read from a JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: GenerationConfig,
    pub data_seed: u64,
    /// Dataset CSV written by `generate` and read by `train`.
    pub dataset: PathBuf,
    /// Optional separate test set, scored by the fold ensemble.
    #[serde(default)]
    pub test_dataset: Option<PathBuf>,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    pub train: ArmConfigs,
    pub output_dir: PathBuf,
    /// One full cross-validated run per seed; overrides each arm's `seed`.
    pub seeds: Vec<u64>,
    /// Validation share when an arm trains a single fold.
    #[serde(default = "default_holdout")]
    pub holdout_fraction: f64,
}

fn default_hidden() -> Vec<usize> {
    vec![32, 32]
}

fn default_holdout() -> f64 {
    0.2
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.dataset = base.join(&cfg.dataset);
        cfg.output_dir = base.join(&cfg.output_dir);
        cfg.test_dataset = cfg.test_dataset.map(|p| base.join(p));
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.data.validate().map_err(usage)?;
        if self.seeds.is_empty() {
            return Err(CliError::Usage("seeds must not be empty".into()));
        }
        if self.hidden.contains(&0) {
            return Err(CliError::Usage("hidden layer sizes must be positive".into()));
        }
        if self.train.erm.mode == TrainMode::Dro {
            return Err(CliError::Usage("train.erm.mode must be erm or erm_replacement".into()));
        }
        if self.train.dro.mode != TrainMode::Dro {
            return Err(CliError::Usage("train.dro.mode must be dro".into()));
        }
        Ok(())
    }

    pub fn arm(&self, arm: Arm) -> &TrainConfig {
        match arm {
            Arm::Erm => &self.train.erm,
            Arm::Dro => &self.train.dro,
        }
    }

    pub fn dims(&self, dataset: &StratifiedDataset) -> Vec<usize> {
        let classes = dataset.num_classes().max(self.data.classes);
        std::iter::once(dataset.feature_dim())
            .chain(self.hidden.iter().copied())
            .chain(std::iter::once(classes))
            .collect()
    }
}

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments, config or input files (exit 2).
    Usage(String),
    /// Anything else (exit 1).
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Internal(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Internal(m) => f.write_str(m),
        }
    }
}

fn usage(e: DroError) -> CliError {
    CliError::Usage(e.to_string())
}

fn internal(e: DroError) -> CliError {
    CliError::Internal(e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Arm {
    Erm,
    Dro,
}

impl Arm {
    pub fn name(self) -> &'static str {
        match self {
            Arm::Erm => "erm",
            Arm::Dro => "dro",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "dro", about = "Percentile-loss training and stratified evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic stratified dataset named in the config.
    Generate {
        #[arg(long)]
        config: PathBuf,
        /// Output CSV; defaults to the config's `dataset`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cross-validated training of one arm for every seed in the config.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        arm: Arm,
        /// Output directory; defaults to the config's `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Percentile report of a score file, optionally against a baseline.
    Report {
        scores: PathBuf,
        #[arg(long)]
        baseline: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        /// Also write report.txt / report.json (and comparison.*) here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match cli.command {
        Command::Generate { config, out } => cmd_generate(&config, out.as_deref()),
        Command::Train { config, arm, out, jobs } => cmd_train(&config, arm, out.as_deref(), jobs),
        Command::Report { scores, baseline, format, out } => {
            cmd_report(&scores, baseline.as_deref(), format, out.as_deref()).map(|text| print!("{text}"))
        }
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Internal(format!("cannot create {}: {e}", dir.display())))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::Internal(format!("cannot write {}: {e}", path.display())))
}

pub fn cmd_generate(config_path: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let cfg = ExperimentConfig::load(config_path)?;
    let ds = generate_stratified(&cfg.data, cfg.data_seed).map_err(usage)?;
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.dataset.clone());
    write_file(&out, ds.to_csv())?;
    let prevalence: Vec<String> = ds.prevalence.iter().map(|(g, p)| format!("{g}={p:.4}")).collect();
    println!("wrote {} cases to {} ({})", ds.len(), out.display(), prevalence.join(" "));
    Ok(())
}

/// Seeds to run: the config's list unless `DRO_SEED` is set.
pub fn effective_seeds(cfg: &ExperimentConfig) -> Result<Vec<u64>, CliError> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse::<u64>()
            .map(|s| vec![s])
            .map_err(|e| CliError::Usage(format!("{SEED_ENV}={v:?}: {e}"))),
        Err(_) => Ok(cfg.seeds.clone()),
    }
}

/// Directory holding one arm's outputs for one seed.
pub fn run_dir(output_dir: &Path, arm: Arm, seed: u64) -> PathBuf {
    output_dir.join(arm.name()).join(format!("seed-{seed}"))
}

pub fn cmd_train(config_path: &Path, arm: Arm, out: Option<&Path>, jobs: usize) -> Result<(), CliError> {
    let cfg = ExperimentConfig::load(config_path)?;
    let dataset = StratifiedDataset::load(&cfg.dataset).map_err(usage)?;
    let test = match &cfg.test_dataset {
        Some(p) => Some(StratifiedDataset::load(p).map_err(usage)?),
        None => None,
    };
    let dims = cfg.dims(&dataset);
    let output_dir = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.output_dir.clone());
    cfg.arm(arm).validate(dataset.len()).map_err(usage)?;

    for seed in effective_seeds(&cfg)? {
        let train_cfg = cfg.arm(arm).clone().with_seed(seed);
        let cv = cross_validate(&dataset, &dims, &train_cfg, cfg.holdout_fraction, jobs).map_err(internal)?;
        let dir = run_dir(&output_dir, arm, seed);
        for fm in &cv.folds {
            write_file(&dir.join(format!("fold-{}.ckpt", fm.fold)), fm.checkpoint.to_bytes())?;
        }
        write_file(&dir.join("scores.csv"), cv.scores.to_csv())?;
        if let Some(test) = &test {
            let models: Vec<_> = cv.folds.iter().map(|f| f.params().clone()).collect();
            let table = ensemble_scores(&models, test).map_err(usage)?;
            write_scores(&table, &dir.join("test_scores.csv")).map_err(internal)?;
        }
        println!(
            "{} seed {seed}: {} folds, {} scored cases -> {}",
            arm.name(),
            cv.folds.len(),
            cv.scores.len(),
            dir.display()
        );
    }
    Ok(())
}

/// Builds the report (and comparison, with a baseline), writes both
/// renderings under `out` if given, and returns the selected rendering.
pub fn cmd_report(
    scores: &Path,
    baseline: Option<&Path>,
    format: Format,
    out: Option<&Path>,
) -> Result<String, CliError> {
    let report = percentile_report(&load_scores(scores).map_err(usage)?).map_err(usage)?;
    let comparison = match baseline {
        Some(b) => {
            let base = percentile_report(&load_scores(b).map_err(usage)?).map_err(usage)?;
            Some(compare_reports(&base, &report).map_err(usage)?)
        }
        None => None,
    };
    let mut text = report.render_text();
    let mut json = report.to_json();
    if let Some(c) = &comparison {
        text.push_str("\nDifference vs baseline (pp)\n");
        text.push_str(&c.render_text());
        json = format!("{{\n\"report\": {json},\n\"difference\": {}\n}}\n", c.to_json());
    } else {
        json.push('\n');
    }
    if let Some(dir) = out {
        write_file(&dir.join("report.txt"), &text)?;
        write_file(&dir.join("report.json"), &json)?;
    }
    Ok(match format {
        Format::Text => text,
        Format::Json => json,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_config_fields_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"data": {}, "bogus": 1}"#).unwrap();
        assert_eq!(ExperimentConfig::load(&p).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn clap_usage_errors_exit_2() {
        assert_eq!(run(["dro", "frobnicate"]), 2);
        assert_eq!(run(["dro", "train", "--config", "x.json", "--arm", "sgd"]), 2);
        assert_eq!(run(["dro", "generate", "--config", "/nonexistent/config.json"]), 2);
    }
}
