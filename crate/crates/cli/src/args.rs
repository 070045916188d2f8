use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use mislabel_core::detectors::confident::PruneMode;
use mislabel_core::detectors::knn::{KnnConfig, KnnWeighting};
use mislabel_core::detectors::Method;
use mislabel_core::multilabel::{CleaningStrategy, RemovalGrid, DEFAULT_TEMPERATURE};
use mislabel_core::noise::NoiseKind;
use mislabel_core::probe::SgdConfig;
use mislabel_core::TrainConfig;
use serde::Serialize;

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: mislabel_core::Error| e.to_string())
}

fn parse_strategy(s: &str) -> Result<CleaningStrategy, String> {
    s.parse().map_err(|e: mislabel_core::Error| e.to_string())
}

fn parse_kind(s: &str) -> Result<NoiseKind, String> {
    s.parse().map_err(|e: mislabel_core::Error| e.to_string())
}

fn parse_mode(s: &str) -> Result<PruneMode, String> {
    s.parse().map_err(|e: mislabel_core::Error| e.to_string())
}

/// A comma-separated list whose items are single values or
/// `start:stop:step` ranges (inclusive).
fn parse_grid(s: &str) -> Result<Grid, String> {
    let mut out = Vec::new();
    for part in s.split(',').filter(|p| !p.trim().is_empty()) {
        out.extend(mislabel_core::eval::parse_range(part).map_err(|e| e.to_string())?);
    }
    if out.is_empty() {
        return Err("empty value list".into());
    }
    Ok(Grid(out))
}

/// Parsed numeric axis values.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Grid(pub Vec<f64>);

#[derive(Debug, Parser)]
#[command(name = "mislabel", version, about = "Detect, remove and benchmark mislabeled examples in embedding datasets")]
pub struct Cli {
    /// Worker threads for CV folds and sweep cells (0 = all available).
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,

    /// Only log warnings and errors.
    #[arg(long, short, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Generate a synthetic Gaussian-cluster dataset.
    Gen(GenArgs),
    /// Write a copy of a dataset manifest with noisy training labels.
    InjectNoise(InjectArgs),
    /// Run one detector on the training split and write its report.
    Detect(DetectArgs),
    /// Remove flagged examples (single-label) or annotations (multi-label).
    Clean(CleanArgs),
    /// Compare probes trained before and after cleaning.
    Retrain(RetrainArgs),
    /// Score a detector report against the known noise mask, or a removal
    /// plan by per-class AUC.
    Eval(EvalArgs),
    /// Detection F1 (and optionally retrained accuracy) across noise levels.
    SweepNoise(SweepNoiseArgs),
    /// Multi-label cleaning gains across training-set fractions.
    SweepFractions(SweepFractionsArgs),
    /// Per-class grid search over removal strategies and multipliers.
    Gridsearch(GridsearchArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Gen(_) => "gen",
            Command::InjectNoise(_) => "inject-noise",
            Command::Detect(_) => "detect",
            Command::Clean(_) => "clean",
            Command::Retrain(_) => "retrain",
            Command::Eval(_) => "eval",
            Command::SweepNoise(_) => "sweep-noise",
            Command::SweepFractions(_) => "sweep-fractions",
            Command::Gridsearch(_) => "gridsearch",
        }
    }

    pub fn out_dir(&self) -> &PathBuf {
        match self {
            Command::Gen(a) => &a.out,
            Command::InjectNoise(a) => &a.io.out,
            Command::Detect(a) => &a.io.out,
            Command::Clean(a) => &a.io.out,
            Command::Retrain(a) => &a.clean.io.out,
            Command::Eval(a) => &a.io.out,
            Command::SweepNoise(a) => &a.io.out,
            Command::SweepFractions(a) => &a.io.out,
            Command::Gridsearch(a) => &a.io.out,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct Io {
    /// Dataset manifest (TOML).
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory; created if missing.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    /// L2 penalty on probe weights.
    #[arg(long, default_value_t = 0.001)]
    pub l2: f64,
    /// Cross-validation folds for out-of-fold probabilities.
    #[arg(long, default_value_t = 10)]
    pub cv_folds: usize,
    #[arg(long, default_value_t = 1000)]
    pub max_iter: usize,
    /// Seed for folds and training.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl TrainArgs {
    pub fn config(&self) -> TrainConfig {
        TrainConfig {
            l2_lambda: self.l2,
            max_iterations: self.max_iter,
            cv_folds: self.cv_folds,
            seed: self.seed,
            ..TrainConfig::default()
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct DetectorArgs {
    /// Average predictions over every embedding view.
    #[arg(long)]
    pub tta: bool,
    /// Confident-learning pruning rule: prune_by_noise_rate or prune_by_class.
    #[arg(long, default_value = "prune_by_noise_rate", value_parser = parse_mode)]
    pub mode: PruneMode,
    /// Neighbors for kNN voting.
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// kNN voting rounds (odd).
    #[arg(long, default_value_t = 21)]
    pub rounds: usize,
    /// Unweighted kNN votes.
    #[arg(long)]
    pub uniform: bool,
    /// SGD epochs for TracIn checkpoints.
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 5)]
    pub checkpoints: usize,
    #[arg(long, default_value_t = 0.1)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
}

impl DetectorArgs {
    pub fn knn(&self) -> KnnConfig {
        KnnConfig {
            k: self.k,
            rounds: self.rounds,
            weighting: if self.uniform {
                KnnWeighting::Uniform
            } else {
                KnnWeighting::Similarity
            },
        }
    }

    pub fn sgd(&self) -> SgdConfig {
        SgdConfig {
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            num_checkpoints: self.checkpoints,
            ..SgdConfig::default()
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct GridArgs {
    /// Removal multipliers tried for each strategy.
    #[arg(long, default_value = "0.5,1,1.5,2", value_parser = parse_grid)]
    pub alphas: Grid,
    /// Softmin temperature of per-image quality.
    #[arg(long, default_value_t = DEFAULT_TEMPERATURE)]
    pub tau: f64,
}

impl GridArgs {
    pub fn grid(&self) -> RemovalGrid {
        RemovalGrid {
            alphas: self.alphas.0.clone(),
            tau: self.tau,
            ..RemovalGrid::default()
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct GenArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub classes: usize,
    /// Training examples.
    #[arg(long, default_value_t = 5000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub validation: usize,
    #[arg(long, default_value_t = 0)]
    pub test: usize,
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
    /// Distance of cluster centers from the origin.
    #[arg(long, default_value_t = 10.0)]
    pub separation: f64,
    /// Embedding views per example (extra views are jittered copies).
    #[arg(long, default_value_t = 1)]
    pub views: usize,
    #[arg(long, default_value_t = 0.0)]
    pub jitter: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Multi-label data: each class present with `--prevalence`, switching
    /// on every other class with probability `--cooccurrence`.
    #[arg(long)]
    pub multilabel: bool,
    #[arg(long, default_value_t = 0.3)]
    pub prevalence: f64,
    #[arg(long, default_value_t = 0.05)]
    pub cooccurrence: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct InjectArgs {
    #[command(flatten)]
    pub io: Io,
    /// symmetric, asymmetric, confidence or external.
    #[arg(long, value_parser = parse_kind)]
    pub kind: NoiseKind,
    #[arg(long, default_value_t = 0.0)]
    pub rate: f64,
    /// Noise seed; also seeds the probe behind confidence-based noise.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Change exactly floor(rate * n) labels.
    #[arg(long)]
    pub exact: bool,
    /// Noisy labels for `--kind external`.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long, default_value_t = 0.001)]
    pub l2: f64,
    #[arg(long, default_value_t = 1000)]
    pub max_iter: usize,
}

impl InjectArgs {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            l2_lambda: self.l2,
            max_iterations: self.max_iter,
            seed: self.seed,
            ..TrainConfig::default()
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct DetectArgs {
    #[command(flatten)]
    pub io: Io,
    /// cl, knn, tracin or zeroshot.
    #[arg(long, default_value = "cl", value_parser = parse_method)]
    pub method: Method,
    #[command(flatten)]
    pub detector: DetectorArgs,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct CleanArgs {
    #[command(flatten)]
    pub io: Io,
    /// Existing detector report (single-label).
    #[arg(long, conflicts_with = "plan")]
    pub report: Option<PathBuf>,
    /// Existing removal plan (multi-label).
    #[arg(long)]
    pub plan: Option<PathBuf>,
    /// Detector used when no report is given (single-label).
    #[arg(long, default_value = "cl", value_parser = parse_method)]
    pub method: Method,
    /// per-image, per-label or optimal (multi-label).
    #[arg(long, default_value = "optimal", value_parser = parse_strategy)]
    pub strategy: CleaningStrategy,
    #[command(flatten)]
    pub detector: DetectorArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct RetrainArgs {
    #[command(flatten)]
    pub clean: CleanArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[command(flatten)]
    pub io: Io,
    /// Detector report to score against the noise mask (single-label).
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Removal plan to score by per-class AUC (multi-label).
    #[arg(long)]
    pub plan: Option<PathBuf>,
    /// Flag-count cutoffs for an F1-vs-threshold curve over the report's
    /// ranking, as a list or `start:stop:step`.
    #[arg(long, value_parser = parse_grid)]
    pub thresholds: Option<Grid>,
    /// Cutoff to mark on the threshold curve.
    #[arg(long)]
    pub marked: Option<usize>,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct SweepNoiseArgs {
    #[command(flatten)]
    pub io: Io,
    /// Noise rates, as a list or `start:stop:step`.
    #[arg(long, default_value = "0.1:0.6:0.1", value_parser = parse_grid)]
    pub levels: Grid,
    #[arg(long, default_value = "cl,knn,tracin,zeroshot", value_delimiter = ',', value_parser = parse_method)]
    pub methods: Vec<Method>,
    #[arg(long, default_value = "0,1,2", value_delimiter = ',')]
    pub seeds: Vec<u64>,
    #[arg(long, default_value = "confidence", value_parser = parse_kind)]
    pub kind: NoiseKind,
    /// Also retrain on the cleaned data and record evaluation accuracy.
    #[arg(long)]
    pub retrain: bool,
    /// Write long-format CSVs for plotting.
    #[arg(long)]
    pub plot_data: bool,
    #[command(flatten)]
    pub detector: DetectorArgs,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct SweepFractionsArgs {
    #[command(flatten)]
    pub io: Io,
    /// Training-set fractions, as a list or `start:stop:step`.
    #[arg(long, default_value = "0.05,0.1,0.25,0.5,1", value_parser = parse_grid)]
    pub fractions: Grid,
    #[arg(long, default_value = "per-image,per-label,optimal", value_delimiter = ',', value_parser = parse_strategy)]
    pub strategies: Vec<CleaningStrategy>,
    #[arg(long, default_value = "0,1,2", value_delimiter = ',')]
    pub seeds: Vec<u64>,
    #[arg(long)]
    pub plot_data: bool,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct GridsearchArgs {
    #[command(flatten)]
    pub io: Io,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_mixes_values_and_ranges() {
        assert_eq!(parse_grid("0.05,0.1:0.3:0.1").unwrap().0, vec![0.05, 0.1, 0.2, 0.3]);
        assert!(parse_grid("").is_err());
        assert!(parse_grid("1:0:0.1").is_err());
    }

    #[test]
    fn sweep_defaults_cover_every_method() {
        let cli = Cli::try_parse_from(["mislabel", "sweep-noise", "--manifest", "m.toml", "--out", "o"]).unwrap();
        let Command::SweepNoise(a) = cli.command else { panic!("wrong subcommand") };
        assert_eq!(a.methods, Method::ALL.to_vec());
        assert_eq!(a.levels.0.len(), 6);
        assert_eq!(a.seeds, vec![0, 1, 2]);
    }

    #[test]
    fn jobs_is_global() {
        let cli = Cli::try_parse_from(["mislabel", "detect", "--manifest", "m", "--out", "o", "--jobs", "3"]).unwrap();
        assert_eq!(cli.jobs, 3);
    }
}
