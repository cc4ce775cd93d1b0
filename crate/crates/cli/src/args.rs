use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "ciu", version, about = "Contextual importance and utility explanations for black-box models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Explain one instance with one or more attribution methods.
    Explain(ExplainArgs),
    /// Global feature importance over many instances and iterations.
    Global(GlobalArgs),
    /// What-if (ceteris-paribus) plots with CIU annotations.
    Whatif(WhatifArgs),
    /// Repeat explanations with different seeds and compare their spread.
    Stability(StabilityArgs),
    /// Train a tree ensemble on a CSV file.
    Train(TrainArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Builtin {
    /// f(x) = 0.4x1 + 0.3x2 + 0.2x3 + 0.1x4 on [0,1]^4.
    Linear,
    /// f(x) = 0.7x1 sin(10x1) + 0.3x2 sin(10x2) + x3^2 + 2x4^4 - 1.5x4^2 on [0,1]^4.
    Nonlinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Svg,
    Text,
    Csv,
}

/// Options shared by every explaining subcommand.
#[derive(Debug, Clone, Args, Serialize)]
pub struct Common {
    /// Built-in reference predictor.
    #[arg(long, value_enum)]
    pub predictor: Option<Builtin>,
    /// Trained model file (JSON written by `ciu train`).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// CSV dataset for row instances, backgrounds and permutation importance.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Target column of --data; defaults to the model's target.
    #[arg(long)]
    pub target: Option<String>,
    /// JSON feature-space and output-utility configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output to explain, by index or name.
    #[arg(long, default_value = "0")]
    pub output: String,
    /// Directory for report files.
    #[arg(long, default_value = ".")]
    #[serde(skip)]
    pub output_dir: PathBuf,
    /// Output formats; text goes to standard output.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "json")]
    pub format: Vec<Format>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Random samples per feature for CIU.
    #[arg(long, default_value_t = ciu_core::DEFAULT_SAMPLES)]
    pub samples: usize,
    /// Sampled permutations for Monte-Carlo Shapley.
    #[arg(long, default_value_t = ciu_core::baselines::DEFAULT_SHAPLEY_BUDGET)]
    pub shapley_budget: usize,
    /// Perturbations for the local linear surrogate.
    #[arg(long, default_value_t = ciu_core::baselines::DEFAULT_LIME_SAMPLES)]
    pub lime_samples: usize,
    /// Neutral utility level for contextual influence.
    #[arg(long, default_value_t = ciu_core::DEFAULT_PHI0)]
    pub phi0: f64,
    /// Background rows for Shapley (drawn from --data, else uniform).
    #[arg(long, default_value_t = 1000)]
    pub background: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ExplainArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    /// Inline JSON array/object, or a row index into --data.
    #[arg(long)]
    pub instance: Option<String>,
    /// Attribution methods: ciu, shapley, lime.
    #[arg(long, value_delimiter = ',', default_value = "ciu")]
    pub methods: Vec<String>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GlobalArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    /// Global methods: ci, pfi-mae, pfi-ce, mean-abs-shapley.
    #[arg(long, value_delimiter = ',', default_value = "ci")]
    pub methods: Vec<String>,
    #[arg(long, default_value_t = 10)]
    pub iterations: usize,
    /// Instances per iteration.
    #[arg(long, default_value_t = 1000)]
    pub instances: usize,
    /// Shuffles per feature for permutation importance.
    #[arg(long, default_value_t = 1)]
    pub repeats: usize,
    /// Report raw importances instead of proportions.
    #[arg(long)]
    pub raw: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct WhatifArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[arg(long)]
    pub instance: Option<String>,
    /// Numeric features to plot; all numeric features when omitted.
    #[arg(long, value_delimiter = ',')]
    pub features: Vec<String>,
    /// Curve points per feature.
    #[arg(long, default_value_t = 101)]
    pub grid: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct StabilityArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[arg(long)]
    pub instance: Option<String>,
    /// Methods to compare: ciu, shapley, lime.
    #[arg(long, value_delimiter = ',', default_value = "ciu,shapley,lime")]
    pub methods: Vec<String>,
    #[arg(long, default_value_t = 50)]
    pub runs: usize,
    /// Run repetitions in parallel; elapsed times are then not comparable.
    #[arg(long)]
    pub parallel: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    /// CSV training data with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// Target column name.
    #[arg(long)]
    pub target: String,
    /// Read the target as class labels or as a real value.
    #[arg(long, value_enum, default_value = "auto")]
    pub target_kind: TargetKindArg,
    /// Optional JSON feature-space configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub trees: usize,
    #[arg(long, default_value_t = 8)]
    pub max_depth: usize,
    /// Features tried per split; round(sqrt(N)) when omitted.
    #[arg(long)]
    pub mtry: Option<usize>,
    /// Share of rows held out for evaluation.
    #[arg(long, default_value_t = 0.25)]
    pub test_fraction: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    #[serde(skip)]
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetKindArg {
    Auto,
    Classes,
    Real,
}
