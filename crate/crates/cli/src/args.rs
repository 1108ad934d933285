use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "hip", version, about = "Multi-view association and outcome prediction with subgroup-aware variable selection")]
pub struct Cli {
    /// JSON file whose keys mirror the flags, or a run_manifest.json to rerun.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for candidate fits and replicates.
    #[arg(long, global = true, env = "HIP_JOBS")]
    pub jobs: Option<usize>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with known signal variables.
    Simulate(SimulateArgs),
    /// Fit one model at fixed penalties.
    Fit(FitArgs),
    /// Search the penalty grid by eBIC, then refit on the selected variables.
    Tune(TuneArgs),
    /// Predict outcomes for new data with a fitted model.
    Predict(PredictArgs),
    /// Score a model's variable selection against simulation truth.
    Evaluate(EvaluateArgs),
    /// Singular values and a suggested number of factors.
    Scree(ScreeArgs),
    /// Monte Carlo replicates of simulate, tune and evaluate.
    Experiment(ExperimentArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Fit(_) => "fit",
            Command::Tune(_) => "tune",
            Command::Predict(_) => "predict",
            Command::Evaluate(_) => "evaluate",
            Command::Scree(_) => "scree",
            Command::Experiment(_) => "experiment",
        }
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ScenarioArgs {
    /// binary, poisson or zip.
    #[arg(long)]
    pub family: Option<String>,
    /// full or partial.
    #[arg(long)]
    pub overlap: Option<String>,
    /// low (300, 350) or high (2000, 3000).
    #[arg(long)]
    pub dim: Option<String>,
    /// Variables per view, overriding --dim, e.g. 120,140.
    #[arg(long)]
    pub p: Option<String>,
    /// Samples per subgroup, e.g. 250,260.
    #[arg(long)]
    pub n: Option<String>,
    /// Number of latent factors.
    #[arg(long)]
    pub k: Option<usize>,
    /// Signal variables per view and subgroup.
    #[arg(long)]
    pub signals: Option<usize>,
    /// Signals shared between subgroups under partial overlap.
    #[arg(long)]
    pub common: Option<usize>,
    #[arg(long)]
    pub noise_sd: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct SimulateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub scenario: ScenarioArgs,
    /// Also write a test set drawn with the same loadings.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub test_set: Option<bool>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ModelArgs {
    /// Dataset manifest.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Model family; defaults to the dataset's. binary, multiclass:M, poisson or zip.
    #[arg(long)]
    pub family: Option<String>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Per-view penalty indicators, e.g. 1,1.
    #[arg(long)]
    pub gamma: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Relative objective change that ends the outer loop.
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub iter_max: Option<usize>,
    /// subgroup or none.
    #[arg(long)]
    pub standardize: Option<String>,
    /// Variables kept per view, e.g. 30,35.
    #[arg(long)]
    pub n_top: Option<String>,
    #[arg(long)]
    pub inner_iter_max: Option<usize>,
    #[arg(long)]
    pub inner_tol: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct FitArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub lambda_g: Option<f64>,
    #[arg(long)]
    pub lambda_xi: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct SearchArgs {
    /// grid or random.
    #[arg(long)]
    pub mode: Option<String>,
    /// Grid values per penalty.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Penalty range low:high, low excluded.
    #[arg(long)]
    pub range: Option<String>,
    /// ebic0, ebic05 or ebic1.
    #[arg(long)]
    pub criterion: Option<String>,
    #[arg(long)]
    pub random_fraction: Option<f64>,
    #[arg(long)]
    pub search_seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct TuneArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub search: SearchArgs,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct PredictArgs {
    /// model.json written by fit or tune.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Manifest of the data to predict.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// truth.json written by simulate.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Variables counted as selected per view when the model has no ranking.
    #[arg(long)]
    pub n_top: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ScreeArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Smallest relative singular-value drop that counts as a factor.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// concatenated, per-view-subgroup or both.
    #[arg(long)]
    pub target: Option<String>,
    /// subgroup or none.
    #[arg(long)]
    pub standardize: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ExperimentArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub scenario: ScenarioArgs,
    /// Model families to run on the data, e.g. zip,poisson; defaults to the data family.
    #[arg(long)]
    pub engine: Option<String>,
    /// Metrics kept in the summary, e.g. tpr,f1,d2.
    #[arg(long)]
    pub metrics: Option<String>,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub n_top: Option<String>,
    #[command(flatten)]
    #[serde(flatten)]
    pub search: SearchArgs,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub iter_max: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
