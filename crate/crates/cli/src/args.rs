use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "blocksvd", version, about = "Block-partitioned SGD matrix factorization")]
pub struct Cli {
    /// Flat `key = value` file; keys are long flag names. Flags win over it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Seeded train/test split of a ratings file.
    Split(SplitArgs),
    /// Train one model and write it to disk.
    Train(TrainArgs),
    /// Score a saved model on a ratings file.
    Evaluate(EvaluateArgs),
    /// Repeated PMF / SVD / block-SVD runs with a summary table.
    Benchmark(BenchmarkArgs),
    /// Re-execute every run recorded in a manifest and compare final train RMSE.
    Rerun(RerunArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct DataArgs {
    /// movielens-100k | movielens-1m | csv
    #[arg(long)]
    pub format: Option<String>,

    #[arg(long)]
    pub input: Option<PathBuf>,

    /// CSV input has no header line.
    #[arg(long)]
    pub no_header: bool,

    /// Native rating bounds as `MIN,MAX`.
    #[arg(long)]
    pub scale: Option<String>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ModelArgs {
    /// biased-svd | pmf
    #[arg(long)]
    pub variant: Option<String>,

    /// Block grid as `IxJ`.
    #[arg(long)]
    pub grid: Option<String>,

    /// serial | parallel
    #[arg(long)]
    pub mode: Option<String>,

    #[arg(long)]
    pub workers: Option<usize>,

    #[arg(long)]
    pub k: Option<usize>,

    /// Learning rate for every role.
    #[arg(long)]
    pub alpha: Option<f64>,

    /// Regularizer for every role.
    #[arg(long)]
    pub beta: Option<f64>,

    #[arg(long)]
    pub alpha_user_factor: Option<f64>,
    #[arg(long)]
    pub alpha_item_factor: Option<f64>,
    #[arg(long)]
    pub alpha_user_bias: Option<f64>,
    #[arg(long)]
    pub alpha_item_bias: Option<f64>,

    #[arg(long)]
    pub beta_user_factor: Option<f64>,
    #[arg(long)]
    pub beta_item_factor: Option<f64>,
    #[arg(long)]
    pub beta_user_bias: Option<f64>,
    #[arg(long)]
    pub beta_item_bias: Option<f64>,

    #[arg(long)]
    pub delta: Option<f64>,

    #[arg(long)]
    pub max_steps: Option<usize>,

    #[arg(long)]
    pub seed: Option<u64>,

    /// Factors start uniform on [0, init-scale); default 1/sqrt(k).
    #[arg(long)]
    pub init_scale: Option<f64>,

    /// Early-stop on `train` or `test` RMSE improvement.
    #[arg(long)]
    pub stop_on: Option<String>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct EvalFlags {
    /// skip | global-mean | bias-only
    #[arg(long)]
    pub fallback: Option<String>,

    /// Clamp predictions to the rating scale.
    #[arg(long)]
    pub clamp: bool,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[command(flatten)]
    pub data: DataArgs,

    #[arg(long)]
    pub fraction: Option<f64>,

    #[arg(long)]
    pub seed: Option<u64>,

    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,

    /// Held-out ratings, same format as --input.
    #[arg(long)]
    pub test: Option<PathBuf>,

    #[command(flatten)]
    pub model: ModelArgs,

    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Model file written by `train`.
    #[arg(long)]
    pub model: PathBuf,

    #[command(flatten)]
    pub data: DataArgs,

    #[command(flatten)]
    pub eval: EvalFlags,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// ml-100k | ml-1m | csv
    #[arg(long)]
    pub dataset: Option<String>,

    #[command(flatten)]
    pub data: DataArgs,

    #[arg(long)]
    pub fraction: Option<f64>,

    #[arg(long)]
    pub repeats: Option<usize>,

    /// Comma-separated subset of pmf,svd,bcsvd.
    #[arg(long)]
    pub variants: Option<String>,

    #[command(flatten)]
    pub model: ModelArgs,

    /// PMF learning rate.
    #[arg(long)]
    pub pmf_alpha: Option<f64>,

    /// PMF regularizer.
    #[arg(long)]
    pub pmf_beta: Option<f64>,

    #[command(flatten)]
    pub eval: EvalFlags,

    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RerunArgs {
    /// manifest.json written by `train` or `benchmark`.
    #[arg(long)]
    pub manifest: PathBuf,
}
