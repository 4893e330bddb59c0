//! Run manifests: the full configuration of every run plus its results, as
//! JSON. A manifest is enough to re-execute its runs with `blocksvd rerun`.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use blocksvd_core::{
    DatasetFormat, DatasetSpec, EpochRecord, EvalOptions, EvalResult, Hyperparams, RoleRates, TrainConfig,
};
use serde::{Deserialize, Serialize};

pub const ROLE_MAPPING: &str = "learning rates and regularizers are named by role: \
user-factor = user latent features, item-factor = item latent features, \
user-bias = user biases, item-bias = item biases";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Roles {
    pub user_factor: f64,
    pub item_factor: f64,
    pub user_bias: f64,
    pub item_bias: f64,
}

impl From<RoleRates> for Roles {
    fn from(r: RoleRates) -> Self {
        Self {
            user_factor: r.user_factor,
            item_factor: r.item_factor,
            user_bias: r.user_bias,
            item_bias: r.item_bias,
        }
    }
}

impl From<Roles> for RoleRates {
    fn from(r: Roles) -> Self {
        Self {
            user_factor: r.user_factor,
            item_factor: r.item_factor,
            user_bias: r.user_bias,
            item_bias: r.item_bias,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperparamsRecord {
    pub alpha: Roles,
    pub beta: Roles,
    pub k: usize,
    pub max_steps: usize,
    pub delta: f64,
    pub seed: u64,
    pub init_scale: f64,
}

impl From<&Hyperparams> for HyperparamsRecord {
    fn from(hp: &Hyperparams) -> Self {
        Self {
            alpha: hp.alpha.into(),
            beta: hp.beta.into(),
            k: hp.k,
            max_steps: hp.max_steps,
            delta: hp.delta,
            seed: hp.seed,
            init_scale: hp.init_scale,
        }
    }
}

impl From<&HyperparamsRecord> for Hyperparams {
    fn from(r: &HyperparamsRecord) -> Self {
        Self {
            alpha: r.alpha.into(),
            beta: r.beta.into(),
            k: r.k,
            max_steps: r.max_steps,
            delta: r.delta,
            seed: r.seed,
            init_scale: r.init_scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataRecord {
    pub format: String,
    pub path: PathBuf,
    pub header: bool,
    /// `None` when the format has no native bounds.
    pub scale: Option<(f64, f64)>,
}

impl From<&DatasetSpec> for DataRecord {
    fn from(s: &DatasetSpec) -> Self {
        let bounded = s.rating_scale.0 > f64::MIN || s.rating_scale.1 < f64::MAX;
        Self {
            format: s.format.as_str().to_string(),
            path: s.path.clone(),
            header: matches!(s.format, DatasetFormat::Csv { header: true }),
            scale: bounded.then_some(s.rating_scale),
        }
    }
}

impl DataRecord {
    pub fn to_spec(&self) -> Result<DatasetSpec> {
        let format = match self.format.parse()? {
            DatasetFormat::Csv { .. } => DatasetFormat::Csv { header: self.header },
            f => f,
        };
        let mut spec = DatasetSpec::new(format, &self.path);
        if let Some(s) = self.scale {
            spec.rating_scale = s;
        }
        Ok(spec)
    }
}

/// Where a run's train and test folds come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SourceRecord {
    Split {
        data: DataRecord,
        fraction: f64,
        seed: u64,
    },
    Files {
        train: DataRecord,
        test: Option<DataRecord>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    /// pmf | svd | bcsvd | train
    pub label: String,
    pub source: SourceRecord,
    pub variant: String,
    pub grid: (usize, usize),
    pub mode: String,
    pub workers: usize,
    pub stop_on: String,
    pub hyperparams: HyperparamsRecord,
    pub fallback: String,
    pub clamp: Option<(f64, f64)>,
}

impl JobRecord {
    pub fn new(label: &str, source: SourceRecord, cfg: &TrainConfig, eval: &EvalOptions) -> Self {
        Self {
            label: label.to_string(),
            source,
            variant: cfg.variant.to_string(),
            grid: cfg.grid,
            mode: cfg.mode.to_string(),
            workers: cfg.workers,
            stop_on: cfg.stop_on.to_string(),
            hyperparams: (&cfg.hp).into(),
            fallback: eval.fallback.to_string(),
            clamp: eval.clamp,
        }
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        Ok(TrainConfig {
            hp: (&self.hyperparams).into(),
            grid: self.grid,
            mode: self.mode.parse()?,
            workers: self.workers,
            variant: self.variant.parse()?,
            stop_on: self.stop_on.parse()?,
        })
    }

    pub fn eval_options(&self) -> Result<EvalOptions> {
        Ok(EvalOptions {
            fallback: self.fallback.parse()?,
            clamp: self.clamp,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLine {
    pub epoch: usize,
    pub train_rmse: f64,
    pub test_rmse: Option<f64>,
    pub seconds: f64,
}

impl From<&EpochRecord> for EpochLine {
    fn from(r: &EpochRecord) -> Self {
        Self {
            epoch: r.epoch,
            train_rmse: r.train_rmse,
            test_rmse: r.test_rmse,
            seconds: r.seconds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub rmse: f64,
    pub n_scored: usize,
    pub n_coldstart: usize,
    pub fallback: String,
}

impl From<&EvalResult> for EvalRecord {
    fn from(r: &EvalResult) -> Self {
        Self {
            rmse: r.rmse,
            n_scored: r.n_scored,
            n_coldstart: r.n_coldstart,
            fallback: r.fallback.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub job: JobRecord,
    pub repeat: usize,
    /// ok | diverged | failed
    pub status: String,
    pub error: Option<String>,
    pub stop_reason: Option<String>,
    pub epochs: Vec<EpochLine>,
    pub final_train_rmse: Option<f64>,
    /// Bit pattern of `final_train_rmse`, so reruns compare exactly.
    pub final_train_rmse_bits: Option<String>,
    pub eval: Option<EvalRecord>,
    /// Mean block-pass seconds over epochs after the first.
    pub secs_per_iter: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub dataset: String,
    pub variant: String,
    pub grid: String,
    pub mode: String,
    pub workers: usize,
    pub repeats: usize,
    pub rmse_mean: f64,
    pub rmse_std: f64,
    pub secs_per_iter_mean: f64,
    pub secs_per_iter_std: f64,
}

pub const SUMMARY_HEADER: &str =
    "dataset,variant,grid,mode,workers,repeats,rmse_mean,rmse_std,secs_per_iter_mean,secs_per_iter_std";

impl SummaryRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.dataset,
            self.variant,
            self.grid,
            self.mode,
            self.workers,
            self.repeats,
            self.rmse_mean,
            self.rmse_std,
            self.secs_per_iter_mean,
            self.secs_per_iter_std
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub rng: String,
    /// train | benchmark
    pub kind: String,
    pub role_mapping: String,
    /// Standard deviations use the n - 1 denominator.
    pub std: String,
    pub runs: Vec<RunRecord>,
    pub summary: Vec<SummaryRow>,
}

impl RunManifest {
    pub fn new(kind: &str) -> Self {
        Self {
            tool: "blocksvd".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            rng: blocksvd_core::rng::RNG_VERSION.into(),
            kind: kind.into(),
            role_mapping: ROLE_MAPPING.into(),
            std: "sample (n-1)".into(),
            runs: Vec::new(),
            summary: Vec::new(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json + "\n").with_context(|| format!("writing {}", path.display()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
    }
}

pub fn bits(x: f64) -> String {
    format!("{:#018x}", x.to_bits())
}
