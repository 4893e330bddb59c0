//! Test-fold scoring with cold-start fallback, and mean/std over repeats.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::kernel::{self, KernelVariant};
use crate::ratings::{FactorModel, RatingTriples};

/// What the training fold says about each user and item.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingStats {
    pub global_mean: f64,
    pub user_counts: Vec<u32>,
    pub item_counts: Vec<u32>,
}

impl TrainingStats {
    pub fn from_train(train: &RatingTriples) -> Self {
        let mut user_counts = vec![0u32; train.n_users()];
        let mut item_counts = vec![0u32; train.n_items()];
        for r in train.entries() {
            user_counts[r.user] += 1;
            item_counts[r.item] += 1;
        }
        Self {
            global_mean: train.mean().unwrap_or(0.0),
            user_counts,
            item_counts,
        }
    }

    pub fn extend(&mut self, n_users: usize, n_items: usize) {
        if n_users > self.user_counts.len() {
            self.user_counts.resize(n_users, 0);
        }
        if n_items > self.item_counts.len() {
            self.item_counts.resize(n_items, 0);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fallback {
    /// Leave cold-start entries out of the RMSE.
    Skip,
    /// Predict the training-set mean rating.
    #[default]
    GlobalMean,
    /// Training mean plus whichever of the user/item biases was trained.
    BiasOnly,
}

impl Fallback {
    pub fn as_str(&self) -> &'static str {
        match self {
            Fallback::Skip => "skip",
            Fallback::GlobalMean => "global-mean",
            Fallback::BiasOnly => "bias-only",
        }
    }
}

impl fmt::Display for Fallback {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Fallback {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "skip" => Ok(Fallback::Skip),
            "global-mean" => Ok(Fallback::GlobalMean),
            "bias-only" => Ok(Fallback::BiasOnly),
            other => Err(Error::InvalidArgument(format!("unknown fallback {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EvalOptions {
    pub fallback: Fallback,
    /// Clamp every prediction into `[min, max]` before scoring.
    pub clamp: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalResult {
    pub rmse: f64,
    pub n_scored: usize,
    pub n_coldstart: usize,
    pub fallback: Fallback,
}

pub fn evaluate(
    test: &RatingTriples,
    model: &FactorModel,
    stats: &TrainingStats,
    variant: KernelVariant,
    opts: &EvalOptions,
) -> Result<EvalResult> {
    if test.n_users() != model.n_users
        || test.n_items() != model.n_items
        || stats.user_counts.len() != model.n_users
        || stats.item_counts.len() != model.n_items
    {
        return Err(Error::DimensionMismatch(format!(
            "test is {}x{}, model is {}x{}, training stats cover {}x{}",
            test.n_users(),
            test.n_items(),
            model.n_users,
            model.n_items,
            stats.user_counts.len(),
            stats.item_counts.len()
        )));
    }

    let mut sse = 0.0;
    let mut n_scored = 0;
    let mut n_coldstart = 0;
    for r in test.entries() {
        let user_known = stats.user_counts[r.user] > 0;
        let item_known = stats.item_counts[r.item] > 0;
        let pred = if user_known && item_known {
            kernel::predict(model, r.user, r.item, variant)
        } else {
            n_coldstart += 1;
            match opts.fallback {
                Fallback::Skip => continue,
                Fallback::GlobalMean => stats.global_mean,
                Fallback::BiasOnly => {
                    let mut p = stats.global_mean;
                    if variant == KernelVariant::BiasedSvd {
                        if user_known {
                            p += model.user_bias[r.user];
                        }
                        if item_known {
                            p += model.item_bias[r.item];
                        }
                    }
                    p
                }
            }
        };
        let pred = match opts.clamp {
            Some((lo, hi)) => pred.clamp(lo, hi),
            None => pred,
        };
        let e = r.value - pred;
        sse += e * e;
        n_scored += 1;
    }
    if n_scored == 0 {
        return Err(Error::EmptyScoredSet);
    }
    Ok(EvalResult {
        rmse: (sse / n_scored as f64).sqrt(),
        n_scored,
        n_coldstart,
        fallback: opts.fallback,
    })
}

/// Arithmetic mean and sample (n - 1) standard deviation; std is 0 for n = 1.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

pub fn aggregate(results: &[EvalResult]) -> (f64, f64) {
    let rmses: Vec<f64> = results.iter().map(|r| r.rmse).collect();
    mean_std(&rmses)
}
