//! Executes a [`JobRecord`]: builds the folds, trains, scores the test fold.

use std::collections::HashMap;
use std::sync::Mutex;

use anyhow::Result;
use blocksvd_core::ingest::{self, Dataset};
use blocksvd_core::trainer::{self, TrainObserver};
use blocksvd_core::{
    EpochRecord, Error, EvalOptions, EvalResult, FactorModel, IdMap, RatingTriples, TrainConfig, TrainReport,
    TrainingStats,
};

use crate::manifest::{bits, DataRecord, JobRecord, RunRecord, SourceRecord};

/// Train and test folds in a shared index space.
#[derive(Debug, Clone)]
pub struct Folds {
    pub train: RatingTriples,
    pub test: Option<RatingTriples>,
    pub users: IdMap,
    pub items: IdMap,
}

/// Loads each distinct input file once.
#[derive(Default)]
pub struct Loader {
    cache: HashMap<String, Dataset>,
}

impl Loader {
    pub fn dataset(&mut self, data: &DataRecord) -> Result<&Dataset> {
        let key = serde_json::to_string(data)?;
        if !self.cache.contains_key(&key) {
            let ds = ingest::load(&data.to_spec()?)?;
            self.cache.insert(key.clone(), ds);
        }
        Ok(&self.cache[&key])
    }

    pub fn folds(&mut self, source: &SourceRecord) -> Result<Folds> {
        match source {
            SourceRecord::Split { data, fraction, seed } => {
                let ds = self.dataset(data)?;
                let split = ingest::split(&ds.ratings, *fraction, *seed)?;
                Ok(Folds {
                    train: split.train,
                    test: Some(split.test),
                    users: ds.users.clone(),
                    items: ds.items.clone(),
                })
            }
            SourceRecord::Files { train, test } => {
                let ds = ingest::load(&train.to_spec()?)?;
                let Some(test) = test else {
                    return Ok(Folds {
                        train: ds.ratings,
                        test: None,
                        users: ds.users,
                        items: ds.items,
                    });
                };
                let t = ingest::load_with(&test.to_spec()?, ds.users, ds.items)?;
                let train = ds.ratings.with_dims(t.users.len(), t.items.len())?;
                Ok(Folds {
                    train,
                    test: Some(t.ratings),
                    users: t.users,
                    items: t.items,
                })
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub model: FactorModel,
    pub report: TrainReport,
    pub stats: TrainingStats,
    pub eval: Option<EvalResult>,
}

/// Collects epoch records as they complete, so a diverged run still keeps
/// the epochs before the failure.
#[derive(Default)]
pub struct EpochLog {
    pub records: Mutex<Vec<EpochRecord>>,
}

impl TrainObserver for EpochLog {
    fn epoch_done(&self, record: &EpochRecord) {
        self.records.lock().unwrap().push(*record);
    }
}

impl EpochLog {
    pub fn take(&self) -> Vec<EpochRecord> {
        std::mem::take(&mut self.records.lock().unwrap())
    }
}

pub fn train(folds: &Folds, cfg: &TrainConfig, opts: &EvalOptions, log: &EpochLog) -> Result<Outcome> {
    let model = FactorModel::init(folds.train.n_users(), folds.train.n_items(), &cfg.hp)?;
    let (model, report) = trainer::train_from(&folds.train, folds.test.as_ref(), cfg, model, log)?;
    let stats = TrainingStats::from_train(&folds.train);
    let eval = folds
        .test
        .as_ref()
        .map(|t| blocksvd_core::eval::evaluate(t, &model, &stats, cfg.variant, opts))
        .transpose()?;
    Ok(Outcome {
        model,
        report,
        stats,
        eval,
    })
}

/// Mean epoch time, leaving out the first epoch (warm-up) when there is
/// more than one.
pub fn secs_per_iter(records: &[EpochRecord]) -> Option<f64> {
    let timed = match records.len() {
        0 => return None,
        1 => records,
        _ => &records[1..],
    };
    Some(timed.iter().map(|r| r.seconds).sum::<f64>() / timed.len() as f64)
}

pub fn is_divergence(err: &anyhow::Error) -> bool {
    err.chain()
        .any(|c| matches!(c.downcast_ref::<Error>(), Some(Error::Diverged(_))))
}

/// Runs `job` and records the result, success or not.
pub fn execute(loader: &mut Loader, job: &JobRecord, repeat: usize) -> RunRecord {
    let log = EpochLog::default();
    let result = (|| {
        let folds = loader.folds(&job.source)?;
        train(&folds, &job.train_config()?, &job.eval_options()?, &log)
    })();
    let mut record = RunRecord {
        job: job.clone(),
        repeat,
        status: "ok".into(),
        error: None,
        stop_reason: None,
        epochs: Vec::new(),
        final_train_rmse: None,
        final_train_rmse_bits: None,
        eval: None,
        secs_per_iter: None,
    };
    let epochs = log.take();
    record.epochs = epochs.iter().map(Into::into).collect();
    record.secs_per_iter = secs_per_iter(&epochs);
    match result {
        Ok(out) => {
            let rmse = out.report.final_train_rmse();
            record.stop_reason = Some(out.report.stop_reason.as_str().into());
            record.final_train_rmse = Some(rmse);
            record.final_train_rmse_bits = Some(bits(rmse));
            record.eval = out.eval.as_ref().map(Into::into);
        }
        Err(e) => {
            record.status = if is_divergence(&e) { "diverged" } else { "failed" }.into();
            if record.status == "diverged" {
                record.stop_reason = Some("diverged".into());
            }
            record.error = Some(format!("{e:#}"));
        }
    }
    record
}
