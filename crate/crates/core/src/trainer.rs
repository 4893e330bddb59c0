//! The epoch loop: every block once per epoch, early stop on RMSE improvement.
//!
//! Serial mode walks blocks in row-major order. Parallel mode walks the
//! wavefront schedule; the blocks of one step own pairwise disjoint user and
//! item ranges, so each gets its own mutable slices of the model and the step
//! ends with a join before the next one starts.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::{Divergence, Error, Result};
use crate::eval::{self, EvalOptions, TrainingStats};
use crate::kernel::{self, BlockParams, KernelVariant};
use crate::ratings::{BlockGrid, BlockView, BlockedRatings, FactorModel, Hyperparams, RatingTriples};
use crate::scheduler::{BlockId, Schedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ExecMode {
    #[default]
    Serial,
    Parallel,
}

impl ExecMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExecMode::Serial => "serial",
            ExecMode::Parallel => "parallel",
        }
    }
}

impl fmt::Display for ExecMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExecMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "serial" => Ok(ExecMode::Serial),
            "parallel" => Ok(ExecMode::Parallel),
            other => Err(Error::InvalidArgument(format!("unknown mode {other:?}"))),
        }
    }
}

/// Which RMSE the early-stop test watches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum StopMetric {
    /// RMSE over the training entries.
    #[default]
    Train,
    /// RMSE over the held-out set passed to `train`, scored as `evaluate`
    /// does with its default options.
    Test,
}

impl StopMetric {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopMetric::Train => "train",
            StopMetric::Test => "test",
        }
    }
}

impl fmt::Display for StopMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StopMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(StopMetric::Train),
            "test" => Ok(StopMetric::Test),
            other => Err(Error::InvalidArgument(format!("unknown stop metric {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub hp: Hyperparams,
    /// `(row_blocks, col_blocks)`
    pub grid: (usize, usize),
    pub mode: ExecMode,
    pub workers: usize,
    pub variant: KernelVariant,
    pub stop_on: StopMetric,
}

impl TrainConfig {
    pub fn serial(hp: Hyperparams, variant: KernelVariant) -> Self {
        Self {
            hp,
            grid: (1, 1),
            mode: ExecMode::Serial,
            workers: 1,
            variant,
            stop_on: StopMetric::Train,
        }
    }

    pub fn parallel(hp: Hyperparams, variant: KernelVariant, grid: (usize, usize), workers: usize) -> Self {
        Self {
            hp,
            grid,
            mode: ExecMode::Parallel,
            workers,
            variant,
            stop_on: StopMetric::Train,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.hp.validate()?;
        if self.workers == 0 {
            return Err(Error::InvalidArgument("workers must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_rmse: f64,
    pub test_rmse: Option<f64>,
    /// Block-pass phase only; RMSE evaluation is excluded.
    pub seconds: f64,
}

impl fmt::Display for EpochRecord {
    /// `epoch=3 train_rmse=0.91 test_rmse=0.95 seconds=0.012`
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "epoch={} train_rmse={}", self.epoch, self.train_rmse)?;
        match self.test_rmse {
            Some(t) => write!(f, " test_rmse={t}")?,
            None => write!(f, " test_rmse=nan")?,
        }
        write!(f, " seconds={}", self.seconds)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    DeltaConverged,
    MaxSteps,
    Diverged,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::DeltaConverged => "delta-converged",
            StopReason::MaxSteps => "max-steps",
            StopReason::Diverged => "diverged",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub initial_train_rmse: f64,
    /// RMSE of the initial model on the monitored set, the baseline for the
    /// first stop test.
    pub initial_stop_rmse: f64,
    pub stop_metric: StopMetric,
    pub records: Vec<EpochRecord>,
    pub stop_reason: StopReason,
}

impl TrainReport {
    pub fn final_train_rmse(&self) -> f64 {
        self.records.last().map_or(self.initial_train_rmse, |r| r.train_rmse)
    }

    pub fn final_test_rmse(&self) -> Option<f64> {
        self.records.last().and_then(|r| r.test_rmse)
    }
}

/// Hooks into a training run. Called from worker threads in parallel mode.
pub trait TrainObserver: Sync {
    /// A block finished its pass; `visited` entries went through the kernel.
    fn block_done(&self, _epoch: usize, _step: usize, _view: &BlockView<'_>, _visited: usize) {}

    fn epoch_done(&self, _record: &EpochRecord) {}
}

pub struct NoObserver;

impl TrainObserver for NoObserver {}

/// Root mean squared error of raw predictions over `data`.
pub fn epoch_rmse(data: &RatingTriples, model: &FactorModel, variant: KernelVariant) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyInput("RMSE data".into()));
    }
    let sse: f64 = data
        .entries()
        .iter()
        .map(|r| {
            let e = r.value - kernel::predict(model, r.user, r.item, variant);
            e * e
        })
        .sum();
    Ok((sse / data.len() as f64).sqrt())
}

pub fn train(
    train_data: &RatingTriples,
    test_data: Option<&RatingTriples>,
    cfg: &TrainConfig,
) -> Result<(FactorModel, TrainReport)> {
    let model = FactorModel::init(train_data.n_users(), train_data.n_items(), &cfg.hp)?;
    train_from(train_data, test_data, cfg, model, &NoObserver)
}

/// Train starting from a given model.
pub fn train_from(
    train_data: &RatingTriples,
    test_data: Option<&RatingTriples>,
    cfg: &TrainConfig,
    model: FactorModel,
    observer: &dyn TrainObserver,
) -> Result<(FactorModel, TrainReport)> {
    let mut trainer = Trainer::new(train_data, cfg)?;
    trainer.run(train_data, test_data, model, observer)
}

/// Bucketed data, schedule and worker pool for repeated runs over one dataset.
pub struct Trainer {
    cfg: TrainConfig,
    blocked: BlockedRatings,
    schedule: Schedule,
    #[cfg(feature = "parallel")]
    pool: Option<rayon::ThreadPool>,
}

impl Trainer {
    pub fn new(train_data: &RatingTriples, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        if train_data.is_empty() {
            return Err(Error::EmptyInput("training data".into()));
        }
        let grid = BlockGrid::new(train_data.n_users(), train_data.n_items(), cfg.grid.0, cfg.grid.1)?;
        let blocked = BlockedRatings::new(train_data, grid)?;
        let schedule = match cfg.mode {
            ExecMode::Serial => Schedule::serial(grid.row_blocks, grid.col_blocks),
            ExecMode::Parallel => Schedule::wavefront(grid.row_blocks, grid.col_blocks),
        };
        #[cfg(feature = "parallel")]
        let pool = match cfg.mode {
            ExecMode::Parallel => Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(cfg.workers)
                    .build()
                    .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))?,
            ),
            ExecMode::Serial => None,
        };
        Ok(Self {
            cfg: *cfg,
            blocked,
            schedule,
            #[cfg(feature = "parallel")]
            pool,
        })
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    pub fn blocked(&self) -> &BlockedRatings {
        &self.blocked
    }

    pub fn run(
        &mut self,
        train_data: &RatingTriples,
        test_data: Option<&RatingTriples>,
        mut model: FactorModel,
        observer: &dyn TrainObserver,
    ) -> Result<(FactorModel, TrainReport)> {
        let grid = *self.blocked.grid();
        if model.n_users != grid.n_users || model.n_items != grid.n_items || model.k != self.cfg.hp.k {
            return Err(Error::DimensionMismatch(format!(
                "model is {}x{} rank {}, training data is {}x{} rank {}",
                model.n_users, model.n_items, model.k, grid.n_users, grid.n_items, self.cfg.hp.k
            )));
        }
        let test_eval = test_data.map(|t| (t, TrainingStats::from_train(train_data)));
        let variant = self.cfg.variant;
        let stop_metric = self.cfg.stop_on;
        let test_rmse_of = |model: &FactorModel| -> Result<Option<f64>> {
            match &test_eval {
                Some((t, stats)) => Ok(Some(
                    eval::evaluate(t, model, stats, variant, &EvalOptions::default())?.rmse,
                )),
                None => Ok(None),
            }
        };

        let initial_train_rmse = epoch_rmse(train_data, &model, variant)?;
        let initial_stop_rmse = match stop_metric {
            StopMetric::Train => initial_train_rmse,
            StopMetric::Test => test_rmse_of(&model)?
                .ok_or_else(|| Error::InvalidArgument("stopping on test RMSE needs a test set".into()))?,
        };
        let mut prev = initial_stop_rmse;
        let mut records = Vec::new();
        let report = |records, stop_reason| TrainReport {
            initial_train_rmse,
            initial_stop_rmse,
            stop_metric,
            records,
            stop_reason,
        };

        for epoch in 1..=self.cfg.hp.max_steps {
            let started = Instant::now();
            for (step_idx, step) in self.schedule.steps.iter().enumerate() {
                self.run_step(&mut model, step, epoch, step_idx, observer)
                    .map_err(|mut d| {
                        d.epoch = epoch;
                        Error::Diverged(Box::new(d))
                    })?;
            }
            let seconds = started.elapsed().as_secs_f64();

            let train_rmse = epoch_rmse(train_data, &model, variant)?;
            if !train_rmse.is_finite() {
                return Err(Error::Diverged(Box::new(Divergence {
                    epoch,
                    block: (0, 0),
                    user: 0,
                    item: 0,
                    value: train_rmse,
                })));
            }
            let test_rmse = test_rmse_of(&model)?;
            let record = EpochRecord {
                epoch,
                train_rmse,
                test_rmse,
                seconds,
            };
            observer.epoch_done(&record);
            records.push(record);

            let current = match stop_metric {
                StopMetric::Train => train_rmse,
                StopMetric::Test => test_rmse.unwrap_or(f64::NAN),
            };
            if prev - current < self.cfg.hp.delta {
                return Ok((model, report(records, StopReason::DeltaConverged)));
            }
            prev = current;
        }
        Ok((model, report(records, StopReason::MaxSteps)))
    }

    fn run_step(
        &self,
        model: &mut FactorModel,
        step: &[BlockId],
        epoch: usize,
        step_idx: usize,
        observer: &dyn TrainObserver,
    ) -> std::result::Result<(), Divergence> {
        let grid = self.blocked.grid();
        let hp = &self.cfg.hp;
        let variant = self.cfg.variant;
        let tasks = split_for_step(model, grid, step, &self.blocked);

        let run = |(view, mut params): (BlockView<'_>, BlockParams<'_>)| {
            let visited = kernel::block_pass(&view, &mut params, hp, variant)?;
            observer.block_done(epoch, step_idx, &view, visited);
            Ok(())
        };

        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            if tasks.len() > 1 {
                let results: Vec<std::result::Result<(), Divergence>> =
                    pool.install(|| tasks.into_par_iter().map(run).collect());
                return results.into_iter().collect();
            }
        }
        tasks.into_iter().try_for_each(run)
    }
}

/// Hands each block of a step exclusive slices of the rows it owns.
///
/// Panics if two blocks of the step share a block-row or block-column.
fn split_for_step<'m, 'd>(
    model: &'m mut FactorModel,
    grid: &BlockGrid,
    step: &[BlockId],
    blocked: &'d BlockedRatings,
) -> Vec<(BlockView<'d>, BlockParams<'m>)> {
    let k = model.k;
    let FactorModel {
        user_factors,
        item_factors,
        user_bias,
        item_bias,
        ..
    } = model;
    let mut uf: Vec<Option<&mut [f64]>> = user_factors.chunks_mut(grid.row_block_size * k).map(Some).collect();
    let mut vf: Vec<Option<&mut [f64]>> = item_factors.chunks_mut(grid.col_block_size * k).map(Some).collect();
    let mut ub: Vec<Option<&mut [f64]>> = user_bias.chunks_mut(grid.row_block_size).map(Some).collect();
    let mut vb: Vec<Option<&mut [f64]>> = item_bias.chunks_mut(grid.col_block_size).map(Some).collect();

    step.iter()
        .map(|&(i, j)| {
            let taken = "block-row or block-column scheduled twice in one step";
            let params = BlockParams {
                k,
                users: grid.user_range(i),
                items: grid.item_range(j),
                user_factors: uf[i].take().expect(taken),
                item_factors: vf[j].take().expect(taken),
                user_bias: ub[i].take().expect(taken),
                item_bias: vb[j].take().expect(taken),
            };
            (blocked.block(i, j), params)
        })
        .collect()
}
