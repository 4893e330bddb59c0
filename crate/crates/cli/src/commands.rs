use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use blocksvd_core::eval::{self, EvalOptions};
use blocksvd_core::ingest::{self, DatasetSpec};
use blocksvd_core::{ExecMode, StopMetric};
use serde::Serialize;

use crate::args::{EvaluateArgs, RerunArgs, SplitArgs, TrainArgs};
use crate::artifact::{self, SavedModel};
use crate::config::{self, Settings};
use crate::manifest::{DataRecord, EvalRecord, JobRecord, RunManifest, SourceRecord};
use crate::runner::{self, EpochLog, Loader};
use crate::UsageError;

pub const DEFAULT_FRACTION: f64 = 0.8;
pub const DEFAULT_SPLIT_SEED: u64 = 42;

fn out_dir(settings: &Settings, flag: Option<PathBuf>, default: &str) -> Result<PathBuf> {
    let dir = settings
        .pick(flag, "out-dir")?
        .unwrap_or_else(|| PathBuf::from(default));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

#[derive(Serialize)]
struct SplitRecord {
    source: DataRecord,
    fraction: f64,
    seed: u64,
    n_train: usize,
    n_test: usize,
    rng: &'static str,
}

pub fn split(settings: &Settings, args: &SplitArgs, out: &mut dyn Write) -> Result<()> {
    let spec = config::dataset_spec(settings, &args.data, None, None)?;
    let fraction = settings.pick(args.fraction, "fraction")?.unwrap_or(DEFAULT_FRACTION);
    let seed = settings.pick(args.seed, "seed")?.unwrap_or(DEFAULT_SPLIT_SEED);
    let dir = out_dir(settings, args.out_dir.clone(), "split")?;

    let ds = ingest::load(&spec)?;
    let s = ingest::split(&ds.ratings, fraction, seed)?;
    ingest::write_csv_file(&dir.join("train.csv"), &s.train, &ds.users, &ds.items)?;
    ingest::write_csv_file(&dir.join("test.csv"), &s.test, &ds.users, &ds.items)?;
    let record = SplitRecord {
        source: (&spec).into(),
        fraction,
        seed,
        n_train: s.train.len(),
        n_test: s.test.len(),
        rng: blocksvd_core::rng::RNG_VERSION,
    };
    fs::write(dir.join("split.json"), serde_json::to_string_pretty(&record)? + "\n")?;
    writeln!(
        out,
        "train={} test={} seed={seed} out={}",
        s.train.len(),
        s.test.len(),
        dir.display()
    )?;
    Ok(())
}

fn with_path(spec: &DatasetSpec, path: &Path) -> DatasetSpec {
    DatasetSpec {
        path: path.to_path_buf(),
        ..spec.clone()
    }
}

pub fn train(settings: &Settings, args: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    let spec = config::dataset_spec(settings, &args.data, None, None)?;
    let test = settings.pick(args.test.clone(), "test")?;
    let variant = config::variant(settings, &args.model)?;
    let hp = config::hyperparams(settings, &args.model, variant)?;
    let grid = config::grid(settings, &args.model, (1, 1))?;
    let default_mode = if grid == (1, 1) {
        ExecMode::Serial
    } else {
        ExecMode::Parallel
    };
    let mode = config::mode(settings, &args.model, default_mode)?;
    let workers = config::workers(settings, &args.model)?;
    let default_stop = if test.is_some() {
        StopMetric::Test
    } else {
        StopMetric::Train
    };
    let stop_on = config::stop_on(settings, &args.model, default_stop)?;
    let cfg = blocksvd_core::TrainConfig {
        hp,
        grid,
        mode,
        workers,
        variant,
        stop_on,
    };
    let opts = EvalOptions::default();
    let dir = out_dir(settings, args.out_dir.clone(), "model")?;

    let source = SourceRecord::Files {
        train: (&spec).into(),
        test: test.as_deref().map(|p| (&with_path(&spec, p)).into()),
    };
    let job = JobRecord::new("train", source, &cfg, &opts);
    let folds = Loader::default().folds(&job.source)?;
    let log = EpochLog::default();
    let result = runner::train(&folds, &cfg, &opts, &log);

    let mut metrics = String::new();
    for r in log.take() {
        metrics.push_str(&format!("{r}\n"));
    }
    out.write_all(metrics.as_bytes())?;
    fs::write(dir.join("metrics.txt"), &metrics)?;

    let outcome = match result {
        Ok(o) => o,
        Err(e) => {
            fs::write(dir.join("FAILED"), format!("{e:#}\n"))?;
            return Err(e);
        }
    };
    let model_path = dir.join("model.bin");
    artifact::save(
        &model_path,
        &SavedModel {
            model: outcome.model,
            variant,
            stats: outcome.stats,
            users: folds.users,
            items: folds.items,
        },
    )?;

    let mut manifest = RunManifest::new("train");
    let rmse = outcome.report.final_train_rmse();
    manifest.runs.push(crate::manifest::RunRecord {
        job,
        repeat: 0,
        status: "ok".into(),
        error: None,
        stop_reason: Some(outcome.report.stop_reason.as_str().into()),
        epochs: outcome.report.records.iter().map(Into::into).collect(),
        final_train_rmse: Some(rmse),
        final_train_rmse_bits: Some(crate::manifest::bits(rmse)),
        eval: outcome.eval.as_ref().map(Into::into),
        secs_per_iter: runner::secs_per_iter(&outcome.report.records),
    });
    manifest.write(&dir.join("manifest.json"))?;
    writeln!(
        out,
        "stop={} epochs={} model={}",
        outcome.report.stop_reason.as_str(),
        outcome.report.records.len(),
        model_path.display()
    )?;
    Ok(())
}

/// Scores a saved model. Ids the model has never seen get zero factors and
/// count as cold start.
pub fn evaluate(settings: &Settings, args: &EvaluateArgs, out: &mut dyn Write) -> Result<()> {
    let spec = config::dataset_spec(settings, &args.data, None, None)?;
    let opts = EvalOptions {
        fallback: config::fallback(settings, &args.eval)?,
        clamp: config::clamp(settings, &args.eval, spec.rating_scale)?,
    };
    let SavedModel {
        mut model,
        variant,
        mut stats,
        users,
        items,
    } = artifact::load(&args.model)?;
    let ds = ingest::load_with(&spec, users, items)?;
    model.extend(ds.users.len(), ds.items.len());
    stats.extend(ds.users.len(), ds.items.len());
    let result = eval::evaluate(&ds.ratings, &model, &stats, variant, &opts)?;
    writeln!(out, "{}", serde_json::to_string(&EvalRecord::from(&result))?)?;
    Ok(())
}

/// Re-executes every run in a manifest and compares final train RMSE bit
/// for bit.
pub fn rerun(_settings: &Settings, args: &RerunArgs, out: &mut dyn Write) -> Result<()> {
    let manifest = RunManifest::read(&args.manifest)?;
    if manifest.rng != blocksvd_core::rng::RNG_VERSION {
        bail!(UsageError(format!(
            "manifest was produced with rng {} but this build uses {}",
            manifest.rng,
            blocksvd_core::rng::RNG_VERSION
        )));
    }
    let mut loader = Loader::default();
    let mut mismatches = 0;
    for (n, old) in manifest.runs.iter().enumerate() {
        let new = runner::execute(&mut loader, &old.job, old.repeat);
        let same = new.status == old.status && new.final_train_rmse_bits == old.final_train_rmse_bits;
        if !same {
            mismatches += 1;
        }
        writeln!(
            out,
            "run={n} label={} repeat={} recorded={} now={} {}",
            old.job.label,
            old.repeat,
            old.final_train_rmse_bits.as_deref().unwrap_or(&old.status),
            new.final_train_rmse_bits.as_deref().unwrap_or(&new.status),
            if same { "match" } else { "MISMATCH" }
        )?;
    }
    if mismatches > 0 {
        bail!("{mismatches} of {} runs did not reproduce", manifest.runs.len());
    }
    Ok(())
}
