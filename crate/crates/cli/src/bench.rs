//! `blocksvd benchmark`: PMF, SVD and block-SVD over repeated seeded splits.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Result};
use blocksvd_core::eval::mean_std;
use blocksvd_core::{DatasetFormat, DatasetSpec, EvalOptions, ExecMode, KernelVariant, StopMetric, TrainConfig};

use crate::args::BenchmarkArgs;
use crate::commands::{DEFAULT_FRACTION, DEFAULT_SPLIT_SEED};
use crate::config::{self, Settings};
use crate::manifest::{JobRecord, RunManifest, RunRecord, SourceRecord, SummaryRow, SUMMARY_HEADER};
use crate::runner::{self, Loader};
use crate::UsageError;

pub const DEFAULT_REPEATS: usize = 3;
pub const DEFAULT_BLOCK_GRID: (usize, usize) = (8, 8);

/// Default input for a named dataset: `$BLOCKSVD_ML100K` / `$BLOCKSVD_ML1M`,
/// else the usual file under `data/`.
pub fn default_input(dataset: &str) -> Option<PathBuf> {
    let (var, path) = match dataset {
        "ml-100k" => ("BLOCKSVD_ML100K", "data/ml-100k/u.data"),
        "ml-1m" => ("BLOCKSVD_ML1M", "data/ml-1m/ratings.dat"),
        _ => return None,
    };
    Some(std::env::var_os(var).map_or_else(|| PathBuf::from(path), PathBuf::from))
}

fn dataset_spec(settings: &Settings, args: &BenchmarkArgs) -> Result<(String, DatasetSpec)> {
    let name = settings
        .pick(args.dataset.clone(), "dataset")?
        .unwrap_or_else(|| "ml-100k".to_string());
    let default_format = match name.as_str() {
        "ml-100k" => DatasetFormat::MovieLens100k,
        "ml-1m" => DatasetFormat::MovieLens1m,
        "csv" => DatasetFormat::Csv { header: true },
        other => bail!(UsageError(format!(
            "unknown dataset {other:?}; expected ml-100k, ml-1m or csv"
        ))),
    };
    let input = match settings.pick(args.data.input.clone(), "input")? {
        Some(p) => p,
        None => match default_input(&name) {
            Some(p) => p,
            None => bail!(UsageError("--input is required for --dataset csv".into())),
        },
    };
    let spec = config::dataset_spec(settings, &args.data, Some(input), Some(default_format))?;
    Ok((name, spec))
}

struct Setup {
    label: &'static str,
    cfg: TrainConfig,
}

fn setups(settings: &Settings, args: &BenchmarkArgs) -> Result<Vec<Setup>> {
    let wanted = settings
        .pick(args.variants.clone(), "variants")?
        .unwrap_or_else(|| "pmf,svd,bcsvd".to_string());
    let workers = config::workers(settings, &args.model)?;
    let stop_on = config::stop_on(settings, &args.model, StopMetric::Test)?;
    let svd = config::hyperparams(settings, &args.model, KernelVariant::BiasedSvd)?;
    let mut out = Vec::new();
    for name in wanted.split(',').map(str::trim) {
        let (label, mut cfg) = match name {
            "pmf" => {
                let hp = config::pmf_hyperparams(settings, &args.model, args.pmf_alpha, args.pmf_beta)?;
                ("pmf", TrainConfig::serial(hp, KernelVariant::Pmf))
            }
            "svd" => ("svd", TrainConfig::serial(svd, KernelVariant::BiasedSvd)),
            "bcsvd" => {
                let grid = config::grid(settings, &args.model, DEFAULT_BLOCK_GRID)?;
                let mode = config::mode(settings, &args.model, ExecMode::Parallel)?;
                let mut cfg = TrainConfig::parallel(svd, KernelVariant::BiasedSvd, grid, workers);
                cfg.mode = mode;
                ("bcsvd", cfg)
            }
            other => bail!(UsageError(format!("unknown benchmark variant {other:?}"))),
        };
        cfg.stop_on = stop_on;
        out.push(Setup { label, cfg });
    }
    Ok(out)
}

pub fn run(settings: &Settings, args: &BenchmarkArgs, out: &mut dyn Write) -> Result<()> {
    let (dataset, spec) = dataset_spec(settings, args)?;
    let fraction = settings.pick(args.fraction, "fraction")?.unwrap_or(DEFAULT_FRACTION);
    let repeats = settings.pick(args.repeats, "repeats")?.unwrap_or(DEFAULT_REPEATS);
    if repeats == 0 {
        bail!(UsageError("--repeats must be at least 1".into()));
    }
    let opts = EvalOptions {
        fallback: config::fallback(settings, &args.eval)?,
        clamp: config::clamp(settings, &args.eval, spec.rating_scale)?,
    };
    let setups = setups(settings, args)?;
    let base_seed = settings.pick(args.model.seed, "seed")?.unwrap_or(DEFAULT_SPLIT_SEED);
    let dir = settings
        .pick(args.out_dir.clone(), "out-dir")?
        .unwrap_or_else(|| PathBuf::from("bench-out"));
    fs::create_dir_all(&dir)?;

    let mut loader = Loader::default();
    loader.dataset(&(&spec).into())?;
    let mut manifest = RunManifest::new("benchmark");
    for setup in &setups {
        let mut runs: Vec<RunRecord> = Vec::new();
        for r in 0..repeats {
            let seed = base_seed + r as u64;
            let mut cfg = setup.cfg;
            cfg.hp.seed = seed;
            let source = SourceRecord::Split {
                data: (&spec).into(),
                fraction,
                seed,
            };
            let job = JobRecord::new(setup.label, source, &cfg, &opts);
            let record = runner::execute(&mut loader, &job, r);
            if record.status != "ok" {
                let marker = dir.join(format!("FAILED-{}-{r}.txt", setup.label));
                fs::write(&marker, record.error.clone().unwrap_or_default() + "\n")?;
            }
            writeln!(
                out,
                "{} repeat={r} seed={seed} status={} epochs={} test_rmse={}",
                setup.label,
                record.status,
                record.epochs.len(),
                record.eval.as_ref().map_or(f64::NAN, |e| e.rmse)
            )?;
            runs.push(record);
        }
        manifest.summary.push(summarize(&dataset, setup, &runs));
        manifest.runs.extend(runs);
    }

    manifest.write(&dir.join("manifest.json"))?;
    let mut csv = String::from(SUMMARY_HEADER);
    csv.push('\n');
    for row in &manifest.summary {
        csv.push_str(&row.csv_line());
        csv.push('\n');
    }
    fs::write(dir.join("summary.csv"), csv)?;
    let table = render_table(&manifest.summary);
    fs::write(dir.join("summary.txt"), &table)?;
    out.write_all(table.as_bytes())?;
    Ok(())
}

/// Aggregates the successful repeats; `repeats` counts only those.
fn summarize(dataset: &str, setup: &Setup, runs: &[RunRecord]) -> SummaryRow {
    let ok: Vec<&RunRecord> = runs.iter().filter(|r| r.status == "ok").collect();
    let rmse: Vec<f64> = ok.iter().filter_map(|r| r.eval.as_ref().map(|e| e.rmse)).collect();
    let secs: Vec<f64> = ok.iter().filter_map(|r| r.secs_per_iter).collect();
    let stats = |v: &[f64]| {
        if v.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            mean_std(v)
        }
    };
    let (rmse_mean, rmse_std) = stats(&rmse);
    let (secs_per_iter_mean, secs_per_iter_std) = stats(&secs);
    SummaryRow {
        dataset: dataset.to_string(),
        variant: setup.label.to_string(),
        grid: format!("{}x{}", setup.cfg.grid.0, setup.cfg.grid.1),
        mode: setup.cfg.mode.to_string(),
        workers: match setup.cfg.mode {
            ExecMode::Serial => 1,
            ExecMode::Parallel => setup.cfg.workers,
        },
        repeats: ok.len(),
        rmse_mean,
        rmse_std,
        secs_per_iter_mean,
        secs_per_iter_std,
    }
}

pub fn render_table(rows: &[SummaryRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<8} {:<7} {:<5} {:<8} {:>7} {:>7} {:>18} {:>22}",
        "dataset", "variant", "grid", "mode", "workers", "repeats", "rmse", "sec/iter"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:<8} {:<7} {:<5} {:<8} {:>7} {:>7} {:>8.4} +- {:<6.4} {:>10.6} +- {:<8.6}",
            r.dataset,
            r.variant,
            r.grid,
            r.mode,
            r.workers,
            r.repeats,
            r.rmse_mean,
            r.rmse_std,
            r.secs_per_iter_mean,
            r.secs_per_iter_std
        );
    }
    s
}
