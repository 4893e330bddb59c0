//! Flag / config-file / default resolution.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use blocksvd_core::{DatasetFormat, DatasetSpec, ExecMode, Fallback, Hyperparams, KernelVariant, StopMetric};

use crate::args::{DataArgs, EvalFlags, ModelArgs};
use crate::UsageError;

/// Values from a `key = value` config file.
#[derive(Debug, Clone, Default)]
pub struct Settings {
    values: HashMap<String, String>,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).map_err(|e| UsageError(format!("{}: {e}", path.display())).into())
    }

    /// Blank lines and `#` comments are skipped. Keys may be written with or
    /// without the leading `--`.
    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let mut values = HashMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key = value", n + 1))?;
            let key = k.trim().trim_start_matches("--").to_string();
            values.insert(key, v.trim().to_string());
        }
        Ok(Self { values })
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// Flag value if given, else the config value, else `None`.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.raw(key) {
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| UsageError(format!("config key {key} = {v:?}: {e}")).into()),
            None => Ok(None),
        }
    }

    pub fn flag(&self, set: bool, key: &str) -> Result<bool> {
        if set {
            return Ok(true);
        }
        Ok(self.pick::<bool>(None, key)?.unwrap_or(false))
    }
}

pub fn parse_grid(s: &str) -> Result<(usize, usize)> {
    let (i, j) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| UsageError(format!("grid must look like IxJ, got {s:?}")))?;
    let parse = |v: &str| {
        v.trim()
            .parse::<usize>()
            .map_err(|_| UsageError(format!("grid must look like IxJ, got {s:?}")))
    };
    Ok((parse(i)?, parse(j)?))
}

pub fn parse_scale(s: &str) -> Result<(f64, f64)> {
    let bad = || UsageError(format!("scale must look like MIN,MAX, got {s:?}"));
    let (a, b) = s.split_once(',').ok_or_else(bad)?;
    let min: f64 = a.trim().parse().map_err(|_| bad())?;
    let max: f64 = b.trim().parse().map_err(|_| bad())?;
    if min.partial_cmp(&max) != Some(std::cmp::Ordering::Less) {
        return Err(bad().into());
    }
    Ok((min, max))
}

fn usage<T, E: std::fmt::Display>(r: std::result::Result<T, E>) -> Result<T> {
    r.map_err(|e| UsageError(e.to_string()).into())
}

/// Dataset spec from `--format`/`--input`/`--no-header`/`--scale`.
/// `default_format` applies when neither flag nor config names one.
pub fn dataset_spec(
    settings: &Settings,
    data: &DataArgs,
    input: Option<PathBuf>,
    default_format: Option<DatasetFormat>,
) -> Result<DatasetSpec> {
    let format = match settings.pick::<String>(data.format.clone(), "format")? {
        Some(f) => usage(f.parse::<DatasetFormat>())?,
        None => default_format.ok_or_else(|| UsageError("--format is required".into()))?,
    };
    let format = match format {
        DatasetFormat::Csv { .. } => DatasetFormat::Csv {
            header: !settings.flag(data.no_header, "no-header")?,
        },
        other => other,
    };
    let path = match input {
        Some(p) => p,
        None => settings
            .pick::<PathBuf>(data.input.clone(), "input")?
            .ok_or_else(|| UsageError("--input is required".into()))?,
    };
    let mut spec = DatasetSpec::new(format, path);
    if let Some(s) = settings.pick::<String>(data.scale.clone(), "scale")? {
        spec.rating_scale = parse_scale(&s)?;
    }
    Ok(spec)
}

/// Hyperparameters for `variant`: its built-in defaults, then uniform
/// `alpha`/`beta`, then role-specific values.
pub fn hyperparams(settings: &Settings, m: &ModelArgs, variant: KernelVariant) -> Result<Hyperparams> {
    let mut hp = match variant {
        KernelVariant::BiasedSvd => Hyperparams::svd(),
        KernelVariant::Pmf => Hyperparams::pmf(),
    };
    apply_rates(settings, m, &mut hp)?;
    finish(settings, m, hp)
}

/// PMF settings for `benchmark`: PMF defaults, `--pmf-alpha`/`--pmf-beta`,
/// and the shared k / delta / max-steps / seed / init-scale.
pub fn pmf_hyperparams(
    settings: &Settings,
    m: &ModelArgs,
    alpha: Option<f64>,
    beta: Option<f64>,
) -> Result<Hyperparams> {
    let mut hp = Hyperparams::pmf();
    if let Some(a) = settings.pick(alpha, "pmf-alpha")? {
        hp.alpha = blocksvd_core::RoleRates::uniform(a);
    }
    if let Some(b) = settings.pick(beta, "pmf-beta")? {
        hp.beta = blocksvd_core::RoleRates::uniform(b);
    }
    finish(settings, m, hp)
}

fn finish(settings: &Settings, m: &ModelArgs, mut hp: Hyperparams) -> Result<Hyperparams> {
    if let Some(k) = settings.pick(m.k, "k")? {
        hp = hp.with_k(k);
    }
    if let Some(d) = settings.pick(m.delta, "delta")? {
        hp.delta = d;
    }
    if let Some(s) = settings.pick(m.max_steps, "max-steps")? {
        hp.max_steps = s;
    }
    if let Some(s) = settings.pick(m.seed, "seed")? {
        hp.seed = s;
    }
    if let Some(s) = settings.pick(m.init_scale, "init-scale")? {
        hp.init_scale = s;
    }
    usage(hp.validate())?;
    Ok(hp)
}

fn apply_rates(settings: &Settings, m: &ModelArgs, hp: &mut Hyperparams) -> Result<()> {
    if let Some(a) = settings.pick(m.alpha, "alpha")? {
        hp.alpha = blocksvd_core::RoleRates::uniform(a);
    }
    if let Some(b) = settings.pick(m.beta, "beta")? {
        hp.beta = blocksvd_core::RoleRates::uniform(b);
    }
    let roles = [
        (m.alpha_user_factor, "alpha-user-factor", &mut hp.alpha.user_factor),
        (m.alpha_item_factor, "alpha-item-factor", &mut hp.alpha.item_factor),
        (m.alpha_user_bias, "alpha-user-bias", &mut hp.alpha.user_bias),
        (m.alpha_item_bias, "alpha-item-bias", &mut hp.alpha.item_bias),
        (m.beta_user_factor, "beta-user-factor", &mut hp.beta.user_factor),
        (m.beta_item_factor, "beta-item-factor", &mut hp.beta.item_factor),
        (m.beta_user_bias, "beta-user-bias", &mut hp.beta.user_bias),
        (m.beta_item_bias, "beta-item-bias", &mut hp.beta.item_bias),
    ];
    for (flag, key, slot) in roles {
        if let Some(v) = settings.pick(flag, key)? {
            *slot = v;
        }
    }
    Ok(())
}

pub fn variant(settings: &Settings, m: &ModelArgs) -> Result<KernelVariant> {
    match settings.pick::<String>(m.variant.clone(), "variant")? {
        Some(v) => usage(v.parse()),
        None => Ok(KernelVariant::BiasedSvd),
    }
}

pub fn grid(settings: &Settings, m: &ModelArgs, default: (usize, usize)) -> Result<(usize, usize)> {
    match settings.pick::<String>(m.grid.clone(), "grid")? {
        Some(g) => parse_grid(&g),
        None => Ok(default),
    }
}

pub fn mode(settings: &Settings, m: &ModelArgs, default: ExecMode) -> Result<ExecMode> {
    match settings.pick::<String>(m.mode.clone(), "mode")? {
        Some(v) => usage(v.parse()),
        None => Ok(default),
    }
}

pub fn workers(settings: &Settings, m: &ModelArgs) -> Result<usize> {
    let w = settings
        .pick(m.workers, "workers")?
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if w == 0 {
        bail!(UsageError("--workers must be at least 1".into()));
    }
    Ok(w)
}

pub fn stop_on(settings: &Settings, m: &ModelArgs, default: StopMetric) -> Result<StopMetric> {
    match settings.pick::<String>(m.stop_on.clone(), "stop-on")? {
        Some(v) => usage(v.parse()),
        None => Ok(default),
    }
}

pub fn fallback(settings: &Settings, e: &EvalFlags) -> Result<Fallback> {
    match settings.pick::<String>(e.fallback.clone(), "fallback")? {
        Some(v) => usage(v.parse()),
        None => Ok(Fallback::default()),
    }
}

/// Clamp bounds when `--clamp` is on; needs a bounded rating scale.
pub fn clamp(settings: &Settings, e: &EvalFlags, scale: (f64, f64)) -> Result<Option<(f64, f64)>> {
    if !settings.flag(e.clamp, "clamp")? {
        return Ok(None);
    }
    if scale.0 <= f64::MIN || scale.1 >= f64::MAX {
        return Err(anyhow!(UsageError("--clamp needs a bounded --scale".into())));
    }
    Ok(Some(scale))
}
