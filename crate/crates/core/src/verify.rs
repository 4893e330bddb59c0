//! Independent oracles for the kernel, the scheduler and the trainer.
//!
//! Nothing here reuses kernel or scheduler internals: the finite-difference
//! gradient has its own loss, and the schedule check is brute force over any
//! `Schedule` value.

use std::fmt;

use crate::error::{Error, Result};
use crate::kernel::{self, EntryGradient, KernelVariant};
use crate::ratings::{FactorModel, Rating, RatingTriples};
use crate::rng::PortableRng;
use crate::scheduler::{BlockId, Schedule};
use crate::trainer::{self, TrainConfig};

fn entry_loss(x: f64, p: &[f64], q: &[f64], bu: f64, bi: f64) -> f64 {
    let mut s = 0.0;
    for f in 0..p.len() {
        s += p[f] * q[f];
    }
    let e = x - s - bu - bi;
    e * e
}

/// Central differences of the single-entry squared error.
pub fn fd_gradient(entry: &Rating, model: &FactorModel, step: f64) -> EntryGradient {
    assert!(step > 0.0, "finite-difference step must be positive");
    let x = entry.value;
    let p = model.user_row(entry.user).to_vec();
    let q = model.item_row(entry.item).to_vec();
    let bu = model.user_bias[entry.user];
    let bi = model.item_bias[entry.item];
    let h2 = 2.0 * step;

    let along = |v: &[f64], f: usize| {
        let mut plus = v.to_vec();
        let mut minus = v.to_vec();
        plus[f] += step;
        minus[f] -= step;
        (plus, minus)
    };

    let user_factor = (0..p.len())
        .map(|f| {
            let (pp, pm) = along(&p, f);
            (entry_loss(x, &pp, &q, bu, bi) - entry_loss(x, &pm, &q, bu, bi)) / h2
        })
        .collect();
    let item_factor = (0..q.len())
        .map(|f| {
            let (qp, qm) = along(&q, f);
            (entry_loss(x, &p, &qp, bu, bi) - entry_loss(x, &p, &qm, bu, bi)) / h2
        })
        .collect();
    let user_bias = (entry_loss(x, &p, &q, bu + step, bi) - entry_loss(x, &p, &q, bu - step, bi)) / h2;
    let item_bias = (entry_loss(x, &p, &q, bu, bi + step) - entry_loss(x, &p, &q, bu, bi - step)) / h2;
    EntryGradient {
        user_factor,
        item_factor,
        user_bias,
        item_bias,
    }
}

/// Largest component-wise relative difference, with `floor` guarding tiny
/// denominators.
pub fn max_relative_diff(a: &EntryGradient, b: &EntryGradient, floor: f64) -> f64 {
    let pairs = a
        .user_factor
        .iter()
        .zip(&b.user_factor)
        .chain(a.item_factor.iter().zip(&b.item_factor))
        .chain([(&a.user_bias, &b.user_bias), (&a.item_bias, &b.item_bias)]);
    pairs
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    SharedRow { row: usize },
    SharedCol { col: usize },
    OutOfBounds(BlockId),
    Duplicate(BlockId),
    Missing(BlockId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScheduleViolation {
    /// Offending step; `None` for blocks that never appear.
    pub step: Option<usize>,
    pub violation: Violation,
}

impl fmt::Display for ScheduleViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.step {
            Some(s) => write!(f, "step {s}: {:?}", self.violation),
            None => write!(f, "{:?}", self.violation),
        }
    }
}

/// Pairwise check of every step plus a visit count over the whole grid.
pub fn exhaustive_schedule_check(
    schedule: &Schedule,
    row_blocks: usize,
    col_blocks: usize,
) -> std::result::Result<(), ScheduleViolation> {
    let mut seen = vec![vec![0usize; col_blocks]; row_blocks];
    for (s, step) in schedule.steps.iter().enumerate() {
        let fail = |violation| {
            Err(ScheduleViolation {
                step: Some(s),
                violation,
            })
        };
        for (a, &(ra, ca)) in step.iter().enumerate() {
            if ra >= row_blocks || ca >= col_blocks {
                return fail(Violation::OutOfBounds((ra, ca)));
            }
            for &(rb, cb) in &step[a + 1..] {
                if (ra, ca) == (rb, cb) {
                    return fail(Violation::Duplicate((ra, ca)));
                }
                if ra == rb {
                    return fail(Violation::SharedRow { row: ra });
                }
                if ca == cb {
                    return fail(Violation::SharedCol { col: ca });
                }
            }
            seen[ra][ca] += 1;
            if seen[ra][ca] > 1 {
                return fail(Violation::Duplicate((ra, ca)));
            }
        }
    }
    for (r, row) in seen.iter().enumerate() {
        for (c, &n) in row.iter().enumerate() {
            if n == 0 {
                return Err(ScheduleViolation {
                    step: None,
                    violation: Violation::Missing((r, c)),
                });
            }
        }
    }
    Ok(())
}

/// A seeded low-rank matrix with a random observation mask.
#[derive(Debug, Clone)]
pub struct SyntheticProblem {
    pub truth: FactorModel,
    pub density: f64,
    pub noise: f64,
    pub ratings: RatingTriples,
    /// Noise added to each observed entry, aligned with `ratings.entries()`.
    pub noise_draws: Vec<f64>,
}

impl SyntheticProblem {
    /// Ground-truth factors uniform on `[0, 1)`, biases uniform on
    /// `[-0.5, 0.5)`, each cell observed with probability `density`, noise
    /// uniform on `[-noise, noise)`.
    pub fn generate(n_users: usize, n_items: usize, k: usize, density: f64, noise: f64, seed: u64) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("rank k must be at least 1".into()));
        }
        if !(density > 0.0 && density <= 1.0) || noise.is_nan() || noise < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "density must lie in (0, 1] and noise be >= 0, got {density}, {noise}"
            )));
        }
        let mut rng = PortableRng::new(seed);
        let mut truth = FactorModel::zeros(n_users, n_items, k);
        for x in truth.user_factors.iter_mut().chain(truth.item_factors.iter_mut()) {
            *x = rng.unit_f64();
        }
        for b in truth.user_bias.iter_mut().chain(truth.item_bias.iter_mut()) {
            *b = rng.unit_f64() - 0.5;
        }
        let mut entries = Vec::new();
        let mut noise_draws = Vec::new();
        for u in 0..n_users {
            for i in 0..n_items {
                if rng.unit_f64() < density {
                    let eps = noise * (2.0 * rng.unit_f64() - 1.0);
                    let value = kernel::predict(&truth, u, i, KernelVariant::BiasedSvd) + eps;
                    entries.push(Rating::new(u, i, value));
                    noise_draws.push(eps);
                }
            }
        }
        Ok(Self {
            ratings: RatingTriples::new(n_users, n_items, entries)?,
            truth,
            density,
            noise,
            noise_draws,
        })
    }
}

/// Train on the problem's observed entries; returns the largest absolute
/// prediction error over them.
pub fn recover_synthetic(problem: &SyntheticProblem, cfg: &TrainConfig) -> Result<f64> {
    let (model, _) = trainer::train(&problem.ratings, None, cfg)?;
    Ok(problem
        .ratings
        .entries()
        .iter()
        .map(|r| (r.value - kernel::predict(&model, r.user, r.item, cfg.variant)).abs())
        .fold(0.0, f64::max))
}
