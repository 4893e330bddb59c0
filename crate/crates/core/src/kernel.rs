//! The SGD kernel: prediction, one pass over a block, the regularized
//! objective, and analytic single-entry gradients.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use crate::error::{Divergence, Error, Result};
use crate::ratings::{BlockView, FactorModel, Hyperparams, Rating, RatingTriples};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum KernelVariant {
    /// `p_u . q_i + bu_u + bi_i`
    #[default]
    BiasedSvd,
    /// `p_u . q_i`; biases are never read or written.
    Pmf,
}

impl KernelVariant {
    pub fn as_str(&self) -> &'static str {
        match self {
            KernelVariant::BiasedSvd => "biased-svd",
            KernelVariant::Pmf => "pmf",
        }
    }
}

impl fmt::Display for KernelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for KernelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "biased-svd" | "svd" => Ok(KernelVariant::BiasedSvd),
            "pmf" => Ok(KernelVariant::Pmf),
            other => Err(Error::InvalidArgument(format!("unknown kernel variant {other:?}"))),
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Raw model output, never clamped.
pub fn predict(model: &FactorModel, user: usize, item: usize, variant: KernelVariant) -> f64 {
    let pq = dot(model.user_row(user), model.item_row(item));
    match variant {
        KernelVariant::BiasedSvd => pq + model.user_bias[user] + model.item_bias[item],
        KernelVariant::Pmf => pq,
    }
}

/// Mutable access to the parameters one block owns.
///
/// Slices are indexed relative to `users.start` / `items.start`.
pub struct BlockParams<'a> {
    pub k: usize,
    pub users: Range<usize>,
    pub items: Range<usize>,
    pub user_factors: &'a mut [f64],
    pub item_factors: &'a mut [f64],
    pub user_bias: &'a mut [f64],
    pub item_bias: &'a mut [f64],
}

impl FactorModel {
    /// Borrow the parameter slices for one user range and one item range.
    pub fn block_params(&mut self, users: Range<usize>, items: Range<usize>) -> BlockParams<'_> {
        let k = self.k;
        BlockParams {
            k,
            user_factors: &mut self.user_factors[users.start * k..users.end * k],
            item_factors: &mut self.item_factors[items.start * k..items.end * k],
            user_bias: &mut self.user_bias[users.clone()],
            item_bias: &mut self.item_bias[items.clone()],
            users,
            items,
        }
    }
}

/// One SGD sweep over the block's entries in stored (row-major) order.
///
/// Per entry the error is computed once, then the user bias, the item bias,
/// and finally each factor pair are updated. Within a factor index the item
/// update uses the user value from before that index was touched.
///
/// Returns the number of entries visited. A non-finite error aborts the pass
/// and names the entry; `Divergence::epoch` is left at 0 for the caller to fill.
pub fn block_pass(
    view: &BlockView<'_>,
    params: &mut BlockParams<'_>,
    hp: &Hyperparams,
    variant: KernelVariant,
) -> std::result::Result<usize, Divergence> {
    let k = params.k;
    let (a, b) = (hp.alpha, hp.beta);
    let biased = variant == KernelVariant::BiasedSvd;
    let diverged = |r: &Rating, value: f64| Divergence {
        epoch: 0,
        block: (view.block_row, view.block_col),
        user: r.user,
        item: r.item,
        value,
    };

    for r in view.entries {
        debug_assert!(params.users.contains(&r.user) && params.items.contains(&r.item));
        let u = r.user - params.users.start;
        let i = r.item - params.items.start;
        let p = &mut params.user_factors[u * k..(u + 1) * k];
        let q = &mut params.item_factors[i * k..(i + 1) * k];

        let mut pred = dot(p, q);
        if biased {
            pred += params.user_bias[u] + params.item_bias[i];
        }
        let err = r.value - pred;
        if !err.is_finite() {
            return Err(diverged(r, err));
        }

        if biased {
            let bu = &mut params.user_bias[u];
            *bu += a.user_bias * (err - b.user_bias * *bu);
            let bi = &mut params.item_bias[i];
            *bi += a.item_bias * (err - b.item_bias * *bi);
        }
        for (pf, qf) in p.iter_mut().zip(q.iter_mut()) {
            let p_old = *pf;
            *pf += a.user_factor * (err * *qf - b.user_factor * p_old);
            *qf += a.item_factor * (err * p_old - b.item_factor * *qf);
        }
    }

    // Overflow in the last updates would otherwise go unnoticed until the next pass.
    if let Some(last) = view.entries.last() {
        let touched = params
            .user_factors
            .iter()
            .chain(params.item_factors.iter())
            .chain(params.user_bias.iter())
            .chain(params.item_bias.iter());
        if let Some(bad) = touched.copied().find(|x| !x.is_finite()) {
            return Err(diverged(last, bad));
        }
    }
    Ok(view.entries.len())
}

/// Squared error over the observed entries plus each role's regularizer times
/// the squared norm of its parameters, summed over the users and items that
/// appear in `data`.
pub fn objective(data: &RatingTriples, model: &FactorModel, hp: &Hyperparams) -> f64 {
    let mut seen_user = vec![false; data.n_users()];
    let mut seen_item = vec![false; data.n_items()];
    let mut loss = 0.0;
    for r in data.entries() {
        let e = r.value - predict(model, r.user, r.item, KernelVariant::BiasedSvd);
        loss += e * e;
        seen_user[r.user] = true;
        seen_item[r.item] = true;
    }
    let sq = |xs: &[f64]| xs.iter().map(|x| x * x).sum::<f64>();
    for u in (0..data.n_users()).filter(|&u| seen_user[u]) {
        loss += hp.beta.user_factor * sq(model.user_row(u));
        loss += hp.beta.user_bias * model.user_bias[u] * model.user_bias[u];
    }
    for i in (0..data.n_items()).filter(|&i| seen_item[i]) {
        loss += hp.beta.item_factor * sq(model.item_row(i));
        loss += hp.beta.item_bias * model.item_bias[i] * model.item_bias[i];
    }
    loss
}

/// Gradients of `(x - p.q - bu - bi)^2` for a single observed entry.
#[derive(Debug, Clone, PartialEq)]
pub struct EntryGradient {
    pub user_factor: Vec<f64>,
    pub item_factor: Vec<f64>,
    pub user_bias: f64,
    pub item_bias: f64,
}

pub fn gradient_single(entry: &Rating, model: &FactorModel) -> EntryGradient {
    let err = entry.value - predict(model, entry.user, entry.item, KernelVariant::BiasedSvd);
    EntryGradient {
        user_factor: model.item_row(entry.item).iter().map(|q| -2.0 * err * q).collect(),
        item_factor: model.user_row(entry.user).iter().map(|p| -2.0 * err * p).collect(),
        user_bias: -2.0 * err,
        item_bias: -2.0 * err,
    }
}
