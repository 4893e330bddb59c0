//! Rating storage, the block grid, and the factor-model parameter container.

use std::collections::HashSet;
use std::ops::Range;

use crate::error::{Error, Result};
use crate::rng::PortableRng;

/// One observed rating, in dense 0-based index space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rating {
    pub user: usize,
    pub item: usize,
    pub value: f64,
}

impl Rating {
    pub fn new(user: usize, item: usize, value: f64) -> Self {
        Self { user, item, value }
    }
}

/// Sparse observed ratings plus the dimensions of the full matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingTriples {
    n_users: usize,
    n_items: usize,
    entries: Vec<Rating>,
}

impl RatingTriples {
    /// Checks index bounds and rejects duplicate `(user, item)` pairs.
    pub fn new(n_users: usize, n_items: usize, entries: Vec<Rating>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(entries.len());
        for r in &entries {
            if r.user >= n_users {
                return Err(Error::OutOfRange {
                    what: "user",
                    index: r.user,
                    bound: n_users,
                });
            }
            if r.item >= n_items {
                return Err(Error::OutOfRange {
                    what: "item",
                    index: r.item,
                    bound: n_items,
                });
            }
            if !seen.insert((r.user, r.item)) {
                return Err(Error::Duplicate {
                    user: r.user,
                    item: r.item,
                });
            }
        }
        Ok(Self {
            n_users,
            n_items,
            entries,
        })
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn entries(&self) -> &[Rating] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn mean(&self) -> Option<f64> {
        if self.entries.is_empty() {
            return None;
        }
        Some(self.entries.iter().map(|r| r.value).sum::<f64>() / self.entries.len() as f64)
    }

    /// Same entries under wider dimensions.
    pub fn with_dims(mut self, n_users: usize, n_items: usize) -> Result<Self> {
        if n_users < self.n_users || n_items < self.n_items {
            return Err(Error::DimensionMismatch(format!(
                "cannot shrink {}x{} ratings to {}x{}",
                self.n_users, self.n_items, n_users, n_items
            )));
        }
        self.n_users = n_users;
        self.n_items = n_items;
        Ok(self)
    }

    pub(crate) fn from_parts_unchecked(n_users: usize, n_items: usize, entries: Vec<Rating>) -> Self {
        Self {
            n_users,
            n_items,
            entries,
        }
    }
}

/// Partition of the user x item index space into `I x J` equal blocks.
///
/// Padding is virtual: `padded_rows`/`padded_cols` only describe the grid
/// arithmetic, no zero entries are stored and no factor rows are allocated for
/// the padded tail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockGrid {
    pub n_users: usize,
    pub n_items: usize,
    pub row_blocks: usize,
    pub col_blocks: usize,
    pub row_block_size: usize,
    pub col_block_size: usize,
    pub padded_rows: usize,
    pub padded_cols: usize,
}

impl BlockGrid {
    /// Block sizes are `ceil(n_users / I)` and `ceil(n_items / J)`.
    ///
    /// A grid in which some block would hold nothing but padding is rejected.
    /// That covers `I > n_users`, and also shapes like 9 rows over 4 blocks
    /// where the ceil rule leaves the last block entirely past the real rows.
    pub fn new(n_users: usize, n_items: usize, row_blocks: usize, col_blocks: usize) -> Result<Self> {
        if n_users == 0 || n_items == 0 {
            return Err(Error::InvalidArgument(format!(
                "grid over an empty {n_users}x{n_items} matrix"
            )));
        }
        if row_blocks == 0 || col_blocks == 0 {
            return Err(Error::InvalidArgument(format!(
                "grid must have at least one block per axis, got {row_blocks}x{col_blocks}"
            )));
        }
        let row_block_size = n_users.div_ceil(row_blocks);
        let col_block_size = n_items.div_ceil(col_blocks);
        if row_blocks > n_users || (row_blocks - 1) * row_block_size >= n_users {
            return Err(Error::InvalidArgument(format!(
                "{row_blocks} row blocks over {n_users} users leaves a block with no real rows"
            )));
        }
        if col_blocks > n_items || (col_blocks - 1) * col_block_size >= n_items {
            return Err(Error::InvalidArgument(format!(
                "{col_blocks} column blocks over {n_items} items leaves a block with no real columns"
            )));
        }
        Ok(Self {
            n_users,
            n_items,
            row_blocks,
            col_blocks,
            row_block_size,
            col_block_size,
            padded_rows: row_block_size * row_blocks,
            padded_cols: col_block_size * col_blocks,
        })
    }

    pub fn n_blocks(&self) -> usize {
        self.row_blocks * self.col_blocks
    }

    pub fn assign(&self, user: usize, item: usize) -> Result<(usize, usize)> {
        if user >= self.n_users {
            return Err(Error::OutOfRange {
                what: "user",
                index: user,
                bound: self.n_users,
            });
        }
        if item >= self.n_items {
            return Err(Error::OutOfRange {
                what: "item",
                index: item,
                bound: self.n_items,
            });
        }
        Ok((user / self.row_block_size, item / self.col_block_size))
    }

    /// Padded row interval owned by row-block `i`.
    pub fn padded_user_range(&self, i: usize) -> Range<usize> {
        i * self.row_block_size..(i + 1) * self.row_block_size
    }

    pub fn padded_item_range(&self, j: usize) -> Range<usize> {
        j * self.col_block_size..(j + 1) * self.col_block_size
    }

    /// Real (unpadded) rows owned by row-block `i`.
    pub fn user_range(&self, i: usize) -> Range<usize> {
        let r = self.padded_user_range(i);
        r.start.min(self.n_users)..r.end.min(self.n_users)
    }

    pub fn item_range(&self, j: usize) -> Range<usize> {
        let r = self.padded_item_range(j);
        r.start.min(self.n_items)..r.end.min(self.n_items)
    }
}

/// The ratings of one block together with the index ranges it owns.
#[derive(Debug, Clone)]
pub struct BlockView<'a> {
    pub block_row: usize,
    pub block_col: usize,
    pub entries: &'a [Rating],
    pub user_range: Range<usize>,
    pub item_range: Range<usize>,
    /// Position of `entries[0]` in the bucketed store.
    pub offset: usize,
}

impl<'a> BlockView<'a> {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Ratings bucketed by block, each block a contiguous row-major slice.
///
/// Entries are ordered by `(block_row, block_col, user, item)`.
#[derive(Debug, Clone)]
pub struct BlockedRatings {
    grid: BlockGrid,
    entries: Vec<Rating>,
    offsets: Vec<usize>,
}

impl BlockedRatings {
    pub fn new(data: &RatingTriples, grid: BlockGrid) -> Result<Self> {
        if grid.n_users != data.n_users() || grid.n_items != data.n_items() {
            return Err(Error::DimensionMismatch(format!(
                "grid covers {}x{}, data is {}x{}",
                grid.n_users,
                grid.n_items,
                data.n_users(),
                data.n_items()
            )));
        }
        let n_blocks = grid.n_blocks();
        let block_of = |r: &Rating| (r.user / grid.row_block_size) * grid.col_blocks + r.item / grid.col_block_size;
        let mut counts = vec![0usize; n_blocks + 1];
        for r in data.entries() {
            counts[block_of(r) + 1] += 1;
        }
        for b in 0..n_blocks {
            counts[b + 1] += counts[b];
        }
        let offsets = counts.clone();
        let mut cursor = counts;
        let mut entries = vec![Rating::new(0, 0, 0.0); data.len()];
        for r in data.entries() {
            let b = block_of(r);
            entries[cursor[b]] = *r;
            cursor[b] += 1;
        }
        for b in 0..n_blocks {
            entries[offsets[b]..offsets[b + 1]].sort_unstable_by_key(|r| (r.user, r.item));
        }
        Ok(Self { grid, entries, offsets })
    }

    pub fn grid(&self) -> &BlockGrid {
        &self.grid
    }

    pub fn entries(&self) -> &[Rating] {
        &self.entries
    }

    pub fn block(&self, block_row: usize, block_col: usize) -> BlockView<'_> {
        let b = block_row * self.grid.col_blocks + block_col;
        let span = self.offsets[b]..self.offsets[b + 1];
        BlockView {
            block_row,
            block_col,
            offset: span.start,
            entries: &self.entries[span],
            user_range: self.grid.user_range(block_row),
            item_range: self.grid.item_range(block_col),
        }
    }

    pub fn block_len(&self, block_row: usize, block_col: usize) -> usize {
        let b = block_row * self.grid.col_blocks + block_col;
        self.offsets[b + 1] - self.offsets[b]
    }
}

/// Per-role coefficients: user factors, item factors, user bias, item bias.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoleRates {
    pub user_factor: f64,
    pub item_factor: f64,
    pub user_bias: f64,
    pub item_bias: f64,
}

impl RoleRates {
    pub const fn uniform(v: f64) -> Self {
        Self {
            user_factor: v,
            item_factor: v,
            user_bias: v,
            item_bias: v,
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.user_factor, self.item_factor, self.user_bias, self.item_bias]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparams {
    /// Learning rates.
    pub alpha: RoleRates,
    /// Regularization weights.
    pub beta: RoleRates,
    pub k: usize,
    pub max_steps: usize,
    /// Training stops once an epoch improves the monitored RMSE by less than this.
    pub delta: f64,
    pub seed: u64,
    /// Factors start uniform on `[0, init_scale)`.
    pub init_scale: f64,
}

impl Hyperparams {
    pub const DEFAULT_K: usize = 13;
    pub const DEFAULT_DELTA: f64 = 1e-4;
    pub const DEFAULT_MAX_STEPS: usize = 1000;

    /// Biased-SVD rates for MovieLens-scale data.
    pub fn svd() -> Self {
        let k = Self::DEFAULT_K;
        Self {
            alpha: RoleRates {
                user_factor: 0.019,
                item_factor: 0.004,
                user_bias: 0.004,
                item_bias: 0.013,
            },
            beta: RoleRates {
                user_factor: 0.019,
                item_factor: 0.019,
                user_bias: 0.019,
                item_bias: 0.007,
            },
            k,
            max_steps: Self::DEFAULT_MAX_STEPS,
            delta: Self::DEFAULT_DELTA,
            seed: 42,
            init_scale: 1.0 / (k as f64).sqrt(),
        }
    }

    /// Single learning rate and regularizer, as used by the PMF baseline.
    pub fn pmf() -> Self {
        Self {
            alpha: RoleRates::uniform(1e-4),
            beta: RoleRates::uniform(0.01),
            ..Self::svd()
        }
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self.init_scale = 1.0 / (k.max(1) as f64).sqrt();
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.k == 0 {
            return bad("rank k must be at least 1".into());
        }
        if self.max_steps == 0 {
            return bad("max_steps must be at least 1".into());
        }
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if v.as_array().iter().any(|x| !x.is_finite() || *x < 0.0) {
                return bad(format!("{name} coefficients must be finite and >= 0, got {v:?}"));
            }
        }
        if self.delta.is_nan() || self.delta < 0.0 {
            return bad(format!("delta must be >= 0, got {}", self.delta));
        }
        if !self.init_scale.is_finite() || self.init_scale < 0.0 {
            return bad(format!("init_scale must be finite and >= 0, got {}", self.init_scale));
        }
        Ok(())
    }
}

/// Learned parameters: `U` (users x k), `V` (items x k), and the two bias
/// vectors. Factor matrices are row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    pub n_users: usize,
    pub n_items: usize,
    pub k: usize,
    pub user_factors: Vec<f64>,
    pub item_factors: Vec<f64>,
    pub user_bias: Vec<f64>,
    pub item_bias: Vec<f64>,
}

impl FactorModel {
    pub fn zeros(n_users: usize, n_items: usize, k: usize) -> Self {
        Self {
            n_users,
            n_items,
            k,
            user_factors: vec![0.0; n_users * k],
            item_factors: vec![0.0; n_items * k],
            user_bias: vec![0.0; n_users],
            item_bias: vec![0.0; n_items],
        }
    }

    /// `U` then `V` filled row-major with uniform draws on `[0, init_scale)`
    /// from the portable generator seeded with `hp.seed`; biases start at 0.
    pub fn init(n_users: usize, n_items: usize, hp: &Hyperparams) -> Result<Self> {
        hp.validate()?;
        let mut model = Self::zeros(n_users, n_items, hp.k);
        let mut rng = PortableRng::new(hp.seed);
        for x in model.user_factors.iter_mut().chain(model.item_factors.iter_mut()) {
            *x = rng.unit_f64() * hp.init_scale;
        }
        Ok(model)
    }

    pub fn user_row(&self, u: usize) -> &[f64] {
        &self.user_factors[u * self.k..(u + 1) * self.k]
    }

    pub fn item_row(&self, i: usize) -> &[f64] {
        &self.item_factors[i * self.k..(i + 1) * self.k]
    }

    pub fn is_finite(&self) -> bool {
        self.user_factors
            .iter()
            .chain(&self.item_factors)
            .chain(&self.user_bias)
            .chain(&self.item_bias)
            .all(|x| x.is_finite())
    }

    /// Adds zero rows for users/items the model has never seen.
    pub fn extend(&mut self, n_users: usize, n_items: usize) {
        if n_users > self.n_users {
            self.user_factors.resize(n_users * self.k, 0.0);
            self.user_bias.resize(n_users, 0.0);
            self.n_users = n_users;
        }
        if n_items > self.n_items {
            self.item_factors.resize(n_items * self.k, 0.0);
            self.item_bias.resize(n_items, 0.0);
            self.n_items = n_items;
        }
    }
}
