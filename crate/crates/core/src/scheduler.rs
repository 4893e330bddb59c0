//! Wavefront schedule over the block grid.
//!
//! Step `s` of an `I x J` grid holds every in-bounds block
//! `((j + s) mod L, j)` with `L = max(I, J)`: the main diagonal first, then
//! each column wraps downward one block per step. Rectangular grids are the
//! `L x L` Latin square with out-of-range rows dropped, so no step ever has two
//! blocks in the same block-row or block-column.

pub type BlockId = (usize, usize);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    pub row_blocks: usize,
    pub col_blocks: usize,
    pub steps: Vec<Vec<BlockId>>,
}

impl Schedule {
    pub fn wavefront(row_blocks: usize, col_blocks: usize) -> Self {
        assert!(row_blocks >= 1 && col_blocks >= 1, "empty grid");
        let l = row_blocks.max(col_blocks);
        let steps = (0..l)
            .map(|s| {
                (0..col_blocks)
                    .map(|j| ((j + s) % l, j))
                    .filter(|&(i, _)| i < row_blocks)
                    .collect()
            })
            .collect();
        Self {
            row_blocks,
            col_blocks,
            steps,
        }
    }

    /// All blocks in row-major order as single-block steps.
    pub fn serial(row_blocks: usize, col_blocks: usize) -> Self {
        let steps = (0..row_blocks)
            .flat_map(|i| (0..col_blocks).map(move |j| vec![(i, j)]))
            .collect();
        Self {
            row_blocks,
            col_blocks,
            steps,
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &[BlockId]> {
        self.steps.iter().map(Vec::as_slice)
    }
}
