//! Replication batches and their parallel, order-preserving execution.

use std::ops::Range;

use rayon::prelude::*;

use super::EstimatorError;

/// Fewest batches allowed; standard errors come from the spread across batches.
pub const MIN_BATCHES: usize = 30;

/// `paths` split into `batches` equal batches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchPlan {
    paths: u64,
    batches: usize,
}

impl BatchPlan {
    pub fn new(paths: u64, batches: usize) -> Result<Self, EstimatorError> {
        if batches < MIN_BATCHES {
            return Err(EstimatorError::Config(format!(
                "at least {MIN_BATCHES} batches are required, got {batches}"
            )));
        }
        if paths == 0 || !paths.is_multiple_of(batches as u64) {
            return Err(EstimatorError::Config(format!(
                "paths ({paths}) must be a positive multiple of batches ({batches})"
            )));
        }
        Ok(Self { paths, batches })
    }

    pub fn paths(&self) -> u64 {
        self.paths
    }

    pub fn batches(&self) -> usize {
        self.batches
    }

    pub fn per_batch(&self) -> u64 {
        self.paths / self.batches as u64
    }

    /// Global path indices of batch `b`.
    pub fn range(&self, b: usize) -> Range<u64> {
        let per = self.per_batch();
        b as u64 * per..(b as u64 + 1) * per
    }

    /// Runs `f` on every batch in the current rayon pool; results are in
    /// batch order whatever the scheduling.
    pub fn map<R, F>(&self, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize, Range<u64>) -> R + Sync,
    {
        (0..self.batches).into_par_iter().map(|b| f(b, self.range(b))).collect()
    }

    /// Maps every path index and groups the results by batch.
    pub fn map_paths<R, F>(&self, f: F) -> Vec<Vec<R>>
    where
        R: Send,
        F: Fn(u64) -> R + Sync,
    {
        self.map(|_, range| range.map(&f).collect())
    }
}
