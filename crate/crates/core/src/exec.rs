//! Block-parallel execution with order-independent results.
//!
//! Monte Carlo work is cut into fixed blocks of [`BLOCK_PATHS`] paths. Path
//! `i` always draws from RNG stream `i`, each block is evaluated sequentially
//! and block results are merged by [`tree_reduce`] in index order, so the
//! output is bitwise identical for every executor and worker count.

use alloc::vec::Vec;
use core::ops::Range;

/// Paths per Monte Carlo block.
pub const BLOCK_PATHS: usize = 256;

pub trait Executor: Sync {
    /// Evaluates `f(0..count)` and returns the results in index order.
    fn map_blocks<T, F>(&self, count: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

/// Runs every block on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map_blocks<T, F>(&self, count: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..count).map(f).collect()
    }
}

pub fn block_count(n_paths: usize) -> usize {
    n_paths.div_ceil(BLOCK_PATHS)
}

pub fn block_range(block: usize, n_paths: usize) -> Range<usize> {
    let start = block * BLOCK_PATHS;
    start..(start + BLOCK_PATHS).min(n_paths)
}

/// Pairwise reduction: merges neighbours `(0,1), (2,3), …` level by level.
pub fn tree_reduce<T, F>(mut items: Vec<T>, merge: F) -> Option<T>
where
    F: Fn(T, T) -> T,
{
    while items.len() > 1 {
        let mut next = Vec::with_capacity(items.len().div_ceil(2));
        let mut it = items.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(merge(a, b)),
                None => next.push(a),
            }
        }
        items = next;
    }
    items.pop()
}
