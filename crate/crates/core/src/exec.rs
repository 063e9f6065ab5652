//! Execution of independent jobs (sweep trials, grid points).
//!
//! Jobs are indexed and every job derives its randomness from its index, so
//! an executor only has to return results in index order for the outcome to
//! be independent of scheduling.

use alloc::vec::Vec;

pub trait Executor: Sync {
    /// Evaluates `job(0), ..., job(n - 1)` and returns the results in index
    /// order.
    fn map<T, F>(&self, n: usize, job: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

/// Runs jobs one after another on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map<T, F>(&self, n: usize, job: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n).map(job).collect()
    }
}
