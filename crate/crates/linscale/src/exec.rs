use linscale_core::exec::Executor;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Runs jobs on a dedicated rayon pool. Results come back in job order, so
/// output never depends on the number of workers.
pub struct Pool {
    pool: rayon::ThreadPool,
}

impl Pool {
    pub fn new(workers: usize) -> Result<Self> {
        if workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;
        Ok(Self { pool })
    }

    pub fn workers(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl Executor for Pool {
    fn map<T: Send, F: Fn(usize) -> T + Sync + Send>(&self, n: usize, job: F) -> Vec<T> {
        self.pool
            .install(|| (0..n).into_par_iter().map(job).collect())
    }
}
