use msde_core::Executor;
use rayon::prelude::*;

use crate::HarnessError;

/// Runs Monte Carlo blocks on a dedicated rayon pool.
pub struct RayonExecutor {
    pool: rayon::ThreadPool,
}

impl RayonExecutor {
    /// `None` uses one worker per logical core.
    pub fn new(workers: Option<usize>) -> Result<Self, HarnessError> {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = workers {
            if n == 0 {
                return Err(HarnessError::Config("--workers must be positive".into()));
            }
            builder = builder.num_threads(n);
        }
        let pool = builder.build().map_err(|e| HarnessError::Failed(e.to_string()))?;
        Ok(RayonExecutor { pool })
    }

    pub fn workers(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl Executor for RayonExecutor {
    fn map_blocks<T, F>(&self, count: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        self.pool.install(|| (0..count).into_par_iter().map(f).collect())
    }
}
