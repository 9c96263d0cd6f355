//! Thread-pool backed [`ParMap`].

use rayon::prelude::*;
use robust_scatter_core::ParMap;

/// Runs tasks on a dedicated rayon pool. Results come back in index order, so
/// the pool size never changes the output.
pub struct RayonExec {
    pool: rayon::ThreadPool,
}

impl RayonExec {
    /// `None` lets rayon pick the number of workers.
    pub fn new(threads: Option<usize>) -> Result<Self, rayon::ThreadPoolBuildError> {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(t) = threads {
            builder = builder.num_threads(t);
        }
        Ok(Self {
            pool: builder.build()?,
        })
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl ParMap for RayonExec {
    fn map<T, F>(&self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        self.pool.install(|| (0..len).into_par_iter().map(f).collect())
    }
}
