//! Bounded worker pool with results in input order.

/// Number of workers to use when none is configured.
pub fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

pub struct WorkerPool {
    jobs: usize,
    #[cfg(feature = "native")]
    pool: Option<rayon::ThreadPool>,
}

impl WorkerPool {
    /// `jobs = 0` means [`default_jobs`].
    pub fn new(jobs: usize) -> Self {
        let jobs = if jobs == 0 { default_jobs() } else { jobs };
        #[cfg(feature = "native")]
        {
            let pool = if jobs > 1 { rayon::ThreadPoolBuilder::new().num_threads(jobs).build().ok() } else { None };
            Self { jobs, pool }
        }
        #[cfg(not(feature = "native"))]
        Self { jobs }
    }

    pub fn jobs(&self) -> usize {
        self.jobs
    }

    /// Applies `f` to every item; `out[i] = f(i, &items[i])` whatever the completion order.
    pub fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(usize, &T) -> R + Sync + Send,
    {
        #[cfg(feature = "native")]
        if let Some(pool) = &self.pool {
            use rayon::prelude::*;
            return pool.install(|| items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect());
        }
        items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
    }
}

impl Default for WorkerPool {
    fn default() -> Self {
        Self::new(0)
    }
}
