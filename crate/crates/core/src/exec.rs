//! Data-parallel map with a sequential fallback.
//!
//! With the `parallel` feature an [`Executor`] owns a dedicated rayon pool;
//! without it, or when constructed with one thread, every map runs on the
//! calling thread. Results are always returned in input order, so output is
//! identical for any thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::{Result, TraceError};

/// Environment variable consulted when no explicit thread count is given.
pub const THREADS_ENV: &str = "TRACE_THREADS";

pub struct Executor {
    threads: usize,
    #[cfg(feature = "parallel")]
    pool: Option<rayon::ThreadPool>,
}

impl Executor {
    pub fn sequential() -> Self {
        Executor {
            threads: 1,
            #[cfg(feature = "parallel")]
            pool: None,
        }
    }

    /// An executor with `threads` workers; 0 means available parallelism.
    pub fn with_threads(threads: usize) -> Result<Self> {
        let threads = if threads == 0 {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        } else {
            threads
        };
        if threads == 1 {
            return Ok(Self::sequential());
        }
        #[cfg(feature = "parallel")]
        {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| TraceError::InvalidConfig(format!("thread pool: {e}")))?;
            Ok(Executor {
                threads,
                pool: Some(pool),
            })
        }
        #[cfg(not(feature = "parallel"))]
        {
            Ok(Executor { threads })
        }
    }

    /// Thread count from `TRACE_THREADS`, else available parallelism.
    pub fn from_env() -> Result<Self> {
        match std::env::var(THREADS_ENV) {
            Ok(v) => {
                let n = v.trim().parse::<usize>().map_err(|_| {
                    TraceError::InvalidConfig(format!("{THREADS_ENV}={v} is not a thread count"))
                })?;
                Self::with_threads(n)
            }
            Err(_) => Self::with_threads(0),
        }
    }

    /// Requested worker count (1 when sequential).
    pub fn threads(&self) -> usize {
        self.threads
    }

    pub fn is_parallel(&self) -> bool {
        #[cfg(feature = "parallel")]
        {
            self.pool.is_some()
        }
        #[cfg(not(feature = "parallel"))]
        {
            false
        }
    }

    /// Maps `f` over `items`, preserving order.
    pub fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            return pool.install(|| items.par_iter().map(&f).collect());
        }
        items.iter().map(f).collect()
    }

    /// Maps `f` over `0..n`, preserving order.
    pub fn map_range<R, F>(&self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            return pool.install(|| (0..n).into_par_iter().map(&f).collect());
        }
        (0..n).map(f).collect()
    }

    /// Folds each item to a key and returns the minimum under `better`,
    /// which must be a total order so the result is independent of
    /// evaluation order.
    pub fn min_by<T, R, F, C>(&self, items: &[T], f: F, better: C) -> Option<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
        C: Fn(&R, &R) -> std::cmp::Ordering + Sync + Send,
    {
        let pick = |a: R, b: R| if better(&b, &a).is_lt() { b } else { a };
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            return pool.install(|| items.par_iter().map(&f).reduce_with(&pick));
        }
        items.iter().map(f).reduce(&pick)
    }
}

impl Default for Executor {
    fn default() -> Self {
        Self::sequential()
    }
}

impl std::fmt::Debug for Executor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Executor")
            .field("threads", &self.threads)
            .field("parallel", &self.is_parallel())
            .finish()
    }
}
