//! Execution policy for the data-parallel inner loops.
//!
//! Per-node work (distance rows, association rows) and independent jobs
//! (sweep points, oracle subset chunks) go through [`Exec::map`]. Results
//! are always collected in input order and every reduction downstream is
//! sequential, so both policies produce bit-identical output.
//!
//! Without the `parallel` feature, [`Exec::Parallel`] silently runs
//! sequentially.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

/// Rows below this count are not worth splitting across threads.
#[cfg(feature = "parallel")]
const MIN_PAR_LEN: usize = 64;

impl Exec {
    /// True when work will actually be spread across threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }

    /// Map `f` over `0..n`, preserving index order in the output.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Exec::Parallel && n >= MIN_PAR_LEN {
            use rayon::prelude::*;
            return (0..n)
                .into_par_iter()
                .with_min_len(MIN_PAR_LEN / 2)
                .map(f)
                .collect();
        }
        (0..n).map(f).collect()
    }

    /// Map over a slice of independent jobs (no minimum-length cutoff).
    pub fn map_jobs<I, T, F>(self, jobs: &[I], f: F) -> Vec<T>
    where
        I: Sync,
        T: Send,
        F: Fn(&I) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Exec::Parallel {
            use rayon::prelude::*;
            return jobs.par_iter().map(f).collect();
        }
        jobs.iter().map(f).collect()
    }
}
