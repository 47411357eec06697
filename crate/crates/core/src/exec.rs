//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature these dispatch to rayon; without it they are
//! ordinary iterator loops. Output order always matches input order.

/// How many workers a sweep may use. `Sequential` bypasses rayon even when
/// the feature is compiled in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Jobs {
    Sequential,
    /// Use the ambient rayon pool.
    #[default]
    All,
    /// A dedicated pool with this many threads.
    Fixed(usize),
}

impl Jobs {
    /// `0` means all cores, `1` sequential.
    pub fn from_count(n: usize) -> Self {
        match n {
            0 => Jobs::All,
            1 => Jobs::Sequential,
            n => Jobs::Fixed(n),
        }
    }
}

/// Map `f` over `0..n`, collecting results in index order.
pub fn map_range<T, F>(n: usize, jobs: Jobs, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        match jobs {
            Jobs::Sequential => (0..n).map(f).collect(),
            Jobs::All => (0..n).into_par_iter().map(f).collect(),
            Jobs::Fixed(t) => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
                Ok(pool) => pool.install(|| (0..n).into_par_iter().map(&f).collect()),
                Err(_) => (0..n).map(f).collect(),
            },
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = jobs;
        (0..n).map(f).collect()
    }
}

/// Map `f` over a slice, collecting results in order.
pub fn map_slice<S, T, F>(items: &[S], jobs: Jobs, f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    map_range(items.len(), jobs, |i| f(&items[i]))
}
