//! Data-parallel helpers. With the `parallel` feature (default) work is spread
//! over rayon's pool; without it everything runs on the calling thread. Output
//! order always matches input order.

/// Maps `f` over `items` sequentially.
pub fn map_collect_sequential<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

#[cfg(feature = "parallel")]
pub fn map_collect<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_collect<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    map_collect_sequential(items, f)
}

/// Environment variable bounding worker threads.
pub const THREADS_ENV: &str = "BLINDSIM_THREADS";

/// Sizes the global pool from `BLINDSIM_THREADS` when set. Safe to call more
/// than once; only the first successful call takes effect.
pub fn init_from_env() {
    let threads = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok());
    init_threads(threads);
}

#[cfg(feature = "parallel")]
pub fn init_threads(threads: Option<usize>) {
    if let Some(n) = threads.filter(|&n| n > 0) {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
}

#[cfg(not(feature = "parallel"))]
pub fn init_threads(_threads: Option<usize>) {}
