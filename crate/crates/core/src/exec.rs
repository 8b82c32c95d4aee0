//! Path-level execution: data-parallel map over replica indices with
//! deterministic, scheduling-independent reduction.
//!
//! Per-path work is embarrassingly parallel (each path owns its RNG stream and
//! solver workspace). Results are collected in path order and combined in a
//! fixed tree, so estimates are bit-identical across thread counts and with
//! the sequential fallback (`--no-default-features`).

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Apply `f` to every path index, collecting results in path order.
#[cfg(feature = "parallel")]
pub fn map_paths<T, F>(n_paths: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    (0..n_paths as u64).into_par_iter().map(f).collect()
}

/// Apply `f` to every path index, collecting results in path order.
#[cfg(not(feature = "parallel"))]
pub fn map_paths<T, F>(n_paths: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    map_paths_sequential(n_paths, f)
}

/// Sequential reference path for benchmarks and the no-rayon build.
pub fn map_paths_sequential<T, F>(n_paths: usize, f: F) -> Vec<T>
where
    F: Fn(u64) -> T,
{
    (0..n_paths as u64).map(f).collect()
}

/// Configure the global worker pool. Returns false when the build is
/// sequential or the pool was already configured.
#[cfg(feature = "parallel")]
pub fn configure_threads(n: usize) -> bool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .is_ok()
}

/// Configure the global worker pool. Returns false when the build is
/// sequential or the pool was already configured.
#[cfg(not(feature = "parallel"))]
pub fn configure_threads(_n: usize) -> bool {
    false
}

/// Sum in a fixed midpoint-split tree: deterministic for a given slice and
/// better conditioned than left-to-right accumulation for large path counts.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        2 => xs[0] + xs[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
        }
    }
}

/// Two-pass sample mean and standard error `s / sqrt(n)` with fixed-order
/// reduction; the standard error is 0 for fewer than two samples.
pub fn mean_and_std_error(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = pairwise_sum(xs) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let sq: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&sq) / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}
