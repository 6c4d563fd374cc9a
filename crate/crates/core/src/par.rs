//! Data-parallel primitives with a sequential fallback.
//!
//! With the `parallel` feature (default) the helpers run on the rayon thread
//! pool that is current at the call site; without it they are plain loops.
//! Reductions always split the index range into fixed-size chunks and add the
//! partial sums in chunk order, so results are bit-identical regardless of the
//! feature flag or the number of worker threads.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use num_complex::Complex64;

/// Granularity of reductions and pointwise kernels.
pub const CHUNK: usize = 2048;

/// Fills `out[i] = f(i)`.
pub fn fill<T, F>(out: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        out.par_chunks_mut(CHUNK)
            .enumerate()
            .for_each(|(c, chunk)| {
                let base = c * CHUNK;
                for (k, v) in chunk.iter_mut().enumerate() {
                    *v = f(base + k);
                }
            });
    }
    #[cfg(not(feature = "parallel"))]
    {
        for (i, v) in out.iter_mut().enumerate() {
            *v = f(i);
        }
    }
}

/// Collects `f(i)` for `i in 0..n`.
pub fn collect<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send + Default + Clone,
    F: Fn(usize) -> T + Sync + Send,
{
    let mut out = vec![T::default(); n];
    fill(&mut out, f);
    out
}

/// Applies `f(i, &mut out[i])` to every element.
pub fn update<T, F>(out: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        out.par_chunks_mut(CHUNK)
            .enumerate()
            .for_each(|(c, chunk)| {
                let base = c * CHUNK;
                for (k, v) in chunk.iter_mut().enumerate() {
                    f(base + k, v);
                }
            });
    }
    #[cfg(not(feature = "parallel"))]
    {
        for (i, v) in out.iter_mut().enumerate() {
            f(i, v);
        }
    }
}

fn chunk_sums<T, F, A>(n: usize, zero: T, f: F, add: A) -> Vec<T>
where
    T: Send + Sync + Copy,
    F: Fn(usize) -> T + Sync + Send,
    A: Fn(T, T) -> T + Sync + Send,
{
    let chunks = n.div_ceil(CHUNK);
    let partial = |c: usize| {
        let lo = c * CHUNK;
        let hi = (lo + CHUNK).min(n);
        (lo..hi).fold(zero, |acc, i| add(acc, f(i)))
    };
    #[cfg(feature = "parallel")]
    {
        (0..chunks).into_par_iter().map(partial).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..chunks).map(partial).collect()
    }
}

/// Deterministic sum of `f(i)` over `0..n`.
pub fn sum_f64<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    chunk_sums(n, 0.0, f, |a, b| a + b).into_iter().sum()
}

/// Deterministic complex sum of `f(i)` over `0..n`.
pub fn sum_c64<F>(n: usize, f: F) -> Complex64
where
    F: Fn(usize) -> Complex64 + Sync + Send,
{
    chunk_sums(n, Complex64::new(0.0, 0.0), f, |a, b| a + b)
        .into_iter()
        .fold(Complex64::new(0.0, 0.0), |a, b| a + b)
}

/// Deterministic maximum of `f(i)` over `0..n` (0 for empty ranges).
pub fn max_f64<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    chunk_sums(n, 0.0, f, f64::max)
        .into_iter()
        .fold(0.0, f64::max)
}

/// Maps independent jobs, preserving input order in the output.
pub fn map_jobs<I, T, F>(items: &[I], f: F) -> Vec<T>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Processes disjoint mutable chunks of `data`, each of length `len`.
pub fn for_each_chunk<T, F>(data: &mut [T], len: usize, f: F)
where
    T: Send,
    F: Fn(&mut [T]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        data.par_chunks_mut(len).for_each(f);
    }
    #[cfg(not(feature = "parallel"))]
    {
        data.chunks_mut(len).for_each(f);
    }
}

/// Runs `f` with at most `threads` workers (0 = library default).
///
/// Without the `parallel` feature this simply calls `f`.
pub fn with_threads<R, F>(threads: usize, f: F) -> R
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    #[cfg(feature = "parallel")]
    {
        if threads == 0 {
            return f();
        }
        match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
            Ok(pool) => pool.install(f),
            Err(e) => {
                log::warn!("could not build a {threads}-thread pool ({e}); using the global pool");
                f()
            }
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        f()
    }
}

/// Number of worker threads available to the helpers above.
pub fn current_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sums_are_thread_count_independent() {
        let n = 3 * CHUNK + 17;
        let f = |i: usize| ((i as f64) * 0.37).sin() / (1.0 + i as f64);
        let a = with_threads(1, || sum_f64(n, f));
        let b = with_threads(4, || sum_f64(n, f));
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn fill_and_collect_agree() {
        let v = collect(5000, |i| i * 2);
        assert_eq!(v[4999], 9998);
        assert_eq!(max_f64(10, |i| i as f64), 9.0);
        assert_eq!(max_f64(0, |i| i as f64), 0.0);
    }

    #[test]
    fn jobs_keep_order() {
        let items: Vec<u32> = (0..50).collect();
        let out = map_jobs(&items, |x| x * x);
        assert_eq!(out[7], 49);
    }
}
