//! Chunked data-parallel helpers.
//!
//! Work is always split into the same fixed chunks regardless of the thread
//! count, and partial results are combined in chunk order. With the
//! `parallel` feature the chunks run on the rayon pool, otherwise they run in
//! a plain loop; both paths produce bit-identical results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Number of samples handled by one chunk in Monte Carlo loops.
pub const SAMPLE_CHUNK: usize = 4096;

/// Deterministic per-chunk generator: one global seed, one stream per chunk.
pub fn chunk_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn chunk_bounds(total: usize, chunk: usize) -> Vec<(usize, usize)> {
    let chunk = chunk.max(1);
    (0..total.div_ceil(chunk))
        .map(|c| (c * chunk, ((c + 1) * chunk).min(total)))
        .collect()
}

/// Map `f(chunk_index, start, end)` over fixed chunks of `0..total`, in parallel
/// when the `parallel` feature is enabled.
pub fn map_chunks<T, F>(total: usize, chunk: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, usize, usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        chunk_bounds(total, chunk)
            .into_par_iter()
            .enumerate()
            .map(|(i, (s, e))| f(i, s, e))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_chunks_seq(total, chunk, f)
    }
}

/// Sequential reference for [`map_chunks`].
pub fn map_chunks_seq<T, F>(total: usize, chunk: usize, f: F) -> Vec<T>
where
    F: Fn(usize, usize, usize) -> T,
{
    chunk_bounds(total, chunk)
        .into_iter()
        .enumerate()
        .map(|(i, (s, e))| f(i, s, e))
        .collect()
}

/// Apply `f(row_index, row)` to every row of a row-major buffer.
pub fn for_each_row<T, F>(data: &mut [T], row_len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        data.par_chunks_mut(row_len)
            .enumerate()
            .for_each(|(i, row)| f(i, row));
    }
    #[cfg(not(feature = "parallel"))]
    {
        for_each_row_seq(data, row_len, f)
    }
}

pub fn for_each_row_seq<T, F>(data: &mut [T], row_len: usize, f: F)
where
    F: Fn(usize, &mut [T]),
{
    for (i, row) in data.chunks_mut(row_len).enumerate() {
        f(i, row);
    }
}

/// Elementwise map over two equally long slices, writing into `out`.
pub fn zip_map<A, B, F>(out: &mut [B], input: &[A], f: F)
where
    A: Sync,
    B: Send,
    F: Fn(&A) -> B + Sync + Send,
{
    debug_assert_eq!(out.len(), input.len());
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        out.par_iter_mut()
            .zip(input.par_iter())
            .for_each(|(o, i)| *o = f(i));
    }
    #[cfg(not(feature = "parallel"))]
    {
        for (o, i) in out.iter_mut().zip(input) {
            *o = f(i);
        }
    }
}

/// Sum of `f(i)` over `0..n` in fixed chunks, combined in order.
pub fn chunked_sum<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    map_chunks(n, 1 << 14, |_, s, e| (s..e).map(&f).sum::<f64>())
        .into_iter()
        .sum()
}

/// Maximum of `f(i)` over `0..n`; `f64::NEG_INFINITY` for empty input.
pub fn chunked_max<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    map_chunks(n, 1 << 14, |_, s, e| {
        (s..e).map(&f).fold(f64::NEG_INFINITY, f64::max)
    })
    .into_iter()
    .fold(f64::NEG_INFINITY, f64::max)
}
