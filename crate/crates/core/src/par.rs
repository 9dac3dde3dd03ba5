// Thin layer over rayon so the crate also builds single-threaded (wasm).
//
// Reductions always sum fixed-size chunks in index order, so results are
// bit-identical whatever the thread count.

const CHUNK: usize = 4096;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let chunk_dot = |(x, y): (&[f64], &[f64])| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>();
    #[cfg(feature = "parallel")]
    let partial: Vec<f64> = a
        .par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(chunk_dot)
        .collect();
    #[cfg(not(feature = "parallel"))]
    let partial: Vec<f64> = a.chunks(CHUNK).zip(b.chunks(CHUNK)).map(chunk_dot).collect();
    partial.iter().sum()
}

/// Runs `f(plane_index, plane)` over consecutive `plane_len` slices of `out`.
pub(crate) fn for_each_plane<T, F>(out: &mut [T], plane_len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    out.par_chunks_mut(plane_len)
        .enumerate()
        .for_each(|(k, plane)| f(k, plane));
    #[cfg(not(feature = "parallel"))]
    out.chunks_mut(plane_len)
        .enumerate()
        .for_each(|(k, plane)| f(k, plane));
}

/// Order-preserving map over independent jobs.
pub(crate) fn map<I, O, F>(items: Vec<I>, f: F) -> Vec<O>
where
    I: Send,
    O: Send,
    F: Fn(I) -> O + Sync + Send,
{
    #[cfg(feature = "parallel")]
    return items.into_par_iter().map(f).collect();
    #[cfg(not(feature = "parallel"))]
    return items.into_iter().map(f).collect();
}

/// Runs `f(offset, chunk)` over fixed-size chunks of `out`.
pub(crate) fn for_each_chunk<T, F>(out: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    out.par_chunks_mut(CHUNK)
        .enumerate()
        .for_each(|(k, c)| f(k * CHUNK, c));
    #[cfg(not(feature = "parallel"))]
    out.chunks_mut(CHUNK)
        .enumerate()
        .for_each(|(k, c)| f(k * CHUNK, c));
}
