//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature the work is spread over the rayon pool;
//! without it the same chunking runs on the calling thread. Chunk boundaries
//! never depend on the thread count, and results come back in chunk order,
//! so reductions over them are bit-identical either way.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Applies `f` to consecutive chunks of `items` and returns the results in
/// chunk order.
pub fn map_chunks<T, R, F>(items: &[T], chunk: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &[T]) -> R + Sync + Send,
{
    let chunk = chunk.max(1);
    #[cfg(feature = "parallel")]
    {
        items
            .par_chunks(chunk)
            .enumerate()
            .map(|(i, c)| f(i * chunk, c))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_chunks_sequential(items, chunk, f)
    }
}

/// The sequential path, available regardless of features.
pub fn map_chunks_sequential<T, R, F>(items: &[T], chunk: usize, f: F) -> Vec<R>
where
    F: Fn(usize, &[T]) -> R,
{
    let chunk = chunk.max(1);
    items
        .chunks(chunk)
        .enumerate()
        .map(|(i, c)| f(i * chunk, c))
        .collect()
}

/// Runs `f` on every element of `items` in place.
pub fn for_each_mut<T, F>(items: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter_mut().enumerate().for_each(|(i, x)| f(i, x));
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter_mut().enumerate().for_each(|(i, x)| f(i, x));
    }
}

/// Maps `f` over `0..n`, preserving order.
pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunk_results_in_order() {
        let xs: Vec<u32> = (0..10).collect();
        let got = map_chunks(&xs, 3, |start, c| (start, c.iter().sum::<u32>()));
        assert_eq!(got, vec![(0, 3), (3, 12), (6, 21), (9, 9)]);
        assert_eq!(
            got,
            map_chunks_sequential(&xs, 3, |s, c| (s, c.iter().sum::<u32>()))
        );
    }

    #[test]
    fn for_each_mut_visits_all() {
        let mut xs = vec![1, 2, 3];
        for_each_mut(&mut xs, |i, x| *x += i);
        assert_eq!(xs, vec![1, 3, 5]);
        assert_eq!(map_range(4, |i| i * i), vec![0, 1, 4, 9]);
    }
}
