//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (on by default) the maps below run on the rayon
//! global pool; without it they are plain iterators. Results are always
//! collected in index order, so every reduction done afterwards is
//! bit-identical between the two modes.

/// How a batch of independent evaluations is scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Falls back to sequential when the crate is built without `parallel`.
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

/// Evaluates `f(i)` for `i in 0..n`, returning results in index order.
pub fn map_range<T, F>(exec: Execution, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}

/// Maps over a slice, returning results in input order.
pub fn map_slice<S, T, F>(exec: Execution, items: &[S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
        _ => items.iter().map(f).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree_and_preserve_order() {
        let seq = map_range(Execution::Sequential, 1000, |i| (i as f64).sqrt());
        let par = map_range(Execution::Parallel, 1000, |i| (i as f64).sqrt());
        assert_eq!(seq, par);
        let items: Vec<u32> = (0..50).collect();
        assert_eq!(
            map_slice(Execution::Parallel, &items, |x| x * 2),
            (0..50).map(|x| x * 2).collect::<Vec<_>>()
        );
    }
}
