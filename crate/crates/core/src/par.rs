//! Data-parallel map with a sequential fallback.
//!
//! With the `parallel` feature (on by default) per-concept scoring fans out
//! over rayon's global pool. Without it, or when a caller asks for
//! [`Parallelism::Sequential`], the same closure runs on the calling thread.
//! Results come back in input order either way.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parallelism {
    Sequential,
    Parallel,
}

impl Default for Parallelism {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Parallelism::Parallel
        } else {
            Parallelism::Sequential
        }
    }
}

pub(crate) fn try_map<T, R, E, F>(items: &[T], mode: Parallelism, f: F) -> Result<Vec<R>, E>
where
    T: Sync,
    R: Send,
    E: Send,
    F: Fn(&T) -> Result<R, E> + Sync + Send,
{
    match mode {
        #[cfg(feature = "parallel")]
        Parallelism::Parallel => {
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
    fn both_modes_preserve_order() {
        let xs: Vec<u64> = (0..1000).collect();
        let sq = |x: &u64| -> Result<u64, ()> { Ok(x * x) };
        let seq = try_map(&xs, Parallelism::Sequential, sq);
        let par = try_map(&xs, Parallelism::Parallel, sq);
        assert_eq!(seq, par);
        let err: Result<Vec<u64>, u64> =
            try_map(&xs, Parallelism::Parallel, |&x| if x == 500 { Err(x) } else { Ok(x) });
        assert_eq!(err, Err(500));
    }
}
