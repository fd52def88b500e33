//! Data-parallel map with a sequential fallback.
//!
//! With the `parallel` feature disabled every mode runs sequentially. Results
//! are always returned in input order, so reductions downstream are
//! bit-stable regardless of scheduling.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    /// Parallel when the `parallel` feature is enabled.
    #[default]
    Auto,
    Sequential,
    Parallel,
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && !matches!(self, Execution::Sequential)
    }
}

pub fn map_range<R, F>(exec: Execution, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() && n > 1 {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

pub fn map<T, R, F>(exec: Execution, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    map_range(exec, items.len(), |i| f(&items[i]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved_in_every_mode() {
        let xs: Vec<u64> = (0..1000).collect();
        for exec in [Execution::Auto, Execution::Sequential, Execution::Parallel] {
            let ys = map(exec, &xs, |x| x * x);
            assert!(ys.iter().enumerate().all(|(i, y)| *y == (i * i) as u64));
        }
    }
}
