// Copyright 2026 nstab Contributors
// SPDX-License-Identifier: Apache-2.0

//! Order-preserving parallel map with a sequential fallback.
//!
//! Workers inherit the caller's working precision, so a parallel section
//! computes exactly what the sequential path would.

use serde::{Deserialize, Serialize};

#[cfg(feature = "parallel")]
use crate::scalar::{digits, with_digits};

/// Execution strategy for data-parallel sections.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Exec {
    Sequential,
    /// Parallel on the global rayon pool, or a dedicated pool of `jobs` threads.
    #[default]
    Parallel,
    ParallelJobs(usize),
}

impl Exec {
    /// Parallel with an explicit worker count; `None` or `Some(0)` uses the global pool.
    pub fn with_jobs(jobs: Option<usize>) -> Self {
        match jobs {
            Some(1) => Exec::Sequential,
            Some(n) if n > 1 => Exec::ParallelJobs(n),
            _ => Exec::Parallel,
        }
    }

    /// Maps `f` over `items`, returning results in input order.
    pub fn map<T, R, F>(self, items: Vec<T>, f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(T) -> R + Sync + Send,
    {
        match self {
            Exec::Sequential => items.into_iter().map(f).collect(),
            #[cfg(feature = "parallel")]
            Exec::Parallel => par_map(items, f),
            #[cfg(feature = "parallel")]
            Exec::ParallelJobs(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
                Ok(pool) => pool.install(|| par_map(items, f)),
                Err(_) => par_map(items, f),
            },
            #[cfg(not(feature = "parallel"))]
            _ => items.into_iter().map(f).collect(),
        }
    }
}

#[cfg(feature = "parallel")]
fn par_map<T, R, F>(items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    let d = digits();
    items
        .into_par_iter()
        .map(|item| with_digits(d, || f(item)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{digits, with_digits, Real};

    #[test]
    fn preserves_order_and_precision() {
        let out = with_digits(45, || {
            Exec::Parallel.map((0..32).collect(), |i: i64| {
                (
                    i,
                    digits(),
                    (Real::one() / Real::from_i64(7)).as_float().prec(),
                )
            })
        });
        for (k, (i, d, p)) in out.into_iter().enumerate() {
            assert_eq!(i, k as i64);
            assert_eq!(d, 45);
            assert_eq!(p, crate::scalar::digits_to_bits(45));
        }
    }

    #[test]
    fn sequential_matches_parallel() {
        let f = |i: u32| (Real::from_f64(f64::from(i)).sqrt()).to_decimal_string();
        let a = Exec::Sequential.map((0..20).collect(), f);
        let b = Exec::ParallelJobs(3).map((0..20).collect(), f);
        assert_eq!(a, b);
    }
}
