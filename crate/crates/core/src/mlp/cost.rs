//! Work counters and the exact recurrences they obey.

use std::iter::Sum;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

/// Work done by one estimate, summed over the whole recursion tree.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostCounters {
    pub generator_evals: u64,
    pub terminal_evals: u64,
    /// Scalar standard normals drawn.
    pub gaussian_draws: u64,
    /// Lower-level values taken from a recursion that was already run for
    /// the upper level, instead of being recomputed.
    pub cache_hits: u64,
}

impl Add for CostCounters {
    type Output = CostCounters;

    fn add(self, rhs: CostCounters) -> CostCounters {
        CostCounters {
            generator_evals: self.generator_evals + rhs.generator_evals,
            terminal_evals: self.terminal_evals + rhs.terminal_evals,
            gaussian_draws: self.gaussian_draws + rhs.gaussian_draws,
            cache_hits: self.cache_hits + rhs.cache_hits,
        }
    }
}

impl AddAssign for CostCounters {
    fn add_assign(&mut self, rhs: CostCounters) {
        *self = *self + rhs;
    }
}

impl Sum for CostCounters {
    fn sum<I: Iterator<Item = CostCounters>>(iter: I) -> CostCounters {
        iter.fold(CostCounters::default(), Add::add)
    }
}

impl<'a> Sum<&'a CostCounters> for CostCounters {
    fn sum<I: Iterator<Item = &'a CostCounters>>(iter: I) -> CostCounters {
        iter.copied().sum()
    }
}

/// Generator evaluations of the modified scheme at `depth`:
/// `c(0) = 0`, `c(1) = Q`, `c(n) = M c(n-1) + Q M (p(n-1) + 2)` where the
/// point pair costs `p(k) = c(k)` with reuse and `c(k) + c(k-1)` without.
pub fn modified_generator_evals(depth: usize, m: u64, q: u64, reuse: bool) -> u128 {
    let (m, q) = (m as u128, q as u128);
    let mut prev = 0u128; // c(k-1)
    let mut cur = 0u128; // c(k)
    for k in 1..=depth {
        let next = if k == 1 {
            q
        } else {
            let pair = if reuse { cur } else { cur + prev };
            m * cur + q * m * (pair + 2)
        };
        prev = cur;
        cur = next;
    }
    cur
}

/// Cache hits of the modified scheme with reuse on: one per sampled point
/// whose lower value is itself a non-trivial estimate (depth at least 2).
pub fn modified_cache_hits(depth: usize, m: u64, q: u64) -> u128 {
    let (m, q) = (m as u128, q as u128);
    let mut hits = 0u128;
    for k in 2..=depth {
        let lower_nontrivial = u128::from(k >= 3);
        hits = m * hits + q * m * (hits + lower_nontrivial);
    }
    hits
}

/// Generator evaluations of the original scheme:
/// `c(1) = Q`, `c(n) = Q + sum_{l=1}^{n-1} Q M^(n-l) (c(l) + c(l-1) + 2)`.
pub fn original_generator_evals(depth: usize, m: u64, q: u64) -> u128 {
    let (m, q) = (m as u128, q as u128);
    let mut c = vec![0u128; depth + 1];
    for n in 1..=depth {
        let mut total = q;
        for l in 1..n {
            total += q * m.pow((n - l) as u32) * (c[l] + c[l - 1] + 2);
        }
        c[n] = total;
    }
    c[depth]
}
