//! Inference prevention for functional-key requests.
//!
//! A request vector is accepted only if it touches at least `k_min` slots and,
//! together with the requester's previously accepted vectors, still leaves the
//! span of the history a proper subspace. Once the history spans all `n`
//! dimensions the requester could solve for every plaintext entry.

use num_bigint::BigInt;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum IpmReason {
    LowSupport { support: usize, k_min: usize },
    SpansSpace { rank: usize, n: usize },
}

impl std::fmt::Display for IpmReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            IpmReason::LowSupport { support, k_min } => {
                write!(f, "support {support} below threshold {k_min}")
            }
            IpmReason::SpansSpace { rank, n } => {
                write!(f, "history would reach rank {rank} of {n}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IpmDecision {
    Accept,
    Reject(IpmReason),
}

pub fn support(y: &[i64]) -> usize {
    y.iter().filter(|v| **v != 0).count()
}

/// Rank over the rationals by fraction-free (Bareiss) elimination.
pub fn rank(rows: &[Vec<i64>]) -> usize {
    let Some(width) = rows.first().map(Vec::len) else {
        return 0;
    };
    let mut m: Vec<Vec<BigInt>> = rows.iter().map(|r| r.iter().map(|v| BigInt::from(*v)).collect()).collect();
    let mut rank = 0;
    let mut prev_pivot = BigInt::one();
    for col in 0..width {
        let Some(pivot_row) = (rank..m.len()).find(|&r| !m[r][col].is_zero()) else {
            continue;
        };
        m.swap(rank, pivot_row);
        let pivot = m[rank][col].clone();
        for r in rank + 1..m.len() {
            let factor = m[r][col].clone();
            for c in col..width {
                let v = (&pivot * &m[r][c] - &factor * &m[rank][c]) / &prev_pivot;
                m[r][c] = v;
            }
        }
        prev_pivot = pivot;
        rank += 1;
        if rank == m.len() {
            break;
        }
    }
    rank
}

/// Decide on `y` given the requester's accepted history. Does not mutate the history.
pub fn check(history: &[Vec<i64>], y: &[i64], n: usize, k_min: usize) -> IpmDecision {
    let s = support(y);
    if s < k_min {
        return IpmDecision::Reject(IpmReason::LowSupport { support: s, k_min });
    }
    let mut rows = history.to_vec();
    rows.push(y.to_vec());
    let r = rank(&rows);
    if r >= n {
        return IpmDecision::Reject(IpmReason::SpansSpace { rank: r, n });
    }
    IpmDecision::Accept
}
