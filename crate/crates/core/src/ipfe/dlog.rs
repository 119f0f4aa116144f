//! Bounded discrete logarithm over Ristretto by baby-step giant-step.

use std::collections::HashMap;

use curve25519_dalek::ristretto::{CompressedRistretto, RistrettoPoint};
use curve25519_dalek::scalar::Scalar;
use curve25519_dalek::traits::Identity;

/// Finds `k` in `[-range, range]` with `k·G = target`, `G` the Ristretto basepoint.
pub fn solve_bounded(target: &RistrettoPoint, range: u64) -> Option<i64> {
    let span = range.checked_mul(2)?.checked_add(1)?;
    let m = (span as f64).sqrt().ceil() as u64;
    let m = m.max(1);

    let generator = RistrettoPoint::mul_base(&Scalar::ONE);
    let mut baby: HashMap<CompressedRistretto, u64> = HashMap::with_capacity(m as usize);
    let mut acc = RistrettoPoint::identity();
    for j in 0..m {
        baby.entry(acc.compress()).or_insert(j);
        acc += generator;
    }

    // acc == m·G now
    let stride = acc;
    let mut probe = target + RistrettoPoint::mul_base(&Scalar::from(range));
    for i in 0..=m {
        if let Some(&j) = baby.get(&probe.compress()) {
            let k = i * m + j;
            if k < span {
                return Some(k as i64 - range as i64);
            }
        }
        probe -= stride;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point_of(k: i64) -> RistrettoPoint {
        let s = if k >= 0 { Scalar::from(k as u64) } else { -Scalar::from(k.unsigned_abs()) };
        RistrettoPoint::mul_base(&s)
    }

    #[test]
    fn recovers_every_value_in_small_range() {
        for k in -40..=40 {
            assert_eq!(solve_bounded(&point_of(k), 40), Some(k), "k = {k}");
        }
    }

    #[test]
    fn rejects_outside_range() {
        assert_eq!(solve_bounded(&point_of(41), 40), None);
        assert_eq!(solve_bounded(&point_of(-41), 40), None);
    }

    #[test]
    fn zero_range() {
        assert_eq!(solve_bounded(&point_of(0), 0), Some(0));
        assert_eq!(solve_bounded(&point_of(1), 0), None);
    }

    #[test]
    fn edges_of_larger_range() {
        let r = 1_000_003;
        for k in [-r, -r + 1, -1, 0, 1, r - 1, r] {
            assert_eq!(solve_bounded(&point_of(k), r as u64), Some(k));
        }
    }
}
