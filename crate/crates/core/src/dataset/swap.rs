use alloc::vec::Vec;
use rand::{Rng, RngCore};

use crate::click_model::{Parity, SwapAnnotation};

/// Randomizes a ranking in place with odd/even adjacent swaps.
///
/// A parity is drawn uniformly; each eligible disjoint pair `(k, k + 1)` is
/// then swapped independently with probability 1/2.
pub fn apply_swap_randomization<T, R: RngCore + ?Sized>(ranking: &mut [T], rng: &mut R) -> SwapAnnotation {
    let parity = if rng.random::<bool>() {
        Parity::Odd
    } else {
        Parity::Even
    };
    let mut swapped_pairs = Vec::new();
    let mut start = parity.first_start();
    while start + 1 < ranking.len() {
        if rng.random::<bool>() {
            ranking.swap(start, start + 1);
            swapped_pairs.push(start);
        }
        start += 2;
    }
    SwapAnnotation {
        parity,
        swapped_pairs,
    }
}
