//! Count-based position-bias estimators.

use alloc::vec;

use super::{name_pair, BiasPredictor};
use crate::click_model::ClickLog;
use crate::math::PROB_EPS;
use crate::{Error, Result};

fn bounded(curve: alloc::vec::Vec<f64>) -> BiasPredictor {
    BiasPredictor::Constant(curve.into_iter().map(|p| p.clamp(PROB_EPS, 1.0)).collect())
}

/// Click-through rate per position, normalized by the top position.
pub fn ctr_estimate(log: &ClickLog) -> Result<BiasPredictor> {
    if log.is_empty() {
        return Err(Error::Empty("click log"));
    }
    let k = log.positions;
    let mut clicks = vec![0u64; k];
    for r in &log.records {
        for (acc, &c) in clicks.iter_mut().zip(&r.clicks) {
            *acc += u64::from(c);
        }
    }
    if clicks[0] == 0 {
        return Err(Error::Estimation("no clicks at the first position".into()));
    }
    // every record covers every position, so impressions cancel
    let top = clicks[0] as f64;
    Ok(bounded(clicks.iter().map(|&c| c as f64 / top).collect()))
}

/// Chained adjacent-pair ratios from swap-randomized impressions.
///
/// For the pair `(k, k + 1)` only impressions where the pair was eligible for
/// swapping are used. Let `A` be the item the ranker put at `k` and `B` the one
/// at `k + 1`. Each of them is observed at both positions, so
///
/// `ratio = (CTR(A @ k+1) + CTR(B @ k+1)) / (CTR(A @ k) + CTR(B @ k))`
///
/// estimates `p(k + 1) / p(k)`, with each CTR normalized by the number of
/// swapped or unswapped impressions it comes from. `p(1) = 1` and the ratios
/// are chained down the list.
pub fn swap_estimate(log: &ClickLog) -> Result<BiasPredictor> {
    if log.is_empty() {
        return Err(Error::Empty("click log"));
    }
    if let Some(i) = log.records.iter().position(|r| r.swap.is_none()) {
        return Err(Error::MissingAnnotation(i));
    }
    let k = log.positions;
    // [swapped, unswapped] impressions and clicks at (upper, lower) slot
    let mut n = vec![[0u64; 2]; k.saturating_sub(1)];
    let mut upper = vec![[0u64; 2]; k.saturating_sub(1)];
    let mut lower = vec![[0u64; 2]; k.saturating_sub(1)];
    for r in &log.records {
        let swap = r.swap.as_ref().expect("checked above");
        let mut start = swap.parity.first_start();
        while start + 1 < k {
            let idx = usize::from(!swap.is_swapped(start));
            n[start][idx] += 1;
            upper[start][idx] += u64::from(r.clicks[start]);
            lower[start][idx] += u64::from(r.clicks[start + 1]);
            start += 2;
        }
    }
    let mut curve = vec![1.0; k];
    for s in 0..k.saturating_sub(1) {
        let [ns, nu] = n[s];
        if ns == 0 || nu == 0 {
            return Err(Error::Estimation(alloc::format!(
                "pair {} lacks swapped or unswapped impressions",
                name_pair(s)
            )));
        }
        let (ns, nu) = (ns as f64, nu as f64);
        // A: at k when unswapped, at k + 1 when swapped; B the reverse
        let num = lower[s][0] as f64 / ns + lower[s][1] as f64 / nu;
        let den = upper[s][1] as f64 / nu + upper[s][0] as f64 / ns;
        if den == 0.0 {
            return Err(Error::Estimation(alloc::format!(
                "pair {} has no clicks at its upper position",
                name_pair(s)
            )));
        }
        curve[s + 1] = curve[s] * num / den;
    }
    Ok(bounded(curve))
}
