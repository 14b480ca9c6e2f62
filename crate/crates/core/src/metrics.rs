//! Estimation and ranking metrics.

use alloc::vec::Vec;
use rand::{Rng, RngCore};

use crate::click_model::{ExaminationModel, GroundTruthBias};
use crate::math::quantile_sorted;
use crate::{Error, Result};

/// How a predicted curve is scaled before it is compared with the truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    /// Divide by the prediction at the top position (the truth is 1 there).
    #[default]
    FirstPosition,
    Raw,
}

impl Normalization {
    pub fn apply(self, curve: &mut [f64]) {
        if let (Normalization::FirstPosition, Some(&top)) = (self, curve.first()) {
            curve.iter_mut().for_each(|v| *v /= top);
        }
    }
}

/// Mean over contexts of `(1/K) sum_k |1 - f(q, k) / p(q, k)|`.
pub fn relative_error<F: ExaminationModel + ?Sized>(
    predictor: &F,
    truth: &GroundTruthBias,
    contexts: &[Vec<f64>],
    normalization: Normalization,
) -> Result<f64> {
    let per = relative_errors(predictor, truth, contexts, normalization)?;
    Ok(per.iter().sum::<f64>() / per.len() as f64)
}

/// The per-context terms averaged by [`relative_error`].
pub fn relative_errors<F: ExaminationModel + ?Sized>(
    predictor: &F,
    truth: &GroundTruthBias,
    contexts: &[Vec<f64>],
    normalization: Normalization,
) -> Result<Vec<f64>> {
    if contexts.is_empty() {
        return Err(Error::Empty("contexts"));
    }
    let k = truth.positions;
    if predictor.positions() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: predictor.positions(),
        });
    }
    Ok(contexts
        .iter()
        .map(|q| {
            let mut f = predictor.curve(q);
            normalization.apply(&mut f);
            let p = truth.curve(q);
            f.iter().zip(&p).map(|(f, p)| (1.0 - f / p).abs()).sum::<f64>() / k as f64
        })
        .collect())
}

/// Average (optionally normalized) curve over a set of contexts.
pub fn mean_curve<F: ExaminationModel + ?Sized>(
    predictor: &F,
    contexts: &[Vec<f64>],
    normalization: Normalization,
) -> Vec<f64> {
    let mut acc = alloc::vec![0.0; predictor.positions()];
    for q in contexts {
        let mut c = predictor.curve(q);
        normalization.apply(&mut c);
        for (a, v) in acc.iter_mut().zip(c) {
            *a += v;
        }
    }
    let n = contexts.len().max(1) as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

/// `sum_{k <= K} rel_k / log2(k + 1)` with 1-based `k`.
pub fn dcg_at_k(relevances: &[f64], k: usize) -> f64 {
    relevances
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, r)| r / libm::log2((i + 2) as f64))
        .sum()
}

pub fn precision_at_k(relevances: &[f64], k: usize) -> f64 {
    if k == 0 {
        return 0.0;
    }
    relevances.iter().take(k).sum::<f64>() / k as f64
}

/// Percentile-bootstrap confidence interval of the mean.
pub fn bootstrap_ci<R: RngCore + ?Sized>(
    samples: &[f64],
    iterations: usize,
    level: f64,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::Empty("bootstrap samples"));
    }
    if iterations == 0 || !(level > 0.0 && level < 1.0) {
        return Err(Error::Config(alloc::format!(
            "bootstrap needs iterations > 0 and level in (0, 1), got {iterations} and {level}"
        )));
    }
    let n = samples.len();
    let mut means: Vec<f64> = (0..iterations)
        .map(|_| (0..n).map(|_| samples[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let alpha = 1.0 - level;
    Ok((
        quantile_sorted(&means, alpha / 2.0),
        quantile_sorted(&means, 1.0 - alpha / 2.0),
    ))
}
