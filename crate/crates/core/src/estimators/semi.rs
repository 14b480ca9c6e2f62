//! Semi-contextual estimators: one non-contextual curve per known context group.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use super::{ctr_estimate, regression_em_fit, swap_estimate, BiasPredictor, EmConfig};
use crate::click_model::{ClickLog, ExaminationModel};
use crate::{Error, Result};

/// Maps a context to a group label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PartitionKey {
    /// Everything in group 0.
    Single,
    /// Index of the largest entry of `q[start..start + len]` (first on ties),
    /// e.g. a one-hot device indicator.
    OneHot { start: usize, len: usize },
}

impl PartitionKey {
    pub fn label(&self, context: &[f64]) -> u32 {
        match *self {
            PartitionKey::Single => 0,
            PartitionKey::OneHot { start, len } => {
                let block = &context[start..start + len];
                let mut best = 0;
                for (i, v) in block.iter().enumerate() {
                    if *v > block[best] {
                        best = i;
                    }
                }
                best as u32
            }
        }
    }

    /// Labels every partition is expected to cover.
    pub fn labels(&self) -> Vec<u32> {
        match *self {
            PartitionKey::Single => alloc::vec![0],
            PartitionKey::OneHot { len, .. } => (0..len as u32).collect(),
        }
    }
}

/// Non-contextual estimators usable inside a semi-contextual wrapper.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BaseEstimator {
    Ctr,
    Swap,
    RegressionEm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionedCurves {
    pub key: PartitionKey,
    pub curves: BTreeMap<u32, Vec<f64>>,
    /// Size-weighted mean curve, used for labels that were never fitted.
    pub fallback: Vec<f64>,
}

impl PartitionedCurves {
    pub fn curve_for(&self, context: &[f64]) -> &[f64] {
        self.curves
            .get(&self.key.label(context))
            .unwrap_or(&self.fallback)
    }
}

fn fit_base(base: BaseEstimator, log: &ClickLog, config: &EmConfig) -> Result<Vec<f64>> {
    let predictor = match base {
        BaseEstimator::Ctr => ctr_estimate(log)?,
        BaseEstimator::Swap => swap_estimate(log)?,
        BaseEstimator::RegressionEm => regression_em_fit(log, config)?.0,
    };
    Ok(predictor.curve(&[]))
}

/// Fits `base` independently on each partition of the log.
pub fn semi_contextual_fit(
    log: &ClickLog,
    key: &PartitionKey,
    base: BaseEstimator,
    config: &EmConfig,
) -> Result<BiasPredictor> {
    if log.is_empty() {
        return Err(Error::Empty("click log"));
    }
    if let PartitionKey::OneHot { start, len } = *key {
        if len == 0 || start + len > log.context_dim {
            return Err(Error::Config(alloc::format!(
                "partition block {start}..{} outside context of dimension {}",
                start + len,
                log.context_dim
            )));
        }
    }
    let mut parts: BTreeMap<u32, ClickLog> = key
        .labels()
        .into_iter()
        .map(|l| (l, ClickLog::new(log.positions, log.context_dim, log.item_dim)))
        .collect();
    for r in &log.records {
        let label = key.label(&r.context);
        parts
            .get_mut(&label)
            .expect("labels() covers every label")
            .records
            .push(r.clone());
    }
    if let Some((&label, _)) = parts.iter().find(|(_, p)| p.is_empty()) {
        return Err(Error::EmptyPartition(label));
    }
    let mut curves = BTreeMap::new();
    let mut fallback = alloc::vec![0.0; log.positions];
    for (label, part) in &parts {
        let curve = fit_base(base, part, config)?;
        let w = part.len() as f64 / log.len() as f64;
        for (f, c) in fallback.iter_mut().zip(&curve) {
            *f += w * c;
        }
        curves.insert(*label, curve);
    }
    Ok(BiasPredictor::Partitioned(PartitionedCurves {
        key: key.clone(),
        curves,
        fallback,
    }))
}
