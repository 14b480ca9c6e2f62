//! JSON snapshots of fitted predictors.

use std::collections::BTreeMap;

use anyhow::{bail, Context};
use cpbm_core::estimators::{BiasPredictor, PartitionKey, PartitionedCurves, RelevancePredictor};
use cpbm_core::nn::Mlp;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpSnapshot {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub params: Vec<f64>,
    pub seed: u64,
    /// Optimizer steps taken.
    pub step: u64,
}

impl MlpSnapshot {
    pub fn new(model: &Mlp, seed: u64, step: u64) -> Self {
        Self {
            input_dim: model.input_dim(),
            hidden_dim: model.hidden_dim(),
            output_dim: model.output_dim(),
            params: model.params().to_vec(),
            seed,
            step,
        }
    }

    pub fn to_model(&self) -> anyhow::Result<Mlp> {
        Ok(Mlp::from_params(
            self.input_dim,
            self.hidden_dim,
            self.output_dim,
            self.params.clone(),
        )?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum BiasSnapshot {
    Constant {
        curve: Vec<f64>,
    },
    Contextual {
        model: MlpSnapshot,
    },
    Partitioned {
        /// `None` for a single partition, else the one-hot block `(start, len)`.
        block: Option<(usize, usize)>,
        curves: Vec<LabeledCurve>,
        fallback: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabeledCurve {
    pub label: u32,
    pub curve: Vec<f64>,
}

/// Everything needed to reload a fitted estimator and know how it was made.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictorFile {
    pub estimator: String,
    pub normalization: String,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub bias: BiasSnapshot,
    pub relevance: Option<MlpSnapshot>,
}

pub fn bias_snapshot(bias: &BiasPredictor, seed: u64, step: u64) -> BiasSnapshot {
    match bias {
        BiasPredictor::Constant(c) => BiasSnapshot::Constant { curve: c.clone() },
        BiasPredictor::Contextual(m) => BiasSnapshot::Contextual {
            model: MlpSnapshot::new(m, seed, step),
        },
        BiasPredictor::Partitioned(p) => BiasSnapshot::Partitioned {
            block: match p.key {
                PartitionKey::Single => None,
                PartitionKey::OneHot { start, len } => Some((start, len)),
            },
            curves: p
                .curves
                .iter()
                .map(|(&label, c)| LabeledCurve {
                    label,
                    curve: c.clone(),
                })
                .collect(),
            fallback: p.fallback.clone(),
        },
    }
}

impl BiasSnapshot {
    pub fn to_predictor(&self) -> anyhow::Result<BiasPredictor> {
        Ok(match self {
            BiasSnapshot::Constant { curve } => BiasPredictor::Constant(curve.clone()),
            BiasSnapshot::Contextual { model } => BiasPredictor::Contextual(model.to_model()?),
            BiasSnapshot::Partitioned {
                block,
                curves,
                fallback,
            } => {
                if curves.iter().any(|c| c.curve.len() != fallback.len()) {
                    bail!("partition curves differ in length");
                }
                let map: BTreeMap<u32, Vec<f64>> =
                    curves.iter().map(|c| (c.label, c.curve.clone())).collect();
                if map.len() != curves.len() {
                    bail!("duplicate partition label");
                }
                BiasPredictor::Partitioned(PartitionedCurves {
                    key: match *block {
                        None => PartitionKey::Single,
                        Some((start, len)) => PartitionKey::OneHot { start, len },
                    },
                    curves: map,
                    fallback: fallback.clone(),
                })
            }
        })
    }
}

impl PredictorFile {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("snapshot serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        serde_json::from_str(text).context("invalid predictor file")
    }

    pub fn relevance_predictor(&self) -> anyhow::Result<Option<RelevancePredictor>> {
        self.relevance
            .as_ref()
            .map(|m| Ok(RelevancePredictor { model: m.to_model()? }))
            .transpose()
    }
}
