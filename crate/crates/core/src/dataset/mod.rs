//! Experimental datasets: the synthetic SINBIN replica, LETOR-derived queries
//! with synthesized contexts, the two-device variant and swap randomization.

mod device;
mod letor;
mod sinbin;
mod swap;

pub use device::{augment_device, DeviceAugmented, DeviceConfig};
pub use letor::{
    binarize_relevance, filter_relevant, letor_dataset, min_max_scale, synthesize_context, ContextSynthesis,
    LetorQuery, CONTEXT_DIM, SELECTED_FEATURES, TOP_FEATURE_POOL,
};
pub use sinbin::{generate_sinbin, Sinbin, SinbinConfig};
pub use swap::apply_swap_randomization;

use alloc::vec::Vec;

use crate::math::{dot, sigmoid};

/// Items that may be ranked for a query.
#[derive(Debug, Clone, PartialEq)]
pub enum Candidates {
    /// The whole catalog.
    All,
    Ids(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryInstance {
    pub query_id: u64,
    pub context: Vec<f64>,
    pub candidates: Candidates,
}

/// How true relevance is produced for a `(query, item)` pair.
#[derive(Debug, Clone, PartialEq)]
pub enum GroundTruthRelevance {
    /// `sigmoid(<theta, [q[..context_dim]; d]>)`; the same value drives clicks and gains.
    Linear { theta: Vec<f64>, context_dim: usize },
    /// Per-item judgments: binary gain plus the click probability it induces.
    Judged { gain: Vec<f64>, click_prob: Vec<f64> },
}

/// A catalog of items plus train and test query streams.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub positions: usize,
    pub items: Vec<Vec<f64>>,
    pub relevance: GroundTruthRelevance,
    pub train: Vec<QueryInstance>,
    pub test: Vec<QueryInstance>,
}

impl Dataset {
    pub fn item_dim(&self) -> usize {
        self.items.first().map_or(0, Vec::len)
    }

    pub fn context_dim(&self) -> usize {
        self.train
            .first()
            .or(self.test.first())
            .map_or(0, |q| q.context.len())
    }

    pub fn candidate_ids(&self, query: &QueryInstance) -> Vec<usize> {
        match &query.candidates {
            Candidates::All => (0..self.items.len()).collect(),
            Candidates::Ids(ids) => ids.clone(),
        }
    }

    fn linear_prob(theta: &[f64], context_dim: usize, context: &[f64], item: &[f64]) -> f64 {
        let (tq, td) = theta.split_at(context_dim);
        sigmoid(dot(tq, &context[..context_dim]) + dot(td, item))
    }

    /// `P[R = 1 | q, d]` used when simulating clicks.
    pub fn click_relevance(&self, context: &[f64], item: usize) -> f64 {
        match &self.relevance {
            GroundTruthRelevance::Linear { theta, context_dim } => {
                Self::linear_prob(theta, *context_dim, context, &self.items[item])
            }
            GroundTruthRelevance::Judged { click_prob, .. } => click_prob[item],
        }
    }

    /// Relevance gain used by ranking metrics.
    pub fn gain(&self, context: &[f64], item: usize) -> f64 {
        match &self.relevance {
            GroundTruthRelevance::Linear { theta, context_dim } => {
                Self::linear_prob(theta, *context_dim, context, &self.items[item])
            }
            GroundTruthRelevance::Judged { gain, .. } => gain[item],
        }
    }
}
