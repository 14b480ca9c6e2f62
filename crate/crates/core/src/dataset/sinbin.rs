use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::{Candidates, Dataset, GroundTruthRelevance, QueryInstance};
use crate::click_model::{sample_bias_weights, GroundTruthBias};
use crate::math::derive_seed;
use crate::{Error, Result};

const CATALOG_STREAM: u64 = 1;
const TRAIN_STREAM: u64 = 2;
const TEST_STREAM: u64 = 3;
const BIAS_STREAM: u64 = 4;

/// Synthetic linear-relevance dataset in the style of SINBIN.
#[derive(Debug, Clone, PartialEq)]
pub struct SinbinConfig {
    pub n_queries: usize,
    pub n_test_queries: usize,
    pub n_items: usize,
    pub context_dim: usize,
    pub item_dim: usize,
    pub positions: usize,
    pub eta: f64,
    pub seed: u64,
}

impl Default for SinbinConfig {
    fn default() -> Self {
        Self {
            n_queries: 10_000,
            n_test_queries: 10_000,
            n_items: 100,
            context_dim: 10,
            item_dim: 10,
            positions: 10,
            eta: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sinbin {
    pub dataset: Dataset,
    pub bias: GroundTruthBias,
}

/// Builds the dataset deterministically from `config`.
///
/// Contexts are `U(0, 1)^dq`, items `N(0, 1)^dd` and the relevance weights
/// `theta ~ N(0, 1 / sqrt(dq + dd))`, fixed per dataset. Every query may rank
/// the whole catalog. Catalog, contexts and the bias direction come from
/// separate streams, so changing `eta` only rescales the bias.
pub fn generate_sinbin(config: &SinbinConfig) -> Result<Sinbin> {
    if config.n_items < config.positions {
        return Err(Error::Config(alloc::format!(
            "n_items ({}) must be at least the number of positions ({})",
            config.n_items,
            config.positions
        )));
    }
    if config.context_dim == 0 || config.item_dim == 0 || config.positions == 0 {
        return Err(Error::Config("dimensions and positions must be positive".into()));
    }
    let mut catalog_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, CATALOG_STREAM));
    let scale = 1.0 / libm::sqrt((config.context_dim + config.item_dim) as f64);
    let theta_dist = Normal::new(0.0, scale).map_err(|e| Error::Config(alloc::format!("{e}")))?;
    let theta: Vec<f64> = (0..config.context_dim + config.item_dim)
        .map(|_| theta_dist.sample(&mut catalog_rng))
        .collect();
    let items: Vec<Vec<f64>> = (0..config.n_items)
        .map(|_| {
            (0..config.item_dim)
                .map(|_| StandardNormal.sample(&mut catalog_rng))
                .collect()
        })
        .collect();

    let queries = |n: usize, stream: u64, offset: u64| -> Vec<QueryInstance> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, stream));
        (0..n)
            .map(|i| QueryInstance {
                query_id: offset + i as u64,
                context: (0..config.context_dim).map(|_| rng.random::<f64>()).collect(),
                candidates: Candidates::All,
            })
            .collect()
    };
    let train = queries(config.n_queries, TRAIN_STREAM, 0);
    let test = queries(config.n_test_queries, TEST_STREAM, config.n_queries as u64);

    let mut bias_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, BIAS_STREAM));
    let bias = sample_bias_weights(config.context_dim, config.eta, config.positions, &mut bias_rng)?;

    Ok(Sinbin {
        dataset: Dataset {
            positions: config.positions,
            items,
            relevance: GroundTruthRelevance::Linear {
                theta,
                context_dim: config.context_dim,
            },
            train,
            test,
        },
        bias,
    })
}
