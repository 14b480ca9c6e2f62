//! Position-bias estimators behind a common interface: each fits a
//! [`ClickLog`] and returns a [`BiasPredictor`], plus a [`RelevancePredictor`]
//! for the methods that learn one.

mod baselines;
mod em;
mod semi;

pub use baselines::{ctr_estimate, swap_estimate};
pub use em::{contextual_em_fit, generative_fit, regression_em_fit};
pub use semi::{semi_contextual_fit, BaseEstimator, PartitionKey, PartitionedCurves};

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::click_model::{ClickLog, ExaminationModel, RelevanceModel};
use crate::math::{clamp_prob, sigmoid, PROB_EPS};
use crate::nn::{AdamConfig, Mlp};
use crate::{Error, Result};

/// Fitted examination model `f(q, k)`.
#[derive(Debug, Clone, PartialEq)]
pub enum BiasPredictor {
    /// One probability per position, shared by every context.
    Constant(Vec<f64>),
    /// Network from the context to one sigmoid output per position.
    Contextual(Mlp),
    /// Constant curves selected by a partition of the context space.
    Partitioned(PartitionedCurves),
}

impl BiasPredictor {
    pub fn is_contextual(&self) -> bool {
        !matches!(self, BiasPredictor::Constant(_))
    }
}

#[inline]
fn curve_value(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0)
}

impl ExaminationModel for BiasPredictor {
    fn positions(&self) -> usize {
        match self {
            BiasPredictor::Constant(c) => c.len(),
            BiasPredictor::Contextual(m) => m.output_dim(),
            BiasPredictor::Partitioned(p) => p.fallback.len(),
        }
    }

    fn examination(&self, context: &[f64], position: usize) -> f64 {
        match self {
            BiasPredictor::Constant(c) => curve_value(c[position]),
            _ => self.curve(context)[position],
        }
    }

    fn curve(&self, context: &[f64]) -> Vec<f64> {
        match self {
            BiasPredictor::Constant(c) => c.iter().map(|&p| curve_value(p)).collect(),
            BiasPredictor::Contextual(m) => m
                .forward(context)
                .expect("context dimension must match the bias network input")
                .into_iter()
                .map(curve_value)
                .collect(),
            BiasPredictor::Partitioned(p) => p.curve_for(context).iter().map(|&v| curve_value(v)).collect(),
        }
    }
}

/// Fitted relevance model `g(q, d)` over the concatenation `[q; d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RelevancePredictor {
    pub model: Mlp,
}

impl RelevancePredictor {
    pub fn context_dim(&self, item_dim: usize) -> usize {
        self.model.input_dim() - item_dim
    }
}

impl RelevanceModel for RelevancePredictor {
    fn relevance(&self, context: &[f64], item: &[f64]) -> f64 {
        let mut x = Vec::with_capacity(context.len() + item.len());
        x.extend_from_slice(context);
        x.extend_from_slice(item);
        let mut act = self.model.activations();
        self.model.forward_into(&x, &mut act);
        sigmoid(act.logits[0])
    }
}

/// How the maximization step consumes the E-step marginals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmMode {
    /// Bernoulli targets drawn from the marginals, binary cross-entropy.
    Em,
    /// The marginals themselves as targets, mean squared error.
    Pem,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub mode: EmMode,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 20,
            mode: EmMode::Em,
            seed: 0,
            adam: AdamConfig::default(),
        }
    }
}

impl EmConfig {
    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Posterior marginals `(P[E = 1 | c], P[R = 1 | c])` under the current `f, g`.
///
/// Both inputs are clamped to `[1e-6, 1 - 1e-6]` first.
pub fn e_step_marginals(click: u8, f: f64, g: f64) -> (f64, f64) {
    if click == 1 {
        return (1.0, 1.0);
    }
    let f = clamp_prob(f);
    let g = clamp_prob(g);
    let denom = 1.0 - f * g;
    (f * (1.0 - g) / denom, (1.0 - f) * g / denom)
}

/// Every estimator that can be run from an experiment config.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EstimatorKind {
    ContextualPem,
    ContextualEm,
    ContextualGenerative,
    RegressionEm,
    Ctr,
    Swap,
    SemiContextual(BaseEstimator),
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 9] = [
        EstimatorKind::ContextualPem,
        EstimatorKind::ContextualEm,
        EstimatorKind::ContextualGenerative,
        EstimatorKind::RegressionEm,
        EstimatorKind::Ctr,
        EstimatorKind::Swap,
        EstimatorKind::SemiContextual(BaseEstimator::Swap),
        EstimatorKind::SemiContextual(BaseEstimator::Ctr),
        EstimatorKind::SemiContextual(BaseEstimator::RegressionEm),
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::ContextualPem => "contextual-pem",
            EstimatorKind::ContextualEm => "contextual-em",
            EstimatorKind::ContextualGenerative => "contextual-generative",
            EstimatorKind::RegressionEm => "em",
            EstimatorKind::Ctr => "ctr",
            EstimatorKind::Swap => "swap",
            EstimatorKind::SemiContextual(BaseEstimator::Swap) => "semi-contextual-swap",
            EstimatorKind::SemiContextual(BaseEstimator::Ctr) => "semi-contextual-ctr",
            EstimatorKind::SemiContextual(BaseEstimator::RegressionEm) => "semi-contextual-em",
        }
    }

    pub fn needs_swap_annotations(self) -> bool {
        matches!(
            self,
            EstimatorKind::Swap | EstimatorKind::SemiContextual(BaseEstimator::Swap)
        )
    }

    pub fn is_contextual(self) -> bool {
        matches!(
            self,
            EstimatorKind::ContextualPem | EstimatorKind::ContextualEm | EstimatorKind::ContextualGenerative
        )
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EstimatorKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(alloc::format!("unknown estimator '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fitted {
    pub bias: BiasPredictor,
    pub relevance: Option<RelevancePredictor>,
}

/// Fits `kind` on `log`. `partition` is only used by semi-contextual estimators.
pub fn fit_estimator(
    kind: EstimatorKind,
    log: &ClickLog,
    config: &EmConfig,
    partition: &PartitionKey,
) -> Result<Fitted> {
    let with_mode = |mode| EmConfig {
        mode,
        ..config.clone()
    };
    let (bias, relevance) = match kind {
        EstimatorKind::ContextualPem => {
            let (f, g) = contextual_em_fit(log, &with_mode(EmMode::Pem))?;
            (f, Some(g))
        }
        EstimatorKind::ContextualEm => {
            let (f, g) = contextual_em_fit(log, &with_mode(EmMode::Em))?;
            (f, Some(g))
        }
        EstimatorKind::ContextualGenerative => {
            let (f, g) = generative_fit(log, config)?;
            (f, Some(g))
        }
        EstimatorKind::RegressionEm => {
            let (f, g) = regression_em_fit(log, &with_mode(EmMode::Em))?;
            (f, Some(g))
        }
        EstimatorKind::Ctr => (ctr_estimate(log)?, None),
        EstimatorKind::Swap => (swap_estimate(log)?, None),
        EstimatorKind::SemiContextual(base) => (
            semi_contextual_fit(log, partition, base, &with_mode(EmMode::Em))?,
            None,
        ),
    };
    Ok(Fitted { bias, relevance })
}

pub(crate) fn name_pair(start: usize) -> String {
    alloc::format!("({}, {})", start + 1, start + 2)
}
