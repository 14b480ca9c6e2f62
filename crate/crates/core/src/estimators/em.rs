//! Estimators that model relevance with a network: contextual EM/PEM,
//! regression EM with a closed-form examination curve, and the generative
//! likelihood baseline.

use alloc::vec;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{e_step_marginals, BiasPredictor, EmConfig, EmMode, RelevancePredictor};
use crate::click_model::ClickLog;
use crate::math::{bernoulli, clamp_prob, sigmoid};
use crate::nn::{AdamState, LossKind, Mlp, Sample};
use crate::{Error, Result};

/// Flat copies of the log used by the training loops.
struct Prepared {
    n: usize,
    positions: usize,
    context_dim: usize,
    pair_dim: usize,
    contexts: Vec<f64>,
    pairs: Vec<f64>,
    clicks: Vec<u8>,
}

impl Prepared {
    fn new(log: &ClickLog) -> Result<Self> {
        if log.is_empty() {
            return Err(Error::Empty("click log"));
        }
        let (k, dq, dd) = (log.positions, log.context_dim, log.item_dim);
        let pair_dim = dq + dd;
        let mut contexts = Vec::with_capacity(log.len() * dq);
        let mut pairs = Vec::with_capacity(log.len() * k * pair_dim);
        let mut clicks = Vec::with_capacity(log.len() * k);
        for r in &log.records {
            contexts.extend_from_slice(&r.context);
            for d in &r.items {
                pairs.extend_from_slice(&r.context);
                pairs.extend_from_slice(d);
            }
            clicks.extend_from_slice(&r.clicks);
        }
        Ok(Self {
            n: log.len(),
            positions: k,
            context_dim: dq,
            pair_dim,
            contexts,
            pairs,
            clicks,
        })
    }

    fn context(&self, i: usize) -> &[f64] {
        &self.contexts[i * self.context_dim..(i + 1) * self.context_dim]
    }

    fn pair(&self, i: usize, k: usize) -> &[f64] {
        let j = i * self.positions + k;
        &self.pairs[j * self.pair_dim..(j + 1) * self.pair_dim]
    }

    fn click(&self, i: usize, k: usize) -> u8 {
        self.clicks[i * self.positions + k]
    }
}

fn relevance_network(p: &Prepared, rng: &mut ChaCha8Rng) -> Mlp {
    Mlp::init(p.pair_dim, p.pair_dim.div_ceil(2), 1, rng)
}

fn loss_for(mode: EmMode) -> LossKind {
    match mode {
        EmMode::Em => LossKind::BinaryCrossEntropy,
        EmMode::Pem => LossKind::MeanSquaredError,
    }
}

fn target(mode: EmMode, marginal: f64, rng: &mut ChaCha8Rng) -> f64 {
    match mode {
        EmMode::Em => f64::from(u8::from(bernoulli(rng, marginal))),
        EmMode::Pem => marginal,
    }
}

/// One gradient step of `g` on the relevance targets of a batch.
fn relevance_step(
    g: &Mlp,
    p: &Prepared,
    batch: &[usize],
    targets: &[f64],
    loss: LossKind,
    grads: &mut [f64],
) -> Result<()> {
    let samples: Vec<Sample<'_>> = batch
        .iter()
        .flat_map(|&i| (0..p.positions).map(move |k| (i, k)))
        .zip(targets)
        .map(|((i, k), t)| Sample {
            input: p.pair(i, k),
            target: core::slice::from_ref(t),
            weight: None,
        })
        .collect();
    g.accumulate_loss_grad(&samples, loss, grads)?;
    Ok(())
}

/// Evaluates `g` on every `(record, position)` pair of the batch.
fn relevance_values(g: &Mlp, p: &Prepared, batch: &[usize], out: &mut Vec<f64>) {
    out.clear();
    let mut act = g.activations();
    for &i in batch {
        for k in 0..p.positions {
            g.forward_into(p.pair(i, k), &mut act);
            out.push(clamp_prob(sigmoid(act.logits[0])));
        }
    }
}

/// Contextual EM-based regression.
///
/// Per mini-batch: E-step marginals of `E` from the current `(f, g)`, one
/// ADAM step on `f`; then marginals of `R` using the *updated* `f`, one ADAM
/// step on `g`. `EmMode::Em` fits Bernoulli draws with cross-entropy,
/// `EmMode::Pem` fits the marginals with squared error.
pub fn contextual_em_fit(log: &ClickLog, config: &EmConfig) -> Result<(BiasPredictor, RelevancePredictor)> {
    config.validate()?;
    let p = Prepared::new(log)?;
    let k = p.positions;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut f = Mlp::init(p.context_dim, 2 * k, k, &mut rng);
    let mut g = relevance_network(&p, &mut rng);
    let mut f_opt = AdamState::for_model(&f, config.adam);
    let mut g_opt = AdamState::for_model(&g, config.adam);
    let mut f_grads = vec![0.0; f.param_count()];
    let mut g_grads = vec![0.0; g.param_count()];
    let loss = loss_for(config.mode);

    let mut order: Vec<usize> = (0..p.n).collect();
    let mut f_act = f.activations();
    let mut g_vals = Vec::new();
    let mut f_targets = Vec::new();
    let mut g_targets = Vec::new();

    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            relevance_values(&g, &p, batch, &mut g_vals);

            f_targets.clear();
            for (b, &i) in batch.iter().enumerate() {
                f.forward_into(p.context(i), &mut f_act);
                for pos in 0..k {
                    let fv = sigmoid(f_act.logits[pos]);
                    let (pe, _) = e_step_marginals(p.click(i, pos), fv, g_vals[b * k + pos]);
                    f_targets.push(target(config.mode, pe, &mut rng));
                }
            }
            let samples: Vec<Sample<'_>> = batch
                .iter()
                .enumerate()
                .map(|(b, &i)| Sample {
                    input: p.context(i),
                    target: &f_targets[b * k..(b + 1) * k],
                    weight: None,
                })
                .collect();
            f.accumulate_loss_grad(&samples, loss, &mut f_grads)?;
            f_opt.step(f.params_mut(), &f_grads)?;

            g_targets.clear();
            for (b, &i) in batch.iter().enumerate() {
                f.forward_into(p.context(i), &mut f_act);
                for pos in 0..k {
                    let fv = sigmoid(f_act.logits[pos]);
                    let (_, pr) = e_step_marginals(p.click(i, pos), fv, g_vals[b * k + pos]);
                    g_targets.push(target(config.mode, pr, &mut rng));
                }
            }
            relevance_step(&g, &p, batch, &g_targets, loss, &mut g_grads)?;
            g_opt.step(g.params_mut(), &g_grads)?;
        }
    }
    Ok((BiasPredictor::Contextual(f), RelevancePredictor { model: g }))
}

/// Regression EM: closed-form examination curve, network relevance model.
///
/// The curve starts from the click-through-rate estimate (0.5 everywhere if
/// the first position has no clicks) and is replaced once per epoch by the
/// mean E-step marginal of each position. The relevance network takes one
/// ADAM step per mini-batch.
pub fn regression_em_fit(log: &ClickLog, config: &EmConfig) -> Result<(BiasPredictor, RelevancePredictor)> {
    config.validate()?;
    let p = Prepared::new(log)?;
    let k = p.positions;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut g = relevance_network(&p, &mut rng);
    let mut g_opt = AdamState::for_model(&g, config.adam);
    let mut g_grads = vec![0.0; g.param_count()];
    let loss = loss_for(config.mode);
    let mut curve = match super::baselines::ctr_estimate(log) {
        Ok(BiasPredictor::Constant(c)) => c.into_iter().map(clamp_prob).collect(),
        _ => vec![0.5; k],
    };

    let mut order: Vec<usize> = (0..p.n).collect();
    let mut g_vals = Vec::new();
    let mut g_targets = Vec::new();
    for _ in 0..config.epochs {
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            relevance_values(&g, &p, batch, &mut g_vals);
            g_targets.clear();
            for (b, &i) in batch.iter().enumerate() {
                for pos in 0..k {
                    let (pe, pr) = e_step_marginals(p.click(i, pos), curve[pos], g_vals[b * k + pos]);
                    sums[pos] += pe;
                    counts[pos] += 1;
                    g_targets.push(target(config.mode, pr, &mut rng));
                }
            }
            relevance_step(&g, &p, batch, &g_targets, loss, &mut g_grads)?;
            g_opt.step(g.params_mut(), &g_grads)?;
        }
        curve = closed_form_curve(&sums, &counts);
    }
    Ok((BiasPredictor::Constant(curve), RelevancePredictor { model: g }))
}

/// Mean examination marginal per position.
pub(crate) fn closed_form_curve(sums: &[f64], counts: &[usize]) -> Vec<f64> {
    sums.iter()
        .zip(counts)
        .map(|(&s, &n)| if n == 0 { 0.5 } else { s / n as f64 })
        .collect()
}

/// Direct maximization of the click likelihood over `(f, g)` by joint ADAM steps.
pub fn generative_fit(log: &ClickLog, config: &EmConfig) -> Result<(BiasPredictor, RelevancePredictor)> {
    config.validate()?;
    let p = Prepared::new(log)?;
    let k = p.positions;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut f = Mlp::init(p.context_dim, 2 * k, k, &mut rng);
    let mut g = relevance_network(&p, &mut rng);
    let mut f_opt = AdamState::for_model(&f, config.adam);
    let mut g_opt = AdamState::for_model(&g, config.adam);
    let mut f_grads = vec![0.0; f.param_count()];
    let mut g_grads = vec![0.0; g.param_count()];

    let mut order: Vec<usize> = (0..p.n).collect();
    let mut f_act = f.activations();
    let mut g_act = g.activations();
    let mut f_out_grad = vec![0.0; k];
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            f_grads.iter_mut().for_each(|v| *v = 0.0);
            g_grads.iter_mut().for_each(|v| *v = 0.0);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                f.forward_into(p.context(i), &mut f_act);
                for pos in 0..k {
                    let fv = sigmoid(f_act.logits[pos]);
                    g.forward_into(p.pair(i, pos), &mut g_act);
                    let gv = sigmoid(g_act.logits[0]);
                    let prob = clamp_prob(fv * gv);
                    // d(-log-likelihood)/d(f g)
                    let d = if p.click(i, pos) == 1 {
                        -1.0 / prob
                    } else {
                        1.0 / (1.0 - prob)
                    };
                    f_out_grad[pos] = d * gv;
                    g.backprop_output_grad_into(p.pair(i, pos), &g_act, &[d * fv], scale, &mut g_grads);
                }
                f.backprop_output_grad_into(p.context(i), &f_act, &f_out_grad, scale, &mut f_grads);
            }
            f_opt.step(f.params_mut(), &f_grads)?;
            g_opt.step(g.params_mut(), &g_grads)?;
        }
    }
    Ok((BiasPredictor::Contextual(f), RelevancePredictor { model: g }))
}
