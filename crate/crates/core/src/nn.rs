//! Single-hidden-layer sigmoid MLPs trained with ADAM.
//!
//! Parameters live in one flat buffer laid out as `W1 (hidden x input)`,
//! `b1`, `W2 (output x hidden)`, `b2`, row-major. Gradients share the layout,
//! which keeps the optimizer a plain elementwise loop.

use alloc::vec;
use alloc::vec::Vec;
use rand::{Rng, RngCore};

use crate::math::{sigmoid, softplus};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    input_dim: usize,
    hidden_dim: usize,
    output_dim: usize,
    params: Vec<f64>,
}

/// Training loss applied to each sigmoid output coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// `-(t ln y + (1 - t) ln(1 - y))`, evaluated on the logit so it stays finite.
    BinaryCrossEntropy,
    /// `(y - t)^2`.
    MeanSquaredError,
}

impl LossKind {
    /// Loss and its derivative with respect to the output logit `z`.
    #[inline]
    fn value_and_logit_grad(self, z: f64, target: f64) -> (f64, f64) {
        let y = sigmoid(z);
        match self {
            LossKind::BinaryCrossEntropy => (softplus(z) - target * z, y - target),
            LossKind::MeanSquaredError => {
                let r = y - target;
                (r * r, 2.0 * r * y * (1.0 - y))
            }
        }
    }
}

/// One training example. `weight`, when present, scales each output coordinate's loss.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub input: &'a [f64],
    pub target: &'a [f64],
    pub weight: Option<&'a [f64]>,
}

/// Scratch buffers for a forward pass.
#[derive(Debug, Clone)]
pub struct Activations {
    pub hidden: Vec<f64>,
    pub logits: Vec<f64>,
}

impl Activations {
    pub fn output(&self, j: usize) -> f64 {
        sigmoid(self.logits[j])
    }
}

impl Mlp {
    /// All-zero parameters.
    pub fn zeros(input_dim: usize, hidden_dim: usize, output_dim: usize) -> Self {
        let n = hidden_dim * input_dim + hidden_dim + output_dim * hidden_dim + output_dim;
        Self {
            input_dim,
            hidden_dim,
            output_dim,
            params: vec![0.0; n],
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: RngCore + ?Sized>(
        input_dim: usize,
        hidden_dim: usize,
        output_dim: usize,
        rng: &mut R,
    ) -> Self {
        let mut m = Self::zeros(input_dim, hidden_dim, output_dim);
        let a1 = libm::sqrt(6.0 / (input_dim + hidden_dim) as f64);
        for w in m.w1_mut() {
            *w = rng.random_range(-a1..=a1);
        }
        let a2 = libm::sqrt(6.0 / (hidden_dim + output_dim) as f64);
        for w in m.w2_mut() {
            *w = rng.random_range(-a2..=a2);
        }
        m
    }

    /// Rebuilds a model from a flat parameter vector.
    pub fn from_params(
        input_dim: usize,
        hidden_dim: usize,
        output_dim: usize,
        params: Vec<f64>,
    ) -> Result<Self> {
        let m = Self::zeros(input_dim, hidden_dim, output_dim);
        if params.len() != m.params.len() {
            return Err(Error::DimensionMismatch {
                expected: m.params.len(),
                got: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("model parameters"));
        }
        Ok(Self { params, ..m })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let b1 = self.hidden_dim * self.input_dim;
        let w2 = b1 + self.hidden_dim;
        let b2 = w2 + self.output_dim * self.hidden_dim;
        (b1, w2, b2)
    }

    fn w1_mut(&mut self) -> &mut [f64] {
        let (b1, _, _) = self.offsets();
        &mut self.params[..b1]
    }

    fn w2_mut(&mut self) -> &mut [f64] {
        let (_, w2, b2) = self.offsets();
        &mut self.params[w2..b2]
    }

    pub fn activations(&self) -> Activations {
        Activations {
            hidden: vec![0.0; self.hidden_dim],
            logits: vec![0.0; self.output_dim],
        }
    }

    /// Forward pass into `act`; `x` must have `input_dim` entries.
    pub fn forward_into(&self, x: &[f64], act: &mut Activations) {
        debug_assert_eq!(x.len(), self.input_dim);
        let (ob1, ow2, ob2) = self.offsets();
        let p = &self.params;
        for (h, out) in act.hidden.iter_mut().enumerate() {
            let row = &p[h * self.input_dim..(h + 1) * self.input_dim];
            let z: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + p[ob1 + h];
            *out = sigmoid(z);
        }
        for (o, out) in act.logits.iter_mut().enumerate() {
            let row = &p[ow2 + o * self.hidden_dim..ow2 + (o + 1) * self.hidden_dim];
            *out = row.iter().zip(&act.hidden).map(|(w, v)| w * v).sum::<f64>() + p[ob2 + o];
        }
    }

    /// `sigmoid(W2 sigmoid(W1 x + b1) + b2)`.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: x.len(),
            });
        }
        let mut act = self.activations();
        self.forward_into(x, &mut act);
        Ok(act.logits.iter().map(|&z| sigmoid(z)).collect())
    }

    /// Accumulates `scale * dL/dθ` into `grads`, given `dL/dz` at the output logits.
    pub fn backprop_into(
        &self,
        x: &[f64],
        act: &Activations,
        logit_grad: &[f64],
        scale: f64,
        grads: &mut [f64],
    ) {
        let (ob1, ow2, ob2) = self.offsets();
        let p = &self.params;
        let mut dh = vec![0.0; self.hidden_dim];
        for (o, &dz) in logit_grad.iter().enumerate() {
            if dz == 0.0 {
                continue;
            }
            let dz = dz * scale;
            grads[ob2 + o] += dz;
            let base = ow2 + o * self.hidden_dim;
            for h in 0..self.hidden_dim {
                grads[base + h] += dz * act.hidden[h];
                dh[h] += dz * p[base + h];
            }
        }
        for h in 0..self.hidden_dim {
            let a = act.hidden[h];
            let dz1 = dh[h] * a * (1.0 - a);
            if dz1 == 0.0 {
                continue;
            }
            grads[ob1 + h] += dz1;
            let row = &mut grads[h * self.input_dim..(h + 1) * self.input_dim];
            for (g, v) in row.iter_mut().zip(x) {
                *g += dz1 * v;
            }
        }
    }

    /// Accumulates `scale * dL/dθ` given `dL/dy` at the sigmoid outputs.
    pub fn backprop_output_grad_into(
        &self,
        x: &[f64],
        act: &Activations,
        output_grad: &[f64],
        scale: f64,
        grads: &mut [f64],
    ) {
        let logit_grad: Vec<f64> = output_grad
            .iter()
            .zip(&act.logits)
            .map(|(&g, &z)| {
                let y = sigmoid(z);
                g * y * (1.0 - y)
            })
            .collect();
        self.backprop_into(x, act, &logit_grad, scale, grads);
    }

    fn check_sample(&self, s: &Sample<'_>) -> Result<()> {
        let mismatch = |expected, got| Err(Error::DimensionMismatch { expected, got });
        if s.input.len() != self.input_dim {
            return mismatch(self.input_dim, s.input.len());
        }
        if s.target.len() != self.output_dim {
            return mismatch(self.output_dim, s.target.len());
        }
        if let Some(w) = s.weight {
            if w.len() != self.output_dim {
                return mismatch(self.output_dim, w.len());
            }
        }
        if let Some(&t) = s.target.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return Err(Error::ProbabilityOutOfRange(t));
        }
        Ok(())
    }

    /// Mean over the batch of the (weighted) per-coordinate loss sum.
    pub fn loss(&self, batch: &[Sample<'_>], loss: LossKind) -> Result<f64> {
        self.loss_and_grad(batch, loss).map(|(l, _)| l)
    }

    /// Mean batch loss and its exact gradient.
    pub fn loss_and_grad(&self, batch: &[Sample<'_>], loss: LossKind) -> Result<(f64, Vec<f64>)> {
        let mut grads = vec![0.0; self.params.len()];
        let l = self.accumulate_loss_grad(batch, loss, &mut grads)?;
        Ok((l, grads))
    }

    /// Like [`Mlp::loss_and_grad`] but writes into a caller-owned gradient buffer.
    pub fn accumulate_loss_grad(
        &self,
        batch: &[Sample<'_>],
        loss: LossKind,
        grads: &mut [f64],
    ) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Empty("training batch"));
        }
        if grads.len() != self.params.len() {
            return Err(Error::DimensionMismatch {
                expected: self.params.len(),
                got: grads.len(),
            });
        }
        grads.iter_mut().for_each(|g| *g = 0.0);
        let scale = 1.0 / batch.len() as f64;
        let mut act = self.activations();
        let mut dz = vec![0.0; self.output_dim];
        let mut total = 0.0;
        for s in batch {
            self.check_sample(s)?;
            self.forward_into(s.input, &mut act);
            for j in 0..self.output_dim {
                let w = s.weight.map_or(1.0, |w| w[j]);
                let (l, g) = loss.value_and_logit_grad(act.logits[j], s.target[j]);
                total += w * l;
                dz[j] = w * g;
            }
            self.backprop_into(s.input, &act, &dz, scale, grads);
        }
        Ok(total * scale)
    }
}

/// ADAM hyperparameters; the defaults are the usual `0.001, 0.9, 0.999, 1e-8`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(param_count: usize, config: AdamConfig) -> Self {
        Self {
            config,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            t: 0,
        }
    }

    pub fn for_model(model: &Mlp, config: AdamConfig) -> Self {
        Self::new(model.param_count(), config)
    }

    /// One bias-corrected ADAM update of `params`. Nothing is modified on error.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::DimensionMismatch {
                expected: self.m.len(),
                got: if params.len() != self.m.len() {
                    params.len()
                } else {
                    grads.len()
                },
            });
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("gradient"));
        }
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            eps,
        } = self.config;
        self.t += 1;
        let c1 = 1.0 - libm::pow(beta1, self.t as f64);
        let c2 = 1.0 - libm::pow(beta2, self.t as f64);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= learning_rate * m_hat / (libm::sqrt(v_hat) + eps);
        }
        Ok(())
    }
}

/// Applies one ADAM step to `model`.
pub fn adam_step(model: &mut Mlp, grads: &[f64], state: &mut AdamState) -> Result<()> {
    state.step(model.params_mut(), grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_model_outputs_half() {
        let m = Mlp::zeros(3, 4, 2);
        assert_eq!(m.forward(&[1.0, -2.0, 7.0]).unwrap(), [0.5, 0.5]);
        assert!(matches!(
            m.forward(&[1.0]),
            Err(Error::DimensionMismatch { expected: 3, got: 1 })
        ));
    }

    #[test]
    fn tiny_model_matches_hand_computation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = Mlp::init(2, 2, 1, &mut rng);
        let p = m.params().to_vec();
        // W1 = [[p0, p1], [p2, p3]], b1 = [p4, p5], W2 = [p6, p7], b2 = p8
        let s = |z: f64| 1.0 / (1.0 + libm::exp(-z));
        let h0 = s(p[0] * 1.0 + p[1] * 0.0 + p[4]);
        let h1 = s(p[2] * 1.0 + p[3] * 0.0 + p[5]);
        let y = s(p[6] * h0 + p[7] * h1 + p[8]);
        assert!((m.forward(&[1.0, 0.0]).unwrap()[0] - y).abs() < 1e-15);
    }

    #[test]
    fn init_is_bounded_and_biases_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = Mlp::init(10, 20, 10, &mut rng);
        let a1 = libm::sqrt(6.0 / 30.0);
        let (ob1, ow2, ob2) = m.offsets();
        assert!(m.params()[..ob1].iter().all(|w| w.abs() <= a1));
        assert!(m.params()[ob1..ow2].iter().all(|&b| b == 0.0));
        assert!(m.params()[ob2..].iter().all(|&b| b == 0.0));
    }

    #[test]
    fn mse_at_target_has_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = Mlp::init(3, 3, 2, &mut rng);
        let x = [0.3, -0.2, 1.0];
        let y = m.forward(&x).unwrap();
        let (l, g) = m
            .loss_and_grad(
                &[Sample {
                    input: &x,
                    target: &y,
                    weight: None,
                }],
                LossKind::MeanSquaredError,
            )
            .unwrap();
        assert!(l.abs() < 1e-30);
        assert!(g.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn zero_weights_mask_everything() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = Mlp::init(3, 3, 2, &mut rng);
        let s = Sample {
            input: &[0.3, -0.2, 1.0],
            target: &[1.0, 0.0],
            weight: Some(&[0.0, 0.0]),
        };
        let (_, g) = m.loss_and_grad(&[s], LossKind::BinaryCrossEntropy).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn loss_rejects_bad_batches() {
        let m = Mlp::zeros(2, 2, 1);
        assert_eq!(
            m.loss(&[], LossKind::MeanSquaredError),
            Err(Error::Empty("training batch"))
        );
        let s = Sample {
            input: &[0.0, 0.0],
            target: &[1.5],
            weight: None,
        };
        assert!(m.loss(&[s], LossKind::MeanSquaredError).is_err());
    }

    #[test]
    fn bce_is_finite_on_saturated_outputs() {
        let mut m = Mlp::zeros(1, 1, 1);
        let n = m.param_count();
        m.params_mut()[n - 1] = 800.0;
        for t in [0.0, 1.0] {
            let s = Sample {
                input: &[0.0],
                target: &[t],
                weight: None,
            };
            assert!(m.loss(&[s], LossKind::BinaryCrossEntropy).unwrap().is_finite());
        }
    }

    #[test]
    fn adam_zero_gradient_is_a_no_op() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut m = Mlp::init(2, 3, 1, &mut rng);
        let before = m.clone();
        let mut st = AdamState::for_model(&m, AdamConfig::default());
        let zeros = vec![0.0; m.param_count()];
        adam_step(&mut m, &zeros, &mut st).unwrap();
        assert_eq!(m, before);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut p = vec![1.0, -2.0, 0.5];
        let g = [0.3, -4.0, 1e-3];
        let mut st = AdamState::new(3, AdamConfig::default());
        st.step(&mut p, &g).unwrap();
        let expected = [1.0 - 0.001, -2.0 + 0.001, 0.5 - 0.001];
        for (a, b) in p.iter().zip(expected) {
            // eps / |g| correction is below 1e-8 here
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn adam_rejects_non_finite_without_mutation() {
        let mut p = vec![1.0, 2.0];
        let mut st = AdamState::new(2, AdamConfig::default());
        assert!(st.step(&mut p, &[f64::NAN, 0.0]).is_err());
        assert_eq!(p, [1.0, 2.0]);
        assert_eq!(st.t, 0);
    }

    #[test]
    fn adam_minimizes_quadratic() {
        // f(x) = (x - 3)^2
        let mut x = [0.0];
        let config = AdamConfig {
            learning_rate: 0.01,
            ..AdamConfig::default()
        };
        let mut st = AdamState::new(1, config);
        let mut steps = 0;
        while (x[0] - 3.0f64).abs() >= 1e-3 && steps < 5000 {
            let g = [2.0 * (x[0] - 3.0)];
            st.step(&mut x, &g).unwrap();
            steps += 1;
        }
        assert!((x[0] - 3.0f64).abs() < 1e-3, "x = {} after {steps}", x[0]);
    }
}
