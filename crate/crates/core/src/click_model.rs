//! The contextual position-based model: ground-truth examination curves,
//! click simulation, and the click-log data model.
//!
//! A click on the item shown at position `k` for context `q` happens when the
//! user examines the slot (`E = 1`) and finds the item relevant (`R = 1`),
//! with `P[E = 1 | q, k]` allowed to depend on the context.

use alloc::vec::Vec;
use rand::{Rng, RngCore};

use crate::math::{self, clamp_prob};
use crate::{Error, Result};

/// Examination probability model `f(q, k)`.
pub trait ExaminationModel {
    /// Number of positions the model covers.
    fn positions(&self) -> usize;

    /// `P[E = 1 | q, position]`, 0-based position.
    fn examination(&self, context: &[f64], position: usize) -> f64;

    /// Examination probabilities for every position.
    fn curve(&self, context: &[f64]) -> Vec<f64> {
        (0..self.positions())
            .map(|k| self.examination(context, k))
            .collect()
    }
}

/// Relevance probability model `g(q, d)`.
pub trait RelevanceModel {
    fn relevance(&self, context: &[f64], item: &[f64]) -> f64;
}

impl<F: Fn(&[f64], &[f64]) -> f64> RelevanceModel for F {
    fn relevance(&self, context: &[f64], item: &[f64]) -> f64 {
        self(context, item)
    }
}

/// Flat examination curve (`f ≡ 1`); turns a PBM-aware ranker into a biased one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlatBias {
    pub positions: usize,
}

impl ExaminationModel for FlatBias {
    fn positions(&self) -> usize {
        self.positions
    }

    fn examination(&self, _context: &[f64], _position: usize) -> f64 {
        1.0
    }
}

/// True contextual position bias `1 / k^max(<w, q> + 1, 0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthBias {
    /// Zero-mean weight vector.
    pub w: Vec<f64>,
    /// The draw before centering; entries lie in `[-eta, eta]`.
    pub raw: Vec<f64>,
    pub eta: f64,
    pub positions: usize,
}

impl GroundTruthBias {
    /// Centers `raw` over all of its entries.
    pub fn from_raw(raw: Vec<f64>, eta: f64, positions: usize) -> Self {
        let mean = raw.iter().sum::<f64>() / raw.len().max(1) as f64;
        let w = raw.iter().map(|x| x - mean).collect();
        Self {
            w,
            raw,
            eta,
            positions,
        }
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    /// The exponent `max(<w, q> + 1, 0)`.
    pub fn exponent(&self, context: &[f64]) -> f64 {
        (math::dot(&self.w, context) + 1.0).max(0.0)
    }
}

impl ExaminationModel for GroundTruthBias {
    fn positions(&self) -> usize {
        self.positions
    }

    fn examination(&self, context: &[f64], position: usize) -> f64 {
        true_examination_prob(self, context, position)
    }

    fn curve(&self, context: &[f64]) -> Vec<f64> {
        let a = self.exponent(context);
        (0..self.positions)
            .map(|k| examination_from_exponent(a, k))
            .collect()
    }
}

#[inline]
fn examination_from_exponent(exponent: f64, position: usize) -> f64 {
    if position == 0 {
        1.0
    } else {
        1.0 / libm::pow((position + 1) as f64, exponent)
    }
}

/// Draws `w̃ ~ U(-eta, eta)^dim` and centers it.
///
/// The draw is `eta * u` with `u ~ U(-1, 1)`, so two calls with the same
/// stream state and different `eta` produce parallel weight vectors.
pub fn sample_bias_weights<R: RngCore + ?Sized>(
    dim: usize,
    eta: f64,
    positions: usize,
    rng: &mut R,
) -> Result<GroundTruthBias> {
    if dim == 0 {
        return Err(Error::Config("bias dimension must be at least 1".into()));
    }
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(Error::Config(alloc::format!(
            "eta must be finite and >= 0, got {eta}"
        )));
    }
    let raw = (0..dim).map(|_| eta * rng.random_range(-1.0..=1.0)).collect();
    Ok(GroundTruthBias::from_raw(raw, eta, positions))
}

/// `P[E = 1 | q, k]` of the ground-truth model; 0-based `position`.
pub fn true_examination_prob(bias: &GroundTruthBias, context: &[f64], position: usize) -> f64 {
    examination_from_exponent(bias.exponent(context), position)
}

fn check_prob(p: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&p) {
        Ok(p)
    } else {
        Err(Error::ProbabilityOutOfRange(p))
    }
}

/// Draws one click vector from per-slot examination and relevance probabilities.
///
/// Each slot draws `E` then `R`, independently.
pub fn simulate_clicks_from_probs<R: RngCore + ?Sized>(
    examination: &[f64],
    relevance: &[f64],
    rng: &mut R,
) -> Result<Vec<u8>> {
    if examination.len() != relevance.len() {
        return Err(Error::DimensionMismatch {
            expected: examination.len(),
            got: relevance.len(),
        });
    }
    let mut clicks = Vec::with_capacity(examination.len());
    for (&e, &r) in examination.iter().zip(relevance) {
        let e = check_prob(e)?;
        let r = check_prob(r)?;
        let examined = math::bernoulli(rng, e);
        let relevant = math::bernoulli(rng, r);
        clicks.push(u8::from(examined && relevant));
    }
    Ok(clicks)
}

/// Simulates clicks on `ranking` for context `q` under the CPBM.
pub fn simulate_clicks<R, G, E>(
    context: &[f64],
    ranking: &[Vec<f64>],
    relevance: &G,
    examination: &E,
    rng: &mut R,
) -> Result<Vec<u8>>
where
    R: RngCore + ?Sized,
    G: RelevanceModel + ?Sized,
    E: ExaminationModel + ?Sized,
{
    let exam: Vec<f64> = (0..ranking.len())
        .map(|k| examination.examination(context, k))
        .collect();
    let rel: Vec<f64> = ranking.iter().map(|d| relevance.relevance(context, d)).collect();
    simulate_clicks_from_probs(&exam, &rel, rng)
}

/// Which adjacent pairs were eligible for swapping in a randomized ranking.
///
/// `Odd` pairs start at the 1-based odd positions `(1,2), (3,4), ...`,
/// i.e. 0-based starts `0, 2, 4, ...`; `Even` pairs start at 0-based `1, 3, ...`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Parity {
    Odd,
    Even,
}

impl Parity {
    /// 0-based start of the first eligible pair.
    pub fn first_start(self) -> usize {
        match self {
            Parity::Odd => 0,
            Parity::Even => 1,
        }
    }

    /// Whether the pair starting at 0-based `start` is eligible under this parity.
    pub fn covers(self, start: usize) -> bool {
        start % 2 == self.first_start()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Parity::Odd => "odd",
            Parity::Even => "even",
        }
    }
}

/// Record of a swap intervention; `swapped_pairs` holds 0-based pair starts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SwapAnnotation {
    pub parity: Parity,
    pub swapped_pairs: Vec<usize>,
}

impl SwapAnnotation {
    /// Checks that swapped pairs are eligible, disjoint and inside `positions`.
    pub fn validate(&self, positions: usize) -> Result<()> {
        let mut last: Option<usize> = None;
        for &s in &self.swapped_pairs {
            if !self.parity.covers(s) || s + 1 >= positions {
                return Err(Error::Config(alloc::format!(
                    "pair start {s} not eligible under {} parity with {positions} positions",
                    self.parity.as_str()
                )));
            }
            if let Some(prev) = last {
                if s <= prev + 1 {
                    return Err(Error::Config(alloc::format!(
                        "swapped pairs {prev} and {s} overlap or are unsorted"
                    )));
                }
            }
            last = Some(s);
        }
        Ok(())
    }

    pub fn is_swapped(&self, start: usize) -> bool {
        self.swapped_pairs.binary_search(&start).is_ok()
    }
}

/// One logged impression `(c, q, D)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClickRecord {
    pub query_id: u64,
    pub context: Vec<f64>,
    /// Feature vectors of the presented items, top slot first.
    pub items: Vec<Vec<f64>>,
    pub clicks: Vec<u8>,
    pub swap: Option<SwapAnnotation>,
}

/// A click log; every record shares `positions`, `context_dim` and `item_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClickLog {
    pub positions: usize,
    pub context_dim: usize,
    pub item_dim: usize,
    pub records: Vec<ClickRecord>,
}

impl ClickLog {
    pub fn new(positions: usize, context_dim: usize, item_dim: usize) -> Self {
        Self {
            positions,
            context_dim,
            item_dim,
            records: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    fn check_record(&self, r: &ClickRecord) -> Result<()> {
        let mismatch = |expected, got| Err(Error::DimensionMismatch { expected, got });
        if r.context.len() != self.context_dim {
            return mismatch(self.context_dim, r.context.len());
        }
        if r.items.len() != self.positions {
            return mismatch(self.positions, r.items.len());
        }
        if r.clicks.len() != self.positions {
            return mismatch(self.positions, r.clicks.len());
        }
        if let Some(d) = r.items.iter().find(|d| d.len() != self.item_dim) {
            return mismatch(self.item_dim, d.len());
        }
        if r.clicks.iter().any(|&c| c > 1) {
            return Err(Error::Config("click values must be 0 or 1".into()));
        }
        if r.context
            .iter()
            .chain(r.items.iter().flatten())
            .any(|x| !x.is_finite())
        {
            return Err(Error::NonFinite("click record features"));
        }
        if let Some(swap) = &r.swap {
            swap.validate(self.positions)?;
        }
        Ok(())
    }

    /// Appends a record after checking it against the log's shape.
    pub fn push(&mut self, record: ClickRecord) -> Result<()> {
        self.check_record(&record)?;
        self.records.push(record);
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.records.iter().try_for_each(|r| self.check_record(r))
    }

    pub fn contexts(&self) -> Vec<Vec<f64>> {
        self.records.iter().map(|r| r.context.clone()).collect()
    }

    pub fn is_randomized(&self) -> bool {
        !self.records.is_empty() && self.records.iter().all(|r| r.swap.is_some())
    }
}

/// Log-likelihood of the observed clicks with `P[C = 1] = f(q, k) g(q, d)`.
///
/// Both factors are clamped to `[1e-6, 1 - 1e-6]`.
pub fn click_log_likelihood<F, G>(log: &ClickLog, f: &F, g: &G) -> Result<f64>
where
    F: ExaminationModel + ?Sized,
    G: RelevanceModel + ?Sized,
{
    if log.is_empty() {
        return Err(Error::Empty("click log"));
    }
    let mut total = 0.0;
    for r in &log.records {
        let curve = f.curve(&r.context);
        for (k, (d, &c)) in r.items.iter().zip(&r.clicks).enumerate() {
            let p = clamp_prob(curve[k]) * clamp_prob(g.relevance(&r.context, d));
            total += if c == 1 { libm::log(p) } else { libm::log(1.0 - p) };
        }
    }
    Ok(total)
}
