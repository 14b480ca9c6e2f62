use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use super::{Candidates, Dataset, GroundTruthRelevance, QueryInstance};
use crate::math::sigmoid;
use crate::{Error, Result};

/// Size of the synthesized context vector.
pub const CONTEXT_DIM: usize = 10;
/// Features copied from the relevant items into the context.
pub const SELECTED_FEATURES: usize = 5;
/// The selection is drawn among this many top-scoring features.
pub const TOP_FEATURE_POOL: usize = 30;

const LOGISTIC_EPOCHS: usize = 200;
const LOGISTIC_STEP: f64 = 0.1;

/// One judged query from a LETOR-style file.
#[derive(Debug, Clone, PartialEq)]
pub struct LetorQuery {
    pub query_id: u64,
    pub features: Vec<Vec<f64>>,
    /// Graded relevance in `0..=4`, one per item.
    pub grades: Vec<u8>,
}

impl LetorQuery {
    pub fn binary_relevances(&self) -> Vec<u8> {
        self.grades.iter().map(|&g| u8::from(g >= 3)).collect()
    }

    pub fn has_relevant(&self) -> bool {
        self.grades.iter().any(|&g| g >= 3)
    }

    pub fn feature_dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }
}

/// Relevant iff the grade is at least 3.
pub fn binarize_relevance(grade: i64) -> Result<u8> {
    match grade {
        0..=2 => Ok(0),
        3 | 4 => Ok(1),
        g => Err(Error::GradeOutOfRange(g)),
    }
}

/// Drops queries without any relevant item.
pub fn filter_relevant(queries: Vec<LetorQuery>) -> Vec<LetorQuery> {
    queries.into_iter().filter(LetorQuery::has_relevant).collect()
}

/// Per-feature min-max scaling to `[0, 1]` using ranges from `fit_on`.
///
/// Constant features map to 0. Returns the `(min, max)` ranges used.
pub fn min_max_scale(fit_on: &[LetorQuery], targets: &mut [&mut Vec<LetorQuery>]) -> Vec<(f64, f64)> {
    let dim = fit_on.iter().map(LetorQuery::feature_dim).max().unwrap_or(0);
    let mut ranges = alloc::vec![(f64::INFINITY, f64::NEG_INFINITY); dim];
    for x in fit_on.iter().flat_map(|q| &q.features) {
        for (r, &v) in ranges.iter_mut().zip(x) {
            r.0 = r.0.min(v);
            r.1 = r.1.max(v);
        }
    }
    for qs in targets.iter_mut() {
        for x in qs.iter_mut().flat_map(|q| &mut q.features) {
            for (v, &(lo, hi)) in x.iter_mut().zip(&ranges) {
                *v = if hi > lo {
                    ((*v - lo) / (hi - lo)).clamp(0.0, 1.0)
                } else {
                    0.0
                };
            }
        }
    }
    ranges
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContextSynthesis {
    /// One `CONTEXT_DIM`-vector per input query, in input order.
    pub contexts: Vec<Vec<f64>>,
    /// Indices of the copied features, ascending.
    pub selected_features: Vec<usize>,
    /// `s_j = max_k |w^k_j|` for every feature.
    pub feature_scores: Vec<f64>,
}

fn mean_vector<'a>(rows: impl Iterator<Item = &'a Vec<f64>>, dim: usize) -> Vec<f64> {
    let mut m = alloc::vec![0.0; dim];
    let mut n = 0usize;
    for r in rows {
        for (a, b) in m.iter_mut().zip(r) {
            *a += b;
        }
        n += 1;
    }
    if n > 0 {
        m.iter_mut().for_each(|a| *a /= n as f64);
    }
    m
}

/// Logistic regression without intercept, full-batch gradient descent.
fn fit_logistic(xs: &[Vec<f64>], ys: &[f64]) -> Vec<f64> {
    let dim = xs.first().map_or(0, Vec::len);
    let n = xs.len() as f64;
    let mut w = alloc::vec![0.0; dim];
    let mut grad = alloc::vec![0.0; dim];
    for _ in 0..LOGISTIC_EPOCHS {
        grad.iter_mut().for_each(|g| *g = 0.0);
        for (x, &y) in xs.iter().zip(ys) {
            let r = sigmoid(crate::math::dot(&w, x)) - y;
            for (g, v) in grad.iter_mut().zip(x) {
                *g += r * v;
            }
        }
        for (wi, g) in w.iter_mut().zip(&grad) {
            *wi -= LOGISTIC_STEP * g / n;
        }
    }
    w
}

/// Synthesizes a 10-dimensional context per query.
///
/// Items are ranked by grade; per-position logistic models predict the binary
/// relevance at each of the `positions` slots from the query's mean item vector.
/// Five features are drawn at random among the 30 with the largest
/// `max_k |w^k_j|`; the context holds those features averaged over the
/// relevant items, followed by five `N(0, sigma^2)` entries.
pub fn synthesize_context<R: RngCore + ?Sized>(
    queries: &[LetorQuery],
    sigma: f64,
    positions: usize,
    rng: &mut R,
) -> Result<ContextSynthesis> {
    if queries.is_empty() {
        return Err(Error::Empty("LETOR queries"));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::Config(alloc::format!(
            "sigma must be finite and >= 0, got {sigma}"
        )));
    }
    let dim = queries.iter().map(LetorQuery::feature_dim).max().unwrap_or(0);
    if dim < TOP_FEATURE_POOL {
        return Err(Error::Config(alloc::format!(
            "context synthesis needs at least {TOP_FEATURE_POOL} features, got {dim}"
        )));
    }
    if let Some(q) = queries.iter().find(|q| !q.has_relevant()) {
        return Err(Error::Config(alloc::format!(
            "query {} has no relevant item",
            q.query_id
        )));
    }

    let means: Vec<Vec<f64>> = queries
        .iter()
        .map(|q| mean_vector(q.features.iter(), dim))
        .collect();
    let ideal_rewards: Vec<Vec<f64>> = queries
        .iter()
        .map(|q| {
            let rel = q.binary_relevances();
            let mut order: Vec<usize> = (0..q.grades.len()).collect();
            order.sort_by(|&a, &b| q.grades[b].cmp(&q.grades[a]));
            (0..positions)
                .map(|k| order.get(k).map_or(0.0, |&i| f64::from(rel[i])))
                .collect()
        })
        .collect();

    let mut scores = alloc::vec![0.0f64; dim];
    for k in 0..positions {
        let ys: Vec<f64> = ideal_rewards.iter().map(|r| r[k]).collect();
        let w = fit_logistic(&means, &ys);
        for (s, wj) in scores.iter_mut().zip(&w) {
            *s = s.max(wj.abs());
        }
    }

    let mut ranked: Vec<usize> = (0..dim).collect();
    ranked.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut pool: Vec<usize> = ranked[..TOP_FEATURE_POOL].to_vec();
    let (chosen, _) = pool.partial_shuffle(rng, SELECTED_FEATURES);
    let mut selected = chosen.to_vec();
    selected.sort_unstable();

    let contexts = queries
        .iter()
        .map(|q| {
            let rel = q.binary_relevances();
            let relevant_mean = mean_vector(
                q.features
                    .iter()
                    .zip(&rel)
                    .filter(|(_, &r)| r == 1)
                    .map(|(x, _)| x),
                dim,
            );
            let mut ctx: Vec<f64> = selected.iter().map(|&j| relevant_mean[j]).collect();
            for _ in 0..CONTEXT_DIM - SELECTED_FEATURES {
                let z: f64 = StandardNormal.sample(rng);
                ctx.push(sigma * z);
            }
            ctx
        })
        .collect();

    Ok(ContextSynthesis {
        contexts,
        selected_features: selected,
        feature_scores: scores,
    })
}

fn to_instances(
    queries: &[LetorQuery],
    contexts: &[Vec<f64>],
    items: &mut Vec<Vec<f64>>,
    gain: &mut Vec<f64>,
    click_prob: &mut Vec<f64>,
    positions: usize,
    irrelevant_click_prob: f64,
) -> Result<Vec<QueryInstance>> {
    if queries.len() != contexts.len() {
        return Err(Error::DimensionMismatch {
            expected: queries.len(),
            got: contexts.len(),
        });
    }
    let mut out = Vec::with_capacity(queries.len());
    for (q, ctx) in queries.iter().zip(contexts) {
        if q.features.len() < positions {
            return Err(Error::Config(alloc::format!(
                "query {} has {} items, fewer than {positions} positions",
                q.query_id,
                q.features.len()
            )));
        }
        let start = items.len();
        for (x, r) in q.features.iter().zip(q.binary_relevances()) {
            items.push(x.clone());
            gain.push(f64::from(r));
            click_prob.push(if r == 1 { 1.0 } else { irrelevant_click_prob });
        }
        out.push(QueryInstance {
            query_id: q.query_id,
            context: ctx.clone(),
            candidates: Candidates::Ids((start..items.len()).collect()),
        });
    }
    Ok(out)
}

/// Assembles a [`Dataset`] from judged train/test queries and their contexts.
///
/// Relevant items are always clicked when examined; irrelevant ones with
/// `irrelevant_click_prob`.
pub fn letor_dataset(
    train: &[LetorQuery],
    train_contexts: &[Vec<f64>],
    test: &[LetorQuery],
    test_contexts: &[Vec<f64>],
    positions: usize,
    irrelevant_click_prob: f64,
) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&irrelevant_click_prob) {
        return Err(Error::ProbabilityOutOfRange(irrelevant_click_prob));
    }
    let mut items = Vec::new();
    let mut gain = Vec::new();
    let mut click_prob = Vec::new();
    let train = to_instances(
        train,
        train_contexts,
        &mut items,
        &mut gain,
        &mut click_prob,
        positions,
        irrelevant_click_prob,
    )?;
    let test = to_instances(
        test,
        test_contexts,
        &mut items,
        &mut gain,
        &mut click_prob,
        positions,
        irrelevant_click_prob,
    )?;
    Ok(Dataset {
        positions,
        items,
        relevance: GroundTruthRelevance::Judged { gain, click_prob },
        train,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fixture(n_queries: usize, dim: usize, seed: u64) -> Vec<LetorQuery> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n_queries)
            .map(|i| {
                let n_items = 12;
                let features: Vec<Vec<f64>> = (0..n_items)
                    .map(|_| (0..dim).map(|_| rng.random::<f64>()).collect())
                    .collect();
                // grade driven by feature 3 so selection has signal
                let mut grades: Vec<u8> = features.iter().map(|x| (x[3] * 4.99) as u8).collect();
                grades[0] = 4;
                LetorQuery {
                    query_id: i as u64,
                    features,
                    grades,
                }
            })
            .collect()
    }

    #[test]
    fn binarization_threshold() {
        assert_eq!(binarize_relevance(0), Ok(0));
        assert_eq!(binarize_relevance(2), Ok(0));
        assert_eq!(binarize_relevance(3), Ok(1));
        assert_eq!(binarize_relevance(4), Ok(1));
        assert_eq!(binarize_relevance(5), Err(Error::GradeOutOfRange(5)));
        assert_eq!(binarize_relevance(-1), Err(Error::GradeOutOfRange(-1)));
    }

    #[test]
    fn filtering_drops_irrelevant_queries() {
        let mut qs = fixture(5, 31, 1);
        for q in qs.iter_mut().take(2) {
            q.grades.iter_mut().for_each(|g| *g = 1);
        }
        let kept = filter_relevant(qs);
        assert_eq!(kept.len(), 3);
        assert_eq!(kept[0].query_id, 2);
    }

    #[test]
    fn zero_sigma_zeroes_the_noise_half() {
        let qs = fixture(40, 35, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = synthesize_context(&qs, 0.0, 10, &mut rng).unwrap();
        assert_eq!(s.contexts.len(), 40);
        for c in &s.contexts {
            assert_eq!(c.len(), CONTEXT_DIM);
            assert!(c[5..].iter().all(|&x| x == 0.0));
        }
        assert_eq!(s.selected_features.len(), SELECTED_FEATURES);
    }

    #[test]
    fn selection_is_deterministic_and_from_the_top_pool() {
        let qs = fixture(40, 40, 3);
        let a = synthesize_context(&qs, 1.0, 10, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = synthesize_context(&qs, 1.0, 10, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        let mut ranked: Vec<usize> = (0..40).collect();
        ranked.sort_by(|&x, &y| a.feature_scores[y].total_cmp(&a.feature_scores[x]));
        for j in &a.selected_features {
            assert!(ranked[..TOP_FEATURE_POOL].contains(j));
        }
    }

    #[test]
    fn context_copies_relevant_feature_means() {
        let qs = fixture(30, 32, 4);
        let s = synthesize_context(&qs, 1.0, 10, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let q = &qs[7];
        let rel = q.binary_relevances();
        let j = s.selected_features[2];
        let (sum, n) = q
            .features
            .iter()
            .zip(&rel)
            .filter(|(_, &r)| r == 1)
            .fold((0.0, 0), |(s, n), (x, _)| (s + x[j], n + 1));
        assert!((s.contexts[7][2] - sum / n as f64).abs() < 1e-12);
    }

    #[test]
    fn gaussian_half_is_centred() {
        let qs = fixture(2000, 30, 6);
        let sigma = 2.0;
        let s = synthesize_context(&qs, sigma, 10, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let n = s.contexts.len() as f64;
        for j in 5..10 {
            let m = s.contexts.iter().map(|c| c[j]).sum::<f64>() / n;
            assert!(m.abs() < 3.0 * sigma / libm::sqrt(n), "mean {m}");
        }
    }

    #[test]
    fn too_few_features_is_an_error() {
        let qs = fixture(10, 12, 7);
        let r = synthesize_context(&qs, 1.0, 10, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn scaling_maps_into_unit_interval() {
        let mut train = fixture(5, 31, 8);
        train[0].features[0][0] = -50.0;
        let fit = train.clone();
        let mut test = fixture(2, 31, 9);
        test[0].features[0][0] = 100.0;
        min_max_scale(&fit, &mut [&mut train, &mut test]);
        for x in train.iter().chain(&test).flat_map(|q| &q.features).flatten() {
            assert!((0.0..=1.0).contains(x));
        }
        assert_eq!(train[0].features[0][0], 0.0);
        assert_eq!(test[0].features[0][0], 1.0);
    }

    #[test]
    fn dataset_assembly() {
        let qs = fixture(4, 31, 10);
        let ctx = alloc::vec![alloc::vec![0.0; 10]; 4];
        let d = letor_dataset(&qs[..3], &ctx[..3], &qs[3..], &ctx[3..], 10, 0.1).unwrap();
        assert_eq!(d.items.len(), 48);
        assert_eq!(d.train.len(), 3);
        let ids = d.candidate_ids(&d.test[0]);
        assert_eq!(ids, (36..48).collect::<Vec<_>>());
        for &i in &ids {
            let g = d.gain(&ctx[0], i);
            let p = d.click_relevance(&ctx[0], i);
            assert!(g == 1.0 && p == 1.0 || g == 0.0 && p == 0.1);
        }
    }
}
