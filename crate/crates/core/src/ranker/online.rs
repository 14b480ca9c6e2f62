//! Online simulation loops: logging a ranker's traffic and measuring a
//! debiased ranker's IR metrics as it learns.

use alloc::vec::Vec;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{LinTsConfig, LinTsState};
use crate::click_model::{
    simulate_clicks_from_probs, ClickLog, ClickRecord, ExaminationModel, FlatBias, GroundTruthBias,
};
use crate::dataset::{apply_swap_randomization, Dataset, QueryInstance};
use crate::metrics::{dcg_at_k, precision_at_k};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub query_index: usize,
    pub dcg: f64,
    pub precision: f64,
}

/// Independent streams for ranking, click simulation and swaps, so that runs
/// sharing a seed see the same user behaviour.
struct Streams {
    ranker: ChaCha8Rng,
    clicks: ChaCha8Rng,
    swaps: ChaCha8Rng,
}

impl Streams {
    fn draw<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        Self {
            ranker: ChaCha8Rng::seed_from_u64(rng.next_u64()),
            clicks: ChaCha8Rng::seed_from_u64(rng.next_u64()),
            swaps: ChaCha8Rng::seed_from_u64(rng.next_u64()),
        }
    }
}

struct Impression {
    ranking: Vec<usize>,
    clicks: Vec<u8>,
}

fn serve(
    dataset: &Dataset,
    state: &LinTsState,
    query: &QueryInstance,
    true_bias: &GroundTruthBias,
    streams: &mut Streams,
    randomize: Option<&mut Option<crate::click_model::SwapAnnotation>>,
) -> Result<Impression> {
    let k = dataset.positions;
    let candidates = dataset.candidate_ids(query);
    let mut ranking = state.rank(
        &query.context,
        &dataset.items,
        &candidates,
        k,
        &mut streams.ranker,
    )?;
    if let Some(slot) = randomize {
        *slot = Some(apply_swap_randomization(&mut ranking, &mut streams.swaps));
    }
    let exam = true_bias.curve(&query.context);
    let rel: Vec<f64> = ranking
        .iter()
        .map(|&id| dataset.click_relevance(&query.context, id))
        .collect();
    let clicks = simulate_clicks_from_probs(&exam, &rel, &mut streams.clicks)?;
    Ok(Impression { ranking, clicks })
}

fn learn<E: ExaminationModel + ?Sized>(
    dataset: &Dataset,
    state: &mut LinTsState,
    context: &[f64],
    imp: &Impression,
    bias: &E,
) -> Result<()> {
    let presented: Vec<&[f64]> = imp
        .ranking
        .iter()
        .map(|&id| dataset.items[id].as_slice())
        .collect();
    state.update(context, &presented, &imp.clicks, bias)
}

/// Logs the traffic of a bias-unaware ranker (flat examination curve) that
/// learns online over `queries`, optionally swap-randomizing each ranking.
pub fn generate_click_log<R: RngCore + ?Sized>(
    dataset: &Dataset,
    queries: &[QueryInstance],
    true_bias: &GroundTruthBias,
    config: LinTsConfig,
    randomize: bool,
    rng: &mut R,
) -> Result<ClickLog> {
    let dq = queries.first().map_or(0, |q| q.context.len());
    let dd = dataset.item_dim();
    let mut log = ClickLog::new(dataset.positions, dq, dd);
    let mut state = LinTsState::new(dq + dd, config)?;
    let flat = FlatBias {
        positions: dataset.positions,
    };
    let mut streams = Streams::draw(rng);
    for query in queries {
        let mut swap = None;
        let imp = serve(
            dataset,
            &state,
            query,
            true_bias,
            &mut streams,
            randomize.then_some(&mut swap),
        )?;
        learn(dataset, &mut state, &query.context, &imp, &flat)?;
        log.push(ClickRecord {
            query_id: query.query_id,
            context: query.context.clone(),
            items: imp.ranking.iter().map(|&id| dataset.items[id].clone()).collect(),
            clicks: imp.clicks,
            swap,
        })?;
    }
    Ok(log)
}

/// Trains a fresh ranker online with `bias` as its propensity model and
/// records DCG@K and Precision@K of every presented ranking against the
/// true relevance gains.
pub fn run_online_ltr<E, R>(
    dataset: &Dataset,
    queries: &[QueryInstance],
    bias: &E,
    true_bias: &GroundTruthBias,
    config: LinTsConfig,
    rng: &mut R,
) -> Result<Vec<TrajectoryPoint>>
where
    E: ExaminationModel + ?Sized,
    R: RngCore + ?Sized,
{
    let k = dataset.positions;
    let dq = queries.first().map_or(0, |q| q.context.len());
    let mut state = LinTsState::new(dq + dataset.item_dim(), config)?;
    let mut streams = Streams::draw(rng);
    let mut out = Vec::with_capacity(queries.len());
    for (i, query) in queries.iter().enumerate() {
        let imp = serve(dataset, &state, query, true_bias, &mut streams, None)?;
        let gains: Vec<f64> = imp
            .ranking
            .iter()
            .map(|&id| dataset.gain(&query.context, id))
            .collect();
        out.push(TrajectoryPoint {
            query_index: i,
            dcg: dcg_at_k(&gains, k),
            precision: precision_at_k(&gains, k),
        });
        learn(dataset, &mut state, &query.context, &imp, bias)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::click_model::sample_bias_weights;
    use crate::dataset::{generate_sinbin, SinbinConfig};

    fn small() -> (Dataset, GroundTruthBias) {
        let s = generate_sinbin(&SinbinConfig {
            n_queries: 200,
            n_test_queries: 50,
            n_items: 30,
            eta: 1.0,
            seed: 3,
            ..SinbinConfig::default()
        })
        .unwrap();
        (s.dataset, s.bias)
    }

    #[test]
    fn zero_queries_give_empty_trajectory() {
        let (d, b) = small();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = run_online_ltr(&d, &[], &b, &b, LinTsConfig::default(), &mut rng).unwrap();
        assert!(t.is_empty());
    }

    #[test]
    fn logs_are_valid_and_reproducible() {
        let (d, b) = small();
        let run = |randomize| {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            generate_click_log(&d, &d.train, &b, LinTsConfig::default(), randomize, &mut rng).unwrap()
        };
        let plain = run(false);
        assert_eq!(plain.len(), 200);
        assert!(plain.records.iter().all(|r| r.swap.is_none()));
        assert_eq!(plain, run(false));
        let rand = run(true);
        assert!(rand.is_randomized());
        rand.validate().unwrap();
        for r in &plain.records {
            let mut seen: Vec<_> = r.items.clone();
            seen.dedup();
            assert_eq!(seen.len(), d.positions);
        }
    }

    #[test]
    fn trajectory_metrics_are_bounded() {
        let (d, b) = small();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let _ = sample_bias_weights(10, 1.0, 10, &mut rng).unwrap();
        let t = run_online_ltr(&d, &d.test, &b, &b, LinTsConfig::default(), &mut rng).unwrap();
        assert_eq!(t.len(), 50);
        let max_dcg = dcg_at_k(&[1.0; 10], 10);
        for p in &t {
            assert!((0.0..=1.0).contains(&p.precision));
            assert!((0.0..=max_dcg).contains(&p.dcg));
        }
    }
}
