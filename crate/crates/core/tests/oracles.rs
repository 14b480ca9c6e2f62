//! Estimators and formulas checked against independent oracles: brute-force
//! enumeration, hand counts and Monte-Carlo simulation.

use cpbm_core::click_model::{
    simulate_clicks_from_probs, ClickLog, ClickRecord, ExaminationModel, GroundTruthBias,
};
use cpbm_core::dataset::apply_swap_randomization;
use cpbm_core::estimators::{
    ctr_estimate, e_step_marginals, semi_contextual_fit, swap_estimate, BaseEstimator, EmConfig, PartitionKey,
};
use cpbm_core::ranker::{LinTsConfig, LinTsState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Posterior marginals by summing the joint of `(E, R)` given the click.
fn enumerated_marginals(c: u8, f: f64, g: f64) -> (f64, f64) {
    let mut joint = [[0.0; 2]; 2];
    for e in 0..2 {
        for r in 0..2 {
            let pe = if e == 1 { f } else { 1.0 - f };
            let pr = if r == 1 { g } else { 1.0 - g };
            let click = u8::from(e == 1 && r == 1);
            joint[e][r] = if click == c { pe * pr } else { 0.0 };
        }
    }
    let z: f64 = joint.iter().flatten().sum();
    ((joint[1][0] + joint[1][1]) / z, (joint[0][1] + joint[1][1]) / z)
}

#[test]
fn marginals_match_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..1000 {
        let f = rng.random_range(0.01..0.99);
        let g = rng.random_range(0.01..0.99);
        for c in 0..2 {
            let (pe, pr) = e_step_marginals(c, f, g);
            let (oe, or) = enumerated_marginals(c, f, g);
            assert!((pe - oe).abs() < 1e-12 && (pr - or).abs() < 1e-12);
        }
    }
}

#[test]
fn examination_matches_direct_power() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let raw: Vec<f64> = (0..10).map(|_| rng.random_range(-1.5..1.5)).collect();
        let b = GroundTruthBias::from_raw(raw, 1.5, 10);
        let q: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
        let k = rng.random_range(1..=10usize);
        let s: f64 = b.w.iter().zip(&q).map(|(w, x)| w * x).sum();
        let expected = (k as f64).powf(-(s + 1.0).max(0.0));
        assert!((b.examination(&q, k - 1) - expected).abs() < 1e-12);
    }
}

fn log_from_counts(clicks_per_position: &[usize], impressions: usize) -> ClickLog {
    let k = clicks_per_position.len();
    let mut log = ClickLog::new(k, 1, 1);
    for i in 0..impressions {
        log.push(ClickRecord {
            query_id: i as u64,
            context: vec![0.0],
            items: vec![vec![0.0]; k],
            clicks: clicks_per_position.iter().map(|&c| u8::from(i < c)).collect(),
            swap: None,
        })
        .unwrap();
    }
    log
}

#[test]
fn ctr_hand_count() {
    let log = log_from_counts(&[50, 25, 10], 100);
    let c = ctr_estimate(&log).unwrap().curve(&[0.0]);
    assert_eq!(c, vec![1.0, 0.5, 0.2]);
    let flat = ctr_estimate(&log_from_counts(&[7, 7, 7], 20)).unwrap();
    assert_eq!(flat.curve(&[0.0]), vec![1.0; 3]);
    assert!(ctr_estimate(&log_from_counts(&[0, 3, 1], 10)).is_err());
}

/// Randomized impressions of a ranker that orders items by relevance, under
/// a context-free curve that depends on the device indicator in `q`.
fn swap_log(curves: &[Vec<f64>], device_share: f64, n: usize, seed: u64) -> ClickLog {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = curves[0].len();
    let mut log = ClickLog::new(k, 2, 1);
    for i in 0..n {
        let dev = usize::from(rng.random_bool(device_share));
        let mut rel: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..0.9)).collect();
        rel.sort_by(|a, b| b.total_cmp(a));
        let ann = apply_swap_randomization(&mut rel, &mut rng);
        let clicks = simulate_clicks_from_probs(&curves[dev], &rel, &mut rng).unwrap();
        let mut context = vec![0.0; 2];
        context[dev] = 1.0;
        log.push(ClickRecord {
            query_id: i as u64,
            context,
            items: rel.iter().map(|r| vec![*r]).collect(),
            clicks,
            swap: Some(ann),
        })
        .unwrap();
    }
    log
}

#[test]
fn swap_estimator_is_consistent() {
    let truth = vec![1.0, 0.5, 0.25];
    let log = swap_log(&[truth.clone(), truth.clone()], 0.5, 100_000, 2);
    let est = swap_estimate(&log).unwrap().curve(&[1.0, 0.0]);
    let max_err = est
        .iter()
        .zip(&truth)
        .map(|(e, t)| (e - t).abs())
        .fold(0.0, f64::max);
    assert!(max_err < 0.05, "{est:?}");
}

#[test]
fn semi_contextual_swap_recovers_each_device() {
    let curves = vec![vec![1.0, 0.6, 0.4, 0.3], vec![1.0, 0.3, 0.1, 0.05]];
    let log = swap_log(&curves, 0.3, 60_000, 3);
    let key = PartitionKey::OneHot { start: 0, len: 2 };
    let p = semi_contextual_fit(&log, &key, BaseEstimator::Swap, &EmConfig::default()).unwrap();
    for (dev, truth) in curves.iter().enumerate() {
        let mut q = vec![0.0; 2];
        q[dev] = 1.0;
        let est = p.curve(&q);
        for (e, t) in est.iter().zip(truth) {
            assert!((e - t).abs() < 0.05, "device {dev}: {est:?}");
        }
    }
}

#[test]
fn ips_weighted_posterior_mean_is_consistent() {
    // Relevance is linear in [q; d] and examination follows a contextual curve;
    // the propensity-weighted ridge fit should recover the relevance weights.
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (dq, dd, k) = (3, 3, 5);
    let theta: Vec<f64> = (0..dq + dd).map(|_| rng.random_range(0.0..1.0 / 6.0)).collect();
    let bias = GroundTruthBias::from_raw(vec![0.9, -0.4, -0.5], 1.0, k);
    let mut state = LinTsState::new(dq + dd, LinTsConfig::default()).unwrap();
    let n = 100_000 / k;
    for _ in 0..n {
        let q: Vec<f64> = (0..dq).map(|_| rng.random()).collect();
        let items: Vec<Vec<f64>> = (0..k).map(|_| (0..dd).map(|_| rng.random()).collect()).collect();
        let rel: Vec<f64> = items
            .iter()
            .map(|d| q.iter().chain(d).zip(&theta).map(|(x, t)| x * t).sum())
            .collect();
        let clicks = simulate_clicks_from_probs(&bias.curve(&q), &rel, &mut rng).unwrap();
        let refs: Vec<&[f64]> = items.iter().map(Vec::as_slice).collect();
        state.update(&q, &refs, &clicks, &bias).unwrap();
    }
    let mean = state.posterior_mean().unwrap();
    let dot: f64 = mean.iter().zip(&theta).map(|(a, b)| a * b).sum();
    let cos = dot / (mean.norm() * theta.iter().map(|t| t * t).sum::<f64>().sqrt());
    assert!(cos > 0.95, "cosine {cos}");
}
