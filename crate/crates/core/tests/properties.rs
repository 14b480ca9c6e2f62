//! Invariants of the click model, estimators, metrics and ranker.

use cpbm_core::click_model::{
    sample_bias_weights, true_examination_prob, ClickLog, ClickRecord, ExaminationModel, FlatBias,
    GroundTruthBias,
};
use cpbm_core::dataset::apply_swap_randomization;
use cpbm_core::estimators::{ctr_estimate, e_step_marginals, swap_estimate, BiasPredictor};
use cpbm_core::metrics::{dcg_at_k, precision_at_k, relative_error, Normalization};
use cpbm_core::nn::Mlp;
use cpbm_core::ranker::{LinTsConfig, LinTsState};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn context(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0..3.0f64, dim)
}

fn random_log(seed: u64, n: usize, k: usize, randomized: bool) -> ClickLog {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut log = ClickLog::new(k, 2, 1);
    for i in 0..n {
        let mut items: Vec<Vec<f64>> = (0..k).map(|j| vec![j as f64]).collect();
        let swap = randomized.then(|| apply_swap_randomization(&mut items, &mut rng));
        let mut clicks: Vec<u8> = (0..k).map(|_| u8::from(rng.random_bool(0.4))).collect();
        clicks[0] = 1;
        log.push(ClickRecord {
            query_id: i as u64,
            context: vec![rng.random(), rng.random()],
            items,
            clicks,
            swap,
        })
        .unwrap();
    }
    log
}

proptest! {
    #[test]
    fn bias_weights_are_centred_and_bounded(seed in any::<u64>(), dim in 1usize..20, eta in 0.0..3.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = sample_bias_weights(dim, eta, 10, &mut rng).unwrap();
        prop_assert!(b.w.iter().sum::<f64>().abs() < 1e-12);
        prop_assert!(b.raw.iter().all(|x| x.abs() <= eta));
    }

    #[test]
    fn examination_is_a_probability_with_unit_top(seed in any::<u64>(), q in context(6), eta in 0.0..3.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = sample_bias_weights(6, eta, 10, &mut rng).unwrap();
        prop_assert_eq!(true_examination_prob(&b, &q, 0), 1.0);
        let c = b.curve(&q);
        prop_assert!(c.iter().all(|p| *p > 0.0 && *p <= 1.0));
        prop_assert!(c.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn no_click_marginals_match_the_closed_forms(f in 1e-6..(1.0 - 1e-6f64), g in 1e-6..(1.0 - 1e-6f64)) {
        let (pe, pr) = e_step_marginals(0, f, g);
        prop_assert!((pe - f * (1.0 - g) / (1.0 - f * g)).abs() < 1e-12);
        prop_assert!((pr - (1.0 - f) * g / (1.0 - f * g)).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&pe) && (0.0..=1.0).contains(&pr));
    }

    #[test]
    fn swaps_are_valid_local_permutations(seed in any::<u64>(), k in 1usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ranking: Vec<usize> = (0..k).collect();
        let ann = apply_swap_randomization(&mut ranking, &mut rng);
        prop_assert!(ann.validate(k).is_ok());
        for (pos, &item) in ranking.iter().enumerate() {
            prop_assert!(item.abs_diff(pos) <= 1);
        }
        let mut sorted = ranking.clone();
        sorted.sort_unstable();
        prop_assert_eq!(sorted, (0..k).collect::<Vec<_>>());
    }

    #[test]
    fn constant_estimators_ignore_context(seed in any::<u64>(), q in context(2)) {
        let log = random_log(seed, 60, 4, true);
        for p in [ctr_estimate(&log).unwrap(), swap_estimate(&log).unwrap()] {
            prop_assert!(!p.is_contextual());
            let c = p.curve(&q);
            prop_assert_eq!(&c, &p.curve(&[0.0, 0.0]));
            prop_assert!(c.iter().all(|v| *v > 0.0 && *v <= 1.0));
        }
    }

    #[test]
    fn contextual_predictions_stay_in_unit_interval(seed in any::<u64>(), q in context(3)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = Mlp::init(3, 4, 5, &mut rng);
        m.params_mut().iter_mut().for_each(|p| *p *= 50.0);
        let c = BiasPredictor::Contextual(m).curve(&q);
        prop_assert!(c.iter().all(|v| *v > 0.0 && *v <= 1.0));
    }

    #[test]
    fn relative_error_is_nonnegative_and_zero_at_truth(seed in any::<u64>(), q in context(4)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = sample_bias_weights(4, 1.0, 6, &mut rng).unwrap();
        let ctx = vec![q];
        prop_assert!(relative_error(&b, &b, &ctx, Normalization::FirstPosition).unwrap().abs() < 1e-12);
        let flat = FlatBias { positions: 6 };
        prop_assert!(relative_error(&flat, &b, &ctx, Normalization::Raw).unwrap() >= 0.0);
    }

    #[test]
    fn metrics_are_bounded(rel in prop::collection::vec(0.0..=1.0f64, 0..15), k in 1usize..12) {
        let dcg = dcg_at_k(&rel, k);
        prop_assert!(dcg >= 0.0 && dcg <= dcg_at_k(&vec![1.0; k], k) + 1e-12);
        let p = precision_at_k(&rel, k);
        prop_assert!((0.0..=1.0).contains(&p));
    }

    #[test]
    fn ranker_state_stays_positive_definite(seed in any::<u64>(), lambda in 0.1..5.0f64, n in 1usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = LinTsConfig { lambda, noise: 1.0 };
        let mut s = LinTsState::new(4, cfg).unwrap();
        let bias = GroundTruthBias::from_raw(vec![0.5, -0.5], 1.0, 3);
        for _ in 0..n {
            let q: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
            let items: Vec<Vec<f64>> = (0..3).map(|_| (0..2).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
            let refs: Vec<&[f64]> = items.iter().map(Vec::as_slice).collect();
            let clicks: Vec<u8> = (0..3).map(|_| u8::from(rng.random::<bool>())).collect();
            s.update(&q, &refs, &clicks, &bias).unwrap();
        }
        prop_assert!(s.a.clone().cholesky().is_some());
        prop_assert_eq!(&s.a, &s.a.transpose());
        let min = SymmetricEigen::new(s.a.clone()).eigenvalues.min();
        prop_assert!(min >= lambda - 1e-9, "min eigenvalue {min}");
    }

    #[test]
    fn flat_updates_equal_plain_ridge(seed in any::<u64>(), n in 1usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = LinTsState::new(3, LinTsConfig::default()).unwrap();
        let mut a = DMatrix::<f64>::identity(3, 3);
        let mut b = DVector::<f64>::zeros(3);
        for _ in 0..n {
            let q = [rng.random_range(-1.0..1.0)];
            let items: Vec<[f64; 2]> = (0..2).map(|_| [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]).collect();
            let clicks: Vec<u8> = (0..2).map(|_| u8::from(rng.random::<bool>())).collect();
            let refs: Vec<&[f64]> = items.iter().map(|d| d.as_slice()).collect();
            s.update(&q, &refs, &clicks, &FlatBias { positions: 2 }).unwrap();
            for (d, &c) in items.iter().zip(&clicks) {
                let x = DVector::from_vec(vec![q[0], d[0], d[1]]);
                a += &x * x.transpose();
                b += &x * f64::from(c);
            }
        }
        prop_assert_eq!(&s.a, &a);
        prop_assert_eq!(&s.b, &b);
    }

    #[test]
    fn rankings_are_distinct_candidates(seed in any::<u64>(), n in 5usize..20, k in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = LinTsState::new(3, LinTsConfig::default()).unwrap();
        let items: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random(), rng.random()]).collect();
        let candidates: Vec<usize> = (0..n).filter(|i| i % 2 == 0 || *i < k).collect();
        let r = s.rank(&[0.5], &items, &candidates, k, &mut rng).unwrap();
        prop_assert_eq!(r.len(), k);
        let mut u = r.clone();
        u.sort_unstable();
        u.dedup();
        prop_assert_eq!(u.len(), k);
        prop_assert!(r.iter().all(|i| candidates.contains(i)));
    }
}
