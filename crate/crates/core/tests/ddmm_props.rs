use ddmm_core::baselines::{euclidean_retrieve, train_ae_baseline, EmbeddingIndex};
use ddmm_core::ddmm::{
    dc1_distance, ddm_distance, pair_batch_loss, pair_weight, rescale, train_comparison_model,
    train_ddmm, DdmmConfig, DdmmModel, InputSpace, PairSampler, PairStrategy, RescaleMode,
    TrainConfig,
};
use ddmm_core::eval::{mean_average_precision, ApNormalizer};
use ddmm_core::ingest::TimeSeries;
use ddmm_core::nn::{weighted_mse_loss, MlpAutoencoder, DDMM_RATIOS};
use ddmm_core::rank::{RankedResult, Retriever};
use ddmm_core::segment::{build_segments, SegmentStore, VectorSet};
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_store(rng: &mut ChaCha8Rng, max_segments: usize) -> SegmentStore {
    let k = rng.random_range(1..=5);
    let m = rng.random_range(1..=3);
    let n = rng.random_range(1..=max_segments);
    let rows: Vec<Vec<f64>> = (0..n + k - 1)
        .map(|_| (0..m).map(|_| rng.random_range(0.0..1.0)).collect())
        .collect();
    build_segments(TimeSeries::from_rows(&rows, None).unwrap(), k, 1).unwrap()
}

fn random_model(store: &SegmentStore, seed: u64, mode: RescaleMode) -> DdmmModel {
    DdmmModel {
        autoencoder: MlpAutoencoder::new(store.dim(), &DDMM_RATIOS, seed).unwrap(),
        delta: 1e-6,
        rescale: mode,
        space: InputSpace::Segment,
        window: store.window(),
        sensors: store.sensors(),
        ratios: DDMM_RATIOS.to_vec(),
        normalization: None,
        seed,
    }
}

/// Double loop over every (query, candidate) pair, sorted by (distance, time).
fn oracle(
    store: &SegmentStore,
    query: usize,
    k: usize,
    dist: impl Fn(&[f64], &[f64]) -> f64,
) -> Option<Vec<(usize, f64)>> {
    let q = store.segment_vector(query).unwrap();
    let mut all = Vec::new();
    for t in store.time_indices() {
        let gap = t.abs_diff(query);
        if gap < store.window() {
            continue;
        }
        all.push((t, dist(q, store.segment_vector(t).unwrap())));
    }
    if all.len() < k {
        return None;
    }
    all.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
    all.truncate(k);
    Some(all)
}

fn as_pairs(r: &RankedResult) -> Vec<(usize, f64)> {
    r.hits.iter().map(|h| (h.time, h.distance)).collect()
}

#[test]
fn retrieval_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..100u64 {
        let store = random_store(&mut rng, 50);
        let model = random_model(&store, case, RescaleMode::Affine01);
        let index = model.index(&store).unwrap();
        let times: Vec<usize> = store.time_indices().collect();
        let query = times[rng.random_range(0..times.len())];
        let k = rng.random_range(1..=8);
        let eu_oracle = oracle(&store, query, k, |a, b| {
            a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
        });
        let ddm_oracle = oracle(&store, query, k, |a, b| ddm_distance(&model, a, b).unwrap());
        match (eu_oracle, euclidean_retrieve(&store, query, k)) {
            (Some(o), Ok(r)) => assert_eq!(as_pairs(&r), o, "case {case}"),
            (None, Err(_)) => {}
            (o, r) => panic!("case {case}: oracle {o:?} vs {r:?}"),
        }
        match (ddm_oracle, index.retrieve(query, k)) {
            (Some(o), Ok(r)) => {
                assert_eq!(r.hits.len(), o.len());
                for (h, (t, d)) in r.hits.iter().zip(&o) {
                    assert_eq!(h.time, *t, "case {case}");
                    assert!((h.distance - d).abs() <= 1e-12 * d.max(1.0));
                }
            }
            (None, Err(_)) => {}
            (o, r) => panic!("case {case}: oracle {o:?} vs {r:?}"),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn full_depth_retrieval_is_a_permutation_of_the_eligible_set(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let store = random_store(&mut rng, 40);
        let model = random_model(&store, seed, RescaleMode::Affine01);
        let index = model.index(&store).unwrap();
        let times: Vec<usize> = store.time_indices().collect();
        let query = times[rng.random_range(0..times.len())];
        let eligible: Vec<usize> = times
            .iter()
            .copied()
            .filter(|t| t.abs_diff(query) >= store.window())
            .collect();
        prop_assume!(!eligible.is_empty());
        let r = index.retrieve(query, eligible.len()).unwrap();
        let mut got: Vec<usize> = r.times().collect();
        prop_assert!(r.hits.windows(2).all(|w| w[0].distance <= w[1].distance));
        got.sort_unstable();
        prop_assert_eq!(got, eligible);
        prop_assert_eq!(index.retrieve(query, r.hits.len()).unwrap(), r);
    }

    #[test]
    fn pair_weight_is_positive_and_decreasing(a in 0.0f64..10.0, b in 0.0f64..10.0, delta in 1e-9f64..1e-2) {
        prop_assume!(a < b);
        prop_assert!(pair_weight(a, delta) > pair_weight(b, delta));
        prop_assert!(pair_weight(b, delta) > 0.0);
        prop_assert!((pair_weight(0.0, delta) * delta - 1.0).abs() < 1e-15);
    }

    #[test]
    fn pair_loss_equals_weighted_reconstruction_loss(seed in any::<u64>(), s in 1usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let store = random_store(&mut rng, 60);
        prop_assume!(store.len() >= 2);
        for mode in [RescaleMode::Affine01, RescaleMode::Raw] {
            let net = MlpAutoencoder::new(store.dim(), &DDMM_RATIOS, seed).unwrap();
            let mut sampler = PairSampler::seeded(store.len(), PairStrategy::Uniform, seed).unwrap();
            let batch = sampler.next_batch(s).unwrap();
            let mut flat = Vec::new();
            let mut weights = Vec::new();
            for (&a, &b) in batch.anchors.iter().zip(&batch.positives) {
                let d: Vec<f64> = store.vector(a).iter().zip(store.vector(b)).map(|(x, y)| x - y).collect();
                let norm2: f64 = d.iter().map(|v| v * v).sum();
                weights.push(1.0 / (norm2 + 1e-6));
                flat.extend(rescale(&d, mode).unwrap());
            }
            let x = Array2::from_shape_vec((batch.len(), store.dim()), flat).unwrap();
            let expected = weighted_mse_loss(&net, x.view(), &weights).unwrap();
            let got = pair_batch_loss(&net, &store, &batch, 1e-6, mode).unwrap();
            prop_assert!((got - expected).abs() <= 1e-12 * expected);
        }
    }
}

fn wave_store(n: usize, seed: u64) -> SegmentStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|t| {
            vec![
                0.5 + 0.4 * (t as f64 * 0.21).sin(),
                rng.random_range(0.0..1.0),
                0.5 + 0.3 * (t as f64 * 0.05).cos(),
            ]
        })
        .collect();
    let labels = (0..n).map(|t| ((t / 25) % 2) as i64).collect();
    build_segments(TimeSeries::from_rows(&rows, Some(labels)).unwrap(), 4, 1).unwrap()
}

#[test]
fn self_distance_is_constant_for_trained_models() {
    let store = wave_store(300, 1);
    let cfg = TrainConfig { epochs: 5, batch_size: 32, seed: 8, ..TrainConfig::default() };
    for mode in [RescaleMode::Affine01, RescaleMode::Raw] {
        let ddmm = DdmmConfig { rescale: mode, ..DdmmConfig::default() };
        let model = train_ddmm(&store, &cfg, &ddmm).unwrap().model;
        let d: Vec<f64> = (0..store.len())
            .map(|p| ddm_distance(&model, store.vector(p), store.vector(p)).unwrap())
            .collect();
        let (lo, hi) = d.iter().fold((f64::MAX, f64::MIN), |(l, h), v| (l.min(*v), h.max(*v)));
        assert!(hi - lo < 1e-12, "{mode:?}: {lo} .. {hi}");
    }
}

#[test]
fn zero_epochs_leave_the_initial_network() {
    let store = wave_store(80, 2);
    let cfg = TrainConfig { epochs: 0, seed: 5, ..TrainConfig::default() };
    let trained = train_ddmm(&store, &cfg, &DdmmConfig::default()).unwrap();
    assert_eq!(trained.model.autoencoder, MlpAutoencoder::new(store.dim(), &DDMM_RATIOS, 5).unwrap());
    assert!(trained.report.epochs.is_empty());
}

#[test]
fn two_repeated_states_are_separated() {
    // Two fixed row patterns alternate in blocks of 20 rows.
    let a = [0.2, 0.8, 0.4];
    let b = [0.7, 0.1, 0.9];
    let n = 400;
    let rows: Vec<Vec<f64>> = (0..n).map(|t| if (t / 20) % 2 == 0 { a.to_vec() } else { b.to_vec() }).collect();
    let labels: Vec<i64> = (0..n).map(|t| ((t / 20) % 2) as i64).collect();
    let k = 3;
    let store = build_segments(TimeSeries::from_rows(&rows, Some(labels)).unwrap(), k, 1).unwrap();
    let cfg = TrainConfig { epochs: 30, batch_size: 32, seed: 3, ..TrainConfig::default() };
    let model = train_ddmm(&store, &cfg, &DdmmConfig::default()).unwrap().model;
    let index = model.index(&store).unwrap();
    // Queries whose whole window sits inside one block.
    let queries: Vec<usize> = store.time_indices().filter(|t| t % 20 >= k - 1).collect();
    let results: Vec<RankedResult> = queries.iter().map(|&q| index.retrieve(q, 1).unwrap()).collect();
    let map1 = mean_average_precision(&results, &store, 1, ApNormalizer::RelevantInTopK).unwrap();
    assert_eq!(map1, 1.0);
}

#[test]
fn comparison_distance_is_symmetric_and_zero_on_self() {
    let store = wave_store(120, 4);
    let cfg = TrainConfig { epochs: 2, batch_size: 16, seed: 1, ..TrainConfig::default() };
    let model = train_comparison_model(&store, &cfg, &DdmmConfig::default()).unwrap().model;
    for p in (0..store.len()).step_by(7) {
        let q = store.vector(p);
        let w = store.vector(store.len() - 1 - p);
        assert_eq!(dc1_distance(&model, q, q).unwrap(), 0.0);
        assert_eq!(dc1_distance(&model, q, w).unwrap(), dc1_distance(&model, w, q).unwrap());
    }
}

#[test]
fn embedding_distance_is_a_pseudometric() {
    let store = wave_store(120, 6);
    let cfg = TrainConfig { epochs: 2, batch_size: 16, seed: 2, ..TrainConfig::default() };
    let embedder = train_ae_baseline(&store, &cfg).unwrap().model;
    let idx = EmbeddingIndex::new(&embedder, &store).unwrap();
    let e = idx.embeddings();
    let dist = |i: usize, j: usize| -> f64 {
        e.vector(i).iter().zip(e.vector(j)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..200 {
        let (i, j, l) = (
            rng.random_range(0..e.len()),
            rng.random_range(0..e.len()),
            rng.random_range(0..e.len()),
        );
        assert_eq!(dist(i, i), 0.0);
        assert_eq!(dist(i, j), dist(j, i));
        assert!(dist(i, l) <= dist(i, j) + dist(j, l) + 1e-12);
    }
    for q in [10usize, 60, 100] {
        let r = idx.retrieve(q, 5).unwrap();
        assert!(r.times().all(|t| t.abs_diff(q) >= store.window()));
    }
}
