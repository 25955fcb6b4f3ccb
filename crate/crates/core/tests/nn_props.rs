use ddmm_core::nn::{
    paired_embedding_gradient, paired_embedding_loss, train_step, weighted_mse_gradient,
    weighted_mse_loss, AdamConfig, AdamState, Dense, Gradients, MlpAutoencoder,
};
use ndarray::{Array2, ArrayView2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-4;

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

fn perturbed(model: &MlpAutoencoder, layer: usize, idx: usize, bias: bool, h: f64) -> MlpAutoencoder {
    let mut layers: Vec<Dense> = model.layers().to_vec();
    let l = &mut layers[layer];
    if bias {
        l.bias[idx] += h;
    } else {
        let cols = l.weights.ncols();
        l.weights[(idx / cols, idx % cols)] += h;
    }
    MlpAutoencoder::from_layers(layers).unwrap()
}

/// Largest relative error between `grads` and central differences of `loss`.
fn max_fd_error(
    model: &MlpAutoencoder,
    grads: &Gradients,
    loss: impl Fn(&MlpAutoencoder) -> f64,
) -> f64 {
    let mut worst = 0.0f64;
    for (li, (layer, g)) in model.layers().iter().zip(&grads.layers).enumerate() {
        let sizes = [(false, layer.weights.len()), (true, layer.bias.len())];
        for (bias, n) in sizes {
            for idx in 0..n {
                let up = loss(&perturbed(model, li, idx, bias, STEP));
                let down = loss(&perturbed(model, li, idx, bias, -STEP));
                let numeric = (up - down) / (2.0 * STEP);
                let analytic = if bias {
                    g.bias[idx]
                } else {
                    g.weights.as_slice().unwrap()[idx]
                };
                worst = worst.max(rel_err(analytic, numeric));
            }
        }
    }
    worst
}

fn random_batch(rng: &mut ChaCha8Rng, rows: usize, dim: usize, lo: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, dim), |_| rng.random_range(lo..1.0))
}

fn random_weights(rng: &mut ChaCha8Rng, rows: usize) -> Vec<f64> {
    (0..rows).map(|_| 10f64.powf(rng.random_range(-3.0..3.0))).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn reconstruction_gradient_matches_finite_differences(seed in any::<u64>(), dim in 4usize..12, rows in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = MlpAutoencoder::new(dim, &[1.0, 0.75, 0.5, 0.75, 1.0], seed).unwrap();
        let x = random_batch(&mut rng, rows, dim, -1.0);
        let w = random_weights(&mut rng, rows);
        let (_, grads) = weighted_mse_gradient(&model, x.view(), &w).unwrap();
        let err = max_fd_error(&model, &grads, |m| weighted_mse_loss(m, x.view(), &w).unwrap());
        prop_assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn paired_gradient_matches_finite_differences(seed in any::<u64>(), dim in 4usize..10, rows in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = MlpAutoencoder::new(dim, &[1.0, 0.5, 1.0], seed).unwrap();
        let a = random_batch(&mut rng, rows, dim, 0.0);
        let b = random_batch(&mut rng, rows, dim, 0.0);
        let w = random_weights(&mut rng, rows);
        let (_, grads) = paired_embedding_gradient(&model, a.view(), b.view(), &w).unwrap();
        let err = max_fd_error(&model, &grads, |m| {
            paired_embedding_loss(m, a.view(), b.view(), &w).unwrap()
        });
        prop_assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn loss_ignores_uniform_weight_scaling(seed in any::<u64>(), dim in 2usize..16, rows in 1usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = MlpAutoencoder::new(dim, &[1.0, 0.5, 1.0], seed).unwrap();
        let x = random_batch(&mut rng, rows, dim, 0.0);
        let w = random_weights(&mut rng, rows);
        let base = weighted_mse_loss(&model, x.view(), &w).unwrap();
        for c in [1e-6, 1.0, 1e6] {
            let scaled: Vec<f64> = w.iter().map(|v| v * c).collect();
            let l = weighted_mse_loss(&model, x.view(), &scaled).unwrap();
            prop_assert!((l - base).abs() <= 1e-12 * base.abs());
        }
    }
}

fn train_a_bit(seed: u64, x: ArrayView2<f64>, steps: usize, lr: f64) -> (MlpAutoencoder, Vec<f64>) {
    let mut model = MlpAutoencoder::new(x.ncols(), &[1.0, 0.75, 0.5, 0.75, 1.0], seed).unwrap();
    let mut adam = AdamState::new(&model, AdamConfig { lr, ..AdamConfig::default() });
    let w = vec![1.0; x.nrows()];
    let losses = (0..steps)
        .map(|_| train_step(&mut model, &mut adam, x, &w).unwrap())
        .collect();
    (model, losses)
}

#[test]
fn training_is_bit_reproducible() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random_batch(&mut rng, 16, 8, 0.0);
    let (a, la) = train_a_bit(9, x.view(), 20, 1e-3);
    let (b, lb) = train_a_bit(9, x.view(), 20, 1e-3);
    assert_eq!(a, b);
    assert_eq!(
        la.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        lb.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
}

#[test]
fn small_steps_do_not_increase_batch_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = random_batch(&mut rng, 32, 10, 0.0);
    let seeds = 0..8u64;
    let n = seeds.clone().count() as f64;
    let mut mean = vec![0.0; 10];
    for seed in seeds {
        let (_, losses) = train_a_bit(seed, x.view(), 10, 1e-4);
        mean.iter_mut().zip(&losses).for_each(|(m, l)| *m += l / n);
    }
    assert!(mean.windows(2).all(|w| w[1] <= w[0]), "{mean:?}");
}
