use embedlens_core::projection::{joint_affinities, tsne, TsneConfig};
use ndarray::{Array2, Axis};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn short_run(seed: u64) -> TsneConfig {
    TsneConfig {
        perplexity: 5.0,
        iterations: 120,
        exaggeration_iterations: 50,
        snapshot_stride: 40,
        seed,
        ..TsneConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn joint_affinities_are_a_symmetric_distribution(n in 3usize..40, d in 1usize..6, seed: u64, perplexity in 2.0f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, d), |_| rng.random_range(-3.0..3.0));
        let p = joint_affinities(x.view(), perplexity.min((n as f64 - 1.0) / 3.0).max(1.0));
        prop_assert!((p.sum() - 1.0).abs() < 1e-9);
        for i in 0..n {
            prop_assert_eq!(p[[i, i]], 0.0);
            for j in 0..n {
                prop_assert!(p[[i, j]] >= 0.0);
                prop_assert!((p[[i, j]] - p[[j, i]]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn permuting_rows_permutes_the_layout(n in 4usize..30, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, 3), |_| rng.random_range(-5.0..5.0));
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let permuted = x.select(Axis(0), &order);
        let cfg = short_run(seed);
        let a = tsne(x.view(), &cfg, |_| true).unwrap();
        let b = tsne(permuted.view(), &cfg, |_| true).unwrap();
        for (new, &old) in order.iter().enumerate() {
            prop_assert_eq!(b.coords[new], a.coords[old]);
        }
        prop_assert_eq!(a.kl, b.kl);
    }
}

#[test]
fn duplicate_rows_land_together() {
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Array2::from_shape_fn((40, 4), |_| rng.random_range(-5.0..5.0));
        let copy = x.row(3).to_owned();
        x.row_mut(17).assign(&copy);
        let out = tsne(x.view(), &TsneConfig { seed, ..TsneConfig::default() }, |_| true).unwrap();
        let dist = |i: usize, j: usize| {
            let (a, b) = (out.coords[i], out.coords[j]);
            ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
        };
        let mut all: Vec<f64> = (0..40).flat_map(|i| (i + 1..40).map(move |j| (i, j))).map(|(i, j)| dist(i, j)).collect();
        all.sort_by(f64::total_cmp);
        let fifth = all[all.len() / 20];
        assert!(dist(3, 17) < fifth, "seed {seed}: {} vs {fifth}", dist(3, 17));
    }
}
