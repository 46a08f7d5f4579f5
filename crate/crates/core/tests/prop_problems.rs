//! Properties of the objectives: exact unbiasedness, convexity, symmetry.

mod common;

use optlab::numkit::RngStream;
use optlab::problems::{logistic_fixture, poisson_surrogate_fixture, Objective};
use optlab::sampleweight::residual_point_weights;
use proptest::prelude::*;

fn mean_of_samples(obj: &dyn Objective, theta: &[f64]) -> Vec<f64> {
    let m = obj.num_samples();
    let mut acc = vec![0.0; obj.dim()];
    for i in 0..m {
        for (a, g) in acc.iter_mut().zip(obj.sample_gradient(i, theta)) {
            *a += g;
        }
    }
    acc.iter().map(|a| a / m as f64).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn sample_gradients_average_to_the_full_gradient(seed in any::<u64>()) {
        let (mlp, theta) = common::random_mlp(&[2, 4, 1], 12, seed);
        let full = mlp.gradient(&theta);
        let scale = full.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        prop_assert!(common::max_abs_diff(&mean_of_samples(&mlp, &theta), &full) <= 1e-12 * scale);
        let v = mlp.value(&theta);
        let avg = (0..12).map(|i| mlp.sample_value(i, &theta)).sum::<f64>() / 12.0;
        prop_assert!((v - avg).abs() <= 1e-12 * v.abs().max(1.0));
    }

    #[test]
    fn logistic_loss_is_convex_along_segments(seed in any::<u64>(), t in 0.0f64..=1.0) {
        let obj = logistic_fixture(0);
        let mut rng = RngStream::new(seed);
        let a: Vec<f64> = (0..3).map(|_| 2.0 * rng.std_normal()).collect();
        let b: Vec<f64> = (0..3).map(|_| 2.0 * rng.std_normal()).collect();
        let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| t * x + (1.0 - t) * y).collect();
        prop_assert!(obj.value(&mid) <= t * obj.value(&a) + (1.0 - t) * obj.value(&b) + 1e-12);
    }

    #[test]
    fn pinn_value_ignores_point_order(seed in any::<u64>(), n in 1usize..10) {
        let mut rng = RngStream::new(seed);
        let points: Vec<f64> = (0..n).map(|_| rng.uniform(0.0, 1.0).unwrap()).collect();
        let mut shuffled = points.clone();
        rng.shuffle(&mut shuffled);
        let theta = [rng.std_normal(), rng.std_normal()];
        let a = poisson_surrogate_fixture(&points).value(&theta);
        let b = poisson_surrogate_fixture(&shuffled).value(&theta);
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn point_weights_average_to_one(r in prop::collection::vec(-5.0f64..5.0, 1..40), beta in 0.1f64..3.0) {
        let xi = residual_point_weights(&r, beta).unwrap();
        prop_assert!(xi.iter().all(|x| *x >= 0.0));
        let mean = xi.iter().sum::<f64>() / xi.len() as f64;
        prop_assert!((mean - 1.0).abs() <= 1e-12);
    }
}
