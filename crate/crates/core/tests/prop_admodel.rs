//! Properties of the network model and its derivative propagation.

mod common;

use optlab::admodel::{forward, forward_dual, input_jet, param_gradient, MlpSpec};
use optlab::numkit::RngStream;
use proptest::prelude::*;

fn widths() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1usize..=5, 2..=4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn parameter_count_matches_layer_sizes(w in widths()) {
        let spec = MlpSpec::tanh(&w).unwrap();
        let expected: usize = w.windows(2).map(|p| p[1] * p[0] + p[1]).sum();
        prop_assert_eq!(spec.num_params(), expected);
        prop_assert_eq!(spec.init_xavier(&mut RngStream::new(0)).len(), expected);
    }

    #[test]
    fn jet_first_derivative_equals_dual_numbers(w in widths(), seed in any::<u64>()) {
        let spec = MlpSpec::tanh(&w).unwrap();
        let mut rng = RngStream::new(seed);
        let theta = spec.init_xavier(&mut rng);
        let x = common::gaussian_vec(spec.d_in(), &mut rng);
        let coord = rng.index(spec.d_in());
        let jets = input_jet(&spec, &theta, &x, coord).unwrap();
        let duals = forward_dual(&spec, &theta, &x, coord).unwrap();
        let plain = forward(&spec, &theta, &x).unwrap();
        for ((j, d), y) in jets.iter().zip(&duals).zip(&plain) {
            prop_assert!((j.d1 - d.d).abs() <= 1e-14 * (1.0 + d.d.abs()));
            prop_assert!((j.value - y).abs() <= 1e-14 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn parameter_gradient_is_linear_in_upstream(w in widths(), seed in any::<u64>(), a in -3.0f64..3.0) {
        let spec = MlpSpec::tanh(&w).unwrap();
        let mut rng = RngStream::new(seed);
        let theta = spec.init_xavier(&mut rng);
        let x = common::gaussian_vec(spec.d_in(), &mut rng);
        let u1 = common::gaussian_vec(spec.d_out(), &mut rng);
        let u2 = common::gaussian_vec(spec.d_out(), &mut rng);
        let mixed: Vec<f64> = u1.iter().zip(&u2).map(|(p, q)| a * p + q).collect();
        let lhs = param_gradient(&spec, &theta, &x, &mixed).unwrap();
        let g1 = param_gradient(&spec, &theta, &x, &u1).unwrap();
        let g2 = param_gradient(&spec, &theta, &x, &u2).unwrap();
        let rhs: Vec<f64> = g1.iter().zip(&g2).map(|(p, q)| a * p + q).collect();
        let scale = rhs.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        prop_assert!(common::max_abs_diff(&lhs, &rhs) <= 1e-12 * scale);
    }
}
