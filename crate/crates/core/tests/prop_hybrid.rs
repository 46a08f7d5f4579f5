//! Properties of the plateau switch and of two-stage traces.

mod common;

use optlab::firstorder::{BatchSchedule, Method, Phase, StepSchedule};
use optlab::hybrid::{hybrid_run, plateau_detector, HybridConfig, SwitchPolicy};
use optlab::secondorder::LbfgsConfig;
use proptest::prelude::*;

/// The switching rule evaluated from scratch at every iteration.
fn naive(norms: &[f64], p: &SwitchPolicy) -> Option<usize> {
    let mean = |k: usize| {
        let lo = (k + 1).saturating_sub(p.window);
        norms[lo..=k].iter().sum::<f64>() / (k + 1 - lo) as f64
    };
    let mut streak = 0;
    for k in 0..norms.len() {
        if k < p.min_iters {
            continue;
        }
        if k < p.min_iters + p.window || (k - p.min_iters) % p.window != 0 {
            continue;
        }
        let (now, before) = (mean(k), mean(k - p.window));
        let rel = if before == 0.0 { if now == 0.0 { 0.0 } else { f64::INFINITY } } else { (now - before).abs() / before };
        streak = if rel < p.rel_threshold { streak + 1 } else { 0 };
        if streak >= p.patience {
            return Some(k);
        }
    }
    None
}

fn policy() -> impl Strategy<Value = SwitchPolicy> {
    (1usize..8, 0.001f64..0.5, 1usize..4, 0usize..20).prop_map(|(window, rel_threshold, patience, min_iters)| {
        SwitchPolicy { window, rel_threshold, patience, min_iters, max_adam_iters: usize::MAX }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn detector_matches_the_rule_from_scratch(p in policy(), tail in prop::collection::vec(0.5f64..1.5, 0..120), prefix in 0usize..30) {
        let mut norms: Vec<f64> = (0..prefix).map(|i| 100.0 / (1.0 + i as f64)).collect();
        norms.extend(tail);
        prop_assert_eq!(plateau_detector(&norms, &p), naive(&norms, &p));
    }

    #[test]
    fn constant_norms_switch_after_patience_windows(p in policy(), level in 1e-6f64..1e6) {
        let norms = vec![level; p.min_iters + p.window * (p.patience + 2)];
        prop_assert_eq!(plateau_detector(&norms, &p), Some(p.min_iters + p.window * p.patience));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn phases_partition_the_trace(seed in any::<u64>(), min_iters in 5usize..40) {
        let (obj, theta0) = common::random_mlp(&[1, 4, 1], 8, seed);
        let policy = SwitchPolicy { window: 5, rel_threshold: 0.5, patience: 1, min_iters, max_adam_iters: 60 };
        let cfg = HybridConfig {
            method: Method::adam(),
            step: StepSchedule::Constant { alpha: 1e-2 },
            batch: BatchSchedule::Full,
            lbfgs: LbfgsConfig::new(100),
            policy,
            budget: 100,
            seed,
            record_wall_time: false,
        };
        let t = hybrid_run(&obj, &theta0, &cfg).unwrap();
        let switch = t.switch_at.unwrap();
        prop_assert!(switch <= 60);
        for r in &t.records {
            let want = if r.k < switch { Phase::Adam } else { Phase::Lbfgs };
            prop_assert_eq!(r.phase, Some(want), "record {}", r.k);
        }
        prop_assert!(t.records.windows(2).all(|w| w[0].k < w[1].k));
    }
}
