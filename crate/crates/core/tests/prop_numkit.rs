//! Properties of the linear-algebra kernel and the random streams.

mod common;

use optlab::numkit::{cg_solve, sym_eigen, CgFlag, Matrix, RngStream};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn eigen_reconstructs_and_sorts(n in 1usize..=24, seed in any::<u64>()) {
        let a = common::symmetric(n, seed);
        let d = sym_eigen(&a).unwrap();
        let mut err = d.reconstruct();
        err.add_scaled(-1.0, &a).unwrap();
        prop_assert!(err.frobenius_norm() <= 1e-9 * a.frobenius_norm().max(1e-300));
        prop_assert!(d.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        let q = &d.eigenvectors;
        let mut gram = q.transpose().matmul(q).unwrap();
        gram.add_diag(-1.0);
        prop_assert!(gram.frobenius_norm() <= 1e-10 * n as f64);
    }

    #[test]
    fn cg_solves_well_conditioned_spd_systems(n in 1usize..=20, seed in any::<u64>()) {
        let a = common::spd(n, 1.0, seed);
        let b = common::gaussian_vec(n, &mut RngStream::new(seed ^ 1));
        let r = cg_solve(|v| a.matvec(v), &b, 1e-10, 2 * n).unwrap();
        prop_assert_eq!(r.flag, CgFlag::Converged);
        prop_assert!(r.iterations <= n + 1);
        let res: Vec<f64> = a.matvec(&r.x).iter().zip(&b).map(|(p, q)| p - q).collect();
        let bn = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!(res.iter().map(|v| v * v).sum::<f64>().sqrt() <= 1e-9 * bn);
    }

    #[test]
    fn identical_seeds_give_identical_streams(seed in any::<u64>(), id in any::<u64>()) {
        let mut a = RngStream::new(seed).derive(id);
        let mut b = RngStream::new(seed).derive(id);
        for _ in 0..64 {
            prop_assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn uniform_draws_stay_in_range(seed in any::<u64>(), lo in -1e3f64..1e3, width in 1e-6f64..1e3) {
        let mut rng = RngStream::new(seed);
        for _ in 0..256 {
            let u = rng.uniform(lo, lo + width).unwrap();
            prop_assert!(lo <= u && u < lo + width);
        }
    }

    #[test]
    fn sampling_without_replacement_is_distinct(seed in any::<u64>(), n in 1usize..200, frac in 0.0f64..=1.0) {
        let k = ((n as f64) * frac) as usize;
        let picks = RngStream::new(seed).sample_without_replacement(n, k).unwrap();
        let mut sorted = picks.clone();
        sorted.sort_unstable();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), k);
        prop_assert!(picks.iter().all(|&i| i < n));
    }
}

#[test]
fn different_seeds_are_uncorrelated() {
    let mut a = RngStream::new(1);
    let mut b = RngStream::new(2);
    let n = 10_000;
    let xs: Vec<f64> = (0..n).map(|_| a.next_f64()).collect();
    let ys: Vec<f64> = (0..n).map(|_| b.next_f64()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / n as f64, ys.iter().sum::<f64>() / n as f64);
    let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let vx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let vy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    assert!((cov / (vx * vy).sqrt()).abs() < 0.05);
}

#[test]
fn fifty_by_fifty_reconstruction() {
    let a = common::symmetric(50, 3);
    let d = sym_eigen(&a).unwrap();
    let mut err: Matrix = d.reconstruct();
    err.add_scaled(-1.0, &a).unwrap();
    assert!(err.frobenius_norm() <= 1e-9 * a.frobenius_norm());
}
