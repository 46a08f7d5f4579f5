//! Acceptance criteria, one test each. Every test writes a single
//! `criterion N: PASS|FAIL ...` line straight to stderr so the verdicts show
//! up even when libtest captures ordinary output.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use optlab::admodel::{gradcheck, MlpSpec};
use optlab::harness::{
    reproduce, verify_strongly_convex_bound, Example, Manifest, SyntheticProblem, Theorem, TheoryReport,
};
use optlab::kerneldx::{empirical_ntk, preconditioned_ntk, Preconditioner};
use optlab::numkit::{Matrix, RngStream};
use optlab::problems::{
    poisson_surrogate_fixture, CollocationSet, Dataset, FixtureSet, LeastSquaresObjective, Objective,
    QuadraticObjective, TermGroup,
};
use optlab::sampleweight::{
    bilevel_hypergradient, importance_weighted_risk, largest_remainder_counts, stratified_batch, update_density,
    weyl_check, WeightedSum,
};
use optlab::secondorder::{lbfgs_run, LbfgsConfig, LbfgsMemory};

fn verdict(n: u32, pass: bool, detail: impl AsRef<str>) {
    let line = format!("criterion {n:>2}: {} {}\n", if pass { "PASS" } else { "FAIL" }, detail.as_ref());
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn conclude(n: u32, pass: bool, detail: String) {
    verdict(n, pass, &detail);
    assert!(pass, "criterion {n}: {detail}");
}

fn summarize_checks<'a>(checks: impl IntoIterator<Item = &'a optlab::harness::Check>) -> (bool, String) {
    let mut pass = true;
    let mut parts = Vec::new();
    for c in checks {
        pass &= c.pass;
        parts.push(format!("{}{} = {:.3e}", if c.pass { "" } else { "!" }, c.name, c.empirical));
    }
    (pass, parts.join("; "))
}

fn theory(n: u32, report: &TheoryReport, extra: &str, elapsed: Duration, limit: Option<Duration>) {
    let (mut pass, mut detail) = summarize_checks(&report.checks);
    if report.inconclusive {
        pass = false;
        detail.push_str("; inconclusive");
    }
    if let Some(limit) = limit {
        pass &= elapsed < limit;
    }
    conclude(n, pass, format!("[{}] {detail}{extra} ({:.1} s)", report.theorem, elapsed.as_secs_f64()));
}

/// Each example is reproduced once per test process and shared between the
/// criterion that checks it and the determinism check.
struct Reproduced {
    _dir: tempfile::TempDir,
    path: PathBuf,
    manifest: Manifest,
    elapsed: Duration,
}

fn reproduced(example: Example) -> &'static Reproduced {
    static CELLS: [OnceLock<Reproduced>; 6] = [const { OnceLock::new() }; 6];
    let slot = match example {
        Example::SpectralBias => 0,
        Example::KernelConditioning => 1,
        Example::BatchVariance => 2,
        Example::OptimizerComparison => 3,
        Example::HybridSwitch => 4,
        Example::PoissonSampling => 5,
    };
    CELLS[slot].get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let start = Instant::now();
        let manifest = reproduce(example, 0, dir.path()).unwrap();
        Reproduced { path: dir.path().to_path_buf(), _dir: dir, manifest, elapsed: start.elapsed() }
    })
}

fn example(n: u32, example: Example, limit: Option<Duration>, extra: impl FnOnce(&Reproduced) -> (bool, String)) {
    let r = reproduced(example);
    let (mut pass, mut detail) = summarize_checks(&r.manifest.checks);
    pass &= !r.manifest.partial;
    if let Some(limit) = limit {
        pass &= r.elapsed < limit;
    }
    let (ok, more) = extra(r);
    pass &= ok;
    if !more.is_empty() {
        detail = format!("{detail}; {more}");
    }
    conclude(n, pass, format!("example {}: {detail} ({:.1} s)", example.name(), r.elapsed.as_secs_f64()));
}

#[test]
fn criterion_01_gradients() {
    let start = Instant::now();
    let mut rng = RngStream::new(2024);
    let mut pass = true;
    let mut parts = Vec::new();
    for fx in FixtureSet::all(0) {
        let mut worst: f64 = 0.0;
        for _ in 0..10 {
            let th: Vec<f64> = fx.theta0.iter().map(|t| t + 0.5 * rng.std_normal()).collect();
            worst = worst.max(gradcheck(fx.objective.as_ref(), &th).max_rel_error);
        }
        pass &= worst <= 1e-5;
        parts.push(format!("{} {worst:.1e}", fx.name));
    }
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(30) && parts.len() >= 5;
    conclude(1, pass, format!("max rel error: {} ({:.1} s)", parts.join(", "), elapsed.as_secs_f64()));
}

/// `(I − ρsyᵀ) H (I − ρysᵀ) + ρssᵀ`, written out as three dense products.
fn product_form_update(h: &Matrix, s: &[f64], y: &[f64]) -> Matrix {
    let n = s.len();
    let rho = 1.0 / s.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
    let mut left = Matrix::identity(n);
    left.add_scaled(-rho, &Matrix::outer(s, y)).unwrap();
    let mut next = left.matmul(h).unwrap().matmul(&left.transpose()).unwrap();
    next.add_scaled(rho, &Matrix::outer(s, s)).unwrap();
    next
}

#[test]
fn criterion_02_two_loop_matches_dense_bfgs() {
    let mut rng = RngStream::new(7);
    let mut worst: f64 = 0.0;
    for trial in 0..20 {
        let n = 2 + trial % 19;
        let basis = Matrix::from_vec(n, n, (0..n * n).map(|_| rng.std_normal()).collect()).unwrap();
        let mut a = basis.gram_cols();
        a.scale(1.0 / n as f64);
        a.add_diag(0.1);
        let b: Vec<f64> = (0..n).map(|_| rng.std_normal()).collect();
        let q = QuadraticObjective::new(a.clone(), b).unwrap();
        let mut theta: Vec<f64> = (0..n).map(|_| rng.std_normal()).collect();
        let mut mem = LbfgsMemory::new(10);
        let mut pairs: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
        for _ in 0..10 {
            let g = q.gradient(&theta);
            if !pairs.is_empty() {
                let (s_last, y_last) = pairs.last().unwrap();
                let tau = dot(s_last, y_last) / dot(y_last, y_last);
                let mut h = Matrix::identity(n);
                h.scale(tau);
                for (s, y) in &pairs {
                    h = product_form_update(&h, s, y);
                }
                let dense = h.matvec(&g);
                let two = mem.two_loop(&g);
                let scale = dense.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let diff = dense.iter().zip(&two).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
                worst = worst.max(diff / scale);
            }
            let d = mem.two_loop(&g);
            let next: Vec<f64> = theta.iter().zip(&d).map(|(t, v)| t - 0.5 * v).collect();
            let s: Vec<f64> = next.iter().zip(&theta).map(|(x, y)| x - y).collect();
            let y = a.matvec(&s);
            assert!(mem.push(s.clone(), y.clone()));
            pairs.push((s, y));
            theta = next;
        }
    }
    conclude(2, worst <= 1e-10, format!("max relative difference {worst:.2e} over 20 quadratics, n up to 20"));
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[test]
fn criterion_03_strongly_convex_bound() {
    let start = Instant::now();
    let report = Theorem::StronglyConvex.run(200, 0).unwrap();
    let noiseless = verify_strongly_convex_bound(&SyntheticProblem::strongly_convex(0.0), 0.04, 2000, 4, 0).unwrap();
    let (quiet_ok, quiet) = summarize_checks(&noiseless.checks);
    let elapsed = start.elapsed();
    let mut joined = report.clone();
    joined.inconclusive |= noiseless.inconclusive;
    let extra = format!("; noiseless{}: {quiet}", if quiet_ok { "" } else { " FAILED" });
    if !quiet_ok {
        joined.checks.extend(noiseless.checks.iter().cloned());
    }
    theory(3, &joined, &extra, elapsed, Some(Duration::from_secs(60)));
}

#[test]
fn criterion_04_convex_rate() {
    let start = Instant::now();
    let report = Theorem::Convex.run(200, 0).unwrap();
    theory(4, &report, "", start.elapsed(), None);
}

#[test]
fn criterion_05_nonconvex_stationarity() {
    let start = Instant::now();
    let report = Theorem::Nonconvex.run(200, 0).unwrap();
    theory(5, &report, "", start.elapsed(), None);
}

#[test]
fn criterion_06_spectral_bias() {
    example(6, Example::SpectralBias, Some(Duration::from_secs(180)), |_| (true, String::new()));
}

#[test]
fn criterion_07_kernel_conditioning() {
    example(7, Example::KernelConditioning, None, |_| (true, String::new()));
}

#[test]
fn criterion_08_batch_variance() {
    example(8, Example::BatchVariance, None, |_| (true, String::new()));
}

#[test]
fn criterion_09_optimizer_comparison() {
    example(9, Example::OptimizerComparison, None, |r| {
        let cfg = &r.manifest.config;
        let mut alphas = BTreeMap::new();
        for m in cfg["methods"].as_array().into_iter().flatten() {
            alphas.insert(m["name"].as_str().unwrap_or("").to_string(), m["alpha"].as_f64().unwrap_or(f64::NAN));
        }
        let settings = cfg["batch_size"] == 6000
            && alphas.get("sgd") == Some(&1e-4)
            && alphas.get("nag") == Some(&1e-4)
            && alphas.get("adagrad") == Some(&1e-2)
            && alphas.get("adam") == Some(&1e-2);
        (settings, format!("settings recorded {}", if settings { "as specified" } else { "WRONG" }))
    });
}

#[test]
fn criterion_10_hybrid_switch() {
    example(10, Example::HybridSwitch, None, |_| (true, String::new()));
}

#[test]
fn criterion_11_poisson_sampling() {
    example(11, Example::PoissonSampling, None, |r| {
        let spectra = std::fs::read_to_string(r.path.join("kernel_spectra.csv")).unwrap_or_default();
        let quoted = spectra.contains("reported_uniform") && spectra.contains("reported_refined");
        let noted = r.manifest.notes.iter().any(|n| n.contains("200") && n.contains("13"));
        (quoted && noted, format!("quoted values listed {quoted}, discrepancy note {noted}"))
    });
}

fn weyl_trials(trials: usize) -> usize {
    let mut rng = RngStream::new(11);
    let mut violations = 0;
    for _ in 0..trials {
        let n = 1 + rng.index(6);
        let m = 1 + rng.index(12);
        let jac = Matrix::from_vec(m, n, (0..m * n).map(|_| rng.std_normal()).collect()).unwrap();
        let mut kernel = jac.gram_cols();
        kernel.scale(1.0 / m as f64);
        let row: Vec<f64> = (0..n).map(|_| rng.std_normal()).collect();
        let (_, report) = weyl_check(&kernel, m, &row).unwrap();
        violations += report.violations.len();
    }
    violations
}

fn random_mlp(seed: u64) -> (LeastSquaresObjective<MlpSpec>, Vec<f64>) {
    let mut rng = RngStream::new(seed);
    let spec = MlpSpec::tanh(&[2, 4, 3, 1]).unwrap();
    let xs: Vec<Vec<f64>> = (0..10).map(|_| vec![rng.std_normal(), rng.std_normal()]).collect();
    let ys: Vec<Vec<f64>> = (0..10).map(|_| vec![rng.std_normal()]).collect();
    let theta = spec.init_xavier(&mut rng);
    (LeastSquaresObjective::new(spec, Dataset::new(xs, ys).unwrap()).unwrap(), theta)
}

/// Smallest eigenvalue relative to the largest, over plain and preconditioned kernels.
fn ntk_psd_worst(trials: u64) -> f64 {
    let mut worst: f64 = 0.0;
    for seed in 0..trials {
        let (obj, theta) = random_mlp(seed);
        for prec in [Preconditioner::Identity, Preconditioner::GaussNewton { beta: 1e-3 }] {
            let ev = preconditioned_ntk(&obj, &theta, &prec).unwrap();
            let ev = ev.eigenvalues();
            worst = worst.min(ev[ev.len() - 1] / ev[0]);
        }
    }
    worst
}

fn importance_worst(trials: usize) -> f64 {
    let mut rng = RngStream::new(5);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let size = 1 + rng.index(6);
        let pool: Vec<f64> = (0..size).map(|_| rng.uniform(0.05, 0.95).unwrap()).collect();
        let base = poisson_surrogate_fixture(&pool);
        let theta = [rng.std_normal(), rng.std_normal()];
        let pool_mean = base.interior_residuals(&theta).iter().map(|r| r * r).sum::<f64>() / size as f64;
        let eta: Vec<f64> = (0..size).map(|_| rng.uniform(0.1, 5.0).unwrap()).collect();
        let density = update_density(pool.clone(), &eta, 0.5 + rng.next_f64(), 1).unwrap();
        let expectation: f64 = (0..size)
            .map(|j| density.probs[j] * importance_weighted_risk(&base, &density, &[j]).unwrap().value(&theta))
            .sum();
        worst = worst.max((expectation - pool_mean).abs() / pool_mean.max(1e-300));
    }
    worst
}

fn stratified_mismatches(trials: usize) -> usize {
    let mut rng = RngStream::new(9);
    let colloc = CollocationSet::interior_only((0..40).map(|j| vec![j as f64 / 40.0]).collect())
        .with_dirichlet(vec![vec![0.0]; 12], vec![0.0; 12])
        .with_neumann(vec![vec![1.0]; 12], vec![vec![1.0]; 12], vec![0.0; 12])
        .with_data((0..12).map(|j| vec![j as f64 / 12.0]).collect(), vec![0.0; 12]);
    let mut bad = 0;
    for _ in 0..trials {
        let raw: Vec<f64> = (0..4).map(|_| rng.next_f64()).collect();
        let total: f64 = raw.iter().sum();
        let fractions = [raw[0] / total, raw[1] / total, raw[2] / total, raw[3] / total];
        // A batch needs a slot for every group it draws from.
        let size = 4 + rng.index(9);
        let want = largest_remainder_counts(&fractions, size);
        let batch = stratified_batch(&colloc, fractions, size, &mut rng).unwrap();
        let mut got = vec![0; 4];
        for &i in &batch {
            let (g, _) = colloc.locate(i);
            got[TermGroup::ALL.iter().position(|h| *h == g).unwrap()] += 1;
        }
        bad += usize::from(got != want);
    }
    bad
}

fn shrink_identity_worst(trials: u64) -> f64 {
    let mut worst: f64 = 0.0;
    for seed in 0..trials {
        let (obj, theta) = random_mlp(100 + seed);
        let plain = empirical_ntk(&obj, &theta).unwrap();
        for beta in [1e-3, 0.05, 1.0] {
            let gn = preconditioned_ntk(&obj, &theta, &Preconditioner::GaussNewton { beta }).unwrap();
            for (g, s) in gn.eigenvalues().iter().zip(plain.eigenvalues()) {
                worst = worst.max((g - s / (s + beta)).abs());
            }
        }
    }
    worst
}

/// Every output file except the manifest must match byte for byte; the
/// manifest must match once wall-clock timings are removed.
fn outputs_match(first: &Path, example: Example) -> bool {
    let dir = tempfile::tempdir().unwrap();
    reproduce(example, 0, dir.path()).unwrap();
    let listing = |p: &Path| {
        let mut names: Vec<_> = std::fs::read_dir(p).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        names
    };
    if listing(first) != listing(dir.path()) {
        return false;
    }
    listing(first).into_iter().all(|name| {
        let a = std::fs::read(first.join(&name)).unwrap();
        let b = std::fs::read(dir.path().join(&name)).unwrap();
        if name == "manifest.json" {
            let strip = |bytes: &[u8]| {
                let mut v: serde_json::Value = serde_json::from_slice(bytes).unwrap();
                v.as_object_mut().unwrap().remove("timings_ms");
                v
            };
            strip(&a) == strip(&b)
        } else {
            a == b
        }
    })
}

#[test]
fn criterion_12_property_suites() {
    let weyl = weyl_trials(1000);
    let psd = ntk_psd_worst(30);
    let is = importance_worst(300);
    let strat = stratified_mismatches(300);
    let shrink = shrink_identity_worst(10);
    let mut det = true;
    for ex in [Example::KernelConditioning, Example::OptimizerComparison, Example::PoissonSampling] {
        det &= outputs_match(&reproduced(ex).path, ex);
    }
    let theory_a = Theorem::StronglyConvex.run(20, 3).unwrap().to_json().unwrap();
    let theory_b = Theorem::StronglyConvex.run(20, 3).unwrap().to_json().unwrap();
    det &= theory_a == theory_b;
    let pass = weyl == 0 && psd >= -1e-12 && is <= 1e-12 && strat == 0 && shrink <= 1e-8 && det;
    conclude(
        12,
        pass,
        format!(
            "Weyl violations {weyl}/1000; NTK min/max eigenvalue {psd:.1e}; IS bias {is:.1e}; \
             stratified mismatches {strat}; s/(s+beta) error {shrink:.1e}; reruns identical {det}"
        ),
    );
}

/// `Σ_k c_k (θ_k − a_k)² + q Σ_k θ_k⁴`
struct Quartic {
    c: Vec<f64>,
    a: Vec<f64>,
    q: f64,
}

impl Objective for Quartic {
    fn dim(&self) -> usize {
        self.c.len()
    }
    fn num_samples(&self) -> usize {
        1
    }
    fn sample_value(&self, _i: usize, t: &[f64]) -> f64 {
        (0..t.len()).map(|k| self.c[k] * (t[k] - self.a[k]).powi(2) + self.q * t[k].powi(4)).sum()
    }
    fn sample_gradient(&self, _i: usize, t: &[f64]) -> Vec<f64> {
        (0..t.len()).map(|k| 2.0 * self.c[k] * (t[k] - self.a[k]) + 4.0 * self.q * t[k].powi(3)).collect()
    }
}

#[test]
fn criterion_13_bilevel_hypergradient() {
    let r1 = Quartic { c: vec![1.0, 0.5], a: vec![1.0, -0.5], q: 0.1 };
    let r2 = Quartic { c: vec![0.3, 2.0], a: vec![-1.0, 0.8], q: 0.05 };
    let outer = QuadraticObjective::diagonal(&[1.0, 1.0], vec![0.4, 0.1]).unwrap();
    let solve = |gam: [f64; 2]| {
        let sum = WeightedSum::new(vec![&r1 as &dyn Objective, &r2], gam.to_vec()).unwrap();
        let mut cfg = LbfgsConfig::new(500);
        cfg.grad_tol = 1e-12;
        lbfgs_run(&sum, &[0.0, 0.0], &cfg).unwrap().theta
    };
    let gam = [1.0, 0.8];
    let hg = bilevel_hypergradient(&[&r1, &r2], &outer, &solve(gam), &gam).unwrap();
    let mut worst: f64 = 0.0;
    for j in 0..2 {
        let h = 1e-4;
        let (mut up, mut down) = (gam, gam);
        up[j] += h;
        down[j] -= h;
        let fd = (outer.value(&solve(up)) - outer.value(&solve(down))) / (2.0 * h);
        worst = worst.max((hg.grad[j] - fd).abs() / fd.abs());
    }
    conclude(13, worst <= 1e-4 && hg.stationary, format!("max relative error vs finite differences {worst:.2e}"));
}
