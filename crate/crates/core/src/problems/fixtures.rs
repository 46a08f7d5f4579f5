//! Concrete problem instances.
//!
//! Network sizes and sampling densities for the regression and PINN
//! examples are artifact choices; they are echoed into every run manifest.

use std::f64::consts::PI;
use std::sync::Arc;

use super::{
    CollocationSet, Dataset, LeastSquaresObjective, LinearModel, LogisticObjective, Objective,
    PdeForm, PinnObjective, PoissonSurrogate,
};
use crate::admodel::MlpSpec;
use crate::numkit::RngStream;

pub const SPECTRAL_BIAS_POINTS: usize = 256;
pub const SPECTRAL_BIAS_WIDTHS: [usize; 4] = [1, 64, 64, 1];
pub const REGRESSION_2D_WIDTHS: [usize; 4] = [2, 12, 12, 1];
pub const REGRESSION_2D_GRID: usize = 8;
pub const PINN_WIDTHS: [usize; 4] = [1, 16, 16, 1];
pub const LOGISTIC_SAMPLES: usize = 6000;

/// Class means are `±CLASS_MEAN`, isotropic spread `CLASS_SD`.
pub const CLASS_MEAN: [f64; 2] = [2.0, 1.0];
pub const CLASS_SD: f64 = 2.0;

/// `sin 2πx + 0.5 sin 8πx + 0.2 sin 32πx`
pub fn spectral_bias_target(x: f64) -> f64 {
    (2.0 * PI * x).sin() + 0.5 * (8.0 * PI * x).sin() + 0.2 * (32.0 * PI * x).sin()
}

/// `x_j = j/256`, `j = 0..256` (one period, endpoint excluded).
pub fn spectral_bias_grid() -> Vec<f64> {
    (0..SPECTRAL_BIAS_POINTS)
        .map(|j| j as f64 / SPECTRAL_BIAS_POINTS as f64)
        .collect()
}

pub fn spectral_bias_fixture() -> LeastSquaresObjective<MlpSpec> {
    let xs = spectral_bias_grid();
    let data = Dataset::new(
        xs.iter().map(|x| vec![*x]).collect(),
        xs.iter().map(|x| vec![spectral_bias_target(*x)]).collect(),
    )
    .expect("static fixture");
    LeastSquaresObjective::new(MlpSpec::tanh(&SPECTRAL_BIAS_WIDTHS).unwrap(), data).unwrap()
}

/// `sin πx₁ + cos πx₂`
pub fn regression_2d_target(x: &[f64]) -> f64 {
    (PI * x[0]).sin() + (PI * x[1]).cos()
}

/// Regular 8×8 grid on `[−1, 1]²`.
pub fn regression_2d_fixture() -> LeastSquaresObjective<MlpSpec> {
    let n = REGRESSION_2D_GRID;
    let coord = |k: usize| -1.0 + 2.0 * k as f64 / (n - 1) as f64;
    let mut xs = Vec::with_capacity(n * n);
    for a in 0..n {
        for b in 0..n {
            xs.push(vec![coord(a), coord(b)]);
        }
    }
    let ys = xs.iter().map(|x| vec![regression_2d_target(x)]).collect();
    LeastSquaresObjective::new(
        MlpSpec::tanh(&REGRESSION_2D_WIDTHS).unwrap(),
        Dataset::new(xs, ys).unwrap(),
    )
    .unwrap()
}

/// `10 e^{−100 (x − 0.9)²}`
pub fn poisson_forcing(x: f64) -> f64 {
    10.0 * (-100.0 * (x - 0.9) * (x - 0.9)).exp()
}

/// Two-parameter surrogate for `−u'' = 10 e^{−100(x−0.9)²}` on `[0, 1]`.
/// The basis satisfies the boundary conditions, so only interior terms appear.
pub fn poisson_surrogate_fixture(points: &[f64]) -> PinnObjective<PoissonSurrogate> {
    let pde = PdeForm::poisson(Arc::new(poisson_forcing));
    let colloc = CollocationSet::interior_only(points.iter().map(|x| vec![*x]).collect());
    PinnObjective::new(PoissonSurrogate, colloc, pde).expect("static fixture")
}

/// `−u'' = π² sin πx` on `[0, 1]` with `u(0) = u(1) = 0`; exact `u = sin πx`.
///
/// `n_interior` equispaced interior points plus both endpoints. Returns the
/// objective and a Glorot initialization drawn from `seed`.
pub fn mlp_pinn_fixture(n_interior: usize, seed: u64) -> (PinnObjective<MlpSpec>, Vec<f64>) {
    let pde = PdeForm::poisson(Arc::new(|x: f64| PI * PI * (PI * x).sin()))
        .with_exact(Arc::new(|x: f64| (PI * x).sin()));
    let interior = (1..=n_interior)
        .map(|j| vec![j as f64 / (n_interior + 1) as f64])
        .collect();
    let colloc = CollocationSet::interior_only(interior)
        .with_dirichlet(vec![vec![0.0], vec![1.0]], vec![0.0, 0.0]);
    let spec = MlpSpec::tanh(&PINN_WIDTHS).unwrap();
    let theta = spec.init_xavier(&mut RngStream::new(seed));
    (PinnObjective::new(spec, colloc, pde).expect("static fixture"), theta)
}

/// Two Gaussian classes in R², labels 1 (mean `+CLASS_MEAN`) and 0 (mean
/// `−CLASS_MEAN`), alternating. Features are `(x₁, x₂, 1)`; the constant
/// column carries the intercept.
pub fn two_gaussians(m: usize, seed: u64) -> Dataset {
    let mut rng = RngStream::new(seed);
    let mut xs = Vec::with_capacity(m);
    let mut ys = Vec::with_capacity(m);
    for i in 0..m {
        let label = if i % 2 == 0 { 1.0 } else { 0.0 };
        let sign = if label == 1.0 { 1.0 } else { -1.0 };
        let x1 = sign * CLASS_MEAN[0] + CLASS_SD * rng.std_normal();
        let x2 = sign * CLASS_MEAN[1] + CLASS_SD * rng.std_normal();
        xs.push(vec![x1, x2, 1.0]);
        ys.push(vec![label]);
    }
    Dataset::new(xs, ys).expect("m ≥ 1")
}

/// The 6000-sample classification problem.
pub fn logistic_fixture(seed: u64) -> LogisticObjective {
    LogisticObjective::new(two_gaussians(LOGISTIC_SAMPLES, seed)).unwrap()
}

/// A named fixture with a reference parameter vector.
pub struct NamedFixture {
    pub name: &'static str,
    pub objective: Box<dyn Objective + Send>,
    pub theta0: Vec<f64>,
}

/// Every fixture family, small enough for exhaustive derivative checks.
pub struct FixtureSet;

impl FixtureSet {
    pub fn all(seed: u64) -> Vec<NamedFixture> {
        let mut rng = RngStream::new(seed);
        let mut out = Vec::new();

        out.push(NamedFixture {
            name: "logistic",
            objective: Box::new(logistic_fixture(seed)),
            theta0: (0..3).map(|_| 0.3 * rng.std_normal()).collect(),
        });

        let lin = LinearModel { d_in: 3, d_out: 2, bias: true };
        let xs: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..3).map(|_| rng.std_normal()).collect())
            .collect();
        let ys: Vec<Vec<f64>> = xs
            .iter()
            .map(|x| vec![x[0] - x[2] + 0.1 * rng.std_normal(), 2.0 * x[1] + 0.1 * rng.std_normal()])
            .collect();
        out.push(NamedFixture {
            name: "linear_least_squares",
            objective: Box::new(LeastSquaresObjective::new(lin, Dataset::new(xs, ys).unwrap()).unwrap()),
            theta0: (0..8).map(|_| rng.std_normal()).collect(),
        });

        let reg = regression_2d_fixture();
        let theta = reg.model().init_xavier(&mut rng.derive(1));
        out.push(NamedFixture {
            name: "mlp_regression_2d",
            objective: Box::new(reg),
            theta0: theta,
        });

        out.push(NamedFixture {
            name: "poisson_surrogate",
            objective: Box::new(poisson_surrogate_fixture(&[0.1, 0.3, 0.5, 0.7, 0.9])),
            theta0: vec![rng.std_normal(), rng.std_normal()],
        });

        let (pinn, theta) = mlp_pinn_fixture(24, seed);
        out.push(NamedFixture {
            name: "mlp_pinn_poisson",
            objective: Box::new(pinn),
            theta0: theta,
        });
        out
    }
}
