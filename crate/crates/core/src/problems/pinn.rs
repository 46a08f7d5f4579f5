use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use super::{LeastSquares, Objective};
use crate::admodel::{input_jet_dir, jet_param_gradient, Jet2, MlpSpec};
use crate::error::{dim_err, invalid, Error, Result};
use crate::numkit::Matrix;

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Linear ODE operator of order ≤ 2 on a 1-D domain:
/// `N[h](x) = a0 h + a1 h' + a2 h''`, residual `r = N[h](x) − q(x)`.
#[derive(Clone)]
pub struct PdeForm {
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
    source: ScalarFn,
    exact: Option<ScalarFn>,
}

impl fmt::Debug for PdeForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PdeForm")
            .field("a0", &self.a0)
            .field("a1", &self.a1)
            .field("a2", &self.a2)
            .field("has_exact", &self.exact.is_some())
            .finish()
    }
}

impl PdeForm {
    pub fn new(a0: f64, a1: f64, a2: f64, source: ScalarFn) -> Result<Self> {
        let pde = Self {
            a0,
            a1,
            a2,
            source,
            exact: None,
        };
        pde.validate()?;
        Ok(pde)
    }

    /// `−u'' = q`
    pub fn poisson(source: ScalarFn) -> Self {
        Self {
            a0: 0.0,
            a1: 0.0,
            a2: -1.0,
            source,
            exact: None,
        }
    }

    pub fn with_exact(mut self, exact: ScalarFn) -> Self {
        self.exact = Some(exact);
        self
    }

    pub fn order(&self) -> usize {
        if self.a2 != 0.0 {
            2
        } else if self.a1 != 0.0 {
            1
        } else {
            0
        }
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.a0, self.a1, self.a2].iter().all(|c| c.is_finite()) {
            return Err(invalid("operator coefficients must be finite"));
        }
        match self.order() {
            1 | 2 => Ok(()),
            p => Err(invalid(format!("operator order {p} is not supported (need 1 or 2)"))),
        }
    }

    pub fn source(&self, x: f64) -> f64 {
        (self.source)(x)
    }

    pub fn exact(&self, x: f64) -> Option<f64> {
        self.exact.as_ref().map(|u| u(x))
    }

    /// `N[h](x) − q(x)` from a jet of `h` along `x`.
    pub fn residual(&self, h: Jet2, x: f64) -> f64 {
        self.a0 * h.value + self.a1 * h.d1 + self.a2 * h.d2 - self.source(x)
    }

    pub fn seed(&self) -> Jet2 {
        Jet2::new(self.a0, self.a1, self.a2)
    }
}

/// Scalar model whose input derivatives enter a PINN loss.
pub trait PinnModel: Sync {
    fn n_params(&self) -> usize;
    fn d_in(&self) -> usize;

    /// Rejects models that cannot be used in a PINN loss.
    fn check(&self) -> Result<()> {
        Ok(())
    }

    /// `(h, ∂_d h, ∂²_d h)` along direction `dir`.
    fn jet(&self, theta: &[f64], x: &[f64], dir: &[f64]) -> Jet2;

    /// The jet and `∇_θ (s_v h + s_1 ∂_d h + s_2 ∂²_d h)`.
    fn jet_param_gradient(&self, theta: &[f64], x: &[f64], dir: &[f64], seed: Jet2) -> (Jet2, Vec<f64>);
}

impl PinnModel for MlpSpec {
    fn n_params(&self) -> usize {
        self.num_params()
    }

    fn d_in(&self) -> usize {
        MlpSpec::d_in(self)
    }

    fn check(&self) -> Result<()> {
        if self.d_out() != 1 {
            return Err(invalid("PINN networks must have a scalar output"));
        }
        for act in [self.activation, self.output_activation] {
            if !act.is_smooth() {
                return Err(Error::NonSmoothActivation(act.name()));
            }
        }
        Ok(())
    }

    fn jet(&self, theta: &[f64], x: &[f64], dir: &[f64]) -> Jet2 {
        input_jet_dir(self, theta, x, dir).expect("network checked at construction")[0]
    }

    fn jet_param_gradient(&self, theta: &[f64], x: &[f64], dir: &[f64], seed: Jet2) -> (Jet2, Vec<f64>) {
        let (out, g) =
            jet_param_gradient(self, theta, x, dir, &[seed]).expect("network checked at construction");
        (out[0], g)
    }
}

/// `h(x) = θ₁ x(1−x) + θ₂ x²(1−x)²` on `[0, 1]`; satisfies `h(0) = h(1) = 0`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PoissonSurrogate;

impl PoissonSurrogate {
    /// `[φ, φ', φ'']` for both basis functions.
    pub fn basis(x: f64) -> [[f64; 3]; 2] {
        let w = 1.0 - x;
        [
            [x * w, 1.0 - 2.0 * x, -2.0],
            [
                x * x * w * w,
                2.0 * x * w * (1.0 - 2.0 * x),
                2.0 - 12.0 * x + 12.0 * x * x,
            ],
        ]
    }
}

impl PinnModel for PoissonSurrogate {
    fn n_params(&self) -> usize {
        2
    }

    fn d_in(&self) -> usize {
        1
    }

    fn jet(&self, theta: &[f64], x: &[f64], dir: &[f64]) -> Jet2 {
        let b = Self::basis(x[0]);
        let d = dir[0];
        Jet2::new(
            theta[0] * b[0][0] + theta[1] * b[1][0],
            d * (theta[0] * b[0][1] + theta[1] * b[1][1]),
            d * d * (theta[0] * b[0][2] + theta[1] * b[1][2]),
        )
    }

    fn jet_param_gradient(&self, theta: &[f64], x: &[f64], dir: &[f64], seed: Jet2) -> (Jet2, Vec<f64>) {
        let b = Self::basis(x[0]);
        let d = dir[0];
        let g = b
            .iter()
            .map(|phi| seed.value * phi[0] + seed.d1 * d * phi[1] + seed.d2 * d * d * phi[2])
            .collect();
        (self.jet(theta, x, dir), g)
    }
}

/// Loss group, in the order they are flattened into samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TermGroup {
    Interior,
    Dirichlet,
    Neumann,
    Data,
}

impl TermGroup {
    pub const ALL: [TermGroup; 4] = [
        TermGroup::Interior,
        TermGroup::Dirichlet,
        TermGroup::Neumann,
        TermGroup::Data,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TermGroup::Interior => "interior",
            TermGroup::Dirichlet => "dirichlet",
            TermGroup::Neumann => "neumann",
            TermGroup::Data => "data",
        }
    }
}

/// Collocation points, boundary data and loss weights of a PINN.
///
/// Interior points carry weights `ξ_j ≥ 0` with `Σ ξ_j = m_Ω`; uniform
/// weighting is `ξ ≡ 1`. Each group has a weight `γ ≥ 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct CollocationSet {
    pub interior: Vec<Vec<f64>>,
    pub interior_weights: Vec<f64>,
    pub dirichlet: Vec<Vec<f64>>,
    pub dirichlet_values: Vec<f64>,
    pub neumann: Vec<Vec<f64>>,
    /// Unit outward normal per Neumann point.
    pub neumann_normals: Vec<Vec<f64>>,
    pub neumann_values: Vec<f64>,
    pub data: Vec<Vec<f64>>,
    pub data_values: Vec<f64>,
    /// `[γ_Ω, γ_D, γ_N, γ_data]`
    pub gammas: [f64; 4],
}

impl CollocationSet {
    pub fn interior_only(points: Vec<Vec<f64>>) -> Self {
        let n = points.len();
        Self {
            interior: points,
            interior_weights: vec![1.0; n],
            dirichlet: Vec::new(),
            dirichlet_values: Vec::new(),
            neumann: Vec::new(),
            neumann_normals: Vec::new(),
            neumann_values: Vec::new(),
            data: Vec::new(),
            data_values: Vec::new(),
            gammas: [1.0; 4],
        }
    }

    pub fn with_dirichlet(mut self, points: Vec<Vec<f64>>, values: Vec<f64>) -> Self {
        self.dirichlet = points;
        self.dirichlet_values = values;
        self
    }

    pub fn with_neumann(mut self, points: Vec<Vec<f64>>, normals: Vec<Vec<f64>>, values: Vec<f64>) -> Self {
        self.neumann = points;
        self.neumann_normals = normals;
        self.neumann_values = values;
        self
    }

    pub fn with_data(mut self, points: Vec<Vec<f64>>, values: Vec<f64>) -> Self {
        self.data = points;
        self.data_values = values;
        self
    }

    pub fn with_gammas(mut self, gammas: [f64; 4]) -> Self {
        self.gammas = gammas;
        self
    }

    pub fn group_len(&self, g: TermGroup) -> usize {
        match g {
            TermGroup::Interior => self.interior.len(),
            TermGroup::Dirichlet => self.dirichlet.len(),
            TermGroup::Neumann => self.neumann.len(),
            TermGroup::Data => self.data.len(),
        }
    }

    pub fn total(&self) -> usize {
        TermGroup::ALL.iter().map(|g| self.group_len(*g)).sum()
    }

    /// Index range of each group in the flattened sample order.
    pub fn group_range(&self, g: TermGroup) -> Range<usize> {
        let mut start = 0;
        for h in TermGroup::ALL {
            let len = self.group_len(h);
            if h == g {
                return start..start + len;
            }
            start += len;
        }
        unreachable!()
    }

    pub fn locate(&self, i: usize) -> (TermGroup, usize) {
        let mut start = 0;
        for g in TermGroup::ALL {
            let len = self.group_len(g);
            if i < start + len {
                return (g, i - start);
            }
            start += len;
        }
        panic!("sample index {i} out of range for {} terms", self.total());
    }

    pub fn validate(&self, d_in: usize) -> Result<()> {
        if self.interior.is_empty() {
            return Err(invalid("the interior collocation set is empty"));
        }
        let same = |a: usize, b: usize, what: &str| {
            if a == b {
                Ok(())
            } else {
                Err(dim_err(format!("{what}: {a} points but {b} values")))
            }
        };
        same(self.interior.len(), self.interior_weights.len(), "interior weights")?;
        same(self.dirichlet.len(), self.dirichlet_values.len(), "dirichlet")?;
        same(self.neumann.len(), self.neumann_values.len(), "neumann")?;
        same(self.neumann.len(), self.neumann_normals.len(), "neumann normals")?;
        same(self.data.len(), self.data_values.len(), "data")?;
        let all_points = self
            .interior
            .iter()
            .chain(&self.dirichlet)
            .chain(&self.neumann)
            .chain(&self.neumann_normals)
            .chain(&self.data);
        for p in all_points {
            if p.len() != d_in {
                return Err(dim_err(format!("point of width {} for input width {d_in}", p.len())));
            }
        }
        if self.gammas.iter().any(|g| !(*g >= 0.0) || !g.is_finite()) {
            return Err(invalid("loss weights γ must be finite and non-negative"));
        }
        if self.interior_weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(invalid("interior weights ξ must be non-negative"));
        }
        let m = self.interior.len() as f64;
        let s: f64 = self.interior_weights.iter().sum();
        if (s - m).abs() > 1e-10 * m.max(1.0) {
            return Err(invalid(format!("interior weights sum to {s}, expected {m}")));
        }
        Ok(())
    }
}

/// Weighted PINN empirical risk
/// `γ_Ω/m_Ω Σ ξ_j r_j² + γ_D/m_D Σ (h−g_D)² + γ_N/m_N Σ (∂_n h − g_N)² + γ_data/m_data Σ (h−y)²`.
///
/// As a finite sum the terms are flattened interior first, then Dirichlet,
/// Neumann and data points; sample `i` with weight `c_i` and error `e_i`
/// contributes `m c_i e_i²` so the sample mean equals the risk.
#[derive(Clone, Debug)]
pub struct PinnObjective<P> {
    model: P,
    colloc: CollocationSet,
    pde: PdeForm,
}

impl<P: PinnModel> PinnObjective<P> {
    pub fn new(model: P, colloc: CollocationSet, pde: PdeForm) -> Result<Self> {
        model.check()?;
        pde.validate()?;
        if model.d_in() != 1 {
            return Err(invalid("PDE operators are implemented on 1-D domains"));
        }
        colloc.validate(model.d_in())?;
        Ok(Self { model, colloc, pde })
    }

    pub fn model(&self) -> &P {
        &self.model
    }

    pub fn colloc(&self) -> &CollocationSet {
        &self.colloc
    }

    pub fn pde(&self) -> &PdeForm {
        &self.pde
    }

    /// Replaces `ξ`; the normalization invariant is re-checked.
    pub fn set_interior_weights(&mut self, xi: Vec<f64>) -> Result<()> {
        let mut c = self.colloc.clone();
        c.interior_weights = xi;
        c.validate(self.model.d_in())?;
        self.colloc = c;
        Ok(())
    }

    pub fn set_gammas(&mut self, gammas: [f64; 4]) -> Result<()> {
        let mut c = self.colloc.clone();
        c.gammas = gammas;
        c.validate(self.model.d_in())?;
        self.colloc = c;
        Ok(())
    }

    fn weight(&self, g: TermGroup, j: usize) -> f64 {
        let c = &self.colloc;
        let n = c.group_len(g) as f64;
        match g {
            TermGroup::Interior => c.gammas[0] * c.interior_weights[j] / n,
            TermGroup::Dirichlet => c.gammas[1] / n,
            TermGroup::Neumann => c.gammas[2] / n,
            TermGroup::Data => c.gammas[3] / n,
        }
    }

    fn point_setup(&self, g: TermGroup, j: usize) -> (&[f64], Vec<f64>, Jet2, f64) {
        let c = &self.colloc;
        let unit = vec![1.0];
        match g {
            TermGroup::Interior => (&c.interior[j], unit, self.pde.seed(), 0.0),
            TermGroup::Dirichlet => (&c.dirichlet[j], unit, Jet2::new(1.0, 0.0, 0.0), c.dirichlet_values[j]),
            TermGroup::Neumann => (
                &c.neumann[j],
                c.neumann_normals[j].clone(),
                Jet2::new(0.0, 1.0, 0.0),
                c.neumann_values[j],
            ),
            TermGroup::Data => (&c.data[j], unit, Jet2::new(1.0, 0.0, 0.0), c.data_values[j]),
        }
    }

    fn error_of(&self, g: TermGroup, x: &[f64], jet: Jet2, target: f64) -> f64 {
        match g {
            TermGroup::Interior => self.pde.residual(jet, x[0]),
            TermGroup::Neumann => jet.d1 - target,
            _ => jet.value - target,
        }
    }

    /// Weight `c_i` and unweighted error `e_i` of flattened term `i`.
    pub fn term_error(&self, i: usize, theta: &[f64]) -> (f64, f64) {
        let (g, j) = self.colloc.locate(i);
        let (x, dir, _, target) = self.point_setup(g, j);
        let jet = self.model.jet(theta, x, &dir);
        (self.weight(g, j), self.error_of(g, x, jet, target))
    }

    fn term_error_gradient(&self, i: usize, theta: &[f64]) -> (f64, f64, Vec<f64>) {
        let (g, j) = self.colloc.locate(i);
        let (x, dir, seed, target) = self.point_setup(g, j);
        let (jet, grad) = self.model.jet_param_gradient(theta, x, &dir, seed);
        (self.weight(g, j), self.error_of(g, x, jet, target), grad)
    }

    /// Raw PDE residuals `r_j` at the interior points.
    pub fn interior_residuals(&self, theta: &[f64]) -> Vec<f64> {
        self.colloc
            .group_range(TermGroup::Interior)
            .map(|i| self.term_error(i, theta).1)
            .collect()
    }

    /// `∇_θ r_j` at interior point `j`.
    pub fn interior_residual_gradient(&self, j: usize, theta: &[f64]) -> Vec<f64> {
        self.term_error_gradient(j, theta).2
    }

    /// Unweighted group risks `R̂_g = (1/m_g) Σ e²` (0 for empty groups) and their gradients.
    pub fn group_risk(&self, g: TermGroup, theta: &[f64]) -> (f64, Vec<f64>) {
        let range = self.colloc.group_range(g);
        let n = range.len();
        let mut grad = vec![0.0; self.dim()];
        if n == 0 {
            return (0.0, grad);
        }
        let mut val = 0.0;
        for i in range {
            let (_, e, ge) = self.term_error_gradient(i, theta);
            val += e * e;
            for (a, b) in grad.iter_mut().zip(&ge) {
                *a += 2.0 * e * b;
            }
        }
        let inv = 1.0 / n as f64;
        grad.iter_mut().for_each(|v| *v *= inv);
        (val * inv, grad)
    }
}

impl<P: PinnModel> Objective for PinnObjective<P> {
    fn dim(&self) -> usize {
        self.model.n_params()
    }

    fn num_samples(&self) -> usize {
        self.colloc.total()
    }

    fn sample_value(&self, i: usize, theta: &[f64]) -> f64 {
        let (c, e) = self.term_error(i, theta);
        self.num_samples() as f64 * c * e * e
    }

    fn sample_gradient(&self, i: usize, theta: &[f64]) -> Vec<f64> {
        let (c, e, mut g) = self.term_error_gradient(i, theta);
        let s = 2.0 * self.num_samples() as f64 * c * e;
        g.iter_mut().for_each(|v| *v *= s);
        g
    }

    fn as_least_squares(&self) -> Option<&dyn LeastSquares> {
        Some(self)
    }
}

impl<P: PinnModel> LeastSquares for PinnObjective<P> {
    fn residuals(&self, theta: &[f64]) -> Vec<f64> {
        let m = self.num_samples() as f64;
        (0..self.num_samples())
            .map(|i| {
                let (c, e) = self.term_error(i, theta);
                (2.0 * m * c).sqrt() * e
            })
            .collect()
    }

    fn jacobian(&self, theta: &[f64]) -> Matrix {
        let m = self.num_samples();
        let mut jac = Matrix::zeros(m, self.dim());
        for i in 0..m {
            let (c, _, g) = self.term_error_gradient(i, theta);
            let s = (2.0 * m as f64 * c).sqrt();
            for (dst, v) in jac.row_mut(i).iter_mut().zip(&g) {
                *dst = s * v;
            }
        }
        jac
    }
}
