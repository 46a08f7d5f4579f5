use serde::{Deserialize, Serialize};

use crate::admodel::MlpSpec;
use crate::error::{invalid, Error, Result};
use crate::firstorder::{self, BatchSchedule, Method, RunConfig, Sampling, StepSchedule, Trace};
use crate::hybrid::{self, HybridConfig, SwitchPolicy};
use crate::numkit::RngStream;
use crate::problems::{
    logistic_fixture, mlp_pinn_fixture, regression_2d_fixture, spectral_bias_fixture, Objective,
    REGRESSION_2D_WIDTHS, SPECTRAL_BIAS_WIDTHS,
};
use crate::secondorder::{lbfgs_run, newton_run, HvpOracle, LbfgsConfig, NewtonConfig, NewtonMethod};

/// Problems reachable from a config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemId {
    /// Two-class logistic regression, 6000 samples drawn from `data_seed`.
    Logistic {
        #[serde(default)]
        data_seed: u64,
    },
    /// Tanh MLP fit of `sin πx₁ + cos πx₂` on an 8×8 grid.
    Regression2d,
    /// Tanh MLP fit of a three-frequency sum of sines.
    SpectralBias,
    /// 1-D Poisson PINN with Dirichlet ends.
    PinnPoisson {
        #[serde(default = "default_interior")]
        interior: usize,
    },
}

fn default_interior() -> usize {
    32
}

/// Optimizer of a single run. First-order methods take their step from
/// `step` and their batch from `batch`; the rest ignore both.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SolverSpec {
    Sgd,
    HeavyBall {
        #[serde(default = "default_beta")]
        beta: f64,
    },
    Nag {
        #[serde(default = "default_beta")]
        beta: f64,
    },
    AdaGrad {
        #[serde(default = "default_eps")]
        eps: f64,
    },
    Adam {
        #[serde(default = "default_beta")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_eps")]
        eps: f64,
    },
    Lbfgs {
        #[serde(default = "default_memory")]
        memory: usize,
    },
    GaussNewton {
        #[serde(default = "default_damping")]
        beta: f64,
    },
    NewtonCg,
    /// Adam, then L-BFGS once the gradient norm plateaus.
    Hybrid {
        #[serde(default)]
        policy: SwitchPolicy,
        #[serde(default = "default_memory")]
        memory: usize,
    },
}

fn default_beta() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}
fn default_memory() -> usize {
    10
}
fn default_damping() -> f64 {
    1e-3
}

impl SolverSpec {
    fn first_order(&self) -> Option<Method> {
        Some(match *self {
            SolverSpec::Sgd => Method::Sgd,
            SolverSpec::HeavyBall { beta } => Method::HeavyBall { beta },
            SolverSpec::Nag { beta } => Method::Nag { beta },
            SolverSpec::AdaGrad { eps } => Method::AdaGrad { eps },
            SolverSpec::Adam { beta1, beta2, eps } => Method::Adam { beta1, beta2, eps },
            _ => return None,
        })
    }
}

/// One experiment: a problem, an optimizer, schedules, seeds and stopping rules.
///
/// Every field except `problem` and `method` has a default; the resolved
/// config (defaults included) is what gets written to the manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemId,
    pub method: SolverSpec,
    #[serde(default = "default_step")]
    pub step: StepSchedule,
    #[serde(default = "default_batch")]
    pub batch: BatchSchedule,
    #[serde(default = "default_sampling")]
    pub sampling: Sampling,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Stop once the full gradient norm falls to this value (0 disables).
    #[serde(default)]
    pub grad_tol: f64,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    /// Output directory; the command line `--out` takes precedence.
    #[serde(default)]
    pub out: Option<String>,
}

fn default_step() -> StepSchedule {
    StepSchedule::Constant { alpha: 1e-3 }
}
fn default_batch() -> BatchSchedule {
    BatchSchedule::Full
}
fn default_sampling() -> Sampling {
    Sampling::WithReplacement
}
fn default_seeds() -> Vec<u64> {
    vec![0]
}
fn default_max_iter() -> usize {
    1000
}
fn default_record_every() -> usize {
    1
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.max_iter == 0 || self.record_every == 0 {
            return Err(Error::Config("max_iter and record_every must be positive".into()));
        }
        if !(self.grad_tol >= 0.0) {
            return Err(Error::Config("grad_tol must be non-negative".into()));
        }
        if let ProblemId::PinnPoisson { interior } = self.problem {
            if interior == 0 {
                return Err(Error::Config("a PINN needs at least one interior point".into()));
            }
        }
        self.step.validate()?;
        self.batch.validate()
    }

    /// The objective and the starting point for `seed`.
    ///
    /// Network weights are Glorot-initialized from `seed`; the logistic
    /// problem starts at zero.
    pub fn instantiate(&self, seed: u64) -> Result<(Box<dyn Objective + Send>, Vec<f64>)> {
        let glorot = |widths: &[usize]| MlpSpec::tanh(widths).map(|s| s.init_xavier(&mut RngStream::new(seed)));
        Ok(match &self.problem {
            ProblemId::Logistic { data_seed } => (Box::new(logistic_fixture(*data_seed)), vec![0.0; 3]),
            ProblemId::Regression2d => (Box::new(regression_2d_fixture()), glorot(&REGRESSION_2D_WIDTHS)?),
            ProblemId::SpectralBias => (Box::new(spectral_bias_fixture()), glorot(&SPECTRAL_BIAS_WIDTHS)?),
            ProblemId::PinnPoisson { interior } => {
                let (obj, theta) = mlp_pinn_fixture(*interior, seed);
                (Box::new(obj), theta)
            }
        })
    }

    /// Runs the configured optimizer for one seed.
    pub fn run_seed(&self, seed: u64) -> Result<Trace> {
        self.validate()?;
        let (obj, theta0) = self.instantiate(seed)?;
        let obj: &dyn Objective = obj.as_ref();
        if let Some(method) = self.method.first_order() {
            let mut cfg = RunConfig::new(method, self.step, self.batch, self.max_iter).with_seed(seed);
            cfg.grad_tol = self.grad_tol;
            cfg.sampling = self.sampling;
            cfg.record_every = self.record_every;
            return firstorder::run(obj, &theta0, &cfg);
        }
        match &self.method {
            SolverSpec::Lbfgs { memory } => {
                let mut cfg = LbfgsConfig::new(self.max_iter);
                cfg.memory = *memory;
                cfg.grad_tol = self.grad_tol;
                lbfgs_run(obj, &theta0, &cfg)
            }
            SolverSpec::GaussNewton { beta } => newton_run(obj, &theta0, &self.newton(NewtonMethod::GaussNewton { beta: *beta }, seed)),
            SolverSpec::NewtonCg => {
                newton_run(obj, &theta0, &self.newton(NewtonMethod::NewtonCg { hvp: HvpOracle::FiniteDiff }, seed))
            }
            SolverSpec::Hybrid { policy, memory } => {
                let mut lbfgs = LbfgsConfig::new(self.max_iter);
                lbfgs.memory = *memory;
                lbfgs.grad_tol = self.grad_tol;
                let cfg = HybridConfig {
                    method: Method::adam(),
                    step: self.step,
                    batch: self.batch,
                    lbfgs,
                    policy: *policy,
                    budget: self.max_iter,
                    seed,
                    record_wall_time: false,
                };
                hybrid::hybrid_run(obj, &theta0, &cfg)
            }
            _ => Err(invalid("unreachable solver")),
        }
    }

    fn newton(&self, method: NewtonMethod, seed: u64) -> NewtonConfig {
        let mut cfg = NewtonConfig::new(method, self.max_iter);
        cfg.grad_tol = self.grad_tol;
        cfg.seed = seed;
        cfg
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = ExperimentConfig::from_json(r#"{"problem": {"kind": "logistic"}, "method": {"kind": "adam"}}"#).unwrap();
        assert_eq!(cfg.seeds, vec![0]);
        assert_eq!(cfg.method, SolverSpec::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 });
        let echoed = serde_json::to_value(&cfg).unwrap();
        assert_eq!(echoed["max_iter"], 1000);
        assert_eq!(echoed["step"]["alpha"], 1e-3);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for bad in [
            r#"{"problem": {"kind": "logistic"}, "method": {"kind": "sgd"}, "lr": 1}"#,
            r#"{"problem": {"kind": "logistic", "size": 3}, "method": {"kind": "sgd"}}"#,
            r#"{"problem": {"kind": "logistic"}, "method": {"kind": "adam", "beta3": 0.1}}"#,
            r#"{"problem": {"kind": "mnist"}, "method": {"kind": "sgd"}}"#,
        ] {
            assert!(ExperimentConfig::from_json(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn empty_seed_list_is_rejected() {
        let text = r#"{"problem": {"kind": "logistic"}, "method": {"kind": "sgd"}, "seeds": []}"#;
        assert!(matches!(ExperimentConfig::from_json(text), Err(Error::Config(_))));
    }

    #[test]
    fn round_trip_through_json() {
        let text = r#"{"problem": {"kind": "pinn_poisson", "interior": 8}, "method": {"kind": "hybrid"},
                      "step": {"kind": "constant", "alpha": 0.01}, "seeds": [1, 2], "max_iter": 50}"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        let again = ExperimentConfig::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn every_solver_runs_a_few_steps() {
        for method in [
            r#"{"kind": "sgd"}"#,
            r#"{"kind": "nag"}"#,
            r#"{"kind": "heavy_ball"}"#,
            r#"{"kind": "ada_grad"}"#,
            r#"{"kind": "adam"}"#,
            r#"{"kind": "lbfgs"}"#,
            r#"{"kind": "gauss_newton"}"#,
            r#"{"kind": "newton_cg"}"#,
            r#"{"kind": "hybrid"}"#,
        ] {
            let text = format!(r#"{{"problem": {{"kind": "regression2d"}}, "method": {method}, "max_iter": 3}}"#);
            let cfg = ExperimentConfig::from_json(&text).unwrap();
            let trace = cfg.run_seed(0).unwrap();
            assert!(trace.final_f() <= trace.records[0].f + 1e-12 || method.contains("sgd") || method.contains("nag"), "{method}");
        }
    }
}
