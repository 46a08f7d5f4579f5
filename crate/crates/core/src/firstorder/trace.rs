use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Stage of a two-stage run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Adam,
    Lbfgs,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Adam => "adam",
            Phase::Lbfgs => "lbfgs",
        }
    }
}

/// Observables of one iterate `θ_k`.
///
/// `f` and `grad_norm` are the full objective and gradient norm at `θ_k`;
/// `step_size` and `batch_size` describe the step taken *from* `θ_k`
/// (0 on the last record).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub k: usize,
    pub epoch: f64,
    pub f: f64,
    pub grad_norm: f64,
    pub step_size: f64,
    pub batch_size: usize,
    pub wall_ms: f64,
    pub cg_iters: usize,
    pub ls_evals: usize,
    pub phase: Option<Phase>,
}

impl TraceRecord {
    pub fn new(k: usize, f: f64, grad_norm: f64) -> Self {
        Self {
            k,
            epoch: 0.0,
            f,
            grad_norm,
            step_size: 0.0,
            batch_size: 0,
            wall_ms: 0.0,
            cg_iters: 0,
            ls_evals: 0,
            phase: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    /// Iteration budget exhausted.
    MaxIter,
    /// Gradient norm fell below the requested tolerance.
    Converged,
    /// Objective exceeded 1e12 or became non-finite; the trace is truncated.
    Diverged,
    /// Two consecutive line-search failures.
    LineSearchFailed,
}

/// Column set of a trace CSV.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TraceColumns {
    /// `k,epoch,f,grad_norm,step_size,batch_size,wall_ms`
    Basic,
    /// Basic plus `cg_iters,ls_evals`.
    SecondOrder,
    /// Second-order columns plus `phase`.
    Hybrid,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
    pub status: RunStatus,
    pub theta: Vec<f64>,
    /// First iteration of the second stage, for two-stage runs.
    pub switch_at: Option<usize>,
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

impl Trace {
    pub fn final_f(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.f)
    }

    pub fn final_grad_norm(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.grad_norm)
    }

    pub fn to_csv_string(&self, cols: TraceColumns) -> String {
        let mut s = String::from("k,epoch,f,grad_norm,step_size,batch_size,wall_ms");
        if cols != TraceColumns::Basic {
            s.push_str(",cg_iters,ls_evals");
        }
        if cols == TraceColumns::Hybrid {
            s.push_str(",phase");
        }
        s.push('\n');
        for r in &self.records {
            let _ = write!(
                s,
                "{},{},{},{},{},{},{}",
                r.k,
                fmt_real(r.epoch),
                fmt_real(r.f),
                fmt_real(r.grad_norm),
                fmt_real(r.step_size),
                r.batch_size,
                fmt_real(r.wall_ms)
            );
            if cols != TraceColumns::Basic {
                let _ = write!(s, ",{},{}", r.cg_iters, r.ls_evals);
            }
            if cols == TraceColumns::Hybrid {
                let _ = write!(s, ",{}", r.phase.map_or("", Phase::name));
            }
            s.push('\n');
        }
        s
    }

    pub fn write_csv(&self, path: &Path, cols: TraceColumns) -> Result<()> {
        std::fs::write(path, self.to_csv_string(cols))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_headers() {
        let t = Trace {
            records: vec![TraceRecord::new(0, 1.0, 2.0)],
            status: RunStatus::MaxIter,
            theta: vec![],
            switch_at: None,
        };
        let basic = t.to_csv_string(TraceColumns::Basic);
        assert!(basic.starts_with("k,epoch,f,grad_norm,step_size,batch_size,wall_ms\n"));
        let hybrid = t.to_csv_string(TraceColumns::Hybrid);
        assert!(hybrid.starts_with("k,epoch,f,grad_norm,step_size,batch_size,wall_ms,cg_iters,ls_evals,phase\n"));
        let line = basic.lines().nth(1).unwrap();
        let f: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
        assert_eq!(f, 1.0);
    }

    #[test]
    fn reals_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.2250738585072014e-308, 1e300] {
            assert_eq!(fmt_real(v).parse::<f64>().unwrap(), v);
        }
    }
}
