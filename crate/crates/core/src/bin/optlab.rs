use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use optlab::admodel::gradcheck;
use optlab::firstorder::TraceColumns;
use optlab::harness::{
    reproduce, Example, ExperimentConfig, Manifest, ProblemId, SolverSpec, Theorem as TheoremCheck, TheoryReport,
};
use optlab::kerneldx::{landscape_projection, preconditioned_ntk, LandscapeOptions, Preconditioner};
use optlab::numkit::RngStream;
use optlab::problems::FixtureSet;
use optlab::secondorder::{lbfgs_run, LbfgsConfig};
use optlab::{Error, Result};

#[derive(Parser)]
#[command(name = "optlab", version, about = "Optimizer experiments for scientific machine learning")]
struct Cli {
    /// Base random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// JSON experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print nothing but errors.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment described by `--config`.
    Run,
    /// Reproduce a worked example: 1, 2, 3, 4, 5 or poisson_sampling.
    Reproduce { example: String },
    /// Kernel spectrum at the initial point, plain and Gauss-Newton preconditioned.
    NtkReport {
        #[arg(long, default_value = "regression2d")]
        problem: String,
        /// Damping of the Gauss-Newton metric.
        #[arg(long, default_value_t = 1e-3)]
        beta: f64,
    },
    /// Loss surface on a random 2-D slice through an L-BFGS solution.
    Landscape {
        #[arg(long, default_value = "regression2d")]
        problem: String,
        #[arg(long, default_value_t = 1.0)]
        half_width: f64,
        #[arg(long, default_value_t = 41)]
        steps: usize,
        /// L-BFGS iterations used to find the centre point.
        #[arg(long, default_value_t = 500)]
        train_iters: usize,
    },
    /// Compare analytic derivatives with finite differences on every fixture.
    Gradcheck {
        #[arg(long, default_value_t = 10)]
        points: usize,
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
    },
    /// Monte-Carlo check of a convergence theorem.
    VerifyTheory {
        theorem: Theorem,
        #[arg(long, default_value_t = 200)]
        seeds: usize,
    },
    /// Collocation-sampling studies.
    SampleStudy { study: Study },
}

#[derive(Clone, Copy, ValueEnum)]
enum Theorem {
    StronglyConvex,
    NoiseFloor,
    Convex,
    Nonconvex,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum Study {
    Poisson,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn say(cli: &Cli, msg: impl AsRef<str>) {
    if !cli.quiet {
        println!("{}", msg.as_ref());
    }
}

fn out_dir(cli: &Cli, default: &str) -> Result<PathBuf> {
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from(default));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn parse_problem(name: &str) -> Result<ProblemId> {
    serde_json::from_value(json!({ "kind": name }))
        .map_err(|_| Error::Config(format!("unknown problem {name:?}")))
}

/// A config wrapper used by the diagnostic subcommands, which only need the problem.
fn probe_config(problem: ProblemId) -> ExperimentConfig {
    ExperimentConfig::from_json(&json!({"problem": problem, "method": {"kind": "sgd"}}).to_string())
        .expect("static config")
}

fn report_checks(cli: &Cli, m: &Manifest) {
    for c in &m.checks {
        say(cli, format!("{} {}: {:.4e}", if c.pass { "pass" } else { "FAIL" }, c.name, c.empirical));
    }
    for f in &m.failures {
        say(cli, format!("partial: {f}"));
    }
}

fn dispatch(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Run => {
            let path = cli.config.as_ref().ok_or_else(|| Error::Config("run needs --config".into()))?;
            let mut cfg = ExperimentConfig::from_json(&std::fs::read_to_string(path)?)?;
            if let Some(s) = cli.seed {
                cfg.seeds = vec![s];
            }
            let dir = match (&cli.out, &cfg.out) {
                (Some(d), _) => d.clone(),
                (None, Some(d)) => PathBuf::from(d),
                (None, None) => PathBuf::from("out/run"),
            };
            std::fs::create_dir_all(&dir)?;
            let cols = match cfg.method {
                SolverSpec::Hybrid { .. } => TraceColumns::Hybrid,
                SolverSpec::Lbfgs { .. } | SolverSpec::GaussNewton { .. } | SolverSpec::NewtonCg => TraceColumns::SecondOrder,
                _ => TraceColumns::Basic,
            };
            let mut m = Manifest::new("run", cfg.seeds[0], serde_json::to_value(&cfg)?);
            for &s in &cfg.seeds {
                let trace = m.timed(&format!("seed_{s}"), || cfg.run_seed(s))?;
                m.emit(&dir, &format!("trace_seed{s}.csv"), &trace.to_csv_string(cols))?;
                say(cli, format!("seed {s}: f = {:.6e} after {} records ({:?})", trace.final_f(), trace.records.len(), trace.status));
                if matches!(trace.status, optlab::firstorder::RunStatus::Diverged) {
                    m.fail(format!("seed {s} diverged"));
                }
            }
            m.write(&dir)?;
            Ok(!m.partial)
        }
        Command::Reproduce { example } => {
            let ex: Example = example.parse()?;
            let dir = out_dir(cli, &format!("out/example_{}", ex.name()))?;
            let m = reproduce(ex, cli.seed.unwrap_or(0), &dir)?;
            report_checks(cli, &m);
            say(cli, format!("wrote {} files to {}", m.files.len() + 1, dir.display()));
            Ok(m.passed())
        }
        Command::NtkReport { problem, beta } => {
            let cfg = probe_config(parse_problem(problem)?);
            let seed = cli.seed.unwrap_or(0);
            let (obj, theta) = cfg.instantiate(seed)?;
            let ls = obj
                .as_least_squares()
                .ok_or_else(|| Error::Config(format!("{problem} is not a least-squares problem")))?;
            let dir = out_dir(cli, "out/ntk")?;
            let mut m = Manifest::new("ntk_report", seed, json!({"problem": cfg.problem, "beta": beta, "at": "initial point"}));
            for (name, prec) in [("identity", Preconditioner::Identity), ("gauss_newton", Preconditioner::GaussNewton { beta: *beta })] {
                let r = preconditioned_ntk(ls, &theta, &prec)?;
                m.emit(&dir, &format!("spectrum_{name}.csv"), &r.to_csv_string())?;
                m.notes.push(format!("{name}: kappa {:.6e}, {} eigenvalues below the floor", r.kappa, r.floored));
                say(cli, format!("{name}: kappa = {:.4e}, lambda_max = {:.4e}", r.kappa, r.eigenvalues()[0]));
            }
            m.write(&dir)?;
            Ok(true)
        }
        Command::Landscape { problem, half_width, steps, train_iters } => {
            let cfg = probe_config(parse_problem(problem)?);
            let seed = cli.seed.unwrap_or(0);
            let (obj, theta0) = cfg.instantiate(seed)?;
            let dir = out_dir(cli, "out/landscape")?;
            let opts = LandscapeOptions { half_width: *half_width, steps: *steps, filter_normalize: true };
            let mut m = Manifest::new(
                "landscape",
                seed,
                json!({"problem": cfg.problem, "options": opts, "train_iters": train_iters}),
            );
            let centre = m.timed("train", || lbfgs_run(obj.as_ref(), &theta0, &LbfgsConfig::new(*train_iters)))?.theta;
            let blocks = [0..centre.len()];
            let grid = m.timed("grid", || {
                landscape_projection(obj.as_ref(), &centre, &opts, &blocks, &mut RngStream::new(seed).derive(7))
            })?;
            m.emit(&dir, "landscape.csv", &grid.to_csv_string())?;
            m.notes.push(format!("centre value {:.6e}, anisotropy {:.4e}", grid.center(), grid.anisotropy()));
            say(cli, format!("centre f = {:.4e}, anisotropy = {:.4e}", grid.center(), grid.anisotropy()));
            m.write(&dir)?;
            Ok(true)
        }
        Command::Gradcheck { points, tol } => {
            let seed = cli.seed.unwrap_or(0);
            let mut rng = RngStream::new(seed);
            let mut ok = true;
            for fx in FixtureSet::all(seed) {
                let mut worst: f64 = 0.0;
                for _ in 0..*points {
                    let th: Vec<f64> = fx.theta0.iter().map(|t| t + 0.5 * rng.std_normal()).collect();
                    worst = worst.max(gradcheck(fx.objective.as_ref(), &th).max_rel_error);
                }
                let pass = worst <= *tol;
                ok &= pass;
                say(cli, format!("{} {:<24} max rel error {worst:.3e}", if pass { "pass" } else { "FAIL" }, fx.name));
            }
            Ok(ok)
        }
        Command::VerifyTheory { theorem, seeds } => {
            let base = cli.seed.unwrap_or(0);
            let dir = out_dir(cli, "out/theory")?;
            let which: Vec<TheoremCheck> = match theorem {
                Theorem::All => TheoremCheck::ALL.to_vec(),
                Theorem::StronglyConvex => vec![TheoremCheck::StronglyConvex],
                Theorem::NoiseFloor => vec![TheoremCheck::NoiseFloor],
                Theorem::Convex => vec![TheoremCheck::Convex],
                Theorem::Nonconvex => vec![TheoremCheck::Nonconvex],
            };
            let mut ok = true;
            for t in which {
                let report = t.run(*seeds, base)?;
                write_theory(&dir, &report)?;
                for c in &report.checks {
                    say(cli, format!("{} [{}] {}: {:.4e}", if c.pass { "pass" } else { "FAIL" }, report.theorem, c.name, c.empirical));
                }
                if report.inconclusive {
                    say(cli, format!("[{}] inconclusive", report.theorem));
                }
                ok &= report.passed();
            }
            Ok(ok)
        }
        Command::SampleStudy { study: Study::Poisson } => {
            let dir = out_dir(cli, "out/sample_study_poisson")?;
            let m = reproduce(Example::PoissonSampling, cli.seed.unwrap_or(0), &dir)?;
            report_checks(cli, &m);
            for n in &m.notes {
                say(cli, n);
            }
            Ok(m.passed())
        }
    }
}

fn write_theory(dir: &Path, r: &TheoryReport) -> Result<()> {
    std::fs::write(dir.join(format!("{}.json", r.theorem)), r.to_json()? + "\n")?;
    std::fs::write(dir.join(format!("{}.csv", r.theorem)), r.to_csv_string())?;
    Ok(())
}
