use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use voltreg::harness::{
    compare, compute_metrics, read_metrics, run_with_data, summary_text, sweep_alpha, validate_linearization,
    write_results, write_sweep_csv, Method, Scenario,
};
use voltreg::optimizer::{assemble, reduced_instance, DispatchProblem};

#[derive(Parser)]
#[command(name = "voltreg", version, about = "Coordinated OLTC and smart-inverter voltage regulation")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate a scenario and write result files.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        method: Option<Method>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// First profile step.
        #[arg(long)]
        start: Option<usize>,
        /// Number of steps to simulate.
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Run the optimizer-based scheme once per forecast error level.
    SweepAlpha {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.2,0.3")]
        alphas: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Linearization error along a simulated run.
    ValidateLin {
        #[arg(long)]
        scenario: PathBuf,
        /// Check every n-th step.
        #[arg(long, default_value_t = 1)]
        stride: usize,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long, default_value = "validate-lin")]
        out: PathBuf,
    },
    /// Compare the metrics of two result directories.
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
    /// Dump one horizon's program in LP format.
    DumpLp {
        #[arg(long)]
        scenario: PathBuf,
        /// First step of the horizon.
        #[arg(long)]
        step: usize,
        /// Write the program with explicit nodal equations instead of the
        /// reduced form.
        #[arg(long)]
        full: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Regenerate the bundled feeders, profiles and scenarios.
    GenData {
        #[arg(long, default_value = "data")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn load(path: &Path) -> Result<Scenario> {
    Scenario::from_path(path).with_context(|| format!("loading scenario {}", path.display()))
}

fn real_main() -> Result<ExitCode> {
    match Cli::parse().cmd {
        Cmd::Run { scenario, method, alpha, seed, start, steps, out } => {
            let mut scn = load(&scenario)?;
            if let Some(m) = method {
                scn.method = m;
            }
            if let Some(a) = alpha {
                scn.forecast_alpha = a;
            }
            if let Some(s) = seed {
                scn.rng_seed = s;
            }
            if let Some(s) = start {
                scn.start_step = s;
            }
            if steps.is_some() {
                scn.n_steps = steps;
            }
            scn.validate()?;
            let data = scn.load_data()?;
            let res = run_with_data(&scn, &data)?;
            let m = compute_metrics(&res);
            write_results(&res, &m, &out)?;
            print!("{}", summary_text(&m));
            log::info!("{} steps in {:.1} s; results in {}", res.steps.len(), res.runtime_s, out.display());
            if res.degraded() {
                log::warn!("run degraded: {} failed steps", res.failures.len());
                return Ok(ExitCode::from(2));
            }
        }
        Cmd::SweepAlpha { scenario, alphas, out } => {
            if alphas.iter().any(|a| !(*a >= 0.0)) {
                bail!("alphas must be non-negative");
            }
            let scn = load(&scenario)?;
            let data = scn.load_data()?;
            let rows = sweep_alpha(&scn, &data, &alphas)?;
            println!("{:>6}{:>14}{:>14}{:>10}", "alpha", "max dev", "mean dev", "TO");
            for r in &rows {
                let m = &r.metrics;
                println!("{:>6}{:>14.6}{:>14.6}{:>10}", r.alpha, m.max_deviation, m.mean_deviation, m.tap_operations);
            }
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                write_sweep_csv(&rows, &dir.join("sweep_alpha.csv"))?;
            }
            if rows.iter().any(|r| r.metrics.failed_steps > 0) {
                return Ok(ExitCode::from(2));
            }
        }
        Cmd::ValidateLin { scenario, stride, steps, out } => {
            let mut scn = load(&scenario)?;
            if steps.is_some() {
                scn.n_steps = steps;
            }
            let data = scn.load_data()?;
            let res = run_with_data(&scn, &data)?;
            let rep = validate_linearization(&data, &res, stride)?;
            std::fs::create_dir_all(&out)?;
            rep.write_csv(&data.model, out.join("lin_error.csv"))?;
            rep.write_summary_json(out.join("lin_error_summary.json"))?;
            let s = rep.summary();
            println!("cases {}  max |E| {:.6} p.u.  mean |E| {:.6} p.u.", s.cases, s.max_abs, s.mean_abs);
        }
        Cmd::Compare { a, b } => {
            let ma = read_metrics(&a.join("metrics.json"))?;
            let mb = read_metrics(&b.join("metrics.json"))?;
            print!("{}", compare(&ma, &mb));
        }
        Cmd::DumpLp { scenario, step, full, out } => {
            let scn = load(&scenario)?;
            let data = scn.load_data()?;
            let problem = horizon_problem(&scn, &data, step)?;
            let lp = if full { assemble(&problem)?.0 } else { reduced_instance(&problem).0 };
            lp.write_lp_format(&out)?;
            println!("{} variables, {} rows, {} nonzeros", lp.n_vars(), lp.n_rows(), lp.nnz());
        }
        Cmd::GenData { out } => {
            for f in voltreg::datasets::write_bundle(&out)? {
                println!("{}", out.join(f).display());
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn horizon_problem(scn: &Scenario, data: &voltreg::harness::ScenarioData, step: usize) -> Result<DispatchProblem> {
    let mut s = scn.clone();
    s.start_step = step;
    s.n_steps = Some(s.horizon_steps);
    Ok(voltreg::harness::plan_first_horizon(&s, data)?)
}
