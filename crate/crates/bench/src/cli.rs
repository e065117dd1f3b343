use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use sls_core::io::{plant_doc_from_json, response_from_json, response_to_json, PlantDoc};
use sls_core::model::INITIAL_BLOCK_NAMES;
use sls_core::{stochastic_chain, verify_response, Objective, Plant, Tolerance};

use crate::config::{Solver, SweepConfig};
use crate::plot::{plot_data, Axis};
use crate::runner::{run_solver, run_sweep, summarize, write_csv};

/// Environment variable capping sweep worker threads.
pub const THREADS_ENV: &str = "SLS_DP_THREADS";

#[derive(Debug, Parser)]
#[command(name = "sls-dp", version, about = "Output-feedback SLS synthesis by dynamic programming")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize one controller and write its system response.
    Solve(SolveArgs),
    /// Check a system response against a plant.
    Verify(VerifyArgs),
    /// Run a benchmark sweep from a JSON config.
    Sweep(SweepArgs),
    /// Reduce sweep results to plot series.
    Plotdata(PlotArgs),
}

#[derive(Debug, Args)]
pub struct PlantArgs {
    /// Plant document; overrides the chain flags.
    #[arg(long)]
    pub plant: Option<PathBuf>,
    #[arg(long)]
    pub nx: Option<usize>,
    #[arg(long)]
    pub nu: Option<usize>,
    #[arg(long)]
    pub ny: Option<usize>,
    #[arg(long, default_value_t = 0.2)]
    pub alpha: f64,
}

impl PlantArgs {
    /// The plant document, from file or from a stochastic chain. Missing
    /// chain dimensions fall back to `fallback`.
    fn load(&self, fallback: Option<(usize, usize, usize)>) -> Result<PlantDoc> {
        if let Some(path) = &self.plant {
            let text = read(path)?;
            return plant_doc_from_json(&text).with_context(|| format!("parsing {}", path.display()));
        }
        let pick = |v: Option<usize>, k: usize, name: &str| -> Result<usize> {
            v.or(fallback.map(|f| [f.0, f.1, f.2][k]))
                .with_context(|| format!("--{name} is required without --plant"))
        };
        let nx = pick(self.nx, 0, "nx")?;
        let nu = pick(self.nu, 1, "nu")?;
        let ny = pick(self.ny, 2, "ny")?;
        let plant = stochastic_chain(nx, nu, ny, self.alpha)?;
        Ok(PlantDoc::from_plant(&plant))
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub plant: PlantArgs,
    #[arg(long = "horizon", short = 'T')]
    pub horizon: usize,
    #[arg(long, default_value = "h2")]
    pub objective: String,
    /// dp or qp.
    #[arg(long, default_value = "dp")]
    pub solver: String,
    /// Use the approximation with this allowance.
    #[arg(long)]
    pub allowance: Option<usize>,
    /// Response JSON destination. Without it the JSON goes to standard output
    /// and the summary to standard error.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub response: PathBuf,
    #[command(flatten)]
    pub plant: PlantArgs,
    #[arg(long, default_value_t = Tolerance::default().residual_tol())]
    pub residual_tol: f64,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// CSV destination for per-run records.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON destination for per-group medians; defaults next to the CSV.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    /// Worker threads; 1 keeps timing runs sequential.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[arg(long)]
    pub results: PathBuf,
    /// nx, nu, ny, T or allowance.
    #[arg(long)]
    pub axis: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Worker count after applying the environment cap.
pub fn worker_count(requested: usize) -> usize {
    let cap = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n >= 1);
    let n = requested.max(1);
    cap.map_or(n, |c| n.min(c))
}

fn objective(doc: &PlantDoc, name: &str) -> Result<Objective> {
    Ok(doc.objective(name)?)
}

pub fn cmd_solve(args: &SolveArgs) -> Result<()> {
    let doc = args.plant.load(None)?;
    let plant: Plant = doc.plant()?;
    let obj = objective(&doc, &args.objective)?;
    let solver = match (Solver::parse(&args.solver)?, args.allowance) {
        (Solver::Dp, Some(_)) => Solver::DpApprox,
        (Solver::Qp, Some(_)) => bail!("--allowance applies only to the dp solver"),
        (Solver::DpApprox, None) => bail!("dp-approx needs --allowance"),
        (s, _) => s,
    };
    let tol = Tolerance::default();
    let out = run_solver(&plant, &obj, args.horizon, solver, args.allowance, &tol)?;
    let json = response_to_json(plant.dims(), &out.response)?;
    let summary = format!(
        "solver={} objective={} objective_value={:.12e} max_residual={:.3e} worst={} termination_residual={:.3e} wall_time_s={:.6}",
        solver.name(),
        obj.name(),
        out.objective_value,
        out.max_residual,
        out.worst.0,
        out.termination_residual,
        out.wall_time_s
    );
    match &args.out {
        Some(path) => {
            write(path, &json)?;
            println!("{summary}");
        }
        None => {
            println!("{json}");
            eprintln!("{summary}");
        }
    }
    Ok(())
}

/// Returns whether the response passed.
pub fn cmd_verify(args: &VerifyArgs) -> Result<bool> {
    let text = read(&args.response)?;
    let doc: sls_core::io::ResponseDoc = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", args.response.display()))?;
    let response = response_from_json(&text)?;
    let plant = args.plant.load(Some((doc.nx, doc.nu, doc.ny)))?.plant()?;
    let report = verify_response(&plant, &response)?;
    for (k, v) in report.dynamics.iter().enumerate() {
        println!("dynamics[tau={}] {v:.3e}", k + 1);
    }
    for (k, v) in report.transition.iter().enumerate() {
        println!("transition[tau={}] {v:.3e}", k + 1);
    }
    for (name, v) in INITIAL_BLOCK_NAMES.iter().zip(&report.initial) {
        println!("initial[{name}] {v:.3e}");
    }
    println!("termination {:.3e}", report.termination);
    let (worst, max) = report.worst();
    let ok = max <= args.residual_tol;
    println!(
        "{} max_residual={max:.3e} worst={worst} tol={:.1e}",
        if ok { "feasible" } else { "infeasible" },
        args.residual_tol
    );
    Ok(ok)
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let cfg = SweepConfig::from_json(&read(&args.config)?)?;
    let workers = worker_count(args.jobs);
    let records = run_sweep(&cfg, workers, &Tolerance::default())?;
    let file = fs::File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write_csv(&records, file)?;
    let summary_path = args
        .summary
        .clone()
        .unwrap_or_else(|| args.out.with_extension("summary.json"));
    let summary = summarize(&records);
    write(&summary_path, &serde_json::to_string_pretty(&summary)?)?;
    let failed = records.iter().filter(|r| !r.success).count();
    println!(
        "runs={} failed={failed} workers={workers} csv={} summary={}",
        records.len(),
        args.out.display(),
        summary_path.display()
    );
    Ok(())
}

pub fn cmd_plotdata(args: &PlotArgs) -> Result<()> {
    let axis = Axis::parse(&args.axis)?;
    let file = fs::File::open(&args.results).with_context(|| format!("opening {}", args.results.display()))?;
    let records = crate::runner::read_csv(file)?;
    let json = serde_json::to_string_pretty(&plot_data(&records, axis))?;
    match &args.out {
        Some(path) => write(path, &json)?,
        None => println!("{json}"),
    }
    Ok(())
}

/// Dispatches a parsed command line and maps the outcome to an exit code.
pub fn run(cli: Cli) -> i32 {
    faer::set_global_parallelism(faer::Par::Seq);
    let result = match &cli.command {
        Command::Solve(a) => cmd_solve(a).map(|_| true),
        Command::Verify(a) => cmd_verify(a),
        Command::Sweep(a) => cmd_sweep(a).map(|_| true),
        Command::Plotdata(a) => cmd_plotdata(a).map(|_| true),
    };
    match result {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}
