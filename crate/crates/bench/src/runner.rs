//! Timed single runs and the sweep driver.

use std::time::Instant;

use anyhow::Result;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sls_core::{
    assemble, solve, solve_approx, solve_kkt, stochastic_chain, verify_response, Allowance,
    H2Weights, LQWeights, Objective, Plant, SystemResponse, Tolerance,
};

use crate::config::{Cell, Job, Solver, SweepConfig};

/// One CSV row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub nx: usize,
    pub nu: usize,
    pub ny: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub alpha: f64,
    pub objective: String,
    pub solver: String,
    pub allowance: Option<usize>,
    pub rep: usize,
    pub wall_time_s: f64,
    pub objective_value: Option<f64>,
    pub max_residual: Option<f64>,
    pub termination_residual: Option<f64>,
    pub success: bool,
}

impl BenchRecord {
    pub fn cell(&self) -> Cell {
        Cell {
            nx: self.nx,
            nu: self.nu,
            ny: self.ny,
            horizon: self.horizon,
        }
    }
}

pub fn objective_for(name: &str, plant: &Plant) -> Result<Objective> {
    let dims = plant.dims();
    match name {
        "h2" => Ok(Objective::H2(H2Weights::identity(dims))),
        "lq" => Ok(Objective::Lq(LQWeights::identity(dims))),
        other => anyhow::bail!("unknown objective {other:?} (expected h2 or lq)"),
    }
}

/// Result of one synthesis, with the solve time separated from checking.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub response: SystemResponse,
    pub objective_value: f64,
    pub wall_time_s: f64,
    pub max_residual: f64,
    pub worst: (String, f64),
    pub termination_residual: f64,
}

/// Runs one solver; the timed region covers building the reformulation and
/// the full solve, and nothing after it.
pub fn run_solver(
    plant: &Plant,
    objective: &Objective,
    horizon: usize,
    solver: Solver,
    allowance: Option<usize>,
    tol: &Tolerance,
) -> sls_core::Result<RunOutcome> {
    let start = Instant::now();
    let (response, objective_value) = match solver {
        Solver::Dp => {
            let s = solve(plant, objective, horizon, tol)?;
            (s.response, s.objective_value)
        }
        Solver::DpApprox => {
            let t_a = Allowance::new(allowance.unwrap_or(horizon), horizon)?;
            let s = solve_approx(plant, objective, horizon, t_a, tol)?;
            (s.response, s.objective_value)
        }
        Solver::Qp => {
            let prog = assemble(plant, objective, horizon)?;
            let s = solve_kkt(&prog, objective, tol)?;
            (s.response, s.objective_value)
        }
    };
    let wall_time_s = start.elapsed().as_secs_f64();
    let report = verify_response(plant, &response)?;
    Ok(RunOutcome {
        objective_value,
        wall_time_s,
        max_residual: report.max(),
        worst: report.worst(),
        termination_residual: report.termination,
        response,
    })
}

/// Microsecond resolution, as reported.
fn round_micros(t: f64) -> f64 {
    (t * 1e6).round() / 1e6
}

pub fn run_job(cfg: &SweepConfig, job: &Job, rep: usize, tol: &Tolerance) -> BenchRecord {
    let cell = job.cell;
    let mut record = BenchRecord {
        nx: cell.nx,
        nu: cell.nu,
        ny: cell.ny,
        horizon: cell.horizon,
        alpha: cfg.alpha,
        objective: cfg.objective.clone(),
        solver: job.solver.name().to_string(),
        allowance: job.allowance,
        rep,
        wall_time_s: 0.0,
        objective_value: None,
        max_residual: None,
        termination_residual: None,
        success: false,
    };
    let start = Instant::now();
    let outcome = stochastic_chain(cell.nx, cell.nu, cell.ny, cfg.alpha)
        .map_err(anyhow::Error::from)
        .and_then(|plant| {
            let obj = objective_for(&cfg.objective, &plant)?;
            Ok(run_solver(&plant, &obj, cell.horizon, job.solver, job.allowance, tol)?)
        });
    match outcome {
        Ok(out) => {
            record.wall_time_s = round_micros(out.wall_time_s).max(1e-6);
            record.objective_value = Some(out.objective_value);
            record.max_residual = Some(out.max_residual);
            record.termination_residual = Some(out.termination_residual);
            // The approximation is allowed to miss termination; success
            // means it ran to completion.
            record.success = match job.solver {
                Solver::DpApprox => true,
                _ => out.max_residual <= 1e-6,
            };
        }
        Err(_) => {
            record.wall_time_s = round_micros(start.elapsed().as_secs_f64()).max(1e-6);
        }
    }
    record
}

/// Runs every job `repetitions` times. With `workers > 1` jobs run on a
/// thread pool; otherwise sequentially in config order.
pub fn run_sweep(cfg: &SweepConfig, workers: usize, tol: &Tolerance) -> Result<Vec<BenchRecord>> {
    let tasks: Vec<(Job, usize)> = cfg
        .jobs()
        .into_iter()
        .flat_map(|job| (0..cfg.repetitions).map(move |rep| (job, rep)))
        .collect();
    if workers <= 1 {
        return Ok(tasks.iter().map(|(job, rep)| run_job(cfg, job, *rep, tol)).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build()?;
    Ok(pool.install(|| {
        tasks
            .par_iter()
            .map(|(job, rep)| run_job(cfg, job, *rep, tol))
            .collect()
    }))
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

/// Median over repetitions of one (cell, solver, allowance) group.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SummaryRow {
    pub nx: usize,
    pub nu: usize,
    pub ny: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub solver: String,
    pub allowance: Option<usize>,
    pub repetitions: usize,
    pub successes: usize,
    pub median_wall_time_s: Option<f64>,
    pub median_termination_residual: Option<f64>,
    pub median_max_residual: Option<f64>,
}

pub fn summarize(records: &[BenchRecord]) -> Vec<SummaryRow> {
    let mut keys: Vec<(Cell, String, Option<usize>)> = Vec::new();
    for r in records {
        let k = (r.cell(), r.solver.clone(), r.allowance);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(cell, solver, allowance)| {
            let group: Vec<&BenchRecord> = records
                .iter()
                .filter(|r| r.cell() == cell && r.solver == solver && r.allowance == allowance)
                .collect();
            let mut times: Vec<f64> = group.iter().map(|r| r.wall_time_s).collect();
            let mut term: Vec<f64> = group.iter().filter_map(|r| r.termination_residual).collect();
            let mut maxr: Vec<f64> = group.iter().filter_map(|r| r.max_residual).collect();
            SummaryRow {
                nx: cell.nx,
                nu: cell.nu,
                ny: cell.ny,
                horizon: cell.horizon,
                solver,
                allowance,
                repetitions: group.len(),
                successes: group.iter().filter(|r| r.success).count(),
                median_wall_time_s: median(&mut times),
                median_termination_residual: median(&mut term),
                median_max_residual: median(&mut maxr),
            }
        })
        .collect()
}

pub fn write_csv<W: std::io::Write>(records: &[BenchRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<BenchRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        out.push(row?);
    }
    Ok(out)
}
