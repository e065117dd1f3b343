//! Benchmark harness and command-line front end for the SLS solvers.

pub mod cli;
pub mod config;
pub mod plot;
pub mod runner;

pub use config::{Cell, Job, Solver, SweepConfig};
pub use plot::{median_times, plot_data, Axis, PlotData};
pub use runner::{
    median, read_csv, run_job, run_solver, run_sweep, summarize, write_csv, BenchRecord, RunOutcome,
    SummaryRow,
};
