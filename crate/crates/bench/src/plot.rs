//! Plot series from sweep results.

use std::collections::BTreeMap;

use anyhow::{bail, Result};
use serde::Serialize;

use crate::config::Cell;
use crate::runner::{median, BenchRecord};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Nx,
    Nu,
    Ny,
    Horizon,
    Allowance,
}

impl Axis {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "nx" => Axis::Nx,
            "nu" => Axis::Nu,
            "ny" => Axis::Ny,
            "T" | "t" | "horizon" => Axis::Horizon,
            "allowance" => Axis::Allowance,
            other => bail!("unknown axis {other:?} (expected nx, nu, ny, T or allowance)"),
        })
    }

    fn value(&self, r: &BenchRecord) -> Option<usize> {
        match self {
            Axis::Nx => Some(r.nx),
            Axis::Nu => Some(r.nu),
            Axis::Ny => Some(r.ny),
            Axis::Horizon => Some(r.horizon),
            Axis::Allowance => r.allowance,
        }
    }

    /// The coordinates held fixed while this axis varies.
    fn rest(&self, r: &BenchRecord) -> (usize, usize, usize, usize) {
        let c = r.cell();
        match self {
            Axis::Nx => (0, c.nu, c.ny, c.horizon),
            Axis::Nu => (c.nx, 0, c.ny, c.horizon),
            Axis::Ny => (c.nx, c.nu, 0, c.horizon),
            Axis::Horizon => (c.nx, c.nu, c.ny, 0),
            Axis::Allowance => (c.nx, c.nu, c.ny, c.horizon),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct PlotData {
    pub x: Vec<usize>,
    /// Median wall time per x value, keyed by solver. Allowance plots add
    /// `<solver>/termination_residual` series.
    pub series: BTreeMap<String, Vec<Option<f64>>>,
}

/// Picks the slice of records along `axis` with the widest coverage and
/// reduces each series to medians over repetitions.
pub fn plot_data(records: &[BenchRecord], axis: Axis) -> PlotData {
    let mut coverage: BTreeMap<(usize, usize, usize, usize), Vec<usize>> = BTreeMap::new();
    for r in records {
        if let Some(v) = axis.value(r) {
            let xs = coverage.entry(axis.rest(r)).or_default();
            if !xs.contains(&v) {
                xs.push(v);
            }
        }
    }
    let Some((&slice, _)) = coverage.iter().max_by(|a, b| a.1.len().cmp(&b.1.len()).then(b.0.cmp(a.0)))
    else {
        return PlotData::default();
    };
    let in_slice = |r: &&BenchRecord| axis.rest(r) == slice;

    let mut x: Vec<usize> = coverage[&slice].clone();
    x.sort_unstable();
    x.dedup();
    let mut series = BTreeMap::new();
    let solvers: Vec<String> = {
        let mut s: Vec<String> = records.iter().filter(in_slice).map(|r| r.solver.clone()).collect();
        s.sort();
        s.dedup();
        s
    };

    for solver in &solvers {
        let own: Vec<&BenchRecord> = records.iter().filter(in_slice).filter(|r| &r.solver == solver).collect();
        if axis == Axis::Allowance && own.iter().all(|r| r.allowance.is_none()) {
            // Full-solve baseline, repeated across the allowance axis.
            let mut t: Vec<f64> = own.iter().map(|r| r.wall_time_s).collect();
            let base = median(&mut t);
            series.insert(solver.clone(), vec![base; x.len()]);
            continue;
        }
        let at = |v: usize| own.iter().filter(move |r| axis.value(r) == Some(v));
        let times = x
            .iter()
            .map(|&v| median(&mut at(v).map(|r| r.wall_time_s).collect::<Vec<_>>()))
            .collect();
        series.insert(solver.clone(), times);
        if axis == Axis::Allowance {
            let term = x
                .iter()
                .map(|&v| median(&mut at(v).filter_map(|r| r.termination_residual).collect::<Vec<_>>()))
                .collect();
            series.insert(format!("{solver}/termination_residual"), term);
        }
    }
    PlotData { x, series }
}

/// Medians of wall time per cell and solver, for monotonicity checks.
pub fn median_times(records: &[BenchRecord], solver: &str) -> BTreeMap<Cell, f64> {
    let mut groups: BTreeMap<Cell, Vec<f64>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.solver == solver && r.allowance.is_none()) {
        groups.entry(r.cell()).or_default().push(r.wall_time_s);
    }
    groups
        .into_iter()
        .filter_map(|(c, mut t)| median(&mut t).map(|m| (c, m)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(nx: usize, solver: &str, allowance: Option<usize>, t: f64, term: f64) -> BenchRecord {
        BenchRecord {
            nx,
            nu: 2,
            ny: 2,
            horizon: 10,
            alpha: 0.2,
            objective: "h2".into(),
            solver: solver.into(),
            allowance,
            rep: 0,
            wall_time_s: t,
            objective_value: Some(1.0),
            max_residual: Some(term),
            termination_residual: Some(term),
            success: true,
        }
    }

    #[test]
    fn empty_input_gives_empty_series() {
        assert_eq!(plot_data(&[], Axis::Nx), PlotData::default());
    }

    #[test]
    fn per_axis_medians() {
        let rs = vec![
            rec(3, "dp", None, 1.0, 0.0),
            rec(3, "dp", None, 3.0, 0.0),
            rec(3, "dp", None, 2.0, 0.0),
            rec(5, "dp", None, 4.0, 0.0),
            rec(3, "qp", None, 9.0, 0.0),
        ];
        let p = plot_data(&rs, Axis::Nx);
        assert_eq!(p.x, [3, 5]);
        assert_eq!(p.series["dp"], [Some(2.0), Some(4.0)]);
        assert_eq!(p.series["qp"], [Some(9.0), None]);
    }

    #[test]
    fn allowance_series_include_residuals_and_baseline() {
        let rs = vec![
            rec(3, "dp", None, 2.0, 0.0),
            rec(3, "dp-approx", Some(9), 1.0, 1e-17),
            rec(3, "dp-approx", Some(10), 0.5, 1e-3),
        ];
        let p = plot_data(&rs, Axis::Allowance);
        assert_eq!(p.x, [9, 10]);
        assert_eq!(p.series["dp"], [Some(2.0), Some(2.0)]);
        assert_eq!(p.series["dp-approx"], [Some(1.0), Some(0.5)]);
        assert_eq!(p.series["dp-approx/termination_residual"], [Some(1e-17), Some(1e-3)]);
    }

    #[test]
    fn unknown_axis() {
        assert!(Axis::parse("alpha").is_err());
        assert_eq!(Axis::parse("T").unwrap(), Axis::Horizon);
    }
}
