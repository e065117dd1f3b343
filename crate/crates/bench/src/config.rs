use std::collections::BTreeSet;

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Solver {
    Dp,
    DpApprox,
    Qp,
}

impl Solver {
    pub fn name(&self) -> &'static str {
        match self {
            Solver::Dp => "dp",
            Solver::DpApprox => "dp-approx",
            Solver::Qp => "qp",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "dp" => Ok(Solver::Dp),
            "dp-approx" => Ok(Solver::DpApprox),
            "qp" => Ok(Solver::Qp),
            other => bail!("unknown solver {other:?} (expected dp, dp-approx or qp)"),
        }
    }
}

/// One problem size.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub nx: usize,
    pub nu: usize,
    pub ny: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
}

/// Values swept along each axis while the others stay at the base cell.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axes {
    #[serde(default)]
    pub nx: Vec<usize>,
    #[serde(default)]
    pub nu: Vec<usize>,
    #[serde(default)]
    pub ny: Vec<usize>,
    #[serde(default, rename = "T")]
    pub horizon: Vec<usize>,
}

fn default_alpha() -> f64 {
    0.2
}

fn default_objective() -> String {
    "h2".into()
}

fn default_repetitions() -> usize {
    5
}

fn default_solvers() -> Vec<Solver> {
    vec![Solver::Dp]
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub base: Cell,
    #[serde(default)]
    pub sweep: Axes,
    /// Extra cells run as given.
    #[serde(default)]
    pub cells: Vec<Cell>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_objective")]
    pub objective: String,
    /// Absolute allowances `T_a` for `dp-approx`.
    #[serde(default)]
    pub allowances: Vec<usize>,
    /// Allowances given as `T - T_a`.
    #[serde(default)]
    pub allowance_offsets: Vec<usize>,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default = "default_solvers")]
    pub solvers: Vec<Solver>,
}

impl SweepConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).context("parsing sweep config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.repetitions >= 1, "repetitions must be at least 1");
        ensure!(!self.solvers.is_empty(), "at least one solver is required");
        ensure!(
            self.alpha > 0.0 && self.alpha < 1.0,
            "alpha must lie in (0, 1), got {}",
            self.alpha
        );
        ensure!(
            self.objective == "h2" || self.objective == "lq",
            "objective must be h2 or lq, got {:?}",
            self.objective
        );
        if self.solvers.contains(&Solver::DpApprox) {
            ensure!(
                !self.allowances.is_empty() || !self.allowance_offsets.is_empty(),
                "dp-approx needs allowances or allowance_offsets"
            );
        }
        for cell in self.cells() {
            ensure!(
                cell.nx >= 1 && cell.nu >= 1 && cell.ny >= 1,
                "dimensions must be positive in {cell:?}"
            );
            ensure!(
                cell.nu <= cell.nx && cell.ny <= cell.nx,
                "cell {cell:?} needs nu <= nx and ny <= nx"
            );
            ensure!(cell.horizon >= 2, "cell {cell:?} needs T >= 2");
        }
        Ok(())
    }

    /// Base cell, one-axis variations and explicit cells, without repeats.
    pub fn cells(&self) -> Vec<Cell> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        let mut push = |c: Cell| {
            if seen.insert(c) {
                out.push(c);
            }
        };
        push(self.base);
        for &nx in &self.sweep.nx {
            push(Cell { nx, ..self.base });
        }
        for &nu in &self.sweep.nu {
            push(Cell { nu, ..self.base });
        }
        for &ny in &self.sweep.ny {
            push(Cell { ny, ..self.base });
        }
        for &horizon in &self.sweep.horizon {
            push(Cell { horizon, ..self.base });
        }
        for &c in &self.cells {
            push(c);
        }
        out
    }

    /// Valid allowances for a horizon, in decreasing order.
    pub fn allowances_for(&self, horizon: usize) -> Vec<usize> {
        let mut set: BTreeSet<usize> = self.allowances.iter().copied().collect();
        set.extend(
            self.allowance_offsets
                .iter()
                .filter(|&&d| d < horizon)
                .map(|&d| horizon - d),
        );
        set.into_iter()
            .filter(|&t_a| (1..=horizon).contains(&t_a))
            .rev()
            .collect()
    }

    /// Every (cell, solver, allowance) combination to run.
    pub fn jobs(&self) -> Vec<Job> {
        let mut jobs = Vec::new();
        for cell in self.cells() {
            for &solver in &self.solvers {
                match solver {
                    Solver::DpApprox => {
                        for t_a in self.allowances_for(cell.horizon) {
                            jobs.push(Job {
                                cell,
                                solver,
                                allowance: Some(t_a),
                            });
                        }
                    }
                    _ => jobs.push(Job {
                        cell,
                        solver,
                        allowance: None,
                    }),
                }
            }
        }
        jobs
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Job {
    pub cell: Cell,
    pub solver: Solver,
    pub allowance: Option<usize>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(extra: &str) -> Result<SweepConfig> {
        SweepConfig::from_json(&format!(
            r#"{{"base": {{"nx": 5, "nu": 5, "ny": 5, "T": 10}}{extra}}}"#
        ))
    }

    #[test]
    fn defaults() {
        let cfg = config("").unwrap();
        assert_eq!(cfg.repetitions, 5);
        assert_eq!(cfg.alpha, 0.2);
        assert_eq!(cfg.solvers, [Solver::Dp]);
        assert_eq!(cfg.cells().len(), 1);
    }

    #[test]
    fn one_axis_at_a_time() {
        let cfg = config(r#", "sweep": {"nx": [5, 6, 7], "T": [10, 12]}"#).unwrap();
        let cells = cfg.cells();
        assert_eq!(cells.len(), 4);
        assert!(cells.iter().all(|c| c.nu == 5 && c.ny == 5));
        assert!(cells.contains(&Cell { nx: 5, nu: 5, ny: 5, horizon: 12 }));
    }

    #[test]
    fn allowance_lists_merge() {
        let cfg = config(
            r#", "solvers": ["dp", "dp-approx"], "allowances": [3, 40], "allowance_offsets": [0, 1, 2, 10]"#,
        )
        .unwrap();
        assert_eq!(cfg.allowances_for(10), [10, 9, 8, 3]);
        assert_eq!(cfg.jobs().len(), 5);
    }

    #[test]
    fn invalid_configs() {
        assert!(config(r#", "repetitions": 0"#).is_err());
        assert!(config(r#", "sweep": {"nu": [6]}"#).is_err());
        assert!(config(r#", "solvers": ["dp-approx"]"#).is_err());
        assert!(config(r#", "solvers": ["cvx"]"#).is_err());
        assert!(config(r#", "objective": "hinf""#).is_err());
        assert!(config(r#", "bogus": 1"#).is_err());
    }
}
