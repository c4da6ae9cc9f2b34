//! Experiment reports and their on-disk layout.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::error::Result;
use crate::io::{write_columns, Table};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub crate_version: String,
    pub config: ExperimentConfig,
}

impl Provenance {
    pub fn new(cfg: &ExperimentConfig) -> Self {
        let mut config = cfg.clone();
        config.output_dir = None;
        Self { config_hash: cfg.hash(), crate_version: env!("CARGO_PKG_VERSION").into(), config }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub n: usize,
    pub m: usize,
    pub dim: usize,
    pub hbar: f64,
    /// `‖ρ0 − ρ∞‖_{L²}`.
    pub initial_distance: f64,
    /// `J(0)` on the full model, when replay is enabled.
    pub uncontrolled_cost: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReductionSummary {
    pub r: usize,
    pub gramian_iterations: [usize; 2],
    pub gramian_residuals: [f64; 2],
    pub reduced_initial_norm: f64,
    /// Singular values of the balancing product, unnormalized.
    pub singular_values: Vec<f64>,
}

/// One feedback degree at one β. Missing costs (`null`) mean divergence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LawRow {
    pub p: usize,
    /// `J(u_p)`: full-model replay when enabled, otherwise the reduced closed loop.
    pub cost: Option<f64>,
    pub cost_reduced: Option<f64>,
    /// Cost of `U_p` on the open-loop discretization, comparable with the optimum.
    pub cost_discrete: Option<f64>,
    pub diverged: bool,
    pub divergence: Option<String>,
    /// `‖u_p − u_opt‖_{L²(0,T)}`.
    pub distance: Option<f64>,
    /// `V_p(y_{0,r})`.
    pub value_at_y0: f64,
    pub final_norm: f64,
    pub mass_drift: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimumRow {
    pub cost: Option<f64>,
    pub cost_discrete: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    pub converged: bool,
    /// Degree of the feedback control used as the starting iterate.
    pub warm_start: Option<usize>,
    /// Restarts with a tighter gradient tolerance needed to undercut every `U_p`.
    pub refinements: usize,
    pub mass_drift: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaRow {
    pub beta: f64,
    pub riccati_residual: f64,
    pub newton_steps: usize,
    pub laws: Vec<LawRow>,
    pub optimum: Option<OptimumRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub name: String,
    pub provenance: Provenance,
    pub model: ModelSummary,
    pub reduction: ReductionSummary,
    pub rows: Vec<BetaRow>,
}

fn or_inf(v: Option<f64>) -> f64 {
    v.unwrap_or(f64::INFINITY)
}

impl Report {
    pub fn degrees(&self) -> Vec<usize> {
        self.rows.first().map(|r| r.laws.iter().map(|l| l.p).collect()).unwrap_or_default()
    }

    fn table(&self, with_opt: bool, f: impl Fn(&LawRow) -> Option<f64>, opt: impl Fn(&OptimumRow) -> Option<f64>) -> Table {
        let with_opt = with_opt && self.rows.iter().all(|r| r.optimum.is_some());
        let mut columns: Vec<String> = self.degrees().iter().map(|p| format!("p{p}")).collect();
        if with_opt {
            columns.push("opt".into());
        }
        let rows = self
            .rows
            .iter()
            .map(|row| {
                let mut vals: Vec<f64> = row.laws.iter().map(|l| or_inf(f(l))).collect();
                if with_opt {
                    vals.push(row.optimum.as_ref().map_or(f64::INFINITY, |o| or_inf(opt(o))));
                }
                (format!("{:e}", row.beta), vals)
            })
            .collect();
        Table { row_label: "beta".into(), columns, rows }
    }

    /// `J(u_p)` and `J(u_opt)`; divergent entries are `inf`.
    pub fn cost_table(&self) -> Table {
        self.table(true, |l| l.cost, |o| o.cost.or(Some(o.cost_discrete)))
    }

    pub fn reduced_cost_table(&self) -> Table {
        self.table(false, |l| l.cost_reduced, |_| None)
    }

    pub fn discrete_cost_table(&self) -> Table {
        self.table(true, |l| l.cost_discrete, |o| Some(o.cost_discrete))
    }

    pub fn distance_table(&self) -> Table {
        self.table(false, |l| l.distance, |_| None)
    }

    pub fn value_table(&self) -> Table {
        self.table(false, |l| Some(l.value_at_y0), |_| None)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// `report.json`, `singular_values.csv` and `tables/*.csv` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir.join("tables"))?;
        std::fs::write(dir.join("report.json"), self.to_json()?)?;
        let sigma = &self.reduction.singular_values;
        let index: Vec<f64> = (1..=sigma.len()).map(|i| i as f64).collect();
        let s1 = sigma.first().copied().unwrap_or(1.0);
        let rel: Vec<f64> = sigma.iter().map(|s| s / s1).collect();
        write_columns(&dir.join("singular_values.csv"), &["index", "sigma", "sigma_rel"], &[&index, sigma, &rel])?;
        let t = dir.join("tables");
        self.cost_table().write_csv(&t.join("cost.csv"))?;
        self.reduced_cost_table().write_csv(&t.join("cost_reduced.csv"))?;
        self.discrete_cost_table().write_csv(&t.join("cost_discrete.csv"))?;
        self.distance_table().write_csv(&t.join("distance.csv"))?;
        self.value_table().write_csv(&t.join("value.csv"))?;
        Ok(())
    }
}
