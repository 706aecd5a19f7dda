//! Complete trace of one optimization run, serializable to JSON.

use serde::{Deserialize, Serialize};

use crate::data::{BoxBounds, Dataset};
use crate::error::{contract, Result};
use crate::gp::{GpHyperparams, GpModel};
use crate::hyper::FitStart;
use crate::metrics::{aggregate_curves, QuantileCurve};
use crate::region::WorstCaseBound;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Crbo,
    StandardBo,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Crbo => "crbo",
            Method::StandardBo => "standard_bo",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "crbo" => Ok(Method::Crbo),
            "standard_bo" => Ok(Method::StandardBo),
            other => Err(format!("unknown method `{other}` (expected crbo or standard_bo)")),
        }
    }
}

/// State of one model-based proposal step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// Position of the proposal in [`RunRecord::proposals`].
    pub proposal_index: usize,
    /// Hyperparameters of the model that produced the proposal.
    pub hyperparams: GpHyperparams,
    pub fit_start: FitStart,
    pub fit_converged: bool,
    /// Centering constant (maximum observation so far).
    pub value_offset: f64,
    /// gamma of the active constraint (1 when the constraint is off).
    pub gamma: f64,
    /// Posterior standard deviation at the proposal.
    pub sigma: f64,
    pub sigma_f: f64,
    pub ucb: f64,
    pub refined: bool,
    pub samples: usize,
    pub chains: usize,
    pub stuck_steps: usize,
    /// No data point was inside the region; the least uncertain data point was re-proposed.
    pub region_empty: bool,
    pub lipschitz: f64,
    /// Absent when the region radius is unbounded.
    pub bound: Option<WorstCaseBound>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub method: Method,
    pub gamma: f64,
    pub seed: u64,
    pub budget: usize,
    pub bounds: BoxBounds,
    /// Radius of the sphere the initial design was drawn on (`None` for a box design).
    pub design_radius: Option<f64>,
    /// Initial point plus initial design.
    pub design_count: usize,
    pub proposals: Vec<Vec<f64>>,
    pub observations: Vec<f64>,
    pub iterations: Vec<IterationRecord>,
    pub y_star: Option<f64>,
    pub simple_regret: Option<Vec<f64>>,
    pub average_return: Vec<f64>,
    pub complete: bool,
    pub error: Option<String>,
}

/// Outcome of re-checking the confidence constraint from a record.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ComplianceReport {
    pub checked: usize,
    pub violations: usize,
    /// Largest `(sigma - gamma * sigma_f) / sigma_f` seen.
    pub max_excess: f64,
}

impl ComplianceReport {
    pub fn merge(&mut self, other: &ComplianceReport) {
        self.checked += other.checked;
        self.violations += other.violations;
        self.max_excess = self.max_excess.max(other.max_excess);
    }
}

impl RunRecord {
    pub fn hyperparam_history(&self) -> impl Iterator<Item = &GpHyperparams> {
        self.iterations.iter().map(|it| &it.hyperparams)
    }

    pub fn bound_history(&self) -> impl Iterator<Item = Option<f64>> + '_ {
        self.iterations.iter().map(|it| it.bound.map(|b| b.bound))
    }

    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }

    /// Rebuild the model of each iteration from the recorded hyperparameters
    /// and data prefix, and check `sigma_n(proposal) <= gamma * sigma_f + tol * sigma_f`.
    pub fn verify_constraint(&self, tol: f64) -> Result<ComplianceReport> {
        let mut report = ComplianceReport::default();
        for it in &self.iterations {
            let n = it.proposal_index;
            contract!(n < self.proposals.len(), "record truncated");
            let data = Dataset::from_parts(
                self.dim(),
                self.proposals[..n].to_vec(),
                self.observations[..n].to_vec(),
            )?;
            let model = GpModel::fit(&data, it.hyperparams)?;
            let sf = model.signal_std();
            let sigma = model.std_dev(&self.proposals[n])?;
            let excess = (sigma - it.gamma * sf) / sf;
            report.checked += 1;
            report.max_excess = report.max_excess.max(excess);
            if excess > tol || !self.bounds.contains(&self.proposals[n]) {
                report.violations += 1;
            }
        }
        Ok(report)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("record serializes")
    }

    pub fn from_json(s: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

/// Per-iteration quartiles of the run metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub runs: usize,
    pub simple_regret: Option<QuantileCurve>,
    pub average_return: QuantileCurve,
}

/// Median and quartiles of simple regret and average return across records
/// sharing one budget.
pub fn aggregate_runs(records: &[RunRecord]) -> Result<RunSummary> {
    contract!(!records.is_empty(), "no records to aggregate");
    let budget = records[0].budget;
    contract!(
        records.iter().all(|r| r.budget == budget),
        "records have mixed budgets: {:?}",
        records.iter().map(|r| r.budget).collect::<Vec<_>>()
    );
    contract!(
        records.iter().all(|r| r.average_return.len() == budget),
        "incomplete records cannot be aggregated"
    );
    let has_regret = records[0].simple_regret.is_some();
    contract!(
        records.iter().all(|r| r.simple_regret.is_some() == has_regret),
        "records disagree on regret availability"
    );
    let avg: Vec<&[f64]> = records.iter().map(|r| r.average_return.as_slice()).collect();
    let simple_regret = if has_regret {
        let reg: Vec<&[f64]> = records
            .iter()
            .map(|r| r.simple_regret.as_deref().expect("checked"))
            .collect();
        Some(aggregate_curves(&reg)?)
    } else {
        None
    };
    Ok(RunSummary {
        runs: records.len(),
        simple_regret,
        average_return: aggregate_curves(&avg)?,
    })
}
