//! The task-to-device assignment problem.
//!
//! Every task `i` runs on one device class `j` (discrete mode) or is split
//! across classes in fractions `x[i][j]` (fractional mode). Task latency on a
//! class is the slowest resource term plus fixed overheads,
//!
//! ```text
//! t_ij    = max_r θ_ij^(r) / perf_j^(r) + l_i + d_ij + δ_ij
//! cost_ij = Σ_r θ_ij^(r) · c_j^(r) + γ · d_ij
//! ```
//!
//! A profiled `(latency, cost)` pair replaces the roofline and static terms;
//! `d`, `δ` and `γ·d` still apply on top. The objective is
//! total cost plus λ times the SLA slack. With an `end_to_end` scope the bound
//! applies to the sum of task latencies (one slack); with `per_task` each task
//! has its own slack. Discrete mode also charges pairwise edge communication,
//! which depends on the classes at both ends and adds to the receiving task's latency.

mod bnb;
pub mod examples;
mod lp;
mod random;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::graph::{SlaScope, SlaSpec};

pub use bnb::{enumerate_oracle, solve_discrete, DiscreteOptions};
pub use lp::{build_lp, solve_fractional, solve_lp, LpRow, LpSolution, LpStandardForm, LpVar, RowGroup, Sense};
pub use random::random_problem;

/// Absolute slack (ms) allowed when checking a latency bound.
pub const SLA_TOL_MS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OptError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("task {task} needs resource {resource} but class {class} has zero throughput for it")]
    ZeroPerf {
        task: String,
        class: String,
        resource: String,
    },
    #[error("the throughput bound is nonlinear in fractional mode; use discrete mode")]
    NonlinearConstraint,
    #[error("pairwise edge communication requires discrete mode")]
    PairwiseInFractional,
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("LP is unbounded")]
    Unbounded,
    #[error("simplex exceeded its iteration limit")]
    CycleLimit,
    #[error("branch-and-bound budget of {0} nodes exhausted")]
    BudgetExceeded(u64),
    #[error("{0} assignments exceed the enumeration limit")]
    TooLarge(f64),
    #[error("invalid problem: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMode {
    Fractional,
    #[default]
    Discrete,
}

/// Measured latency and cost of a task on a class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Profiled {
    pub latency_ms: f64,
    pub cost_usd: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CommCost {
    pub latency_ms: f64,
    pub cost_usd: f64,
}

/// Communication charged on edge `src -> dst` when the endpoints run on
/// classes `(j_src, j_dst)`: `comm[j_src][j_dst]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeComm {
    pub src: String,
    pub dst: String,
    pub comm: Vec<Vec<CommCost>>,
}

/// Tables indexed `[i]`, `[i][j]`, `[j][r]` or `[i][j][r]`; an empty table
/// means all zeros (all `None` for `perf`, `cap` and `profiled`, all `true`
/// for `eligible`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentProblem {
    pub tasks: Vec<String>,
    pub classes: Vec<String>,
    #[serde(default)]
    pub resources: Vec<String>,
    #[serde(default)]
    pub theta: Vec<Vec<Vec<f64>>>,
    /// Work units per ms; `None` means the resource is not a bottleneck on that class.
    #[serde(default)]
    pub perf: Vec<Vec<Option<f64>>>,
    #[serde(default)]
    pub cap: Vec<Vec<Option<f64>>>,
    #[serde(default)]
    pub unit_cost: Vec<Vec<f64>>,
    #[serde(default)]
    pub static_latency: Vec<f64>,
    #[serde(default)]
    pub pipeline_cost: Vec<Vec<f64>>,
    #[serde(default)]
    pub sync_cost: Vec<Vec<f64>>,
    #[serde(default)]
    pub profiled: Vec<Vec<Option<Profiled>>>,
    #[serde(default)]
    pub eligible: Vec<Vec<bool>>,
    #[serde(default = "one")]
    pub gamma: f64,
    #[serde(default)]
    pub sla: SlaSpec,
    #[serde(default)]
    pub mode: SolveMode,
    #[serde(default)]
    pub edges: Vec<EdgeComm>,
}

fn one() -> f64 {
    1.0
}

impl AssignmentProblem {
    pub fn new(tasks: Vec<String>, classes: Vec<String>) -> Self {
        AssignmentProblem {
            tasks,
            classes,
            resources: Vec::new(),
            theta: Vec::new(),
            perf: Vec::new(),
            cap: Vec::new(),
            unit_cost: Vec::new(),
            static_latency: Vec::new(),
            pipeline_cost: Vec::new(),
            sync_cost: Vec::new(),
            profiled: Vec::new(),
            eligible: Vec::new(),
            gamma: 1.0,
            sla: SlaSpec::default(),
            mode: SolveMode::Discrete,
            edges: Vec::new(),
        }
    }

    pub fn n_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn theta(&self, i: usize, j: usize, r: usize) -> f64 {
        at3(&self.theta, i, j, r).unwrap_or(0.0)
    }

    pub fn perf(&self, j: usize, r: usize) -> Option<f64> {
        self.perf.get(j).and_then(|row| row.get(r)).copied().flatten()
    }

    pub fn cap(&self, j: usize, r: usize) -> Option<f64> {
        self.cap.get(j).and_then(|row| row.get(r)).copied().flatten()
    }

    pub fn unit_cost(&self, j: usize, r: usize) -> f64 {
        at2(&self.unit_cost, j, r).unwrap_or(0.0)
    }

    pub fn static_latency(&self, i: usize) -> f64 {
        self.static_latency.get(i).copied().unwrap_or(0.0)
    }

    pub fn d(&self, i: usize, j: usize) -> f64 {
        at2(&self.pipeline_cost, i, j).unwrap_or(0.0)
    }

    pub fn delta(&self, i: usize, j: usize) -> f64 {
        at2(&self.sync_cost, i, j).unwrap_or(0.0)
    }

    pub fn profiled(&self, i: usize, j: usize) -> Option<Profiled> {
        at2(&self.profiled, i, j).flatten()
    }

    pub fn eligible(&self, i: usize, j: usize) -> bool {
        at2(&self.eligible, i, j).unwrap_or(true)
    }

    pub fn task_index(&self, name: &str) -> Option<usize> {
        self.tasks.iter().position(|t| t == name)
    }

    /// Checks every non-empty table against `|V|`, `|H|` and `|R|`, and that
    /// costs, rates and latencies are non-negative.
    pub fn validate(&self) -> Result<(), OptError> {
        let (v, h, r) = (self.n_tasks(), self.n_classes(), self.resources.len());
        let shape = |name: &str, ok: bool| {
            if ok {
                Ok(())
            } else {
                Err(OptError::ShapeMismatch(format!("{name} has the wrong dimensions")))
            }
        };
        let dims2 = |t: &[Vec<f64>], a: usize, b: usize| t.is_empty() || (t.len() == a && t.iter().all(|x| x.len() == b));
        shape(
            "theta",
            self.theta.is_empty()
                || (self.theta.len() == v && self.theta.iter().all(|row| row.len() == h && row.iter().all(|x| x.len() == r))),
        )?;
        shape("perf", self.perf.is_empty() || (self.perf.len() == h && self.perf.iter().all(|x| x.len() == r)))?;
        shape("cap", self.cap.is_empty() || (self.cap.len() == h && self.cap.iter().all(|x| x.len() == r)))?;
        shape("unit_cost", dims2(&self.unit_cost, h, r))?;
        shape("static_latency", self.static_latency.is_empty() || self.static_latency.len() == v)?;
        shape("pipeline_cost", dims2(&self.pipeline_cost, v, h))?;
        shape("sync_cost", dims2(&self.sync_cost, v, h))?;
        shape(
            "profiled",
            self.profiled.is_empty() || (self.profiled.len() == v && self.profiled.iter().all(|x| x.len() == h)),
        )?;
        shape(
            "eligible",
            self.eligible.is_empty() || (self.eligible.len() == v && self.eligible.iter().all(|x| x.len() == h)),
        )?;
        for e in &self.edges {
            if self.task_index(&e.src).is_none() || self.task_index(&e.dst).is_none() {
                return Err(OptError::ShapeMismatch(format!("edge {}->{} names an unknown task", e.src, e.dst)));
            }
            shape("edge comm", e.comm.len() == h && e.comm.iter().all(|x| x.len() == h))?;
        }

        let neg = |name: &str, x: f64| {
            if x >= 0.0 {
                Ok(())
            } else {
                Err(OptError::Invalid(format!("{name} must be non-negative")))
            }
        };
        for x in self.theta.iter().flatten().flatten() {
            neg("theta", *x)?;
        }
        for x in self.perf.iter().chain(&self.cap).flatten().flatten() {
            neg("perf/cap", *x)?;
        }
        for x in self.unit_cost.iter().chain(&self.pipeline_cost).chain(&self.sync_cost).flatten() {
            neg("cost", *x)?;
        }
        for x in &self.static_latency {
            neg("static_latency", *x)?;
        }
        for p in self.profiled.iter().flatten().flatten() {
            neg("profiled", p.latency_ms)?;
            neg("profiled", p.cost_usd)?;
        }
        for c in self.edges.iter().flat_map(|e| e.comm.iter().flatten()) {
            neg("edge comm", c.latency_ms)?;
            neg("edge comm", c.cost_usd)?;
        }
        neg("gamma", self.gamma)?;
        self.sla.validate().map_err(|e| OptError::Invalid(format!("{e}")))?;
        Ok(())
    }

    /// Latency of task `i` on class `j`, excluding edge communication.
    pub fn compute_tij(&self, i: usize, j: usize) -> Result<f64, OptError> {
        let extra = self.d(i, j) + self.delta(i, j);
        if let Some(p) = self.profiled(i, j) {
            return Ok(p.latency_ms + extra);
        }
        let mut slowest = 0.0_f64;
        for r in 0..self.resources.len() {
            let theta = self.theta(i, j, r);
            if theta == 0.0 {
                continue;
            }
            match self.perf(j, r) {
                Some(p) if p > 0.0 => slowest = slowest.max(theta / p),
                Some(_) => {
                    return Err(OptError::ZeroPerf {
                        task: self.tasks[i].clone(),
                        class: self.classes[j].clone(),
                        resource: self.resources[r].clone(),
                    })
                }
                None => {}
            }
        }
        Ok(slowest + self.static_latency(i) + extra)
    }

    /// Cost of task `i` on class `j`, excluding edge communication.
    pub fn compute_cij(&self, i: usize, j: usize) -> f64 {
        let transfer = self.gamma * self.d(i, j);
        if let Some(p) = self.profiled(i, j) {
            return p.cost_usd + transfer;
        }
        let work: f64 = (0..self.resources.len())
            .map(|r| self.theta(i, j, r) * self.unit_cost(j, r))
            .sum();
        work + transfer
    }

    /// Latency bound `T_SLA`; `None` when the SLA has no end-to-end bound.
    pub fn t_sla(&self) -> Option<f64> {
        self.sla.e2e_ms
    }

    /// Per-(task, class) latency and cost tables; ineligible pairs are `None`.
    pub(crate) fn tables(&self) -> Result<Tables, OptError> {
        self.validate()?;
        let mut t = vec![vec![None; self.n_classes()]; self.n_tasks()];
        let mut c = vec![vec![None; self.n_classes()]; self.n_tasks()];
        for i in 0..self.n_tasks() {
            for j in 0..self.n_classes() {
                if self.eligible(i, j) {
                    t[i][j] = Some(self.compute_tij(i, j)?);
                    c[i][j] = Some(self.compute_cij(i, j));
                }
            }
        }
        let edges = self
            .edges
            .iter()
            .map(|e| (self.task_index(&e.src).unwrap(), self.task_index(&e.dst).unwrap(), e.comm.clone()))
            .collect();
        Ok(Tables { t, c, edges })
    }
}

fn at2<T: Copy>(t: &[Vec<T>], a: usize, b: usize) -> Option<T> {
    t.get(a).and_then(|row| row.get(b)).copied()
}

fn at3(t: &[Vec<Vec<f64>>], a: usize, b: usize, c: usize) -> Option<f64> {
    t.get(a).and_then(|x| x.get(b)).and_then(|x| x.get(c)).copied()
}

pub(crate) struct Tables {
    pub t: Vec<Vec<Option<f64>>>,
    pub c: Vec<Vec<Option<f64>>>,
    pub edges: Vec<(usize, usize, Vec<Vec<CommCost>>)>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub nodes_explored: u64,
    pub simplex_iterations: u64,
}

/// Cost, latency and SLA outcome of a (possibly fractional) assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Task and communication cost, without the slack penalty.
    pub cost_usd: f64,
    pub penalty_usd: f64,
    pub objective: f64,
    /// Per-task latency including incoming edge communication.
    pub t_ms: Vec<f64>,
    /// Sum of task latencies.
    pub e2e_ms: f64,
    /// One entry per task (`per_task`) or a single entry (`end_to_end`).
    pub slack_ms: Vec<f64>,
    pub sla_satisfied: bool,
    pub capacity_ok: bool,
    pub throughput_ok: bool,
}

impl Evaluation {
    /// Feasible under the problem's hard constraints.
    pub fn feasible(&self, hard: bool) -> bool {
        self.capacity_ok && self.throughput_ok && (!hard || self.sla_satisfied)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub x: Vec<Vec<f64>>,
    /// Chosen class per task in discrete mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choice: Option<Vec<usize>>,
    pub eval: Evaluation,
    pub stats: SolverStats,
}

impl Assignment {
    pub fn objective(&self) -> f64 {
        self.eval.objective
    }

    pub fn class_of<'a>(&self, p: &'a AssignmentProblem, task: &str) -> Option<&'a str> {
        let i = p.task_index(task)?;
        let j = self.choice.as_ref()?.get(i)?;
        Some(p.classes[*j].as_str())
    }
}

/// One-hot matrix for a discrete choice.
pub fn one_hot(p: &AssignmentProblem, choice: &[usize]) -> Vec<Vec<f64>> {
    choice
        .iter()
        .map(|&j| {
            let mut row = vec![0.0; p.n_classes()];
            row[j] = 1.0;
            row
        })
        .collect()
}

/// Cost, latencies and slack of `x`. Zero entries are skipped, so an
/// ineligible pair only matters when it carries weight.
pub fn evaluate_assignment(p: &AssignmentProblem, x: &[Vec<f64>]) -> Result<Evaluation, OptError> {
    let tables = p.tables()?;
    evaluate_with(p, &tables, x)
}

pub(crate) fn evaluate_with(p: &AssignmentProblem, tb: &Tables, x: &[Vec<f64>]) -> Result<Evaluation, OptError> {
    let (v, h) = (p.n_tasks(), p.n_classes());
    if x.len() != v || x.iter().any(|row| row.len() != h) {
        return Err(OptError::ShapeMismatch(format!("assignment must be {v}x{h}")));
    }
    let mut cost = 0.0;
    let mut t = vec![0.0; v];
    for i in 0..v {
        for j in 0..h {
            let w = x[i][j];
            if w == 0.0 {
                continue;
            }
            let (Some(tij), Some(cij)) = (tb.t[i][j], tb.c[i][j]) else {
                return Err(OptError::Invalid(format!(
                    "task {} is not eligible on {}",
                    p.tasks[i], p.classes[j]
                )));
            };
            cost += w * cij;
            t[i] += w * tij;
        }
    }
    for (s, d, comm) in &tb.edges {
        for a in 0..h {
            for b in 0..h {
                let w = x[*s][a] * x[*d][b];
                if w == 0.0 {
                    continue;
                }
                cost += w * comm[a][b].cost_usd;
                t[*d] += w * comm[a][b].latency_ms;
            }
        }
    }
    let e2e: f64 = t.iter().sum();

    let bound = p.t_sla();
    let slack: Vec<f64> = match (bound, p.sla.scope) {
        (None, SlaScope::EndToEnd) => vec![0.0],
        (None, SlaScope::PerTask) => vec![0.0; v],
        (Some(b), SlaScope::EndToEnd) => vec![(e2e - b).max(0.0)],
        (Some(b), SlaScope::PerTask) => t.iter().map(|ti| (ti - b).max(0.0)).collect(),
    };
    let sla_satisfied = slack.iter().all(|s| *s <= SLA_TOL_MS);
    let penalty = match p.sla.lambda_per_ms {
        Some(l) => l * slack.iter().sum::<f64>(),
        None => 0.0,
    };

    let mut capacity_ok = true;
    for j in 0..h {
        for r in 0..p.resources.len() {
            if let Some(cap) = p.cap(j, r) {
                let used: f64 = (0..v).map(|i| x[i][j] * p.theta(i, j, r)).sum();
                if used > cap + 1e-9 * cap.abs().max(1.0) {
                    capacity_ok = false;
                }
            }
        }
    }
    let throughput_ok = match p.sla.min_throughput {
        None => true,
        Some(r) => {
            let rate: f64 = t.iter().map(|ti| if *ti > 0.0 { 1000.0 / ti } else { f64::INFINITY }).sum();
            rate >= r
        }
    };
    Ok(Evaluation {
        cost_usd: cost,
        penalty_usd: penalty,
        objective: cost + penalty,
        t_ms: t,
        e2e_ms: e2e,
        slack_ms: slack,
        sla_satisfied,
        capacity_ok,
        throughput_ok,
    })
}

/// Rounds a dollar amount to 1e-12 $, the precision reported in plans.
pub fn round_usd(x: f64) -> f64 {
    libm::round(x * 1e12) / 1e12
}

#[cfg(test)]
mod tests;
