use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{evaluate_with, one_hot, Assignment, AssignmentProblem, Evaluation, OptError, SolveMode, SolverStats, Tables, SLA_TOL_MS};
use crate::graph::SlaScope;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscreteOptions {
    /// Branch-and-bound node budget.
    pub max_nodes: u64,
    /// Largest `|H|^|V|` the oracle will enumerate.
    pub limit: f64,
}

impl Default for DiscreteOptions {
    fn default() -> Self {
        DiscreteOptions {
            max_nodes: 10_000_000,
            limit: 1e6,
        }
    }
}

fn check_mode(p: &AssignmentProblem) -> Result<(), OptError> {
    if p.mode != SolveMode::Discrete {
        return Err(OptError::Invalid("expected a discrete problem".into()));
    }
    Ok(())
}

/// Scores a complete choice; `None` when it breaks a hard constraint.
/// Shared by the search and the oracle so both see identical objectives.
fn score(p: &AssignmentProblem, tb: &Tables, choice: &[usize]) -> Result<Option<Evaluation>, OptError> {
    let eval = evaluate_with(p, tb, &one_hot(p, choice))?;
    Ok(eval.feasible(p.sla.is_hard()).then_some(eval))
}

fn finish(
    p: &AssignmentProblem,
    tb: &Tables,
    best: Option<(Vec<usize>, Evaluation)>,
    stats: SolverStats,
) -> Result<Assignment, OptError> {
    match best {
        Some((choice, eval)) => Ok(Assignment {
            x: one_hot(p, &choice),
            choice: Some(choice),
            eval,
            stats,
        }),
        None => Err(OptError::Infeasible(infeasibility_reason(p, tb))),
    }
}

fn infeasibility_reason(p: &AssignmentProblem, tb: &Tables) -> alloc::string::String {
    for (i, row) in tb.t.iter().enumerate() {
        if row.iter().all(Option::is_none) {
            return format!("task {} has no eligible class", p.tasks[i]);
        }
    }
    if let (Some(bound), true) = (p.t_sla(), p.sla.is_hard()) {
        let fastest: Vec<f64> = tb
            .t
            .iter()
            .map(|row| row.iter().flatten().copied().fold(f64::INFINITY, f64::min))
            .collect();
        match p.sla.scope {
            SlaScope::EndToEnd => {
                let best: f64 = fastest.iter().sum();
                if best > bound + SLA_TOL_MS {
                    return format!("latency: best case {best} ms exceeds the {bound} ms SLA");
                }
            }
            SlaScope::PerTask => {
                for (i, t) in fastest.iter().enumerate() {
                    if *t > bound + SLA_TOL_MS {
                        return format!("latency: task {} needs at least {t} ms, SLA is {bound} ms", p.tasks[i]);
                    }
                }
            }
        }
    }
    "no assignment meets the capacity, throughput and latency constraints together".into()
}

/// Exhaustive scan in lexicographic order (task 0 most significant, classes
/// ascending). Only a strictly better objective replaces the incumbent, so
/// ties go to the lexicographically first assignment.
pub fn enumerate_oracle(p: &AssignmentProblem, opts: &DiscreteOptions) -> Result<Assignment, OptError> {
    check_mode(p)?;
    let tb = p.tables()?;
    let (v, h) = (p.n_tasks(), p.n_classes());
    let count = libm::pow(h as f64, v as f64);
    if count > opts.limit {
        return Err(OptError::TooLarge(count));
    }
    let mut best: Option<(Vec<usize>, Evaluation)> = None;
    let mut stats = SolverStats::default();
    if h == 0 && v > 0 {
        return finish(p, &tb, None, stats);
    }
    let mut choice = vec![0usize; v];
    loop {
        if (0..v).all(|i| tb.t[i][choice[i]].is_some()) {
            stats.nodes_explored += 1;
            if let Some(eval) = score(p, &tb, &choice)? {
                if best.as_ref().is_none_or(|(_, b)| eval.objective < b.objective) {
                    best = Some((choice.clone(), eval));
                }
            }
        }
        // odometer, last task fastest
        let mut k = v;
        loop {
            if k == 0 {
                return finish(p, &tb, best, stats);
            }
            k -= 1;
            choice[k] += 1;
            if choice[k] < h {
                break;
            }
            choice[k] = 0;
        }
    }
}

struct Search<'a> {
    p: &'a AssignmentProblem,
    tb: &'a Tables,
    opts: &'a DiscreteOptions,
    min_cost: Vec<f64>,
    min_t: Vec<f64>,
    /// Incoming edges per task, as `(src, comm table index)`.
    incoming: Vec<Vec<(usize, usize)>>,
    choice: Vec<usize>,
    t: Vec<f64>,
    usage: Vec<Vec<f64>>,
    best: Option<(Vec<usize>, Evaluation)>,
    stats: SolverStats,
}

impl Search<'_> {
    fn lower_bound(&self, depth: usize, acc_cost: f64) -> (f64, f64) {
        let rest_cost: f64 = self.min_cost[depth..].iter().sum();
        let bound = self.p.t_sla();
        let slack = match (bound, self.p.sla.scope) {
            (None, _) => 0.0,
            (Some(b), SlaScope::EndToEnd) => {
                let e2e: f64 = self.t[..depth].iter().sum::<f64>() + self.min_t[depth..].iter().sum::<f64>();
                (e2e - b).max(0.0)
            }
            (Some(b), SlaScope::PerTask) => self.t[..depth]
                .iter()
                .chain(&self.min_t[depth..])
                .map(|t| (t - b).max(0.0))
                .sum(),
        };
        (acc_cost + rest_cost, slack)
    }

    fn dfs(&mut self, depth: usize, acc_cost: f64) -> Result<(), OptError> {
        self.stats.nodes_explored += 1;
        if self.stats.nodes_explored > self.opts.max_nodes {
            return Err(OptError::BudgetExceeded(self.opts.max_nodes));
        }
        let (base, slack) = self.lower_bound(depth, acc_cost);
        // float slack so rounding in the partial sums never prunes a true optimum
        if self.p.sla.is_hard() {
            if let Some(b) = self.p.t_sla() {
                if slack > SLA_TOL_MS + 1e-9 * (1.0 + b.abs()) {
                    return Ok(());
                }
            }
        }
        let penalty = self.p.sla.lambda_per_ms.map_or(0.0, |l| l * slack);
        if let Some((_, inc)) = &self.best {
            if base + penalty > inc.objective + 1e-9 * (1.0 + inc.objective.abs()) {
                return Ok(());
            }
        }

        let v = self.p.n_tasks();
        if depth == v {
            if let Some(eval) = score(self.p, self.tb, &self.choice)? {
                if self.best.as_ref().is_none_or(|(_, b)| eval.objective < b.objective) {
                    self.best = Some((self.choice.clone(), eval));
                }
            }
            return Ok(());
        }

        let i = depth;
        for j in 0..self.p.n_classes() {
            let (Some(tij), Some(cij)) = (self.tb.t[i][j], self.tb.c[i][j]) else {
                continue;
            };
            let mut t = tij;
            let mut cost = acc_cost + cij;
            for &(src, e) in &self.incoming[i] {
                let c = self.tb.edges[e].2[self.choice[src]][j];
                t += c.latency_ms;
                cost += c.cost_usd;
            }
            let mut fits = true;
            for r in 0..self.p.resources.len() {
                if let Some(cap) = self.p.cap(j, r) {
                    let used = self.usage[j][r] + self.p.theta(i, j, r);
                    if used > cap + 1e-9 * cap.abs().max(1.0) {
                        fits = false;
                    }
                }
            }
            if !fits {
                continue;
            }
            let saved = self.usage[j].clone();
            for r in 0..self.p.resources.len() {
                self.usage[j][r] += self.p.theta(i, j, r);
            }
            self.choice[i] = j;
            self.t[i] = t;
            let res = self.dfs(depth + 1, cost);
            self.usage[j] = saved;
            res?;
        }
        Ok(())
    }
}

/// Exact discrete optimum by depth-first branch-and-bound over tasks in
/// order. The bound adds the cheapest remaining node costs and the slack
/// penalty implied by the fastest remaining latencies; communication is
/// non-negative, so both are admissible. Ties resolve like
/// [`enumerate_oracle`].
pub fn solve_discrete(p: &AssignmentProblem, opts: &DiscreteOptions) -> Result<Assignment, OptError> {
    check_mode(p)?;
    let tb = p.tables()?;
    let (v, h) = (p.n_tasks(), p.n_classes());
    let fold_min = |row: &Vec<Option<f64>>| row.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    let min_cost: Vec<f64> = tb.c.iter().map(fold_min).collect();
    let min_t: Vec<f64> = tb.t.iter().map(fold_min).collect();
    if min_cost.iter().any(|c| c.is_infinite()) {
        return finish(p, &tb, None, SolverStats::default());
    }

    // edges running backwards in task order are only charged at the leaf;
    // leaving them out of partial sums keeps the bound admissible
    let mut incoming = vec![Vec::new(); v];
    for (e, (s, d, _)) in tb.edges.iter().enumerate() {
        if s < d {
            incoming[*d].push((*s, e));
        }
    }
    let mut search = Search {
        p,
        tb: &tb,
        opts,
        min_cost,
        min_t,
        incoming,
        choice: vec![0; v],
        t: vec![0.0; v],
        usage: vec![vec![0.0; p.resources.len()]; h],
        best: None,
        stats: SolverStats::default(),
    };
    search.dfs(0, 0.0)?;
    let (best, stats) = (search.best, search.stats);
    finish(p, &tb, best, stats)
}
