use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{evaluate_with, Assignment, AssignmentProblem, OptError, SolveMode, SolverStats};
use crate::graph::SlaScope;

const PIVOT_TOL: f64 = 1e-9;
const MAX_ITERATIONS: u64 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowGroup {
    Assignment,
    Latency,
    Capacity,
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpRow {
    /// Sparse `(column, coefficient)` pairs.
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
    pub group: RowGroup,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpVar {
    X { task: usize, class: usize },
    /// `task` is `None` for the single end-to-end slack.
    Slack { task: Option<usize> },
}

/// Minimise `objective · v` subject to `rows` and `0 ≤ v ≤ upper`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpStandardForm {
    pub objective: Vec<f64>,
    pub rows: Vec<LpRow>,
    pub upper: Vec<Option<f64>>,
    pub vars: Vec<LpVar>,
}

impl LpStandardForm {
    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    /// Number of distinct constraint groups present.
    pub fn n_groups(&self) -> usize {
        let mut g: Vec<RowGroup> = self.rows.iter().map(|r| r.group).collect();
        g.sort();
        g.dedup();
        g.len()
    }

    pub fn validate(&self) -> Result<(), OptError> {
        let n = self.n_vars();
        if self.upper.len() != n || self.vars.len() != n {
            return Err(OptError::ShapeMismatch("LP bounds or names do not match the column count".into()));
        }
        if self.rows.iter().any(|r| r.coeffs.iter().any(|(c, _)| *c >= n)) {
            return Err(OptError::ShapeMismatch("LP row references a missing column".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub values: Vec<f64>,
    pub objective: f64,
    pub iterations: u64,
}

/// Linear form of a fractional problem. Columns are `x_ij` in row-major
/// order, then the slack variable(s) when the SLA has an end-to-end bound.
/// A hard SLA pins the slack to zero; ineligible pairs are pinned to zero.
pub fn build_lp(p: &AssignmentProblem) -> Result<LpStandardForm, OptError> {
    if p.mode != SolveMode::Fractional {
        return Err(OptError::Invalid("build_lp needs a fractional problem".into()));
    }
    if !p.edges.is_empty() {
        return Err(OptError::PairwiseInFractional);
    }
    if p.sla.min_throughput.is_some() {
        return Err(OptError::NonlinearConstraint);
    }
    let tb = p.tables()?;
    let (v, h) = (p.n_tasks(), p.n_classes());
    let col = |i: usize, j: usize| i * h + j;

    let mut objective = Vec::with_capacity(v * h + v);
    let mut upper = Vec::new();
    let mut vars = Vec::new();
    for i in 0..v {
        for j in 0..h {
            objective.push(tb.c[i][j].unwrap_or(0.0));
            upper.push(Some(if tb.c[i][j].is_some() { 1.0 } else { 0.0 }));
            vars.push(LpVar::X { task: i, class: j });
        }
    }
    let mut rows = Vec::new();
    for i in 0..v {
        rows.push(LpRow {
            coeffs: (0..h).map(|j| (col(i, j), 1.0)).collect(),
            sense: Sense::Eq,
            rhs: 1.0,
            group: RowGroup::Assignment,
        });
    }

    if let Some(bound) = p.t_sla() {
        let slack_cost = p.sla.lambda_per_ms.unwrap_or(0.0);
        let slack_upper = if p.sla.is_hard() { Some(0.0) } else { None };
        let latency_terms = |i: usize| {
            (0..h)
                .filter_map(|j| tb.t[i][j].map(|t| (col(i, j), t)))
                .collect::<Vec<_>>()
        };
        match p.sla.scope {
            SlaScope::EndToEnd => {
                let s = objective.len();
                objective.push(slack_cost);
                upper.push(slack_upper);
                vars.push(LpVar::Slack { task: None });
                let mut coeffs: Vec<(usize, f64)> = (0..v).flat_map(latency_terms).collect();
                coeffs.push((s, -1.0));
                rows.push(LpRow {
                    coeffs,
                    sense: Sense::Le,
                    rhs: bound,
                    group: RowGroup::Latency,
                });
            }
            SlaScope::PerTask => {
                for i in 0..v {
                    let s = objective.len();
                    objective.push(slack_cost);
                    upper.push(slack_upper);
                    vars.push(LpVar::Slack { task: Some(i) });
                    let mut coeffs = latency_terms(i);
                    coeffs.push((s, -1.0));
                    rows.push(LpRow {
                        coeffs,
                        sense: Sense::Le,
                        rhs: bound,
                        group: RowGroup::Latency,
                    });
                }
            }
        }
    }

    for j in 0..h {
        for r in 0..p.resources.len() {
            if let Some(cap) = p.cap(j, r) {
                rows.push(LpRow {
                    coeffs: (0..v).map(|i| (col(i, j), p.theta(i, j, r))).collect(),
                    sense: Sense::Le,
                    rhs: cap,
                    group: RowGroup::Capacity,
                });
            }
        }
    }
    Ok(LpStandardForm {
        objective,
        rows,
        upper,
        vars,
    })
}

/// Dense two-phase simplex with Bland's rule.
pub fn solve_lp(lp: &LpStandardForm) -> Result<LpSolution, OptError> {
    lp.validate()?;
    let n = lp.n_vars();

    // upper bounds become ordinary rows
    let mut rows: Vec<(Vec<f64>, Sense, f64)> = Vec::new();
    for r in &lp.rows {
        let mut dense = vec![0.0; n];
        for (c, a) in &r.coeffs {
            dense[*c] += a;
        }
        rows.push((dense, r.sense, r.rhs));
    }
    for (k, u) in lp.upper.iter().enumerate() {
        if let Some(u) = u {
            let mut dense = vec![0.0; n];
            dense[k] = 1.0;
            rows.push((dense, Sense::Le, *u));
        }
    }
    for (a, sense, b) in rows.iter_mut() {
        if *b < 0.0 {
            a.iter_mut().for_each(|x| *x = -*x);
            *b = -*b;
            *sense = match sense {
                Sense::Le => Sense::Ge,
                Sense::Ge => Sense::Le,
                Sense::Eq => Sense::Eq,
            };
        }
    }

    let m = rows.len();
    let n_slack = rows.iter().filter(|r| r.1 != Sense::Eq).count();
    let n_art = rows.iter().filter(|r| r.1 != Sense::Le).count();
    let width = n + n_slack + n_art;
    let art_start = n + n_slack;
    let mut t = Tableau {
        a: vec![vec![0.0; width + 1]; m + 1],
        basis: vec![0; m],
        width,
        iterations: 0,
    };
    let (mut next_slack, mut next_art) = (n, art_start);
    for (i, (a, sense, b)) in rows.iter().enumerate() {
        t.a[i][..n].copy_from_slice(a);
        t.a[i][width] = *b;
        match sense {
            Sense::Le => {
                t.a[i][next_slack] = 1.0;
                t.basis[i] = next_slack;
                next_slack += 1;
            }
            Sense::Ge => {
                t.a[i][next_slack] = -1.0;
                next_slack += 1;
                t.a[i][next_art] = 1.0;
                t.basis[i] = next_art;
                next_art += 1;
            }
            Sense::Eq => {
                t.a[i][next_art] = 1.0;
                t.basis[i] = next_art;
                next_art += 1;
            }
        }
    }

    // phase 1: minimise the sum of artificials
    if n_art > 0 {
        let mut cost = vec![0.0; width];
        cost[art_start..].iter_mut().for_each(|c| *c = 1.0);
        t.set_objective(&cost);
        t.run(width)?;
        let infeasibility = -t.a[m][width];
        let scale = 1.0 + rows.iter().map(|r| r.2.abs()).fold(0.0, f64::max);
        if infeasibility > 1e-9 * scale {
            return Err(OptError::Infeasible("the LP constraints admit no solution".into()));
        }
        // pivot zero-valued artificials out where a structural column allows it
        for i in 0..m {
            if t.basis[i] >= art_start {
                if let Some(j) = (0..art_start).find(|&j| t.a[i][j].abs() > PIVOT_TOL) {
                    t.pivot(i, j);
                }
            }
        }
    }

    // phase 2
    let mut cost = vec![0.0; width];
    cost[..n].copy_from_slice(&lp.objective);
    t.set_objective(&cost);
    t.run(art_start)?;

    let mut values = vec![0.0; n];
    for (i, &b) in t.basis.iter().enumerate() {
        if b < n {
            values[b] = t.a[i][width];
        }
    }
    let objective = values.iter().zip(&lp.objective).map(|(x, c)| x * c).sum();
    Ok(LpSolution {
        values,
        objective,
        iterations: t.iterations,
    })
}

struct Tableau {
    /// `m` constraint rows then the reduced-cost row; last column is the rhs.
    a: Vec<Vec<f64>>,
    basis: Vec<usize>,
    width: usize,
    iterations: u64,
}

impl Tableau {
    fn set_objective(&mut self, cost: &[f64]) {
        let m = self.basis.len();
        let mut z = vec![0.0; self.width + 1];
        z[..self.width].copy_from_slice(cost);
        for i in 0..m {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                for (zk, ak) in z.iter_mut().zip(&self.a[i]) {
                    *zk -= cb * ak;
                }
            }
        }
        self.a[m] = z;
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.a[row][col];
        self.a[row].iter_mut().for_each(|x| *x /= p);
        let pivot_row = self.a[row].clone();
        for (i, r) in self.a.iter_mut().enumerate() {
            if i == row {
                continue;
            }
            let f = r[col];
            if f != 0.0 {
                for (x, y) in r.iter_mut().zip(&pivot_row) {
                    *x -= f * y;
                }
                r[col] = 0.0;
            }
        }
        self.basis[row] = col;
    }

    /// Pivots until no column below `limit` has a negative reduced cost.
    fn run(&mut self, limit: usize) -> Result<(), OptError> {
        let m = self.basis.len();
        loop {
            let Some(enter) = (0..limit).find(|&j| self.a[m][j] < -PIVOT_TOL) else {
                return Ok(());
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..m {
                let a = self.a[i][enter];
                if a > PIVOT_TOL {
                    let ratio = self.a[i][self.width] / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((l, best)) => {
                            if ratio < best - PIVOT_TOL
                                || (ratio <= best + PIVOT_TOL && self.basis[i] < self.basis[l])
                            {
                                Some((i, ratio))
                            } else {
                                Some((l, best))
                            }
                        }
                    };
                }
            }
            let Some((row, _)) = leave else {
                return Err(OptError::Unbounded);
            };
            self.iterations += 1;
            if self.iterations > MAX_ITERATIONS {
                return Err(OptError::CycleLimit);
            }
            self.pivot(row, enter);
        }
    }
}

/// Builds and solves the LP of a fractional problem, mapping the optimum
/// back to an [`Assignment`].
pub fn solve_fractional(p: &AssignmentProblem) -> Result<Assignment, OptError> {
    let lp = build_lp(p)?;
    let sol = solve_lp(&lp)?;
    let (v, h) = (p.n_tasks(), p.n_classes());
    let mut x = vec![vec![0.0; h]; v];
    for (k, var) in lp.vars.iter().enumerate() {
        if let LpVar::X { task, class } = var {
            x[*task][*class] = snap(sol.values[k]);
        }
    }
    let tb = p.tables()?;
    let eval = evaluate_with(p, &tb, &x)?;
    Ok(Assignment {
        x,
        choice: None,
        eval,
        stats: SolverStats {
            nodes_explored: 0,
            simplex_iterations: sol.iterations,
        },
    })
}

fn snap(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        0.0
    } else if (x - 1.0).abs() < 1e-12 {
        1.0
    } else {
        x.clamp(0.0, 1.0)
    }
}
