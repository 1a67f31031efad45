use alloc::format;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use super::{AssignmentProblem, CommCost, EdgeComm, Profiled, SolveMode};
use crate::graph::{SlaScope, SlaSpec};

struct Rng(ChaCha8Rng);

impl Rng {
    fn below(&mut self, n: u64) -> u64 {
        self.0.next_u64() % n
    }

    fn chance(&mut self, pct: u64) -> bool {
        self.below(100) < pct
    }

    /// Quarter steps in `[0, max)`, coarse enough that ties happen.
    fn quarter(&mut self, max: u64) -> f64 {
        self.below(4 * max) as f64 / 4.0
    }
}

/// Seeded discrete instance with `1..=max_tasks` chained tasks,
/// `1..=max_classes` classes and two resources. Entries are quarter steps so
/// ties occur; some pairs are profiled or ineligible, some classes have
/// capacity limits, and the SLA is hard, soft or absent.
pub fn random_problem(seed: u64, max_tasks: usize, max_classes: usize) -> AssignmentProblem {
    let mut r = Rng(ChaCha8Rng::seed_from_u64(seed));
    let v = 1 + r.below(max_tasks.max(1) as u64) as usize;
    let h = 1 + r.below(max_classes.max(1) as u64) as usize;
    let nr = 2;

    let mut p = AssignmentProblem::new(
        (0..v).map(|i| format!("t{i}")).collect(),
        (0..h).map(|j| format!("c{j}")).collect(),
    );
    p.mode = SolveMode::Discrete;
    p.resources = ["compute".into(), "memory".into()].into();
    p.theta = (0..v)
        .map(|_| (0..h).map(|_| (0..nr).map(|_| r.quarter(8)).collect()).collect())
        .collect();
    p.perf = (0..h)
        .map(|_| {
            (0..nr)
                .map(|_| if r.chance(20) { None } else { Some(0.25 + r.quarter(4)) })
                .collect()
        })
        .collect();
    p.cap = (0..h)
        .map(|_| {
            (0..nr)
                .map(|_| if r.chance(30) { Some(r.quarter(16)) } else { None })
                .collect()
        })
        .collect();
    p.unit_cost = (0..h).map(|_| (0..nr).map(|_| r.quarter(4)).collect()).collect();
    p.static_latency = (0..v).map(|_| r.quarter(10)).collect();
    p.pipeline_cost = (0..v).map(|_| (0..h).map(|_| r.quarter(3)).collect()).collect();
    p.sync_cost = (0..v).map(|_| (0..h).map(|_| r.quarter(2)).collect()).collect();
    p.profiled = (0..v)
        .map(|_| {
            (0..h)
                .map(|_| {
                    r.chance(20).then(|| Profiled {
                        latency_ms: r.quarter(20),
                        cost_usd: r.quarter(8),
                    })
                })
                .collect()
        })
        .collect();
    p.eligible = (0..v).map(|_| (0..h).map(|_| !r.chance(10)).collect()).collect();
    p.gamma = if r.chance(50) { 1.0 } else { 0.5 };

    p.edges = (1..v)
        .map(|i| EdgeComm {
            src: format!("t{}", i - 1),
            dst: format!("t{i}"),
            comm: (0..h)
                .map(|a| {
                    (0..h)
                        .map(|b| {
                            if a == b {
                                CommCost::default()
                            } else {
                                CommCost {
                                    latency_ms: r.quarter(5),
                                    cost_usd: r.quarter(2),
                                }
                            }
                        })
                        .collect()
                })
                .collect::<Vec<_>>(),
        })
        .collect();

    let mut sla = if r.chance(80) {
        SlaSpec::end_to_end(r.quarter(20 * v as u64))
    } else {
        SlaSpec::throughput()
    };
    if r.chance(60) {
        sla = sla.with_lambda([0.0, 0.25, 1.0, 4.0][r.below(4) as usize]);
    }
    if r.chance(40) {
        sla = sla.with_scope(SlaScope::PerTask);
    }
    if r.chance(15) {
        sla.min_throughput = Some(r.quarter(200));
    }
    p.sla = sla;
    p
}
