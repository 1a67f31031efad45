//! The two-task, two-class worked example (prefill and decode on a
//! high-performance `HP` or cost-optimized `CO` class).

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{AssignmentProblem, CommCost, EdgeComm, Profiled, SolveMode};
use crate::graph::{SlaScope, SlaSpec};

pub const HP: usize = 0;
pub const CO: usize = 1;

/// prefill→HP, decode→HP
pub const OPTION_A: [usize; 2] = [HP, HP];
/// prefill→HP, decode→CO
pub const OPTION_B: [usize; 2] = [HP, CO];
/// prefill→CO, decode→CO
pub const OPTION_C: [usize; 2] = [CO, CO];
/// prefill→CO, decode→HP
pub const OPTION_D: [usize; 2] = [CO, HP];

fn names(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| String::from(*s)).collect()
}

fn prof(latency_ms: f64, cost_usd: f64) -> Option<Profiled> {
    Some(Profiled { latency_ms, cost_usd })
}

/// Discrete form with the priced options: prefill 80 ms/$0.08 or
/// 130 ms/$0.06, decode 25 ms/$0.03 or 30 ms/$0.01, and a 10 ms, $0.005 KV
/// transfer when prefill is on HP and decode on CO. Hard 120 ms end-to-end.
pub fn worked_example() -> AssignmentProblem {
    let mut p = AssignmentProblem::new(names(&["prefill", "decode"]), names(&["HP", "CO"]));
    p.profiled = vec![
        vec![prof(80.0, 0.08), prof(130.0, 0.06)],
        vec![prof(25.0, 0.03), prof(30.0, 0.01)],
    ];
    let mut comm = vec![vec![CommCost::default(); 2]; 2];
    comm[HP][CO] = CommCost {
        latency_ms: 10.0,
        cost_usd: 0.005,
    };
    p.edges = vec![EdgeComm {
        src: "prefill".into(),
        dst: "decode".into(),
        comm,
    }];
    p.sla = SlaSpec::end_to_end(120.0);
    p
}

/// [`worked_example`] with a soft SLA at `lambda` $/ms.
pub fn worked_example_soft(lambda: f64) -> AssignmentProblem {
    let mut p = worked_example();
    p.sla = p.sla.with_lambda(lambda);
    p
}

/// Fractional form from the per-token price table (1000 input, 500 output
/// tokens): prefill $0.00008 or $0.00005 per token, decode $0.00006 or
/// $0.00002. The KV transfer becomes a constant `d_decode,CO = 10` ms priced
/// through `γ = 0.0005` $/ms. A memory axis adds one capacity row per class.
pub fn worked_example_fractional(scope: SlaScope) -> AssignmentProblem {
    let mut p = AssignmentProblem::new(names(&["prefill", "decode"]), names(&["HP", "CO"]));
    p.mode = SolveMode::Fractional;
    p.resources = names(&["mem_gb"]);
    p.theta = vec![vec![vec![16.0], vec![16.0]], vec![vec![16.0], vec![16.0]]];
    p.cap = vec![vec![Some(80.0)], vec![Some(96.0)]];
    p.profiled = vec![
        vec![prof(80.0, 1000.0 * 0.00008), prof(130.0, 1000.0 * 0.00005)],
        vec![prof(25.0, 500.0 * 0.00006), prof(30.0, 500.0 * 0.00002)],
    ];
    p.pipeline_cost = vec![vec![0.0, 0.0], vec![0.0, 10.0]];
    p.gamma = 0.0005;
    p.sla = SlaSpec::end_to_end(120.0).with_scope(scope);
    p
}
