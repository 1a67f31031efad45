//! Graph planning and the prefill::decode TCO sweep.
//!
//! [`plan_graph`] lowers an agent graph, prices every task on every device
//! class with the perf model (or with `profile.<class>.*` attributes when the
//! graph carries measurements), and solves the discrete assignment problem.
//! [`sweep_pairs`] evaluates disaggregated prefill::decode pairings of an
//! LLM and ranks them by tokens/s per $/hr against a baseline pairing.

mod sweep;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dsl::{run_passes, PassError};
use crate::graph::path::finish_times;
use crate::graph::{
    validate_graph, GraphEdge, GraphError, SlaMode, SlaSpec, TaskGraph, TaskKind, TaskNode, Timings,
};
use crate::hw::{HardwareCatalog, HwError};
use crate::opt::{
    round_usd, solve_discrete, AssignmentProblem, CommCost, DiscreteOptions, EdgeComm, OptError, Profiled,
    SolveMode, SolverStats,
};
use crate::perf::{
    decode_time_ms, prefill_time_ms, Efficiency, ModelCatalog, ModelSpec, ParallelismConfig, PerfError,
    WorkloadShape,
};

pub use sweep::{
    normalize_vs_baseline, rate_match, sweep_pairs, PairLabel, StageChoice, SweepOptions, TcoRow,
};

pub const PLAN_SCHEMA: &str = "plan/v1";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlanError {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Pass(#[from] PassError),
    #[error(transparent)]
    Opt(#[from] OptError),
    #[error(transparent)]
    Hw(#[from] HwError),
    #[error(transparent)]
    Perf(#[from] PerfError),
    #[error("unknown model {0}")]
    UnknownModel(String),
    #[error("baseline {0} is not among the sweep rows")]
    BaselineMissing(String),
    #[error("baseline {label} is infeasible: {reason}")]
    BaselineInfeasible { label: String, reason: String },
    #[error("invalid label {0}; expected PREFILL::DECODE")]
    InvalidLabel(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlanOptions {
    /// Requests batched per LLM forward pass.
    pub batch: u64,
    pub tp_options: Vec<u32>,
    pub discrete: DiscreteOptions,
}

impl Default for PlanOptions {
    fn default() -> Self {
        PlanOptions {
            batch: 1,
            tp_options: vec![1, 2, 4, 8],
            discrete: DiscreteOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskPlacement {
    pub id: String,
    pub kind: TaskKind,
    pub class: String,
    pub parallelism: ParallelismConfig,
    pub service_ms: f64,
    pub cost_usd: f64,
    /// Output tokens produced (decode stages only).
    #[serde(default)]
    pub out_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transfer {
    pub src: String,
    pub dst: String,
    pub bytes: u64,
    pub ms: f64,
    pub cost_usd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementPlan {
    pub schema: String,
    pub graph: String,
    /// Tasks in topological order.
    pub tasks: Vec<TaskPlacement>,
    pub transfers: Vec<Transfer>,
    pub ttft_ms: Option<f64>,
    pub tbt_ms: Option<f64>,
    /// Critical path through tasks and transfers.
    pub e2e_ms: f64,
    pub tokens_per_sec: f64,
    pub cost_usd: f64,
    pub penalty_usd: f64,
    pub cost_per_1m_tokens: Option<f64>,
    /// `prefill::decode` classes of the first LLM call.
    pub label: Option<String>,
    pub solver: SolverStats,
}

impl PlacementPlan {
    pub fn task(&self, id: &str) -> Option<&TaskPlacement> {
        self.tasks.iter().find(|t| t.id == id)
    }

    /// Task id → device class, the input `fuse_colocated` expects.
    pub fn class_map(&self) -> BTreeMap<String, String> {
        self.tasks.iter().map(|t| (t.id.clone(), t.class.clone())).collect()
    }

    /// The plan's DAG: one node per task, one edge per transfer.
    pub fn dag(&self) -> TaskGraph {
        let mut g = TaskGraph::new(self.graph.clone());
        for t in &self.tasks {
            g.add_node(TaskNode::new(t.id.clone(), t.kind).with_latency(t.service_ms));
        }
        for x in &self.transfers {
            g.add_edge(GraphEdge::new(x.src.clone(), x.dst.clone()).with_bytes(x.bytes));
        }
        g
    }

    pub fn timings(&self) -> Timings {
        let mut t = Timings::from_nodes(self.tasks.iter().map(|t| (t.id.as_str(), t.service_ms)));
        for x in &self.transfers {
            t = t.with_edge(&x.src, &x.dst, x.ms);
        }
        t
    }

    /// Earliest finish time of every task with unlimited resources.
    pub fn finish_times(&self) -> Result<BTreeMap<String, f64>, GraphError> {
        finish_times(&self.dag(), &self.timings())
    }

    pub fn critical_path_ms(&self) -> Result<f64, GraphError> {
        Ok(self.finish_times()?.values().copied().fold(0.0, f64::max))
    }
}

/// The lowered graph and the assignment problem built from it.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanProblem {
    pub graph: TaskGraph,
    pub problem: AssignmentProblem,
    /// Parallelism chosen for each `(task, class)` pair.
    pub parallelism: Vec<Vec<ParallelismConfig>>,
    /// Bytes per problem edge, aligned with `problem.edges`.
    pub edge_bytes: Vec<u64>,
}

const LOWERING: [&str; 4] = ["unroll", "flatten", "split_llm", "split_tool"];

fn is_port(k: TaskKind) -> bool {
    matches!(k, TaskKind::Input | TaskKind::Output)
}

fn profile(payload: &crate::graph::Payload, key: &str) -> Option<f64> {
    payload.get(key).and_then(|v| v.as_f64())
}

fn has_profiles(payload: &crate::graph::Payload) -> bool {
    payload.keys().any(|k| k.starts_with("profile."))
}

fn transfer_ms(bytes: u64, link_gbps: f64) -> f64 {
    bytes as f64 * 8.0 / (link_gbps * 1e9) * 1000.0
}

fn usd(hourly: f64, devices: u32, ms: f64) -> f64 {
    hourly * devices as f64 * ms / 3.6e6
}

/// Cheapest tensor-parallel degree for an LLM stage on one class, preferring
/// configurations inside the stage's SLA bound. `None` if the model fits no
/// configuration.
fn llm_stage(
    node: &TaskNode,
    m: &ModelSpec,
    class: &crate::hw::DeviceClass,
    hourly: f64,
    sla: &SlaSpec,
    opts: &PlanOptions,
) -> Option<(f64, f64, ParallelismConfig)> {
    let isl = node.attr_u64("in_tokens").unwrap_or(0);
    let osl = node.attr_u64("out_tokens").unwrap_or(0);
    let shape = WorkloadShape::new(isl, osl, opts.batch.max(1));
    let mut best: Option<(bool, f64, f64, ParallelismConfig)> = None;
    for &tp in &opts.tp_options {
        let par = ParallelismConfig::new(tp, 1);
        let (ms, bound) = match node.kind {
            TaskKind::Prefill => match prefill_time_ms(m, &shape, class, &par, &Efficiency::PREFILL) {
                Ok(e) => (e.ttft_ms, sla.ttft_ms.map(|b| e.ttft_ms <= b)),
                Err(_) => continue,
            },
            _ => match decode_time_ms(m, &shape, class, &par, &Efficiency::DECODE) {
                Ok(e) => (e.tbt_ms * osl as f64, sla.tbt_ms.map(|b| e.tbt_ms <= b)),
                Err(_) => continue,
            },
        };
        let ms = ms + node.static_latency_ms;
        let within = sla.mode != SlaMode::Latency || bound.unwrap_or(true);
        let cost = usd(hourly, par.devices(), ms) / shape.batch_size as f64;
        let better = match &best {
            None => true,
            Some((w, c, _, _)) => (within && !w) || (within == *w && cost < *c),
        };
        if better {
            best = Some((within, cost, ms, par));
        }
    }
    best.map(|(_, cost, ms, par)| (ms, cost, par))
}

/// Roofline over the task's demand vector; `None` when its resident memory
/// exceeds the device.
/// General-purpose units assumed for a class that does not declare any, i.e. its host CPU.
pub const HOST_GP_UNITS: f64 = 100.0;

fn generic_stage(node: &TaskNode, class: &crate::hw::DeviceClass) -> Option<f64> {
    let d = &node.demand;
    if d.mem_capacity_gb > class.mem_capacity_gb {
        return None;
    }
    let mut terms = vec![
        d.hp_compute_tflops / class.tflops_fp16,
        d.mem_bandwidth_gbps_bytes / class.mem_bandwidth_gbps_bytes,
        d.net_bandwidth_gbps_bits / class.scaleout_bw_gbps_bits,
    ];
    if let Some(fp8) = d.hp_compute_fp8_tflops {
        terms.push(fp8 / class.tflops_fp8.unwrap_or(class.tflops_fp16));
    }
    terms.push(d.gp_compute_units / class.gp_compute_units.unwrap_or(HOST_GP_UNITS));
    let seconds = terms.into_iter().fold(0.0, f64::max);
    Some(seconds * 1000.0 + node.static_latency_ms)
}

/// Lowers `g` and prices each task on each class.
///
/// Nodes with `profile.<class>.latency_ms` attributes use those figures (and
/// `profile.<class>.cost_usd`, else hourly cost × time) and are ineligible on
/// unprofiled classes. LLM stages use the roofline model at the cheapest
/// tensor-parallel degree; everything else uses its demand vector. Edges pay
/// `profile.<a>.<b>.*` when given, else bytes over the slower scale-out link;
/// co-located endpoints transfer for free.
pub fn build_problem(
    g: &TaskGraph,
    catalog: &HardwareCatalog,
    models: &ModelCatalog,
    sla: &SlaSpec,
    opts: &PlanOptions,
) -> Result<PlanProblem, PlanError> {
    let diags = validate_graph(g);
    if !diags.is_empty() {
        let text: Vec<String> = diags.iter().map(|d| d.to_string()).collect();
        return Err(PlanError::InvalidGraph(text.join("; ")));
    }
    catalog.validate()?;
    sla.validate()?;
    let (lowered, _) = run_passes(g, &LOWERING, models)?;
    let order = crate::graph::topo_order(&lowered)?;
    let nodes: Vec<&TaskNode> = order
        .iter()
        .map(|id| lowered.node(id).expect("topo ids exist"))
        .filter(|n| !is_port(n.kind))
        .collect();

    let classes = &catalog.classes;
    let hourly: Vec<f64> = classes
        .iter()
        .map(|c| catalog.hourly_cost(&c.name))
        .collect::<Result<_, _>>()?;
    let (v, h) = (nodes.len(), classes.len());
    let mut profiled = vec![vec![None; h]; v];
    let mut eligible = vec![vec![true; h]; v];
    let mut parallelism = vec![vec![ParallelismConfig::default(); h]; v];

    for (i, n) in nodes.iter().enumerate() {
        let measured = has_profiles(&n.payload);
        let model = match (n.kind.is_llm_stage(), n.attr_str("model")) {
            (true, Some(name)) if !measured => {
                Some(models.get(name).ok_or_else(|| PlanError::UnknownModel(name.into()))?)
            }
            _ => None,
        };
        for (j, c) in classes.iter().enumerate() {
            let priced = if measured {
                profile(&n.payload, &format!("profile.{}.latency_ms", c.name)).map(|ms| {
                    let cost = profile(&n.payload, &format!("profile.{}.cost_usd", c.name))
                        .unwrap_or_else(|| usd(hourly[j], 1, ms));
                    (ms, cost)
                })
            } else if let Some(m) = model {
                llm_stage(n, m, c, hourly[j], sla, opts).map(|(ms, cost, par)| {
                    parallelism[i][j] = par;
                    (ms, cost)
                })
            } else {
                generic_stage(n, c).map(|ms| (ms, usd(hourly[j], 1, ms)))
            };
            match priced {
                Some((latency_ms, cost_usd)) => profiled[i][j] = Some(Profiled { latency_ms, cost_usd }),
                None => eligible[i][j] = false,
            }
        }
    }

    let index: BTreeMap<&str, usize> = nodes.iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect();
    let mut edges = Vec::new();
    let mut edge_bytes = Vec::new();
    for e in &lowered.edges {
        if !(index.contains_key(e.src.as_str()) && index.contains_key(e.dst.as_str())) {
            continue;
        }
        let measured = has_profiles(&e.payload);
        let mut comm = vec![vec![CommCost::default(); h]; h];
        for (a, ca) in classes.iter().enumerate() {
            for (b, cb) in classes.iter().enumerate() {
                let key = format!("profile.{}.{}", ca.name, cb.name);
                comm[a][b] = if let Some(ms) = profile(&e.payload, &format!("{key}.latency_ms")) {
                    CommCost {
                        latency_ms: ms,
                        cost_usd: profile(&e.payload, &format!("{key}.cost_usd")).unwrap_or(0.0),
                    }
                } else if a == b || measured || e.transfer_bytes == 0 {
                    CommCost::default()
                } else {
                    CommCost {
                        latency_ms: transfer_ms(
                            e.transfer_bytes,
                            ca.scaleout_bw_gbps_bits.min(cb.scaleout_bw_gbps_bits),
                        ),
                        cost_usd: 0.0,
                    }
                };
            }
        }
        edges.push(EdgeComm {
            src: e.src.clone(),
            dst: e.dst.clone(),
            comm,
        });
        edge_bytes.push(e.transfer_bytes);
    }

    let mut problem = AssignmentProblem::new(
        nodes.iter().map(|n| n.id.clone()).collect(),
        classes.iter().map(|c| c.name.clone()).collect(),
    );
    problem.mode = SolveMode::Discrete;
    problem.profiled = profiled;
    problem.eligible = eligible;
    problem.edges = edges;
    problem.sla = sla.clone();
    Ok(PlanProblem {
        graph: lowered,
        problem,
        parallelism,
        edge_bytes,
    })
}

/// Plans `g` on `catalog`: lowers it, builds the assignment problem, and
/// solves it exactly.
pub fn plan_graph(
    g: &TaskGraph,
    catalog: &HardwareCatalog,
    models: &ModelCatalog,
    sla: &SlaSpec,
    opts: &PlanOptions,
) -> Result<PlacementPlan, PlanError> {
    let pp = build_problem(g, catalog, models, sla, opts)?;
    let a = solve_discrete(&pp.problem, &opts.discrete)?;
    let choice = a.choice.clone().expect("discrete solutions carry a choice");
    let p = &pp.problem;

    let tasks: Vec<TaskPlacement> = choice
        .iter()
        .enumerate()
        .map(|(i, &j)| {
            let node = pp.graph.node(&p.tasks[i]).expect("task exists");
            let priced = p.profiled(i, j).expect("chosen pairs are priced");
            TaskPlacement {
                id: node.id.clone(),
                kind: node.kind,
                class: p.classes[j].clone(),
                parallelism: pp.parallelism[i][j],
                service_ms: priced.latency_ms,
                cost_usd: priced.cost_usd,
                out_tokens: if node.kind == TaskKind::Decode {
                    node.attr_u64("out_tokens").unwrap_or(0)
                } else {
                    0
                },
            }
        })
        .collect();
    let transfers: Vec<Transfer> = p
        .edges
        .iter()
        .zip(&pp.edge_bytes)
        .map(|(e, bytes)| {
            let (s, d) = (p.task_index(&e.src).unwrap(), p.task_index(&e.dst).unwrap());
            let c = e.comm[choice[s]][choice[d]];
            Transfer {
                src: e.src.clone(),
                dst: e.dst.clone(),
                bytes: *bytes,
                ms: c.latency_ms,
                cost_usd: c.cost_usd,
            }
        })
        .collect();

    let mut plan = PlacementPlan {
        schema: PLAN_SCHEMA.into(),
        graph: g.name.clone(),
        tasks,
        transfers,
        ttft_ms: None,
        tbt_ms: None,
        e2e_ms: 0.0,
        tokens_per_sec: 0.0,
        cost_usd: round_usd(a.eval.cost_usd),
        penalty_usd: round_usd(a.eval.penalty_usd),
        cost_per_1m_tokens: None,
        label: None,
        solver: a.stats.clone(),
    };
    let finish = plan.finish_times()?;
    plan.e2e_ms = finish.values().copied().fold(0.0, f64::max);
    plan.ttft_ms = plan
        .tasks
        .iter()
        .filter(|t| t.kind == TaskKind::Prefill)
        .map(|t| finish[&t.id])
        .reduce(f64::min);
    plan.tbt_ms = plan
        .tasks
        .iter()
        .filter(|t| t.kind == TaskKind::Decode && t.out_tokens > 0)
        .map(|t| t.service_ms / t.out_tokens as f64)
        .reduce(f64::max);
    let tokens: u64 = plan.tasks.iter().map(|t| t.out_tokens).sum();
    if tokens > 0 && plan.e2e_ms > 0.0 {
        plan.tokens_per_sec = tokens as f64 * 1000.0 / plan.e2e_ms;
        plan.cost_per_1m_tokens = Some(round_usd(plan.cost_usd / tokens as f64 * 1e6));
    }
    plan.label = plan
        .tasks
        .iter()
        .find(|t| t.kind == TaskKind::Prefill)
        .and_then(|pre| {
            let decode = plan
                .transfers
                .iter()
                .filter(|x| x.src == pre.id)
                .find_map(|x| plan.task(&x.dst).filter(|t| t.kind == TaskKind::Decode))?;
            Some(PairLabel::new(&pre.class, &decode.class).to_string())
        });
    Ok(plan)
}
