//! Agent workloads as directed task graphs.
//!
//! A [`TaskGraph`] may contain cycles as long as every back-edge carries a
//! `loop_annotation` (maximum iteration count). Planning always happens on the
//! unrolled, flattened form produced by [`unroll_cycles`] and [`flatten_hierarchy`].

mod flatten;
mod gen;
pub(crate) mod path;
mod unroll;
mod validate;

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use flatten::flatten_hierarchy;
pub use gen::random_graph;
pub use path::{critical_path_ms, topo_order, Timings};
pub use unroll::unroll_cycles;
pub use validate::{validate_graph, DiagCode, Diagnostic};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GraphError {
    #[error("cycle through edge {edge} has no loop annotation")]
    UnboundedCycle { edge: String },
    #[error("graph contains a cycle")]
    CyclicGraph,
    #[error("no time supplied for node {0}")]
    MissingTime(String),
    #[error("agent {agent}: port mismatch ({reason})")]
    PortMismatch { agent: String, reason: String },
    #[error("invalid graph: {0}")]
    Invalid(String),
    #[error("invalid SLA: {0}")]
    InvalidSla(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Input,
    Output,
    /// Composite controller; the node carries a nested graph in `subgraph`.
    Agent,
    ModelExec,
    Prefill,
    Decode,
    ToolCall,
    MemoryLookup,
    KvStore,
    GeneralCompute,
    ControlFlow,
    ObservationStore,
}

impl TaskKind {
    pub const ALL: [TaskKind; 12] = [
        TaskKind::Input,
        TaskKind::Output,
        TaskKind::Agent,
        TaskKind::ModelExec,
        TaskKind::Prefill,
        TaskKind::Decode,
        TaskKind::ToolCall,
        TaskKind::MemoryLookup,
        TaskKind::KvStore,
        TaskKind::GeneralCompute,
        TaskKind::ControlFlow,
        TaskKind::ObservationStore,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Input => "input",
            TaskKind::Output => "output",
            TaskKind::Agent => "agent",
            TaskKind::ModelExec => "model_exec",
            TaskKind::Prefill => "prefill",
            TaskKind::Decode => "decode",
            TaskKind::ToolCall => "tool_call",
            TaskKind::MemoryLookup => "memory_lookup",
            TaskKind::KvStore => "kv_store",
            TaskKind::GeneralCompute => "general_compute",
            TaskKind::ControlFlow => "control_flow",
            TaskKind::ObservationStore => "observation_store",
        }
    }

    pub fn is_llm_stage(self) -> bool {
        matches!(self, TaskKind::Prefill | TaskKind::Decode)
    }
}

/// Typed attribute literal used in node/edge payloads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttrValue {
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
}

impl AttrValue {
    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            AttrValue::Int(v) => Some(v as f64),
            AttrValue::Float(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_u64(&self) -> Option<u64> {
        match *self {
            AttrValue::Int(v) if v >= 0 => Some(v as u64),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            AttrValue::Str(s) => Some(s),
            _ => None,
        }
    }
}

pub type Payload = BTreeMap<String, AttrValue>;

/// Demand (per task) or capacity (per device) along the six hardware axes.
///
/// As a demand, each component is an amount of work over the task's lifetime:
/// TFLOP of dense compute, GB streamed from memory, Gb sent over the network,
/// GB resident, GB on disk, abstract CPU units. Absent components are zero demand.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResourceVector {
    pub hp_compute_tflops: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hp_compute_fp8_tflops: Option<f64>,
    pub mem_bandwidth_gbps_bytes: f64,
    pub mem_capacity_gb: f64,
    pub net_bandwidth_gbps_bits: f64,
    pub disk_capacity_gb: f64,
    pub gp_compute_units: f64,
}

impl ResourceVector {
    /// Field names as they appear in JSON and `.agraph` attributes.
    pub const KEYS: [&'static str; 7] = [
        "hp_compute_tflops",
        "hp_compute_fp8_tflops",
        "mem_bandwidth_gbps_bytes",
        "mem_capacity_gb",
        "net_bandwidth_gbps_bits",
        "disk_capacity_gb",
        "gp_compute_units",
    ];

    pub fn get(&self, key: &str) -> Option<f64> {
        match key {
            "hp_compute_tflops" => Some(self.hp_compute_tflops),
            "hp_compute_fp8_tflops" => self.hp_compute_fp8_tflops,
            "mem_bandwidth_gbps_bytes" => Some(self.mem_bandwidth_gbps_bytes),
            "mem_capacity_gb" => Some(self.mem_capacity_gb),
            "net_bandwidth_gbps_bits" => Some(self.net_bandwidth_gbps_bits),
            "disk_capacity_gb" => Some(self.disk_capacity_gb),
            "gp_compute_units" => Some(self.gp_compute_units),
            _ => None,
        }
    }

    /// Sets a component by key; returns false for unknown keys.
    pub fn set(&mut self, key: &str, value: f64) -> bool {
        match key {
            "hp_compute_tflops" => self.hp_compute_tflops = value,
            "hp_compute_fp8_tflops" => self.hp_compute_fp8_tflops = Some(value),
            "mem_bandwidth_gbps_bytes" => self.mem_bandwidth_gbps_bytes = value,
            "mem_capacity_gb" => self.mem_capacity_gb = value,
            "net_bandwidth_gbps_bits" => self.net_bandwidth_gbps_bits = value,
            "disk_capacity_gb" => self.disk_capacity_gb = value,
            "gp_compute_units" => self.gp_compute_units = value,
            _ => return false,
        }
        true
    }

    /// Non-zero (or explicitly present) components in key order.
    pub fn entries(&self) -> Vec<(&'static str, f64)> {
        Self::KEYS
            .iter()
            .filter_map(|k| {
                let v = self.get(k)?;
                let present = v != 0.0 || (*k == "hp_compute_fp8_tflops");
                present.then_some((*k, v))
            })
            .collect()
    }

    pub fn is_nonnegative(&self) -> bool {
        Self::KEYS
            .iter()
            .all(|k| self.get(k).is_none_or(|v| v >= 0.0))
    }

    /// Demand of running `self` then `other` on one device: work adds up,
    /// resident memory is the peak of the two.
    pub fn then(&self, other: &ResourceVector) -> ResourceVector {
        ResourceVector {
            hp_compute_tflops: self.hp_compute_tflops + other.hp_compute_tflops,
            hp_compute_fp8_tflops: match (self.hp_compute_fp8_tflops, other.hp_compute_fp8_tflops) {
                (None, None) => None,
                (a, b) => Some(a.unwrap_or(0.0) + b.unwrap_or(0.0)),
            },
            mem_bandwidth_gbps_bytes: self.mem_bandwidth_gbps_bytes + other.mem_bandwidth_gbps_bytes,
            mem_capacity_gb: self.mem_capacity_gb.max(other.mem_capacity_gb),
            net_bandwidth_gbps_bits: self.net_bandwidth_gbps_bits + other.net_bandwidth_gbps_bits,
            disk_capacity_gb: self.disk_capacity_gb + other.disk_capacity_gb,
            gp_compute_units: self.gp_compute_units + other.gp_compute_units,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskNode {
    pub id: String,
    pub kind: TaskKind,
    #[serde(default)]
    pub demand: ResourceVector,
    #[serde(default)]
    pub static_latency_ms: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub payload: Payload,
    /// Present exactly when `kind == Agent`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subgraph: Option<Box<TaskGraph>>,
}

impl TaskNode {
    pub fn new(id: impl Into<String>, kind: TaskKind) -> Self {
        TaskNode {
            id: id.into(),
            kind,
            demand: ResourceVector::default(),
            static_latency_ms: 0.0,
            payload: Payload::new(),
            subgraph: None,
        }
    }

    pub fn with_attr(mut self, key: &str, value: AttrValue) -> Self {
        self.payload.insert(key.into(), value);
        self
    }

    pub fn with_latency(mut self, ms: f64) -> Self {
        self.static_latency_ms = ms;
        self
    }

    pub fn attr(&self, key: &str) -> Option<&AttrValue> {
        self.payload.get(key)
    }

    pub fn attr_u64(&self, key: &str) -> Option<u64> {
        self.attr(key).and_then(AttrValue::as_u64)
    }

    pub fn attr_f64(&self, key: &str) -> Option<f64> {
        self.attr(key).and_then(AttrValue::as_f64)
    }

    pub fn attr_str(&self, key: &str) -> Option<&str> {
        self.attr(key).and_then(AttrValue::as_str)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeMode {
    #[default]
    Sync,
    Async,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub src: String,
    pub dst: String,
    #[serde(default)]
    pub transfer_bytes: u64,
    #[serde(default)]
    pub mode: EdgeMode,
    /// Maximum iteration count; required on back-edges.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loop_annotation: Option<u32>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub payload: Payload,
}

impl GraphEdge {
    pub fn new(src: impl Into<String>, dst: impl Into<String>) -> Self {
        GraphEdge {
            src: src.into(),
            dst: dst.into(),
            transfer_bytes: 0,
            mode: EdgeMode::Sync,
            loop_annotation: None,
            payload: Payload::new(),
        }
    }

    pub fn with_bytes(mut self, bytes: u64) -> Self {
        self.transfer_bytes = bytes;
        self
    }

    pub fn with_loop(mut self, k: u32) -> Self {
        self.loop_annotation = Some(k);
        self
    }

    pub fn key(&self) -> (String, String) {
        (self.src.clone(), self.dst.clone())
    }

    pub fn label(&self) -> String {
        alloc::format!("{}->{}", self.src, self.dst)
    }

    /// KV-cache hand-off between a prefill and a decode stage.
    pub fn is_kv(&self) -> bool {
        self.payload.get("kind").and_then(AttrValue::as_str) == Some("kv_store")
    }

    /// True when the edge only carries defaults (no bytes, sync, no loop, no payload).
    pub fn is_plain(&self) -> bool {
        self.transfer_bytes == 0
            && self.mode == EdgeMode::Sync
            && self.loop_annotation.is_none()
            && self.payload.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskGraph {
    #[serde(default)]
    pub name: String,
    pub nodes: Vec<TaskNode>,
    pub edges: Vec<GraphEdge>,
    #[serde(default)]
    pub inputs: Vec<String>,
    #[serde(default)]
    pub outputs: Vec<String>,
}

impl TaskGraph {
    pub fn new(name: impl Into<String>) -> Self {
        TaskGraph {
            name: name.into(),
            ..Default::default()
        }
    }

    pub fn node(&self, id: &str) -> Option<&TaskNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn node_mut(&mut self, id: &str) -> Option<&mut TaskNode> {
        self.nodes.iter_mut().find(|n| n.id == id)
    }

    pub fn add_node(&mut self, node: TaskNode) -> &mut Self {
        self.nodes.push(node);
        self
    }

    pub fn add_edge(&mut self, edge: GraphEdge) -> &mut Self {
        self.edges.push(edge);
        self
    }

    pub fn node_ids(&self) -> BTreeSet<String> {
        self.nodes.iter().map(|n| n.id.clone()).collect()
    }

    pub fn edge(&self, src: &str, dst: &str) -> Option<&GraphEdge> {
        self.edges.iter().find(|e| e.src == src && e.dst == dst)
    }

    pub fn incoming<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a GraphEdge> + 'a {
        self.edges.iter().filter(move |e| e.dst == id)
    }

    pub fn outgoing<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a GraphEdge> + 'a {
        self.edges.iter().filter(move |e| e.src == id)
    }

    /// Recomputes `inputs`/`outputs` as the nodes without incoming and
    /// without outgoing edges respectively.
    pub fn derive_ports(&mut self) {
        let has_in: BTreeSet<&str> = self.edges.iter().map(|e| e.dst.as_str()).collect();
        let has_out: BTreeSet<&str> = self.edges.iter().map(|e| e.src.as_str()).collect();
        let pick = |set: &BTreeSet<&str>| {
            let mut v: Vec<String> = self
                .nodes
                .iter()
                .filter(|n| !set.contains(n.id.as_str()))
                .map(|n| n.id.clone())
                .collect();
            v.sort();
            v
        };
        let inputs = pick(&has_in);
        let outputs = pick(&has_out);
        self.inputs = inputs;
        self.outputs = outputs;
    }

    /// Pairs `(input, output)` such that the output is reachable from the input.
    pub fn port_reachability(&self) -> BTreeSet<(String, String)> {
        let mut succ: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for e in &self.edges {
            succ.entry(e.src.as_str()).or_default().push(e.dst.as_str());
        }
        let outputs: BTreeSet<&str> = self.outputs.iter().map(String::as_str).collect();
        let mut pairs = BTreeSet::new();
        for input in &self.inputs {
            let mut seen: BTreeSet<&str> = BTreeSet::new();
            let mut stack = alloc::vec![input.as_str()];
            while let Some(n) = stack.pop() {
                if !seen.insert(n) {
                    continue;
                }
                if outputs.contains(n) {
                    pairs.insert((input.clone(), String::from(n)));
                }
                if let Some(next) = succ.get(n) {
                    stack.extend(next.iter().copied());
                }
            }
        }
        pairs
    }

    /// Total node count including nodes of nested agent graphs (agents themselves excluded).
    pub fn leaf_count(&self) -> usize {
        self.nodes
            .iter()
            .map(|n| match &n.subgraph {
                Some(sub) if n.kind == TaskKind::Agent => sub.leaf_count(),
                _ => 1,
            })
            .sum()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlaMode {
    Latency,
    #[default]
    Throughput,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlaScope {
    PerTask,
    #[default]
    EndToEnd,
}

/// Service-level targets and the slack penalty.
///
/// `lambda_per_ms = None` means λ → ∞: latency bounds are hard.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SlaSpec {
    pub mode: SlaMode,
    pub ttft_ms: Option<f64>,
    pub tbt_ms: Option<f64>,
    pub e2e_ms: Option<f64>,
    /// Aggregate throughput bound R on Σ 1000/t_i (per second).
    pub min_throughput: Option<f64>,
    pub lambda_per_ms: Option<f64>,
    pub scope: SlaScope,
}

impl SlaSpec {
    pub fn latency(ttft_ms: f64, tbt_ms: f64) -> Self {
        SlaSpec {
            mode: SlaMode::Latency,
            ttft_ms: Some(ttft_ms),
            tbt_ms: Some(tbt_ms),
            ..Default::default()
        }
    }

    pub fn throughput() -> Self {
        SlaSpec::default()
    }

    pub fn end_to_end(e2e_ms: f64) -> Self {
        SlaSpec {
            mode: SlaMode::Latency,
            e2e_ms: Some(e2e_ms),
            ..Default::default()
        }
    }

    pub fn with_lambda(mut self, lambda_per_ms: f64) -> Self {
        self.lambda_per_ms = Some(lambda_per_ms);
        self
    }

    pub fn with_scope(mut self, scope: SlaScope) -> Self {
        self.scope = scope;
        self
    }

    pub fn is_hard(&self) -> bool {
        self.lambda_per_ms.is_none()
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        if let Some(l) = self.lambda_per_ms {
            if !(l >= 0.0) {
                return Err(GraphError::InvalidSla("lambda_per_ms must be >= 0".into()));
            }
        }
        for (name, v) in [
            ("ttft_ms", self.ttft_ms),
            ("tbt_ms", self.tbt_ms),
            ("e2e_ms", self.e2e_ms),
            ("min_throughput", self.min_throughput),
        ] {
            if let Some(v) = v {
                if !(v >= 0.0) {
                    return Err(GraphError::InvalidSla(alloc::format!("{name} must be >= 0")));
                }
            }
        }
        if self.mode == SlaMode::Latency
            && self.ttft_ms.is_none()
            && self.tbt_ms.is_none()
            && self.e2e_ms.is_none()
        {
            return Err(GraphError::InvalidSla(
                "latency mode needs at least one bound".into(),
            ));
        }
        Ok(())
    }
}
