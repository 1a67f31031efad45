use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use super::{AttrValue, EdgeMode, GraphEdge, TaskGraph, TaskKind, TaskNode};

const MIDDLE_KINDS: [TaskKind; 7] = [
    TaskKind::ModelExec,
    TaskKind::ToolCall,
    TaskKind::GeneralCompute,
    TaskKind::MemoryLookup,
    TaskKind::ControlFlow,
    TaskKind::ObservationStore,
    TaskKind::KvStore,
];

const MODELS: [&str; 4] = ["llama3-8b-fp16", "llama3-8b-fp8", "llama3-70b-fp16", "llama3-70b-fp8"];

// ids that exercise quoting and the extended identifier charset
const ODD_IDS: [&str; 5] = ["edge", "n-dash", "has space", "q\"uote", "graph"];

struct Gen(ChaCha8Rng);

impl Gen {
    fn below(&mut self, n: u64) -> u64 {
        self.0.next_u64() % n
    }

    fn chance(&mut self, pct: u64) -> bool {
        self.below(100) < pct
    }

    fn float(&mut self) -> f64 {
        // quarter steps keep values short without hiding the float path
        self.below(4000) as f64 / 4.0
    }

    fn value(&mut self) -> AttrValue {
        match self.below(4) {
            0 => AttrValue::Bool(self.chance(50)),
            1 => AttrValue::Int(self.below(10_000) as i64 - 5_000),
            2 => AttrValue::Float(self.float() - 100.0),
            _ => AttrValue::Str(format!("s{}\\\n\t\"", self.below(100))),
        }
    }
}

/// Seeded random task graph with one `Input` source, one `Output` sink,
/// every middle node on some source-to-sink path, optional annotated
/// back-edges, typed payload attributes, and ids that need quoting.
/// LLM nodes name builtin models and carry token counts, so every lowering
/// pass applies.
pub fn random_graph(seed: u64, max_middle: usize) -> TaskGraph {
    let mut r = Gen(ChaCha8Rng::seed_from_u64(seed));
    let middle = 1 + r.below(max_middle.max(1) as u64) as usize;
    let n = middle + 2;

    let mut ids: Vec<String> = Vec::with_capacity(n);
    ids.push("in".into());
    for i in 0..middle {
        if r.chance(10) {
            ids.push(format!("{}{i}", ODD_IDS[r.below(ODD_IDS.len() as u64) as usize]));
        } else {
            ids.push(format!("n{i}"));
        }
    }
    ids.push("out".into());

    let mut g = TaskGraph::new(format!("rand{seed}"));
    for (i, id) in ids.iter().enumerate() {
        let kind = if i == 0 {
            TaskKind::Input
        } else if i == n - 1 {
            TaskKind::Output
        } else {
            MIDDLE_KINDS[r.below(MIDDLE_KINDS.len() as u64) as usize]
        };
        let mut node = TaskNode::new(id.clone(), kind);
        match kind {
            TaskKind::ModelExec => {
                let m = MODELS[r.below(MODELS.len() as u64) as usize];
                node = node
                    .with_attr("model", AttrValue::Str(m.into()))
                    .with_attr("in_tokens", AttrValue::Int(1 + r.below(8192) as i64))
                    .with_attr("out_tokens", AttrValue::Int(1 + r.below(2048) as i64));
            }
            TaskKind::ToolCall => {
                node.static_latency_ms = r.float();
                node.demand.net_bandwidth_gbps_bits = r.float() / 100.0;
                node.demand.gp_compute_units = r.float();
            }
            TaskKind::Input | TaskKind::Output => {}
            _ => {
                if r.chance(50) {
                    node.static_latency_ms = r.float();
                }
                if r.chance(30) {
                    node.demand.mem_capacity_gb = r.float();
                }
            }
        }
        for k in 0..r.below(3) {
            let v = r.value();
            node.payload.insert(format!("attr{k}"), v);
        }
        g.add_node(node);
    }

    let edge = |g: &mut TaskGraph, r: &mut Gen, s: usize, d: usize| {
        if g.edge(&ids[s], &ids[d]).is_some() {
            return;
        }
        let mut e = GraphEdge::new(ids[s].clone(), ids[d].clone());
        if r.chance(40) {
            e.transfer_bytes = r.below(1 << 20);
        }
        if r.chance(10) {
            e.mode = EdgeMode::Async;
        }
        if r.chance(10) {
            e.payload.insert("label".into(), r.value());
        }
        g.add_edge(e);
    };
    for i in 1..n - 1 {
        let from = r.below(i as u64) as usize;
        edge(&mut g, &mut r, from, i);
        let to = i + 1 + r.below((n - 1 - i) as u64) as usize;
        edge(&mut g, &mut r, i, to);
    }
    for _ in 0..r.below(n as u64) {
        let s = r.below(n as u64 - 1) as usize;
        let d = s + 1 + r.below((n - 1 - s) as u64) as usize;
        edge(&mut g, &mut r, s, d);
    }
    // back-edges stay among middle nodes so the ports are unaffected
    if middle >= 1 && r.chance(50) {
        let d = 1 + r.below(middle as u64) as usize;
        let s = d + r.below((middle + 1 - d) as u64) as usize;
        if g.edge(&ids[s], &ids[d]).is_none() {
            g.add_edge(GraphEdge::new(ids[s].clone(), ids[d].clone()).with_loop(1 + r.below(3) as u32));
        }
    }
    g.derive_ports();
    g
}
