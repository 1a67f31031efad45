use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::graph::{
    flatten_hierarchy, unroll_cycles, AttrValue, GraphEdge, GraphError, Payload, ResourceVector,
    TaskGraph, TaskKind, TaskNode,
};
use crate::perf::{kv_cache_bytes, ModelCatalog};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PassError {
    #[error("node {node}: unknown model `{model}`")]
    UnknownModel { node: String, model: String },
    #[error("node {0}: in_tokens and out_tokens are required")]
    MissingTokenCounts(String),
    #[error("plan does not match graph: {0}")]
    PlanMismatch(String),
    #[error("pass would create id `{0}`, which already exists")]
    IdCollision(String),
    #[error("unknown pass `{0}` (known: unroll, flatten, split_llm, split_tool)")]
    UnknownPass(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

pub const PASS_NAMES: [&str; 4] = ["unroll", "flatten", "split_llm", "split_tool"];

/// Node and edge deltas of one pass, counted over the graph and all nested graphs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassReport {
    pub pass: String,
    pub nodes_added: usize,
    pub nodes_removed: usize,
    pub edges_added: usize,
    pub edges_removed: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl PassReport {
    pub fn diff(pass: &str, before: &TaskGraph, after: &TaskGraph, notes: Vec<String>) -> Self {
        let (nb, eb) = inventory(before);
        let (na, ea) = inventory(after);
        PassReport {
            pass: pass.into(),
            nodes_added: na.difference(&nb).count(),
            nodes_removed: nb.difference(&na).count(),
            edges_added: ea.difference(&eb).count(),
            edges_removed: eb.difference(&ea).count(),
            notes,
        }
    }

    pub fn is_noop(&self) -> bool {
        self.nodes_added + self.nodes_removed + self.edges_added + self.edges_removed == 0
    }
}

type EdgeKey = (String, String, Option<u32>);

fn inventory(g: &TaskGraph) -> (BTreeSet<String>, BTreeSet<EdgeKey>) {
    let mut nodes = BTreeSet::new();
    let mut edges = BTreeSet::new();
    collect(g, "", &mut nodes, &mut edges);
    (nodes, edges)
}

fn collect(g: &TaskGraph, prefix: &str, nodes: &mut BTreeSet<String>, edges: &mut BTreeSet<EdgeKey>) {
    for n in &g.nodes {
        nodes.insert(format!("{prefix}{}", n.id));
        if let Some(sub) = &n.subgraph {
            collect(sub, &format!("{prefix}{}/", n.id), nodes, edges);
        }
    }
    for e in &g.edges {
        edges.insert((format!("{prefix}{}", e.src), format!("{prefix}{}", e.dst), e.loop_annotation));
    }
}

/// Applies `f` to every nested graph, then to `g` itself.
fn bottom_up(
    g: &TaskGraph,
    f: &mut impl FnMut(&mut TaskGraph) -> Result<(), PassError>,
) -> Result<TaskGraph, PassError> {
    let mut out = g.clone();
    for n in &mut out.nodes {
        if let Some(sub) = &n.subgraph {
            n.subgraph = Some(Box::new(bottom_up(sub, f)?));
        }
    }
    f(&mut out)?;
    Ok(out)
}

/// Replaces node `id` by the chain `first -> .. -> last`, moving incoming
/// edges to `first`, outgoing edges to `last`, and the ports with them.
fn replace_with_pair(g: &mut TaskGraph, id: &str, first: TaskNode, last: TaskNode, link: GraphEdge) -> Result<(), PassError> {
    for new in [&first.id, &last.id] {
        if g.node(new).is_some() {
            return Err(PassError::IdCollision(new.clone()));
        }
    }
    let pos = g.nodes.iter().position(|n| n.id == id).expect("node exists");
    let (f, l) = (first.id.clone(), last.id.clone());
    g.nodes.splice(pos..=pos, [first, last]);
    for e in &mut g.edges {
        if e.dst == id {
            e.dst = f.clone();
        }
        if e.src == id {
            e.src = l.clone();
        }
    }
    g.edges.push(link);
    for p in &mut g.inputs {
        if p == id {
            *p = f.clone();
        }
    }
    for p in &mut g.outputs {
        if p == id {
            *p = l.clone();
        }
    }
    Ok(())
}

/// Splits every LLM call into prefill and decode stages joined by a KV-cache
/// edge sized at batch 1. Both stages keep the call's attributes (including
/// `in_tokens`/`out_tokens`); the authored latency and demand stay on prefill.
pub fn split_llm(g: &TaskGraph, models: &ModelCatalog) -> Result<(TaskGraph, PassReport), PassError> {
    let mut notes = Vec::new();
    let out = bottom_up(g, &mut |g: &mut TaskGraph| {
        let targets: Vec<TaskNode> = g.nodes.iter().filter(|n| n.kind == TaskKind::ModelExec).cloned().collect();
        for n in targets {
            let name = n.attr_str("model").unwrap_or_default();
            let model = models.get(name).ok_or_else(|| PassError::UnknownModel {
                node: n.id.clone(),
                model: name.into(),
            })?;
            let (Some(isl), Some(_)) = (n.attr_u64("in_tokens"), n.attr_u64("out_tokens")) else {
                return Err(PassError::MissingTokenCounts(n.id.clone()));
            };
            // profiled figures describe the unsplit call, so neither stage inherits them
            let mut payload = n.payload.clone();
            let before = payload.len();
            payload.retain(|k, _| !k.starts_with("profile."));
            if payload.len() != before {
                notes.push(format!("{}: dropped profile.* attributes", n.id));
            }
            let prefill = TaskNode {
                id: format!("{}.prefill", n.id),
                kind: TaskKind::Prefill,
                demand: n.demand.clone(),
                static_latency_ms: n.static_latency_ms,
                payload: payload.clone(),
                subgraph: None,
            };
            let decode = TaskNode {
                id: format!("{}.decode", n.id),
                kind: TaskKind::Decode,
                demand: ResourceVector::default(),
                static_latency_ms: 0.0,
                payload,
                subgraph: None,
            };
            let mut kv = GraphEdge::new(prefill.id.clone(), decode.id.clone())
                .with_bytes(kv_cache_bytes(model, isl, 1));
            kv.payload.insert("kind".into(), AttrValue::Str("kv_store".into()));
            replace_with_pair(g, &n.id, prefill, decode, kv)?;
        }
        Ok(())
    })?;
    let report = PassReport::diff("split_llm", g, &out, notes);
    Ok((out, report))
}

/// Splits every tool call into a lookup (authored latency, network, disk and
/// resident-memory demand, all attributes) followed by a compute stage
/// (compute and memory-bandwidth demand).
pub fn split_tool(g: &TaskGraph) -> Result<(TaskGraph, PassReport), PassError> {
    let out = bottom_up(g, &mut |g: &mut TaskGraph| {
        let targets: Vec<TaskNode> = g.nodes.iter().filter(|n| n.kind == TaskKind::ToolCall).cloned().collect();
        for n in targets {
            let d = &n.demand;
            let lookup = TaskNode {
                id: format!("{}.lookup", n.id),
                kind: TaskKind::MemoryLookup,
                demand: ResourceVector {
                    net_bandwidth_gbps_bits: d.net_bandwidth_gbps_bits,
                    disk_capacity_gb: d.disk_capacity_gb,
                    mem_capacity_gb: d.mem_capacity_gb,
                    ..Default::default()
                },
                static_latency_ms: n.static_latency_ms,
                payload: n.payload.clone(),
                subgraph: None,
            };
            let compute = TaskNode {
                id: format!("{}.compute", n.id),
                kind: TaskKind::GeneralCompute,
                demand: ResourceVector {
                    hp_compute_tflops: d.hp_compute_tflops,
                    hp_compute_fp8_tflops: d.hp_compute_fp8_tflops,
                    mem_bandwidth_gbps_bytes: d.mem_bandwidth_gbps_bytes,
                    gp_compute_units: d.gp_compute_units,
                    ..Default::default()
                },
                static_latency_ms: 0.0,
                payload: Payload::new(),
                subgraph: None,
            };
            let link = GraphEdge::new(lookup.id.clone(), compute.id.clone());
            replace_with_pair(g, &n.id, lookup, compute, link)?;
        }
        Ok(())
    })?;
    let report = PassReport::diff("split_tool", g, &out, Vec::new());
    Ok((out, report))
}

fn fusable_kind(k: TaskKind) -> bool {
    !matches!(k, TaskKind::Input | TaskKind::Output | TaskKind::Agent)
}

/// Merges maximal chains of nodes placed on the same device class into one
/// node `a+b+c`. A link qualifies when it is the only edge out of its source
/// and the only edge into its destination, is not a loop edge, and neither
/// end is a port. The fused node sums latencies, combines demand sequentially,
/// keeps the common kind (else `GeneralCompute`), and records its members in
/// the `members` attribute.
pub fn fuse_colocated(
    g: &TaskGraph,
    classes: &BTreeMap<String, String>,
) -> Result<(TaskGraph, PassReport), PassError> {
    let ids = g.node_ids();
    if let Some(missing) = ids.iter().find(|id| !classes.contains_key(*id)) {
        return Err(PassError::PlanMismatch(format!("node {missing} has no placement")));
    }
    if let Some(extra) = classes.keys().find(|id| !ids.contains(*id)) {
        return Err(PassError::PlanMismatch(format!("placement names unknown node {extra}")));
    }
    let mut out_deg: BTreeMap<&str, usize> = BTreeMap::new();
    let mut in_deg: BTreeMap<&str, usize> = BTreeMap::new();
    for e in &g.edges {
        *out_deg.entry(e.src.as_str()).or_default() += 1;
        *in_deg.entry(e.dst.as_str()).or_default() += 1;
    }
    let ports: BTreeSet<&str> = g.inputs.iter().chain(&g.outputs).map(String::as_str).collect();
    let ok_node = |id: &str| {
        !ports.contains(id) && g.node(id).is_some_and(|n| fusable_kind(n.kind) && n.subgraph.is_none())
    };
    let mut next: BTreeMap<&str, &str> = BTreeMap::new();
    for e in &g.edges {
        let (s, d) = (e.src.as_str(), e.dst.as_str());
        if e.loop_annotation.is_none()
            && s != d
            && classes[s] == classes[d]
            && out_deg[s] == 1
            && in_deg[d] == 1
            && ok_node(s)
            && ok_node(d)
        {
            next.insert(s, d);
        }
    }
    let has_prev: BTreeSet<&str> = next.values().copied().collect();

    let mut fused_of: BTreeMap<String, String> = BTreeMap::new();
    let mut chains: Vec<Vec<&str>> = Vec::new();
    for n in &g.nodes {
        let start = n.id.as_str();
        if has_prev.contains(start) || !next.contains_key(start) {
            continue;
        }
        let mut chain = alloc::vec![start];
        let mut cur = start;
        while let Some(&d) = next.get(cur) {
            if chain.contains(&d) {
                break;
            }
            chain.push(d);
            cur = d;
        }
        let fused = chain.join("+");
        if ids.contains(&fused) {
            return Err(PassError::IdCollision(fused));
        }
        for m in &chain {
            fused_of.insert(String::from(*m), fused.clone());
        }
        chains.push(chain);
    }

    let mut out = TaskGraph {
        name: g.name.clone(),
        nodes: Vec::new(),
        edges: Vec::new(),
        inputs: g.inputs.clone(),
        outputs: g.outputs.clone(),
    };
    for n in &g.nodes {
        match fused_of.get(&n.id) {
            None => out.nodes.push(n.clone()),
            Some(f) => {
                let chain = chains.iter().find(|c| c[0] == n.id);
                let Some(chain) = chain else { continue };
                let members: Vec<&TaskNode> = chain.iter().map(|m| g.node(m).expect("member")).collect();
                let kind = if members.iter().all(|m| m.kind == members[0].kind) {
                    members[0].kind
                } else {
                    TaskKind::GeneralCompute
                };
                let mut node = TaskNode::new(f.clone(), kind);
                node.demand = members[1..].iter().fold(members[0].demand.clone(), |acc, m| acc.then(&m.demand));
                node.static_latency_ms = members.iter().map(|m| m.static_latency_ms).sum();
                node.payload.insert("members".into(), AttrValue::Str(chain.join(",")));
                out.nodes.push(node);
            }
        }
    }
    for e in &g.edges {
        let fs = fused_of.get(&e.src);
        if fs.is_some() && fs == fused_of.get(&e.dst) && next.get(e.src.as_str()) == Some(&e.dst.as_str()) {
            continue;
        }
        let mut ne = e.clone();
        if let Some(f) = fs {
            ne.src = f.clone();
        }
        if let Some(f) = fused_of.get(&e.dst) {
            ne.dst = f.clone();
        }
        out.edges.push(ne);
    }
    let notes = chains.iter().map(|c| format!("fused {}", c.join(" -> "))).collect();
    let report = PassReport::diff("fuse_colocated", g, &out, notes);
    Ok((out, report))
}

/// Class map for a fused graph: each node keeps its own class, fused nodes
/// take the class of their members.
pub fn remap_classes(classes: &BTreeMap<String, String>, fused: &TaskGraph) -> BTreeMap<String, String> {
    fused
        .nodes
        .iter()
        .filter_map(|n| {
            let first = n
                .attr_str("members")
                .and_then(|m| m.split(',').next())
                .unwrap_or(&n.id);
            classes.get(first).or_else(|| classes.get(&n.id)).map(|c| (n.id.clone(), c.clone()))
        })
        .collect()
}

/// Runs the named passes in order.
pub fn run_passes(
    g: &TaskGraph,
    names: &[&str],
    models: &ModelCatalog,
) -> Result<(TaskGraph, Vec<PassReport>), PassError> {
    let mut cur = g.clone();
    let mut reports = Vec::new();
    for name in names {
        let (next, report) = match *name {
            "unroll" => {
                let u = unroll_cycles(&cur)?;
                let r = PassReport::diff("unroll", &cur, &u, Vec::new());
                (u, r)
            }
            "flatten" => {
                let f = flatten_hierarchy(&cur)?;
                let r = PassReport::diff("flatten", &cur, &f, Vec::new());
                (f, r)
            }
            "split_llm" => split_llm(&cur, models)?,
            "split_tool" => split_tool(&cur)?,
            other => return Err(PassError::UnknownPass(other.to_string())),
        };
        cur = next;
        reports.push(report);
    }
    Ok((cur, reports))
}
