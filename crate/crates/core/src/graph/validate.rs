use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{GraphEdge, TaskGraph, TaskKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiagCode {
    DuplicateNode,
    DuplicateEdge,
    DanglingEdge,
    UnboundedCycle,
    InvalidLoopBound,
    NegativeLatency,
    NegativeDemand,
    AgentWithoutSubgraph,
    SubgraphOnNonAgent,
    UnknownPort,
    InputHasIncoming,
    OutputHasOutgoing,
}

impl DiagCode {
    pub fn as_str(self) -> &'static str {
        match self {
            DiagCode::DuplicateNode => "duplicate-node",
            DiagCode::DuplicateEdge => "duplicate-edge",
            DiagCode::DanglingEdge => "dangling-edge",
            DiagCode::UnboundedCycle => "unbounded-cycle",
            DiagCode::InvalidLoopBound => "invalid-loop-bound",
            DiagCode::NegativeLatency => "negative-latency",
            DiagCode::NegativeDemand => "negative-demand",
            DiagCode::AgentWithoutSubgraph => "agent-without-subgraph",
            DiagCode::SubgraphOnNonAgent => "subgraph-on-non-agent",
            DiagCode::UnknownPort => "unknown-port",
            DiagCode::InputHasIncoming => "input-has-incoming",
            DiagCode::OutputHasOutgoing => "output-has-outgoing",
        }
    }
}

/// A structural problem found by [`validate_graph`]. `subject` is a node id
/// or an edge label `src->dst`, prefixed by `agent/` for nested graphs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub code: DiagCode,
    pub subject: String,
    pub message: String,
}

impl core::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{} [{}]: {}", self.code.as_str(), self.subject, self.message)
    }
}

pub fn validate_graph(g: &TaskGraph) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    validate_into(g, "", &mut out);
    out
}

fn validate_into(g: &TaskGraph, prefix: &str, out: &mut Vec<Diagnostic>) {
    let mut push = |code: DiagCode, subject: String, message: String| {
        out.push(Diagnostic {
            code,
            subject: format!("{prefix}{subject}"),
            message,
        })
    };

    let mut ids: BTreeSet<&str> = BTreeSet::new();
    for n in &g.nodes {
        if !ids.insert(n.id.as_str()) {
            push(DiagCode::DuplicateNode, n.id.clone(), "node id declared twice".into());
        }
        if !(n.static_latency_ms >= 0.0) {
            push(
                DiagCode::NegativeLatency,
                n.id.clone(),
                format!("static_latency_ms = {}", n.static_latency_ms),
            );
        }
        if !n.demand.is_nonnegative() {
            push(DiagCode::NegativeDemand, n.id.clone(), "demand component < 0".into());
        }
        match (n.kind, &n.subgraph) {
            (TaskKind::Agent, None) => push(
                DiagCode::AgentWithoutSubgraph,
                n.id.clone(),
                "agent node has no nested graph".into(),
            ),
            (k, Some(_)) if k != TaskKind::Agent => push(
                DiagCode::SubgraphOnNonAgent,
                n.id.clone(),
                format!("{} node carries a nested graph", k.as_str()),
            ),
            _ => {}
        }
    }

    let mut seen_edges: BTreeSet<(&str, &str)> = BTreeSet::new();
    for e in &g.edges {
        if !ids.contains(e.src.as_str()) || !ids.contains(e.dst.as_str()) {
            let missing = if ids.contains(e.src.as_str()) { &e.dst } else { &e.src };
            push(
                DiagCode::DanglingEdge,
                e.label(),
                format!("references missing node {missing}"),
            );
        }
        if !seen_edges.insert((e.src.as_str(), e.dst.as_str())) {
            push(DiagCode::DuplicateEdge, e.label(), "edge declared twice".into());
        }
        if e.loop_annotation == Some(0) {
            push(
                DiagCode::InvalidLoopBound,
                e.label(),
                "loop annotation must be >= 1".into(),
            );
        }
    }

    for port in &g.inputs {
        if !ids.contains(port.as_str()) {
            push(DiagCode::UnknownPort, port.clone(), "input port is not a node".into());
        } else if g.edges.iter().any(|e| &e.dst == port) {
            push(DiagCode::InputHasIncoming, port.clone(), "input port has incoming edges".into());
        }
    }
    for port in &g.outputs {
        if !ids.contains(port.as_str()) {
            push(DiagCode::UnknownPort, port.clone(), "output port is not a node".into());
        } else if g.edges.iter().any(|e| &e.src == port) {
            push(
                DiagCode::OutputHasOutgoing,
                port.clone(),
                "output port has outgoing edges".into(),
            );
        }
    }

    for edge in unannotated_cycles(g) {
        push(
            DiagCode::UnboundedCycle,
            edge,
            "cycle has no loop_annotation on any back-edge".into(),
        );
    }

    for n in &g.nodes {
        if let Some(sub) = &n.subgraph {
            let nested = format!("{prefix}{}/", n.id);
            validate_into(sub, &nested, out);
        }
    }
}

/// One edge label per strongly connected component that stays cyclic after
/// removing loop-annotated edges.
pub(crate) fn unannotated_cycles(g: &TaskGraph) -> Vec<String> {
    let forward: Vec<&GraphEdge> = g
        .edges
        .iter()
        .filter(|e| e.loop_annotation.is_none())
        .collect();
    let comps = strongly_connected(g, &forward);
    let mut out = Vec::new();
    for comp in comps {
        let cyclic_edges: Vec<String> = forward
            .iter()
            .filter(|e| comp.contains(e.src.as_str()) && comp.contains(e.dst.as_str()))
            .map(|e| e.label())
            .collect();
        if let Some(first) = cyclic_edges.into_iter().min() {
            out.push(first);
        }
    }
    out.sort();
    out
}

/// Kosaraju over the given edge subset. Returns only components that contain a cycle.
fn strongly_connected<'a>(g: &'a TaskGraph, edges: &[&'a GraphEdge]) -> Vec<BTreeSet<&'a str>> {
    let mut succ: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    let mut pred: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    let ids: BTreeSet<&str> = g.nodes.iter().map(|n| n.id.as_str()).collect();
    for e in edges {
        if ids.contains(e.src.as_str()) && ids.contains(e.dst.as_str()) {
            succ.entry(e.src.as_str()).or_default().push(e.dst.as_str());
            pred.entry(e.dst.as_str()).or_default().push(e.src.as_str());
        }
    }

    let mut order: Vec<&str> = Vec::new();
    let mut visited: BTreeSet<&str> = BTreeSet::new();
    for &start in &ids {
        if visited.contains(start) {
            continue;
        }
        // iterative post-order DFS
        let mut stack: Vec<(&str, usize)> = alloc::vec![(start, 0)];
        visited.insert(start);
        while let Some((node, idx)) = stack.pop() {
            let next = succ.get(node).and_then(|v| v.get(idx)).copied();
            match next {
                Some(n) => {
                    stack.push((node, idx + 1));
                    if visited.insert(n) {
                        stack.push((n, 0));
                    }
                }
                None => order.push(node),
            }
        }
    }

    let mut assigned: BTreeSet<&str> = BTreeSet::new();
    let mut comps = Vec::new();
    for &root in order.iter().rev() {
        if assigned.contains(root) {
            continue;
        }
        let mut comp = BTreeSet::new();
        let mut stack = alloc::vec![root];
        assigned.insert(root);
        while let Some(n) = stack.pop() {
            comp.insert(n);
            for &p in pred.get(n).map(Vec::as_slice).unwrap_or(&[]) {
                if assigned.insert(p) {
                    stack.push(p);
                }
            }
        }
        let cyclic = comp.len() > 1 || {
            let only = *comp.iter().next().unwrap_or(&"");
            succ.get(only).is_some_and(|v| v.contains(&only))
        };
        if cyclic {
            comps.push(comp);
        }
    }
    comps
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::fixtures::voice_agent;
    use crate::graph::{GraphEdge, TaskNode};

    fn codes(g: &TaskGraph) -> Vec<DiagCode> {
        validate_graph(g).into_iter().map(|d| d.code).collect()
    }

    #[test]
    fn minimal_graph_is_clean() {
        let mut g = TaskGraph::new("g");
        g.add_node(TaskNode::new("in", TaskKind::Input))
            .add_node(TaskNode::new("out", TaskKind::Output))
            .add_edge(GraphEdge::new("in", "out"));
        g.derive_ports();
        assert_eq!(validate_graph(&g), []);
    }

    #[test]
    fn dangling_edge_is_reported() {
        let mut g = TaskGraph::new("g");
        g.add_node(TaskNode::new("in", TaskKind::Input))
            .add_edge(GraphEdge::new("in", "ghost"));
        let diags = validate_graph(&g);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].code, DiagCode::DanglingEdge);
        assert_eq!(diags[0].subject, "in->ghost");
    }

    #[test]
    fn voice_agent_loop_needs_annotation() {
        let mut g = voice_agent();
        assert_eq!(validate_graph(&g), []);
        for e in &mut g.edges {
            e.loop_annotation = None;
        }
        let diags = validate_graph(&g);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].code, DiagCode::UnboundedCycle);
        assert_eq!(diags[0].code.as_str(), "unbounded-cycle");
    }

    #[test]
    fn agent_invariants() {
        let mut g = TaskGraph::new("g");
        g.add_node(TaskNode::new("a", TaskKind::Agent));
        let mut n = TaskNode::new("b", TaskKind::GeneralCompute);
        n.subgraph = Some(alloc::boxed::Box::new(TaskGraph::new("x")));
        g.add_node(n);
        assert_eq!(
            codes(&g),
            [DiagCode::AgentWithoutSubgraph, DiagCode::SubgraphOnNonAgent]
        );
    }

    #[test]
    fn nested_diagnostics_are_prefixed() {
        let mut inner = TaskGraph::new("inner");
        inner
            .add_node(TaskNode::new("x", TaskKind::GeneralCompute).with_latency(-1.0));
        let mut outer = TaskGraph::new("outer");
        let mut a = TaskNode::new("a", TaskKind::Agent);
        a.subgraph = Some(alloc::boxed::Box::new(inner));
        outer.add_node(a);
        let diags = validate_graph(&outer);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].subject, "a/x");
    }

    #[test]
    fn port_checks_and_duplicates() {
        let mut g = TaskGraph::new("g");
        g.add_node(TaskNode::new("a", TaskKind::Input))
            .add_node(TaskNode::new("a", TaskKind::Output))
            .add_node(TaskNode::new("b", TaskKind::Output))
            .add_edge(GraphEdge::new("b", "a"))
            .add_edge(GraphEdge::new("b", "a").with_loop(0));
        g.inputs = alloc::vec!["a".into(), "zz".into()];
        g.outputs = alloc::vec!["b".into()];
        let c = codes(&g);
        for want in [
            DiagCode::DuplicateNode,
            DiagCode::DuplicateEdge,
            DiagCode::InvalidLoopBound,
            DiagCode::InputHasIncoming,
            DiagCode::UnknownPort,
            DiagCode::OutputHasOutgoing,
        ] {
            assert!(c.contains(&want), "missing {want:?} in {c:?}");
        }
    }
}
