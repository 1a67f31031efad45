use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::{GraphEdge, GraphError, TaskGraph, TaskKind};

/// Inlines every `Agent` node's nested graph, renaming inner nodes `agent.id`.
///
/// Wiring rule: a nested graph with a single input port receives every incoming
/// edge of the agent node; otherwise incoming edges (sorted by source id) are
/// matched one-to-one with input ports (sorted by id). Outputs work the same way.
pub fn flatten_hierarchy(g: &TaskGraph) -> Result<TaskGraph, GraphError> {
    let mut out = TaskGraph {
        name: g.name.clone(),
        nodes: Vec::new(),
        edges: Vec::new(),
        inputs: g.inputs.clone(),
        outputs: g.outputs.clone(),
    };
    let mut edges: Vec<GraphEdge> = g.edges.clone();

    for node in &g.nodes {
        let sub = match (&node.kind, &node.subgraph) {
            (TaskKind::Agent, Some(sub)) => flatten_hierarchy(sub)?,
            (TaskKind::Agent, None) => {
                return Err(GraphError::PortMismatch {
                    agent: node.id.clone(),
                    reason: "agent node has no nested graph".into(),
                })
            }
            _ => {
                let mut leaf = node.clone();
                leaf.subgraph = None;
                out.nodes.push(leaf);
                continue;
            }
        };
        let agent = node.id.as_str();
        let rename = |id: &str| format!("{agent}.{id}");

        for n in &sub.nodes {
            let mut inner = n.clone();
            inner.id = rename(&n.id);
            out.nodes.push(inner);
        }

        let ins: Vec<String> = sorted(sub.inputs.iter().map(|p| rename(p)));
        let outs: Vec<String> = sorted(sub.outputs.iter().map(|p| rename(p)));

        let mut incoming: Vec<usize> = (0..edges.len()).filter(|&i| edges[i].dst == agent).collect();
        incoming.sort_by(|&a, &b| edges[a].src.cmp(&edges[b].src));
        let targets = match_ports(agent, "input", incoming.len(), &ins)?;
        for (i, t) in incoming.into_iter().zip(targets) {
            edges[i].dst = t;
        }

        let mut outgoing: Vec<usize> = (0..edges.len()).filter(|&i| edges[i].src == agent).collect();
        outgoing.sort_by(|&a, &b| edges[a].dst.cmp(&edges[b].dst));
        let sources = match_ports(agent, "output", outgoing.len(), &outs)?;
        for (i, s) in outgoing.into_iter().zip(sources) {
            edges[i].src = s;
        }

        for e in &sub.edges {
            let mut ne = e.clone();
            ne.src = rename(&e.src);
            ne.dst = rename(&e.dst);
            edges.push(ne);
        }

        replace_port(&mut out.inputs, agent, &ins);
        replace_port(&mut out.outputs, agent, &outs);
    }

    let mut ids = BTreeSet::new();
    for n in &out.nodes {
        if !ids.insert(n.id.as_str()) {
            return Err(GraphError::Invalid(format!(
                "flattening produced duplicate node id {}",
                n.id
            )));
        }
    }
    out.edges = edges;
    Ok(out)
}

fn sorted(it: impl Iterator<Item = String>) -> Vec<String> {
    let mut v: Vec<String> = it.collect();
    v.sort();
    v
}

fn match_ports(
    agent: &str,
    side: &str,
    edge_count: usize,
    ports: &[String],
) -> Result<Vec<String>, GraphError> {
    if edge_count == 0 {
        return Ok(Vec::new());
    }
    match ports.len() {
        0 => Err(GraphError::PortMismatch {
            agent: agent.into(),
            reason: format!("{edge_count} {side} edge(s) but nested graph has no {side} ports"),
        }),
        1 => Ok(alloc::vec![ports[0].clone(); edge_count]),
        n if n == edge_count => Ok(ports.to_vec()),
        n => Err(GraphError::PortMismatch {
            agent: agent.into(),
            reason: format!("{edge_count} {side} edge(s) for {n} {side} ports"),
        }),
    }
}

fn replace_port(ports: &mut Vec<String>, agent: &str, with: &[String]) {
    if let Some(pos) = ports.iter().position(|p| p == agent) {
        ports.splice(pos..=pos, with.iter().cloned());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::fixtures::chain;
    use crate::graph::{validate_graph, TaskNode};
    use alloc::boxed::Box;

    fn agent(id: &str, sub: TaskGraph) -> TaskNode {
        let mut n = TaskNode::new(id, TaskKind::Agent);
        n.subgraph = Some(Box::new(sub));
        n
    }

    fn wrap(inner: TaskNode) -> TaskGraph {
        let mut g = TaskGraph::new("outer");
        g.add_node(TaskNode::new("in", TaskKind::Input))
            .add_node(inner)
            .add_node(TaskNode::new("out", TaskKind::Output))
            .add_edge(GraphEdge::new("in", "a").with_bytes(10))
            .add_edge(GraphEdge::new("a", "out").with_bytes(20));
        g.derive_ports();
        g
    }

    #[test]
    fn no_agents_is_identity() {
        let g = chain(&["x", "y"]);
        assert_eq!(flatten_hierarchy(&g).unwrap(), g);
    }

    #[test]
    fn single_model_wrapper_inlines_to_one_node() {
        let mut sub = TaskGraph::new("sub");
        sub.add_node(TaskNode::new("m", TaskKind::ModelExec));
        sub.derive_ports();
        let g = wrap(agent("a", sub));
        let f = flatten_hierarchy(&g).unwrap();
        assert_eq!(f.nodes.len(), 3);
        assert!(f.node("a.m").is_some());
        assert_eq!(f.edge("in", "a.m").unwrap().transfer_bytes, 10);
        assert_eq!(f.edge("a.m", "out").unwrap().transfer_bytes, 20);
        assert_eq!(validate_graph(&f), []);
        assert_eq!(f.port_reachability(), g.port_reachability());
    }

    #[test]
    fn two_level_nesting_counts_leaves() {
        let leaf = chain(&["p", "q", "r"]);
        let mut mid = TaskGraph::new("mid");
        mid.add_node(TaskNode::new("s", TaskKind::GeneralCompute))
            .add_node(agent("deep", leaf))
            .add_node(TaskNode::new("t", TaskKind::GeneralCompute))
            .add_edge(GraphEdge::new("s", "deep"))
            .add_edge(GraphEdge::new("deep", "t"));
        mid.derive_ports();
        let g = wrap(agent("a", mid));
        let f = flatten_hierarchy(&g).unwrap();
        // manual inline: in, out + s, t + p, q, r
        assert_eq!(f.nodes.len(), 2 + 2 + 3);
        assert_eq!(f.nodes.len(), g.leaf_count());
        for (s, d) in [
            ("in", "a.s"),
            ("a.s", "a.deep.p"),
            ("a.deep.p", "a.deep.q"),
            ("a.deep.r", "a.t"),
            ("a.t", "out"),
        ] {
            assert!(f.edge(s, d).is_some(), "missing {s}->{d}");
        }
        assert_eq!(validate_graph(&f), []);
        assert_eq!(f.inputs, g.inputs);
        assert_eq!(f.outputs, g.outputs);
    }

    #[test]
    fn port_mismatch() {
        let mut sub = TaskGraph::new("sub");
        sub.add_node(TaskNode::new("x", TaskKind::GeneralCompute))
            .add_node(TaskNode::new("y", TaskKind::GeneralCompute));
        sub.derive_ports(); // two inputs, two outputs
        let g = wrap(agent("a", sub.clone()));
        assert!(matches!(
            flatten_hierarchy(&g),
            Err(GraphError::PortMismatch { .. })
        ));

        sub.inputs.clear();
        let mut g = TaskGraph::new("g");
        g.add_node(TaskNode::new("in", TaskKind::Input))
            .add_node(agent("a", sub))
            .add_edge(GraphEdge::new("in", "a"));
        assert!(matches!(
            flatten_hierarchy(&g),
            Err(GraphError::PortMismatch { .. })
        ));
    }

    #[test]
    fn multi_port_matching_is_sorted() {
        let mut sub = TaskGraph::new("sub");
        sub.add_node(TaskNode::new("x", TaskKind::GeneralCompute))
            .add_node(TaskNode::new("y", TaskKind::GeneralCompute))
            .add_node(TaskNode::new("z", TaskKind::GeneralCompute))
            .add_edge(GraphEdge::new("x", "z"))
            .add_edge(GraphEdge::new("y", "z"));
        sub.derive_ports();
        let mut g = TaskGraph::new("g");
        g.add_node(TaskNode::new("i1", TaskKind::Input))
            .add_node(TaskNode::new("i2", TaskKind::Input))
            .add_node(agent("a", sub))
            .add_edge(GraphEdge::new("i2", "a"))
            .add_edge(GraphEdge::new("i1", "a"));
        g.derive_ports();
        let f = flatten_hierarchy(&g).unwrap();
        assert!(f.edge("i1", "a.x").is_some());
        assert!(f.edge("i2", "a.y").is_some());
        assert_eq!(f.outputs, ["a.z"]);
    }
}
