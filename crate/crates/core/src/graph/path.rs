use alloc::collections::{BTreeMap, BTreeSet, BinaryHeap};
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Reverse;

use super::{GraphError, TaskGraph};

/// Node service times and edge transfer latencies, in ms.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Timings {
    pub nodes: BTreeMap<String, f64>,
    /// Keyed by `(src, dst)`; missing edges cost 0 ms.
    pub edges: BTreeMap<(String, String), f64>,
}

impl Timings {
    pub fn from_nodes<'a>(it: impl IntoIterator<Item = (&'a str, f64)>) -> Self {
        Timings {
            nodes: it.into_iter().map(|(k, v)| (String::from(k), v)).collect(),
            edges: BTreeMap::new(),
        }
    }

    pub fn with_edge(mut self, src: &str, dst: &str, ms: f64) -> Self {
        self.edges.insert((src.into(), dst.into()), ms);
        self
    }

    pub fn edge_ms(&self, src: &str, dst: &str) -> f64 {
        self.edges
            .get(&(String::from(src), String::from(dst)))
            .copied()
            .unwrap_or(0.0)
    }
}

/// Kahn's algorithm with lexicographic tie-breaking on node id.
///
/// Edges whose endpoints are missing are ignored. Returns `CyclicGraph` when
/// some node can never be scheduled.
pub fn topo_order(g: &TaskGraph) -> Result<Vec<String>, GraphError> {
    topo_order_filtered(g, |_| true)
}

pub(crate) fn topo_order_filtered(
    g: &TaskGraph,
    keep: impl Fn(&super::GraphEdge) -> bool,
) -> Result<Vec<String>, GraphError> {
    let ids: BTreeSet<&str> = g.nodes.iter().map(|n| n.id.as_str()).collect();
    let mut indeg: BTreeMap<&str, usize> = ids.iter().map(|id| (*id, 0)).collect();
    let mut succ: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for e in g.edges.iter().filter(|e| keep(e)) {
        if ids.contains(e.src.as_str()) && ids.contains(e.dst.as_str()) {
            succ.entry(e.src.as_str()).or_default().push(e.dst.as_str());
            *indeg.get_mut(e.dst.as_str()).expect("known id") += 1;
        }
    }
    let mut ready: BinaryHeap<Reverse<&str>> = indeg
        .iter()
        .filter(|(_, d)| **d == 0)
        .map(|(id, _)| Reverse(*id))
        .collect();
    let mut order = Vec::with_capacity(ids.len());
    while let Some(Reverse(n)) = ready.pop() {
        order.push(String::from(n));
        for &m in succ.get(n).map(Vec::as_slice).unwrap_or(&[]) {
            let d = indeg.get_mut(m).expect("known id");
            *d -= 1;
            if *d == 0 {
                ready.push(Reverse(m));
            }
        }
    }
    if order.len() == ids.len() {
        Ok(order)
    } else {
        Err(GraphError::CyclicGraph)
    }
}

/// Earliest finish time of every node when each node starts as soon as all
/// predecessors (plus edge latency) are done.
pub(crate) fn finish_times(
    g: &TaskGraph,
    times: &Timings,
) -> Result<BTreeMap<String, f64>, GraphError> {
    let order = topo_order(g)?;
    let mut finish: BTreeMap<String, f64> = BTreeMap::new();
    for id in &order {
        let own = *times
            .nodes
            .get(id)
            .ok_or_else(|| GraphError::MissingTime(id.clone()))?;
        let start = g
            .incoming(id)
            .filter_map(|e| finish.get(&e.src).map(|f| f + times.edge_ms(&e.src, &e.dst)))
            .fold(0.0_f64, f64::max);
        finish.insert(id.clone(), start + own);
    }
    Ok(finish)
}

/// Length of the longest path, summing node times and edge latencies.
pub fn critical_path_ms(g: &TaskGraph, times: &Timings) -> Result<f64, GraphError> {
    Ok(finish_times(g, times)?.values().copied().fold(0.0, f64::max))
}
