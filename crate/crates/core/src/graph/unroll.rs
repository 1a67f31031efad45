use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::validate::unannotated_cycles;
use super::{GraphError, TaskGraph};

/// Replaces every annotated loop with `k` sequential copies of its body.
///
/// The body of a back-edge `tail -> head` is every node on a forward path from
/// `head` to `tail`. Copy 0 keeps the original ids, copy `t` is renamed
/// `id#t`. Entry edges attach to copy 0, exit edges leave from copy `k - 1`,
/// and the back-edge itself becomes `tail#t -> head#(t+1)`. Loops are
/// expanded outermost-first so nested annotations are replicated with their body.
pub fn unroll_cycles(g: &TaskGraph) -> Result<TaskGraph, GraphError> {
    if let Some(edge) = unannotated_cycles(g).into_iter().next() {
        return Err(GraphError::UnboundedCycle { edge });
    }
    let mut g = g.clone();
    // Each round removes one annotation; nested ones multiply by their parent's k.
    let mut budget: usize = 1 << 20;
    while let Some((idx, body)) = next_loop(&g) {
        budget = budget
            .checked_sub(1)
            .ok_or_else(|| GraphError::Invalid("loop expansion does not terminate".into()))?;
        if body.is_empty() {
            g.edges[idx].loop_annotation = None;
            continue;
        }
        unroll_one(&mut g, idx, &body)?;
    }
    for n in &mut g.nodes {
        if let Some(sub) = &n.subgraph {
            n.subgraph = Some(Box::new(unroll_cycles(sub)?));
        }
    }
    Ok(g)
}

/// Picks the annotated edge with the largest body (ties: smallest label).
fn next_loop(g: &TaskGraph) -> Option<(usize, BTreeSet<String>)> {
    let mut succ: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    let mut pred: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for e in g.edges.iter().filter(|e| e.loop_annotation.is_none()) {
        succ.entry(e.src.as_str()).or_default().push(e.dst.as_str());
        pred.entry(e.dst.as_str()).or_default().push(e.src.as_str());
    }
    let mut best: Option<(usize, BTreeSet<String>)> = None;
    for (idx, e) in g.edges.iter().enumerate() {
        if e.loop_annotation.is_none() {
            continue;
        }
        let from_head = reach(&succ, &e.dst);
        let to_tail = reach(&pred, &e.src);
        let body: BTreeSet<String> = from_head
            .intersection(&to_tail)
            .map(|s| String::from(*s))
            .collect();
        let better = match &best {
            None => true,
            Some((bi, bb)) => {
                body.len() > bb.len() || (body.len() == bb.len() && e.label() < g.edges[*bi].label())
            }
        };
        if better {
            best = Some((idx, body));
        }
    }
    best
}

fn reach<'a>(adj: &BTreeMap<&'a str, Vec<&'a str>>, start: &'a str) -> BTreeSet<&'a str> {
    let mut seen = BTreeSet::new();
    let mut stack = alloc::vec![start];
    while let Some(n) = stack.pop() {
        if seen.insert(n) {
            if let Some(next) = adj.get(n) {
                stack.extend(next.iter().copied());
            }
        }
    }
    seen
}

fn unroll_one(g: &mut TaskGraph, idx: usize, body: &BTreeSet<String>) -> Result<(), GraphError> {
    let back = g.edges[idx].clone();
    let k = back.loop_annotation.unwrap_or(1);
    if k == 0 {
        return Err(GraphError::Invalid(format!(
            "loop annotation on {} must be >= 1",
            back.label()
        )));
    }
    let k = k as usize;

    let mut taken: BTreeSet<String> = g.node_ids();
    // names[t][id] = id of the copy of `id` in iteration t
    let mut names: Vec<BTreeMap<String, String>> = Vec::with_capacity(k);
    names.push(body.iter().map(|id| (id.clone(), id.clone())).collect());
    for t in 1..k {
        let mut m = BTreeMap::new();
        for id in body {
            let mut fresh = format!("{id}#{t}");
            let mut n = 2;
            while taken.contains(&fresh) {
                fresh = format!("{id}#{t}_{n}");
                n += 1;
            }
            taken.insert(fresh.clone());
            m.insert(id.clone(), fresh);
        }
        names.push(m);
    }

    let originals: Vec<_> = g
        .nodes
        .iter()
        .filter(|n| body.contains(&n.id))
        .cloned()
        .collect();
    for t in 1..k {
        for n in &originals {
            let mut copy = n.clone();
            copy.id = names[t][&n.id].clone();
            g.nodes.push(copy);
        }
    }

    let last = &names[k - 1];
    let mut edges = Vec::with_capacity(g.edges.len());
    for (i, e) in g.edges.iter().enumerate() {
        let src_in = body.contains(&e.src);
        let dst_in = body.contains(&e.dst);
        if i == idx {
            for t in 0..k - 1 {
                let mut ne = e.clone();
                ne.src = names[t][&e.src].clone();
                ne.dst = names[t + 1][&e.dst].clone();
                ne.loop_annotation = None;
                edges.push(ne);
            }
        } else if src_in && dst_in {
            for m in &names {
                let mut ne = e.clone();
                ne.src = m[&e.src].clone();
                ne.dst = m[&e.dst].clone();
                edges.push(ne);
            }
        } else if src_in {
            let mut ne = e.clone();
            ne.src = last[&e.src].clone();
            edges.push(ne);
        } else {
            edges.push(e.clone());
        }
    }
    g.edges = edges;

    for port in &mut g.outputs {
        if let Some(renamed) = last.get(port) {
            *port = renamed.clone();
        }
    }
    Ok(())
}
