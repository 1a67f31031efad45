//! The `.agraph` text format and the lowering passes that refine a task graph.
//!
//! ```text
//! // comments run to end of line
//! graph chat {
//!   in  = input() {}
//!   llm = llm(in) { model="llama3-8b-fp16", in_tokens=1000, out_tokens=200 }
//!   out = output(llm) {}
//!   edge llm -> llm { loop=2 }
//! }
//! ```
//!
//! Operands declare plain edges from earlier nodes. `edge` declarations carry
//! `bytes`, `mode` (`"sync"`/`"async"`), `loop`, and free-form attributes.
//! Node attributes `latency_ms` and the resource-vector keys fill the node's
//! static latency and demand; an agent's `graph="name"` names another `graph`
//! block in the same file. The first block is the root.

mod lex;
mod parse;
mod passes;
mod print;

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

pub use parse::parse;
pub use passes::{
    fuse_colocated, remap_classes, run_passes, split_llm, split_tool, PassError, PassReport,
    PASS_NAMES,
};
pub use print::{print_ast, print_graph};

use crate::graph::{AttrValue, EdgeMode, GraphEdge, ResourceVector, TaskGraph, TaskKind, TaskNode};

/// Position of a syntax element: 1-based line/column of its first character
/// and the byte range it covers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SourceSpan {
    pub line: u32,
    pub column: u32,
    pub start: usize,
    pub end: usize,
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Attr {
    pub key: String,
    pub value: AttrValue,
    pub span: SourceSpan,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeDecl {
    pub id: String,
    /// Kind keyword as written (aliases allowed).
    pub kind: String,
    pub operands: Vec<String>,
    pub attrs: Vec<Attr>,
    pub span: SourceSpan,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeDecl {
    pub src: String,
    pub dst: String,
    pub attrs: Vec<Attr>,
    pub span: SourceSpan,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphDecl {
    pub name: String,
    pub nodes: Vec<NodeDecl>,
    pub edges: Vec<EdgeDecl>,
    pub span: SourceSpan,
}

impl GraphDecl {
    /// Operand edges plus `edge` declarations.
    pub fn edge_count(&self) -> usize {
        self.nodes.iter().map(|n| n.operands.len()).sum::<usize>() + self.edges.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ast {
    pub graphs: Vec<GraphDecl>,
}

impl Ast {
    pub fn root(&self) -> &GraphDecl {
        &self.graphs[0]
    }

    /// Copy with every span zeroed, for structural comparison.
    pub fn without_spans(&self) -> Ast {
        let z = SourceSpan::default();
        let attrs = |a: &[Attr]| -> Vec<Attr> {
            a.iter()
                .map(|a| Attr {
                    span: z,
                    ..a.clone()
                })
                .collect()
        };
        Ast {
            graphs: self
                .graphs
                .iter()
                .map(|g| GraphDecl {
                    name: g.name.clone(),
                    span: z,
                    nodes: g
                        .nodes
                        .iter()
                        .map(|n| NodeDecl {
                            attrs: attrs(&n.attrs),
                            span: z,
                            ..n.clone()
                        })
                        .collect(),
                    edges: g
                        .edges
                        .iter()
                        .map(|e| EdgeDecl {
                            attrs: attrs(&e.attrs),
                            span: z,
                            ..e.clone()
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DslError {
    #[error("{span}: syntax error: expected {}, found {found}", expected.join(" or "))]
    Syntax {
        span: SourceSpan,
        expected: Vec<String>,
        found: String,
    },
    #[error("{span}: duplicate id `{id}`")]
    DuplicateId { id: String, span: SourceSpan },
    #[error("{span}: unknown node kind `{kind}`")]
    UnknownKind { kind: String, span: SourceSpan },
    #[error("{span}: `{id}` is not declared before use")]
    UndefinedId { id: String, span: SourceSpan },
    #[error("{span}: duplicate edge {src} -> {dst}")]
    DuplicateEdge {
        src: String,
        dst: String,
        span: SourceSpan,
    },
    #[error("{span}: duplicate graph `{name}`")]
    DuplicateGraph { name: String, span: SourceSpan },
    #[error("{span}: unknown graph `{name}`")]
    UnknownGraph { name: String, span: SourceSpan },
    #[error("graph `{name}` contains itself")]
    RecursiveGraph { name: String },
    #[error("{span}: attribute `{key}`: {reason}")]
    InvalidAttr {
        key: String,
        reason: String,
        span: SourceSpan,
    },
}

const KIND_KEYWORDS: [(&str, TaskKind); 18] = [
    ("input", TaskKind::Input),
    ("output", TaskKind::Output),
    ("agent", TaskKind::Agent),
    ("llm", TaskKind::ModelExec),
    ("prefill", TaskKind::Prefill),
    ("decode", TaskKind::Decode),
    ("tool", TaskKind::ToolCall),
    ("memory", TaskKind::MemoryLookup),
    ("kv_store", TaskKind::KvStore),
    ("compute", TaskKind::GeneralCompute),
    ("control", TaskKind::ControlFlow),
    ("observe", TaskKind::ObservationStore),
    ("model_exec", TaskKind::ModelExec),
    ("tool_call", TaskKind::ToolCall),
    ("memory_lookup", TaskKind::MemoryLookup),
    ("general_compute", TaskKind::GeneralCompute),
    ("control_flow", TaskKind::ControlFlow),
    ("observation_store", TaskKind::ObservationStore),
];

pub fn kind_from_keyword(kw: &str) -> Option<TaskKind> {
    KIND_KEYWORDS.iter().find(|(k, _)| *k == kw).map(|(_, t)| *t)
}

/// The short keyword the printer emits for a kind.
pub fn kind_keyword(kind: TaskKind) -> &'static str {
    KIND_KEYWORDS
        .iter()
        .find(|(_, t)| *t == kind)
        .map(|(k, _)| *k)
        .expect("every kind has a keyword")
}

pub(crate) const LATENCY_KEY: &str = "latency_ms";
pub(crate) const GRAPH_KEY: &str = "graph";

/// Parses text and lowers the root block to a task graph.
pub fn parse_graph(text: &str) -> Result<TaskGraph, DslError> {
    lower(&parse(text)?)
}

/// Canonical Ast for the same graph: lowering followed by [`to_ast`].
pub fn normalize(ast: &Ast) -> Result<Ast, DslError> {
    Ok(to_ast(&lower(ast)?))
}

/// Builds the task graph of the root block, resolving agent `graph=` references.
pub fn lower(ast: &Ast) -> Result<TaskGraph, DslError> {
    let mut blocks: BTreeMap<&str, &GraphDecl> = BTreeMap::new();
    for g in &ast.graphs {
        if blocks.insert(g.name.as_str(), g).is_some() {
            return Err(DslError::DuplicateGraph {
                name: g.name.clone(),
                span: g.span,
            });
        }
    }
    let mut stack = Vec::new();
    lower_block(ast.root(), &blocks, &mut stack)
}

fn lower_block<'a>(
    g: &'a GraphDecl,
    blocks: &BTreeMap<&str, &'a GraphDecl>,
    stack: &mut Vec<&'a str>,
) -> Result<TaskGraph, DslError> {
    if stack.contains(&g.name.as_str()) {
        return Err(DslError::RecursiveGraph {
            name: g.name.clone(),
        });
    }
    stack.push(&g.name);
    let mut out = TaskGraph::new(g.name.clone());
    for n in &g.nodes {
        let kind = kind_from_keyword(&n.kind).ok_or_else(|| DslError::UnknownKind {
            kind: n.kind.clone(),
            span: n.span,
        })?;
        let mut node = TaskNode::new(n.id.clone(), kind);
        for a in &n.attrs {
            let numeric = || {
                a.value.as_f64().ok_or_else(|| DslError::InvalidAttr {
                    key: a.key.clone(),
                    reason: "expected a number".into(),
                    span: a.span,
                })
            };
            if a.key == LATENCY_KEY {
                node.static_latency_ms = numeric()?;
            } else if ResourceVector::KEYS.contains(&a.key.as_str()) {
                node.demand.set(&a.key, numeric()?);
            } else if a.key == GRAPH_KEY && kind == TaskKind::Agent {
                let name = a.value.as_str().ok_or_else(|| DslError::InvalidAttr {
                    key: a.key.clone(),
                    reason: "expected a graph name string".into(),
                    span: a.span,
                })?;
                let block = blocks.get(name).ok_or_else(|| DslError::UnknownGraph {
                    name: name.into(),
                    span: a.span,
                })?;
                node.subgraph = Some(Box::new(lower_block(block, blocks, stack)?));
            } else {
                node.payload.insert(a.key.clone(), a.value.clone());
            }
        }
        out.add_node(node);
        for src in &n.operands {
            out.add_edge(GraphEdge::new(src.clone(), n.id.clone()));
        }
    }
    for e in &g.edges {
        let mut edge = GraphEdge::new(e.src.clone(), e.dst.clone());
        for a in &e.attrs {
            let bad = |reason: &str| DslError::InvalidAttr {
                key: a.key.clone(),
                reason: reason.into(),
                span: a.span,
            };
            match (a.key.as_str(), &a.value) {
                ("bytes", v) => {
                    edge.transfer_bytes = v.as_u64().ok_or_else(|| bad("expected a non-negative integer"))?
                }
                ("mode", AttrValue::Str(s)) if s == "sync" => edge.mode = EdgeMode::Sync,
                ("mode", AttrValue::Str(s)) if s == "async" => edge.mode = EdgeMode::Async,
                ("mode", _) => return Err(bad("expected \"sync\" or \"async\"")),
                ("loop", v) => {
                    let k = v
                        .as_u64()
                        .and_then(|k| u32::try_from(k).ok())
                        .ok_or_else(|| bad("expected an iteration count"))?;
                    edge.loop_annotation = Some(k);
                }
                (k, v) => {
                    edge.payload.insert(k.into(), v.clone());
                }
            }
        }
        out.add_edge(edge);
    }
    out.derive_ports();
    stack.pop();
    Ok(out)
}

/// Canonical Ast of a graph: nodes in topological order (loop edges ignored,
/// ties by id), plain forward edges as operands, every other edge as an
/// `edge` declaration sorted by endpoints. Nested graphs follow as extra blocks.
pub fn to_ast(g: &TaskGraph) -> Ast {
    let mut blocks: Vec<(String, GraphDecl, TaskGraph)> = Vec::new();
    let root = block_of(g, &mut blocks);
    let mut graphs = alloc::vec![root];
    graphs.extend(blocks.into_iter().map(|(_, d, _)| d));
    Ast { graphs }
}

fn attr(key: &str, value: AttrValue) -> Attr {
    Attr {
        key: key.into(),
        value,
        span: SourceSpan::default(),
    }
}

fn block_of(g: &TaskGraph, blocks: &mut Vec<(String, GraphDecl, TaskGraph)>) -> GraphDecl {
    let order = crate::graph::path::topo_order_filtered(g, |e| e.loop_annotation.is_none())
        .unwrap_or_else(|_| g.node_ids().into_iter().collect());
    let rank: BTreeMap<&str, usize> = order.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();

    let mut as_operand = alloc::vec![false; g.edges.len()];
    for (i, e) in g.edges.iter().enumerate() {
        if let (Some(s), Some(d)) = (rank.get(e.src.as_str()), rank.get(e.dst.as_str())) {
            as_operand[i] = e.is_plain() && s < d;
        }
    }

    let mut nodes = Vec::with_capacity(order.len());
    for id in &order {
        let n = g.node(id).expect("id from graph");
        let mut attrs = Vec::new();
        if n.static_latency_ms != 0.0 {
            attrs.push(attr(LATENCY_KEY, AttrValue::Float(n.static_latency_ms)));
        }
        for (k, v) in n.demand.entries() {
            let present = if k == "hp_compute_fp8_tflops" {
                n.demand.hp_compute_fp8_tflops.is_some()
            } else {
                v != 0.0
            };
            if present {
                attrs.push(attr(k, AttrValue::Float(v)));
            }
        }
        if let (TaskKind::Agent, Some(sub)) = (n.kind, &n.subgraph) {
            let name = nested_block(id, sub, blocks);
            attrs.push(attr(GRAPH_KEY, AttrValue::Str(name)));
        }
        for (k, v) in &n.payload {
            if !attrs.iter().any(|a| &a.key == k) {
                attrs.push(attr(k, v.clone()));
            }
        }
        attrs.sort_by(|a, b| a.key.cmp(&b.key));
        let mut operands: Vec<String> = g
            .edges
            .iter()
            .enumerate()
            .filter(|(i, e)| as_operand[*i] && &e.dst == id)
            .map(|(_, e)| e.src.clone())
            .collect();
        operands.sort();
        nodes.push(NodeDecl {
            id: id.clone(),
            kind: kind_keyword(n.kind).into(),
            operands,
            attrs,
            span: SourceSpan::default(),
        });
    }

    let mut edges: Vec<EdgeDecl> = g
        .edges
        .iter()
        .enumerate()
        .filter(|(i, _)| !as_operand[*i])
        .map(|(_, e)| {
            let mut attrs = Vec::new();
            if e.transfer_bytes != 0 {
                attrs.push(attr("bytes", AttrValue::Int(e.transfer_bytes as i64)));
            }
            if e.mode == EdgeMode::Async {
                attrs.push(attr("mode", AttrValue::Str("async".into())));
            }
            if let Some(k) = e.loop_annotation {
                attrs.push(attr("loop", AttrValue::Int(k as i64)));
            }
            for (k, v) in &e.payload {
                if !attrs.iter().any(|a| &a.key == k) {
                    attrs.push(attr(k, v.clone()));
                }
            }
            attrs.sort_by(|a, b| a.key.cmp(&b.key));
            EdgeDecl {
                src: e.src.clone(),
                dst: e.dst.clone(),
                attrs,
                span: SourceSpan::default(),
            }
        })
        .collect();
    edges.sort_by(|a, b| (&a.src, &a.dst).cmp(&(&b.src, &b.dst)));

    GraphDecl {
        name: g.name.clone(),
        nodes,
        edges,
        span: SourceSpan::default(),
    }
}

/// Registers a nested graph as its own block and returns the block name.
/// Identical graphs share a block; distinct graphs with the same name get a suffix.
fn nested_block(agent: &str, sub: &TaskGraph, blocks: &mut Vec<(String, GraphDecl, TaskGraph)>) -> String {
    if let Some((name, _, _)) = blocks.iter().find(|(_, _, g)| g == sub) {
        return name.clone();
    }
    let base = if sub.name.is_empty() {
        alloc::format!("{agent}_graph")
    } else {
        sub.name.clone()
    };
    let mut name = base.clone();
    let mut n = 2;
    while blocks.iter().any(|(b, _, _)| *b == name) {
        name = alloc::format!("{base}_{n}");
        n += 1;
    }
    let mut renamed = sub.clone();
    renamed.name = name.clone();
    // reserve the slot before recursing so nested names stay unique
    let idx = blocks.len();
    blocks.push((name.clone(), GraphDecl {
        name: name.clone(),
        nodes: Vec::new(),
        edges: Vec::new(),
        span: SourceSpan::default(),
    }, sub.clone()));
    let decl = block_of(&renamed, blocks);
    blocks[idx].1 = decl;
    name
}

/// Example programs shipped with the crate.
pub mod examples {
    pub const VOICE_AGENT: &str = include_str!("../../fixtures/voice_agent.agraph");
    pub const VOICE_AGENT_CANONICAL: &str = include_str!("../../fixtures/voice_agent.canonical.agraph");
    pub const WORKED_EXAMPLE: &str = include_str!("../../fixtures/worked_example.agraph");
    pub const RESEARCH_AGENT: &str = include_str!("../../fixtures/research_agent.agraph");
}

#[cfg(test)]
mod tests;
