use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use super::lex::{is_ident_continue, is_ident_start};
use super::{to_ast, Ast, Attr};
use crate::graph::{AttrValue, TaskGraph};

/// Canonical text of a graph.
pub fn print_graph(g: &TaskGraph) -> String {
    print_ast(&to_ast(g))
}

/// Renders an Ast in canonical layout: declarations in the order given,
/// attributes sorted by key, two-space indentation, one block per graph.
pub fn print_ast(ast: &Ast) -> String {
    let mut out = String::new();
    for (i, g) in ast.graphs.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = writeln!(out, "graph {} {{", id(&g.name));
        for n in &g.nodes {
            let ops: Vec<String> = n.operands.iter().map(|o| id(o)).collect();
            let _ = writeln!(
                out,
                "  {} = {}({}) {}",
                id(&n.id),
                n.kind,
                ops.join(", "),
                attrs(&n.attrs)
            );
        }
        for e in &g.edges {
            let _ = writeln!(out, "  edge {} -> {} {}", id(&e.src), id(&e.dst), attrs(&e.attrs));
        }
        out.push_str("}\n");
    }
    out
}

fn id(s: &str) -> String {
    let mut chars = s.chars();
    let plain = chars.next().is_some_and(is_ident_start)
        && chars.all(is_ident_continue)
        && !matches!(s, "graph" | "edge");
    if plain {
        s.into()
    } else {
        quote(s)
    }
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn attrs(list: &[Attr]) -> String {
    if list.is_empty() {
        return "{}".into();
    }
    let mut sorted: Vec<&Attr> = list.iter().collect();
    sorted.sort_by(|a, b| a.key.cmp(&b.key));
    let parts: Vec<String> = sorted
        .iter()
        .map(|a| alloc::format!("{}={}", id(&a.key), value(&a.value)))
        .collect();
    alloc::format!("{{ {} }}", parts.join(", "))
}

fn value(v: &AttrValue) -> String {
    match v {
        AttrValue::Bool(b) => alloc::format!("{b}"),
        AttrValue::Int(i) => alloc::format!("{i}"),
        // Debug keeps a `.0` or exponent, so the literal re-lexes as a float
        AttrValue::Float(f) => alloc::format!("{f:?}"),
        AttrValue::Str(s) => quote(s),
    }
}
