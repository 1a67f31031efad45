#![allow(clippy::type_complexity)]

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use proptest::prelude::*;

use super::*;
use crate::graph::{critical_path_ms, random_graph, validate_graph, Timings};
use crate::perf::builtin_models;

fn count_loops(g: &TaskGraph) -> usize {
    g.edges.iter().filter(|e| e.loop_annotation.is_some()).count()
}

#[test]
fn minimal_graph() {
    let ast = parse("graph g { a = input() {} }").unwrap();
    assert_eq!(ast.graphs.len(), 1);
    assert_eq!(ast.root().nodes.len(), 1);
    assert_eq!(ast.root().edge_count(), 0);
    assert_eq!(print_ast(&ast), "graph g {\n  a = input() {}\n}\n");
    assert_eq!(print_graph(&lower(&ast).unwrap()), "graph g {\n  a = input() {}\n}\n");
}

#[test]
fn voice_agent_structure() {
    let ast = parse(examples::VOICE_AGENT).unwrap();
    assert_eq!(ast.root().nodes.len(), 6);
    assert_eq!(ast.root().edge_count(), 6);
    let g = lower(&ast).unwrap();
    assert_eq!(g.edges.len(), 6);
    assert_eq!(count_loops(&g), 1);
    assert_eq!(g.edge("search", "llm").unwrap().loop_annotation, Some(3));
    assert_eq!(g.inputs, ["input"]);
    assert_eq!(g.outputs, ["output"]);
    assert_eq!(validate_graph(&g), []);
    let search = g.node("search").unwrap();
    assert_eq!(search.kind, TaskKind::ToolCall);
    assert_eq!(search.static_latency_ms, 120.0);
    assert_eq!(search.demand.net_bandwidth_gbps_bits, 0.01);
}

#[test]
fn voice_agent_golden() {
    let g = parse_graph(examples::VOICE_AGENT).unwrap();
    let printed = print_graph(&g);
    assert_eq!(printed, examples::VOICE_AGENT_CANONICAL);
    assert_eq!(print_graph(&parse_graph(&printed).unwrap()), printed);
}

#[test]
fn syntax_error_points_at_brace() {
    let src = "graph g { a = llm( }";
    let err = parse(src).unwrap_err();
    let DslError::Syntax { span, expected, .. } = err else {
        panic!("expected a syntax error, got {err:?}");
    };
    assert_eq!(span.start, src.find('}').unwrap());
    assert_eq!((span.line, span.column), (1, 20));
    assert!(expected.iter().any(|e| e == "identifier"));
    assert!(expected.iter().any(|e| e == "`)`"));
}

#[test]
fn semantic_errors() {
    let cases: [(&str, fn(&DslError) -> bool); 9] = [
        ("", |e| matches!(e, DslError::Syntax { .. })),
        ("graph g { a = input() {} a = output() {} }", |e| {
            matches!(e, DslError::DuplicateId { id, .. } if id == "a")
        }),
        ("graph g { a = gpu_kernel() {} }", |e| {
            matches!(e, DslError::UnknownKind { kind, .. } if kind == "gpu_kernel")
        }),
        ("graph g { b = compute(a) {} a = input() {} }", |e| {
            matches!(e, DslError::UndefinedId { id, .. } if id == "a")
        }),
        ("graph g { a = input() {} b = compute(a, a) {} }", |e| {
            matches!(e, DslError::DuplicateEdge { .. })
        }),
        ("graph g { a = input() {} b = compute(a) {} edge a -> b {} }", |e| {
            matches!(e, DslError::DuplicateEdge { .. })
        }),
        ("graph g { a = compute() { x=1, x=2 } }", |e| {
            matches!(e, DslError::InvalidAttr { key, .. } if key == "x")
        }),
        ("graph g { a = compute() { x=1 y=2 } }", |e| matches!(e, DslError::Syntax { .. })),
        ("graph g { a = compute() { s=\"open } }", |e| matches!(e, DslError::Syntax { .. })),
    ];
    for (src, check) in cases {
        let err = parse(src).unwrap_err();
        assert!(check(&err), "{src:?} gave {err:?}");
    }

    let lower_errs: [(&str, fn(&DslError) -> bool); 5] = [
        ("graph g { a = agent() { graph=\"nope\" } }", |e| {
            matches!(e, DslError::UnknownGraph { name, .. } if name == "nope")
        }),
        ("graph g { a = agent() { graph=\"g\" } }", |e| matches!(e, DslError::RecursiveGraph { .. })),
        ("graph g { a = input() {} } graph g { b = input() {} }", |e| {
            matches!(e, DslError::DuplicateGraph { .. })
        }),
        ("graph g { a = input() {} b = compute() {} edge a -> b { bytes=-1 } }", |e| {
            matches!(e, DslError::InvalidAttr { key, .. } if key == "bytes")
        }),
        ("graph g { a = compute() { latency_ms=\"slow\" } }", |e| {
            matches!(e, DslError::InvalidAttr { key, .. } if key == "latency_ms")
        }),
    ];
    for (src, check) in lower_errs {
        let err = parse_graph(src).unwrap_err();
        assert!(check(&err), "{src:?} gave {err:?}");
    }
}

#[test]
fn errors_render_with_position() {
    let err = parse("graph g {\n  a = input() {}\n  a = input() {}\n}").unwrap_err();
    assert_eq!(err.to_string(), "3:3: duplicate id `a`");
}

#[test]
fn aliases_and_comments_normalize() {
    let src = "// header\ngraph g { // trailing\n a = input() {}\n b = model_exec(a) { z=true, a=-2 }\n c = general_compute(b) {}\n}";
    let out = print_graph(&parse_graph(src).unwrap());
    assert_eq!(
        out,
        "graph g {\n  a = input() {}\n  b = llm(a) { a=-2, z=true }\n  c = compute(b) {}\n}\n"
    );
}

#[test]
fn topological_then_lexicographic_order() {
    let src = "graph g { z = input() {} y = compute(z) {} x = compute(z) {} w = output(x, y) {} }";
    let ast = normalize(&parse(src).unwrap()).unwrap();
    let order: Vec<&str> = ast.root().nodes.iter().map(|n| n.id.as_str()).collect();
    assert_eq!(order, ["z", "x", "y", "w"]);
    assert_eq!(ast.root().nodes[3].operands, ["x", "y"]);
}

#[test]
fn odd_ids_and_strings_round_trip() {
    let src = r#"graph "my graph" { "a b" = input() {} edge = compute("a b") { "k-1"="x\"y\\z\n", f=1e-7, big=1e300 } "graph" = output(edge) {} }"#;
    let g = parse_graph(src).unwrap();
    assert_eq!(g.name, "my graph");
    assert!(g.node("edge").is_some());
    let n = g.node("edge").unwrap();
    assert_eq!(n.attr_str("k-1"), Some("x\"y\\z\n"));
    assert_eq!(n.attr_f64("f"), Some(1e-7));
    let printed = print_graph(&g);
    assert_eq!(parse_graph(&printed).unwrap(), g);
    assert_eq!(print_graph(&parse_graph(&printed).unwrap()), printed);
}

#[test]
fn nested_graph_blocks() {
    let g = parse_graph(examples::RESEARCH_AGENT).unwrap();
    let planner = g.node("planner").unwrap();
    let sub = planner.subgraph.as_ref().unwrap();
    assert_eq!(sub.name, "planner_loop");
    assert_eq!(sub.inputs, ["goal"]);
    assert_eq!(sub.outputs, ["notes"]);
    assert_eq!(validate_graph(&g), []);
    let printed = print_graph(&g);
    assert_eq!(printed.matches("graph ").count(), 2);
    assert_eq!(parse_graph(&printed).unwrap(), g);
}

#[test]
fn shared_subgraph_prints_once() {
    let src = "graph top { i = input() {} a = agent(i) { graph=\"w\" } b = agent(a) { graph=\"w\" } o = output(b) {} }\ngraph w { x = compute() {} }";
    let g = parse_graph(src).unwrap();
    let ast = to_ast(&g);
    assert_eq!(ast.graphs.len(), 2);
    assert_eq!(parse_graph(&print_ast(&ast)).unwrap(), g);
}

#[test]
fn unreferenced_blocks_are_dropped_by_normalize() {
    let ast = parse("graph g { a = input() {} } graph unused { b = input() {} }").unwrap();
    assert_eq!(ast.graphs.len(), 2);
    assert_eq!(normalize(&ast).unwrap().graphs.len(), 1);
}

fn single_llm() -> TaskGraph {
    parse_graph(
        "graph g { i = input() {} m = llm(i) { model=\"llama3-8b-fp16\", in_tokens=1000, out_tokens=64 } o = output(m) {} }",
    )
    .unwrap()
}

#[test]
fn split_llm_sizes_kv_edge() {
    let (g, report) = split_llm(&single_llm(), &builtin_models()).unwrap();
    let kv = g.edge("m.prefill", "m.decode").unwrap();
    assert_eq!(kv.transfer_bytes, 131_072_000);
    assert!(kv.is_kv());
    assert!(g.edge("i", "m.prefill").is_some());
    assert!(g.edge("m.decode", "o").is_some());
    assert_eq!(g.node("m.prefill").unwrap().attr_u64("in_tokens"), Some(1000));
    assert_eq!(g.node("m.decode").unwrap().attr_u64("out_tokens"), Some(64));
    assert_eq!(
        (report.nodes_added, report.nodes_removed, report.edges_added, report.edges_removed),
        (2, 1, 3, 2)
    );
    assert_eq!(validate_graph(&g), []);

    let (again, r2) = split_llm(&g, &builtin_models()).unwrap();
    assert_eq!(again, g);
    assert!(r2.is_noop());
}

#[test]
fn split_llm_errors_and_noop() {
    let plain = crate::graph::fixtures::chain(&["a", "b"]);
    let (same, report) = split_llm(&plain, &builtin_models()).unwrap();
    assert_eq!(same, plain);
    assert_eq!(report, PassReport { pass: "split_llm".into(), ..Default::default() });

    let mut g = single_llm();
    g.node_mut("m").unwrap().payload.insert("model".into(), AttrValue::Str("gpt-x".into()));
    assert!(matches!(split_llm(&g, &builtin_models()), Err(PassError::UnknownModel { .. })));
    let mut g = single_llm();
    g.node_mut("m").unwrap().payload.remove("out_tokens");
    assert_eq!(
        split_llm(&g, &builtin_models()),
        Err(PassError::MissingTokenCounts("m".into()))
    );
}

#[test]
fn split_llm_reaches_into_agents() {
    let (g, _) = split_llm(&parse_graph(examples::RESEARCH_AGENT).unwrap(), &builtin_models()).unwrap();
    let sub = g.node("planner").unwrap().subgraph.as_ref().unwrap();
    assert!(sub.node("think.prefill").is_some());
    assert_eq!(sub.edge("rerank", "think.prefill").unwrap().loop_annotation, Some(2));
}

#[test]
fn split_tool_one_and_parallel() {
    let g = parse_graph("graph g { i = input() {} t = tool(i) { latency_ms=50.0, gp_compute_units=3.0, net_bandwidth_gbps_bits=1.0, url=\"x\" } o = output(t) {} }").unwrap();
    let (s, r) = split_tool(&g).unwrap();
    assert_eq!(s.nodes.len() as i64 - g.nodes.len() as i64, 1);
    assert_eq!(s.edges.len() as i64 - g.edges.len() as i64, 1);
    assert_eq!(r.nodes_added - r.nodes_removed, 1);
    let lookup = s.node("t.lookup").unwrap();
    let compute = s.node("t.compute").unwrap();
    assert_eq!((lookup.kind, lookup.static_latency_ms), (TaskKind::MemoryLookup, 50.0));
    assert_eq!(lookup.demand.net_bandwidth_gbps_bits, 1.0);
    assert_eq!(lookup.demand.gp_compute_units, 0.0);
    assert_eq!(compute.kind, TaskKind::GeneralCompute);
    assert_eq!(compute.demand.gp_compute_units, 3.0);
    assert_eq!(compute.static_latency_ms, 0.0);
    assert_eq!(s.port_reachability(), g.port_reachability());

    let par = parse_graph("graph g { i = input() {} a = tool(i) {} b = tool(i) {} o = output(a, b) {} }").unwrap();
    let (s, _) = split_tool(&par).unwrap();
    for t in ["a", "b"] {
        assert!(s.edge("i", &alloc::format!("{t}.lookup")).is_some());
        assert!(s.edge(&alloc::format!("{t}.compute"), "o").is_some());
    }
    assert!(s.edge("a.compute", "b.lookup").is_none());
    assert!(s.edge("b.compute", "a.lookup").is_none());

    let plain = crate::graph::fixtures::chain(&["x", "y"]);
    assert!(split_tool(&plain).unwrap().1.is_noop());
}

fn placement(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
    pairs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
}

fn edge_timings(g: &TaskGraph) -> Timings {
    let mut t = Timings::from_nodes(g.nodes.iter().map(|n| (n.id.as_str(), n.static_latency_ms)));
    for e in &g.edges {
        t = t.with_edge(&e.src, &e.dst, e.transfer_bytes as f64 / 1000.0);
    }
    t
}

#[test]
fn fuse_chain_on_one_class() {
    let g = parse_graph(
        "graph g { i = input() {} a = compute(i) { latency_ms=5.0 } b = compute() { latency_ms=6.0 } c = compute() { latency_ms=7.0 } o = output(c) {}
         edge a -> b { bytes=4000 } edge b -> c { bytes=3000 } }",
    )
    .unwrap();
    let classes = placement(&[("i", "cpu"), ("a", "gpu"), ("b", "gpu"), ("c", "gpu"), ("o", "cpu")]);
    let (f, r) = fuse_colocated(&g, &classes).unwrap();
    assert_eq!(f.nodes.len(), 3);
    let fused = f.node("a+b+c").unwrap();
    assert_eq!(fused.static_latency_ms, 18.0);
    assert_eq!(fused.attr_str("members"), Some("a,b,c"));
    assert_eq!((r.nodes_added, r.nodes_removed), (1, 3));
    let before = critical_path_ms(&g, &edge_timings(&g)).unwrap();
    let after = critical_path_ms(&f, &edge_timings(&f)).unwrap();
    assert_eq!(before - after, 4.0 + 3.0);
    assert_eq!(f.port_reachability(), g.port_reachability());

    let remapped = remap_classes(&classes, &f);
    assert_eq!(remapped["a+b+c"], "gpu");
    let (again, r2) = fuse_colocated(&f, &remapped).unwrap();
    assert_eq!(again, f);
    assert!(r2.is_noop());
}

#[test]
fn fuse_respects_classes_and_branches() {
    let g = parse_graph("graph g { i = input() {} a = compute(i) {} b = compute(a) {} c = compute(a) {} o = output(b, c) {} }").unwrap();
    let distinct = placement(&[("i", "x"), ("a", "y"), ("b", "z"), ("c", "w"), ("o", "x")]);
    assert!(fuse_colocated(&g, &distinct).unwrap().1.is_noop());
    // a branches, so neither a->b nor a->c is a chain link
    let same = placement(&[("i", "x"), ("a", "y"), ("b", "y"), ("c", "y"), ("o", "x")]);
    let (f, r) = fuse_colocated(&g, &same).unwrap();
    assert!(r.is_noop());
    assert_eq!(f, g);

    let short = placement(&[("i", "x")]);
    assert!(matches!(fuse_colocated(&g, &short), Err(PassError::PlanMismatch(_))));
    let mut extra = same.clone();
    extra.insert("ghost".into(), "x".into());
    assert!(matches!(fuse_colocated(&g, &extra), Err(PassError::PlanMismatch(_))));
}

#[test]
fn run_passes_in_order() {
    let g = parse_graph(examples::VOICE_AGENT).unwrap();
    let (out, reports) = run_passes(&g, &["unroll", "split_llm", "split_tool"], &builtin_models()).unwrap();
    assert_eq!(reports.len(), 3);
    assert_eq!(count_loops(&out), 0);
    assert!(out.node("llm#2.prefill").is_some());
    assert!(out.node("search#1.lookup").is_some());
    assert_eq!(validate_graph(&out), []);
    assert_eq!(
        run_passes(&g, &["inline"], &builtin_models()),
        Err(PassError::UnknownPass("inline".into()))
    );
}

/// Reachability between ports, with split ports mapped back to the original id.
fn port_pairs(g: &TaskGraph) -> BTreeSet<(String, String)> {
    let strip = |s: &str| {
        for suffix in [".prefill", ".decode", ".lookup", ".compute"] {
            if let Some(base) = s.strip_suffix(suffix) {
                return base.to_string();
            }
        }
        s.to_string()
    };
    g.port_reachability().into_iter().map(|(a, b)| (strip(&a), strip(&b))).collect()
}

pub(crate) fn check_round_trip(g: &TaskGraph) -> Result<(), TestCaseError> {
    let text = print_graph(g);
    let reparsed = parse(&text).map_err(|e| TestCaseError::fail(alloc::format!("{e}\n{text}")))?;
    prop_assert_eq!(reparsed.without_spans(), to_ast(g));
    prop_assert_eq!(&normalize(&reparsed).unwrap(), &to_ast(g));
    prop_assert_eq!(print_ast(&reparsed), text.clone());
    prop_assert_eq!(print_graph(&lower(&reparsed).unwrap()), text);
    Ok(())
}

proptest! {
    #[test]
    fn generated_graphs_round_trip(seed in any::<u64>()) {
        check_round_trip(&random_graph(seed, 10))?;
    }

    #[test]
    fn passes_idempotent_and_preserve_interface(seed in any::<u64>()) {
        let g = random_graph(seed, 10);
        let models = builtin_models();
        let (l, rl) = split_llm(&g, &models).unwrap();
        let (l2, rl2) = split_llm(&l, &models).unwrap();
        prop_assert_eq!(&l2, &l);
        prop_assert!(rl2.is_noop());
        let (t, _) = split_tool(&l).unwrap();
        let (t2, rt2) = split_tool(&t).unwrap();
        prop_assert_eq!(&t2, &t);
        prop_assert!(rt2.is_noop());
        prop_assert_eq!(&l.inputs, &g.inputs);
        prop_assert_eq!(&t.outputs, &g.outputs);
        prop_assert_eq!(port_pairs(&l), port_pairs(&g));
        prop_assert_eq!(port_pairs(&t), port_pairs(&g));
        prop_assert_eq!(validate_graph(&t), []);
        let llms = g.nodes.iter().filter(|n| n.kind == TaskKind::ModelExec).count();
        prop_assert_eq!(rl.nodes_added, 2 * llms);
        prop_assert_eq!(rl.nodes_removed, llms);
        check_round_trip(&t)?;
    }

    #[test]
    fn fusion_never_lengthens_critical_path(seed in any::<u64>(), classes in 1u64..4) {
        let g = crate::graph::unroll_cycles(&random_graph(seed, 10)).unwrap();
        let map: BTreeMap<String, String> = g
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.id.clone(), alloc::format!("c{}", (i as u64 * 7 + seed) % classes)))
            .collect();
        let (f, _) = fuse_colocated(&g, &map).unwrap();
        let before = critical_path_ms(&g, &edge_timings(&g)).unwrap();
        let after = critical_path_ms(&f, &edge_timings(&f)).unwrap();
        prop_assert!(after <= before + 1e-9 * before.max(1.0));
        prop_assert_eq!(f.port_reachability(), g.port_reachability());
        let (again, r) = fuse_colocated(&f, &remap_classes(&map, &f)).unwrap();
        prop_assert!(r.is_noop());
        prop_assert_eq!(again, f);
    }
}
