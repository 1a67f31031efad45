use alloc::vec;
use alloc::vec::Vec;

use proptest::prelude::*;

use super::examples::*;
use super::*;
use crate::graph::{SlaScope, SlaSpec};

fn opts() -> DiscreteOptions {
    DiscreteOptions::default()
}

fn single_task(costs: &[f64]) -> AssignmentProblem {
    let mut p = AssignmentProblem::new(vec!["t".into()], costs.iter().enumerate().map(|(j, _)| alloc::format!("c{j}")).collect());
    p.profiled = vec![costs.iter().map(|c| Some(Profiled { latency_ms: 1.0, cost_usd: *c })).collect()];
    p
}

#[test]
fn tij_profiled_passthrough() {
    let mut p = AssignmentProblem::new(vec!["a".into()], vec!["h".into()]);
    p.static_latency = vec![80.0];
    assert_eq!(p.compute_tij(0, 0).unwrap(), 80.0);
}

#[test]
fn tij_single_roofline_term() {
    let mut p = AssignmentProblem::new(vec!["a".into()], vec!["h".into()]);
    p.resources = vec!["compute".into()];
    p.theta = vec![vec![vec![1.6e13]]];
    // 1.979e15 FLOP/s is 1.979e12 FLOP per ms
    p.perf = vec![vec![Some(1.979e12)]];
    let t = p.compute_tij(0, 0).unwrap();
    assert_eq!(t, 1.6e13 / 1.979e12);
    assert!((t - 8.09).abs() < 1e-2, "{t}");
}

#[test]
fn tij_takes_the_slowest_resource() {
    let mut p = AssignmentProblem::new(vec!["a".into()], vec!["h".into()]);
    p.resources = vec!["compute".into(), "memory".into()];
    p.theta = vec![vec![vec![10.0, 50.0]]];
    p.perf = vec![vec![Some(1.0), Some(2.0)]];
    assert_eq!(p.compute_tij(0, 0).unwrap(), 25.0);

    p.perf = vec![vec![Some(1.0), Some(0.0)]];
    assert!(matches!(p.compute_tij(0, 0), Err(OptError::ZeroPerf { .. })));
    p.perf = vec![vec![Some(1.0), None]];
    assert_eq!(p.compute_tij(0, 0).unwrap(), 10.0);
}

#[test]
fn worked_example_options() {
    let p = worked_example();
    let a = evaluate_assignment(&p, &one_hot(&p, &OPTION_A)).unwrap();
    assert_eq!(round_usd(a.cost_usd), 0.11);
    assert_eq!(a.e2e_ms, 105.0);
    assert!(a.sla_satisfied);

    let b = evaluate_assignment(&p, &one_hot(&p, &OPTION_B)).unwrap();
    assert_eq!(round_usd(b.cost_usd), 0.095);
    assert_eq!(b.e2e_ms, 120.0);
    assert_eq!(b.t_ms, [80.0, 40.0]);

    let c = evaluate_assignment(&p, &one_hot(&p, &OPTION_C)).unwrap();
    assert_eq!(round_usd(c.cost_usd), 0.07);
    assert_eq!(c.e2e_ms, 160.0);
    assert!(!c.sla_satisfied);
    assert_eq!(c.slack_ms, [40.0]);
}

#[test]
fn zero_work_costs_nothing() {
    let mut p = AssignmentProblem::new(vec!["a".into(), "b".into()], vec!["h".into(), "k".into()]);
    p.resources = vec!["compute".into()];
    p.theta = vec![vec![vec![0.0], vec![0.0]]; 2];
    p.unit_cost = vec![vec![3.0], vec![5.0]];
    p.sla = SlaSpec::end_to_end(1.0).with_lambda(0.0);
    let e = evaluate_assignment(&p, &[vec![0.5, 0.5], vec![1.0, 0.0]]).unwrap();
    assert_eq!(e.objective, 0.0);
}

#[test]
fn evaluate_rejects_bad_shapes() {
    let p = worked_example();
    assert!(matches!(
        evaluate_assignment(&p, &[vec![1.0, 0.0]]),
        Err(OptError::ShapeMismatch(_))
    ));
    let mut bad = worked_example();
    bad.theta = vec![vec![vec![1.0]]];
    assert!(matches!(bad.validate(), Err(OptError::ShapeMismatch(_))));
}

#[test]
fn lp_shape_of_worked_example() {
    let lp = build_lp(&worked_example_fractional(SlaScope::EndToEnd)).unwrap();
    assert_eq!(lp.n_vars(), 5);
    assert_eq!(lp.vars.iter().filter(|v| matches!(v, LpVar::X { .. })).count(), 4);
    assert_eq!(lp.n_groups(), 3);
    // hard SLA pins the slack
    assert_eq!(lp.upper[4], Some(0.0));

    let soft = build_lp(&{
        let mut p = worked_example_fractional(SlaScope::EndToEnd);
        p.sla = p.sla.with_lambda(0.5);
        p
    })
    .unwrap();
    assert_eq!(soft.upper[4], None);
    assert_eq!(soft.objective[4], 0.5);
}

#[test]
fn lp_rejects_nonlinear_and_pairwise() {
    let mut p = worked_example_fractional(SlaScope::EndToEnd);
    p.sla.min_throughput = Some(10.0);
    assert_eq!(build_lp(&p), Err(OptError::NonlinearConstraint));
    let mut q = worked_example();
    q.mode = SolveMode::Fractional;
    assert_eq!(build_lp(&q), Err(OptError::PairwiseInFractional));
}

#[test]
fn lp_end_to_end_optimum() {
    let p = worked_example_fractional(SlaScope::EndToEnd);
    let a = solve_fractional(&p).unwrap();
    assert!((a.objective() - 0.095).abs() < 1e-9, "{}", a.objective());
    assert_eq!(a.x, [vec![1.0, 0.0], vec![0.0, 1.0]]);
}

#[test]
fn lp_per_task_optimum() {
    let p = worked_example_fractional(SlaScope::PerTask);
    let a = solve_fractional(&p).unwrap();
    assert!((a.objective() - 0.071).abs() < 1e-9, "{}", a.objective());
    assert!((a.x[0][CO] - 0.8).abs() < 1e-9);
    assert_eq!(a.x[1], [0.0, 1.0]);
}

#[test]
fn lp_single_variable() {
    let lp = LpStandardForm {
        objective: vec![1.0],
        rows: vec![],
        upper: vec![Some(1.0)],
        vars: vec![LpVar::X { task: 0, class: 0 }],
    };
    let s = solve_lp(&lp).unwrap();
    assert_eq!(s.values, [0.0]);
    assert_eq!(s.objective, 0.0);

    let p = single_task(&[2.5]);
    let mut f = p.clone();
    f.mode = SolveMode::Fractional;
    let a = solve_fractional(&f).unwrap();
    assert_eq!(a.x, [vec![1.0]]);
    assert_eq!(a.objective(), 2.5);
}

#[test]
fn lp_infeasible_and_unbounded_are_distinct() {
    let x = LpVar::X { task: 0, class: 0 };
    let infeasible = LpStandardForm {
        objective: vec![1.0],
        rows: vec![
            LpRow { coeffs: vec![(0, 1.0)], sense: Sense::Ge, rhs: 2.0, group: RowGroup::Other },
            LpRow { coeffs: vec![(0, 1.0)], sense: Sense::Le, rhs: 1.0, group: RowGroup::Other },
        ],
        upper: vec![None],
        vars: vec![x],
    };
    assert!(matches!(solve_lp(&infeasible), Err(OptError::Infeasible(_))));
    let unbounded = LpStandardForm {
        objective: vec![-1.0],
        rows: vec![],
        upper: vec![None],
        vars: vec![x],
    };
    assert_eq!(solve_lp(&unbounded), Err(OptError::Unbounded));

    let mut p = worked_example_fractional(SlaScope::EndToEnd);
    p.sla = SlaSpec::end_to_end(10.0);
    assert!(matches!(solve_fractional(&p), Err(OptError::Infeasible(_))));
}

#[test]
fn lp_handles_negative_rhs_and_equalities() {
    // min x + y with x + y = 3, -x ≤ -1 (x ≥ 1), y ≤ 1.5
    let lp = LpStandardForm {
        objective: vec![2.0, 1.0],
        rows: vec![
            LpRow { coeffs: vec![(0, 1.0), (1, 1.0)], sense: Sense::Eq, rhs: 3.0, group: RowGroup::Other },
            LpRow { coeffs: vec![(0, -1.0)], sense: Sense::Le, rhs: -1.0, group: RowGroup::Other },
        ],
        upper: vec![None, Some(1.5)],
        vars: vec![LpVar::X { task: 0, class: 0 }, LpVar::X { task: 0, class: 1 }],
    };
    let s = solve_lp(&lp).unwrap();
    assert!((s.values[0] - 1.5).abs() < 1e-12 && (s.values[1] - 1.5).abs() < 1e-12);
    assert!((s.objective - 4.5).abs() < 1e-12);
}

#[test]
fn discrete_worked_example_picks_option_b() {
    let p = worked_example();
    let a = solve_discrete(&p, &opts()).unwrap();
    assert_eq!(a.choice.as_deref(), Some(&OPTION_B[..]));
    assert_eq!(a.eval.e2e_ms, 120.0);
    assert_eq!(round_usd(a.objective()), 0.095);
    assert_eq!(a.class_of(&p, "prefill"), Some("HP"));
    assert_eq!(a.class_of(&p, "decode"), Some("CO"));
    let o = enumerate_oracle(&p, &opts()).unwrap();
    assert_eq!(o.choice, a.choice);
    assert_eq!(o.objective(), a.objective());
}

#[test]
fn soft_sla_pivots_to_all_co() {
    let p = worked_example_soft(0.0005);
    let a = solve_discrete(&p, &opts()).unwrap();
    assert_eq!(a.choice.as_deref(), Some(&OPTION_C[..]));
    assert_eq!(a.eval.e2e_ms, 160.0);
    assert_eq!(a.eval.slack_ms, [40.0]);
    assert_eq!(round_usd(a.eval.cost_usd), 0.07);
    assert_eq!(round_usd(a.eval.penalty_usd), 0.02);
    assert_eq!(round_usd(a.objective()), 0.09);
    let o = enumerate_oracle(&p, &opts()).unwrap();
    assert_eq!(o.choice, a.choice);
    assert_eq!(o.objective(), a.objective());
    assert_eq!(o.stats.nodes_explored, 4);
}

#[test]
fn single_task_takes_cheapest_class() {
    let p = single_task(&[3.0, 1.0, 2.0]);
    assert_eq!(solve_discrete(&p, &opts()).unwrap().choice, Some(vec![1]));
    assert_eq!(enumerate_oracle(&p, &opts()).unwrap().choice, Some(vec![1]));
    // ties resolve to the lowest class index
    let tie = single_task(&[2.0, 1.0, 1.0]);
    assert_eq!(solve_discrete(&tie, &opts()).unwrap().choice, Some(vec![1]));
}

#[test]
fn single_possible_assignment() {
    let mut p = worked_example();
    p.sla = SlaSpec::throughput();
    p.eligible = vec![vec![false, true], vec![true, false]];
    let o = enumerate_oracle(&p, &opts()).unwrap();
    assert_eq!(o.choice, Some(OPTION_D.to_vec()));
    assert_eq!(o.stats.nodes_explored, 1);
}

#[test]
fn impossible_sla_is_infeasible() {
    let mut p = worked_example();
    p.sla = SlaSpec::end_to_end(10.0);
    let err = enumerate_oracle(&p, &opts()).unwrap_err();
    assert!(matches!(&err, OptError::Infeasible(m) if m.contains("105")), "{err}");
    assert!(matches!(solve_discrete(&p, &opts()), Err(OptError::Infeasible(_))));
}

#[test]
fn limits_are_enforced() {
    let mut p = AssignmentProblem::new((0..12).map(|i| alloc::format!("t{i}")).collect(), (0..4).map(|j| alloc::format!("c{j}")).collect());
    assert!(matches!(enumerate_oracle(&p, &opts()), Err(OptError::TooLarge(_))));
    // all-zero costs keep every branch alive
    p.sla = SlaSpec::throughput();
    let tight = DiscreteOptions { max_nodes: 100, ..opts() };
    assert_eq!(solve_discrete(&p, &tight), Err(OptError::BudgetExceeded(100)));
}

#[test]
fn throughput_bound_is_checked_per_candidate() {
    let mut p = worked_example();
    p.sla = SlaSpec::throughput();
    // 1000/80 + 1000/25 = 52.5 per second, only option A reaches 50
    p.sla.min_throughput = Some(50.0);
    let a = solve_discrete(&p, &opts()).unwrap();
    assert_eq!(a.choice, Some(OPTION_A.to_vec()));
}

#[test]
fn capacity_prunes_assignments() {
    let mut p = worked_example();
    p.sla = SlaSpec::throughput();
    p.resources = vec!["mem_gb".into()];
    p.theta = vec![vec![vec![40.0], vec![40.0]]; 2];
    p.cap = vec![vec![Some(100.0)], vec![Some(50.0)]];
    // CO fits one task, which rules out all-CO ($0.07) and leaves D ($0.09)
    let a = solve_discrete(&p, &opts()).unwrap();
    assert_eq!(a.choice, Some(OPTION_D.to_vec()));
    assert!(a.eval.capacity_ok);
    assert_eq!(enumerate_oracle(&p, &opts()).unwrap().choice, a.choice);
}

#[test]
fn problem_round_trips_through_serde_defaults() {
    let p = worked_example();
    let text = serde_json::to_string(&p).unwrap();
    let back: AssignmentProblem = serde_json::from_str(&text).unwrap();
    assert_eq!(back, p);
    let minimal: AssignmentProblem = serde_json::from_str(r#"{"tasks":["a"],"classes":["h"]}"#).unwrap();
    assert_eq!(minimal.gamma, 1.0);
    assert_eq!(minimal.mode, SolveMode::Discrete);
}

#[test]
fn random_problems_are_deterministic_and_valid() {
    for seed in 0..100 {
        let p = random_problem(seed, 6, 4);
        p.validate().unwrap();
        assert!(p.n_tasks() <= 6 && p.n_classes() <= 4);
    }
    assert_eq!(random_problem(3, 6, 4), random_problem(3, 6, 4));
}

fn relaxed(p: &AssignmentProblem) -> (AssignmentProblem, AssignmentProblem) {
    let mut d = p.clone();
    d.edges.clear();
    d.sla.min_throughput = None;
    let mut f = d.clone();
    f.mode = SolveMode::Fractional;
    (d, f)
}

fn scaled(p: &AssignmentProblem, k: f64) -> AssignmentProblem {
    let mut q = p.clone();
    q.unit_cost.iter_mut().flatten().for_each(|c| *c *= k);
    q.profiled.iter_mut().flatten().flatten().for_each(|pr| pr.cost_usd *= k);
    q.edges.iter_mut().flat_map(|e| e.comm.iter_mut().flatten()).for_each(|c| c.cost_usd *= k);
    q.gamma *= k;
    q.sla.lambda_per_ms = q.sla.lambda_per_ms.map(|l| l * k);
    q
}

fn check_feasible(p: &AssignmentProblem, a: &Assignment) {
    for row in &a.x {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(row.iter().all(|x| (-1e-9..=1.0 + 1e-9).contains(x)));
    }
    for j in 0..p.n_classes() {
        for r in 0..p.resources.len() {
            if let Some(cap) = p.cap(j, r) {
                let used: f64 = (0..p.n_tasks()).map(|i| a.x[i][j] * p.theta(i, j, r)).sum();
                assert!(used <= cap + 1e-9, "class {j} resource {r}: {used} > {cap}");
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn bnb_matches_oracle(seed in any::<u64>()) {
        let p = random_problem(seed, 6, 4);
        let b = solve_discrete(&p, &opts());
        let o = enumerate_oracle(&p, &opts());
        match (b, o) {
            (Ok(b), Ok(o)) => {
                check_feasible(&p, &o);
                prop_assert_eq!(b.objective(), o.objective());
                prop_assert_eq!(b.choice, o.choice);
            }
            (Err(OptError::Infeasible(_)), Err(OptError::Infeasible(_))) => {}
            (b, o) => prop_assert!(false, "solver {:?} vs oracle {:?}", b, o),
        }
    }

    #[test]
    fn lp_lower_bounds_discrete(seed in any::<u64>()) {
        let (d, f) = relaxed(&random_problem(seed, 6, 4));
        if let Ok(disc) = solve_discrete(&d, &opts()) {
            let lp = solve_fractional(&f).expect("relaxation of a feasible problem is feasible");
            check_feasible(&f, &lp);
            prop_assert!(lp.objective() <= disc.objective() + 1e-9, "{} > {}", lp.objective(), disc.objective());
        }
    }

    #[test]
    fn cost_scaling_is_covariant(seed in any::<u64>(), k in prop::sample::select(vec![0.25, 0.5, 2.0, 8.0])) {
        let p = random_problem(seed, 5, 3);
        match (solve_discrete(&p, &opts()), solve_discrete(&scaled(&p, k), &opts())) {
            (Ok(a), Ok(b)) => {
                prop_assert_eq!(b.objective(), a.objective() * k);
                prop_assert_eq!(a.choice, b.choice);
            }
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "{:?} vs {:?}", a, b),
        }
    }

    #[test]
    fn objective_monotone_in_bound_and_lambda(seed in any::<u64>(), dt in 0.0..50.0f64, scale in 1.0..10.0f64) {
        let p = random_problem(seed, 5, 3);
        if let Some(t) = p.sla.e2e_ms {
            let mut looser = p.clone();
            looser.sla.e2e_ms = Some(t + dt);
            if let Ok(a) = solve_discrete(&p, &opts()) {
                let b = solve_discrete(&looser, &opts()).expect("looser bound stays feasible");
                prop_assert!(b.objective() <= a.objective());
            }
        }
        if let Some(l) = p.sla.lambda_per_ms {
            let mut heavier = p.clone();
            heavier.sla.lambda_per_ms = Some(l * scale + 0.1);
            if let (Ok(a), Ok(b)) = (solve_discrete(&p, &opts()), solve_discrete(&heavier, &opts())) {
                prop_assert!(b.objective() >= a.objective());
            }
        }
    }
}

#[test]
fn solutions_cover_every_task() {
    for seed in 0..50 {
        let p = random_problem(seed, 6, 4);
        if let Ok(a) = solve_discrete(&p, &opts()) {
            check_feasible(&p, &a);
            let v: Vec<usize> = a.choice.clone().unwrap();
            assert_eq!(v.len(), p.n_tasks());
        }
    }
}

#[test]
fn random_corpus_mix() {
    let mut feasible = 0;
    for seed in 0..200 {
        if solve_discrete(&random_problem(seed, 6, 4), &opts()).is_ok() {
            feasible += 1;
        }
    }
    // 138 of 200 at the time of writing; both outcomes must stay well represented
    assert!((100..190).contains(&feasible), "{feasible}");
}
