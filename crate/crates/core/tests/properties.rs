//! Property tests over generated charts and queries.

mod common;

use std::collections::BTreeMap;

use pchart_core::analysis::{compile, CompileError, Compiled};
use pchart_core::chart::{Attachment, Chart, Query};
use pchart_core::checker::{evaluate, monte_carlo, reach_prob, CheckOptions, McOptions, Opt, Value};
use pchart_core::dsl::{format_query, parse_chart, parse_query, pretty_print};
use pchart_core::mdp::{build_mdp, BuildOptions, Mdp};
use pchart_core::normalize::FExpr;
use pchart_core::num::{Duration, TimeUnit};
use pchart_core::prism::{export_model, read_model};
use proptest::prelude::*;

fn compiled(chart: &Chart) -> Option<Compiled> {
    match compile(chart, BuildOptions::default()) {
        Ok(c) => Some(c),
        Err(CompileError::Diagnostics(_)) => None,
        Err(e) => panic!("{e}"),
    }
}

fn at_state(chart: &Chart, text: &str, state: &str) -> Query {
    let mut q = parse_query(text).unwrap();
    q.attachment = Attachment::State(chart.resolve_state(state).unwrap());
    q
}

fn num(v: Value) -> f64 {
    match v {
        Value::Number(x) => x,
        other => panic!("expected a number, got {other:?}"),
    }
}

fn leaf_states(chart: &Chart) -> Vec<String> {
    chart.node_ids().filter(|n| chart.node(*n).children.is_empty()).map(|n| chart.name(n).to_string()).collect()
}

fn predicate() -> impl Strategy<Value = String> {
    let atom = prop_oneof![
        (0..4i64).prop_map(|k| format!("x = {k}")),
        (0..4i64).prop_map(|k| format!("x < {k}")),
        (-3..4i64).prop_map(|k| format!("x + {k} >= 2")),
        Just("in Idle".to_string()),
        Just("b".to_string()),
    ];
    atom.prop_recursive(3, 12, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a}) & ({b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("{a} | {b}")),
            inner.clone().prop_map(|a| format!("!({a})")),
            (inner.clone(), inner).prop_map(|(a, b)| format!("({a}) => ({b})")),
        ]
    })
}

fn query_text() -> impl Strategy<Value = String> {
    let kind = prop_oneof![Just("P".to_string()), "[a-z][a-z0-9_]{0,6}".prop_map(|r| format!("${r}"))];
    let objective = prop_oneof![
        Just(".min".to_string()),
        Just(".max".to_string()),
        (prop_oneof![Just("<"), Just("<="), Just(">"), Just(">="), Just("=")], 0u32..20, 1u32..8)
            .prop_map(|(r, n, d)| format!("{r}{n}/{d}")),
    ];
    let bound = prop::option::of((1u64..5000, prop_oneof![Just("ms"), Just("s"), Just("h"), Just("µs"), Just("d")]));
    (kind, objective, bound, prop::option::of(predicate())).prop_map(|(k, o, b, p)| {
        let mut s = format!("?{k}{o}");
        if let Some((n, u)) = b {
            s.push_str(&format!(" F<{n}{u}"));
        }
        if let Some(p) = p {
            s.push_str(&format!(" ({p})"));
        }
        s
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pretty_print_round_trips(seed in any::<u64>(), prob in any::<bool>()) {
        let chart = common::random_chart(seed, prob);
        let text = pretty_print(&chart);
        let again = parse_chart(&text);
        let back = again.chart.unwrap_or_else(|| panic!("{:?}\n{text}", again.diagnostics));
        prop_assert_eq!(pretty_print(&back), text);
        prop_assert_eq!(back.transitions.len(), chart.transitions.len());
        prop_assert_eq!(leaf_states(&back), leaf_states(&chart));
    }

    #[test]
    fn query_text_round_trips(text in query_text()) {
        let q = parse_query(&text).unwrap_or_else(|d| panic!("{d}: {text}"));
        let canonical = format_query(&q);
        let again = parse_query(&canonical).unwrap_or_else(|d| panic!("{d}: {canonical}"));
        prop_assert_eq!(&again, &q);
        prop_assert_eq!(format_query(&again), canonical);
    }

    #[test]
    fn prism_export_round_trips(seed in any::<u64>(), prob in any::<bool>()) {
        let chart = common::random_chart(seed, prob);
        if let Some(c) = compiled(&chart) {
            let text = export_model(&c.system);
            let back = read_model(&text).unwrap_or_else(|e| panic!("{e}\n{text}"));
            let (mdp, _) = build_mdp(&back, BuildOptions::default()).unwrap();
            prop_assert!(c.mdp.isomorphic(&mdp).is_ok());
            prop_assert_eq!(export_model(&back), text);
        }
    }

    #[test]
    fn dump_round_trips(seed in any::<u64>()) {
        let chart = common::random_chart(seed, true);
        if let Some(c) = compiled(&chart) {
            let back = Mdp::from_dump(&c.mdp.dump()).unwrap();
            // roles refer to chart nodes and are not part of the dump
            prop_assert_eq!(&back.states, &c.mdp.states);
            prop_assert_eq!(&back.actions, &c.mdp.actions);
            prop_assert_eq!(&back.rewards, &c.mdp.rewards);
            prop_assert_eq!(back.initial, c.mdp.initial);
            prop_assert_eq!(back.time_base, c.mdp.time_base);
            let names = |m: &Mdp| m.vars.iter().map(|v| (v.name.clone(), v.lo, v.hi, v.initial)).collect::<Vec<_>>();
            prop_assert_eq!(names(&back), names(&c.mdp));
            prop_assert!(back.validate().is_ok());
        }
    }

    #[test]
    fn min_never_exceeds_max(seed in any::<u64>()) {
        let chart = common::random_chart(seed, true);
        let Some(c) = compiled(&chart) else { return Ok(()) };
        let opts = CheckOptions::default();
        for state in leaf_states(&chart) {
            let lo = num(evaluate(&c.mdp, &at_state(&chart, "?P.min", &state), &goal(&c, &chart, "?P.min", &state), &opts).unwrap().value);
            let hi = num(evaluate(&c.mdp, &at_state(&chart, "?P.max", &state), &goal(&c, &chart, "?P.max", &state), &opts).unwrap().value);
            prop_assert!((0.0..=1.0 + 1e-9).contains(&lo) && (0.0..=1.0 + 1e-9).contains(&hi));
            prop_assert!(lo <= hi + 1e-7, "{state}: min {lo} > max {hi}");
        }
    }

    #[test]
    fn bounded_reachability_grows_with_the_bound(seed in any::<u64>()) {
        let chart = common::random_chart(seed, true);
        let Some(c) = compiled(&chart) else { return Ok(()) };
        let Some(base) = c.mdp.time_base else { return Ok(()) };
        prop_assume!(base == TimeUnit::Second);
        let opts = CheckOptions::default();
        for state in leaf_states(&chart) {
            let g = goal(&c, &chart, "?P.max", &state);
            let unbounded = reach_prob(&c.mdp, &g, Opt::Max, None, &opts).unwrap().value.as_f64();
            for o in [Opt::Min, Opt::Max] {
                let mut last = 0.0;
                for b in 0..8 {
                    let v = reach_prob(&c.mdp, &g, o, Some(&Duration::new(b, TimeUnit::Second)), &opts).unwrap().value.as_f64();
                    prop_assert!(v + 1e-9 >= last, "{state} {o:?}: F<{b} gives {v} after {last}");
                    prop_assert!(v <= unbounded + 1e-7);
                    last = v;
                }
            }
        }
    }
}

fn goal(c: &Compiled, chart: &Chart, text: &str, state: &str) -> FExpr {
    c.goal(chart, &at_state(chart, text, state)).unwrap()
}

#[test]
fn value_iteration_matches_path_enumeration_on_acyclic_charts() {
    let mut schedulers = BTreeMap::new();
    for seed in 0..50u64 {
        let (src, goal_state) = common::acyclic_source(seed);
        let chart = parse_chart(&src).chart.unwrap_or_else(|| panic!("{src}"));
        let c = compile(&chart, BuildOptions::default()).unwrap();
        assert!(c.mdp.num_states() <= 12);
        let g = goal(&c, &chart, "?P.min", &goal_state);
        let (lo, hi) = common::enumerate_paths(&c.mdp, &c.mdp.satisfying(&g));
        let opts = CheckOptions::default();
        let vmin = num(evaluate(&c.mdp, &at_state(&chart, "?P.min", &goal_state), &g, &opts).unwrap().value);
        let vmax = num(evaluate(&c.mdp, &at_state(&chart, "?P.max", &goal_state), &g, &opts).unwrap().value);
        assert!((vmin - lo).abs() <= 1e-9, "seed {seed}: min {vmin} vs {lo}\n{src}");
        assert!((vmax - hi).abs() <= 1e-9, "seed {seed}: max {vmax} vs {hi}\n{src}");
        *schedulers.entry(c.mdp.actions.iter().any(|a| a.len() > 1)).or_insert(0) += 1;
    }
    assert!(schedulers.get(&true).copied().unwrap_or(0) >= 10, "too few charts with a real choice: {schedulers:?}");
}

#[test]
fn monte_carlo_agrees_on_deterministic_random_charts() {
    let mut checked = 0;
    for seed in 0..200u64 {
        let chart = common::random_chart(seed, true);
        let Some(c) = compiled(&chart) else { continue };
        if c.mdp.actions.iter().any(|a| a.len() > 1) {
            continue;
        }
        for state in leaf_states(&chart) {
            let q = at_state(&chart, "?P.min", &state);
            let g = c.goal(&chart, &q).unwrap();
            let v = num(evaluate(&c.mdp, &q, &g, &CheckOptions::default()).unwrap().value);
            let est = monte_carlo(&c.mdp, &q, &g, &McOptions { samples: 20_000, seed, ..McOptions::default() }).unwrap();
            assert_eq!(est.truncated, 0);
            assert!((v - est.mean).abs() <= 3.0 * est.std_err + 1e-9, "seed {seed} {state}: {v} vs {est:?}");
            checked += 1;
        }
    }
    assert!(checked >= 5, "only {checked} deterministic cases");
}
