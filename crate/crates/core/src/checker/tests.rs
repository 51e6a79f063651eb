use super::*;
use crate::analysis::{compile, verify, Compiled};
use crate::chart::{Attachment, Chart};
use crate::dsl::{parse_chart, parse_query};
use crate::mdp::BuildOptions;

const SR: &str = include_str!("../../models/sender_receiver.pchart");
const RELIABLE: &str = include_str!("../../models/sender_receiver_reliable.pchart");
const CHAIN: &str = include_str!("../../models/chain.pchart");
const PROBE: &str = include_str!("../../models/probe.pchart");

fn load(src: &str) -> (Chart, Compiled) {
    let chart = parse_chart(src).chart.unwrap();
    let c = compile(&chart, BuildOptions::default()).unwrap();
    (chart, c)
}

/// Evaluates `text` as if attached to `state`.
fn ask(chart: &Chart, c: &Compiled, state: &str, text: &str) -> QueryResult {
    let mut q = parse_query(text).unwrap();
    if !state.is_empty() {
        q.attachment = Attachment::State(chart.resolve_state(state).unwrap());
    }
    let goal = c.goal(chart, &q).unwrap();
    evaluate(&c.mdp, &q, &goal, &CheckOptions::default()).unwrap()
}

fn num(r: &QueryResult) -> f64 {
    match r.value {
        Value::Number(x) => x,
        other => panic!("expected a number, got {other:?}"),
    }
}

#[test]
fn sender_receiver_values() {
    let (chart, c) = load(SR);
    assert!((num(&ask(&chart, &c, "Off", "?P.min")) - 1.0).abs() < 1e-9);
    assert!((num(&ask(&chart, &c, "Off", "?$tran.max")) - 10.0 / 9.0).abs() < 1e-6);
    assert!((num(&ask(&chart, &c, "Off", "?$energy.max")) - 43.0 / 18.0).abs() < 1e-6);
    assert_eq!(ask(&chart, &c, "Off", "?P>0.5").value, Value::Bool(true));
    assert_eq!(ask(&chart, &c, "Off", "?P>1.5").value, Value::Bool(false));
}

#[test]
fn sender_receiver_invariant_holds() {
    let (chart, c) = load(SR);
    let report = verify(&chart, &c, &CheckOptions::default());
    assert_eq!(report.invariant.unwrap().value, Value::Bool(true));
    assert_eq!(report.queries.len(), 4);
    assert!(report.queries.iter().all(|q| q.error.is_none()));
}

#[test]
fn reliable_channel_energy() {
    let (chart, c) = load(RELIABLE);
    assert!((num(&ask(&chart, &c, "Off", "?$energy.max")) - 2.1).abs() < 1e-9);
}

#[test]
fn chain_minimum() {
    let (chart, c) = load(CHAIN);
    assert!((num(&ask(&chart, &c, "S3", "?P.min")) - 0.03).abs() < 1e-12);
    assert!((num(&ask(&chart, &c, "S3", "?P.max")) - 0.03).abs() < 1e-12);
}

#[test]
fn initial_goal_is_immediate() {
    let (chart, c) = load(SR);
    assert_eq!(num(&ask(&chart, &c, "Listening", "?P.min")), 1.0);
    assert_eq!(num(&ask(&chart, &c, "Listening", "?$energy.max")), 0.0);
}

#[test]
fn probe_bounds() {
    let (chart, c) = load(PROBE);
    assert_eq!(num(&ask(&chart, &c, "Done", "?P.min F<2s")), 0.0);
    assert_eq!(num(&ask(&chart, &c, "Done", "?P.min F<3s")), 1.0);
    assert_eq!(num(&ask(&chart, &c, "Done", "?P.max F<2s")), 0.0);
    let q = parse_query("?P.min F<2s").unwrap();
    let goal = c.goal(&chart, &Query { attachment: Attachment::State(chart.resolve_state("Done").unwrap()), ..q }).unwrap();
    let loose = CheckOptions { strict_bounds: false, ..CheckOptions::default() };
    assert_eq!(reach_prob(&c.mdp, &goal, Opt::Min, Some(&Duration::new(2, crate::num::TimeUnit::Second)), &loose).unwrap().value, Value::Number(1.0));
}

#[test]
fn bound_on_untimed_model_is_an_error() {
    let (chart, c) = load(SR);
    let mut q = parse_query("?P.min F<3s").unwrap();
    q.attachment = Attachment::State(chart.resolve_state("Off").unwrap());
    let goal = c.goal(&chart, &q).unwrap();
    let err = evaluate(&c.mdp, &q, &goal, &CheckOptions::default()).unwrap_err();
    assert_eq!(err.to_string(), "model has no time base");
}

#[test]
fn invariant_violation_has_shortest_trace() {
    let (chart, c) = load("chart L { state Off; state On; on poweron from Off -> On; }");
    let on = c.normalized.layout.in_state(&chart, chart.resolve_state("On").unwrap());
    let r = check_invariant(&c.mdp, &FExpr::not(on));
    assert_eq!(r.value, Value::Bool(false));
    let trace = r.counterexample.unwrap();
    assert_eq!(
        trace,
        vec![
            TraceStep { state: "(root=Off)".into(), action: Some("poweron".into()) },
            TraceStep { state: "(root=On)".into(), action: None },
        ]
    );
    assert_eq!(check_invariant(&c.mdp, &crate::normalize::TRUE).value, Value::Bool(true));
}

#[test]
fn unknown_reward_is_an_error() {
    let (chart, c) = load(SR);
    let mut q = parse_query("?$heat.max").unwrap();
    q.attachment = Attachment::State(chart.resolve_state("Off").unwrap());
    let goal = c.goal(&chart, &q).unwrap();
    assert_eq!(evaluate(&c.mdp, &q, &goal, &CheckOptions::default()), Err(CheckError::UnknownReward("heat".into())));
}

#[test]
fn divergent_reward_is_infinite() {
    // the sender may stay asleep forever under the maximizing scheduler
    let src = "chart D { state A init { cost c = 1; } state B; state G; on e from A -> B; on f from A -> G; on e from B -> B; }";
    let (chart, c) = load(src);
    let r = ask(&chart, &c, "G", "?$c.max");
    assert_eq!(r.value, Value::Infinite);
    assert!(r.infinite_states.unwrap() >= 1);
    let r = ask(&chart, &c, "G", "?$c.min");
    assert_eq!(r.value, Value::Number(1.0));
}

#[test]
fn monte_carlo_agrees_with_value_iteration() {
    let (chart, c) = load(SR);
    let mut q = parse_query("?$tran.max").unwrap();
    q.attachment = Attachment::State(chart.resolve_state("Off").unwrap());
    let goal = c.goal(&chart, &q).unwrap();
    let est = monte_carlo(&c.mdp, &q, &goal, &McOptions { samples: 100_000, seed: 7, ..McOptions::default() }).unwrap();
    assert!(est.ci_low <= 10.0 / 9.0 && 10.0 / 9.0 <= est.ci_high, "{est:?}");
    assert_eq!(est.truncated, 0);
    let again = monte_carlo(&c.mdp, &q, &goal, &McOptions { samples: 100_000, seed: 7, ..McOptions::default() }).unwrap();
    assert_eq!(est, again);
}

#[test]
fn monte_carlo_on_certain_goal_is_exact() {
    let (chart, c) = load("chart L { state Off; state On; on poweron from Off -> On; }");
    let mut q = parse_query("?P.min").unwrap();
    q.attachment = Attachment::State(chart.resolve_state("On").unwrap());
    let goal = c.goal(&chart, &q).unwrap();
    let est = monte_carlo(&c.mdp, &q, &goal, &McOptions { samples: 1000, ..McOptions::default() }).unwrap();
    assert_eq!((est.mean, est.ci_low, est.ci_high), (1.0, 1.0, 1.0));
    let few = monte_carlo(&c.mdp, &q, &goal, &McOptions { samples: 99, ..McOptions::default() });
    assert_eq!(few, Err(CheckError::TooFewSamples(99)));
}

#[test]
fn monte_carlo_bounded_probe() {
    let (chart, c) = load(PROBE);
    for (text, want) in [("?P.min F<2s", 0.0), ("?P.min F<3s", 1.0)] {
        let mut q = parse_query(text).unwrap();
        q.attachment = Attachment::State(chart.resolve_state("Done").unwrap());
        let goal = c.goal(&chart, &q).unwrap();
        let est = monte_carlo(&c.mdp, &q, &goal, &McOptions { samples: 200, ..McOptions::default() }).unwrap();
        assert_eq!(est.mean, want, "{text}");
    }
}

#[test]
fn equality_threshold_needs_both_extremes() {
    let (chart, c) = load(CHAIN);
    assert_eq!(ask(&chart, &c, "S3", "?P=0.03").value, Value::Bool(true));
    assert_eq!(ask(&chart, &c, "S3", "?P=0.3").value, Value::Bool(false));
    // minimum is 0, maximum is 1
    let src = "chart N { state A; state B; state C; on e from A -> B; on f from A -> C; }";
    let (chart, c) = load(src);
    assert_eq!(ask(&chart, &c, "B", "?P=1").value, Value::Bool(false));
    assert_eq!(ask(&chart, &c, "B", "?P<=1").value, Value::Bool(true));
    assert_eq!(ask(&chart, &c, "B", "?P>0").value, Value::Bool(false));
}

#[test]
fn results_serialize() {
    let (chart, c) = load(SR);
    let r = ask(&chart, &c, "Off", "?$tran.max");
    assert_eq!(r.kind, ResultKind::Numeric);
    assert_eq!(r.to_string(), "?$tran.max: 1.11");
    assert_eq!(Value::Number(0.000_122_6).to_string(), "1.23e-4");
}
