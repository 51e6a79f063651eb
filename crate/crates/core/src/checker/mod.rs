//! Probabilistic model checking of explicit MDPs.
//!
//! Probabilities are quantified over all schedulers: `Pmin`/`Pmax` for
//! reachability (optionally time-bounded in ticks), expected accumulated
//! reward until a goal, invariants as reachability of a violation, and a
//! Monte Carlo estimator under the uniform scheduler as an oracle.

mod engine;
mod simulate;

use std::collections::VecDeque;
use std::fmt;
use std::time::Instant;

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::chart::{Objective, Query, QueryKind, Relation};
use crate::dsl::format_query;
use crate::mdp::Mdp;
use crate::normalize::FExpr;
use crate::num::{to_f64, Duration};

use engine::{expect, iterate, Model};

pub use simulate::{monte_carlo, McEstimate, McOptions};

/// Slack used when comparing against `=`, `>=` and `<=` thresholds.
pub const THRESHOLD_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Opt {
    Min,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckOptions {
    /// Sup-norm change below which value iteration stops.
    pub tolerance: f64,
    pub max_iterations: u64,
    /// `F<b` excludes time `b` itself; `false` reads it as `F<=b`.
    pub strict_bounds: bool,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions { tolerance: 1e-8, max_iterations: 1_000_000, strict_bounds: true }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CheckError {
    #[error("model has no time base")]
    NoTimeBase,
    #[error("time bound {bound} is not a whole number of {unit} ticks")]
    BadBound { bound: String, unit: String },
    #[error("unknown reward `{0}`")]
    UnknownReward(String),
    #[error("time-bounded reward queries are not supported")]
    BoundedReward,
    #[error("at least 100 samples are needed for a confidence interval, got {0}")]
    TooFewSamples(u64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Bool(bool),
    Number(f64),
    /// Expected reward diverges.
    Infinite,
}

impl Value {
    pub fn as_f64(self) -> f64 {
        match self {
            Value::Bool(b) => b as i64 as f64,
            Value::Number(x) => x,
            Value::Infinite => f64::INFINITY,
        }
    }

    fn of(x: f64) -> Value {
        if x.is_infinite() {
            Value::Infinite
        } else {
            Value::Number(x)
        }
    }
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Value::Bool(b) => s.serialize_bool(*b),
            Value::Number(x) => s.serialize_f64(*x),
            Value::Infinite => s.serialize_str("Infinity"),
        }
    }
}

impl fmt::Display for Value {
    /// Two decimals, or three significant digits for small values.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Infinite => f.write_str("Infinity"),
            Value::Number(x) if *x == 0.0 || x.abs() >= 0.01 => write!(f, "{x:.2}"),
            Value::Number(x) => write!(f, "{x:.2e}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ResultKind {
    ExactBool,
    Numeric,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceStep {
    pub state: String,
    /// Action taken from `state`; absent on the last step.
    pub action: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryResult {
    pub query: String,
    pub value: Value,
    pub kind: ResultKind,
    /// Time bound in ticks; under strict semantics one tick fewer is allowed.
    pub bound: Option<u64>,
    pub iterations: u64,
    pub residual: f64,
    pub converged: bool,
    pub states: usize,
    /// For thresholds, the scheduler-worst value that was compared.
    pub compared: Option<Value>,
    /// Number of states from which the expected reward diverges.
    pub infinite_states: Option<usize>,
    pub counterexample: Option<Vec<TraceStep>>,
    /// Seconds.
    pub time: f64,
}

impl QueryResult {
    fn new(query: String, value: Value, mdp: &Mdp, started: Instant) -> QueryResult {
        let kind = if matches!(value, Value::Bool(_)) { ResultKind::ExactBool } else { ResultKind::Numeric };
        QueryResult {
            query,
            value,
            kind,
            bound: None,
            iterations: 0,
            residual: 0.0,
            converged: true,
            states: mdp.num_states(),
            compared: None,
            infinite_states: None,
            counterexample: None,
            time: started.elapsed().as_secs_f64(),
        }
    }
}

impl fmt::Display for QueryResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.query, self.value)?;
        if let Some(c) = self.compared {
            write!(f, " (value {c})")?;
        }
        if !self.converged {
            write!(f, " [not converged, residual {:.1e}]", self.residual)?;
        }
        if let Some(trace) = &self.counterexample {
            let steps: Vec<String> = trace
                .iter()
                .map(|t| match &t.action {
                    Some(a) => format!("{} --{a}-->", t.state),
                    None => t.state.clone(),
                })
                .collect();
            write!(f, "\n  counterexample: {}", steps.join(" "))?;
        }
        Ok(())
    }
}

/// Number of ticks in `bound`, with `F<b` mapped to at most `b - 1` ticks
/// when bounds are strict. `None` means the goal cannot be met in time.
fn tick_budget(mdp: &Mdp, bound: &Duration, options: &CheckOptions) -> Result<(u64, Option<u64>), CheckError> {
    let base = mdp.time_base.ok_or(CheckError::NoTimeBase)?;
    let ticks = bound
        .ticks(base)
        .ok_or_else(|| CheckError::BadBound { bound: bound.to_string(), unit: base.suffix().to_string() })?;
    let budget = if options.strict_bounds { ticks.checked_sub(1) } else { Some(ticks) };
    Ok((ticks, budget))
}

/// Minimal or maximal probability of eventually reaching `goal`, within
/// `bound` when given.
pub fn reach_prob(
    mdp: &Mdp,
    goal: &FExpr,
    opt: Opt,
    bound: Option<&Duration>,
    options: &CheckOptions,
) -> Result<QueryResult, CheckError> {
    let started = Instant::now();
    let model = Model::new(mdp);
    let goal = mdp.satisfying(goal);
    let label = format!("P{}=? [ F{} {} ]", opt_name(opt), bound.map(|b| format!("<{b}")).unwrap_or_default(), "goal");
    let (x, solve, ticks) = match bound {
        None => {
            let (x, s) = unbounded_prob(&model, &goal, opt, options);
            (x, s, None)
        }
        Some(b) => {
            let (ticks, budget) = tick_budget(mdp, b, options)?;
            let (x, s) = bounded_prob(&model, &goal, opt, budget, options);
            (x, s, Some(ticks))
        }
    };
    let mut r = QueryResult::new(label, Value::Number(x[mdp.initial]), mdp, started);
    r.bound = ticks;
    r.iterations = solve.iterations;
    r.residual = solve.residual;
    r.converged = solve.residual < options.tolerance;
    r.time = started.elapsed().as_secs_f64();
    Ok(r)
}

fn opt_name(opt: Opt) -> &'static str {
    match opt {
        Opt::Min => "min",
        Opt::Max => "max",
    }
}

pub(crate) fn unbounded_prob(model: &Model, goal: &[bool], opt: Opt, options: &CheckOptions) -> (Vec<f64>, engine::Solve) {
    let (zero, one) = match opt {
        Opt::Max => (model.prob0a(goal), model.prob1e(goal)),
        Opt::Min => (model.prob0e(goal), model.prob1a(goal)),
    };
    let mut x: Vec<f64> = one.iter().map(|o| if *o { 1.0 } else { 0.0 }).collect();
    let fixed: Vec<bool> = zero.iter().zip(&one).zip(goal).map(|((z, o), g)| *z || *o || *g).collect();
    let solve = iterate(
        model,
        &mut x,
        &fixed,
        opt == Opt::Max,
        options.tolerance,
        options.max_iterations,
        &|_, _| true,
        &|s, a, x| expect(&model.probs[s][a], x),
    );
    (x, solve)
}

/// Backward induction over tick levels. Level `j` holds the optimal
/// probability of reaching the goal with at most `j` more ticks; actions
/// other than tick take no time and are solved as a fixpoint per level.
fn bounded_prob(
    model: &Model,
    goal: &[bool],
    opt: Opt,
    budget: Option<u64>,
    options: &CheckOptions,
) -> (Vec<f64>, engine::Solve) {
    let n = model.len();
    let mut prev = vec![0.0; n];
    let mut total = engine::Solve { iterations: 0, residual: 0.0 };
    let Some(budget) = budget else {
        return (prev, total);
    };
    for _ in 0..=budget {
        let mut cur = prev.clone();
        for s in 0..n {
            if goal[s] {
                cur[s] = 1.0;
            }
        }
        let below = prev;
        let solve = iterate(
            model,
            &mut cur,
            goal,
            opt == Opt::Max,
            options.tolerance,
            options.max_iterations,
            &|_, _| true,
            &|s, a, x| {
                if model.tick[s][a] {
                    expect(&model.probs[s][a], &below)
                } else {
                    expect(&model.probs[s][a], x)
                }
            },
        );
        total.iterations += solve.iterations;
        total.residual = total.residual.max(solve.residual);
        prev = cur;
    }
    (prev, total)
}

/// Expected reward accumulated until the goal is reached. State rewards
/// accrue once per action taken. Infinite where the goal is missed with
/// positive probability under the optimizing scheduler.
pub fn reach_reward(
    mdp: &Mdp,
    reward: &str,
    goal: &FExpr,
    opt: Opt,
    options: &CheckOptions,
) -> Result<QueryResult, CheckError> {
    let started = Instant::now();
    let rv = mdp.reward(reward).ok_or_else(|| CheckError::UnknownReward(reward.to_string()))?;
    let model = Model::new(mdp);
    let goal = mdp.satisfying(goal);
    // finite exactly where every relevant scheduler reaches the goal surely
    let finite = match opt {
        Opt::Max => model.prob1a(&goal),
        Opt::Min => model.prob1e(&goal),
    };
    let n = mdp.num_states();
    let cost: Vec<Vec<f64>> = (0..n)
        .map(|s| rv.action[s].iter().map(|a| to_f64(a) + to_f64(&rv.state[s])).collect())
        .collect();
    let mut x: Vec<f64> = finite.iter().map(|f| if *f { 0.0 } else { f64::INFINITY }).collect();
    let fixed: Vec<bool> = (0..n).map(|s| goal[s] || !finite[s]).collect();
    for s in 0..n {
        if goal[s] {
            x[s] = 0.0;
        }
    }
    let stays = |s: usize, a: usize| model.probs[s][a].iter().all(|(t, _)| finite[*t]);
    let solve = iterate(
        &model,
        &mut x,
        &fixed,
        opt == Opt::Max,
        options.tolerance,
        options.max_iterations,
        &|s, a| opt == Opt::Max || stays(s, a),
        &|s, a, x| cost[s][a] + expect(&model.probs[s][a], x),
    );
    let label = format!("R{{\"{reward}\"}}{}=? [ F goal ]", opt_name(opt));
    let mut r = QueryResult::new(label, Value::of(x[mdp.initial]), mdp, started);
    r.iterations = solve.iterations;
    r.residual = solve.residual;
    r.converged = solve.residual < options.tolerance;
    r.infinite_states = Some(finite.iter().filter(|f| !**f).count());
    r.time = started.elapsed().as_secs_f64();
    Ok(r)
}

/// Whether `inv` holds in every reachable state; on failure, a shortest
/// path to a violation.
pub fn check_invariant(mdp: &Mdp, inv: &FExpr) -> QueryResult {
    let started = Instant::now();
    let n = mdp.num_states();
    let mut parent: Vec<Option<(usize, usize)>> = vec![None; n];
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([mdp.initial]);
    seen[mdp.initial] = true;
    let mut bad = None;
    while let Some(s) = queue.pop_front() {
        if !inv.holds(&mdp.states[s]) {
            bad = Some(s);
            break;
        }
        for (a, act) in mdp.actions[s].iter().enumerate() {
            for (t, _) in &act.dist {
                if !seen[*t] {
                    seen[*t] = true;
                    parent[*t] = Some((s, a));
                    queue.push_back(*t);
                }
            }
        }
    }
    let label = format!("P>=1 [ G {} ]", mdp.show(inv));
    let mut r = QueryResult::new(label, Value::Bool(bad.is_none()), mdp, started);
    if let Some(mut s) = bad {
        let mut trace = vec![TraceStep { state: mdp.state_text(s), action: None }];
        while let Some((p, a)) = parent[s] {
            trace.push(TraceStep { state: mdp.state_text(p), action: Some(mdp.actions[p][a].label.clone()) });
            s = p;
        }
        trace.reverse();
        r.counterexample = Some(trace);
    }
    r
}

/// Answers a chart query whose goal has already been lowered to `goal`.
/// Thresholds compare the value of the worst-case scheduler: `>`/`>=` use
/// the minimum, `<`/`<=` the maximum, and `=` needs both.
pub fn evaluate(mdp: &Mdp, q: &Query, goal: &FExpr, options: &CheckOptions) -> Result<QueryResult, CheckError> {
    let started = Instant::now();
    let solve = |opt: Opt| match &q.kind {
        QueryKind::Prob => reach_prob(mdp, goal, opt, q.time_bound.as_ref(), options),
        QueryKind::Reward(name) => {
            if q.time_bound.is_some() {
                return Err(CheckError::BoundedReward);
            }
            reach_reward(mdp, name, goal, opt, options)
        }
    };
    let mut r = match q.objective {
        Objective::Min => solve(Opt::Min)?,
        Objective::Max => solve(Opt::Max)?,
        Objective::Threshold(rel, bound) => {
            let bound = to_f64(&bound);
            let (holds, compared, mut r) = match rel {
                Relation::Gt | Relation::Ge => {
                    let r = solve(Opt::Min)?;
                    let v = r.value.as_f64();
                    (compare(rel, v, bound), r.value, r)
                }
                Relation::Lt | Relation::Le => {
                    let r = solve(Opt::Max)?;
                    let v = r.value.as_f64();
                    (compare(rel, v, bound), r.value, r)
                }
                Relation::Eq => {
                    let lo = solve(Opt::Min)?;
                    let hi = solve(Opt::Max)?;
                    let ok = compare(rel, lo.value.as_f64(), bound) && compare(rel, hi.value.as_f64(), bound);
                    let worst = if (lo.value.as_f64() - bound).abs() >= (hi.value.as_f64() - bound).abs() {
                        lo.value
                    } else {
                        hi.value
                    };
                    let mut r = hi;
                    r.iterations += lo.iterations;
                    r.converged &= lo.converged;
                    (ok, worst, r)
                }
            };
            r.value = Value::Bool(holds);
            r.kind = ResultKind::ExactBool;
            r.compared = Some(compared);
            r
        }
    };
    r.query = format_query(q);
    r.time = started.elapsed().as_secs_f64();
    Ok(r)
}

fn compare(rel: Relation, v: f64, bound: f64) -> bool {
    match rel {
        Relation::Lt => v < bound,
        Relation::Gt => v > bound,
        Relation::Le => v <= bound + THRESHOLD_SLACK,
        Relation::Ge => v >= bound - THRESHOLD_SLACK,
        Relation::Eq => (v - bound).abs() <= THRESHOLD_SLACK,
    }
}

#[cfg(test)]
mod tests;
