//! Explicit-state MDP construction from a flat command system.

use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use num_traits::{One, Zero};
use thiserror::Error;

use crate::expr::BinOp;
use crate::normalize::{render, FExpr, FlatSystem, FlatVar, GuardedCommand, Syntax, Update, TICK};
use crate::num::{format_rational, parse_rational, Rational, TimeUnit};

pub const DEFAULT_STATE_LIMIT: usize = 5_000_000;
pub const DEADLOCK: &str = "deadlock";
const DUMP_HEADER: &str = "# pchart-mdp 1";

#[derive(Debug, Clone, PartialEq)]
pub struct Action {
    pub label: String,
    /// Distinct successors in first-reached order.
    pub dist: Vec<(usize, Rational)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardVectors {
    pub name: String,
    pub state: Vec<Rational>,
    /// Parallel to `Mdp::actions`.
    pub action: Vec<Vec<Rational>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mdp {
    pub vars: Vec<FlatVar>,
    pub states: Vec<Vec<i64>>,
    pub initial: usize,
    pub actions: Vec<Vec<Action>>,
    pub rewards: Vec<RewardVectors>,
    /// Duration of one tick; present iff the model is timed.
    pub time_base: Option<TimeUnit>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuildStats {
    pub num_states: usize,
    pub num_transitions: usize,
    pub build_time: Duration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BuildOptions {
    pub state_limit: usize,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions { state_limit: DEFAULT_STATE_LIMIT }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum BuildError {
    #[error("state space exceeds the limit of {limit} states; unexplored states include {}", frontier.join(", "))]
    StateLimit { limit: usize, frontier: Vec<String> },
    /// A command produced an invalid distribution or valuation.
    #[error("internal error: {0}")]
    Internal(String),
}

/// Adds the `tick` command that advances every active clock, saturating at
/// its largest delay. Tick is disabled wherever a timed command is enabled,
/// so delays are exact. Untimed systems and systems that already have a
/// tick command are returned unchanged.
pub fn apply_digital_clocks(system: &FlatSystem) -> FlatSystem {
    let mut out = system.clone();
    if !system.is_timed() || system.clocks.is_empty() || system.commands.iter().any(|c| c.label == TICK) {
        return out;
    }
    let due = FExpr::disj(system.commands.iter().filter(|c| c.timed).map(|c| c.guard.clone()));
    let assignments = system
        .clocks
        .iter()
        .map(|c| {
            let x = FExpr::Var(c.clock);
            let running = FExpr::and(c.active.clone(), FExpr::bin(BinOp::Lt, x.clone(), FExpr::Const(c.max)));
            let next = FExpr::ite(running, FExpr::bin(BinOp::Add, x.clone(), FExpr::Const(1)), x);
            (c.clock, next.simplify())
        })
        .collect();
    out.commands.push(GuardedCommand {
        label: TICK.to_string(),
        event: TICK.to_string(),
        guard: FExpr::not(due).simplify(),
        updates: vec![Update { prob: Rational::one(), assignments }],
        transitions: Vec::new(),
        timed: false,
    });
    out
}

/// Breadth-first exploration from the initial valuation. Commands are
/// tried in label order so state numbering is deterministic.
pub fn build_mdp(system: &FlatSystem, options: BuildOptions) -> Result<(Mdp, BuildStats), BuildError> {
    let started = Instant::now();
    let mut order: Vec<&GuardedCommand> = system.commands.iter().collect();
    order.sort_by(|a, b| a.label.cmp(&b.label));
    let mut index: HashMap<Vec<i64>, usize> = HashMap::new();
    let mut states: Vec<Vec<i64>> = Vec::new();
    let mut actions: Vec<Vec<Action>> = Vec::new();
    let mut queue = VecDeque::new();
    let init = system.initial();
    index.insert(init.clone(), 0);
    states.push(init);
    queue.push_back(0usize);
    while let Some(s) = queue.pop_front() {
        let vals = states[s].clone();
        let mut here = Vec::new();
        for c in &order {
            if !c.guard.holds(&vals) {
                continue;
            }
            let mut dist: Vec<(usize, Rational)> = Vec::new();
            let mut total = Rational::zero();
            for u in &c.updates {
                if u.prob < Rational::zero() || u.prob > Rational::one() {
                    return Err(BuildError::Internal(format!("command [{}] has probability {}", c.label, u.prob)));
                }
                let next = u.apply(&vals).ok_or_else(|| {
                    BuildError::Internal(format!("command [{}] cannot be evaluated in {}", c.label, show(&system.vars, &vals)))
                })?;
                if let Some((i, v)) = next.iter().enumerate().find(|(i, v)| **v < system.vars[*i].lo || **v > system.vars[*i].hi) {
                    return Err(BuildError::Internal(format!(
                        "command [{}] sets {} to {v} outside [{}..{}]",
                        c.label, system.vars[i].name, system.vars[i].lo, system.vars[i].hi
                    )));
                }
                let t = match index.get(&next) {
                    Some(t) => *t,
                    None => {
                        if states.len() >= options.state_limit {
                            let mut frontier: Vec<String> =
                                queue.iter().take(5).map(|q| show(&system.vars, &states[*q])).collect();
                            frontier.push(show(&system.vars, &next));
                            return Err(BuildError::StateLimit { limit: options.state_limit, frontier });
                        }
                        let t = states.len();
                        index.insert(next.clone(), t);
                        states.push(next);
                        queue.push_back(t);
                        t
                    }
                };
                total += u.prob;
                match dist.iter_mut().find(|(x, _)| *x == t) {
                    Some((_, p)) => *p += u.prob,
                    None => dist.push((t, u.prob)),
                }
            }
            if total != Rational::one() {
                return Err(BuildError::Internal(format!("command [{}] distribution sums to {total}", c.label)));
            }
            here.push(Action { label: c.label.clone(), dist });
        }
        if here.is_empty() {
            here.push(Action { label: DEADLOCK.to_string(), dist: vec![(s, Rational::one())] });
        }
        if actions.len() <= s {
            actions.resize(s + 1, Vec::new());
        }
        actions[s] = here;
    }
    let rewards = system
        .rewards
        .iter()
        .map(|r| RewardVectors {
            name: r.name.clone(),
            state: states
                .iter()
                .map(|v| r.state_items.iter().filter(|(g, _)| g.holds(v)).map(|(_, x)| *x).sum())
                .collect(),
            action: states
                .iter()
                .zip(&actions)
                .map(|(v, acts)| {
                    acts.iter()
                        .map(|a| {
                            r.action_items.iter().filter(|i| i.label == a.label && i.guard.holds(v)).map(|i| i.reward).sum()
                        })
                        .collect()
                })
                .collect(),
        })
        .collect();
    let mdp = Mdp { vars: system.vars.clone(), states, initial: 0, actions, rewards, time_base: system.time_base };
    let stats = BuildStats {
        num_states: mdp.states.len(),
        num_transitions: mdp.num_transitions(),
        build_time: started.elapsed(),
    };
    Ok((mdp, stats))
}

fn show(vars: &[FlatVar], vals: &[i64]) -> String {
    let parts: Vec<String> = vars
        .iter()
        .zip(vals)
        .map(|(v, x)| match v.values.get(*x as usize).filter(|_| v.is_scope()) {
            Some(name) => format!("{}={}", v.name, name),
            None => format!("{}={}", v.name, x),
        })
        .collect();
    format!("({})", parts.join(", "))
}

impl Mdp {
    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_transitions(&self) -> usize {
        self.actions.iter().flatten().map(|a| a.dist.len()).sum()
    }

    pub fn state_text(&self, s: usize) -> String {
        show(&self.vars, &self.states[s])
    }

    pub fn find_state(&self, vals: &[i64]) -> Option<usize> {
        self.states.iter().position(|v| v == vals)
    }

    pub fn reward(&self, name: &str) -> Option<&RewardVectors> {
        self.rewards.iter().find(|r| r.name == name)
    }

    /// States satisfying `e`.
    pub fn satisfying(&self, e: &FExpr) -> Vec<bool> {
        self.states.iter().map(|v| e.holds(v)).collect()
    }

    /// Line-oriented text form, read back by [`Mdp::from_dump`].
    ///
    /// ```text
    /// # pchart-mdp 1
    /// timebase d            (or `timebase -`)
    /// var <name> <lo> <hi> <init> <scope|int|bool> [value names]
    /// reward <name>
    /// state <index> <values...>
    /// initial <index>
    /// action <src> <label> <succ>:<prob> ...
    /// srew <reward index> <state> <value>     (non-zero entries only)
    /// arew <reward index> <state> <action> <value>
    /// ```
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{DUMP_HEADER}");
        let _ = writeln!(out, "timebase {}", self.time_base.map(|t| t.suffix()).unwrap_or("-"));
        for v in &self.vars {
            let kind = if v.is_scope() {
                "scope"
            } else if v.is_bool {
                "bool"
            } else {
                "int"
            };
            let mut line = format!("var {} {} {} {} {}", v.name, v.lo, v.hi, v.initial, kind);
            for n in &v.values {
                line.push(' ');
                line.push_str(n);
            }
            let _ = writeln!(out, "{line}");
        }
        for r in &self.rewards {
            let _ = writeln!(out, "reward {}", r.name);
        }
        for (i, s) in self.states.iter().enumerate() {
            let vals: Vec<String> = s.iter().map(|x| x.to_string()).collect();
            let _ = writeln!(out, "state {i} {}", vals.join(" "));
        }
        let _ = writeln!(out, "initial {}", self.initial);
        for (s, acts) in self.actions.iter().enumerate() {
            for a in acts {
                let succ: Vec<String> = a.dist.iter().map(|(t, p)| format!("{t}:{}", format_rational(p))).collect();
                let _ = writeln!(out, "action {s} {} {}", a.label, succ.join(" "));
            }
        }
        for (r, rv) in self.rewards.iter().enumerate() {
            for (s, x) in rv.state.iter().enumerate() {
                if !x.is_zero() {
                    let _ = writeln!(out, "srew {r} {s} {}", format_rational(x));
                }
            }
            for (s, xs) in rv.action.iter().enumerate() {
                for (a, x) in xs.iter().enumerate() {
                    if !x.is_zero() {
                        let _ = writeln!(out, "arew {r} {s} {a} {}", format_rational(x));
                    }
                }
            }
        }
        out
    }

    pub fn from_dump(text: &str) -> Result<Mdp, String> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, l)) if l.trim() == DUMP_HEADER => {}
            _ => return Err(format!("missing `{DUMP_HEADER}` header")),
        }
        let mut mdp = Mdp { vars: Vec::new(), states: Vec::new(), initial: 0, actions: Vec::new(), rewards: Vec::new(), time_base: None };
        for (no, line) in lines {
            let err = |m: &str| format!("line {}: {m}", no + 1);
            let f: Vec<&str> = line.split_whitespace().collect();
            let int = |s: &str| s.parse::<i64>().map_err(|_| err(&format!("bad integer `{s}`")));
            let idx = |s: &str| s.parse::<usize>().map_err(|_| err(&format!("bad index `{s}`")));
            let rat = |s: &str| parse_rational(s).ok_or_else(|| err(&format!("bad number `{s}`")));
            match f.as_slice() {
                ["timebase", "-"] => mdp.time_base = None,
                ["timebase", u] => mdp.time_base = Some(TimeUnit::from_suffix(u).ok_or_else(|| err("bad time unit"))?),
                ["var", name, lo, hi, init, kind, values @ ..] => {
                    let role = match *kind {
                        "scope" => crate::normalize::VarRole::Scope(crate::chart::NodeId(usize::MAX)),
                        "bool" | "int" => crate::normalize::VarRole::Data(mdp.vars.len()),
                        _ => return Err(err("unknown variable kind")),
                    };
                    mdp.vars.push(FlatVar {
                        name: name.to_string(),
                        role,
                        lo: int(lo)?,
                        hi: int(hi)?,
                        initial: int(init)?,
                        values: values.iter().map(|s| s.to_string()).collect(),
                        is_bool: *kind == "bool",
                    });
                }
                ["reward", name] => mdp.rewards.push(RewardVectors { name: name.to_string(), state: Vec::new(), action: Vec::new() }),
                ["state", i, vals @ ..] => {
                    if idx(i)? != mdp.states.len() || vals.len() != mdp.vars.len() {
                        return Err(err("states must be numbered in order and list every variable"));
                    }
                    mdp.states.push(vals.iter().map(|v| int(v)).collect::<Result<_, _>>()?);
                }
                ["initial", i] => mdp.initial = idx(i)?,
                ["action", s, label, succ @ ..] => {
                    let s = idx(s)?;
                    if mdp.actions.len() < mdp.states.len() {
                        mdp.actions.resize(mdp.states.len(), Vec::new());
                    }
                    let dist = succ
                        .iter()
                        .map(|e| {
                            let (t, p) = e.split_once(':').ok_or_else(|| err("expected succ:prob"))?;
                            Ok((idx(t)?, rat(p)?))
                        })
                        .collect::<Result<Vec<_>, String>>()?;
                    mdp.actions.get_mut(s).ok_or_else(|| err("unknown state"))?.push(Action { label: label.to_string(), dist });
                }
                ["srew", r, s, x] => {
                    let n = mdp.states.len();
                    let rv = mdp.rewards.get_mut(idx(r)?).ok_or_else(|| err("unknown reward"))?;
                    rv.state.resize(n, Rational::zero());
                    *rv.state.get_mut(idx(s)?).ok_or_else(|| err("unknown state"))? = rat(x)?;
                }
                ["arew", r, s, a, x] => {
                    let shape: Vec<usize> = mdp.actions.iter().map(|a| a.len()).collect();
                    let rv = mdp.rewards.get_mut(idx(r)?).ok_or_else(|| err("unknown reward"))?;
                    if rv.action.is_empty() {
                        rv.action = shape.iter().map(|n| vec![Rational::zero(); *n]).collect();
                    }
                    *rv.action.get_mut(idx(s)?).and_then(|v| v.get_mut(idx(a).ok()?)).ok_or_else(|| err("unknown action"))? = rat(x)?;
                }
                _ => return Err(err("unrecognized line")),
            }
        }
        let n = mdp.states.len();
        mdp.actions.resize(n, Vec::new());
        for rv in &mut mdp.rewards {
            rv.state.resize(n, Rational::zero());
            if rv.action.is_empty() {
                rv.action = mdp.actions.iter().map(|a| vec![Rational::zero(); a.len()]).collect();
            }
        }
        mdp.validate()?;
        Ok(mdp)
    }

    /// Structural invariants: every state has an action, successors are
    /// valid and every distribution sums to one.
    pub fn validate(&self) -> Result<(), String> {
        if self.initial >= self.states.len() {
            return Err("initial state out of range".into());
        }
        for (s, acts) in self.actions.iter().enumerate() {
            if acts.is_empty() {
                return Err(format!("state {s} has no action"));
            }
            for a in acts {
                if a.dist.iter().any(|(t, _)| *t >= self.states.len()) {
                    return Err(format!("action {} of state {s} has an invalid successor", a.label));
                }
                let total: Rational = a.dist.iter().map(|(_, p)| *p).sum();
                if total != Rational::one() {
                    return Err(format!("action {} of state {s} sums to {total}", a.label));
                }
            }
        }
        Ok(())
    }

    /// Checks that `other` has the same states (by valuation), the same
    /// labelled distributions and the same rewards, whatever the numbering.
    pub fn isomorphic(&self, other: &Mdp) -> Result<(), String> {
        if self.num_states() != other.num_states() || self.num_transitions() != other.num_transitions() {
            return Err(format!(
                "{} states and {} transitions versus {} and {}",
                self.num_states(),
                self.num_transitions(),
                other.num_states(),
                other.num_transitions()
            ));
        }
        let index: HashMap<&Vec<i64>, usize> = other.states.iter().enumerate().map(|(i, v)| (v, i)).collect();
        let map: Vec<usize> = self
            .states
            .iter()
            .map(|v| index.get(v).copied().ok_or_else(|| format!("state {v:?} is missing")))
            .collect::<Result<_, _>>()?;
        if map[self.initial] != other.initial {
            return Err("initial states differ".into());
        }
        let names: Vec<&str> = self.rewards.iter().map(|r| r.name.as_str()).collect();
        let other_rewards: Vec<&RewardVectors> =
            names.iter().map(|n| other.reward(n).ok_or(format!("reward `{n}` is missing"))).collect::<Result<_, _>>()?;
        type Key = (String, Vec<(Vec<i64>, Rational)>, Vec<Rational>);
        let keys = |m: &Mdp, s: usize, rw: &[&RewardVectors]| -> Vec<Key> {
            let mut out: Vec<Key> = m.actions[s]
                .iter()
                .enumerate()
                .map(|(a, act)| {
                    let mut d: Vec<(Vec<i64>, Rational)> = act.dist.iter().map(|(t, p)| (m.states[*t].clone(), *p)).collect();
                    d.sort();
                    (act.label.clone(), d, rw.iter().map(|r| r.action[s][a] + r.state[s]).collect())
                })
                .collect();
            out.sort();
            out
        };
        let mine: Vec<&RewardVectors> = self.rewards.iter().collect();
        for (s, t) in map.iter().enumerate() {
            if keys(self, s, &mine) != keys(other, *t, &other_rewards) {
                return Err(format!("state {} behaves differently", self.state_text(s)));
            }
        }
        Ok(())
    }

    /// Renders an expression over this model's variables in PRISM syntax.
    pub fn show(&self, e: &FExpr) -> String {
        render(e, &self.vars, Syntax::Prism)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_chart;
    use crate::normalize::normalize;

    fn build(src: &str) -> Mdp {
        let chart = parse_chart(src).chart.unwrap();
        let sys = apply_digital_clocks(&normalize(&chart).unwrap().system);
        build_mdp(&sys, BuildOptions::default()).unwrap().0
    }

    #[test]
    fn sender_receiver_reaches_three_states() {
        let m = build(include_str!("../models/sender_receiver.pchart"));
        let names: Vec<String> = (0..m.num_states()).map(|s| m.state_text(s)).collect();
        assert_eq!(
            names,
            vec![
                "(sender=Sleeping, receiver=Listening)",
                "(sender=Sending, receiver=Listening)",
                "(sender=Sending, receiver=Off)"
            ]
        );
    }

    #[test]
    fn onoff_has_deadlock_self_loop() {
        let m = build("chart L { state Off; state On; on poweron from Off -> On; }");
        assert_eq!(m.num_states(), 2);
        assert_eq!(m.num_transitions(), 2);
        assert_eq!(m.actions[0][0].label, "poweron");
        assert_eq!(m.actions[1], vec![Action { label: DEADLOCK.into(), dist: vec![(1, Rational::one())] }]);
    }

    #[test]
    fn two_tick_probe() {
        let m = build("chart T { state Wait; state Done; on after 2s from Wait -> Done; }");
        // (Wait,0) -tick-> (Wait,1) -tick-> (Wait,2) -timed-> (Done,0)
        assert_eq!(m.num_states(), 4);
        let labels: Vec<Vec<&str>> = m.actions.iter().map(|a| a.iter().map(|x| x.label.as_str()).collect()).collect();
        assert_eq!(labels, vec![vec!["tick"], vec!["tick"], vec!["Wait_after_2s"], vec!["tick"]]);
    }

    #[test]
    fn untimed_systems_are_unchanged_by_clocks() {
        let chart = parse_chart(include_str!("../models/sender_receiver.pchart")).chart.unwrap();
        let sys = normalize(&chart).unwrap().system;
        assert_eq!(apply_digital_clocks(&sys), sys);
    }

    #[test]
    fn state_limit_reports_frontier() {
        let chart = parse_chart("chart C { var n: int[0..9] = 0; state S; on e from S when n < 9 -> S do n := n + 1; }").chart.unwrap();
        let sys = normalize(&chart).unwrap().system;
        match build_mdp(&sys, BuildOptions { state_limit: 3 }) {
            Err(BuildError::StateLimit { limit: 3, frontier }) => assert!(!frontier.is_empty()),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn dump_round_trips() {
        let m = build(include_str!("../models/sender_receiver.pchart"));
        let back = Mdp::from_dump(&m.dump()).unwrap();
        assert_eq!(back.states, m.states);
        assert_eq!(back.actions, m.actions);
        assert_eq!(back.rewards, m.rewards);
        assert!(Mdp::from_dump("state 0").is_err());
    }
}
