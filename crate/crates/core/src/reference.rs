//! Direct interpreter of chart semantics over concrete configurations.
//!
//! Deliberately independent of the normalizer: it keeps an explicit set of
//! active states, computes exits and entries itself and evaluates chart
//! expressions as written. It is slow and exists to cross-check the
//! flattening and the generated code.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use num_traits::{One, Zero};

use crate::chart::{Chart, NodeId, NodeKind, TransitionId, Trigger, ROOT};
use crate::expr::{EvalEnv, Expr};
use crate::normalize::{sanitize, Layout};
use crate::num::{common_base, Rational, TimeUnit};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Config {
    pub active: BTreeSet<NodeId>,
    /// Indexed like `Chart::variables`.
    pub data: Vec<i64>,
    pub clocks: BTreeMap<NodeId, i64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Options {
    /// Model time with tick steps and clock guards; otherwise timed
    /// transitions fire whenever their pseudo-event is dispatched.
    pub clocks: bool,
}

impl Default for Options {
    fn default() -> Self {
        Options { clocks: true }
    }
}

#[derive(Clone)]
struct Run {
    cfg: Config,
    moved: BTreeSet<NodeId>,
    fired: bool,
}

type Dist = Vec<(Rational, Run)>;

pub struct Interpreter<'a> {
    chart: &'a Chart,
    options: Options,
    base: Option<TimeUnit>,
    /// Largest delay in ticks per timed source state.
    clock_max: BTreeMap<NodeId, i64>,
}

struct Env<'a> {
    chart: &'a Chart,
    scope: NodeId,
    cfg: &'a Config,
}

impl EvalEnv for Env<'_> {
    fn value(&self, var: &str) -> Option<i64> {
        let idx = self.chart.resolve_var(self.scope, var).or_else(|| {
            let all: Vec<usize> = (0..self.chart.variables.len()).filter(|i| self.chart.variables[*i].name == var).collect();
            (all.len() == 1).then(|| all[0])
        })?;
        Some(self.cfg.data[idx])
    }

    fn is_active(&self, state: &str) -> Option<bool> {
        self.chart.resolve_state(state).ok().map(|s| self.cfg.active.contains(&s))
    }
}

impl<'a> Interpreter<'a> {
    pub fn new(chart: &'a Chart, options: Options) -> Self {
        let delays: Vec<(NodeId, crate::num::Duration)> = chart
            .transitions
            .iter()
            .filter_map(|t| match t.trigger {
                Trigger::After(d) => Some((t.source, d)),
                Trigger::Event(_) => None,
            })
            .collect();
        let base = (!delays.is_empty()).then(|| common_base(&delays.iter().map(|(_, d)| *d).collect::<Vec<_>>()));
        let mut clock_max = BTreeMap::new();
        if let Some(b) = base {
            for (s, d) in &delays {
                let t = d.ticks(b).unwrap() as i64;
                let e = clock_max.entry(*s).or_insert(0);
                *e = t.max(*e);
            }
        }
        Interpreter { chart, options, base, clock_max }
    }

    fn default_enter(&self, n: NodeId, into: &mut Vec<NodeId>) {
        into.push(n);
        let node = self.chart.node(n);
        match node.kind {
            NodeKind::Basic => {}
            NodeKind::Xor => {
                if let Some(i) = node.initial.or(node.children.first().copied()) {
                    self.default_enter(i, into);
                }
            }
            NodeKind::And => node.children.iter().for_each(|c| self.default_enter(*c, into)),
        }
    }

    pub fn initial(&self) -> Config {
        let mut active = Vec::new();
        self.default_enter(ROOT, &mut active);
        Config {
            active: active.into_iter().collect(),
            data: self.chart.variables.iter().map(|v| v.initial).collect(),
            clocks: self.clock_max.keys().map(|s| (*s, 0)).collect(),
        }
    }

    /// Events the environment can issue: declared or used events that no
    /// transition broadcasts, then one pseudo-event per timed trigger.
    pub fn events(&self) -> Vec<String> {
        let mut broadcast = BTreeSet::new();
        let mut out: Vec<String> = self.chart.events.clone();
        for t in &self.chart.transitions {
            if let Trigger::Event(e) = &t.trigger {
                if !out.contains(e) {
                    out.push(e.clone());
                }
            }
            for a in &t.alternatives {
                for b in &a.broadcasts {
                    broadcast.insert(b.clone());
                    if !out.contains(b) {
                        out.push(b.clone());
                    }
                }
            }
        }
        out.retain(|e| !broadcast.contains(e));
        for t in &self.chart.transitions {
            if let Trigger::After(d) = &t.trigger {
                let k = format!("{}_after_{}", sanitize(self.chart.name(t.source)), d);
                if !out.contains(&k) {
                    out.push(k);
                }
            }
        }
        out
    }

    fn matches(&self, id: TransitionId, event: &str) -> bool {
        let t = self.chart.transition(id);
        match &t.trigger {
            Trigger::Event(e) => e == event,
            Trigger::After(d) => format!("{}_after_{}", sanitize(self.chart.name(t.source)), d) == event,
        }
    }

    fn enabled(&self, run: &Run, source: NodeId, event: &str) -> Vec<TransitionId> {
        if run.moved.contains(&source) {
            return Vec::new();
        }
        let env = Env { chart: self.chart, scope: source, cfg: &run.cfg };
        self.chart
            .transition_ids()
            .filter(|id| {
                let t = self.chart.transition(*id);
                if t.source != source || !self.matches(*id, event) {
                    return false;
                }
                if let (Trigger::After(d), true) = (&t.trigger, self.options.clocks) {
                    let ticks = d.ticks(self.base.unwrap()).unwrap() as i64;
                    if run.cfg.clocks.get(&source) != Some(&ticks) {
                        return false;
                    }
                }
                if t.guard.eval(&env) != Some(1) {
                    return false;
                }
                t.alternatives.iter().all(|a| {
                    a.assignments.iter().all(|(v, e)| {
                        let idx = self.chart.resolve_var(source, v).unwrap();
                        e.eval(&env).is_some_and(|x| self.chart.variables[idx].domain.contains(x))
                    })
                })
            })
            .collect()
    }

    /// All distributions the macro-step for `event` can produce. Empty when
    /// nothing fires.
    pub fn step(&self, cfg: &Config, event: &str) -> Vec<Vec<(Rational, Config)>> {
        let run = Run { cfg: cfg.clone(), moved: BTreeSet::new(), fired: false };
        let dists = self.react(ROOT, run, event);
        if dists.iter().all(|d| d.iter().all(|(_, r)| !r.fired)) {
            return Vec::new();
        }
        dists.into_iter().map(|d| merge(d.into_iter().map(|(p, r)| (p, r.cfg)).collect())).collect()
    }

    fn react(&self, node: NodeId, run: Run, event: &str) -> Vec<Dist> {
        let n = self.chart.node(node);
        match n.kind {
            NodeKind::Basic => vec![vec![(Rational::one(), run)]],
            NodeKind::Xor => {
                let Some(child) = n.children.iter().copied().find(|c| run.cfg.active.contains(c)) else {
                    return vec![vec![(Rational::one(), run)]];
                };
                let enabled = self.enabled(&run, child, event);
                if enabled.is_empty() {
                    return self.react(child, run, event);
                }
                enabled.into_iter().flat_map(|t| self.fire(&run, t, event)).collect()
            }
            NodeKind::And => {
                let mut acc: Vec<Dist> = vec![vec![(Rational::one(), run)]];
                for r in &n.children {
                    acc = then_each(acc, |run| {
                        if run.cfg.active.contains(r) {
                            self.react(*r, run, event)
                        } else {
                            vec![vec![(Rational::one(), run)]]
                        }
                    });
                }
                acc
            }
        }
    }

    /// Nearest XOR state that strictly contains both ends.
    fn scope_of(&self, a: NodeId, b: NodeId) -> NodeId {
        let up = |mut n: NodeId| {
            let mut v = Vec::new();
            while let Some(p) = self.chart.node(n).parent {
                v.push(p);
                n = p;
            }
            v
        };
        let above_a = up(a);
        up(b).into_iter().find(|x| above_a.contains(x) && self.chart.node(*x).kind == NodeKind::Xor).unwrap_or(ROOT)
    }

    fn fire(&self, run: &Run, id: TransitionId, event: &str) -> Vec<Dist> {
        let t = self.chart.transition(id);
        let mut per_alt: Vec<(Rational, Vec<Dist>)> = Vec::new();
        for a in &t.alternatives {
            let mut next = run.clone();
            next.fired = true;
            let scope = self.scope_of(t.source, a.target);
            let strictly_below = |n: &NodeId| {
                let mut cur = self.chart.node(*n).parent;
                while let Some(p) = cur {
                    if p == scope {
                        return true;
                    }
                    cur = self.chart.node(p).parent;
                }
                false
            };
            let exited: Vec<NodeId> = run.cfg.active.iter().copied().filter(strictly_below).collect();
            // path from just below the scope down to the target
            let mut path = vec![a.target];
            while let Some(p) = self.chart.node(*path.last().unwrap()).parent {
                if p == scope {
                    break;
                }
                path.push(p);
            }
            path.reverse();
            let mut entered = Vec::new();
            for (i, n) in path.iter().enumerate() {
                if i + 1 == path.len() {
                    self.default_enter(*n, &mut entered);
                    break;
                }
                entered.push(*n);
                if self.chart.node(*n).kind == NodeKind::And {
                    for r in &self.chart.node(*n).children {
                        if *r != path[i + 1] {
                            self.default_enter(*r, &mut entered);
                        }
                    }
                }
            }
            let env = Env { chart: self.chart, scope: t.source, cfg: &run.cfg };
            let new_data: Vec<(usize, i64)> = a
                .assignments
                .iter()
                .map(|(v, e)| (self.chart.resolve_var(t.source, v).unwrap(), e.eval(&env).unwrap()))
                .collect();
            for x in &exited {
                next.cfg.active.remove(x);
            }
            for x in exited.iter().chain(entered.iter()) {
                if let Some(c) = next.cfg.clocks.get_mut(x) {
                    *c = 0;
                }
            }
            next.cfg.active.extend(entered.iter().copied());
            for (i, x) in new_data {
                next.cfg.data[i] = x;
            }
            next.moved.extend(exited.iter().chain(entered.iter()).copied());
            next.moved.insert(t.source);
            let mut acc: Vec<Dist> = vec![vec![(Rational::one(), next)]];
            for b in &a.broadcasts {
                acc = then_each(acc, |r| self.react(ROOT, r, b));
            }
            per_alt.push((a.weight, acc));
        }
        let _ = event;
        mix(per_alt)
    }

    /// Time advance; `None` while some timed transition is due.
    pub fn tick(&self, cfg: &Config) -> Option<Config> {
        if !self.options.clocks || self.clock_max.is_empty() {
            return None;
        }
        for e in self.events() {
            if e.contains("_after_") && !self.step(cfg, &e).is_empty() {
                return None;
            }
        }
        let mut next = cfg.clone();
        for (s, c) in next.clocks.iter_mut() {
            if cfg.active.contains(s) {
                *c = (*c + 1).min(self.clock_max[s]);
            }
        }
        Some(next)
    }

    /// Flat valuation in the normalizer's variable order; inactive selectors
    /// hold their initial child.
    pub fn encode(&self, layout: &Layout, cfg: &Config) -> Vec<i64> {
        let mut out = vec![0; layout.vars.len()];
        for (node, v) in &layout.scope_var {
            let n = self.chart.node(*node);
            let pick = n.children.iter().position(|c| cfg.active.contains(c) && cfg.active.contains(node));
            let init = n.initial.and_then(|i| n.children.iter().position(|c| *c == i)).unwrap_or(0);
            out[*v] = pick.unwrap_or(init) as i64;
        }
        for (i, v) in layout.data_var.iter().enumerate() {
            out[*v] = cfg.data[i];
        }
        for (s, v) in &layout.clock_var {
            out[*v] = cfg.clocks.get(s).copied().unwrap_or(0);
        }
        out
    }
}

fn merge(d: Vec<(Rational, Config)>) -> Vec<(Rational, Config)> {
    let mut m: BTreeMap<Config, Rational> = BTreeMap::new();
    for (p, c) in d {
        *m.entry(c).or_insert_with(Rational::zero) += p;
    }
    m.into_iter().map(|(c, p)| (p, c)).collect()
}

fn then_each(acc: Vec<Dist>, mut f: impl FnMut(Run) -> Vec<Dist>) -> Vec<Dist> {
    let mut out = Vec::new();
    for d in acc {
        let opts: Vec<(Rational, Vec<Dist>)> = d.into_iter().map(|(p, r)| (p, f(r))).collect();
        out.extend(mix(opts));
    }
    out
}

fn mix(opts: Vec<(Rational, Vec<Dist>)>) -> Vec<Dist> {
    let mut out: Vec<Dist> = vec![Vec::new()];
    for (p, choices) in opts {
        let mut next = Vec::new();
        for prefix in &out {
            for d in &choices {
                let mut c = prefix.clone();
                c.extend(d.iter().map(|(q, r)| (p * q, r.clone())));
                next.push(c);
            }
        }
        out = next;
    }
    out
}

/// Labelled transition system over flat valuations.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lts {
    pub states: BTreeSet<Vec<i64>>,
    /// (source, event, distribution sorted by successor).
    pub transitions: BTreeSet<(Vec<i64>, String, Vec<(Vec<i64>, Rational)>)>,
}

/// Explores every configuration reachable from the initial one.
pub fn explore(chart: &Chart, layout: &Layout, options: Options, limit: usize) -> Result<Lts, String> {
    let it = Interpreter::new(chart, options);
    let events = it.events();
    let mut lts = Lts::default();
    let mut seen: BTreeSet<Config> = BTreeSet::new();
    let mut queue = VecDeque::new();
    let init = it.initial();
    seen.insert(init.clone());
    queue.push_back(init);
    while let Some(cfg) = queue.pop_front() {
        if seen.len() > limit {
            return Err(format!("more than {limit} configurations"));
        }
        let src = it.encode(layout, &cfg);
        lts.states.insert(src.clone());
        let mut add = |label: &str, d: Vec<(Rational, Config)>, queue: &mut VecDeque<Config>| {
            let mut flat: BTreeMap<Vec<i64>, Rational> = BTreeMap::new();
            for (p, c) in d {
                *flat.entry(it.encode(layout, &c)).or_insert_with(Rational::zero) += p;
                if seen.insert(c.clone()) {
                    queue.push_back(c);
                }
            }
            lts.transitions.insert((src.clone(), label.to_string(), flat.into_iter().collect()));
        };
        for e in &events {
            for d in it.step(&cfg, e) {
                add(e, d, &mut queue);
            }
        }
        if let Some(next) = it.tick(&cfg) {
            add(crate::normalize::TICK, vec![(Rational::one(), next)], &mut queue);
        }
    }
    Ok(lts)
}

/// Expression evaluation against a configuration, for tests and tools.
pub fn eval_in(chart: &Chart, cfg: &Config, e: &Expr) -> Option<i64> {
    e.eval(&Env { chart, scope: ROOT, cfg })
}
