//! Structural and static-semantic checks on charts.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::{One, Zero};

use crate::chart::{Attachment, Chart, NodeId, NodeKind, QueryKind, Trigger, ROOT};
use crate::diag::{Diagnostic, SourceSpan};
use crate::expr::{Expr, Ty};
use crate::num::{format_rational, Rational};

#[derive(Debug, Clone, Copy, Default)]
pub struct CheckOptions {
    /// Require events to be declared before use.
    pub strict: bool,
}

/// Returns every violation found; an empty list means the chart is well-formed.
pub fn check_wellformed(chart: &Chart) -> Vec<Diagnostic> {
    check_wellformed_with(chart, CheckOptions::default())
}

pub fn check_wellformed_with(chart: &Chart, options: CheckOptions) -> Vec<Diagnostic> {
    let mut checker = Checker { chart, options, out: Vec::new() };
    if checker.structure() {
        checker.variables();
        checker.transitions();
        checker.invariants();
        checker.queries();
    }
    checker.out
}

struct Checker<'a> {
    chart: &'a Chart,
    options: CheckOptions,
    out: Vec<Diagnostic>,
}

impl Checker<'_> {
    fn node_span(&self, id: NodeId) -> Option<SourceSpan> {
        self.chart.source.nodes.get(&id).copied()
    }

    fn err(&mut self, msg: String, span: Option<SourceSpan>) {
        self.out.push(Diagnostic::error(msg).at(span));
    }

    /// Tree shape; returns false when the hierarchy is too broken to go on.
    fn structure(&mut self) -> bool {
        let c = self.chart;
        if c.nodes.is_empty() {
            self.err("chart has no root state".into(), None);
            return false;
        }
        let root = c.node(ROOT);
        if root.name != "root" || root.kind != NodeKind::Xor || root.parent.is_some() {
            self.err("the root state must be an XOR state named `root` without a parent".into(), None);
        }
        // Every node reachable exactly once from the root, parent links consistent.
        let mut seen = vec![0usize; c.nodes.len()];
        let mut stack = vec![ROOT];
        let mut ok = true;
        while let Some(n) = stack.pop() {
            seen[n.0] += 1;
            if seen[n.0] > 1 {
                self.err(format!("state `{}` occurs more than once in the hierarchy (cycle)", c.name(n)), None);
                ok = false;
                continue;
            }
            for ch in &c.node(n).children {
                if ch.0 >= c.nodes.len() {
                    self.err(format!("state `{}` has a dangling child", c.name(n)), None);
                    ok = false;
                    continue;
                }
                if c.parent(*ch) != Some(n) {
                    self.err(format!("state `{}` has an inconsistent parent link", c.name(*ch)), None);
                }
                stack.push(*ch);
            }
        }
        for id in c.node_ids() {
            if seen[id.0] == 0 {
                self.err(format!("state `{}` is not connected to the root", c.name(id)), self.node_span(id));
                ok = false;
            }
        }
        if !ok {
            return false;
        }
        for id in c.node_ids() {
            let n = c.node(id);
            let span = self.node_span(id);
            match n.kind {
                NodeKind::Basic if !n.children.is_empty() => {
                    self.err(format!("basic state `{}` cannot have children", n.name), span)
                }
                NodeKind::Xor if !n.children.is_empty() => match n.initial {
                    Some(i) if n.children.contains(&i) => {}
                    Some(_) => self.err(format!("initial state of `{}` is not one of its children", n.name), span),
                    None => self.err(format!("XOR state `{}` has no initial state", n.name), span),
                },
                NodeKind::And => {
                    if n.children.len() < 2 {
                        self.err(format!("AND state `{}` needs at least two regions", n.name), span);
                    }
                    for r in &n.children {
                        if c.node(*r).kind != NodeKind::Xor {
                            self.err(
                                format!("region `{}` of AND state `{}` must be an XOR state", c.name(*r), n.name),
                                self.node_span(*r),
                            );
                        }
                    }
                }
                _ => {}
            }
            if n.kind != NodeKind::Xor && n.initial.is_some() {
                self.err(format!("only XOR states have an initial state (`{}`)", n.name), span);
            }
            let mut names = BTreeSet::new();
            for ch in &n.children {
                if !names.insert(c.name(*ch)) {
                    let what = if n.kind == NodeKind::And { "region" } else { "state" };
                    self.err(format!("duplicate {what} name `{}` in `{}`", c.name(*ch), n.name), self.node_span(*ch));
                }
            }
            for (reward, cost) in &n.costs {
                if *cost < Rational::zero() {
                    self.err(format!("cost `{reward}` of `{}` is negative", n.name), span);
                }
            }
        }
        true
    }

    fn variables(&mut self) {
        let c = self.chart;
        for (i, v) in c.variables.iter().enumerate() {
            let span = c.source.variables.get(&i).copied();
            if v.scope.0 >= c.nodes.len() {
                self.err(format!("variable `{}` has an unknown scope", v.name), span);
                continue;
            }
            let (lo, hi) = v.domain.bounds();
            if lo > hi {
                self.err(format!("variable `{}` has an empty range [{lo}..{hi}]", v.name), span);
            } else if !v.domain.contains(v.initial) {
                self.err(format!("initial value {} of `{}` is outside [{lo}..{hi}]", v.initial, v.name), span);
            }
            let mut chain = vec![v.scope];
            chain.extend(c.ancestors(v.scope));
            let clash = c.variables.iter().enumerate().any(|(j, w)| {
                j < i && w.name == v.name && (chain.contains(&w.scope) || c.contains(v.scope, w.scope))
            });
            if clash {
                self.err(format!("variable `{}` is declared twice along one scope chain", v.name), span);
            }
        }
    }

    fn expect_bool(&mut self, e: &Expr, scope: NodeId, what: &str, span: Option<SourceSpan>) {
        let mut refs = Vec::new();
        e.state_refs(&mut refs);
        for r in refs {
            if let Err(msg) = self.chart.resolve_state(r) {
                self.err(format!("{what}: {msg}"), span);
            }
        }
        let chart = self.chart;
        match e.type_of(&|v| chart.var_type(scope, v)) {
            Ok(Ty::Bool) => {}
            Ok(Ty::Int) => self.err(format!("{what}: `{e}` is not a condition"), span),
            Err(msg) => self.err(format!("{what}: {msg}"), span),
        }
    }

    fn transitions(&mut self) {
        let c = self.chart;
        let declared: BTreeSet<&str> = c.events.iter().map(String::as_str).collect();
        for id in c.transition_ids() {
            let t = c.transition(id);
            let span = c.source.transitions.get(&id).copied();
            if t.source.0 >= c.nodes.len() {
                self.err("transition has an unknown source state".into(), span);
                continue;
            }
            let label = format!("transition on `{}` from `{}`", t.trigger, c.path(t.source));
            if t.source == ROOT {
                self.err(format!("{label}: the root cannot be a transition source"), span);
            }
            match &t.trigger {
                Trigger::Event(e) => {
                    if self.options.strict && !declared.contains(e.as_str()) {
                        self.err(format!("{label}: event `{e}` is not declared"), span);
                    }
                }
                Trigger::After(d) => {
                    if d.value == 0 {
                        self.err(format!("{label}: delay must be positive"), span);
                    }
                }
            }
            self.expect_bool(&t.guard, t.source, &label, span);
            if t.alternatives.is_empty() {
                self.err(format!("{label}: no target"), span);
                continue;
            }
            let mut sum = Rational::zero();
            for a in &t.alternatives {
                sum += a.weight;
                if a.weight <= Rational::zero() || a.weight > Rational::one() {
                    self.err(format!("{label}: probability {} is not in (0,1]", format_rational(&a.weight)), span);
                }
                if a.target.0 >= c.nodes.len() {
                    self.err(format!("{label}: unknown target state"), span);
                    continue;
                }
                if a.target == ROOT {
                    self.err(format!("{label}: the root cannot be a transition target"), span);
                }
                let mut assigned = BTreeSet::new();
                for (var, value) in &a.assignments {
                    if !assigned.insert(var.as_str()) {
                        self.err(format!("{label}: variable `{var}` assigned twice in one alternative"), span);
                    }
                    let Some(vi) = c.resolve_var(t.source, var) else {
                        self.err(format!("{label}: unknown variable `{var}`"), span);
                        continue;
                    };
                    let want = c.variables[vi].domain.ty();
                    match value.type_of(&|v| c.var_type(t.source, v)) {
                        Ok(ty) if ty == want => {}
                        Ok(ty) => self.err(format!("{label}: assigning {ty} to {want} variable `{var}`"), span),
                        Err(msg) => self.err(format!("{label}: {msg}"), span),
                    }
                    let mut refs = Vec::new();
                    value.state_refs(&mut refs);
                    for r in refs {
                        if let Err(msg) = c.resolve_state(r) {
                            self.err(format!("{label}: {msg}"), span);
                        }
                    }
                }
                for b in &a.broadcasts {
                    if self.options.strict && !declared.contains(b.as_str()) {
                        self.err(format!("{label}: broadcast event `{b}` is not declared"), span);
                    }
                }
                for (reward, cost) in &a.costs {
                    if *cost < Rational::zero() {
                        self.err(format!("{label}: cost `{reward}` is negative"), span);
                    }
                }
            }
            if sum != Rational::one() {
                self.err(format!("{label}: probabilities sum to {}", format_rational(&sum)), span);
            }
        }
    }

    fn invariants(&mut self) {
        let c = self.chart;
        for id in c.node_ids() {
            if let Some(inv) = &c.node(id).invariant {
                self.expect_bool(inv, id, &format!("invariant of `{}`", c.path(id)), self.node_span(id));
            }
        }
    }

    fn queries(&mut self) {
        let c = self.chart;
        let rewards = c.reward_names();
        let mut attached: BTreeMap<usize, NodeId> = BTreeMap::new();
        for id in c.node_ids() {
            for q in &c.node(id).queries {
                attached.insert(q.0, id);
            }
        }
        for (i, q) in c.queries.iter().enumerate() {
            let span = c.source.queries.get(&crate::chart::QueryId(i)).copied();
            let scope = match q.attachment {
                Attachment::State(s) if s.0 < c.nodes.len() => {
                    if attached.get(&i) != Some(&s) {
                        self.err(format!("query {i} is not listed on its state `{}`", c.name(s)), span);
                    }
                    s
                }
                Attachment::State(_) => {
                    self.err(format!("query {i} is attached to an unknown state"), span);
                    continue;
                }
                Attachment::Floating => {
                    if q.predicate.is_none() {
                        self.err("floating formula needs a goal condition".into(), span);
                    }
                    ROOT
                }
            };
            if let QueryKind::Reward(r) = &q.kind {
                if !rewards.contains(r) {
                    self.err(format!("query refers to reward `{r}` which no state or transition defines"), span);
                }
                if q.time_bound.is_some() {
                    self.err("time bounds are only supported on probability queries".into(), span);
                }
            }
            if let Some(p) = &q.predicate {
                self.expect_bool(p, scope, "query condition", span);
            }
        }
    }
}
