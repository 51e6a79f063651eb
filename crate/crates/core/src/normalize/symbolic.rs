//! Symbolic execution of one macro-step per event.
//!
//! The executor runs the chart semantics on symbolic values (expressions
//! over the pre-state). Whenever control flow depends on a condition that
//! the current path condition does not decide, it stops with that condition
//! and the driver restarts on both refinements. Each finished path yields
//! one or more guarded commands whose guard is the path condition.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::{One, Zero};

use crate::chart::{Chart, NodeId, NodeKind, TransitionId, Trigger, ROOT};
use crate::diag::Diagnostic;
use crate::expr::BinOp;
use crate::num::Rational;

use super::flat::{FExpr, FlatVar, Update, FALSE, TRUE};
use super::layout::{sanitize, Layout};

/// Largest valuation space enumerated when deciding a condition.
const DECIDE_BUDGET: u64 = 100_000;
/// Bound on path-condition leaves per event.
const MAX_LEAVES: usize = 200_000;
/// Bound on nondeterministic combinations inside one macro-step.
const MAX_CHOICES: usize = 10_000;

pub(crate) type Dist = Vec<(Rational, SymState)>;

#[derive(Debug, Clone)]
pub(crate) struct SymState {
    pub vals: Vec<FExpr>,
    pub marked: BTreeSet<NodeId>,
    pub costs: BTreeMap<String, Rational>,
    pub fired: Vec<TransitionId>,
    /// (variable, writer, event, expression as written) for conflict checks.
    writes: Vec<(usize, TransitionId, String, FExpr)>,
}

pub(crate) enum Stop {
    Split(FExpr),
    Fatal(Diagnostic),
}

/// One finished path: its condition and the nondeterministic choices there.
pub(crate) struct Leaf {
    pub pc: Vec<FExpr>,
    pub choices: Vec<Dist>,
}

/// Trigger key of a timed transition: `<State>_after_<delay>`.
pub fn timed_event(chart: &Chart, source: NodeId, d: &crate::num::Duration) -> String {
    format!("{}_after_{}", sanitize(chart.name(source)), d)
}

pub(crate) struct Executor<'a> {
    pub chart: &'a Chart,
    pub layout: &'a Layout,
    /// Trigger key → nodes whose subtree holds a source of such a transition.
    pub relevant: BTreeMap<String, BTreeSet<NodeId>>,
    pub by_source: BTreeMap<(NodeId, String), Vec<TransitionId>>,
    guards: Vec<FExpr>,
    /// Per transition and alternative: lowered assignments.
    pub assigns: Vec<Vec<Vec<(usize, FExpr)>>>,
    pub in_range: Vec<FExpr>,
    pub warnings: Vec<Diagnostic>,
}

impl<'a> Executor<'a> {
    pub fn new(chart: &'a Chart, layout: &'a Layout) -> Result<Self, Diagnostic> {
        let mut relevant: BTreeMap<String, BTreeSet<NodeId>> = BTreeMap::new();
        let mut by_source: BTreeMap<(NodeId, String), Vec<TransitionId>> = BTreeMap::new();
        let mut guards = Vec::new();
        let mut assigns = Vec::new();
        let mut in_range = Vec::new();
        let mut warnings = Vec::new();
        for id in chart.transition_ids() {
            let t = chart.transition(id);
            let span = chart.source.transitions.get(&id).copied();
            let key = Self::trigger_key(chart, id);
            let set = relevant.entry(key.clone()).or_default();
            set.insert(t.source);
            set.extend(chart.ancestors(t.source));
            by_source.entry((t.source, key)).or_default().push(id);
            let lower_err = |m: String| Diagnostic::error(m).at(span);
            let mut guard = layout.lower(chart, t.source, &t.guard).map_err(lower_err)?;
            if let Trigger::After(d) = &t.trigger {
                let clock = layout.clock_var[&t.source];
                guard = FExpr::and(guard, FExpr::var_is(clock, layout.ticks(d)));
            }
            guards.push(guard.simplify());
            let mut per_alt = Vec::new();
            let mut range = Vec::new();
            for a in &t.alternatives {
                let mut lowered = Vec::new();
                for (v, e) in &a.assignments {
                    let idx = chart
                        .resolve_var(t.source, v)
                        .ok_or_else(|| lower_err(format!("unknown variable `{v}`")))?;
                    let flat = layout.data_var[idx];
                    let rhs = layout.lower_rhs(chart, t.source, e).map_err(lower_err)?;
                    let var = &layout.vars[flat];
                    let cond = FExpr::and(
                        FExpr::bin(BinOp::Ge, rhs.clone(), FExpr::Const(var.lo)),
                        FExpr::bin(BinOp::Le, rhs.clone(), FExpr::Const(var.hi)),
                    )
                    .simplify();
                    if !cond.is_true() && !statically_true(&cond, &layout.vars, &guards[guards.len() - 1]) {
                        warnings.push(
                            Diagnostic::warning(format!(
                                "assignment `{v} := {e}` may leave [{}..{}]; the transition is disabled where it would",
                                var.lo, var.hi
                            ))
                            .at(span),
                        );
                    }
                    range.push(cond);
                    lowered.push((flat, rhs));
                }
                per_alt.push(lowered);
            }
            assigns.push(per_alt);
            in_range.push(FExpr::conj(range));
        }
        Ok(Executor { chart, layout, relevant, by_source, guards, assigns, in_range, warnings })
    }

    pub fn trigger_key(chart: &Chart, id: TransitionId) -> String {
        let t = chart.transition(id);
        match &t.trigger {
            Trigger::Event(e) => e.clone(),
            Trigger::After(d) => timed_event(chart, t.source, d),
        }
    }

    pub fn initial_state(&self) -> SymState {
        SymState {
            vals: (0..self.layout.vars.len()).map(FExpr::Var).collect(),
            marked: BTreeSet::new(),
            costs: BTreeMap::new(),
            fired: Vec::new(),
            writes: Vec::new(),
        }
    }

    /// All paths of the macro-step triggered by `event` from an arbitrary
    /// pre-state.
    pub fn leaves(&self, event: &str) -> Result<Vec<Leaf>, Diagnostic> {
        let mut work: Vec<Vec<FExpr>> = vec![Vec::new()];
        let mut out = Vec::new();
        while let Some(pc) = work.pop() {
            match self.react(&pc, ROOT, self.initial_state(), event) {
                Ok(choices) => out.push(Leaf { pc, choices }),
                Err(Stop::Fatal(d)) => return Err(d),
                Err(Stop::Split(cond)) => {
                    let atom = self.pick_atom(&pc, &cond).unwrap_or(cond);
                    for cand in [FExpr::not(atom.clone()), atom] {
                        if let Some(next) = self.refine(&pc, cand) {
                            work.push(next);
                        }
                    }
                }
            }
            if out.len() + work.len() > MAX_LEAVES {
                return Err(Diagnostic::error(format!(
                    "event `{event}` splits into more than {MAX_LEAVES} cases; reduce variable ranges"
                )));
            }
        }
        Ok(out)
    }

    fn stutter(st: SymState) -> Vec<Dist> {
        vec![vec![(Rational::one(), st)]]
    }

    fn is_relevant(&self, event: &str, node: NodeId) -> bool {
        self.relevant.get(event).is_some_and(|s| s.contains(&node))
    }

    fn react(&self, pc: &[FExpr], node: NodeId, st: SymState, event: &str) -> Result<Vec<Dist>, Stop> {
        if !self.is_relevant(event, node) {
            return Ok(Self::stutter(st));
        }
        match self.chart.node(node).kind {
            NodeKind::Basic => Ok(Self::stutter(st)),
            NodeKind::Xor => {
                let Some(child) = self.active_child(pc, &st, node, event)? else {
                    return Ok(Self::stutter(st));
                };
                let enabled = self.enabled(pc, &st, child, event)?;
                if enabled.is_empty() {
                    return self.react(pc, child, st, event);
                }
                let mut out = Vec::new();
                for t in enabled {
                    out.extend(self.fire(pc, &st, t, event)?);
                    if out.len() > MAX_CHOICES {
                        return Err(Stop::Fatal(too_many(event)));
                    }
                }
                Ok(out)
            }
            NodeKind::And => {
                let mut acc = Self::stutter(st);
                for r in self.chart.node(node).children.clone() {
                    if !self.is_relevant(event, r) {
                        continue;
                    }
                    acc = bind(acc, event, &mut |s| {
                        let active = self.in_state(&s, r);
                        if self.decide_or_split(pc, &active)? {
                            self.react(pc, r, s, event)
                        } else {
                            Ok(Self::stutter(s))
                        }
                    })?;
                }
                Ok(acc)
            }
        }
    }

    fn in_state(&self, st: &SymState, node: NodeId) -> FExpr {
        self.layout.in_state(self.chart, node).subst(&|v| st.vals[v].clone())
    }

    fn decide_or_split(&self, pc: &[FExpr], cond: &FExpr) -> Result<bool, Stop> {
        decide(pc, cond, &self.layout.vars).ok_or_else(|| Stop::Split(cond.clone()))
    }

    /// The active child among those relevant to `event`, if any.
    fn active_child(&self, pc: &[FExpr], st: &SymState, node: NodeId, event: &str) -> Result<Option<NodeId>, Stop> {
        let n = self.chart.node(node);
        let Some(var) = self.layout.scope_var.get(&node).filter(|_| n.children.len() >= 2) else {
            return Ok(n.children.first().copied().filter(|c| self.is_relevant(event, *c)));
        };
        for (k, c) in n.children.iter().enumerate() {
            if !self.is_relevant(event, *c) {
                continue;
            }
            let cond = FExpr::eq(st.vals[*var].clone(), FExpr::Const(k as i64)).simplify();
            if self.decide_or_split(pc, &cond)? {
                return Ok(Some(*c));
            }
        }
        Ok(None)
    }

    fn enabled(&self, pc: &[FExpr], st: &SymState, source: NodeId, event: &str) -> Result<Vec<TransitionId>, Stop> {
        let Some(ts) = self.by_source.get(&(source, event.to_string())) else {
            return Ok(Vec::new());
        };
        if st.marked.contains(&source) {
            return Ok(Vec::new());
        }
        let sub = |e: &FExpr| e.subst(&|v| st.vals[v].clone());
        let mut out = Vec::new();
        for t in ts {
            if !self.decide_or_split(pc, &sub(&self.guards[t.0]))? {
                continue;
            }
            if self.decide_or_split(pc, &sub(&self.in_range[t.0]))? {
                out.push(*t);
            }
        }
        Ok(out)
    }

    fn fire(&self, pc: &[FExpr], st: &SymState, id: TransitionId, event: &str) -> Result<Vec<Dist>, Stop> {
        let chart = self.chart;
        let t = chart.transition(id);
        let mut per_alt: Vec<(Rational, Vec<Dist>)> = Vec::new();
        for (j, alt) in t.alternatives.iter().enumerate() {
            let mut s = st.clone();
            let scope = chart.transition_scope(t.source, alt.target);
            let entered = chart.entered_states(scope, alt.target);
            let below: Vec<NodeId> = chart.subtree(scope).into_iter().filter(|n| *n != scope).collect();
            for n in chart.subtree(scope) {
                if let Some(var) = self.layout.scope_var.get(&n) {
                    let node = chart.node(n);
                    if node.kind != NodeKind::Xor || node.children.len() < 2 {
                        continue;
                    }
                    let child = if n == scope || entered.contains(&n) {
                        entered.iter().find(|e| chart.parent(**e) == Some(n)).copied()
                    } else {
                        None
                    };
                    let child = child.or(node.initial).unwrap_or(node.children[0]);
                    s.vals[*var] = FExpr::Const(Layout::child_index(chart, n, child));
                }
            }
            for (state, clock) in &self.layout.clock_var {
                if below.contains(state) {
                    s.vals[*clock] = FExpr::Const(0);
                }
            }
            for (v, rhs) in &self.assigns[id.0][j] {
                for (w, other, ev, written) in &st.writes {
                    if w == v && *other != id && ev == event && written != rhs && self.orthogonal(*other, id) {
                        return Err(Stop::Fatal(Diagnostic::error(format!(
                            "transitions `{}` and `{}` both assign `{}` differently on event `{event}`",
                            self.describe(*other),
                            self.describe(id),
                            self.layout.vars[*v].name
                        ))));
                    }
                }
                s.vals[*v] = rhs.subst(&|x| st.vals[x].clone());
                s.writes.push((*v, id, event.to_string(), rhs.clone()));
            }
            for (k, c) in &alt.costs {
                *s.costs.entry(k.clone()).or_insert_with(Rational::zero) += *c;
            }
            s.marked.extend(below);
            s.marked.insert(t.source);
            s.fired.push(id);
            let mut acc = Self::stutter(s);
            for b in &alt.broadcasts {
                acc = bind(acc, b, &mut |s| self.react(pc, ROOT, s, b))?;
            }
            per_alt.push((alt.weight, acc));
        }
        product(per_alt, event)
    }

    fn orthogonal(&self, a: TransitionId, b: TransitionId) -> bool {
        let (sa, sb) = (self.chart.transition(a).source, self.chart.transition(b).source);
        let anc_b: Vec<NodeId> = std::iter::once(sb).chain(self.chart.ancestors(sb)).collect();
        std::iter::once(sa)
            .chain(self.chart.ancestors(sa))
            .find(|x| anc_b.contains(x))
            .is_some_and(|lca| self.chart.node(lca).kind == NodeKind::And && lca != sa && lca != sb)
    }

    pub fn describe(&self, id: TransitionId) -> String {
        let t = self.chart.transition(id);
        let targets: Vec<String> = t.alternatives.iter().map(|a| self.chart.short_ref(a.target)).collect();
        format!("{} from {} -> {}", t.trigger, self.chart.short_ref(t.source), targets.join("|"))
    }

    /// First atom of `cond` that `pc` leaves undecided.
    fn pick_atom(&self, pc: &[FExpr], cond: &FExpr) -> Option<FExpr> {
        match cond {
            FExpr::Not(inner) => self.pick_atom(pc, inner),
            FExpr::Bin(op, a, b) if op.is_logical() => self.pick_atom(pc, a).or_else(|| self.pick_atom(pc, b)),
            FExpr::Ite(c, t, e) => self.pick_atom(pc, c).or_else(|| self.pick_atom(pc, t)).or_else(|| self.pick_atom(pc, e)),
            atom => decide(pc, atom, &self.layout.vars).is_none().then(|| atom.clone()),
        }
    }

    /// `pc ∧ cand`, or `None` when that is unsatisfiable.
    fn refine(&self, pc: &[FExpr], cand: FExpr) -> Option<Vec<FExpr>> {
        let vars = &self.layout.vars;
        let mut next: Vec<FExpr> = pc.to_vec();
        let cand = cand.simplify();
        if cand.is_false() || decide(pc, &cand, vars) == Some(false) {
            return None;
        }
        // `!(v = k)` that leaves one value becomes `v = r`
        if let FExpr::Not(inner) = &cand {
            if let Some((v, _)) = as_var_eq(inner) {
                let mut left: Vec<i64> = (vars[v].lo..=vars[v].hi).collect();
                for c in next.iter().chain(std::iter::once(&cand)) {
                    if let FExpr::Not(x) = c {
                        if let Some((w, k)) = as_var_eq(x) {
                            if w == v {
                                left.retain(|x| *x != k);
                            }
                        }
                    }
                }
                if let [only] = left.as_slice() {
                    next.retain(|c| !matches!(c, FExpr::Not(x) if as_var_eq(x).is_some_and(|(w, _)| w == v)));
                    next.push(FExpr::var_is(v, *only));
                    return Some(next);
                }
            }
        }
        next.push(cand);
        Some(next)
    }
}

fn too_many(event: &str) -> Diagnostic {
    Diagnostic::error(format!("event `{event}` has more than {MAX_CHOICES} nondeterministic resolutions"))
}

fn as_var_eq(e: &FExpr) -> Option<(usize, i64)> {
    match e {
        FExpr::Bin(BinOp::Eq, a, b) => match (&**a, &**b) {
            (FExpr::Var(v), FExpr::Const(k)) | (FExpr::Const(k), FExpr::Var(v)) => Some((*v, *k)),
            _ => None,
        },
        _ => None,
    }
}

/// Sequential composition of sets of distributions: each outcome of every
/// distribution independently picks one continuation.
fn bind(
    acc: Vec<Dist>,
    event: &str,
    f: &mut dyn FnMut(SymState) -> Result<Vec<Dist>, Stop>,
) -> Result<Vec<Dist>, Stop> {
    let mut out = Vec::new();
    for d in acc {
        let mut opts = Vec::new();
        for (p, s) in d {
            opts.push((p, f(s)?));
        }
        out.extend(product(opts, event)?);
        if out.len() > MAX_CHOICES {
            return Err(Stop::Fatal(too_many(event)));
        }
    }
    Ok(out)
}

/// Every way of picking one distribution per weighted option, mixed by the
/// weights.
fn product(opts: Vec<(Rational, Vec<Dist>)>, event: &str) -> Result<Vec<Dist>, Stop> {
    let mut out: Vec<Dist> = vec![Vec::new()];
    for (p, choices) in opts {
        let mut next = Vec::new();
        for prefix in &out {
            for d in &choices {
                let mut combined = prefix.clone();
                combined.extend(d.iter().map(|(q, s)| (p * q, s.clone())));
                next.push(combined);
            }
        }
        if next.len() > MAX_CHOICES {
            return Err(Stop::Fatal(too_many(event)));
        }
        out = next;
    }
    Ok(out)
}

fn known_values(pc: &[FExpr], vars: &[FlatVar]) -> BTreeMap<usize, i64> {
    let mut out: BTreeMap<usize, i64> =
        vars.iter().enumerate().filter(|(_, v)| v.lo == v.hi).map(|(i, v)| (i, v.lo)).collect();
    for c in pc {
        if let Some((v, k)) = as_var_eq(c) {
            out.insert(v, k);
        }
    }
    out
}

/// Decides `cond` under the path condition: `Some(b)` when it has the same
/// value `b` in every valuation satisfying `pc`, `None` when it varies or the
/// search space is too large.
pub(crate) fn decide(pc: &[FExpr], cond: &FExpr, vars: &[FlatVar]) -> Option<bool> {
    let known = known_values(pc, vars);
    let c = cond.subst(&|v| known.get(&v).map(|k| FExpr::Const(*k)).unwrap_or(FExpr::Var(v)));
    if let FExpr::Const(k) = c {
        return Some(k != 0);
    }
    if pc.contains(&c) {
        return Some(true);
    }
    let negated = FExpr::not(c.clone());
    if pc.contains(&negated) {
        return Some(false);
    }
    let (saw_true, saw_false) = enumerate(pc, &c, vars, &known)?;
    match (saw_true, saw_false) {
        (true, true) => None,
        (false, true) => Some(false),
        _ => Some(true),
    }
}

/// Evaluates `cond` over all valuations of its variables (and of variables
/// linked to them through `pc`) that satisfy `pc`.
fn enumerate(pc: &[FExpr], cond: &FExpr, vars: &[FlatVar], known: &BTreeMap<usize, i64>) -> Option<(bool, bool)> {
    let mut scope: BTreeSet<usize> = cond.var_set();
    let mut related: Vec<&FExpr> = Vec::new();
    let mut changed = true;
    while changed {
        changed = false;
        for c in pc {
            if related.contains(&c) {
                continue;
            }
            let vs = c.var_set();
            if vs.iter().any(|v| scope.contains(v)) {
                related.push(c);
                scope.extend(vs);
                changed = true;
            }
        }
    }
    let free: Vec<usize> = scope.into_iter().filter(|v| !known.contains_key(v)).collect();
    let mut size: u64 = 1;
    for v in &free {
        size = size.checked_mul(vars[*v].domain_size())?;
        if size > DECIDE_BUDGET {
            return None;
        }
    }
    let mut vals: Vec<i64> = vars.iter().map(|v| v.lo).collect();
    for (v, k) in known {
        vals[*v] = *k;
    }
    for v in &free {
        vals[*v] = vars[*v].lo;
    }
    let (mut saw_true, mut saw_false) = (false, false);
    loop {
        if related.iter().all(|c| c.holds(&vals)) {
            if cond.holds(&vals) {
                saw_true = true;
            } else {
                saw_false = true;
            }
            if saw_true && saw_false {
                break;
            }
        }
        // odometer step
        let mut i = 0;
        loop {
            if i == free.len() {
                return Some((saw_true, saw_false));
            }
            let v = free[i];
            if vals[v] < vars[v].hi {
                vals[v] += 1;
                break;
            }
            vals[v] = vars[v].lo;
            i += 1;
        }
    }
    Some((saw_true, saw_false))
}

/// True when `cond` holds for every valuation satisfying `assume`.
fn statically_true(cond: &FExpr, vars: &[FlatVar], assume: &FExpr) -> bool {
    let pc: Vec<FExpr> = assume.conjuncts().into_iter().cloned().collect();
    decide(&pc, cond, vars) == Some(true)
}

/// Turns the distributions of one path into weighted simultaneous updates.
/// Identical updates are merged; the second component is the expected cost
/// per reward name.
pub(crate) fn to_updates(dist: &Dist, nvars: usize) -> (Vec<Update>, BTreeMap<String, Rational>) {
    let mut updates: Vec<Update> = Vec::new();
    let mut costs: BTreeMap<String, Rational> = BTreeMap::new();
    for (p, s) in dist {
        let assignments: Vec<(usize, FExpr)> =
            (0..nvars).filter(|i| s.vals[*i] != FExpr::Var(*i)).map(|i| (i, s.vals[i].clone())).collect();
        match updates.iter_mut().find(|u| u.assignments == assignments) {
            Some(u) => u.prob += *p,
            None => updates.push(Update { prob: *p, assignments }),
        }
        for (k, c) in &s.costs {
            *costs.entry(k.clone()).or_insert_with(Rational::zero) += *p * *c;
        }
    }
    costs.retain(|_, v| !v.is_zero());
    (updates, costs)
}

/// Conjunction of a path condition as a guard.
pub(crate) fn guard_of(pc: &[FExpr]) -> FExpr {
    if pc.is_empty() {
        return TRUE;
    }
    let g = FExpr::conj(pc.iter().cloned());
    if g.is_false() {
        FALSE
    } else {
        g
    }
}
