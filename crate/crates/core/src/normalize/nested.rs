//! Nested conditional form of non-probabilistic charts: one procedure per
//! event that tests the outer selector first, then the inner ones.
//! Nondeterminism is resolved by textual order of the transitions.

use std::collections::BTreeSet;

use crate::chart::{Chart, NodeId, NodeKind, TransitionId, Trigger, ROOT};
use crate::diag::{has_errors, Diagnostic};
use crate::wellformed::check_wellformed;

use super::broadcast::check_broadcast_graph;
use super::flat::{FExpr, TRUE};
use super::layout::{sanitize, Layout};
use super::symbolic::Executor;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Stmt {
    If {
        cond: FExpr,
        /// The branch is also skipped when this state already moved.
        unless_moved: Option<NodeId>,
        then: Vec<Stmt>,
        els: Vec<Stmt>,
    },
    /// Simultaneous assignment.
    Assign(Vec<(usize, FExpr)>),
    Mark(Vec<NodeId>),
    /// Runs the reaction to a broadcast event.
    Call(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Procedure {
    pub name: String,
    pub event: String,
    /// Transitions whose trigger is this procedure's event.
    pub transitions: Vec<TransitionId>,
    /// Only called from other procedures.
    pub internal: bool,
    pub body: Vec<Stmt>,
}

#[derive(Debug, Clone)]
pub struct NestedForm {
    pub layout: Layout,
    pub procedures: Vec<Procedure>,
    /// Movement tracking is needed only when broadcasts exist.
    pub uses_marks: bool,
}

pub fn nested_codegen_form(chart: &Chart) -> Result<NestedForm, Vec<Diagnostic>> {
    let mut diags = check_wellformed(chart);
    diags.extend(check_broadcast_graph(chart));
    for id in chart.transition_ids() {
        if chart.transition(id).is_probabilistic() {
            diags.push(
                Diagnostic::error("probabilistic transitions cannot be compiled to code")
                    .at(chart.source.transitions.get(&id).copied())
                    .with_hint("analyse probabilistic charts with `pchart verify` instead"),
            );
        }
    }
    if has_errors(&diags) {
        return Err(diags);
    }
    let layout = Layout::new(chart).map_err(|d| vec![d])?;
    let exec = Executor::new(chart, &layout).map_err(|d| vec![d])?;
    let uses_marks = chart.transitions.iter().any(|t| t.alternatives.iter().any(|a| !a.broadcasts.is_empty()));
    let internal: BTreeSet<String> =
        chart.transitions.iter().flat_map(|t| t.alternatives.iter().flat_map(|a| a.broadcasts.clone())).collect();
    let mut events: Vec<String> = chart.all_events();
    for id in chart.transition_ids() {
        if matches!(chart.transition(id).trigger, Trigger::After(_)) {
            let k = Executor::trigger_key(chart, id);
            if !events.contains(&k) {
                events.push(k);
            }
        }
    }
    let builder = Builder { chart, layout: &layout, exec: &exec, uses_marks };
    let procedures = events
        .into_iter()
        .map(|e| Procedure {
            name: sanitize(&e),
            transitions: chart.transition_ids().filter(|id| Executor::trigger_key(chart, *id) == e).collect(),
            internal: internal.contains(&e),
            body: builder.react(ROOT, &e),
            event: e,
        })
        .collect();
    Ok(NestedForm { layout, procedures, uses_marks })
}

struct Builder<'a> {
    chart: &'a Chart,
    layout: &'a Layout,
    exec: &'a Executor<'a>,
    uses_marks: bool,
}

impl Builder<'_> {
    fn relevant(&self, event: &str, node: NodeId) -> bool {
        self.exec.relevant.get(event).is_some_and(|s| s.contains(&node))
    }

    fn react(&self, node: NodeId, event: &str) -> Vec<Stmt> {
        if !self.relevant(event, node) {
            return Vec::new();
        }
        let n = self.chart.node(node);
        match n.kind {
            NodeKind::Basic => Vec::new(),
            NodeKind::Xor => {
                let branches: Vec<(NodeId, Vec<Stmt>)> = n
                    .children
                    .iter()
                    .filter(|c| self.relevant(event, **c))
                    .map(|c| (*c, self.at_child(*c, event)))
                    .collect();
                let var = self.layout.scope_var.get(&node).filter(|_| n.children.len() >= 2);
                let Some(var) = var else {
                    return branches.into_iter().flat_map(|(_, b)| b).collect();
                };
                let mut chain: Vec<Stmt> = Vec::new();
                for (c, body) in branches.into_iter().rev() {
                    let cond = FExpr::var_is(*var, Layout::child_index(self.chart, node, c));
                    chain = vec![Stmt::If { cond, unless_moved: None, then: body, els: chain }];
                }
                chain
            }
            NodeKind::And => {
                let mut out = Vec::new();
                let check = self.regions_can_deactivate(node);
                for (i, r) in n.children.iter().enumerate() {
                    let body = self.react(*r, event);
                    if body.is_empty() {
                        continue;
                    }
                    if i > 0 && check {
                        let cond = self.layout.in_state(self.chart, *r);
                        out.push(Stmt::If { cond, unless_moved: None, then: body, els: Vec::new() });
                    } else {
                        out.extend(body);
                    }
                }
                out
            }
        }
    }

    /// Whether a region may become inactive while its AND state reacts.
    fn regions_can_deactivate(&self, and: NodeId) -> bool {
        self.uses_marks
            || self.chart.transitions.iter().any(|t| {
                self.chart.contains(and, t.source)
                    && t.alternatives.iter().any(|a| !self.chart.contains(and, self.chart.transition_scope(t.source, a.target)))
            })
    }

    /// Transitions leaving `child` first, in textual order, else its inside.
    fn at_child(&self, child: NodeId, event: &str) -> Vec<Stmt> {
        let inner = self.react(child, event);
        let Some(ts) = self.exec.by_source.get(&(child, event.to_string())) else {
            return inner;
        };
        let mut chain = inner;
        for t in ts.iter().rev() {
            let tr = self.chart.transition(*t);
            let guard = self.layout.lower(self.chart, tr.source, &tr.guard).unwrap_or(TRUE);
            let cond = FExpr::and(guard, self.exec.in_range[t.0].clone()).simplify();
            if cond.is_true() && !self.uses_marks {
                // always enabled: later alternatives are unreachable
                chain = self.fire(*t);
                continue;
            }
            chain = vec![Stmt::If {
                cond,
                unless_moved: self.uses_marks.then_some(child),
                then: self.fire(*t),
                els: chain,
            }];
        }
        chain
    }

    fn fire(&self, id: TransitionId) -> Vec<Stmt> {
        let chart = self.chart;
        let t = chart.transition(id);
        let alt = &t.alternatives[0];
        let scope = chart.transition_scope(t.source, alt.target);
        let entered = chart.entered_states(scope, alt.target);
        let mut assigns: Vec<(usize, FExpr)> = Vec::new();
        for n in chart.subtree(scope) {
            let node = chart.node(n);
            let Some(var) = self.layout.scope_var.get(&n) else { continue };
            if node.children.len() < 2 {
                continue;
            }
            let child = if n == scope || entered.contains(&n) {
                entered.iter().find(|e| chart.parent(**e) == Some(n)).copied()
            } else {
                None
            };
            let child = child.or(node.initial).unwrap_or(node.children[0]);
            assigns.push((*var, FExpr::Const(Layout::child_index(chart, n, child))));
        }
        assigns.extend(self.exec.assigns[id.0][0].iter().cloned());
        let mut out = vec![Stmt::Assign(assigns)];
        if self.uses_marks {
            let mut moved: Vec<NodeId> = chart.subtree(scope).into_iter().filter(|n| *n != scope).collect();
            if !moved.contains(&t.source) {
                moved.push(t.source);
            }
            out.push(Stmt::Mark(moved));
        }
        out.extend(alt.broadcasts.iter().map(|b| Stmt::Call(b.clone())));
        out
    }
}

impl NestedForm {
    pub fn procedure(&self, event: &str) -> Option<&Procedure> {
        self.procedures.iter().find(|p| p.event == event)
    }

    /// Runs the procedure for an external `event` on `vals`.
    pub fn exec(&self, event: &str, vals: &mut [i64]) {
        let mut moved = BTreeSet::new();
        self.call(event, vals, &mut moved);
    }

    fn call(&self, event: &str, vals: &mut [i64], moved: &mut BTreeSet<NodeId>) {
        if let Some(p) = self.procedure(event) {
            self.run(&p.body, vals, moved);
        }
    }

    fn run(&self, stmts: &[Stmt], vals: &mut [i64], moved: &mut BTreeSet<NodeId>) {
        for s in stmts {
            match s {
                Stmt::If { cond, unless_moved, then, els } => {
                    let blocked = unless_moved.is_some_and(|n| moved.contains(&n));
                    if !blocked && cond.holds(vals) {
                        self.run(then, vals, moved);
                    } else {
                        self.run(els, vals, moved);
                    }
                }
                Stmt::Assign(list) => {
                    let new: Vec<(usize, i64)> =
                        list.iter().map(|(v, e)| (*v, e.eval(vals).expect("guarded assignment"))).collect();
                    for (v, x) in new {
                        vals[v] = x;
                    }
                }
                Stmt::Mark(nodes) => moved.extend(nodes.iter().copied()),
                Stmt::Call(e) => self.call(e, vals, moved),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_chart;

    #[test]
    fn onoff_is_a_single_conditional() {
        let c = parse_chart("chart L { state Off; state On; on poweron from Off -> On; }").chart.unwrap();
        let f = nested_codegen_form(&c).unwrap();
        let p = f.procedure("poweron").unwrap();
        assert_eq!(
            p.body,
            vec![Stmt::If {
                cond: FExpr::var_is(0, 0),
                unless_moved: None,
                then: vec![Stmt::Assign(vec![(0, FExpr::Const(1))])],
                els: vec![],
            }]
        );
        let mut vals = vec![0];
        f.exec("poweron", &mut vals);
        assert_eq!(vals, vec![1]);
    }

    #[test]
    fn probabilistic_charts_are_rejected() {
        let c = parse_chart("chart P { state A; state B; on e from A -> prob { 0.5: A; 0.5: B; }; }").chart.unwrap();
        let err = nested_codegen_form(&c).unwrap_err();
        assert!(err[0].message.contains("probabilistic"));
    }
}
