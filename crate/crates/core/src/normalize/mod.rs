//! Flattening of charts into probabilistic guarded commands.
//!
//! Every configuration is encoded by one selector variable per XOR state with
//! at least two children. For each external event the normalizer
//! enumerates the macro-steps it can trigger (top-level priority, all
//! orthogonal regions reacting, broadcasts processed like procedure calls)
//! and emits one command per case. Events that are only ever broadcast are
//! internal and get no command of their own.

mod broadcast;
mod flat;
mod layout;
mod nested;
mod symbolic;

use std::collections::BTreeSet;

use num_traits::Zero;

use crate::chart::{Attachment, Chart, Query, Trigger, ROOT};
use crate::diag::{has_errors, Diagnostic};
use crate::num::Rational;
use crate::wellformed::check_wellformed;

pub use broadcast::{broadcast_cycles, broadcast_edges, check_broadcast_graph};
pub use flat::{
    render, render_value, ActionItem, ClockSpec, FExpr, FlatSystem, FlatVar, GuardedCommand, RewardStructure, Syntax, Update,
    VarRole, FALSE, TICK, TRUE,
};
pub use layout::{is_reserved, sanitize, Layout, MAX_TICKS};
pub use nested::{nested_codegen_form, NestedForm, Procedure, Stmt};
pub use symbolic::timed_event;

use symbolic::{guard_of, to_updates, Executor};

#[derive(Debug, Clone)]
pub struct Normalized {
    pub system: FlatSystem,
    pub layout: Layout,
    pub warnings: Vec<Diagnostic>,
}

/// Events with a command of their own: every event except those that some
/// transition broadcasts, then timed pseudo-events in transition order.
pub fn external_events(chart: &Chart) -> Vec<String> {
    let internal: BTreeSet<&String> =
        chart.transitions.iter().flat_map(|t| t.alternatives.iter().flat_map(|a| a.broadcasts.iter())).collect();
    let mut out: Vec<String> = chart.all_events().into_iter().filter(|e| !internal.contains(e)).collect();
    for id in chart.transition_ids() {
        if let Trigger::After(_) = chart.transition(id).trigger {
            let key = Executor::trigger_key(chart, id);
            if !out.contains(&key) {
                out.push(key);
            }
        }
    }
    out
}

pub fn normalize(chart: &Chart) -> Result<Normalized, Vec<Diagnostic>> {
    let mut diags = check_wellformed(chart);
    diags.extend(check_broadcast_graph(chart));
    if has_errors(&diags) {
        return Err(diags);
    }
    let layout = Layout::new(chart).map_err(|d| vec![d])?;
    let exec = Executor::new(chart, &layout).map_err(|d| vec![d])?;
    let timed_keys: BTreeSet<String> = chart
        .transition_ids()
        .filter(|id| matches!(chart.transition(*id).trigger, Trigger::After(_)))
        .map(|id| Executor::trigger_key(chart, id))
        .collect();
    let nvars = layout.vars.len();
    let mut commands = Vec::new();
    let reward_names = chart.reward_names();
    let mut action_items: Vec<Vec<ActionItem>> = vec![Vec::new(); reward_names.len()];
    for event in external_events(chart) {
        let leaves = exec.leaves(&event).map_err(|d| vec![d])?;
        for leaf in leaves {
            let fired_any = leaf.choices.iter().any(|d| d.iter().any(|(_, s)| !s.fired.is_empty()));
            if !fired_any {
                continue;
            }
            let guard = guard_of(&leaf.pc);
            let many = leaf.choices.len() > 1;
            for (k, dist) in leaf.choices.iter().enumerate() {
                let (updates, costs) = to_updates(dist, nvars);
                let label = if many { format!("{event}_{}", k + 1) } else { event.clone() };
                let mut transitions = Vec::new();
                for (_, s) in dist {
                    for t in &s.fired {
                        if !transitions.contains(t) {
                            transitions.push(*t);
                        }
                    }
                }
                for (r, name) in reward_names.iter().enumerate() {
                    if let Some(v) = costs.get(name) {
                        action_items[r].push(ActionItem { label: label.clone(), guard: guard.clone(), reward: *v });
                    }
                }
                commands.push(GuardedCommand {
                    label,
                    event: event.clone(),
                    guard: guard.clone(),
                    updates,
                    transitions,
                    timed: timed_keys.contains(&event),
                });
            }
        }
    }
    let rewards = reward_names
        .iter()
        .zip(action_items)
        .map(|(name, action_items)| RewardStructure {
            name: name.clone(),
            state_items: chart
                .subtree(ROOT)
                .into_iter()
                .filter_map(|n| {
                    let rate = chart.node(n).costs.get(name).copied().unwrap_or_else(Rational::zero);
                    (!rate.is_zero()).then(|| (layout.in_state(chart, n), rate))
                })
                .collect(),
            action_items,
        })
        .collect();
    let clocks = layout
        .clock_var
        .iter()
        .map(|(state, clock)| ClockSpec {
            clock: *clock,
            state: *state,
            active: layout.in_state(chart, *state),
            max: layout.vars[*clock].hi,
        })
        .collect();
    let system = FlatSystem {
        name: chart.name.clone(),
        vars: layout.vars.clone(),
        commands,
        rewards,
        clocks,
        time_base: layout.time_base,
    };
    let mut warnings: Vec<Diagnostic> = diags;
    warnings.extend(exec.warnings);
    Ok(Normalized { system, layout, warnings })
}

/// The goal predicate of a query: the attached state's configuration
/// conjoined with the query's own predicate, if any.
pub fn resolve_goal(chart: &Chart, layout: &Layout, q: &Query) -> Result<FExpr, String> {
    let (scope, at) = match q.attachment {
        Attachment::State(s) => (s, layout.in_state(chart, s)),
        Attachment::Floating => (ROOT, TRUE),
    };
    let pred = match &q.predicate {
        Some(p) => layout.lower(chart, scope, p)?,
        None if q.attachment == Attachment::Floating => return Err("floating query without a goal predicate".into()),
        None => TRUE,
    };
    Ok(FExpr::and(at, pred).simplify())
}

/// The global invariant lowered to flat variables.
pub fn lowered_invariant(chart: &Chart, layout: &Layout) -> Result<FExpr, String> {
    let mut parts = Vec::new();
    for id in chart.node_ids() {
        if let Some(inv) = &chart.node(id).invariant {
            let body = layout.lower(chart, id, inv)?;
            parts.push(if chart.always_active(id) {
                body
            } else {
                FExpr::bin(crate::expr::BinOp::Implies, layout.in_state(chart, id), body)
            });
        }
    }
    Ok(FExpr::conj(parts))
}
