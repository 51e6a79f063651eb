//! PRISM model and property files.
//!
//! The model is a single `mdp` module. Selector values are `const int`
//! names so properties read `(receiver=Off)`. Booleans are exported as
//! `[0..1]` integers because the flat system encodes them that way.

mod reader;

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::chart::{Chart, Objective, Query, QueryKind};
use crate::diag::Diagnostic;
use crate::normalize::{lowered_invariant, render, resolve_goal, sanitize, FExpr, FlatSystem, Normalized, Syntax};
use crate::num::format_rational;

pub use reader::read_model;

/// Header comment carrying the tick length, read back by [`read_model`].
const TICK_COMMENT: &str = "// one tick = 1";

pub fn export_model(system: &FlatSystem) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "// {}", system.name);
    if let Some(base) = system.time_base {
        let _ = writeln!(out, "{TICK_COMMENT}{}", base.suffix());
    }
    let _ = writeln!(out, "mdp");
    let consts: Vec<(String, usize)> = system
        .vars
        .iter()
        .filter(|v| v.is_scope())
        .flat_map(|v| v.values.iter().enumerate().map(|(i, n)| (n.clone(), i)))
        .collect();
    if !consts.is_empty() {
        out.push('\n');
        for (name, i) in &consts {
            let _ = writeln!(out, "const int {name} = {i};");
        }
    }
    let taken: BTreeSet<&str> =
        system.vars.iter().map(|v| v.name.as_str()).chain(consts.iter().map(|(n, _)| n.as_str())).collect();
    let mut module = sanitize(&system.name);
    while taken.contains(module.as_str()) || crate::normalize::is_reserved(&module) {
        module.push_str("_module");
    }
    let _ = writeln!(out, "\nmodule {module}");
    for v in &system.vars {
        let init = match v.values.get(v.initial as usize).filter(|_| v.is_scope()) {
            Some(n) => n.clone(),
            None => v.initial.to_string(),
        };
        let _ = writeln!(out, "    {} : [{}..{}] init {};", v.name, v.lo, v.hi, init);
    }
    if !system.commands.is_empty() {
        out.push('\n');
    }
    for c in &system.commands {
        let _ = writeln!(out, "    {}", system.command_line(c));
    }
    let _ = writeln!(out, "endmodule");
    for r in &system.rewards {
        let _ = writeln!(out, "\nrewards \"{}\"", r.name);
        for (g, x) in &r.state_items {
            let _ = writeln!(out, "    {} : {};", render(g, &system.vars, Syntax::Prism), format_rational(x));
        }
        for a in &r.action_items {
            let _ = writeln!(out, "    [{}] {} : {};", a.label, render(&a.guard, &system.vars, Syntax::Prism), format_rational(&a.reward));
        }
        let _ = writeln!(out, "endrewards");
    }
    out
}

fn path_formula(goal: &FExpr, system: &FlatSystem, bound: Option<u64>) -> String {
    let b = bound.map(|t| format!("<{t}")).unwrap_or_default();
    format!("[ F{b} ({}) ]", render(goal, &system.vars, Syntax::Prism))
}

/// One PRISM property for a chart query with its goal already resolved.
pub fn query_property(q: &Query, goal: &FExpr, system: &FlatSystem) -> Result<String, String> {
    let bound = match &q.time_bound {
        None => None,
        Some(d) => {
            let base = system.time_base.ok_or("model has no time base")?;
            Some(d.ticks(base).ok_or_else(|| format!("time bound {d} is not a whole number of {base} ticks"))?)
        }
    };
    let op = match &q.kind {
        QueryKind::Prob => "P".to_string(),
        QueryKind::Reward(r) => format!("R{{\"{r}\"}}"),
    };
    let obj = match &q.objective {
        Objective::Min => "min=?".to_string(),
        Objective::Max => "max=?".to_string(),
        Objective::Threshold(rel, r) => format!("{}{}", rel.symbol(), format_rational(r)),
    };
    Ok(format!("{op}{obj} {}", path_formula(goal, system, bound)))
}

/// The invariant (if any) followed by every query in chart order.
pub fn export_properties(chart: &Chart, normalized: &Normalized) -> Result<String, Diagnostic> {
    let system = &normalized.system;
    let mut out = String::new();
    if chart.node_ids().any(|n| chart.node(n).invariant.is_some()) {
        let inv = lowered_invariant(chart, &normalized.layout).map_err(Diagnostic::error)?;
        let _ = writeln!(out, "P>=1 [ G ({}) ]", render(&inv, &system.vars, Syntax::Prism));
    }
    for q in &chart.queries {
        let goal = resolve_goal(chart, &normalized.layout, q).map_err(Diagnostic::error)?;
        let line = query_property(q, &goal, system).map_err(Diagnostic::error)?;
        let _ = writeln!(out, "{line}");
    }
    Ok(out)
}
