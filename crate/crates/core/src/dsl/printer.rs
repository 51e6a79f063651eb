use std::fmt::Write;

use crate::chart::{Alternative, Attachment, Chart, Domain, NodeId, NodeKind, Objective, Query, QueryKind, Trigger, ROOT};
use crate::num::format_rational;

const INDENT: &str = "    ";

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Canonical formula text, e.g. `?$energy.min (countB = 10)`.
pub fn format_query(q: &Query) -> String {
    let mut s = String::from("?");
    match &q.kind {
        QueryKind::Prob => s.push('P'),
        QueryKind::Reward(r) => {
            s.push('$');
            s.push_str(r);
        }
    }
    match &q.objective {
        Objective::Min => s.push_str(".min"),
        Objective::Max => s.push_str(".max"),
        Objective::Threshold(rel, bound) => {
            s.push_str(rel.symbol());
            s.push_str(&format_rational(bound));
        }
    }
    if let Some(t) = &q.time_bound {
        let _ = write!(s, " F<{t}");
    }
    if let Some(p) = &q.predicate {
        let _ = write!(s, " ({p})");
    }
    s
}

/// Prints the chart in the canonical DSL form accepted by the parser.
pub fn pretty_print(chart: &Chart) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "chart {} {{", chart.name);
    for c in &chart.comments {
        let _ = writeln!(out, "{INDENT}note {};", quote(c));
    }
    if !chart.events.is_empty() {
        let _ = writeln!(out, "{INDENT}event {};", chart.events.join(", "));
    }
    body(chart, ROOT, 1, &mut out);
    for t in &chart.transitions {
        let _ = write!(out, "{INDENT}on ");
        match &t.trigger {
            Trigger::Event(e) => out.push_str(e),
            Trigger::After(d) => {
                let _ = write!(out, "after {d}");
            }
        }
        let _ = write!(out, " from {}", chart.short_ref(t.source));
        if !t.guard.is_true() {
            let _ = write!(out, " when {}", t.guard);
        }
        out.push_str(" -> ");
        if let [single] = t.alternatives.as_slice() {
            alternative(chart, single, &mut out);
            for c in &t.comments {
                let _ = write!(out, " note {}", quote(c));
            }
            out.push_str(";\n");
        } else {
            out.push_str("prob {\n");
            for a in &t.alternatives {
                let _ = write!(out, "{INDENT}{INDENT}{}: ", format_rational(&a.weight));
                alternative(chart, a, &mut out);
                out.push_str(";\n");
            }
            let _ = write!(out, "{INDENT}}}");
            for c in &t.comments {
                let _ = write!(out, " note {}", quote(c));
            }
            out.push_str(";\n");
        }
    }
    for q in &chart.queries {
        if q.attachment == Attachment::Floating {
            let _ = writeln!(out, "{INDENT}formula {};", quote(&format_query(q)));
        }
    }
    out.push_str("}\n");
    out
}

fn alternative(chart: &Chart, a: &Alternative, out: &mut String) {
    out.push_str(&chart.short_ref(a.target));
    if !a.broadcasts.is_empty() {
        let _ = write!(out, " / {}", a.broadcasts.join(", "));
    }
    if !a.assignments.is_empty() {
        let parts: Vec<String> = a.assignments.iter().map(|(v, e)| format!("{v} := {e}")).collect();
        let _ = write!(out, " do {}", parts.join(", "));
    }
    if !a.costs.is_empty() {
        let parts: Vec<String> = a.costs.iter().map(|(k, v)| format!("{k} = {}", format_rational(v))).collect();
        let _ = write!(out, " cost {}", parts.join(", "));
    }
}

fn body(chart: &Chart, id: NodeId, depth: usize, out: &mut String) {
    let pad = INDENT.repeat(depth);
    let node = chart.node(id);
    if id != ROOT {
        for c in &node.comments {
            let _ = writeln!(out, "{pad}note {};", quote(c));
        }
    }
    for v in chart.variables.iter().filter(|v| v.scope == id) {
        let (ty, init) = match v.domain {
            Domain::Bool => ("bool".to_string(), if v.initial != 0 { "true".to_string() } else { "false".to_string() }),
            Domain::Int { lo, hi } => (format!("int[{lo}..{hi}]"), v.initial.to_string()),
        };
        let _ = writeln!(out, "{pad}var {}: {ty} = {init};", v.name);
    }
    if let Some(inv) = &node.invariant {
        let _ = writeln!(out, "{pad}inv {inv};");
    }
    for (k, v) in &node.costs {
        let _ = writeln!(out, "{pad}cost {k} = {};", format_rational(v));
    }
    for q in &node.queries {
        let _ = writeln!(out, "{pad}query {};", quote(&format_query(&chart.queries[q.0])));
    }
    for ch in &node.children {
        let c = chart.node(*ch);
        let kw = match c.kind {
            NodeKind::Basic => "state",
            NodeKind::Xor => "xor",
            NodeKind::And => "and",
        };
        let init = if node.kind == NodeKind::Xor && node.initial == Some(*ch) { " init" } else { "" };
        let empty = c.children.is_empty()
            && c.comments.is_empty()
            && c.invariant.is_none()
            && c.costs.is_empty()
            && c.queries.is_empty()
            && !chart.variables.iter().any(|v| v.scope == *ch);
        if empty {
            let _ = writeln!(out, "{pad}{kw} {}{init};", c.name);
        } else {
            let _ = writeln!(out, "{pad}{kw} {}{init} {{", c.name);
            body(chart, *ch, depth + 1, out);
            let _ = writeln!(out, "{pad}}}");
        }
    }
}
