//! C99 code generation for non-probabilistic charts.
//!
//! States become enumeration variables and events become procedures built
//! from the nested conditional form. Comments from the chart are copied to
//! where the state is declared or before the procedure of the transition's
//! event. Timed transitions become procedures named `<State>_after_<delay>`
//! that the environment calls when the delay has elapsed; no timer runtime
//! is generated.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::chart::{Chart, NodeId};
use crate::diag::Diagnostic;
use crate::normalize::{
    is_reserved, lowered_invariant, nested_codegen_form, render, render_value, sanitize, FExpr, FlatVar, NestedForm, Stmt, Syntax,
    VarRole,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CodegenOptions {
    /// Emit `int main(void)` that calls `init()`.
    pub main: bool,
    /// Assert the chart invariant after every external event.
    pub assertions: bool,
}

impl Default for CodegenOptions {
    fn default() -> Self {
        CodegenOptions { main: true, assertions: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedCode {
    pub source: String,
    /// Prototypes of `init` and the external event procedures.
    pub header: String,
    /// External events and the C procedure each one maps to.
    pub entry_points: Vec<(String, String)>,
    pub warnings: Vec<Diagnostic>,
}

pub fn generate_code(chart: &Chart, options: CodegenOptions) -> Result<GeneratedCode, Vec<Diagnostic>> {
    let form = nested_codegen_form(chart)?;
    let invariant = if options.assertions {
        Some(lowered_invariant(chart, &form.layout).map_err(|e| vec![Diagnostic::error(e)])?)
    } else {
        None
    };
    Ok(Emitter::new(chart, &form).emit(options, invariant.as_ref()))
}

struct Emitter<'a> {
    chart: &'a Chart,
    form: &'a NestedForm,
    /// Variables visible in C; clocks are left to the environment.
    vars: Vec<FlatVar>,
    proc_names: BTreeMap<String, String>,
    /// Nodes whose movement is tested, with their slot in `moved`.
    slots: BTreeMap<NodeId, usize>,
    warnings: Vec<Diagnostic>,
}

impl<'a> Emitter<'a> {
    fn new(chart: &'a Chart, form: &'a NestedForm) -> Self {
        let vars = form.layout.vars.clone();
        let mut used: BTreeSet<String> = ["init", "main", "moved", "clear_moved"].iter().map(|s| s.to_string()).collect();
        for v in &vars {
            used.insert(v.name.clone());
            used.insert(format!("{}_status", v.name));
            used.extend(v.values.iter().cloned());
        }
        let mut warnings = Vec::new();
        let mut proc_names = BTreeMap::new();
        for p in &form.procedures {
            let base = sanitize(&p.event);
            let mut name = base.clone();
            let mut k = 2;
            while used.contains(&name) || used.contains(&format!("{name}_react")) || is_reserved(&name) {
                name = format!("{base}_{k}");
                k += 1;
            }
            if name != base {
                warnings.push(Diagnostic::warning(format!(
                    "procedure for event `{}` is named `{name}` to avoid a clash",
                    p.event
                )));
            }
            used.insert(name.clone());
            used.insert(format!("{name}_react"));
            proc_names.insert(p.event.clone(), name);
        }
        let mut slots = BTreeMap::new();
        for p in &form.procedures {
            collect_tested(&p.body, &mut slots);
        }
        Emitter { chart, form, vars, proc_names, slots, warnings }
    }

    fn is_clock(&self, v: usize) -> bool {
        matches!(self.vars[v].role, VarRole::Clock(_))
    }

    fn emit(mut self, options: CodegenOptions, invariant: Option<&FExpr>) -> GeneratedCode {
        let mut out = String::new();
        for c in &self.chart.comments {
            comment_lines(&mut out, "", c);
        }
        if !self.chart.comments.is_empty() {
            out.push('\n');
        }
        if invariant.is_some() {
            out.push_str("#include <assert.h>\n\n");
        }
        out.push_str("/* Variables */\n");
        let mut commented: BTreeSet<NodeId> = BTreeSet::new();
        for (i, v) in self.vars.iter().enumerate() {
            if self.is_clock(i) {
                continue;
            }
            match v.role {
                VarRole::Scope(node) => {
                    let _ = writeln!(out, "enum {}_status {{{}}} {};", v.name, v.values.join(", "), v.name);
                    for (child, value) in self.chart.node(node).children.iter().zip(&v.values) {
                        for c in &self.chart.node(*child).comments {
                            comment_lines(&mut out, &format!("{value} - "), c);
                        }
                        commented.insert(*child);
                    }
                }
                _ => {
                    let _ = writeln!(out, "int {};", v.name);
                }
            }
        }
        // comments of states without an enumeration value of their own
        for id in self.chart.node_ids().skip(1) {
            if commented.contains(&id) {
                continue;
            }
            for c in &self.chart.node(id).comments {
                comment_lines(&mut out, &format!("{} - ", self.chart.name(id)), c);
            }
        }
        if self.form.uses_marks {
            let _ = writeln!(out, "static unsigned char moved[{}];", self.slots.len().max(1));
        }
        out.push('\n');
        out.push_str("void init(void){\n    /* Initialization */\n");
        for (i, v) in self.vars.iter().enumerate() {
            if self.is_clock(i) {
                continue;
            }
            let init = render_value(i, &FExpr::Const(v.initial), &self.vars, Syntax::C);
            let _ = writeln!(out, "    {} = {};", v.name, init);
        }
        out.push_str("}\n");
        if options.main {
            out.push_str("\nint main(void){\n    init();\n\n    return 0;\n}\n");
        }
        let marks = self.form.uses_marks;
        if marks {
            out.push_str("\nstatic void clear_moved(void){\n");
            let _ = writeln!(out, "    for (int i = 0; i < {}; i++) {{\n        moved[i] = 0;\n    }}\n}}", self.slots.len().max(1));
            out.push('\n');
            for p in &self.form.procedures {
                let _ = writeln!(out, "static void {}_react(void);", self.proc_names[&p.event]);
            }
        }
        let mut entry_points = Vec::new();
        let mut header = format!("/* Entry points of chart {} */\nvoid init(void);\n", self.chart.name);
        for p in &self.form.procedures {
            let name = self.proc_names[&p.event].clone();
            out.push('\n');
            for t in &p.transitions {
                for c in &self.chart.transition(*t).comments {
                    comment_lines(&mut out, "", c);
                }
            }
            let mut body = String::new();
            self.block(&p.body, 1, &mut body);
            if marks {
                let _ = writeln!(out, "static void {name}_react(void){{");
                out.push_str(&body);
                out.push_str("}\n");
            }
            if p.internal {
                continue;
            }
            if marks {
                let _ = writeln!(out, "\nvoid {name}(void){{\n    clear_moved();\n    {name}_react();");
            } else {
                let _ = writeln!(out, "void {name}(void){{");
                out.push_str(&body);
            }
            if let Some(inv) = invariant {
                let _ = writeln!(out, "    assert({});", render(inv, &self.vars, Syntax::C));
            }
            out.push_str("}\n");
            let _ = writeln!(header, "void {name}(void);");
            entry_points.push((p.event.clone(), name));
        }
        GeneratedCode { source: out, header, entry_points, warnings: std::mem::take(&mut self.warnings) }
    }

    fn cond(&self, e: &FExpr) -> String {
        let text = render(e, &self.vars, Syntax::C);
        let compound = matches!(e, FExpr::Bin(op, ..) if op.is_logical()) || text.starts_with('!');
        if compound {
            text
        } else {
            format!("({text})")
        }
    }

    fn block(&self, stmts: &[Stmt], depth: usize, out: &mut String) {
        let pad = "    ".repeat(depth);
        for s in stmts {
            match s {
                Stmt::If { .. } => {
                    out.push_str(&pad);
                    self.if_chain(s, depth, out);
                    out.push('\n');
                }
                Stmt::Assign(list) => self.assign(list, &pad, out),
                Stmt::Mark(nodes) => {
                    for n in nodes {
                        if let Some(k) = self.slots.get(n) {
                            let _ = writeln!(out, "{pad}moved[{k}] = 1;");
                        }
                    }
                }
                Stmt::Call(e) => {
                    let _ = writeln!(out, "{pad}{}_react();", self.proc_names[e]);
                }
            }
        }
    }

    fn if_chain(&self, s: &Stmt, depth: usize, out: &mut String) {
        let Stmt::If { cond, unless_moved, then, els } = s else { unreachable!() };
        let pad = "    ".repeat(depth);
        let mut c = self.cond(cond);
        if let Some(n) = unless_moved {
            c = format!("!moved[{}] && {c}", self.slots[n]);
        }
        let _ = writeln!(out, "if ({c}) {{");
        self.block(then, depth + 1, out);
        out.push_str(&pad);
        out.push('}');
        match els.as_slice() {
            [] => {}
            [nested @ Stmt::If { .. }] => {
                out.push_str(" else ");
                self.if_chain(nested, depth, out);
            }
            _ => {
                out.push_str(" else {\n");
                self.block(els, depth + 1, out);
                out.push_str(&pad);
                out.push('}');
            }
        }
    }

    /// Simultaneous assignment; temporaries only when a right-hand side
    /// reads a variable assigned in the same statement.
    fn assign(&self, list: &[(usize, FExpr)], pad: &str, out: &mut String) {
        let targets: BTreeSet<usize> = list.iter().map(|(v, _)| *v).collect();
        let list: Vec<&(usize, FExpr)> = list.iter().filter(|(v, _)| !self.is_clock(*v)).collect();
        let clash = list.len() > 1 && list.iter().any(|(_, e)| !e.var_set().is_disjoint(&targets));
        if !clash {
            for (v, e) in list {
                let _ = writeln!(out, "{pad}{} = {};", self.vars[*v].name, render_value(*v, e, &self.vars, Syntax::C));
            }
            return;
        }
        let _ = writeln!(out, "{pad}{{");
        for (k, (v, e)) in list.iter().enumerate() {
            let _ = writeln!(out, "{pad}    int t{k} = {};", render_value(*v, e, &self.vars, Syntax::C));
        }
        for (k, (v, _)) in list.iter().enumerate() {
            let _ = writeln!(out, "{pad}    {} = t{k};", self.vars[*v].name);
        }
        let _ = writeln!(out, "{pad}}}");
    }
}

fn collect_tested(stmts: &[Stmt], slots: &mut BTreeMap<NodeId, usize>) {
    for s in stmts {
        if let Stmt::If { unless_moved, then, els, .. } = s {
            if let Some(n) = unless_moved {
                let k = slots.len();
                slots.entry(*n).or_insert(k);
            }
            collect_tested(then, slots);
            collect_tested(els, slots);
        }
    }
}

fn comment_lines(out: &mut String, prefix: &str, text: &str) {
    for (i, line) in text.lines().enumerate() {
        let lead = if i == 0 { prefix } else { "" };
        let _ = writeln!(out, "// {lead}{line}");
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_chart;

    #[test]
    fn onoff_matches_the_documented_shape() {
        let src = include_str!("../models/onoff.pchart");
        let chart = parse_chart(src).chart.unwrap();
        let code = generate_code(&chart, CodegenOptions::default()).unwrap();
        assert_eq!(code.source, include_str!("../tests/golden/onoff.c"));
        assert_eq!(code.entry_points, vec![("poweron".to_string(), "poweron".to_string())]);
    }

    #[test]
    fn chart_without_events_has_variables_and_init_only() {
        let chart = parse_chart("chart Q { state Idle; state Busy; }").chart.unwrap();
        let code = generate_code(&chart, CodegenOptions { main: false, assertions: false }).unwrap();
        assert_eq!(
            code.source,
            "/* Variables */\nenum root_status {Idle, Busy} root;\n\nvoid init(void){\n    /* Initialization */\n    root = Idle;\n}\n"
        );
        assert!(code.entry_points.is_empty());
    }

    #[test]
    fn simultaneous_swap_uses_temporaries() {
        let src = "chart S { var x: int[0..3] = 1; var y: int[0..3] = 2; state Idle; on swap from Idle -> Idle do x := y, y := x; }";
        let chart = parse_chart(src).chart.unwrap();
        let code = generate_code(&chart, CodegenOptions::default()).unwrap();
        assert!(code.source.contains("int t0 = y;"), "{}", code.source);
        assert!(code.source.contains("y = t1;"), "{}", code.source);
    }

    #[test]
    fn event_named_like_a_state_is_renamed_with_warning() {
        let src = "chart K { state Off; state On; on On from Off -> On; }";
        let chart = parse_chart(src).chart.unwrap();
        let code = generate_code(&chart, CodegenOptions::default()).unwrap();
        assert_eq!(code.entry_points, vec![("On".to_string(), "On_2".to_string())]);
        assert_eq!(code.warnings.len(), 1);
    }
}
