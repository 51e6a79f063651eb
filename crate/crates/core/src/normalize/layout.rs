//! Flat variable layout: one selector per XOR state with several children,
//! one variable per declared chart variable, one clock per timed source.

use std::collections::{BTreeMap, BTreeSet};

use crate::chart::{Chart, Domain, NodeId, NodeKind, Trigger, ROOT};
use crate::diag::Diagnostic;
use crate::expr::{Expr, UnOp};
use crate::num::{common_base, Duration, TimeUnit};

use super::flat::{FExpr, FlatVar, VarRole};

/// Largest tick count a single delay may need.
pub const MAX_TICKS: u64 = 1_000_000;

/// Identifiers reserved by PRISM or by the generated C code.
const RESERVED: &[&str] = &[
    "A", "bool", "clock", "const", "ctmc", "C", "double", "dtmc", "E", "endinit", "endinvariant", "endmodule",
    "endrewards", "endsystem", "false", "formula", "filter", "func", "F", "global", "G", "init", "invariant", "I",
    "int", "label", "max", "min", "mdp", "module", "X", "nondeterministic", "Pmax", "Pmin", "P", "probabilistic",
    "prob", "pta", "rate", "rewards", "Rmax", "Rmin", "R", "S", "stochastic", "system", "true", "U", "W", "auto",
    "break", "case", "char", "continue", "default", "do", "else", "enum", "extern", "float", "for", "goto", "if",
    "long", "register", "return", "short", "signed", "sizeof", "static", "struct", "switch", "typedef", "union",
    "unsigned", "void", "volatile", "while", "inline", "restrict", "main", "moved", "tick", "assert",
];

pub fn is_reserved(name: &str) -> bool {
    RESERVED.contains(&name)
}

/// Replaces characters that are not legal in identifiers.
pub fn sanitize(name: &str) -> String {
    let mut s: String = name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' }).collect();
    if s.is_empty() || s.starts_with(|c: char| c.is_ascii_digit()) {
        s.insert(0, '_');
    }
    s
}

fn fresh(base: &str, used: &BTreeSet<String>) -> String {
    if !used.contains(base) && !is_reserved(base) {
        return base.to_string();
    }
    (2..).map(|k| format!("{base}_{k}")).find(|c| !used.contains(c) && !is_reserved(c)).unwrap()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub vars: Vec<FlatVar>,
    pub scope_var: BTreeMap<NodeId, usize>,
    /// Flat index per chart variable.
    pub data_var: Vec<usize>,
    pub clock_var: BTreeMap<NodeId, usize>,
    pub time_base: Option<TimeUnit>,
}

impl Layout {
    pub fn new(chart: &Chart) -> Result<Layout, Diagnostic> {
        let mut vars = Vec::new();
        let mut used: BTreeSet<String> = BTreeSet::new();
        let mut scope_var = BTreeMap::new();
        let selectors: Vec<NodeId> = chart
            .subtree(ROOT)
            .into_iter()
            .filter(|n| chart.node(*n).kind == NodeKind::Xor && chart.node(*n).children.len() >= 2)
            .collect();
        let mut names = BTreeMap::new();
        for n in &selectors {
            let name = fresh(&sanitize(&chart.name(*n).to_lowercase()), &used);
            used.insert(name.clone());
            names.insert(*n, name);
        }
        let mut data_names = Vec::new();
        for v in &chart.variables {
            let name = fresh(&sanitize(&v.name), &used);
            used.insert(name.clone());
            data_names.push(name);
        }
        // value encodings share the identifier space with variables
        let mut value_names: BTreeMap<NodeId, Vec<String>> = BTreeMap::new();
        let mut plain_count: BTreeMap<String, usize> = BTreeMap::new();
        for n in &selectors {
            for c in &chart.node(*n).children {
                *plain_count.entry(sanitize(chart.name(*c))).or_default() += 1;
            }
        }
        for n in &selectors {
            let mut vals = Vec::new();
            for c in &chart.node(*n).children {
                let plain = sanitize(chart.name(*c));
                let base = if plain_count[&plain] > 1 || used.contains(&plain) || is_reserved(&plain) {
                    format!("{}_{}", sanitize(chart.name(*n)), plain)
                } else {
                    plain
                };
                let name = fresh(&base, &used);
                used.insert(name.clone());
                vals.push(name);
            }
            value_names.insert(*n, vals);
        }
        for n in &selectors {
            let node = chart.node(*n);
            let init = node.initial.and_then(|i| node.children.iter().position(|c| *c == i)).unwrap_or(0);
            scope_var.insert(*n, vars.len());
            vars.push(FlatVar {
                name: names[n].clone(),
                role: VarRole::Scope(*n),
                lo: 0,
                hi: node.children.len() as i64 - 1,
                initial: init as i64,
                values: value_names.remove(n).unwrap_or_default(),
                is_bool: false,
            });
        }
        let mut data_var = Vec::new();
        for (i, v) in chart.variables.iter().enumerate() {
            let (lo, hi) = v.domain.bounds();
            data_var.push(vars.len());
            vars.push(FlatVar {
                name: data_names[i].clone(),
                role: VarRole::Data(i),
                lo,
                hi,
                initial: v.initial,
                values: vec![],
                is_bool: v.domain == Domain::Bool,
            });
        }
        let (time_base, clock_max) = clocks(chart)?;
        let mut clock_var = BTreeMap::new();
        for (state, max) in clock_max {
            let name = fresh(&format!("c_{}", sanitize(chart.name(state))), &used);
            used.insert(name.clone());
            clock_var.insert(state, vars.len());
            vars.push(FlatVar {
                name,
                role: VarRole::Clock(state),
                lo: 0,
                hi: max,
                initial: 0,
                values: vec![],
                is_bool: false,
            });
        }
        if vars.is_empty() {
            // keep at least one variable so the model has a state
            let root = chart.node(ROOT);
            scope_var.insert(ROOT, 0);
            vars.push(FlatVar {
                name: "root".into(),
                role: VarRole::Scope(ROOT),
                lo: 0,
                hi: 0,
                initial: 0,
                values: root.children.iter().map(|c| sanitize(chart.name(*c))).take(1).collect(),
                is_bool: false,
            });
        }
        Ok(Layout { vars, scope_var, data_var, clock_var, time_base })
    }

    pub fn child_index(chart: &Chart, parent: NodeId, child: NodeId) -> i64 {
        chart.node(parent).children.iter().position(|c| *c == child).expect("child of parent") as i64
    }

    /// `in(node)` over scope variables.
    pub fn in_state(&self, chart: &Chart, node: NodeId) -> FExpr {
        FExpr::conj(
            chart
                .selector_chain(node)
                .into_iter()
                .rev()
                .map(|(a, c)| FExpr::var_is(self.scope_var[&a], Self::child_index(chart, a, c))),
        )
    }

    /// Ticks of a delay in the layout's time base.
    pub fn ticks(&self, d: &Duration) -> i64 {
        self.time_base.and_then(|b| d.ticks(b)).map(|t| t as i64).unwrap_or(0)
    }

    /// Lowers a chart expression as seen from `scope`. Variables not visible
    /// from `scope` are still found when their name is unique in the chart.
    pub fn lower(&self, chart: &Chart, scope: NodeId, e: &Expr) -> Result<FExpr, String> {
        Ok(match e {
            Expr::Int(i) => FExpr::Const(*i),
            Expr::Bool(b) => FExpr::Const(*b as i64),
            Expr::Var(v) => {
                let idx = chart.resolve_var(scope, v).or_else(|| {
                    let all: Vec<usize> =
                        chart.variables.iter().enumerate().filter(|(_, d)| d.name == *v).map(|(i, _)| i).collect();
                    (all.len() == 1).then(|| all[0])
                });
                FExpr::Var(self.data_var[idx.ok_or_else(|| format!("unknown variable `{v}`"))?])
            }
            Expr::In(r) => self.in_state(chart, chart.resolve_state(r)?),
            Expr::Unary(UnOp::Not, x) => FExpr::not(self.lower(chart, scope, x)?),
            Expr::Unary(UnOp::Neg, x) => FExpr::Neg(Box::new(self.lower(chart, scope, x)?)),
            Expr::Binary(op, a, b) => FExpr::bin(*op, self.lower(chart, scope, a)?, self.lower(chart, scope, b)?),
        })
    }

    /// Lowers the right-hand side of an assignment; boolean-valued
    /// expressions become `cond ? 1 : 0`.
    pub fn lower_rhs(&self, chart: &Chart, scope: NodeId, e: &Expr) -> Result<FExpr, String> {
        let lowered = self.lower(chart, scope, e)?;
        let is_bool = matches!(e, Expr::In(_) | Expr::Unary(UnOp::Not, _))
            || matches!(e, Expr::Binary(op, ..) if op.is_comparison() || op.is_logical());
        Ok(if is_bool { FExpr::ite(lowered, FExpr::Const(1), FExpr::Const(0)).simplify() } else { lowered })
    }
}

/// Common time base and, per timed source state, the largest delay in ticks.
fn clocks(chart: &Chart) -> Result<(Option<TimeUnit>, BTreeMap<NodeId, i64>), Diagnostic> {
    let delays: Vec<(NodeId, Duration)> = chart
        .transitions
        .iter()
        .filter_map(|t| match &t.trigger {
            Trigger::After(d) => Some((t.source, *d)),
            Trigger::Event(_) => None,
        })
        .collect();
    if delays.is_empty() {
        return Ok((None, BTreeMap::new()));
    }
    let all: Vec<Duration> = delays.iter().map(|(_, d)| *d).collect();
    let base = common_base(&all);
    let longest = all.iter().max_by_key(|d| d.micros()).copied().unwrap();
    let need = longest.ticks(base).unwrap_or(u64::MAX);
    if need > MAX_TICKS {
        let finest = all.iter().min_by_key(|d| d.micros()).copied().unwrap();
        let suggest = TimeUnit::ALL
            .iter()
            .rev()
            .find(|u| longest.micros() / u.micros() <= MAX_TICKS as u128)
            .copied()
            .unwrap_or(TimeUnit::Day);
        return Err(Diagnostic::error(format!(
            "delays `{finest}` and `{longest}` need {need} ticks of 1{base}, more than the limit of {MAX_TICKS}"
        ))
        .with_hint(format!("round the delays to a coarser unit such as `{suggest}`")));
    }
    let mut max: BTreeMap<NodeId, i64> = BTreeMap::new();
    for (s, d) in delays {
        let t = d.ticks(base).unwrap() as i64;
        let e = max.entry(s).or_insert(0);
        *e = (*e).max(t);
    }
    Ok((Some(base), max))
}
