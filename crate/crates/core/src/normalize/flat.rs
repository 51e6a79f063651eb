//! Flat variables, expressions over them and guarded commands.

use std::collections::BTreeSet;
use std::fmt::Write;

use crate::chart::{NodeId, TransitionId};
use crate::expr::BinOp;
use crate::num::{format_rational, Rational, TimeUnit};

/// Expression over flat variable indices. Booleans are 0/1.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FExpr {
    Const(i64),
    Var(usize),
    Not(Box<FExpr>),
    Neg(Box<FExpr>),
    Bin(BinOp, Box<FExpr>, Box<FExpr>),
    Ite(Box<FExpr>, Box<FExpr>, Box<FExpr>),
}

pub const TRUE: FExpr = FExpr::Const(1);
pub const FALSE: FExpr = FExpr::Const(0);

impl FExpr {
    pub fn bin(op: BinOp, a: FExpr, b: FExpr) -> FExpr {
        FExpr::Bin(op, Box::new(a), Box::new(b))
    }

    pub fn eq(a: FExpr, b: FExpr) -> FExpr {
        FExpr::bin(BinOp::Eq, a, b)
    }

    pub fn var_is(v: usize, k: i64) -> FExpr {
        FExpr::eq(FExpr::Var(v), FExpr::Const(k))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(e: FExpr) -> FExpr {
        match e {
            FExpr::Const(c) => FExpr::Const((c == 0) as i64),
            FExpr::Not(inner) => *inner,
            other => FExpr::Not(Box::new(other)),
        }
    }

    pub fn ite(c: FExpr, t: FExpr, e: FExpr) -> FExpr {
        FExpr::Ite(Box::new(c), Box::new(t), Box::new(e))
    }

    pub fn is_true(&self) -> bool {
        matches!(self, FExpr::Const(c) if *c != 0)
    }

    pub fn is_false(&self) -> bool {
        *self == FALSE
    }

    pub fn and(a: FExpr, b: FExpr) -> FExpr {
        FExpr::conj([a, b])
    }

    pub fn or(a: FExpr, b: FExpr) -> FExpr {
        FExpr::disj([a, b])
    }

    /// Conjunction dropping `true` members and duplicates.
    pub fn conj(parts: impl IntoIterator<Item = FExpr>) -> FExpr {
        let mut seen: Vec<FExpr> = Vec::new();
        for p in parts {
            if p.is_true() {
                continue;
            }
            if p.is_false() {
                return FALSE;
            }
            if !seen.contains(&p) {
                seen.push(p);
            }
        }
        seen.into_iter().reduce(|a, b| FExpr::bin(BinOp::And, a, b)).unwrap_or(TRUE)
    }

    pub fn disj(parts: impl IntoIterator<Item = FExpr>) -> FExpr {
        let mut seen: Vec<FExpr> = Vec::new();
        for p in parts {
            if p.is_false() {
                continue;
            }
            if p.is_true() {
                return TRUE;
            }
            if !seen.contains(&p) {
                seen.push(p);
            }
        }
        seen.into_iter().reduce(|a, b| FExpr::bin(BinOp::Or, a, b)).unwrap_or(FALSE)
    }

    /// Top-level conjuncts.
    pub fn conjuncts(&self) -> Vec<&FExpr> {
        match self {
            FExpr::Bin(BinOp::And, a, b) => {
                let mut out = a.conjuncts();
                out.extend(b.conjuncts());
                out
            }
            other => vec![other],
        }
    }

    pub fn eval(&self, vals: &[i64]) -> Option<i64> {
        match self {
            FExpr::Const(c) => Some(*c),
            FExpr::Var(v) => vals.get(*v).copied(),
            FExpr::Not(e) => e.eval(vals).map(|x| (x == 0) as i64),
            FExpr::Neg(e) => e.eval(vals)?.checked_neg(),
            FExpr::Bin(op, a, b) => {
                // short-circuit so that guards protect partial subterms
                let x = a.eval(vals)?;
                match op {
                    BinOp::And if x == 0 => Some(0),
                    BinOp::Or if x != 0 => Some(1),
                    BinOp::Implies if x == 0 => Some(1),
                    _ => op.apply(x, b.eval(vals)?),
                }
            }
            FExpr::Ite(c, t, e) => {
                if c.eval(vals)? != 0 {
                    t.eval(vals)
                } else {
                    e.eval(vals)
                }
            }
        }
    }

    pub fn holds(&self, vals: &[i64]) -> bool {
        self.eval(vals).is_some_and(|v| v != 0)
    }

    pub fn vars(&self, out: &mut BTreeSet<usize>) {
        match self {
            FExpr::Const(_) => {}
            FExpr::Var(v) => {
                out.insert(*v);
            }
            FExpr::Not(e) | FExpr::Neg(e) => e.vars(out),
            FExpr::Bin(_, a, b) => {
                a.vars(out);
                b.vars(out);
            }
            FExpr::Ite(c, t, e) => {
                c.vars(out);
                t.vars(out);
                e.vars(out);
            }
        }
    }

    pub fn var_set(&self) -> BTreeSet<usize> {
        let mut s = BTreeSet::new();
        self.vars(&mut s);
        s
    }

    /// Replaces every variable by `f(v)`, then simplifies.
    pub fn subst(&self, f: &dyn Fn(usize) -> FExpr) -> FExpr {
        match self {
            FExpr::Const(c) => FExpr::Const(*c),
            FExpr::Var(v) => f(*v),
            FExpr::Not(e) => FExpr::not(e.subst(f)).simplify_top(),
            FExpr::Neg(e) => FExpr::Neg(Box::new(e.subst(f))).simplify_top(),
            FExpr::Bin(op, a, b) => FExpr::bin(*op, a.subst(f), b.subst(f)).simplify_top(),
            FExpr::Ite(c, t, e) => FExpr::ite(c.subst(f), t.subst(f), e.subst(f)).simplify_top(),
        }
    }

    pub fn simplify(&self) -> FExpr {
        self.subst(&FExpr::Var)
    }

    /// One rewriting step at the root, assuming simplified children.
    fn simplify_top(self) -> FExpr {
        use FExpr::*;
        match self {
            Not(e) => match *e {
                Const(c) => Const((c == 0) as i64),
                Not(inner) => *inner,
                other => Not(Box::new(other)),
            },
            Neg(e) => match *e {
                Const(c) => c.checked_neg().map(Const).unwrap_or(Neg(Box::new(Const(c)))),
                other => Neg(Box::new(other)),
            },
            Ite(c, t, e) => match *c {
                Const(k) => {
                    if k != 0 {
                        *t
                    } else {
                        *e
                    }
                }
                c if t == e => {
                    let _ = c;
                    *t
                }
                c => Ite(Box::new(c), t, e),
            },
            Bin(op, a, b) => {
                if let (Const(x), Const(y)) = (&*a, &*b) {
                    if let Some(v) = op.apply(*x, *y) {
                        return Const(v);
                    }
                }
                match (op, *a, *b) {
                    (BinOp::And, Const(0), _) | (BinOp::And, _, Const(0)) => FALSE,
                    (BinOp::And, Const(_), x) | (BinOp::And, x, Const(_)) => x,
                    (BinOp::Or, Const(0), x) | (BinOp::Or, x, Const(0)) => x,
                    (BinOp::Or, Const(_), _) | (BinOp::Or, _, Const(_)) => TRUE,
                    (BinOp::Implies, Const(0), _) => TRUE,
                    (BinOp::Implies, Const(_), x) => x,
                    (BinOp::Implies, _, Const(k)) if k != 0 => TRUE,
                    (BinOp::Implies, x, Const(_)) => FExpr::not(x),
                    (BinOp::Add, Const(0), x) | (BinOp::Add, x, Const(0)) | (BinOp::Sub, x, Const(0)) => x,
                    (BinOp::Mul, Const(1), x) | (BinOp::Mul, x, Const(1)) => x,
                    (BinOp::Mul, Const(0), _) | (BinOp::Mul, _, Const(0)) => Const(0),
                    (BinOp::Eq | BinOp::Le | BinOp::Ge, x, y) if x == y => TRUE,
                    (BinOp::Ne | BinOp::Lt | BinOp::Gt, x, y) if x == y => FALSE,
                    // `(c ? 1 : 0) = 1` comes from boolean variables
                    (BinOp::Eq, Ite(c, t, e), Const(k)) if *t == Const(1) && *e == Const(0) && k == 1 => *c,
                    (BinOp::Eq, Ite(c, t, e), Const(k)) if *t == Const(1) && *e == Const(0) && k == 0 => {
                        FExpr::not(*c)
                    }
                    (op, x, y) => Bin(op, Box::new(x), Box::new(y)),
                }
            }
            other => other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarRole {
    /// Selects the active child of an XOR state.
    Scope(NodeId),
    /// A declared chart variable, by index into `Chart::variables`.
    Data(usize),
    /// Ticks spent in a state with outgoing timed transitions.
    Clock(NodeId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlatVar {
    pub name: String,
    pub role: VarRole,
    pub lo: i64,
    pub hi: i64,
    pub initial: i64,
    /// Encoding names of scope values (index = value).
    pub values: Vec<String>,
    pub is_bool: bool,
}

impl FlatVar {
    pub fn domain_size(&self) -> u64 {
        (self.hi - self.lo + 1) as u64
    }

    pub fn is_scope(&self) -> bool {
        matches!(self.role, VarRole::Scope(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Update {
    pub prob: Rational,
    /// Simultaneous assignment; right-hand sides read the pre-state.
    pub assignments: Vec<(usize, FExpr)>,
}

impl Update {
    pub fn apply(&self, vals: &[i64]) -> Option<Vec<i64>> {
        let mut out = vals.to_vec();
        for (v, e) in &self.assignments {
            out[*v] = e.eval(vals)?;
        }
        Some(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GuardedCommand {
    pub label: String,
    /// Event (or timed pseudo-event) that triggers the reaction.
    pub event: String,
    pub guard: FExpr,
    pub updates: Vec<Update>,
    /// Transitions fired in some branch, for diagnostics and documentation.
    pub transitions: Vec<TransitionId>,
    pub timed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionItem {
    pub label: String,
    pub guard: FExpr,
    pub reward: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RewardStructure {
    pub name: String,
    pub state_items: Vec<(FExpr, Rational)>,
    pub action_items: Vec<ActionItem>,
}

/// Clock bookkeeping needed to add the time-advance command.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClockSpec {
    pub clock: usize,
    pub state: NodeId,
    /// Holds while the owning state is active.
    pub active: FExpr,
    pub max: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlatSystem {
    pub name: String,
    pub vars: Vec<FlatVar>,
    pub commands: Vec<GuardedCommand>,
    pub rewards: Vec<RewardStructure>,
    pub clocks: Vec<ClockSpec>,
    /// Duration of one tick; present iff the chart has timed transitions.
    pub time_base: Option<TimeUnit>,
}

pub const TICK: &str = "tick";

impl FlatSystem {
    pub fn initial(&self) -> Vec<i64> {
        self.vars.iter().map(|v| v.initial).collect()
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v.name == name)
    }

    pub fn is_timed(&self) -> bool {
        self.time_base.is_some()
    }

    pub fn show(&self, e: &FExpr, syntax: Syntax) -> String {
        render(e, &self.vars, syntax)
    }

    /// Command listing in PRISM-like syntax.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for v in &self.vars {
            let _ = writeln!(out, "{} : [{}..{}] init {};", v.name, v.lo, v.hi, v.initial);
        }
        for c in &self.commands {
            let _ = writeln!(out, "{}", self.command_line(c));
        }
        out
    }

    pub fn command_line(&self, c: &GuardedCommand) -> String {
        let ups: Vec<String> = c
            .updates
            .iter()
            .map(|u| {
                let body = self.update_text(u);
                if c.updates.len() == 1 && u.prob == Rational::from_integer(1) {
                    body
                } else {
                    format!("{}:{}", format_rational(&u.prob), body)
                }
            })
            .collect();
        format!("[{}] {} -> {};", c.label, self.show(&c.guard, Syntax::Prism), ups.join(" + "))
    }

    pub fn update_text(&self, u: &Update) -> String {
        if u.assignments.is_empty() {
            return "true".to_string();
        }
        u.assignments
            .iter()
            .map(|(v, e)| format!("({}'={})", self.vars[*v].name, render_value(*v, e, &self.vars, Syntax::Prism)))
            .collect::<Vec<_>>()
            .join("&")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Syntax {
    Prism,
    C,
}

fn op_text(op: BinOp, syntax: Syntax) -> &'static str {
    match (syntax, op) {
        (Syntax::C, BinOp::Eq) => " == ",
        (Syntax::C, BinOp::Ne) => " != ",
        (Syntax::C, BinOp::And) => " && ",
        (Syntax::C, BinOp::Or) => " || ",
        (Syntax::C, BinOp::Lt) => " < ",
        (Syntax::C, BinOp::Le) => " <= ",
        (Syntax::C, BinOp::Gt) => " > ",
        (Syntax::C, BinOp::Ge) => " >= ",
        (Syntax::C, BinOp::Add) => " + ",
        (Syntax::C, BinOp::Sub) => " - ",
        (Syntax::C, BinOp::Mul) => " * ",
        (Syntax::Prism, BinOp::And) => " & ",
        (Syntax::Prism, BinOp::Or) => " | ",
        (Syntax::Prism, BinOp::Implies) => " => ",
        (_, op) => op.symbol(),
    }
}

fn is_bool_valued(e: &FExpr) -> bool {
    match e {
        FExpr::Not(_) => true,
        FExpr::Bin(op, ..) => op.is_comparison() || op.is_logical(),
        _ => false,
    }
}

/// Renders a predicate. Atoms are bare at the top and parenthesized under
/// connectives: `(sender=Sleeping) => !(receiver=Off)`.
pub fn render(e: &FExpr, vars: &[FlatVar], syntax: Syntax) -> String {
    render_bool(e, vars, syntax, true)
}

fn render_bool(e: &FExpr, vars: &[FlatVar], syntax: Syntax, top: bool) -> String {
    let wrap = |s: String| if top { s } else { format!("({s})") };
    match e {
        FExpr::Const(c) => match syntax {
            Syntax::Prism => (if *c != 0 { "true" } else { "false" }).to_string(),
            Syntax::C => (if *c != 0 { "1" } else { "0" }).to_string(),
        },
        FExpr::Var(v) => {
            let eq = if syntax == Syntax::C { " == " } else { "=" };
            wrap(format!("{}{eq}1", vars[*v].name))
        }
        FExpr::Not(inner) => format!("!{}", render_bool(inner, vars, syntax, false)),
        FExpr::Bin(op, a, b) if op.is_logical() => {
            if syntax == Syntax::C && *op == BinOp::Implies {
                let na = FExpr::not((**a).clone());
                return wrap(format!(
                    "{} || {}",
                    render_bool(&na, vars, syntax, false),
                    render_bool(b, vars, syntax, false)
                ));
            }
            let side = |x: &FExpr| match x {
                // same associative connective needs no parentheses
                FExpr::Bin(o, ..) if o == op && *op != BinOp::Implies => render_bool(x, vars, syntax, true),
                _ => render_bool(x, vars, syntax, false),
            };
            wrap(format!("{}{}{}", side(a), op_text(*op, syntax), side(b)))
        }
        FExpr::Bin(op, a, b) if op.is_comparison() => wrap(comparison(*op, a, b, vars, syntax)),
        FExpr::Ite(..) => format!("{}{}", render_int(e, vars, syntax, 0), if syntax == Syntax::C { " != 0" } else { "=1" }),
        other => wrap(format!("{}{}0", render_int(other, vars, syntax, 0), if syntax == Syntax::C { " != " } else { "!=" })),
    }
}

fn comparison(op: BinOp, a: &FExpr, b: &FExpr, vars: &[FlatVar], syntax: Syntax) -> String {
    let sym = op_text(op, syntax);
    // scope values print as their encoding names
    if let (FExpr::Var(v), FExpr::Const(k)) = (a, b) {
        let var = &vars[*v];
        if var.is_scope() {
            if let Some(name) = usize::try_from(*k).ok().and_then(|k| var.values.get(k)) {
                return format!("{}{sym}{name}", var.name);
            }
        }
    }
    let side = |x: &FExpr| {
        if is_bool_valued(x) {
            render_bool(x, vars, syntax, false)
        } else {
            render_int(x, vars, syntax, 5)
        }
    };
    format!("{}{sym}{}", side(a), side(b))
}

/// Right-hand side of an assignment to `var`; scope values print by name.
pub fn render_value(var: usize, e: &FExpr, vars: &[FlatVar], syntax: Syntax) -> String {
    if let FExpr::Const(k) = e {
        if let Some(name) = usize::try_from(*k).ok().and_then(|k| vars[var].values.get(k)) {
            return name.clone();
        }
    }
    render_int(e, vars, syntax, 0)
}

/// `ctx` is the binding strength of the surrounding operator.
fn render_int(e: &FExpr, vars: &[FlatVar], syntax: Syntax, ctx: u8) -> String {
    match e {
        FExpr::Const(c) if *c < 0 => format!("({c})"),
        FExpr::Const(c) => c.to_string(),
        FExpr::Var(v) => vars[*v].name.clone(),
        FExpr::Neg(inner) => format!("-{}", render_int(inner, vars, syntax, 8)),
        FExpr::Bin(op, a, b) if op.is_arithmetic() => {
            let p = op.precedence();
            let s = format!(
                "{}{}{}",
                render_int(a, vars, syntax, p),
                op_text(*op, syntax),
                render_int(b, vars, syntax, p + 1)
            );
            if p < ctx {
                format!("({s})")
            } else {
                s
            }
        }
        FExpr::Ite(c, t, f) => format!(
            "({} ? {} : {})",
            render_bool(c, vars, syntax, false),
            render_int(t, vars, syntax, 0),
            render_int(f, vars, syntax, 0)
        ),
        // boolean-valued subterm in integer position
        other => format!("({} ? 1 : 0)", render_bool(other, vars, syntax, false)),
    }
}
