//! Expressions and predicates as written in charts.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnOp {
    Not,
    Neg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
    Implies,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Eq => "=",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::And => "&",
            BinOp::Or => "|",
            BinOp::Implies => "=>",
        }
    }

    /// Binding strength; larger binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Implies => 1,
            BinOp::Or => 2,
            BinOp::And => 3,
            BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 5,
            BinOp::Add | BinOp::Sub => 6,
            BinOp::Mul => 7,
        }
    }

    pub fn is_comparison(self) -> bool {
        matches!(self, BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge)
    }

    pub fn is_logical(self) -> bool {
        matches!(self, BinOp::And | BinOp::Or | BinOp::Implies)
    }

    pub fn is_arithmetic(self) -> bool {
        matches!(self, BinOp::Add | BinOp::Sub | BinOp::Mul)
    }

    /// Applies the operator to integer operands (booleans are 0/1).
    /// Returns `None` on arithmetic overflow.
    pub fn apply(self, a: i64, b: i64) -> Option<i64> {
        let t = |c: bool| Some(c as i64);
        match self {
            BinOp::Add => a.checked_add(b),
            BinOp::Sub => a.checked_sub(b),
            BinOp::Mul => a.checked_mul(b),
            BinOp::Eq => t(a == b),
            BinOp::Ne => t(a != b),
            BinOp::Lt => t(a < b),
            BinOp::Le => t(a <= b),
            BinOp::Gt => t(a > b),
            BinOp::Ge => t(a >= b),
            BinOp::And => t(a != 0 && b != 0),
            BinOp::Or => t(a != 0 || b != 0),
            BinOp::Implies => t(a == 0 || b != 0),
        }
    }
}

/// An integer or boolean expression. `In` holds a state reference as written
/// (`Sleeping` or `Sender.Sleeping`); it is resolved against the chart.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Int(i64),
    Bool(bool),
    Var(String),
    In(String),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ty {
    Int,
    Bool,
}

impl fmt::Display for Ty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Ty::Int => "int",
            Ty::Bool => "bool",
        })
    }
}

impl Expr {
    pub fn var(name: impl Into<String>) -> Expr {
        Expr::Var(name.into())
    }

    pub fn in_state(name: impl Into<String>) -> Expr {
        Expr::In(name.into())
    }

    pub fn bin(op: BinOp, a: Expr, b: Expr) -> Expr {
        Expr::Binary(op, Box::new(a), Box::new(b))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(e: Expr) -> Expr {
        Expr::Unary(UnOp::Not, Box::new(e))
    }

    pub fn and(a: Expr, b: Expr) -> Expr {
        Expr::bin(BinOp::And, a, b)
    }

    pub fn or(a: Expr, b: Expr) -> Expr {
        Expr::bin(BinOp::Or, a, b)
    }

    pub fn implies(a: Expr, b: Expr) -> Expr {
        Expr::bin(BinOp::Implies, a, b)
    }

    pub fn is_true(&self) -> bool {
        matches!(self, Expr::Bool(true))
    }

    /// Conjunction with `true` units dropped.
    pub fn conj(parts: impl IntoIterator<Item = Expr>) -> Expr {
        let mut acc: Option<Expr> = None;
        for p in parts {
            if p.is_true() {
                continue;
            }
            if matches!(p, Expr::Bool(false)) {
                return Expr::Bool(false);
            }
            acc = Some(match acc {
                None => p,
                Some(a) => Expr::and(a, p),
            });
        }
        acc.unwrap_or(Expr::Bool(true))
    }

    /// Disjunction; any `true` member makes the whole disjunction `true`.
    pub fn disj(parts: impl IntoIterator<Item = Expr>) -> Expr {
        let mut acc: Option<Expr> = None;
        for p in parts {
            if p.is_true() {
                return Expr::Bool(true);
            }
            if matches!(p, Expr::Bool(false)) {
                continue;
            }
            acc = Some(match acc {
                None => p,
                Some(a) => Expr::or(a, p),
            });
        }
        acc.unwrap_or(Expr::Bool(false))
    }

    /// Visits every variable name.
    pub fn vars<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Expr::Var(v) => out.push(v),
            Expr::Unary(_, e) => e.vars(out),
            Expr::Binary(_, a, b) => {
                a.vars(out);
                b.vars(out);
            }
            _ => {}
        }
    }

    /// Visits every state reference.
    pub fn state_refs<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Expr::In(s) => out.push(s),
            Expr::Unary(_, e) => e.state_refs(out),
            Expr::Binary(_, a, b) => {
                a.state_refs(out);
                b.state_refs(out);
            }
            _ => {}
        }
    }

    /// Infers the type, looking variables up through `lookup`.
    pub fn type_of(&self, lookup: &dyn Fn(&str) -> Option<Ty>) -> Result<Ty, String> {
        match self {
            Expr::Int(_) => Ok(Ty::Int),
            Expr::Bool(_) | Expr::In(_) => Ok(Ty::Bool),
            Expr::Var(v) => lookup(v).ok_or_else(|| format!("unknown variable `{v}`")),
            Expr::Unary(UnOp::Not, e) => expect(e, Ty::Bool, lookup).map(|_| Ty::Bool),
            Expr::Unary(UnOp::Neg, e) => expect(e, Ty::Int, lookup).map(|_| Ty::Int),
            Expr::Binary(op, a, b) if op.is_arithmetic() => {
                expect(a, Ty::Int, lookup)?;
                expect(b, Ty::Int, lookup)?;
                Ok(Ty::Int)
            }
            Expr::Binary(op, a, b) if op.is_logical() => {
                expect(a, Ty::Bool, lookup)?;
                expect(b, Ty::Bool, lookup)?;
                Ok(Ty::Bool)
            }
            Expr::Binary(op, a, b) => {
                let ta = a.type_of(lookup)?;
                let tb = b.type_of(lookup)?;
                if ta != tb {
                    return Err(format!("cannot compare {ta} with {tb} in `{self}`"));
                }
                if ta == Ty::Bool && !matches!(op, BinOp::Eq | BinOp::Ne) {
                    return Err(format!("ordering comparison on booleans in `{self}`"));
                }
                Ok(Ty::Bool)
            }
        }
    }

    /// Evaluates with booleans encoded as 0/1.
    pub fn eval(&self, env: &dyn EvalEnv) -> Option<i64> {
        match self {
            Expr::Int(i) => Some(*i),
            Expr::Bool(b) => Some(*b as i64),
            Expr::Var(v) => env.value(v),
            Expr::In(s) => env.is_active(s).map(|b| b as i64),
            Expr::Unary(UnOp::Not, e) => e.eval(env).map(|v| (v == 0) as i64),
            Expr::Unary(UnOp::Neg, e) => e.eval(env).and_then(i64::checked_neg),
            Expr::Binary(op, a, b) => op.apply(a.eval(env)?, b.eval(env)?),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary(op, ..) => op.precedence(),
            Expr::Unary(UnOp::Not, _) => 4,
            Expr::Unary(UnOp::Neg, _) => 8,
            Expr::In(_) => 9,
            _ => 10,
        }
    }
}

fn expect(e: &Expr, want: Ty, lookup: &dyn Fn(&str) -> Option<Ty>) -> Result<(), String> {
    let got = e.type_of(lookup)?;
    if got != want {
        return Err(format!("expected {want} but `{e}` is {got}"));
    }
    Ok(())
}

pub trait EvalEnv {
    fn value(&self, var: &str) -> Option<i64>;
    fn is_active(&self, state: &str) -> Option<bool>;
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Int(i) if *i < 0 => write!(f, "({i})"),
            Expr::Int(i) => write!(f, "{i}"),
            Expr::Bool(b) => write!(f, "{b}"),
            Expr::Var(v) => f.write_str(v),
            Expr::In(s) => write!(f, "in {s}"),
            Expr::Unary(op, e) => {
                f.write_str(match op {
                    UnOp::Not => "!",
                    UnOp::Neg => "-",
                })?;
                if e.precedence() < self.precedence() || matches!(**e, Expr::Unary(..)) {
                    write!(f, "({e})")
                } else {
                    write!(f, "{e}")
                }
            }
            Expr::Binary(op, a, b) => {
                let p = op.precedence();
                // Comparisons do not chain and `=>` is right-associative.
                let (left_min, right_min) = match op {
                    BinOp::Implies => (p + 1, p),
                    _ if op.is_comparison() => (p + 1, p + 1),
                    _ => (p, p + 1),
                };
                if a.precedence() < left_min {
                    write!(f, "({a})")?;
                } else {
                    write!(f, "{a}")?;
                }
                write!(f, " {} ", op.symbol())?;
                if b.precedence() < right_min {
                    write!(f, "({b})")
                } else {
                    write!(f, "{b}")
                }
            }
        }
    }
}
