//! Reader for the PRISM subset written by [`super::export_model`], used to
//! check that an exported model denotes the same MDP.

use std::collections::BTreeMap;

use crate::chart::NodeId;
use crate::expr::BinOp;
use crate::normalize::{ActionItem, FExpr, FlatSystem, FlatVar, GuardedCommand, RewardStructure, Update, VarRole};
use crate::num::{parse_rational, Rational, TimeUnit};

use super::TICK_COMMENT;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(String),
    Str(String),
    Sym(&'static str),
}

const SYMBOLS: &[&str] =
    &["->", "=>", "<=", ">=", "!=", "..", "[", "]", "(", ")", ":", ";", "+", "-", "*", "/", "&", "|", "!", "=", "<", ">", "'", "?"];

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, String> {
    let mut out = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split("//").next().unwrap_or("");
        let b = line.as_bytes();
        let mut i = 0;
        while i < b.len() {
            let c = b[i] as char;
            if c.is_whitespace() {
                i += 1;
            } else if c.is_ascii_alphabetic() || c == '_' {
                let s = i;
                while i < b.len() && (b[i].is_ascii_alphanumeric() || b[i] == b'_') {
                    i += 1;
                }
                out.push((Tok::Ident(line[s..i].to_string()), no + 1));
            } else if c.is_ascii_digit() {
                let s = i;
                while i < b.len() && (b[i].is_ascii_digit() || (b[i] == b'.' && b.get(i + 1) != Some(&b'.'))) {
                    i += 1;
                }
                out.push((Tok::Num(line[s..i].to_string()), no + 1));
            } else if c == '"' {
                let end = line[i + 1..].find('"').ok_or(format!("line {}: unterminated string", no + 1))?;
                out.push((Tok::Str(line[i + 1..i + 1 + end].to_string()), no + 1));
                i += end + 2;
            } else if let Some(sym) = SYMBOLS.iter().find(|s| line[i..].starts_with(**s)) {
                out.push((Tok::Sym(sym), no + 1));
                i += sym.len();
            } else {
                return Err(format!("line {}: unexpected character `{c}`", no + 1));
            }
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    consts: BTreeMap<String, i64>,
    vars: Vec<FlatVar>,
}

type R<T> = Result<T, String>;

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.0)
    }

    fn err<T>(&self, what: &str) -> R<T> {
        let line = self.toks.get(self.pos).or(self.toks.last()).map(|t| t.1).unwrap_or(0);
        Err(format!("line {line}: expected {what}, found {:?}", self.peek()))
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Some(Tok::Sym(x)) if *x == s)
    }

    fn is_kw(&self, k: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(x)) if x == k)
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        let hit = self.is_sym(s);
        self.pos += hit as usize;
        hit
    }

    fn sym(&mut self, s: &str) -> R<()> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            self.err(&format!("`{s}`"))
        }
    }

    fn kw(&mut self, k: &str) -> R<()> {
        if self.is_kw(k) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(&format!("`{k}`"))
        }
    }

    fn ident(&mut self) -> R<String> {
        match self.peek().cloned() {
            Some(Tok::Ident(s)) => {
                self.pos += 1;
                Ok(s)
            }
            _ => self.err("an identifier"),
        }
    }

    fn int(&mut self) -> R<i64> {
        let neg = self.eat_sym("-");
        match self.peek().cloned() {
            Some(Tok::Num(n)) => {
                self.pos += 1;
                let v: i64 = n.parse().map_err(|_| format!("bad integer `{n}`"))?;
                Ok(if neg { -v } else { v })
            }
            _ => self.err("an integer"),
        }
    }

    fn rational(&mut self) -> R<Rational> {
        let mut text = match self.peek().cloned() {
            Some(Tok::Num(n)) => n,
            _ => return self.err("a number"),
        };
        self.pos += 1;
        if self.eat_sym("/") {
            match self.peek().cloned() {
                Some(Tok::Num(d)) => {
                    self.pos += 1;
                    text = format!("{text}/{d}");
                }
                _ => return self.err("a denominator"),
            }
        }
        parse_rational(&text).ok_or_else(|| format!("bad number `{text}`"))
    }

    fn expr(&mut self) -> R<FExpr> {
        let c = self.implies()?;
        if self.eat_sym("?") {
            let t = self.expr()?;
            self.sym(":")?;
            let e = self.expr()?;
            return Ok(FExpr::Ite(Box::new(c), Box::new(t), Box::new(e)));
        }
        Ok(c)
    }

    fn implies(&mut self) -> R<FExpr> {
        let a = self.or()?;
        if self.eat_sym("=>") {
            let b = self.implies()?;
            return Ok(FExpr::bin(BinOp::Implies, a, b));
        }
        Ok(a)
    }

    fn or(&mut self) -> R<FExpr> {
        let mut a = self.and()?;
        while self.eat_sym("|") {
            a = FExpr::bin(BinOp::Or, a, self.and()?);
        }
        Ok(a)
    }

    fn and(&mut self) -> R<FExpr> {
        let mut a = self.not()?;
        while self.eat_sym("&") {
            a = FExpr::bin(BinOp::And, a, self.not()?);
        }
        Ok(a)
    }

    fn not(&mut self) -> R<FExpr> {
        if self.eat_sym("!") {
            return Ok(FExpr::Not(Box::new(self.not()?)));
        }
        self.cmp()
    }

    fn cmp(&mut self) -> R<FExpr> {
        let a = self.add()?;
        for (s, op) in [("=", BinOp::Eq), ("!=", BinOp::Ne), ("<=", BinOp::Le), (">=", BinOp::Ge), ("<", BinOp::Lt), (">", BinOp::Gt)] {
            if self.eat_sym(s) {
                return Ok(FExpr::bin(op, a, self.add()?));
            }
        }
        Ok(a)
    }

    fn add(&mut self) -> R<FExpr> {
        let mut a = self.mul()?;
        loop {
            if self.eat_sym("+") {
                a = FExpr::bin(BinOp::Add, a, self.mul()?);
            } else if self.is_sym("-") {
                self.pos += 1;
                a = FExpr::bin(BinOp::Sub, a, self.mul()?);
            } else {
                return Ok(a);
            }
        }
    }

    fn mul(&mut self) -> R<FExpr> {
        let mut a = self.unary()?;
        while self.eat_sym("*") {
            a = FExpr::bin(BinOp::Mul, a, self.unary()?);
        }
        Ok(a)
    }

    fn unary(&mut self) -> R<FExpr> {
        if self.eat_sym("-") {
            return Ok(match self.unary()? {
                FExpr::Const(k) => FExpr::Const(-k),
                e => FExpr::Neg(Box::new(e)),
            });
        }
        match self.peek().cloned() {
            Some(Tok::Num(_)) => Ok(FExpr::Const(self.int()?)),
            Some(Tok::Ident(id)) => {
                self.pos += 1;
                match id.as_str() {
                    "true" => Ok(FExpr::Const(1)),
                    "false" => Ok(FExpr::Const(0)),
                    _ => {
                        if let Some(v) = self.vars.iter().position(|v| v.name == id) {
                            Ok(FExpr::Var(v))
                        } else if let Some(k) = self.consts.get(&id) {
                            Ok(FExpr::Const(*k))
                        } else {
                            Err(format!("unknown identifier `{id}`"))
                        }
                    }
                }
            }
            Some(Tok::Sym("(")) => {
                self.pos += 1;
                let e = self.expr()?;
                self.sym(")")?;
                Ok(e)
            }
            _ => self.err("an expression"),
        }
    }

    fn assignments(&mut self) -> R<Vec<(usize, FExpr)>> {
        if self.is_kw("true") {
            self.pos += 1;
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        loop {
            self.sym("(")?;
            let name = self.ident()?;
            let v = self.vars.iter().position(|x| x.name == name).ok_or(format!("unknown variable `{name}`"))?;
            self.sym("'")?;
            self.sym("=")?;
            out.push((v, self.expr()?));
            self.sym(")")?;
            if !self.eat_sym("&") {
                return Ok(out);
            }
        }
    }

    fn command(&mut self) -> R<GuardedCommand> {
        self.sym("[")?;
        let label = if self.is_sym("]") { String::new() } else { self.ident()? };
        self.sym("]")?;
        let guard = self.expr()?;
        self.sym("->")?;
        let mut updates = Vec::new();
        loop {
            let prob = if matches!(self.peek(), Some(Tok::Num(_))) {
                let p = self.rational()?;
                self.sym(":")?;
                p
            } else {
                Rational::from_integer(1)
            };
            updates.push(Update { prob, assignments: self.assignments()? });
            if !self.eat_sym("+") {
                break;
            }
        }
        self.sym(";")?;
        Ok(GuardedCommand { event: label.clone(), label, guard, updates, transitions: Vec::new(), timed: false })
    }

    fn rewards(&mut self) -> R<RewardStructure> {
        self.kw("rewards")?;
        let name = match self.peek().cloned() {
            Some(Tok::Str(s)) => s,
            _ => return self.err("a reward name"),
        };
        self.pos += 1;
        let mut r = RewardStructure { name, state_items: Vec::new(), action_items: Vec::new() };
        while !self.is_kw("endrewards") {
            if self.eat_sym("[") {
                let label = self.ident()?;
                self.sym("]")?;
                let guard = self.expr()?;
                self.sym(":")?;
                let reward = self.rational()?;
                r.action_items.push(ActionItem { label, guard, reward });
            } else {
                let g = self.expr()?;
                self.sym(":")?;
                r.state_items.push((g, self.rational()?));
            }
            self.sym(";")?;
        }
        self.pos += 1;
        Ok(r)
    }
}

pub fn read_model(text: &str) -> Result<FlatSystem, String> {
    let time_base = text
        .lines()
        .find_map(|l| l.trim().strip_prefix(TICK_COMMENT))
        .map(|u| TimeUnit::from_suffix(u.trim()).ok_or(format!("unknown time unit `{u}`")))
        .transpose()?;
    let mut p = Parser { toks: lex(text)?, pos: 0, consts: BTreeMap::new(), vars: Vec::new() };
    p.kw("mdp")?;
    // selector encodings come as runs starting at 0, one run per selector
    let mut runs: Vec<Vec<String>> = Vec::new();
    while p.is_kw("const") {
        p.pos += 1;
        p.kw("int")?;
        let name = p.ident()?;
        p.sym("=")?;
        let v = p.int()?;
        p.sym(";")?;
        if v == 0 || runs.is_empty() {
            runs.push(Vec::new());
        }
        runs.last_mut().unwrap().push(name.clone());
        p.consts.insert(name, v);
    }
    p.kw("module")?;
    let name = p.ident()?;
    let mut runs = runs.into_iter();
    while matches!(p.peek(), Some(Tok::Ident(s)) if s != "endmodule") {
        let var = p.ident()?;
        p.sym(":")?;
        p.sym("[")?;
        let lo = p.int()?;
        p.sym("..")?;
        let hi = p.int()?;
        p.sym("]")?;
        p.kw("init")?;
        let (initial, named) = match p.peek().cloned() {
            Some(Tok::Ident(c)) => {
                p.pos += 1;
                (*p.consts.get(&c).ok_or(format!("unknown constant `{c}`"))?, true)
            }
            _ => (p.int()?, false),
        };
        p.sym(";")?;
        let index = p.vars.len();
        let (role, values) = if named {
            (VarRole::Scope(NodeId(index)), runs.next().unwrap_or_default())
        } else {
            (VarRole::Data(index), Vec::new())
        };
        p.vars.push(FlatVar { name: var, role, lo, hi, initial, values, is_bool: false });
    }
    let mut commands = Vec::new();
    while p.is_sym("[") {
        commands.push(p.command()?);
    }
    p.kw("endmodule")?;
    let mut rewards = Vec::new();
    while p.is_kw("rewards") {
        rewards.push(p.rewards()?);
    }
    if p.pos < p.toks.len() {
        return p.err("end of input");
    }
    Ok(FlatSystem { name, vars: p.vars, commands, rewards, clocks: Vec::new(), time_base })
}
