use std::collections::BTreeMap;

use super::lexer::{lex, lex_at, Tok, Token};
use crate::chart::{
    Alternative, Attachment, Chart, Domain, NodeId, NodeKind, Objective, Query, QueryKind, Relation,
    Transition, TransitionId, Trigger, VariableDecl, DEFAULT_RANGE, ROOT,
};
use crate::diag::{has_errors, Diagnostic, SourceSpan};
use crate::expr::{BinOp, Expr, UnOp};
use crate::num::{parse_rational, Duration, Rational, TimeUnit};

#[derive(Debug, Clone, Copy, Default)]
pub struct ParseOptions {
    /// Reject variable declarations without an explicit range.
    pub strict: bool,
}

#[derive(Debug, Clone)]
pub struct ParseResult {
    /// Present iff there are no error diagnostics.
    pub chart: Option<Chart>,
    pub diagnostics: Vec<Diagnostic>,
}

impl ParseResult {
    pub fn is_ok(&self) -> bool {
        self.chart.is_some()
    }
}

pub fn parse_chart(text: &str) -> ParseResult {
    parse_chart_with(text, ParseOptions::default())
}

pub fn parse_chart_with(text: &str, options: ParseOptions) -> ParseResult {
    let (toks, mut diagnostics) = lex(text);
    let mut p = Parser { toks, pos: 0, diags: Vec::new() };
    let chart = ChartBuilder::run(&mut p, options);
    diagnostics.append(&mut p.diags);
    let end = text.len();
    for d in &mut diagnostics {
        if let Some(s) = &mut d.span {
            s.start = s.start.min(end);
            s.end = s.end.clamp(s.start, end);
        }
    }
    let chart = if has_errors(&diagnostics) { None } else { chart };
    ParseResult { chart, diagnostics }
}

/// Parses a query formula such as `?P.min`, `?$tran.max`, `?P>0.5`,
/// `?P.min F<3650d` or `?$energy.min (countB=10)`. The result is floating;
/// callers attach it to a state.
pub fn parse_query(text: &str) -> Result<Query, Diagnostic> {
    parse_query_at(text, None).map(|(q, _)| q)
}

/// Like [`parse_query`] but also returns warnings, with spans shifted to
/// `base` when the formula is embedded in a larger file.
pub fn parse_query_at(text: &str, base: Option<SourceSpan>) -> Result<(Query, Vec<Diagnostic>), Diagnostic> {
    let (toks, diags) = match base {
        Some(b) => lex_at(text, b),
        None => lex(text),
    };
    if let Some(d) = diags.into_iter().find(Diagnostic::is_error) {
        return Err(d);
    }
    let mut p = Parser { toks, pos: 0, diags: Vec::new() };
    let q = p.query()?;
    Ok((q, p.diags))
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    diags: Vec<Diagnostic>,
}

type PResult<T> = Result<T, Diagnostic>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    fn span(&self) -> SourceSpan {
        self.toks[self.pos].span
    }

    fn prev_span(&self) -> SourceSpan {
        self.toks[self.pos.saturating_sub(1)].span
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn at(&self, t: &Tok) -> bool {
        self.peek() == t
    }

    fn at_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.at(t) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.at_kw(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn error_here(&self, expected: &str) -> Diagnostic {
        Diagnostic::error(format!("expected {expected}, found {}", self.peek().describe())).at(Some(self.span()))
    }

    fn expect(&mut self, t: Tok) -> PResult<()> {
        if self.eat(&t) {
            Ok(())
        } else {
            Err(self.error_here(&t.describe()))
        }
    }

    fn ident(&mut self, what: &str) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            _ => Err(self.error_here(what)),
        }
    }

    fn state_ref(&mut self) -> PResult<(String, SourceSpan)> {
        let start = self.span();
        let mut s = self.ident("a state name")?;
        while self.at(&Tok::Dot) && matches!(self.peek_at(1), Tok::Ident(_)) {
            self.bump();
            s.push('.');
            s.push_str(&self.ident("a state name")?);
        }
        Ok((s, start.to(self.prev_span())))
    }

    fn integer(&mut self) -> PResult<i64> {
        let neg = self.eat(&Tok::Minus);
        match self.peek().clone() {
            Tok::Number(n) if !n.contains('.') => {
                let span = self.span();
                self.bump();
                let v: i64 = n
                    .parse()
                    .map_err(|_| Diagnostic::error(format!("integer `{n}` is too large")).at(Some(span)))?;
                Ok(if neg { -v } else { v })
            }
            _ => Err(self.error_here("an integer")),
        }
    }

    fn rational(&mut self) -> PResult<Rational> {
        let start = self.span();
        let neg = self.eat(&Tok::Minus);
        let Tok::Number(n) = self.peek().clone() else {
            return Err(self.error_here("a number"));
        };
        self.bump();
        let mut text = n;
        if self.at(&Tok::Slash) && matches!(self.peek_at(1), Tok::Number(_)) {
            self.bump();
            if let Tok::Number(d) = self.bump() {
                text = format!("{text}/{d}");
            }
        }
        let r = parse_rational(&text)
            .ok_or_else(|| Diagnostic::error(format!("invalid number `{text}`")).at(Some(start.to(self.prev_span()))))?;
        Ok(if neg { -r } else { r })
    }

    fn duration(&mut self) -> PResult<Duration> {
        let value = match self.peek().clone() {
            Tok::Number(n) if !n.contains('.') => {
                let span = self.span();
                self.bump();
                n.parse::<u64>()
                    .map_err(|_| Diagnostic::error(format!("duration `{n}` is too large")).at(Some(span)))?
            }
            _ => return Err(self.error_here("time: digits followed by a unit (d, h, s, ms, µs)")),
        };
        match self.peek().clone() {
            Tok::Ident(u) => match TimeUnit::from_suffix(&u) {
                Some(unit) => {
                    self.bump();
                    Ok(Duration::new(value, unit))
                }
                None => Err(self.error_here("time unit (d, h, s, ms, µs)")),
            },
            _ => Err(self
                .error_here("time unit (d, h, s, ms, µs)")
                .with_hint(format!("write the unit explicitly, e.g. `{value}d`"))),
        }
    }

    // ---- expressions ----

    pub fn expr(&mut self) -> PResult<Expr> {
        let lhs = self.or_expr()?;
        if self.eat(&Tok::Implies) {
            let rhs = self.expr()?;
            return Ok(Expr::bin(BinOp::Implies, lhs, rhs));
        }
        Ok(lhs)
    }

    fn or_expr(&mut self) -> PResult<Expr> {
        let mut e = self.and_expr()?;
        while self.eat(&Tok::Pipe) {
            e = Expr::bin(BinOp::Or, e, self.and_expr()?);
        }
        Ok(e)
    }

    fn and_expr(&mut self) -> PResult<Expr> {
        let mut e = self.not_expr()?;
        while self.eat(&Tok::Amp) {
            e = Expr::bin(BinOp::And, e, self.not_expr()?);
        }
        Ok(e)
    }

    fn not_expr(&mut self) -> PResult<Expr> {
        if self.eat(&Tok::Bang) {
            return Ok(Expr::Unary(UnOp::Not, Box::new(self.not_expr()?)));
        }
        self.cmp_expr()
    }

    fn cmp_expr(&mut self) -> PResult<Expr> {
        let lhs = self.add_expr()?;
        let op = match self.peek() {
            Tok::Eq => BinOp::Eq,
            Tok::Ne => BinOp::Ne,
            Tok::Lt => BinOp::Lt,
            Tok::Le => BinOp::Le,
            Tok::Gt => BinOp::Gt,
            Tok::Ge => BinOp::Ge,
            _ => return Ok(lhs),
        };
        self.bump();
        let rhs = self.add_expr()?;
        Ok(Expr::bin(op, lhs, rhs))
    }

    fn add_expr(&mut self) -> PResult<Expr> {
        let mut e = self.mul_expr()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(e),
            };
            self.bump();
            e = Expr::bin(op, e, self.mul_expr()?);
        }
    }

    fn mul_expr(&mut self) -> PResult<Expr> {
        let mut e = self.unary_expr()?;
        while self.eat(&Tok::Star) {
            e = Expr::bin(BinOp::Mul, e, self.unary_expr()?);
        }
        Ok(e)
    }

    fn unary_expr(&mut self) -> PResult<Expr> {
        if self.at(&Tok::Minus) {
            if let Tok::Number(n) = self.peek_at(1).clone() {
                if !n.contains('.') {
                    return Ok(Expr::Int(self.integer()?));
                }
            }
            self.bump();
            return Ok(Expr::Unary(UnOp::Neg, Box::new(self.unary_expr()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> PResult<Expr> {
        match self.peek().clone() {
            Tok::Number(n) if !n.contains('.') => Ok(Expr::Int(self.integer()?)),
            Tok::Number(n) => Err(Diagnostic::error(format!("expressions are integer-valued; `{n}` is not"))
                .at(Some(self.span()))),
            Tok::Ident(s) if s == "true" || s == "false" => {
                self.bump();
                Ok(Expr::Bool(s == "true"))
            }
            Tok::Ident(s) if s == "in" && matches!(self.peek_at(1), Tok::Ident(_)) => {
                self.bump();
                Ok(Expr::In(self.state_ref()?.0))
            }
            Tok::Ident(s) => {
                self.bump();
                Ok(Expr::Var(s))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            _ => Err(self.error_here("an expression")),
        }
    }

    // ---- queries ----

    fn query(&mut self) -> PResult<Query> {
        if !self.eat(&Tok::Question) {
            return Err(self.error_here("`?` (Formula)"));
        }
        let kind = match self.peek().clone() {
            Tok::Ident(p) if p == "P" => {
                self.bump();
                QueryKind::Prob
            }
            Tok::Dollar => {
                self.bump();
                QueryKind::Reward(self.ident("identifier (reward ::= \"$\" identifier)")?)
            }
            Tok::Ident(name) => {
                return Err(Diagnostic::error(format!(
                    "expected probability `P` or reward `$identifier` (Formula), found `{name}`"
                ))
                .at(Some(self.span()))
                .with_hint(format!("reward names start with `$`: `?${name}`")));
            }
            _ => return Err(self.error_here("probability `P` or reward `$identifier` (Formula)")),
        };
        let objective = if self.eat(&Tok::Dot) {
            match self.peek().clone() {
                Tok::Ident(m) if m == "min" => {
                    self.bump();
                    Objective::Min
                }
                Tok::Ident(m) if m == "max" => {
                    self.bump();
                    Objective::Max
                }
                _ => return Err(self.error_here("`min` or `max` after `.` (Formula)")),
            }
        } else {
            let rel = match self.peek() {
                Tok::Lt => Relation::Lt,
                Tok::Le => Relation::Le,
                Tok::Gt => Relation::Gt,
                Tok::Ge => Relation::Ge,
                Tok::Eq => Relation::Eq,
                _ => return Err(self.error_here("`.`, `<`, `<=`, `>`, `>=` or `=` (Formula)")),
            };
            let rel_span = self.span();
            self.bump();
            if rel == Relation::Eq {
                self.diags.push(
                    Diagnostic::warning("equality thresholds hold only when minimum and maximum both equal the bound")
                        .at(Some(rel_span)),
                );
            }
            let bound = match self.peek() {
                Tok::Number(_) => self.rational()?,
                _ => return Err(self.error_here("a real bound (Formula)")),
            };
            Objective::Threshold(rel, bound)
        };
        let mut time_bound = None;
        if self.at_kw("F") && self.peek_at(1) == &Tok::Lt {
            self.bump();
            self.bump();
            time_bound = Some(self.duration()?);
        }
        let predicate = if self.at(&Tok::Eof) { None } else { Some(self.expr()?) };
        if !self.at(&Tok::Eof) {
            return Err(self.error_here("end of formula"));
        }
        Ok(Query { kind, objective, time_bound, predicate, attachment: Attachment::Floating })
    }
}

struct RawTransition {
    source: (String, SourceSpan),
    trigger: Trigger,
    guard: Expr,
    alternatives: Vec<(Rational, (String, SourceSpan), Alternative)>,
    comments: Vec<String>,
    span: SourceSpan,
    scope: NodeId,
}

struct ChartBuilder {
    chart: Chart,
    options: ParseOptions,
    transitions: Vec<RawTransition>,
    /// (text, event name, span)
    transition_notes: Vec<(String, String, SourceSpan)>,
}

impl ChartBuilder {
    fn run(p: &mut Parser, options: ParseOptions) -> Option<Chart> {
        if p.at(&Tok::Eof) {
            p.diags.push(p.error_here("chart declaration").with_hint("start the file with `chart <Name> { ... }`"));
            p.diags.last_mut().unwrap().message = "expected chart declaration".into();
            return None;
        }
        if !p.eat_kw("chart") {
            p.diags.push(p.error_here("chart declaration (`chart <Name> { ... }`)"));
            return None;
        }
        let name = match p.ident("chart name") {
            Ok(n) => n,
            Err(d) => {
                p.diags.push(d);
                return None;
            }
        };
        if let Err(d) = p.expect(Tok::LBrace) {
            p.diags.push(d);
            return None;
        }
        let mut b = ChartBuilder {
            chart: Chart::new(name),
            options,
            transitions: Vec::new(),
            transition_notes: Vec::new(),
        };
        b.chart.nodes[0].initial = None;
        b.body(p, ROOT);
        if let Err(d) = p.expect(Tok::RBrace) {
            p.diags.push(d);
        }
        if !p.at(&Tok::Eof) {
            p.diags.push(p.error_here("end of input"));
        }
        b.resolve(p);
        Some(b.chart)
    }

    /// Skips to just past the next `;` or to a `}` at the current depth.
    fn recover(p: &mut Parser) {
        let mut depth = 0usize;
        loop {
            match p.peek() {
                Tok::Eof => return,
                Tok::Semi if depth == 0 => {
                    p.bump();
                    return;
                }
                Tok::LBrace => depth += 1,
                Tok::RBrace => {
                    if depth == 0 {
                        return;
                    }
                    depth -= 1;
                    if depth == 0 {
                        p.bump();
                        return;
                    }
                }
                _ => {}
            }
            p.bump();
        }
    }

    fn body(&mut self, p: &mut Parser, node: NodeId) {
        let mut marked_initial: Vec<NodeId> = Vec::new();
        while !p.at(&Tok::RBrace) && !p.at(&Tok::Eof) {
            let start = p.pos;
            if let Err(d) = self.item(p, node, &mut marked_initial) {
                p.diags.push(d);
                if p.pos == start {
                    p.bump();
                }
                Self::recover(p);
            }
        }
        let second_span = marked_initial.get(1).and_then(|s| self.chart.source.nodes.get(s).copied());
        let n = self.chart.node_mut(node);
        if !n.children.is_empty() && n.kind == NodeKind::Basic {
            n.kind = NodeKind::Xor;
        }
        if n.kind == NodeKind::Xor {
            n.initial = match marked_initial.as_slice() {
                [] => n.children.first().copied(),
                [one] => Some(*one),
                [_, _, ..] => {
                    p.diags.push(
                        Diagnostic::error(format!("`{}` has more than one initial state", n.name)).at(second_span),
                    );
                    Some(marked_initial[0])
                }
            };
        }
    }

    fn item(&mut self, p: &mut Parser, node: NodeId, marked: &mut Vec<NodeId>) -> PResult<()> {
        let start = p.span();
        let Tok::Ident(kw) = p.peek().clone() else {
            return Err(p.error_here("a declaration (state, xor, and, var, event, on, note, formula)"));
        };
        match kw.as_str() {
            "state" | "xor" | "and" => {
                p.bump();
                let kind = match kw.as_str() {
                    "state" => NodeKind::Basic,
                    "xor" => NodeKind::Xor,
                    _ => NodeKind::And,
                };
                let name = p.ident("a state name")?;
                let id = self.chart.add_node(node, name, kind);
                self.chart.source.nodes.insert(id, start.to(p.prev_span()));
                if self.chart.node(node).kind == NodeKind::Basic {
                    self.chart.node_mut(node).kind = NodeKind::Xor;
                }
                if p.eat_kw("init") {
                    marked.push(id);
                }
                if p.eat(&Tok::LBrace) {
                    self.body(p, id);
                    p.expect(Tok::RBrace)?;
                } else {
                    p.expect(Tok::Semi)?;
                    if kind == NodeKind::Xor {
                        // an empty XOR behaves as a basic state
                        self.chart.node_mut(id).kind = NodeKind::Basic;
                    }
                }
                // parent's initial is set when its body completes
                let parent = self.chart.node_mut(node);
                if parent.kind != NodeKind::Xor {
                    parent.initial = None;
                }
            }
            "var" => {
                p.bump();
                let name = p.ident("a variable name")?;
                p.expect(Tok::Colon)?;
                let ty_span = p.span();
                let ty = p.ident("a type (int or bool)")?;
                let domain = match ty.as_str() {
                    "bool" => Domain::Bool,
                    "int" => {
                        if p.eat(&Tok::LBracket) {
                            let lo = p.integer()?;
                            p.expect(Tok::DotDot)?;
                            let hi = p.integer()?;
                            p.expect(Tok::RBracket)?;
                            Domain::Int { lo, hi }
                        } else {
                            if self.options.strict {
                                p.diags.push(
                                    Diagnostic::error(format!("variable `{name}` has no range"))
                                        .at(Some(ty_span))
                                        .with_hint("declare it as `int[lo..hi]`"),
                                );
                            }
                            DEFAULT_RANGE
                        }
                    }
                    other => {
                        return Err(Diagnostic::error(format!("unknown type `{other}`")).at(Some(ty_span)));
                    }
                };
                let initial = if p.eat(&Tok::Eq) {
                    match (domain, p.peek().clone()) {
                        (Domain::Bool, Tok::Ident(b)) if b == "true" || b == "false" => {
                            p.bump();
                            (b == "true") as i64
                        }
                        (Domain::Bool, _) => return Err(p.error_here("`true` or `false`")),
                        _ => p.integer()?,
                    }
                } else {
                    domain.bounds().0
                };
                p.expect(Tok::Semi)?;
                let idx = self.chart.variables.len();
                self.chart.variables.push(VariableDecl { name, domain, initial, scope: node });
                self.chart.source.variables.insert(idx, start.to(p.prev_span()));
            }
            "event" => {
                p.bump();
                loop {
                    let e = p.ident("an event name")?;
                    if !self.chart.events.contains(&e) {
                        self.chart.events.push(e);
                    }
                    if !p.eat(&Tok::Comma) {
                        break;
                    }
                }
                p.expect(Tok::Semi)?;
            }
            "on" => {
                p.bump();
                self.transition(p, node, start)?;
            }
            "note" => {
                p.bump();
                let Tok::Str(text) = p.bump() else {
                    return Err(Diagnostic::error("expected a string after `note`").at(Some(p.prev_span())));
                };
                if p.eat_kw("on") {
                    let ev = p.ident("the event of the commented transition")?;
                    self.transition_notes.push((text, ev, start.to(p.prev_span())));
                } else if node == ROOT {
                    self.chart.comments.push(text);
                } else {
                    self.chart.node_mut(node).comments.push(text);
                }
                p.expect(Tok::Semi)?;
            }
            "inv" => {
                p.bump();
                let e = p.expr()?;
                p.expect(Tok::Semi)?;
                let n = self.chart.node_mut(node);
                n.invariant = Some(match n.invariant.take() {
                    None => e,
                    Some(prev) => Expr::and(prev, e),
                });
            }
            "cost" => {
                p.bump();
                let reward = p.ident("a reward name")?;
                p.expect(Tok::Eq)?;
                let r = p.rational()?;
                p.expect(Tok::Semi)?;
                self.chart.node_mut(node).costs.insert(reward, r);
            }
            "query" | "formula" => {
                p.bump();
                let span = p.span();
                let Tok::Str(text) = p.bump() else {
                    return Err(Diagnostic::error(format!("expected a quoted formula after `{kw}`")).at(Some(span)));
                };
                p.expect(Tok::Semi)?;
                let mut base = span;
                base.start += 1;
                base.start_col += 1;
                let (mut q, warnings) = parse_query_at(&text, Some(base))?;
                p.diags.extend(warnings);
                if kw == "query" {
                    q.attachment = Attachment::State(node);
                }
                let id = self.chart.add_query(q);
                self.chart.source.queries.insert(id, start.to(p.prev_span()));
            }
            _ => return Err(p.error_here("a declaration (state, xor, and, var, event, on, note, formula)")),
        }
        Ok(())
    }

    fn transition(&mut self, p: &mut Parser, scope: NodeId, start: SourceSpan) -> PResult<()> {
        let trigger = if p.at_kw("after") && matches!(p.peek_at(1), Tok::Number(_)) {
            p.bump();
            Trigger::After(p.duration()?)
        } else {
            Trigger::Event(p.ident("an event name or `after <time>`")?)
        };
        if !p.eat_kw("from") {
            return Err(p.error_here("`from`"));
        }
        let source = p.state_ref()?;
        let guard = if p.eat_kw("when") { p.expr()? } else { Expr::Bool(true) };
        p.expect(Tok::Arrow)?;
        let mut alternatives = Vec::new();
        if p.eat_kw("prob") {
            p.expect(Tok::LBrace)?;
            while !p.at(&Tok::RBrace) {
                let w = p.rational()?;
                p.expect(Tok::Colon)?;
                let (target, alt) = self.alternative(p)?;
                p.expect(Tok::Semi)?;
                alternatives.push((w, target, alt));
            }
            p.expect(Tok::RBrace)?;
        } else {
            let (target, alt) = self.alternative(p)?;
            alternatives.push((Rational::from_integer(1), target, alt));
        }
        let mut comments = Vec::new();
        while p.eat_kw("note") {
            match p.bump() {
                Tok::Str(s) => comments.push(s),
                _ => return Err(Diagnostic::error("expected a string after `note`").at(Some(p.prev_span()))),
            }
        }
        if !p.eat(&Tok::Semi) && !matches!(p.toks[p.pos - 1].tok, Tok::RBrace) {
            return Err(p.error_here("`;`"));
        }
        self.transitions.push(RawTransition {
            source,
            trigger,
            guard,
            alternatives,
            comments,
            span: start.to(p.prev_span()),
            scope,
        });
        Ok(())
    }

    fn alternative(&mut self, p: &mut Parser) -> PResult<((String, SourceSpan), Alternative)> {
        let target = p.state_ref()?;
        let mut alt = Alternative::to(ROOT);
        if p.eat(&Tok::Slash) {
            loop {
                alt.broadcasts.push(p.ident("a broadcast event")?);
                if !p.eat(&Tok::Comma) {
                    break;
                }
            }
        }
        if p.eat_kw("do") {
            loop {
                let var = p.ident("a variable")?;
                p.expect(Tok::Assign)?;
                let e = p.expr()?;
                alt.assignments.push((var, e));
                if !p.eat(&Tok::Comma) {
                    break;
                }
            }
        }
        if p.eat_kw("cost") {
            loop {
                let name = p.ident("a reward name")?;
                p.expect(Tok::Eq)?;
                let r = p.rational()?;
                alt.costs.insert(name, r);
                if !p.eat(&Tok::Comma) {
                    break;
                }
            }
        }
        Ok((target, alt))
    }

    fn resolve(&mut self, p: &mut Parser) {
        let _ = self.options;
        let mut by_event: BTreeMap<String, Vec<TransitionId>> = BTreeMap::new();
        for raw in std::mem::take(&mut self.transitions) {
            let _ = raw.scope;
            let source = match self.chart.resolve_state(&raw.source.0) {
                Ok(s) => s,
                Err(msg) => {
                    p.diags.push(Diagnostic::error(msg).at(Some(raw.source.1)));
                    continue;
                }
            };
            let mut alternatives = Vec::new();
            for (w, (target, span), mut alt) in raw.alternatives {
                match self.chart.resolve_state(&target) {
                    Ok(t) => {
                        alt.target = t;
                        alt.weight = w;
                        alternatives.push(alt);
                    }
                    Err(msg) => p.diags.push(Diagnostic::error(msg).at(Some(span))),
                }
            }
            let id = self.chart.add_transition(Transition {
                source,
                trigger: raw.trigger,
                guard: raw.guard,
                alternatives,
                comments: raw.comments,
            });
            self.chart.source.transitions.insert(id, raw.span);
            if let Some(e) = self.chart.transition(id).event_name() {
                by_event.entry(e.to_string()).or_default().push(id);
            }
        }
        for (text, ev, span) in std::mem::take(&mut self.transition_notes) {
            match by_event.get(&ev).map(Vec::as_slice) {
                Some([one]) => self.chart.transitions[one.0].comments.push(text),
                Some(_) => p.diags.push(
                    Diagnostic::error(format!("`note ... on {ev}` is ambiguous: several transitions react to `{ev}`"))
                        .at(Some(span))
                        .with_hint("attach the note inline with `note \"...\"` before the transition's `;`"),
                ),
                None => p.diags.push(Diagnostic::error(format!("no transition reacts to `{ev}`")).at(Some(span))),
            }
        }
        self.canonical_order();
    }

    /// Orders variables and queries by the preorder position of their state,
    /// floating formulas last, so that printing and re-parsing is stable.
    fn canonical_order(&mut self) {
        let c = &mut self.chart;
        let mut vars: Vec<(usize, VariableDecl)> = std::mem::take(&mut c.variables).into_iter().enumerate().collect();
        vars.sort_by_key(|(_, v)| v.scope);
        let old_spans = std::mem::take(&mut c.source.variables);
        for (new, (old, v)) in vars.into_iter().enumerate() {
            if let Some(s) = old_spans.get(&old) {
                c.source.variables.insert(new, *s);
            }
            c.variables.push(v);
        }

        let mut queries: Vec<(usize, Query)> = std::mem::take(&mut c.queries).into_iter().enumerate().collect();
        queries.sort_by_key(|(_, q)| match q.attachment {
            Attachment::State(s) => s.0,
            Attachment::Floating => usize::MAX,
        });
        let old_spans = std::mem::take(&mut c.source.queries);
        for n in &mut c.nodes {
            n.queries.clear();
        }
        for (old, q) in queries {
            let id = c.add_query(q);
            if let Some(s) = old_spans.get(&crate::chart::QueryId(old)) {
                c.source.queries.insert(id, *s);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn query_forms() {
        let q = parse_query("?P.min").unwrap();
        assert_eq!((q.kind, q.objective, q.time_bound, q.predicate), (QueryKind::Prob, Objective::Min, None, None));

        let q = parse_query("?P>0.5").unwrap();
        assert_eq!(q.objective, Objective::Threshold(Relation::Gt, Rational::new(1, 2)));

        let q = parse_query("?$energy.min (countB=10)").unwrap();
        assert_eq!(q.kind, QueryKind::Reward("energy".into()));
        assert_eq!(q.objective, Objective::Min);
        assert_eq!(q.predicate, Some(Expr::bin(BinOp::Eq, Expr::var("countB"), Expr::Int(10))));

        let q = parse_query("?P.min F<3650d").unwrap();
        assert_eq!(q.time_bound, Some(Duration::new(3650, TimeUnit::Day)));

        let q = parse_query("?P.max (countA=2) & (countB<5)").unwrap();
        assert_eq!(q.objective, Objective::Max);
        assert!(matches!(q.predicate, Some(Expr::Binary(BinOp::And, ..))));
    }

    #[test]
    fn query_errors_name_the_production() {
        let e = parse_query("?tran.max").unwrap_err();
        assert!(e.message.contains("Formula"), "{}", e.message);
        assert_eq!(e.hint.as_deref(), Some("reward names start with `$`: `?$tran`"));
        assert!(parse_query("P.min").unwrap_err().message.contains("`?`"));
        assert!(parse_query("?P.avg").unwrap_err().message.contains("`min` or `max`"));
        assert!(parse_query("?P.min F<3650").unwrap_err().message.contains("time unit"));
        assert!(parse_query("?P~3").is_err());
    }

    #[test]
    fn empty_file_reports_missing_chart() {
        let r = parse_chart("");
        assert!(r.chart.is_none());
        assert_eq!(r.diagnostics.len(), 1);
        assert_eq!(r.diagnostics[0].message, "expected chart declaration");
    }

    #[test]
    fn minimal_chart() {
        let r = parse_chart("chart One { state A; }");
        let c = r.chart.unwrap();
        assert_eq!(c.nodes.len(), 2);
        assert_eq!(c.node(ROOT).initial, Some(NodeId(1)));
    }

    #[test]
    fn syntax_errors_recover_and_keep_spans_in_bounds() {
        let text = "chart X {\n state A;\n on e from A -> ;\n state B \n}";
        let r = parse_chart(text);
        assert!(r.chart.is_none());
        assert!(r.diagnostics.len() >= 2);
        for d in &r.diagnostics {
            let s = d.span.expect("span");
            assert!(s.start <= s.end && s.end <= text.len());
        }
    }

    #[test]
    fn unknown_target_is_reported() {
        let r = parse_chart("chart X { state A; on e from A -> Nowhere; }");
        assert!(r.diagnostics.iter().any(|d| d.message.contains("unknown state `Nowhere`")));
    }

    #[test]
    fn notes_attach_by_position() {
        let r = parse_chart(
            r#"chart L {
                note "general";
                state Off init { note "The light is off"; }
                state On;
                on poweron from Off -> On;
                note "switch" on poweron;
            }"#,
        );
        let c = r.chart.unwrap();
        assert_eq!(c.comments, vec!["general"]);
        assert_eq!(c.node(NodeId(1)).comments, vec!["The light is off"]);
        assert_eq!(c.transitions[0].comments, vec!["switch"]);
    }

    #[test]
    fn strict_mode_rejects_default_range() {
        let text = "chart V { var x: int = 3; state A; }";
        assert!(parse_chart(text).is_ok());
        let r = parse_chart_with(text, ParseOptions { strict: true });
        assert!(!r.is_ok());
        let c = parse_chart(text).chart.unwrap();
        assert_eq!(c.variables[0].domain, DEFAULT_RANGE);
    }
}
