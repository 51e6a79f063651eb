use crate::diag::{Diagnostic, SourceSpan};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    /// Digits with an optional fractional part, kept as written.
    Number(String),
    Str(String),
    LBrace,
    RBrace,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Semi,
    Colon,
    Comma,
    Dot,
    DotDot,
    Slash,
    Arrow,
    Assign,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Amp,
    Pipe,
    Bang,
    Implies,
    Plus,
    Minus,
    Star,
    Dollar,
    Question,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Number(n) => format!("number `{n}`"),
            Tok::Str(_) => "string".into(),
            Tok::Eof => "end of input".into(),
            other => format!("`{}`", other.text()),
        }
    }

    fn text(&self) -> &'static str {
        match self {
            Tok::LBrace => "{",
            Tok::RBrace => "}",
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBracket => "[",
            Tok::RBracket => "]",
            Tok::Semi => ";",
            Tok::Colon => ":",
            Tok::Comma => ",",
            Tok::Dot => ".",
            Tok::DotDot => "..",
            Tok::Slash => "/",
            Tok::Arrow => "->",
            Tok::Assign => ":=",
            Tok::Eq => "=",
            Tok::Ne => "!=",
            Tok::Lt => "<",
            Tok::Le => "<=",
            Tok::Gt => ">",
            Tok::Ge => ">=",
            Tok::Amp => "&",
            Tok::Pipe => "|",
            Tok::Bang => "!",
            Tok::Implies => "=>",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Star => "*",
            Tok::Dollar => "$",
            Tok::Question => "?",
            _ => "",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub span: SourceSpan,
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_' || c == 'µ' || c == 'μ'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

struct Cursor<'a> {
    text: &'a str,
    pos: usize,
    line: u32,
    col: u32,
    /// Added to every span so that embedded texts report outer positions.
    base: SourceSpan,
}

impl Cursor<'_> {
    fn peek(&self) -> Option<char> {
        self.text[self.pos..].chars().next()
    }

    fn peek2(&self) -> Option<char> {
        let mut it = self.text[self.pos..].chars();
        it.next();
        it.next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn mark(&self) -> (usize, u32, u32) {
        (self.pos, self.line, self.col)
    }

    fn span_from(&self, (pos, line, col): (usize, u32, u32)) -> SourceSpan {
        let shift_col = |l: u32, c: u32| if l == 1 { c + self.base.start_col - 1 } else { c };
        SourceSpan {
            start: pos + self.base.start,
            end: self.pos + self.base.start,
            start_line: line + self.base.start_line - 1,
            start_col: shift_col(line, col),
            end_line: self.line + self.base.start_line - 1,
            end_col: shift_col(self.line, self.col),
        }
    }
}

/// Splits `text` into tokens. Lexical errors are reported and the offending
/// character skipped, so the token stream always ends with `Eof`.
pub fn lex(text: &str) -> (Vec<Token>, Vec<Diagnostic>) {
    lex_at(text, SourceSpan { start: 0, end: 0, start_line: 1, start_col: 1, end_line: 1, end_col: 1 })
}

pub fn lex_at(text: &str, base: SourceSpan) -> (Vec<Token>, Vec<Diagnostic>) {
    let mut cur = Cursor { text, pos: 0, line: 1, col: 1, base };
    let mut out = Vec::new();
    let mut diags = Vec::new();
    loop {
        // whitespace and line comments
        loop {
            match cur.peek() {
                Some(c) if c.is_whitespace() => {
                    cur.bump();
                }
                Some('/') if cur.peek2() == Some('/') => {
                    while !matches!(cur.peek(), None | Some('\n')) {
                        cur.bump();
                    }
                }
                _ => break,
            }
        }
        let start = cur.mark();
        let Some(c) = cur.peek() else {
            out.push(Token { tok: Tok::Eof, span: cur.span_from(start) });
            break;
        };
        let tok = if is_ident_start(c) {
            let mut s = String::new();
            s.push(c);
            cur.bump();
            while let Some(c) = cur.peek().filter(|c| is_ident_char(*c)) {
                s.push(c);
                cur.bump();
            }
            Tok::Ident(s)
        } else if c.is_ascii_digit() {
            let mut s = String::new();
            while let Some(c) = cur.peek().filter(char::is_ascii_digit) {
                s.push(c);
                cur.bump();
            }
            if cur.peek() == Some('.') && cur.peek2().is_some_and(|d| d.is_ascii_digit()) {
                s.push('.');
                cur.bump();
                while let Some(c) = cur.peek().filter(char::is_ascii_digit) {
                    s.push(c);
                    cur.bump();
                }
            }
            Tok::Number(s)
        } else if c == '"' {
            cur.bump();
            let mut s = String::new();
            let mut closed = false;
            while let Some(c) = cur.bump() {
                match c {
                    '"' => {
                        closed = true;
                        break;
                    }
                    '\\' => match cur.bump() {
                        Some('n') => s.push('\n'),
                        Some(other) => s.push(other),
                        None => break,
                    },
                    other => s.push(other),
                }
            }
            if !closed {
                diags.push(Diagnostic::error("unterminated string literal").at(Some(cur.span_from(start))));
            }
            Tok::Str(s)
        } else {
            cur.bump();
            let two = |cur: &mut Cursor, next: char, yes: Tok, no: Tok| {
                if cur.peek() == Some(next) {
                    cur.bump();
                    yes
                } else {
                    no
                }
            };
            match c {
                '{' => Tok::LBrace,
                '}' => Tok::RBrace,
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                '[' => Tok::LBracket,
                ']' => Tok::RBracket,
                ';' => Tok::Semi,
                ',' => Tok::Comma,
                '/' => Tok::Slash,
                '&' => Tok::Amp,
                '|' => Tok::Pipe,
                '+' => Tok::Plus,
                '*' => Tok::Star,
                '$' => Tok::Dollar,
                '?' => Tok::Question,
                ':' => two(&mut cur, '=', Tok::Assign, Tok::Colon),
                '.' => two(&mut cur, '.', Tok::DotDot, Tok::Dot),
                '-' => two(&mut cur, '>', Tok::Arrow, Tok::Minus),
                '!' => two(&mut cur, '=', Tok::Ne, Tok::Bang),
                '<' => two(&mut cur, '=', Tok::Le, Tok::Lt),
                '>' => two(&mut cur, '=', Tok::Ge, Tok::Gt),
                '=' => two(&mut cur, '>', Tok::Implies, Tok::Eq),
                other => {
                    diags.push(
                        Diagnostic::error(format!("unexpected character `{other}`")).at(Some(cur.span_from(start))),
                    );
                    continue;
                }
            }
        };
        out.push(Token { tok, span: cur.span_from(start) });
    }
    (out, diags)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexes_query_text() {
        let (toks, diags) = lex("?$energy.min (countB=10) F<3650d");
        assert!(diags.is_empty());
        let kinds: Vec<Tok> = toks.into_iter().map(|t| t.tok).collect();
        assert_eq!(
            kinds,
            vec![
                Tok::Question,
                Tok::Dollar,
                Tok::Ident("energy".into()),
                Tok::Dot,
                Tok::Ident("min".into()),
                Tok::LParen,
                Tok::Ident("countB".into()),
                Tok::Eq,
                Tok::Number("10".into()),
                Tok::RParen,
                Tok::Ident("F".into()),
                Tok::Lt,
                Tok::Number("3650".into()),
                Tok::Ident("d".into()),
                Tok::Eof,
            ]
        );
    }

    #[test]
    fn spans_track_lines_and_bad_chars() {
        let (toks, diags) = lex("a\n  #b");
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].span.unwrap().start_line, 2);
        assert_eq!(toks[1].span.start_col, 4);
        assert_eq!(toks[1].span.start, 5);
    }
}
