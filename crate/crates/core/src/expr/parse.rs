//! Recursive-descent parser for the expression grammar:
//!
//! ```text
//! expr   := term (("+"|"-") term)*
//! term   := factor (("*"|"/") factor)*
//! factor := "-" factor | base ("^" number)?
//! base   := number | ident | func "(" expr ")" | "(" expr ")"
//! func   := "sin"|"cos"|"tan"|"exp"|"ln"|"sqrt"|"tanh"
//! ```
//!
//! Exponents may carry a leading minus sign (`x1^-1`). The identifier `pi`
//! names the constant unless it is declared as a variable.

use std::fmt;

use thiserror::Error;

use super::{BinaryOp, Expr, UnaryOp};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{kind} at line {line}, column {column}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub line: usize,
    pub column: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParseErrorKind {
    UnexpectedChar(char),
    InvalidNumber(String),
    UnexpectedToken { found: String, expected: &'static str },
    UnexpectedEnd,
    UnclosedParen,
    UnknownIdentifier(String),
    Arity { func: String, expected: usize, got: usize },
    NotAFunction(String),
    VariableExponent,
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseErrorKind::UnexpectedChar(c) => write!(f, "unexpected character {c:?}"),
            ParseErrorKind::InvalidNumber(s) => write!(f, "invalid number literal {s:?}"),
            ParseErrorKind::UnexpectedToken { found, expected } => {
                write!(f, "syntax error: found {found}, expected {expected}")
            }
            ParseErrorKind::UnexpectedEnd => write!(f, "syntax error: unexpected end of input"),
            ParseErrorKind::UnclosedParen => write!(f, "syntax error: unclosed parenthesis"),
            ParseErrorKind::UnknownIdentifier(name) => write!(f, "unknown identifier {name:?}"),
            ParseErrorKind::Arity { func, expected, got } => {
                write!(f, "arity mismatch: {func} takes {expected} argument(s), got {got}")
            }
            ParseErrorKind::NotAFunction(name) => write!(f, "{name:?} is not a function"),
            ParseErrorKind::VariableExponent => {
                write!(f, "exponent must be a numeric literal")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("identifier {s:?}"),
            Tok::Plus => "'+'".into(),
            Tok::Minus => "'-'".into(),
            Tok::Star => "'*'".into(),
            Tok::Slash => "'/'".into(),
            Tok::Caret => "'^'".into(),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::Comma => "','".into(),
            Tok::End => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Pos {
    line: usize,
    column: usize,
}

fn lex(src: &str) -> Result<Vec<(Tok, Pos)>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut line, mut col) = (1usize, 1usize);
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, column: col };
        if c == '\n' {
            line += 1;
            col = 1;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        let single = match c {
            '+' => Some(Tok::Plus),
            '-' => Some(Tok::Minus),
            '*' => Some(Tok::Star),
            '/' => Some(Tok::Slash),
            '^' => Some(Tok::Caret),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            ',' => Some(Tok::Comma),
            _ => None,
        };
        if let Some(t) = single {
            out.push((t, pos));
            i += 1;
            col += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || c == '.' {
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let v: f64 = text.parse().map_err(|_| ParseError {
                kind: ParseErrorKind::InvalidNumber(text.clone()),
                line: pos.line,
                column: pos.column,
            })?;
            out.push((Tok::Num(v), pos));
        } else if c.is_alphabetic() || c == '_' {
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push((Tok::Ident(chars[start..i].iter().collect()), pos));
        } else {
            return Err(ParseError { kind: ParseErrorKind::UnexpectedChar(c), line: pos.line, column: pos.column });
        }
        col += i - start;
    }
    out.push((Tok::End, Pos { line, column: col }));
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(Tok, Pos)>,
    at: usize,
    vars: &'a [String],
}

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn pos(&self) -> Pos {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> (Tok, Pos) {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn err_at(&self, kind: ParseErrorKind, pos: Pos) -> ParseError {
        ParseError { kind, line: pos.line, column: pos.column }
    }

    fn unexpected(&self, expected: &'static str) -> ParseError {
        let kind = match self.peek() {
            Tok::End => ParseErrorKind::UnexpectedEnd,
            t => ParseErrorKind::UnexpectedToken { found: t.describe(), expected },
        };
        self.err_at(kind, self.pos())
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinaryOp::Add,
                Tok::Minus => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinaryOp::Mul,
                Tok::Slash => BinaryOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.factor()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Minus {
            self.bump();
            let inner = self.factor()?;
            return Ok(Expr::unary(UnaryOp::Neg, inner));
        }
        let base = self.base()?;
        if *self.peek() != Tok::Caret {
            return Ok(base);
        }
        self.bump();
        let negative = if *self.peek() == Tok::Minus {
            self.bump();
            true
        } else {
            false
        };
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                let e = if negative { -v } else { v };
                Ok(Expr::pow(base, e))
            }
            Tok::Ident(_) | Tok::LParen => Err(self.err_at(ParseErrorKind::VariableExponent, self.pos())),
            _ => Err(self.unexpected("numeric exponent")),
        }
    }

    /// Parses `( expr )` after the opening parenthesis has been consumed.
    /// Returns the number of comma-separated arguments found.
    fn parenthesized(&mut self, open: Pos) -> Result<(Expr, usize), ParseError> {
        let close_err = |e: ParseError, p: &Self| {
            if e.kind == ParseErrorKind::UnexpectedEnd {
                p.err_at(ParseErrorKind::UnclosedParen, open)
            } else {
                e
            }
        };
        let first = self.expr().map_err(|e| close_err(e, self))?;
        let mut count = 1;
        while *self.peek() == Tok::Comma {
            self.bump();
            self.expr().map_err(|e| close_err(e, self))?;
            count += 1;
        }
        match self.peek() {
            Tok::RParen => {
                self.bump();
                Ok((first, count))
            }
            Tok::End => Err(self.err_at(ParseErrorKind::UnclosedParen, open)),
            _ => Err(self.unexpected("')'")),
        }
    }

    fn base(&mut self) -> Result<Expr, ParseError> {
        let (tok, pos) = self.bump();
        match tok {
            Tok::Num(v) => Ok(Expr::Const(v)),
            Tok::LParen => {
                let (e, count) = self.parenthesized(pos)?;
                if count != 1 {
                    return Err(
                        self.err_at(ParseErrorKind::UnexpectedToken { found: "','".into(), expected: "')'" }, pos)
                    );
                }
                Ok(e)
            }
            Tok::Ident(name) => {
                if let Some(op) = UnaryOp::from_name(&name) {
                    if *self.peek() != Tok::LParen {
                        return Err(self.err_at(ParseErrorKind::Arity { func: name, expected: 1, got: 0 }, pos));
                    }
                    let (_, open) = self.bump();
                    let (arg, count) = self.parenthesized(open)?;
                    if count != 1 {
                        return Err(self.err_at(ParseErrorKind::Arity { func: name, expected: 1, got: count }, pos));
                    }
                    return Ok(Expr::unary(op, arg));
                }
                let found = self.vars.iter().position(|v| *v == name);
                let e = match found {
                    Some(i) => Expr::Var(i),
                    None if name == "pi" => Expr::Const(std::f64::consts::PI),
                    None => {
                        return Err(self.err_at(ParseErrorKind::UnknownIdentifier(name), pos));
                    }
                };
                if *self.peek() == Tok::LParen {
                    return Err(self.err_at(ParseErrorKind::NotAFunction(name), pos));
                }
                Ok(e)
            }
            Tok::End => Err(self.err_at(ParseErrorKind::UnexpectedEnd, pos)),
            other => Err(self.err_at(
                ParseErrorKind::UnexpectedToken { found: other.describe(), expected: "number, identifier or '('" },
                pos,
            )),
        }
    }
}

/// Parses `src` over the declared variable names.
pub fn parse_expression<S: AsRef<str>>(src: &str, var_names: &[S]) -> Result<Expr, ParseError> {
    let vars: Vec<String> = var_names.iter().map(|s| s.as_ref().to_string()).collect();
    let mut p = Parser { toks: lex(src)?, at: 0, vars: &vars };
    let e = p.expr()?;
    match p.peek() {
        Tok::End => Ok(e),
        Tok::RParen => Err(p.unexpected("operator or end of input")),
        _ => Err(p.unexpected("operator or end of input")),
    }
}
