//! Symbolic expressions over the state variables of a system.
//!
//! Expressions are immutable trees with shared children. Evaluation goes
//! through a compiled postfix [`Tape`] so that the integrators do not walk
//! the tree on every right-hand-side call.

mod diff;
mod parse;
mod simplify;
mod tape;

use std::fmt;
use std::sync::Arc;

pub use diff::differentiate;
pub use parse::{parse_expression, ParseError, ParseErrorKind};
pub use simplify::simplify;
pub use tape::Tape;

use thiserror::Error;

/// Errors raised while evaluating an expression at a point.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("domain error: {func} is undefined at {arg}")]
    Domain { func: &'static str, arg: f64 },
    #[error("division by zero")]
    DivisionByZero,
    #[error("non-finite value produced")]
    NonFinite,
    #[error("point has {got} coordinates, expected {expected}")]
    Dimension { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Tan,
    Exp,
    Ln,
    Sqrt,
    Tanh,
}

impl UnaryOp {
    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "-",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Tan => "tan",
            UnaryOp::Exp => "exp",
            UnaryOp::Ln => "ln",
            UnaryOp::Sqrt => "sqrt",
            UnaryOp::Tanh => "tanh",
        }
    }

    pub(crate) fn from_name(name: &str) -> Option<UnaryOp> {
        Some(match name {
            "sin" => UnaryOp::Sin,
            "cos" => UnaryOp::Cos,
            "tan" => UnaryOp::Tan,
            "exp" => UnaryOp::Exp,
            "ln" => UnaryOp::Ln,
            "sqrt" => UnaryOp::Sqrt,
            "tanh" => UnaryOp::Tanh,
            _ => return None,
        })
    }

    pub(crate) fn apply(self, a: f64) -> Result<f64, EvalError> {
        Ok(match self {
            UnaryOp::Neg => -a,
            UnaryOp::Sin => a.sin(),
            UnaryOp::Cos => a.cos(),
            UnaryOp::Tan => a.tan(),
            UnaryOp::Exp => a.exp(),
            UnaryOp::Ln => {
                if a <= 0.0 {
                    return Err(EvalError::Domain { func: "ln", arg: a });
                }
                a.ln()
            }
            UnaryOp::Sqrt => {
                if a < 0.0 {
                    return Err(EvalError::Domain { func: "sqrt", arg: a });
                }
                a.sqrt()
            }
            UnaryOp::Tanh => a.tanh(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinaryOp {
    fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinaryOp::Add | BinaryOp::Sub => 1,
            BinaryOp::Mul | BinaryOp::Div => 2,
        }
    }

    pub(crate) fn apply(self, a: f64, b: f64) -> Result<f64, EvalError> {
        Ok(match self {
            BinaryOp::Add => a + b,
            BinaryOp::Sub => a - b,
            BinaryOp::Mul => a * b,
            BinaryOp::Div => {
                if b == 0.0 {
                    return Err(EvalError::DivisionByZero);
                }
                a / b
            }
        })
    }
}

/// Expression tree. Powers always carry a constant exponent.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Unary(UnaryOp, Arc<Expr>),
    Binary(BinaryOp, Arc<Expr>, Arc<Expr>),
    Pow(Arc<Expr>, f64),
}

pub(crate) fn pow_value(base: f64, exponent: f64) -> Result<f64, EvalError> {
    if exponent.fract() == 0.0 && exponent.abs() <= i32::MAX as f64 {
        if base == 0.0 && exponent < 0.0 {
            return Err(EvalError::DivisionByZero);
        }
        Ok(base.powi(exponent as i32))
    } else {
        if base < 0.0 {
            return Err(EvalError::Domain { func: "pow", arg: base });
        }
        if base == 0.0 && exponent < 0.0 {
            return Err(EvalError::DivisionByZero);
        }
        Ok(base.powf(exponent))
    }
}

impl Expr {
    pub fn constant(c: f64) -> Expr {
        Expr::Const(c)
    }

    pub fn var(i: usize) -> Expr {
        Expr::Var(i)
    }

    pub fn unary(op: UnaryOp, a: Expr) -> Expr {
        Expr::Unary(op, Arc::new(a))
    }

    pub fn binary(op: BinaryOp, a: Expr, b: Expr) -> Expr {
        Expr::Binary(op, Arc::new(a), Arc::new(b))
    }

    pub fn pow(a: Expr, exponent: f64) -> Expr {
        Expr::Pow(Arc::new(a), exponent)
    }

    pub fn is_const(&self, c: f64) -> bool {
        matches!(self, Expr::Const(v) if *v == c)
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(v) => Some(*v),
            _ => None,
        }
    }

    /// Largest variable index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Const(_) => None,
            Expr::Var(i) => Some(*i),
            Expr::Unary(_, a) | Expr::Pow(a, _) => a.max_var(),
            Expr::Binary(_, a, b) => match (a.max_var(), b.max_var()) {
                (Some(x), Some(y)) => Some(x.max(y)),
                (x, y) => x.or(y),
            },
        }
    }

    /// Tree-walking evaluation. Prefer [`Tape`] in hot loops.
    pub fn evaluate(&self, p: &[f64]) -> Result<f64, EvalError> {
        let v = self.eval_rec(p)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite)
        }
    }

    fn eval_rec(&self, p: &[f64]) -> Result<f64, EvalError> {
        match self {
            Expr::Const(c) => Ok(*c),
            Expr::Var(i) => p.get(*i).copied().ok_or(EvalError::Dimension { expected: i + 1, got: p.len() }),
            Expr::Unary(op, a) => op.apply(a.eval_rec(p)?),
            Expr::Binary(op, a, b) => op.apply(a.eval_rec(p)?, b.eval_rec(p)?),
            Expr::Pow(a, e) => pow_value(a.eval_rec(p)?, *e),
        }
    }

    pub fn compile(&self) -> Tape {
        Tape::compile(self)
    }

    /// Formats with the given variable names instead of `x1..xn`.
    pub fn display_with<'a>(&'a self, names: &'a [String]) -> impl fmt::Display + 'a {
        Named { expr: self, names: Some(names) }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Const(c) if *c < 0.0 => 0,
            Expr::Const(_) | Expr::Var(_) => 5,
            Expr::Unary(UnaryOp::Neg, _) => 3,
            Expr::Unary(_, _) => 5,
            Expr::Binary(op, _, _) => op.precedence(),
            Expr::Pow(_, _) => 4,
        }
    }
}

struct Named<'a> {
    expr: &'a Expr,
    names: Option<&'a [String]>,
}

fn fmt_number(c: f64, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if c.fract() == 0.0 && c.abs() < 1e15 {
        write!(f, "{}", c as i64)
    } else {
        write!(f, "{c:?}")
    }
}

impl Named<'_> {
    fn child<'b>(&'b self, e: &'b Expr) -> Named<'b> {
        Named { expr: e, names: self.names }
    }

    fn write_at(&self, e: &Expr, min_prec: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if e.precedence() < min_prec {
            write!(f, "({})", self.child(e))
        } else {
            write!(f, "{}", self.child(e))
        }
    }
}

impl fmt::Display for Named<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.expr {
            Expr::Const(c) => fmt_number(*c, f),
            Expr::Var(i) => match self.names.and_then(|n| n.get(*i)) {
                Some(name) => write!(f, "{name}"),
                None => write!(f, "x{}", i + 1),
            },
            Expr::Unary(UnaryOp::Neg, a) => {
                write!(f, "-")?;
                self.write_at(a, 3, f)
            }
            Expr::Unary(op, a) => write!(f, "{}({})", op.name(), self.child(a)),
            Expr::Binary(op, a, b) => {
                let p = op.precedence();
                self.write_at(a, p, f)?;
                write!(f, " {} ", op.symbol())?;
                self.write_at(b, p + 1, f)
            }
            Expr::Pow(a, e) => {
                self.write_at(a, 5, f)?;
                write!(f, "^")?;
                fmt_number(*e, f)
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        Named { expr: self, names: None }.fmt(f)
    }
}
