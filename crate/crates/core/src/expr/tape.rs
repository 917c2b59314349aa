use super::{pow_value, BinaryOp, EvalError, Expr, UnaryOp};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Const(f64),
    Var(usize),
    Unary(UnaryOp),
    Binary(BinaryOp),
    Pow(f64),
}

const INLINE_STACK: usize = 32;

/// Postfix program equivalent to an [`Expr`].
#[derive(Debug, Clone, PartialEq)]
pub struct Tape {
    ops: Vec<Op>,
    max_depth: usize,
    max_var: Option<usize>,
}

impl Tape {
    pub fn compile(e: &Expr) -> Tape {
        let mut ops = Vec::new();
        emit(e, &mut ops);
        let mut depth = 0usize;
        let mut max_depth = 0usize;
        for op in &ops {
            match op {
                Op::Const(_) | Op::Var(_) => depth += 1,
                Op::Binary(_) => depth -= 1,
                Op::Unary(_) | Op::Pow(_) => {}
            }
            max_depth = max_depth.max(depth);
        }
        Tape { ops, max_depth, max_var: e.max_var() }
    }

    pub fn eval(&self, p: &[f64]) -> Result<f64, EvalError> {
        if let Some(m) = self.max_var {
            if m >= p.len() {
                return Err(EvalError::Dimension { expected: m + 1, got: p.len() });
            }
        }
        let v = if self.max_depth <= INLINE_STACK {
            let mut stack = [0.0f64; INLINE_STACK];
            self.run(p, &mut stack)?
        } else {
            let mut stack = vec![0.0f64; self.max_depth];
            self.run(p, &mut stack)?
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite)
        }
    }

    fn run(&self, p: &[f64], stack: &mut [f64]) -> Result<f64, EvalError> {
        let mut sp = 0usize;
        for op in &self.ops {
            match *op {
                Op::Const(c) => {
                    stack[sp] = c;
                    sp += 1;
                }
                Op::Var(i) => {
                    stack[sp] = p[i];
                    sp += 1;
                }
                Op::Unary(u) => stack[sp - 1] = u.apply(stack[sp - 1])?,
                Op::Binary(b) => {
                    sp -= 1;
                    stack[sp - 1] = b.apply(stack[sp - 1], stack[sp])?;
                }
                Op::Pow(e) => stack[sp - 1] = pow_value(stack[sp - 1], e)?,
            }
        }
        Ok(stack[0])
    }
}

fn emit(e: &Expr, ops: &mut Vec<Op>) {
    match e {
        Expr::Const(c) => ops.push(Op::Const(*c)),
        Expr::Var(i) => ops.push(Op::Var(*i)),
        Expr::Unary(op, a) => {
            emit(a, ops);
            ops.push(Op::Unary(*op));
        }
        Expr::Binary(op, a, b) => {
            emit(a, ops);
            emit(b, ops);
            ops.push(Op::Binary(*op));
        }
        Expr::Pow(a, p) => {
            emit(a, ops);
            ops.push(Op::Pow(*p));
        }
    }
}
