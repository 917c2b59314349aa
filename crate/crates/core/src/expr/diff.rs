use super::{BinaryOp, Expr, UnaryOp};

// Builders that drop multiplications by 0/1 and additions of 0 so that the
// raw derivative stays readable before `simplify` runs.

fn add(a: Expr, b: Expr) -> Expr {
    if a.is_const(0.0) {
        b
    } else if b.is_const(0.0) {
        a
    } else {
        Expr::binary(BinaryOp::Add, a, b)
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    if b.is_const(0.0) {
        a
    } else if a.is_const(0.0) {
        neg(b)
    } else {
        Expr::binary(BinaryOp::Sub, a, b)
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    if a.is_const(0.0) || b.is_const(0.0) {
        Expr::Const(0.0)
    } else if a.is_const(1.0) {
        b
    } else if b.is_const(1.0) {
        a
    } else {
        Expr::binary(BinaryOp::Mul, a, b)
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    if a.is_const(0.0) {
        Expr::Const(0.0)
    } else if b.is_const(1.0) {
        a
    } else {
        Expr::binary(BinaryOp::Div, a, b)
    }
}

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Const(c) => Expr::Const(-c),
        Expr::Unary(UnaryOp::Neg, inner) => (*inner).clone(),
        other => Expr::unary(UnaryOp::Neg, other),
    }
}

/// Exact partial derivative with respect to variable `var`.
pub fn differentiate(e: &Expr, var: usize) -> Expr {
    match e {
        Expr::Const(_) => Expr::Const(0.0),
        Expr::Var(i) => Expr::Const(if *i == var { 1.0 } else { 0.0 }),
        Expr::Binary(op, a, b) => {
            let da = differentiate(a, var);
            let db = differentiate(b, var);
            let (a, b) = ((**a).clone(), (**b).clone());
            match op {
                BinaryOp::Add => add(da, db),
                BinaryOp::Sub => sub(da, db),
                BinaryOp::Mul => add(mul(da, b), mul(a, db)),
                BinaryOp::Div => {
                    if db.is_const(0.0) {
                        div(da, b)
                    } else {
                        div(sub(mul(da, b.clone()), mul(a, db)), Expr::pow(b, 2.0))
                    }
                }
            }
        }
        Expr::Pow(a, p) => {
            let da = differentiate(a, var);
            if da.is_const(0.0) {
                return Expr::Const(0.0);
            }
            let outer = mul(Expr::Const(*p), Expr::pow((**a).clone(), p - 1.0));
            mul(outer, da)
        }
        Expr::Unary(op, a) => {
            let da = differentiate(a, var);
            if da.is_const(0.0) {
                return Expr::Const(0.0);
            }
            let inner = (**a).clone();
            let outer = match op {
                UnaryOp::Neg => return neg(da),
                UnaryOp::Sin => Expr::unary(UnaryOp::Cos, inner),
                UnaryOp::Cos => neg(Expr::unary(UnaryOp::Sin, inner)),
                UnaryOp::Tan => add(Expr::Const(1.0), Expr::pow(Expr::unary(UnaryOp::Tan, inner), 2.0)),
                UnaryOp::Exp => Expr::unary(UnaryOp::Exp, inner),
                UnaryOp::Ln => return div(da, inner),
                UnaryOp::Sqrt => {
                    return div(da, mul(Expr::Const(2.0), Expr::unary(UnaryOp::Sqrt, inner)));
                }
                UnaryOp::Tanh => sub(Expr::Const(1.0), Expr::pow(Expr::unary(UnaryOp::Tanh, inner), 2.0)),
            };
            mul(outer, da)
        }
    }
}
