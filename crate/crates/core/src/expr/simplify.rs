//! Light-weight simplification: constant folding, 0/1 identities and
//! cancellation of like terms in sums and like factors in products.
//! Nothing here rewrites trigonometric or transcendental identities.

use std::sync::Arc;

use super::{pow_value, BinaryOp, Expr, UnaryOp};

pub fn simplify(e: &Expr) -> Expr {
    match e {
        Expr::Const(_) | Expr::Var(_) => e.clone(),
        Expr::Unary(UnaryOp::Neg, _) | Expr::Binary(BinaryOp::Add | BinaryOp::Sub, _, _) => {
            let mut sum = Sum::default();
            sum.collect(e, 1.0);
            sum.build()
        }
        Expr::Binary(BinaryOp::Mul, _, _) => {
            let mut prod = Product::default();
            prod.collect(e);
            prod.build()
        }
        Expr::Binary(BinaryOp::Div, a, b) => {
            let a = simplify(a);
            let b = simplify(b);
            match (a.as_const(), b.as_const()) {
                (Some(x), Some(y)) if y != 0.0 => Expr::Const(x / y),
                (Some(0.0), _) => Expr::Const(0.0),
                (_, Some(1.0)) => a,
                (_, Some(y)) if y != 0.0 => simplify(&Expr::binary(BinaryOp::Mul, Expr::Const(1.0 / y), a)),
                _ => Expr::binary(BinaryOp::Div, a, b),
            }
        }
        Expr::Unary(op, a) => {
            let a = simplify(a);
            if let Some(c) = a.as_const() {
                if let Ok(v) = op.apply(c) {
                    if v.is_finite() {
                        return Expr::Const(v);
                    }
                }
            }
            Expr::unary(*op, a)
        }
        Expr::Pow(a, p) => {
            let a = simplify(a);
            if *p == 1.0 {
                return a;
            }
            if *p == 0.0 {
                return Expr::Const(1.0);
            }
            if let Some(c) = a.as_const() {
                if let Ok(v) = pow_value(c, *p) {
                    if v.is_finite() {
                        return Expr::Const(v);
                    }
                }
            }
            if let Expr::Pow(inner, q) = &a {
                if p.fract() == 0.0 && q.fract() == 0.0 {
                    return simplify(&Expr::Pow(inner.clone(), p * q));
                }
            }
            Expr::Pow(Arc::new(a), *p)
        }
    }
}

/// Splits a simplified expression into `coefficient * rest`.
fn split_coefficient(e: Expr) -> (f64, Option<Expr>) {
    match e {
        Expr::Const(c) => (c, None),
        Expr::Unary(UnaryOp::Neg, a) => {
            let (c, rest) = split_coefficient((*a).clone());
            (-c, rest)
        }
        Expr::Binary(BinaryOp::Mul, a, b) => match a.as_const() {
            Some(c) => (c, Some((*b).clone())),
            None => (1.0, Some(Expr::Binary(BinaryOp::Mul, a, b))),
        },
        other => (1.0, Some(other)),
    }
}

#[derive(Default)]
struct Sum {
    constant: f64,
    terms: Vec<(f64, Expr)>,
}

impl Sum {
    fn collect(&mut self, e: &Expr, sign: f64) {
        match e {
            Expr::Binary(BinaryOp::Add, a, b) => {
                self.collect(a, sign);
                self.collect(b, sign);
            }
            Expr::Binary(BinaryOp::Sub, a, b) => {
                self.collect(a, sign);
                self.collect(b, -sign);
            }
            Expr::Unary(UnaryOp::Neg, a) => self.collect(a, -sign),
            other => {
                let s = simplify(other);
                if matches!(s, Expr::Binary(BinaryOp::Add | BinaryOp::Sub, _, _) | Expr::Unary(UnaryOp::Neg, _)) {
                    self.collect_simplified(&s, sign);
                } else {
                    self.push(s, sign);
                }
            }
        }
    }

    // Same as `collect` for trees whose leaves are already simplified.
    fn collect_simplified(&mut self, e: &Expr, sign: f64) {
        match e {
            Expr::Binary(BinaryOp::Add, a, b) => {
                self.collect_simplified(a, sign);
                self.collect_simplified(b, sign);
            }
            Expr::Binary(BinaryOp::Sub, a, b) => {
                self.collect_simplified(a, sign);
                self.collect_simplified(b, -sign);
            }
            Expr::Unary(UnaryOp::Neg, a) => self.collect_simplified(a, -sign),
            other => self.push(other.clone(), sign),
        }
    }

    fn push(&mut self, e: Expr, sign: f64) {
        let (c, rest) = split_coefficient(e);
        match rest {
            None => self.constant += sign * c,
            Some(r) => match self.terms.iter_mut().find(|(_, t)| *t == r) {
                Some(entry) => entry.0 += sign * c,
                None => self.terms.push((sign * c, r)),
            },
        }
    }

    fn build(self) -> Expr {
        let mut acc: Option<Expr> = None;
        for (c, t) in self.terms.into_iter().filter(|(c, _)| *c != 0.0) {
            let mag = c.abs();
            let term = if mag == 1.0 { t } else { Expr::binary(BinaryOp::Mul, Expr::Const(mag), t) };
            acc = Some(match acc {
                None if c < 0.0 => Expr::unary(UnaryOp::Neg, term),
                None => term,
                Some(a) if c < 0.0 => Expr::binary(BinaryOp::Sub, a, term),
                Some(a) => Expr::binary(BinaryOp::Add, a, term),
            });
        }
        match acc {
            None => Expr::Const(self.constant),
            Some(a) if self.constant == 0.0 => a,
            Some(a) if self.constant < 0.0 => Expr::binary(BinaryOp::Sub, a, Expr::Const(-self.constant)),
            Some(a) => Expr::binary(BinaryOp::Add, a, Expr::Const(self.constant)),
        }
    }
}

struct Product {
    coefficient: f64,
    factors: Vec<(Expr, f64)>,
}

impl Default for Product {
    fn default() -> Self {
        Product { coefficient: 1.0, factors: Vec::new() }
    }
}

impl Product {
    fn collect(&mut self, e: &Expr) {
        match e {
            Expr::Binary(BinaryOp::Mul, a, b) => {
                self.collect(a);
                self.collect(b);
            }
            other => {
                let s = simplify(other);
                self.push(s);
            }
        }
    }

    fn push(&mut self, e: Expr) {
        match e {
            Expr::Const(c) => self.coefficient *= c,
            Expr::Unary(UnaryOp::Neg, a) => {
                self.coefficient = -self.coefficient;
                self.push((*a).clone());
            }
            Expr::Binary(BinaryOp::Mul, a, b) => {
                self.push((*a).clone());
                self.push((*b).clone());
            }
            Expr::Pow(base, p) => self.push_factor((*base).clone(), p),
            other => self.push_factor(other, 1.0),
        }
    }

    fn push_factor(&mut self, base: Expr, p: f64) {
        match self.factors.iter_mut().find(|(b, _)| *b == base) {
            // Merging is only value-preserving for integer exponents.
            Some(entry) if entry.1.fract() == 0.0 && p.fract() == 0.0 => entry.1 += p,
            _ => self.factors.push((base, p)),
        }
    }

    fn build(self) -> Expr {
        if self.coefficient == 0.0 {
            return Expr::Const(0.0);
        }
        let mut acc: Option<Expr> = None;
        for (base, p) in self.factors {
            let f = if p == 0.0 {
                continue;
            } else if p == 1.0 {
                base
            } else {
                Expr::pow(base, p)
            };
            acc = Some(match acc {
                None => f,
                Some(a) => Expr::binary(BinaryOp::Mul, a, f),
            });
        }
        match acc {
            None => Expr::Const(self.coefficient),
            Some(a) if self.coefficient == 1.0 => a,
            Some(a) if self.coefficient == -1.0 => Expr::unary(UnaryOp::Neg, a),
            Some(a) => Expr::binary(BinaryOp::Mul, Expr::Const(self.coefficient), a),
        }
    }
}
