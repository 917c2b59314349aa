//! Vector fields on a window of ℝⁿ: symbolic components plus compiled tapes.

use std::fmt;
use std::sync::{Arc, OnceLock};

use crate::expr::{differentiate, parse_expression, simplify, BinaryOp, EvalError, Expr, ParseError, Tape, UnaryOp};

/// An n-tuple of expressions, compiled on construction.
#[derive(Clone)]
pub struct VectorField {
    components: Vec<Expr>,
    tapes: Vec<Tape>,
    jacobian: OnceLock<Arc<CompiledJacobian>>,
}

/// Compiled `∂Vⁱ/∂xʲ`, row-major.
#[derive(Debug)]
pub struct CompiledJacobian {
    n: usize,
    entries: Vec<Option<Tape>>,
}

impl CompiledJacobian {
    /// Writes the Jacobian at `p` into `out` (row-major, n×n).
    pub fn eval(&self, p: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        for (slot, entry) in out.iter_mut().zip(&self.entries) {
            *slot = match entry {
                Some(t) => t.eval(p)?,
                None => 0.0,
            };
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// `out = J(p) · v`, skipping structurally zero entries.
    pub fn apply(&self, p: &[f64], v: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        let n = self.n;
        for (row, o) in self.entries.chunks(n.max(1)).zip(out.iter_mut()) {
            let mut acc = 0.0;
            for (t, vj) in row.iter().zip(v) {
                if let Some(t) = t {
                    acc += t.eval(p)? * vj;
                }
            }
            *o = acc;
        }
        Ok(())
    }
}

impl VectorField {
    pub fn new(components: Vec<Expr>) -> VectorField {
        let tapes = components.iter().map(Tape::compile).collect();
        VectorField { components, tapes, jacobian: OnceLock::new() }
    }

    /// Parses one expression per component.
    pub fn parse<S: AsRef<str>, V: AsRef<str>>(sources: &[S], vars: &[V]) -> Result<VectorField, ParseError> {
        let comps = sources.iter().map(|s| parse_expression(s.as_ref(), vars)).collect::<Result<Vec<_>, _>>()?;
        Ok(VectorField::new(comps))
    }

    pub fn constant(values: &[f64]) -> VectorField {
        VectorField::new(values.iter().map(|&v| Expr::Const(v)).collect())
    }

    pub fn zero(n: usize) -> VectorField {
        VectorField::constant(&vec![0.0; n])
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Expr] {
        &self.components
    }

    pub fn eval(&self, p: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        for (slot, t) in out.iter_mut().zip(&self.tapes) {
            *slot = t.eval(p)?;
        }
        Ok(())
    }

    pub fn eval_vec(&self, p: &[f64]) -> Result<Vec<f64>, EvalError> {
        let mut out = vec![0.0; self.dim()];
        self.eval(p, &mut out)?;
        Ok(out)
    }

    /// Symbolic Jacobian, entry `(i, j) = ∂Vⁱ/∂xʲ`.
    pub fn jacobian(&self) -> Vec<Vec<Expr>> {
        let n = self.dim();
        self.components.iter().map(|c| (0..n).map(|j| simplify(&differentiate(c, j))).collect()).collect()
    }

    pub fn compiled_jacobian(&self) -> Arc<CompiledJacobian> {
        self.jacobian
            .get_or_init(|| {
                let n = self.dim();
                let entries = self
                    .jacobian()
                    .into_iter()
                    .flatten()
                    .map(|e| if e.is_const(0.0) { None } else { Some(e.compile()) })
                    .collect();
                Arc::new(CompiledJacobian { n, entries })
            })
            .clone()
    }

    pub fn scaled(&self, c: f64) -> VectorField {
        VectorField::new(
            self.components.iter().map(|e| simplify(&Expr::binary(BinaryOp::Mul, Expr::Const(c), e.clone()))).collect(),
        )
    }

    pub fn negated(&self) -> VectorField {
        VectorField::new(self.components.iter().map(|e| simplify(&Expr::unary(UnaryOp::Neg, e.clone()))).collect())
    }

    /// True when every component simplifies to the constant zero.
    pub fn is_zero(&self) -> bool {
        self.components.iter().all(|e| e.is_const(0.0))
    }

    pub fn display_with<'a>(&'a self, names: &'a [String]) -> impl fmt::Display + 'a {
        struct D<'a>(&'a VectorField, &'a [String]);
        impl fmt::Display for D<'_> {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "(")?;
                for (i, c) in self.0.components.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{}", c.display_with(self.1))?;
                }
                write!(f, ")")
            }
        }
        D(self, names)
    }
}

impl PartialEq for VectorField {
    fn eq(&self, other: &Self) -> bool {
        self.components == other.components
    }
}

impl fmt::Debug for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "VectorField{self}")
    }
}

impl fmt::Display for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.components.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// `[X, Y] = (DY)·X − (DX)·Y`, simplified.
///
/// # Panics
/// If the two fields have different dimensions.
pub fn lie_bracket(x: &VectorField, y: &VectorField) -> VectorField {
    assert_eq!(x.dim(), y.dim(), "lie_bracket: dimension mismatch");
    let n = x.dim();
    let comps = (0..n)
        .map(|i| {
            let mut terms = Vec::with_capacity(2 * n);
            for j in 0..n {
                let dy = differentiate(&y.components[i], j);
                if !dy.is_const(0.0) {
                    terms.push(Expr::binary(BinaryOp::Mul, dy, x.components[j].clone()));
                }
            }
            for j in 0..n {
                let dx = differentiate(&x.components[i], j);
                if !dx.is_const(0.0) {
                    terms.push(Expr::unary(UnaryOp::Neg, Expr::binary(BinaryOp::Mul, dx, y.components[j].clone())));
                }
            }
            let sum = terms.into_iter().reduce(|a, b| Expr::binary(BinaryOp::Add, a, b)).unwrap_or(Expr::Const(0.0));
            simplify(&sum)
        })
        .collect();
    VectorField::new(comps)
}

/// Dense Jacobian grid of symbolic entries.
pub fn jacobian(v: &VectorField) -> Vec<Vec<Expr>> {
    v.jacobian()
}
