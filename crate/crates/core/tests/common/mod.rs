//! Shared helpers for the integration tests: random expression strategies
//! and small numerical oracles that do not go through the library's own
//! differentiation or integration code.

#![allow(dead_code)]

use geoctrl::expr::{BinaryOp, Expr, UnaryOp};
use geoctrl::field::VectorField;
use geoctrl::system::SystemSpec;
use proptest::prelude::*;

pub fn vars(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("x{i}")).collect()
}

pub fn vf(src: &[&str]) -> VectorField {
    VectorField::parse(src, &vars(src.len())).expect("test field parses")
}

pub fn spec(text: &str) -> SystemSpec {
    SystemSpec::from_text(text).expect("test system parses")
}

/// Smooth expressions that are finite everywhere on bounded boxes:
/// polynomials, sin, cos, tanh, and exp of bounded arguments.
pub fn smooth_expr(n: usize) -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![(-3i32..=3).prop_map(|c| Expr::constant(c as f64 * 0.5)), (0..n).prop_map(Expr::var),];
    leaf.prop_recursive(3, 12, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(|a| Expr::unary(UnaryOp::Sin, a)),
            inner.clone().prop_map(|a| Expr::unary(UnaryOp::Cos, a)),
            inner.clone().prop_map(|a| Expr::unary(UnaryOp::Tanh, a)),
            inner.clone().prop_map(|a| Expr::unary(UnaryOp::Neg, a)),
            inner.clone().prop_map(|a| Expr::unary(UnaryOp::Exp, Expr::unary(UnaryOp::Sin, a))),
            (inner.clone(), 2u8..=3).prop_map(|(a, k)| Expr::pow(a, k as f64)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::binary(BinaryOp::Add, a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::binary(BinaryOp::Sub, a, b)),
            (inner.clone(), inner).prop_map(|(a, b)| Expr::binary(BinaryOp::Mul, a, b)),
        ]
    })
}

pub fn smooth_field(n: usize) -> impl Strategy<Value = VectorField> {
    proptest::collection::vec(smooth_expr(n), n).prop_map(VectorField::new)
}

pub fn point(n: usize, r: f64) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-r..r, n)
}

/// Central finite-difference Jacobian of `v` at `p`, `h = 1e-5`.
pub fn fd_jacobian(v: &VectorField, p: &[f64]) -> Vec<Vec<f64>> {
    let n = p.len();
    let h = 1e-5;
    let mut jac = vec![vec![0.0; n]; n];
    for j in 0..n {
        let mut a = p.to_vec();
        let mut b = p.to_vec();
        a[j] += h;
        b[j] -= h;
        let fa = v.eval_vec(&a).unwrap();
        let fb = v.eval_vec(&b).unwrap();
        for i in 0..n {
            jac[i][j] = (fa[i] - fb[i]) / (2.0 * h);
        }
    }
    jac
}

/// `[X, Y](p) = DY·X − DX·Y` with finite-difference Jacobians.
pub fn fd_bracket(x: &VectorField, y: &VectorField, p: &[f64]) -> Vec<f64> {
    let (dx, dy) = (fd_jacobian(x, p), fd_jacobian(y, p));
    let (xv, yv) = (x.eval_vec(p).unwrap(), y.eval_vec(p).unwrap());
    (0..p.len()).map(|i| (0..p.len()).map(|j| dy[i][j] * xv[j] - dx[i][j] * yv[j]).sum::<f64>()).collect()
}

/// Fixed-step classical RK4 flow of `v` for time `t` with `steps` steps.
pub fn rk4_flow(v: &VectorField, x0: &[f64], t: f64, steps: usize) -> Vec<f64> {
    let h = t / steps as f64;
    let mut x = x0.to_vec();
    let add = |a: &[f64], b: &[f64], s: f64| -> Vec<f64> { a.iter().zip(b).map(|(p, q)| p + s * q).collect() };
    for _ in 0..steps {
        let k1 = v.eval_vec(&x).unwrap();
        let k2 = v.eval_vec(&add(&x, &k1, h / 2.0)).unwrap();
        let k3 = v.eval_vec(&add(&x, &k2, h / 2.0)).unwrap();
        let k4 = v.eval_vec(&add(&x, &k3, h)).unwrap();
        for i in 0..x.len() {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    x
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

pub fn rel_close(a: f64, b: f64, rel: f64, abs: f64) -> bool {
    (a - b).abs() <= abs + rel * a.abs().max(b.abs())
}
