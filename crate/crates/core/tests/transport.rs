mod common;

use std::f64::consts::FRAC_PI_2;

use common::*;
use geoctrl::expr::{Expr, UnaryOp};
use geoctrl::field::{lie_bracket, VectorField};
use geoctrl::ode::{StepControl, Window};
use geoctrl::transport::{
    integrate_flow, pushforward_along, pushforward_many, sample_leaf, shift_drift_set, LeafWalker, WalkPolicy,
};
use proptest::prelude::*;

/// Fields with every component squashed through `tanh`, so flows exist for
/// all time and stay within unit speed.
fn bounded_field(n: usize) -> impl Strategy<Value = VectorField> {
    proptest::collection::vec(smooth_expr(n), n)
        .prop_map(|cs| VectorField::new(cs.into_iter().map(|c| Expr::unary(UnaryOp::Tanh, c)).collect()))
}

fn tight() -> StepControl {
    StepControl::with_tolerance(1e-11)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn flow_group_law(v in bounded_field(3), x in point(3, 1.0), t in -1.0..1.0f64, s in -1.0..1.0f64) {
        let st = StepControl::default();
        let two = integrate_flow(&v, &integrate_flow(&v, &x, s, st, None).unwrap(), t, st, None).unwrap();
        let one = integrate_flow(&v, &x, t + s, st, None).unwrap();
        prop_assert!(dist(&two, &one) <= 1e-6, "{two:?} vs {one:?}");
    }

    #[test]
    fn flow_matches_rk4(v in bounded_field(2), x in point(2, 1.0), t in -1.0..1.0f64) {
        let got = integrate_flow(&v, &x, t, StepControl::default(), None).unwrap();
        let want = rk4_flow(&v, &x, t, 4000);
        prop_assert!(dist(&got, &want) <= 1e-6, "{got:?} vs {want:?}");
    }

    #[test]
    fn pushforward_composes(v in bounded_field(3), x in point(3, 1.0), eta in point(3, 1.0),
                            t in -0.8..0.8f64, s in -0.8..0.8f64) {
        let st = tight();
        let whole = pushforward_along(&v, &x, t + s, &eta, st, None).unwrap();
        let mid = integrate_flow(&v, &x, s, st, None).unwrap();
        let first = pushforward_along(&v, &x, s, &eta, st, None).unwrap();
        let staged = pushforward_along(&v, &mid, t, &first, st, None).unwrap();
        prop_assert!(dist(&whole, &staged) <= 1e-6 * norm(&whole).max(1.0));
    }

    #[test]
    fn pushforward_is_linear(v in bounded_field(2), x in point(2, 1.0), a in point(2, 1.0), b in point(2, 1.0)) {
        let st = tight();
        let mut both = vec![a.clone(), b.clone(), a.iter().zip(&b).map(|(p, q)| 2.0 * p - q).collect()];
        pushforward_many(&v, &x, 0.7, &mut both, st, None).unwrap();
        let comb: Vec<f64> = both[0].iter().zip(&both[1]).map(|(p, q)| 2.0 * p - q).collect();
        prop_assert!(dist(&comb, &both[2]) <= 1e-8);
    }
}

#[test]
fn pushforward_matches_flow_map_differences() {
    use proptest::strategy::ValueTree;
    let mut runner = proptest::test_runner::TestRunner::deterministic();
    let strat = (bounded_field(3), point(3, 1.0), point(3, 1.0), 0.2..1.0f64);
    let st = tight();
    for case in 0..20 {
        let (v, y, eta, t) = strat.new_tree(&mut runner).unwrap().current();
        let h = 1e-5;
        let shifted: Vec<f64> = y.iter().zip(&eta).map(|(a, b)| a + h * b).collect();
        let a = integrate_flow(&v, &shifted, t, st, None).unwrap();
        let b = integrate_flow(&v, &y, t, st, None).unwrap();
        let fd: Vec<f64> = a.iter().zip(&b).map(|(p, q)| (p - q) / h).collect();
        let pf = pushforward_along(&v, &y, t, &eta, st, None).unwrap();
        let rel = dist(&pf, &fd) / norm(&fd).max(1e-12);
        assert!(rel <= 1e-3, "case {case}: relative error {rel:e}");
    }
}

#[test]
fn rotation_pushforward_is_exact() {
    let rot = vf(&["-x2", "x1"]);
    let st = StepControl::default();
    let v = pushforward_along(&rot, &[0.3, -0.4], FRAC_PI_2, &[1.0, 0.0], st, None).unwrap();
    assert!(dist(&v, &[0.0, 1.0]) <= 1e-6, "{v:?}");
    let p = integrate_flow(&rot, &[1.0, 0.0], FRAC_PI_2, st, None).unwrap();
    assert!(dist(&p, &[0.0, 1.0]) <= 1e-6);
    let c = pushforward_along(&vf(&["1", "2"]), &[0.0, 0.0], 3.0, &[0.2, 0.7], st, None).unwrap();
    assert_eq!(c, vec![0.2, 0.7]);
}

/// `(ψ^{−Y}_s ψ^{−X}_s ψ^{Y}_s ψ^{X}_s (x) − x) / s²` approaches `[X, Y](x)`.
fn commutator_error(x: &VectorField, y: &VectorField, p: &[f64], t: f64) -> f64 {
    let s = t.sqrt();
    let st = StepControl { atol: 1e-14, rtol: 1e-14, ..StepControl::default() };
    let mut q = integrate_flow(x, p, s, st, None).unwrap();
    q = integrate_flow(y, &q, s, st, None).unwrap();
    q = integrate_flow(x, &q, -s, st, None).unwrap();
    q = integrate_flow(y, &q, -s, st, None).unwrap();
    let approx: Vec<f64> = q.iter().zip(p).map(|(a, b)| (a - b) / t).collect();
    dist(&approx, &lie_bracket(x, y).eval_vec(p).unwrap())
}

#[test]
fn commutator_flow_approaches_bracket() {
    let pairs = [
        (vf(&["1", "0", "-x2/2"]), vf(&["0", "1", "x1/2"]), vec![0.3, -0.2, 0.1]),
        (vf(&["0", "0", "1"]), vf(&["cos(x3)", "sin(x3)", "0"]), vec![0.0, 0.0, 0.4]),
        (vf(&["sin(x2)", "x1*x3", "1"]), vf(&["x3^2", "cos(x1)", "x2"]), vec![0.2, 0.5, -0.3]),
    ];
    for (x, y, p) in &pairs {
        let errs: Vec<f64> = [1e-2, 1e-3, 1e-4].iter().map(|&t| commutator_error(x, y, p, t)).collect();
        // Step-two nilpotent pairs reproduce the bracket exactly, leaving only rounding.
        let exact = errs.iter().all(|e| *e <= 1e-10);
        assert!(exact || (errs[0] > errs[1] && errs[1] > errs[2]), "errors not decreasing: {errs:?}");
    }
}

#[test]
fn leaves_preserve_invariants() {
    let w2 = Window::cube(2, -2.0, 2.0);
    let leaf = sample_leaf(&[vf(&["0", "1"])], &[0.7, -0.3], 100, WalkPolicy::default(), &w2, 1);
    assert!(!leaf.visits.is_empty());
    assert!(leaf.visits.iter().all(|v| (v.point[0] - 0.7).abs() <= 1e-6));

    let w3 = Window::cube(3, -2.0, 2.0);
    let plane = [vf(&["1", "0", "0"]), vf(&["0", "1", "0"])];
    let leaf = sample_leaf(&plane, &[0.0, 0.0, 0.9], 100, WalkPolicy::default(), &w3, 2);
    assert!(leaf.visits.iter().all(|v| (v.point[2] - 0.9).abs() <= 1e-6));

    let base = [0.4, -1.1, 0.2];
    let leaf = sample_leaf(&[vf(&["0", "0", "1"])], &base, 100, WalkPolicy::default(), &w3, 3);
    assert!(leaf.visits.iter().all(|v| v.point[0] == base[0] && v.point[1] == base[1]));

    // A nonlinear leaf: rotation about the x3 axis preserves x1² + x2².
    let rot = [vf(&["-x2", "x1", "0"]), vf(&["0", "0", "1"])];
    let leaf = sample_leaf(&rot, &[1.0, 0.5, 0.0], 100, WalkPolicy::default(), &w3, 4);
    assert!(leaf.visits.iter().all(|v| (v.point[0].powi(2) + v.point[1].powi(2) - 1.25).abs() <= 1e-5));
}

#[test]
fn visits_are_reproduced_by_their_words() {
    let w = Window::cube(3, -2.0, 2.0);
    let gens = [vf(&["1", "0", "-x2/2"]), vf(&["0", "1", "x1/2"])];
    let leaf = sample_leaf(&gens, &[0.0, 0.0, 0.0], 50, WalkPolicy::default(), &w, 9);
    let walker = LeafWalker {
        generators: &gens,
        guard: w.inflated(0.2),
        policy: WalkPolicy::default(),
        step: StepControl::default(),
        seed: 0,
    };
    for v in &leaf.visits {
        let again = walker.follow(&leaf.base, &v.word).unwrap();
        assert!(dist(&again, &v.point) <= 1e-9);
        let oracle = v.word.0.iter().fold(leaf.base.clone(), |p, l| rk4_flow(&gens[l.field], &p, l.time(), 2000));
        assert!(dist(&oracle, &v.point) <= 1e-6);
    }
}

#[test]
fn shift_examples() {
    let w = Window::cube(2, -2.0, 2.0);
    let g = [vf(&["0", "1"])];
    let mut leaf = sample_leaf(&g, &[0.0, 0.0], 60, WalkPolicy::default(), &w, 5);
    let shifted = shift_drift_set(&[vf(&["x2", "0"])], &g, &mut leaf, &w).unwrap();
    assert_eq!(shifted.len(), leaf.visits.len() + 1);
    for (v, s) in leaf.visits.iter().zip(&shifted[1..]) {
        assert!(dist(s, &[v.point[1], 0.0]) <= 1e-9);
    }

    let w3 = Window::new(vec![-2.0, -2.0, -3.2], vec![2.0, 2.0, 3.2]);
    let g = [vf(&["0", "0", "1"])];
    let mut leaf = sample_leaf(&g, &[0.0, 0.0, 0.0], 60, WalkPolicy::default(), &w3, 6);
    let shifted = shift_drift_set(&[vf(&["cos(x3)", "sin(x3)", "0"])], &g, &mut leaf, &w3).unwrap();
    for (v, s) in leaf.visits.iter().zip(&shifted[1..]) {
        let th = v.point[2];
        assert!(dist(s, &[th.cos(), th.sin(), 0.0]) <= 1e-8);
    }

    let mut leaf = sample_leaf(&g, &[0.0, 0.0, 0.0], 20, WalkPolicy::default(), &w3, 7);
    let zero = shift_drift_set(&[VectorField::zero(3)], &g, &mut leaf, &w3).unwrap();
    assert!(zero.iter().flatten().all(|c| *c == 0.0));
}

#[test]
fn transport_matches_rk4_variational_oracle() {
    // Drift shifted along a non-commuting generator: compare with the
    // finite-difference derivative of the RK4 flow map.
    let w = Window::cube(2, -3.0, 3.0);
    let g = [vf(&["1", "x1"])];
    let f = vf(&["0", "1"]);
    let mut leaf = sample_leaf(&g, &[0.2, 0.1], 30, WalkPolicy::default(), &w, 8);
    let shifted = shift_drift_set(std::slice::from_ref(&f), &g, &mut leaf, &w).unwrap();
    for (v, s) in leaf.visits.iter().zip(&shifted[1..]) {
        let t = v.word.0.iter().map(|l| l.time()).sum::<f64>();
        // The leaf is the flow line of g; pull f back by the total time.
        let h = 1e-6;
        let fy = f.eval_vec(&v.point).unwrap();
        let moved: Vec<f64> = v.point.iter().zip(&fy).map(|(a, b)| a + h * b).collect();
        let a = rk4_flow(&g[0], &moved, -t, 2000);
        let b = rk4_flow(&g[0], &v.point, -t, 2000);
        let fd: Vec<f64> = a.iter().zip(&b).map(|(p, q)| (p - q) / h).collect();
        assert!(dist(&fd, s) <= 1e-4 * norm(s).max(1.0), "{fd:?} vs {s:?}");
    }
}

#[test]
fn leaf_samples_are_deterministic() {
    let w = Window::cube(3, -2.0, 2.0);
    let gens = [vf(&["1", "0", "-x2/2"]), vf(&["0", "1", "x1/2"])];
    let run = |seed| {
        let mut leaf = sample_leaf(&gens, &[0.1, 0.2, 0.3], 40, WalkPolicy::default(), &w, seed);
        shift_drift_set(&[vf(&["x3", "0", "1"])], &gens, &mut leaf, &w).unwrap();
        serde_json::to_string(&leaf).unwrap()
    };
    assert_eq!(run(11), run(11));
    assert_ne!(run(11), run(12));
}
