//! Acceptance suite. Runs each criterion in turn, prints one PASS/FAIL line
//! with its runtime, and exits non-zero if any criterion fails or overruns.
//! Pass criterion numbers as arguments to run a subset.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod common;

use std::f64::consts::{PI, TAU};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use common::*;
use geoctrl::convex::{interior_convex_test, DEFAULT_MARGIN};
use geoctrl::criterion::{
    check_condition, global_verdict, switched_condition, verify_supporting_distribution, Analysis, GlobalVerdict,
    Status, SupportConclusion, Witness,
};
use geoctrl::expr::{differentiate, Expr, UnaryOp};
use geoctrl::field::{lie_bracket, VectorField};
use geoctrl::metrics::{estimate_cost, loop_length, sr_distance, MetricOptions};
use geoctrl::ode::StepControl;
use geoctrl::reach::{cross_validate, monotone_witness_check, simulate_reach, Agreement, OracleBudget};
use geoctrl::system::{load_spec, Settings, SystemSpec};
use geoctrl::transport::{integrate_flow, pushforward_along};
use proptest::strategy::{Strategy, ValueTree};
use proptest::test_runner::TestRunner;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn specs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../specs")
}

fn bundled(name: &str) -> SystemSpec {
    load_spec(specs_dir().join(name)).expect("bundled spec loads")
}

fn draw<S: Strategy>(strategy: &S, runner: &mut TestRunner) -> S::Value {
    strategy.new_tree(runner).expect("strategy draws").current()
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn symbolic_suite() -> Outcome {
    let mut runner = TestRunner::deterministic();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let fields = smooth_field(3);

    for _ in 0..100 {
        let (x, y) = (draw(&fields, &mut runner), draw(&fields, &mut runner));
        let p: Vec<f64> = (0..3).map(|_| rng.random_range(-1.5..1.5)).collect();
        let a = lie_bracket(&x, &y).eval_vec(&p).map_err(err)?;
        let b = lie_bracket(&y, &x).eval_vec(&p).map_err(err)?;
        for (u, v) in a.iter().zip(&b) {
            ensure!((u + v).abs() <= 1e-12 * u.abs().max(1.0), "antisymmetry: {u} vs {v}");
        }
    }

    let mut worst_jacobi: f64 = 0.0;
    for _ in 0..10 {
        let (x, y, z) = (draw(&fields, &mut runner), draw(&fields, &mut runner), draw(&fields, &mut runner));
        let terms = [
            lie_bracket(&lie_bracket(&x, &y), &z),
            lie_bracket(&lie_bracket(&y, &z), &x),
            lie_bracket(&lie_bracket(&z, &x), &y),
        ];
        for _ in 0..100 {
            let p: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let v: Vec<Vec<f64>> = terms.iter().map(|t| t.eval_vec(&p)).collect::<Result<_, _>>().map_err(err)?;
            for i in 0..3 {
                let scale = v.iter().map(|t| t[i].abs()).fold(1.0, f64::max);
                let r = (v[0][i] + v[1][i] + v[2][i]).abs() / scale;
                worst_jacobi = worst_jacobi.max(r);
            }
        }
    }
    ensure!(worst_jacobi <= 1e-9, "jacobi residual {worst_jacobi:e}");

    let exprs = smooth_expr(3);
    let mut worst_deriv: f64 = 0.0;
    for _ in 0..200 {
        let e = draw(&exprs, &mut runner);
        let p: Vec<f64> = (0..3).map(|_| rng.random_range(-1.5..1.5)).collect();
        let var = rng.random_range(0..3);
        let d = differentiate(&e, var).evaluate(&p).map_err(err)?;
        let h = 1e-5;
        let (mut a, mut b) = (p.clone(), p.clone());
        a[var] += h;
        b[var] -= h;
        let fd = (e.evaluate(&a).map_err(err)? - e.evaluate(&b).map_err(err)?) / (2.0 * h);
        worst_deriv = worst_deriv.max((d - fd).abs() / d.abs().max(fd.abs()).max(1.0));
    }
    ensure!(worst_deriv <= 1e-6, "derivative vs finite difference {worst_deriv:e}");

    let st = StepControl { atol: 1e-14, rtol: 1e-14, ..StepControl::default() };
    let pairs = [
        (vf(&["0", "0", "1"]), vf(&["cos(x3)", "sin(x3)", "0"]), [0.0, 0.0, 0.4]),
        (vf(&["sin(x2)", "x1*x3", "1"]), vf(&["x3^2", "cos(x1)", "x2"]), [0.2, 0.5, -0.3]),
        (vf(&["1", "0", "x2^2"]), vf(&["0", "1", "0"]), [0.1, 0.3, 0.0]),
    ];
    for (x, y, p) in &pairs {
        let exact = lie_bracket(x, y).eval_vec(p).map_err(err)?;
        let mut errs = Vec::new();
        for t in [1e-2, 1e-3, 1e-4f64] {
            let s = t.sqrt();
            let mut q = integrate_flow(x, p, s, st, None).map_err(err)?;
            q = integrate_flow(y, &q, s, st, None).map_err(err)?;
            q = integrate_flow(x, &q, -s, st, None).map_err(err)?;
            q = integrate_flow(y, &q, -s, st, None).map_err(err)?;
            let approx: Vec<f64> = q.iter().zip(p).map(|(a, b)| (a - b) / t).collect();
            errs.push(dist(&approx, &exact));
        }
        ensure!(errs[0] > errs[1] && errs[1] > errs[2], "commutator errors not decreasing: {errs:?}");
    }
    Ok(format!("jacobi {worst_jacobi:.1e}, derivative {worst_deriv:.1e}"))
}

fn transport_suite() -> Outcome {
    let mut runner = TestRunner::deterministic();
    let bounded = proptest::collection::vec(smooth_expr(3), 3)
        .prop_map(|cs| VectorField::new(cs.into_iter().map(|c| Expr::unary(UnaryOp::Tanh, c)).collect()));
    let strat = (bounded, point(3, 1.0), point(3, 1.0), 0.2..1.0f64);
    let st = StepControl::with_tolerance(1e-11);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let (v, y, eta, t) = draw(&strat, &mut runner);
        let h = 1e-5;
        let shifted: Vec<f64> = y.iter().zip(&eta).map(|(a, b)| a + h * b).collect();
        let a = integrate_flow(&v, &shifted, t, st, None).map_err(err)?;
        let b = integrate_flow(&v, &y, t, st, None).map_err(err)?;
        let fd: Vec<f64> = a.iter().zip(&b).map(|(p, q)| (p - q) / h).collect();
        let pf = pushforward_along(&v, &y, t, &eta, st, None).map_err(err)?;
        worst = worst.max(dist(&pf, &fd) / norm(&fd).max(1e-12));
    }
    ensure!(worst <= 1e-3, "pushforward vs flow-map differences {worst:e}");

    let rot = vf(&["-x2", "x1"]);
    let mut rot_err: f64 = 0.0;
    for (x, t, eta) in
        [([0.3, -0.4], PI / 2.0, [1.0, 0.0]), ([1.0, 1.0], 1.0, [0.5, -2.0]), ([0.0, 0.0], -2.5, [0.0, 1.0])]
    {
        let v = pushforward_along(&rot, &x, t, &eta, StepControl::default(), None).map_err(err)?;
        let (c, s) = (t.cos(), t.sin());
        rot_err = rot_err.max(dist(&v, &[c * eta[0] - s * eta[1], s * eta[0] + c * eta[1]]));
    }
    ensure!(rot_err <= 1e-6, "rotation pushforward error {rot_err:e}");
    Ok(format!("pushforward {worst:.1e}, rotation {rot_err:.1e}"))
}

fn first_covector(v: &GlobalVerdict) -> Option<(Vec<f64>, Vec<f64>)> {
    v.failing_points().find_map(|p| match &p.witness {
        Witness::Covector { quotient, ambient, .. } => Some((quotient.clone(), ambient.clone())),
        _ => None,
    })
}

fn agreement(system: &SystemSpec, verdict: &GlobalVerdict, settings: &Settings) -> Result<(Agreement, String), String> {
    let analysis = Analysis::new(system, settings).map_err(err)?;
    let budget = OracleBudget::from_spec(system);
    let r = cross_validate(verdict, system, &analysis, &budget, system.budgets.seed, settings).map_err(err)?;
    let worst = r
        .checks
        .iter()
        .filter_map(|c| Some(c.coverage_forward?.min(c.coverage_reverse?)))
        .fold(f64::INFINITY, f64::min);
    let detail = if worst.is_finite() {
        format!("min coverage {worst:.3}")
    } else {
        format!("{} witness checks", r.checks.len())
    };
    Ok((r.overall, detail))
}

fn codim_one_plane() -> Outcome {
    let settings = Settings::default();
    let start = Instant::now();
    let shear = bundled("planar_shear.sys");
    ensure!(shear.budgets.n_traj == 2000 && shear.budgets.horizon == 20.0, "shear budgets changed");
    let v = global_verdict(&shear, &settings).map_err(err)?;
    ensure!(v.status == Status::ControllableCertified, "shear verdict {}", v.status.as_str());
    let (flag, shear_detail) = agreement(&shear, &v, &settings)?;
    ensure!(flag == Agreement::Agree, "shear oracle {} ({shear_detail})", flag.as_str());
    let shear_time = start.elapsed();
    ensure!(shear_time < Duration::from_secs(60), "shear took {shear_time:?}");
    let start = Instant::now();

    let mono = bundled("planar_monotone.sys");
    let v = global_verdict(&mono, &settings).map_err(err)?;
    ensure!(v.status == Status::UncontrollableEvidence, "monotone verdict {}", v.status.as_str());
    let (d, ambient) = first_covector(&v).ok_or("monotone verdict has no covector witness")?;
    ensure!(dist(&ambient, &[1.0, 0.0]) <= 1e-9, "witness {ambient:?}");
    let analysis = Analysis::new(&mono, &settings).map_err(err)?;
    let x0 = [0.0, 0.0];
    let proj = analysis.projection_at(&x0, &settings).map_err(err)?;
    let cloud = simulate_reach(&mono, &x0, 20.0, 2000, &OracleBudget::from_spec(&mono).policy, 0.1, 7, settings.exec)
        .map_err(err)?;
    ensure!(cloud.trajectories == 2000, "simulated {} trajectories", cloud.trajectories);
    ensure!(monotone_witness_check(&cloud, &proj, &d, 1e-6), "monotone witness check failed");
    let low = cloud.points.iter().map(|p| p.x[0]).fold(f64::INFINITY, f64::min);
    ensure!(low >= x0[0] - 1e-6, "a trajectory reached x1 = {low}");
    let (flag, _) = agreement(&mono, &v, &settings)?;
    ensure!(flag == Agreement::Agree, "monotone oracle {}", flag.as_str());
    let mono_time = start.elapsed();
    ensure!(mono_time < Duration::from_secs(60), "monotone system took {mono_time:?}");
    Ok(format!(
        "shear {shear_detail} in {:.1} s; monotone min x1 {low:.2e} over {} points in {:.1} s",
        shear_time.as_secs_f64(),
        cloud.points.len(),
        mono_time.as_secs_f64()
    ))
}

fn codim_one_space() -> Outcome {
    let settings = Settings::default();
    let sheet = bundled("sine_sheet.sys");
    let v = global_verdict(&sheet, &settings).map_err(err)?;
    ensure!(v.status == Status::ControllableCertified, "verdict {}", v.status.as_str());
    for p in &v.points {
        let det = p.determinant.as_ref().ok_or(format!("no determinant path at {:?}", p.base))?;
        ensure!(det.holds == p.condition_holds, "paths disagree at {:?}", p.base);
    }
    Ok(format!("{} base points, both paths agree", v.points.len()))
}

fn codim_two() -> Outcome {
    let settings = Settings::default();
    let uni = bundled("unicycle.sys");
    let v = global_verdict(&uni, &settings).map_err(err)?;
    ensure!(v.status == Status::ControllableCertified, "unicycle verdict {}", v.status.as_str());
    ensure!(v.points.iter().all(|p| p.condition_holds), "condition fails at some grid point");
    ensure!(v.errors.is_empty(), "grid point errors: {:?}", v.errors);
    let (flag, detail) = agreement(&uni, &v, &settings)?;
    ensure!(flag == Agreement::Agree, "unicycle oracle {} ({detail})", flag.as_str());

    let biased = bundled("unicycle_biased.sys");
    let b = global_verdict(&biased, &settings).map_err(err)?;
    ensure!(b.status == Status::UncontrollableEvidence, "biased verdict {}", b.status.as_str());
    ensure!(b.points.iter().all(|p| !p.condition_holds), "condition holds somewhere on the biased unicycle");
    // The covector bisects the occupied arc of directions, which the finite
    // leaf sample fixes only approximately.
    let mut worst_angle: f64 = 0.0;
    for p in &b.points {
        match &p.witness {
            Witness::Covector { ambient, .. } => worst_angle = worst_angle.max(ambient[1].atan2(ambient[0]).abs()),
            w => return Err(format!("witness {w:?} at {:?}", p.base)),
        }
    }
    ensure!(worst_angle <= 0.05, "witness off (1, 0) by {worst_angle} rad");
    let (flag, _) = agreement(&biased, &b, &settings)?;
    ensure!(flag == Agreement::Agree, "biased oracle {}", flag.as_str());
    Ok(format!("unicycle {detail}; biased witness within {worst_angle:.1e} rad of (1, 0)"))
}

fn supporting_distribution() -> Outcome {
    let settings = Settings::default();
    let biased = bundled("unicycle_biased.sys");
    let ok = verify_supporting_distribution(&biased, &biased.support, &settings).map_err(err)?;
    for (name, c) in [("a", &ok.clause_a), ("b", &ok.clause_b), ("c", &ok.clause_c), ("d", &ok.clause_d)] {
        ensure!(c.holds, "clause ({name}) fails at {:?}", c.failing_points);
    }
    ensure!(ok.conclusion == SupportConclusion::NotControllable, "conclusion {:?}", ok.conclusion);
    let bad = verify_supporting_distribution(&biased, &[vf(&["0", "x3", "0"])], &settings).map_err(err)?;
    ensure!(!bad.clause_b.holds, "non-invariant candidate passed clause (b)");
    ensure!(bad.conclusion == SupportConclusion::CandidateRejected, "conclusion {:?}", bad.conclusion);
    Ok(format!("{} grid points checked", ok.clause_b.checked))
}

fn switched() -> Outcome {
    let settings = Settings::default();
    let sw = bundled("switched_unicycle.sys");
    let v = global_verdict(&sw, &settings).map_err(err)?;
    ensure!(v.status == Status::ControllableCertified, "verdict {}", v.status.as_str());
    ensure!(v.points.iter().all(|p| p.condition_holds), "condition fails at some point");

    let uni = bundled("unicycle.sys");
    let analysis = Analysis::new(&uni, &settings).map_err(err)?;
    let bases = uni.window.grid(3);
    for (i, x) in bases.iter().enumerate() {
        let seed = 100 + i as u64;
        let p = check_condition(&uni, &analysis, x, 64, seed, &settings).map_err(err)?;
        let q = switched_condition(&uni, &analysis, &uni.drifts, x, 64, seed, &settings).map_err(err)?;
        let (a, b) = (serde_json::to_string(&p).map_err(err)?, serde_json::to_string(&q).map_err(err)?);
        ensure!(a == b, "single-drift family differs at {x:?}");
    }
    Ok(format!("{} switched points hold; {} single-drift points identical", v.points.len(), bases.len()))
}

fn convex_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let dirs: Vec<(f64, f64)> = (0..10_000).map(|j| (TAU * j as f64 / 10_000.0).sin_cos()).collect();
    let mut disagreements = 0;
    let mut inside = 0;
    for _ in 0..1000 {
        let m = rng.random_range(1..=12);
        let shift: f64 = if rng.random_bool(0.5) { rng.random_range(0.0..1.5) } else { 0.0 };
        let phi: f64 = rng.random_range(0.0..TAU);
        let pts: Vec<Vec<f64>> = (0..m)
            .map(|_| {
                vec![rng.random_range(-1.0..1.0) + shift * phi.cos(), rng.random_range(-1.0..1.0) + shift * phi.sin()]
            })
            .collect();
        let brute = !dirs.iter().any(|(s, c)| pts.iter().all(|p| c * p[0] + s * p[1] >= -1e-12));
        let v = interior_convex_test(&pts, DEFAULT_MARGIN).map_err(err)?;
        inside += v.inside as usize;
        disagreements += (v.inside != brute) as usize;
    }
    ensure!(disagreements == 0, "{disagreements} disagreements");
    Ok(format!("0 disagreements, {inside} of 1000 sets contain the origin"))
}

fn metrics_suite() -> Outcome {
    let opts = MetricOptions::default();
    let line =
        geoctrl::system::SystemSpec::from_text("vars = x1, x2\ndrift = 1, 0\ncontrol = 0, 1\nwindow = -2:2, -2:2\n")
            .map_err(err)?;
    let fwd = estimate_cost(&line, &[0.0, 0.0], &[1.0, 0.0], 256, &opts, 1).map_err(err)?;
    let fv = fwd.value.ok_or("forward cost unreachable")?;
    ensure!(fv <= 1e-3, "d((0,0),(1,0)) = {fv}");
    let back = estimate_cost(&line, &[1.0, 0.0], &[0.0, 0.0], 256, &opts, 1).map_err(err)?;
    ensure!(back.is_unreachable(), "reverse cost {:?}", back.value);

    let shear = bundled("shear_loops.sys");
    let budget = shear.budgets.metric_budget;
    let mut at_zero: f64 = 0.0;
    for x in [[0.5, 0.0], [-1.0, 0.0]] {
        let e = loop_length(&shear, &x, budget, &opts, 2).map_err(err)?;
        let v = e.value.ok_or(format!("no loop found at {x:?}"))?;
        at_zero = at_zero.max(v);
    }
    ensure!(at_zero <= 0.05, "loop at a drift zero {at_zero}");
    let mut away = f64::INFINITY;
    for x in [[0.0, 1.0], [1.0, -1.0]] {
        let v = loop_length(&shear, &x, budget, &opts, 2).map_err(err)?.value.unwrap_or(f64::INFINITY);
        away = away.min(v);
    }
    ensure!(away >= 0.1, "loop away from zeros {away}");

    let (x, y) = ([0.5, 0.0], [-0.5, 0.5]);
    let mut prev = [f64::INFINITY; 3];
    for b in [8, 32, 128] {
        let vals = [
            estimate_cost(&shear, &x, &y, b, &opts, 3).map_err(err)?.value,
            sr_distance(&shear, &x, &y, b, &opts, 3).map_err(err)?.value,
            loop_length(&shear, &[0.0, 1.0], b, &opts, 3).map_err(err)?.value,
        ];
        for (i, (p, v)) in prev.iter_mut().zip(vals).enumerate() {
            let v = v.unwrap_or(f64::INFINITY);
            ensure!(v <= *p, "estimator {i} rose from {p} to {v} at budget {b}");
            *p = v;
        }
    }
    Ok(format!("max loop at zeros {at_zero:.1e}, min loop away {away:.3}"))
}

fn determinism() -> Outcome {
    let spec = specs_dir().join("unicycle.sys");
    let run = || {
        std::process::Command::new(env!("CARGO_BIN_EXE_geoctrl"))
            .args(["check", spec.to_str().unwrap(), "--seed", "11"])
            .output()
            .map_err(err)
    };
    let (a, b) = (run()?, run()?);
    ensure!(a.status.success() && b.status.success(), "exit {:?} / {:?}", a.status.code(), b.status.code());
    ensure!(!a.stdout.is_empty(), "empty report");
    ensure!(a.stdout == b.stdout, "reports differ");
    Ok(format!("{} identical bytes", a.stdout.len()))
}

type Criterion = (u32, &'static str, u64, fn() -> Outcome);

const CRITERIA: [Criterion; 10] = [
    (1, "symbolic correctness", 10, symbolic_suite),
    (2, "transport", 10, transport_suite),
    (3, "codimension one in the plane", 120, codim_one_plane),
    (4, "codimension one in space", 60, codim_one_space),
    (5, "codimension two", 120, codim_two),
    (6, "supporting distribution", 30, supporting_distribution),
    (7, "switched families", 60, switched),
    (8, "convex test exactness", 10, convex_exactness),
    (9, "metrics", 120, metrics_suite),
    (10, "determinism", 60, determinism),
];

fn main() {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, limit, run) in CRITERIA {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or(p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(d) if elapsed > Duration::from_secs(limit) => Err(format!("{d}; over the {limit} s limit")),
            o => o,
        };
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(e) => ("FAIL", e),
        };
        failed += outcome.is_err() as usize;
        println!("{tag} criterion {id:>2}: {name} ({:.1} s, limit {limit} s): {detail}", elapsed.as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
