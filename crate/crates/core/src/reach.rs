//! Monte-Carlo reachability: random admissible controls, point clouds,
//! occupancy coverage, and the oracle that cross-checks verdicts.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::criterion::{Analysis, GlobalVerdict, QuotientProjection, Status, Witness};
use crate::error::Error;
use crate::field::VectorField;
use crate::ode::{Dopri5, StepControl, Window, ESCAPE_INFLATION};
use crate::par::{self, derive_seed, Exec};
use crate::system::{Settings, SystemSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    /// Each control uniform in `[−A, A]` per segment.
    PiecewiseConstantRandom,
    /// Each control `±A` per segment.
    BangBang,
    /// Steer toward random targets, redrawn once reached: each segment keeps
    /// the best of a few candidate controls by a two-piece look-ahead.
    GreedyTowardTarget,
    /// Trajectory `i` uses the three kinds above in turn (`i mod 3`).
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ControlPolicy {
    pub kind: PolicyKind,
    pub amplitude: f64,
    pub min_duration: f64,
    pub max_duration: f64,
}

impl Default for ControlPolicy {
    fn default() -> Self {
        ControlPolicy { kind: PolicyKind::Mixed, amplitude: 5.0, min_duration: 0.05, max_duration: 0.5 }
    }
}

impl ControlPolicy {
    pub fn new(kind: PolicyKind, amplitude: f64, durations: (f64, f64)) -> Result<ControlPolicy, Error> {
        let p = ControlPolicy { kind, amplitude, min_duration: durations.0, max_duration: durations.1 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), Error> {
        if !(self.amplitude > 0.0) {
            return Err(Error::InvalidArgument("control amplitude must be positive".into()));
        }
        if !(self.min_duration > 0.0 && self.min_duration <= self.max_duration) {
            return Err(Error::InvalidArgument("segment durations must be positive and ordered".into()));
        }
        Ok(())
    }

    fn kind_for(&self, traj: usize) -> PolicyKind {
        match self.kind {
            PolicyKind::Mixed => {
                [PolicyKind::PiecewiseConstantRandom, PolicyKind::BangBang, PolicyKind::GreedyTowardTarget][traj % 3]
            }
            k => k,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CloudPoint {
    pub traj: usize,
    pub t: f64,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReachCloud {
    pub origin: Vec<f64>,
    pub horizon: f64,
    pub trajectories: usize,
    /// Trajectories cut short by leaving the inflated window.
    pub escaped: usize,
    pub window: Window,
    pub points: Vec<CloudPoint>,
}

impl ReachCloud {
    /// Occupied cells of a `cells_per_axis`ⁿ grid over `window`, row-major.
    pub fn occupancy(&self, window: &Window, cells_per_axis: usize) -> Vec<bool> {
        let c = cells_per_axis.max(1);
        let n = window.dim();
        let mut occ = vec![false; c.pow(n as u32)];
        for p in &self.points {
            if let Some(i) = cell_index(window, c, &p.x) {
                occ[i] = true;
            }
        }
        occ
    }
}

fn cell_index(window: &Window, c: usize, x: &[f64]) -> Option<usize> {
    if !window.contains(x) {
        return None;
    }
    let mut idx = 0;
    for (i, &xi) in x.iter().enumerate() {
        let frac = (xi - window.lo[i]) / (window.hi[i] - window.lo[i]);
        let cell = ((frac * c as f64).floor() as usize).min(c - 1);
        idx = idx * c + cell;
    }
    Some(idx)
}

/// Fraction of occupied cells.
pub fn coverage(cloud: &ReachCloud, window: &Window, cells_per_axis: usize) -> f64 {
    let occ = cloud.occupancy(window, cells_per_axis);
    occ.iter().filter(|b| **b).count() as f64 / occ.len() as f64
}

struct Trajectory {
    points: Vec<CloudPoint>,
    escaped: bool,
}

/// Integrates `f + Σ uⁱgᵢ` for time `t` in `chunks` equal pieces, folding
/// the window-scaled distance to `target` into `best` after each piece.
/// Returns the number of pieces completed before leaving `guard`.
#[allow(clippy::too_many_arguments)]
fn hold(
    f: &VectorField,
    controls: &[VectorField],
    u: &[f64],
    y: &mut [f64],
    t: f64,
    chunks: usize,
    target: &[f64],
    window: &Window,
    guard: &Window,
    best: &mut f64,
) -> usize {
    let mut buf = vec![0.0; y.len()];
    let mut ig = Dopri5::new(y.len(), StepControl::with_tolerance(1e-6));
    for done in 0..chunks {
        let ok = ig.advance(
            |p, out| {
                f.eval(p, out)?;
                for (g, ui) in controls.iter().zip(u) {
                    g.eval(p, &mut buf)?;
                    out.iter_mut().zip(&buf).for_each(|(o, b)| *o += ui * b);
                }
                Ok(())
            },
            y,
            t / chunks as f64,
            Some(guard),
        );
        if ok.is_err() {
            return done;
        }
        *best = best.min(scaled_dist(y, target, window));
    }
    chunks
}

/// Greedy score of holding drift `active` and controls `u` for `tau`: each
/// (drift, controls) continuation in `follow` is
/// held for `LOOKAHEAD` afterwards and the best is kept. The score is
/// `(lost, dist)`, compared lexicographically: time lost to an escape from
/// `guard`, then the closest approach to `target` at the checkpoints.
#[allow(clippy::too_many_arguments)]
fn rollout_score(
    drifts: &[VectorField],
    controls: &[VectorField],
    (active, u): (usize, &[f64]),
    follow: &[Choice],
    x: &[f64],
    tau: f64,
    target: &[f64],
    window: &Window,
    guard: &Window,
) -> (f64, f64) {
    let mut y = x.to_vec();
    let mut first = f64::INFINITY;
    let done = hold(&drifts[active], controls, u, &mut y, tau, 2, target, window, guard, &mut first);
    if done < 2 {
        return (LOOKAHEAD + tau * (2 - done) as f64 / 2.0, first);
    }
    let mut best = (f64::INFINITY, f64::INFINITY);
    for (j, v) in follow {
        let mut z = y.clone();
        let mut dist = first;
        let done = hold(&drifts[*j], controls, v, &mut z, LOOKAHEAD, 4, target, window, guard, &mut dist);
        let score = (LOOKAHEAD * (4 - done) as f64 / 4.0, dist);
        if score < best {
            best = score;
        }
    }
    best
}

/// A drift index paired with control values.
type Choice = (usize, Vec<f64>);

/// Continuation length in the greedy look-ahead.
const LOOKAHEAD: f64 = 1.0;

/// Squared window-scaled distance below which a greedy target counts as
/// reached and is redrawn.
const TARGET_REACHED: f64 = 0.01;

/// Window-normalized squared distance.
fn scaled_dist(a: &[f64], b: &[f64], window: &Window) -> f64 {
    (0..a.len()).map(|i| ((a[i] - b[i]) / (window.hi[i] - window.lo[i])).powi(2)).sum()
}

/// Candidate controls tried per segment by the greedy policy.
const GREEDY_CANDIDATES: usize = 4;

#[allow(clippy::too_many_arguments)]
fn simulate_one(
    drifts: &[VectorField],
    controls: &[VectorField],
    window: &Window,
    x0: &[f64],
    horizon: f64,
    policy: &ControlPolicy,
    stride: f64,
    traj: usize,
    seed: u64,
) -> Trajectory {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, traj as u64));
    let kind = policy.kind_for(traj);
    let guard = window.inflated(ESCAPE_INFLATION);
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut points = Vec::new();
    if window.contains(&x) {
        points.push(CloudPoint { traj, t: 0.0, x: x.clone() });
    }
    let mut ig = Dopri5::new(n, StepControl::with_tolerance(1e-8));
    let mut t = 0.0;
    let mut next_sample = 1usize;
    let mut buf = vec![0.0; n];
    let draw_target =
        |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..n).map(|i| rng.random_range(window.lo[i]..=window.hi[i])).collect() };
    let mut target: Option<Vec<f64>> = (kind == PolicyKind::GreedyTowardTarget).then(|| draw_target(&mut rng));
    while t < horizon {
        let tau = rng.random_range(policy.min_duration..=policy.max_duration);
        let active = if drifts.len() > 1 { rng.random_range(0..drifts.len()) } else { 0 };
        let (active, u): Choice = match kind {
            PolicyKind::BangBang => (
                active,
                (0..controls.len())
                    .map(|_| if rng.random_bool(0.5) { policy.amplitude } else { -policy.amplitude })
                    .collect(),
            ),
            PolicyKind::GreedyTowardTarget => {
                if target.as_ref().is_some_and(|tg| scaled_dist(&x, tg, window) < TARGET_REACHED) {
                    target = Some(draw_target(&mut rng));
                }
                let target = target.as_ref().expect("greedy trajectories draw a target");
                let m = controls.len();
                // Zero, then +-amplitude on each axis, for every drift; then
                // random draws. The switching signal is planned as well.
                let fixed: Vec<Choice> = (0..drifts.len())
                    .flat_map(|d| {
                        (0..=2 * m).map(move |j| {
                            let mut c = vec![0.0; m];
                            if j > 0 {
                                c[(j - 1) / 2] = if j % 2 == 1 { policy.amplitude } else { -policy.amplitude };
                            }
                            (d, c)
                        })
                    })
                    .collect();
                let random: Vec<Choice> = (0..GREEDY_CANDIDATES)
                    .map(|i| {
                        let c = (0..m).map(|_| rng.random_range(-policy.amplitude..=policy.amplitude)).collect();
                        (i % drifts.len(), c)
                    })
                    .collect();
                let mut best: Option<((f64, f64), Choice)> = None;
                for (d, cand) in fixed.iter().cloned().chain(random) {
                    let score = rollout_score(drifts, controls, (d, &cand), &fixed, &x, tau, target, window, &guard);
                    if best.as_ref().is_none_or(|(b, _)| score < *b) {
                        best = Some((score, (d, cand)));
                    }
                }
                best.expect("at least one candidate").1
            }
            _ => {
                (active, (0..controls.len()).map(|_| rng.random_range(-policy.amplitude..=policy.amplitude)).collect())
            }
        };
        let f = &drifts[active];
        let seg_end = (t + tau).min(horizon);
        // Breakpoints: stride multiples inside the segment, then its end.
        loop {
            let ts = next_sample as f64 * stride;
            let (stop, sample) = if ts < seg_end - 1e-12 { (ts, true) } else { (seg_end, false) };
            let dt = stop - t;
            let res = ig.advance(
                |p, out| {
                    f.eval(p, out)?;
                    for (g, ui) in controls.iter().zip(&u) {
                        g.eval(p, &mut buf)?;
                        out.iter_mut().zip(&buf).for_each(|(o, b)| *o += ui * b);
                    }
                    Ok(())
                },
                &mut x,
                dt,
                Some(&guard),
            );
            if res.is_err() {
                return Trajectory { points, escaped: true };
            }
            t = stop;
            let at_sample = sample || (next_sample as f64 * stride - t).abs() <= 1e-12;
            if at_sample {
                next_sample += 1;
            }
            if (at_sample || t >= horizon) && window.contains(&x) {
                points.push(CloudPoint { traj, t, x: x.clone() });
            }
            if !sample {
                break;
            }
        }
    }
    Trajectory { points, escaped: false }
}

/// Simulates `n_traj` random control realizations from `x0` over `[0, horizon]`,
/// recording in-window points every `stride` time units and at the horizon.
/// Trajectory `i` draws from its own seed stream.
#[allow(clippy::too_many_arguments)]
pub fn simulate_reach(
    system: &SystemSpec,
    x0: &[f64],
    horizon: f64,
    n_traj: usize,
    policy: &ControlPolicy,
    stride: f64,
    seed: u64,
    exec: Exec,
) -> Result<ReachCloud, Error> {
    simulate_range(system, x0, horizon, 0..n_traj, policy, stride, seed, exec)
}

#[allow(clippy::too_many_arguments)]
fn simulate_range(
    system: &SystemSpec,
    x0: &[f64],
    horizon: f64,
    range: std::ops::Range<usize>,
    policy: &ControlPolicy,
    stride: f64,
    seed: u64,
    exec: Exec,
) -> Result<ReachCloud, Error> {
    if !(horizon > 0.0) {
        return Err(Error::InvalidArgument("horizon must be positive".into()));
    }
    if range.is_empty() {
        return Err(Error::InvalidArgument("need at least one trajectory".into()));
    }
    if !(stride > 0.0) {
        return Err(Error::InvalidArgument("sample stride must be positive".into()));
    }
    if x0.len() != system.dim() {
        return Err(Error::Dimension { expected: system.dim(), got: x0.len(), what: "initial point" });
    }
    policy.validate()?;
    let start = range.start;
    let trajs = par::map_indexed(exec, range.len(), |i| {
        simulate_one(&system.drifts, &system.controls, &system.window, x0, horizon, policy, stride, start + i, seed)
    });
    let escaped = trajs.iter().filter(|t| t.escaped).count();
    Ok(ReachCloud {
        origin: x0.to_vec(),
        horizon,
        trajectories: range.len(),
        escaped,
        window: system.window.clone(),
        points: trajs.into_iter().flat_map(|t| t.points).collect(),
    })
}

/// `⟨d, π(p − x0)⟩ ≥ −tol` for every cloud point, with `π` and `d` frozen at `x0`.
pub fn monotone_witness_check(cloud: &ReachCloud, proj: &QuotientProjection, d: &[f64], tol: f64) -> bool {
    cloud.points.iter().all(|p| {
        let diff: Vec<f64> = p.x.iter().zip(&cloud.origin).map(|(a, b)| a - b).collect();
        proj.project(&diff).iter().zip(d).map(|(a, b)| a * b).sum::<f64>() >= -tol
    })
}

/// CSV with columns `traj_id, t, x1..xn`.
pub fn write_cloud_csv<W: Write>(cloud: &ReachCloud, out: W) -> Result<(), Error> {
    let mut w = csv::Writer::from_writer(out);
    let n = cloud.origin.len();
    let mut header = vec!["traj_id".to_string(), "t".to_string()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    w.write_record(&header)?;
    for p in &cloud.points {
        let mut row = vec![p.traj.to_string(), format!("{:?}", p.t)];
        row.extend(p.x.iter().map(|v| format!("{v:?}")));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Agreement {
    Agree,
    Disagree,
    Untested,
}

impl Agreement {
    pub fn as_str(self) -> &'static str {
        match self {
            Agreement::Agree => "AGREE",
            Agreement::Disagree => "DISAGREE",
            Agreement::Untested => "UNTESTED",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleCheck {
    pub origin: Vec<f64>,
    pub flag: Agreement,
    /// Coverage of the forward and drift-reversed clouds.
    pub coverage_forward: Option<f64>,
    pub coverage_reverse: Option<f64>,
    pub trajectories_forward: usize,
    pub trajectories_reverse: usize,
    pub witness_check: Option<bool>,
    /// The monotone check is exact only when `G` is constant.
    pub heuristic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleBudget {
    pub n_traj: usize,
    pub horizon: f64,
    pub cells_per_axis: usize,
    pub coverage_threshold: f64,
    pub stride: f64,
    pub witness_tol: f64,
    pub policy: ControlPolicy,
}

impl OracleBudget {
    pub fn from_spec(system: &SystemSpec) -> OracleBudget {
        OracleBudget {
            n_traj: system.budgets.n_traj,
            horizon: system.budgets.horizon,
            cells_per_axis: 8,
            coverage_threshold: 0.9,
            stride: 0.1,
            witness_tol: 1e-6,
            policy: ControlPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgreementReport {
    pub overall: Agreement,
    pub budget: OracleBudget,
    pub checks: Vec<OracleCheck>,
    pub notes: Vec<String>,
}

/// Simulates in batches and stops once coverage reaches the threshold;
/// coverage is monotone in the trajectory count, so stopping early cannot
/// change the comparison.
fn coverage_run(
    system: &SystemSpec,
    x0: &[f64],
    budget: &OracleBudget,
    seed: u64,
    exec: Exec,
) -> Result<(f64, usize), Error> {
    let window = &system.window;
    let c = budget.cells_per_axis;
    let mut occ = vec![false; c.pow(window.dim() as u32)];
    let batch = 200;
    let mut done = 0;
    let mut cov = 0.0;
    while done < budget.n_traj {
        let end = (done + batch).min(budget.n_traj);
        let cloud = simulate_range(system, x0, budget.horizon, done..end, &budget.policy, budget.stride, seed, exec)?;
        for p in &cloud.points {
            if let Some(i) = cell_index(window, c, &p.x) {
                occ[i] = true;
            }
        }
        done = end;
        cov = occ.iter().filter(|b| **b).count() as f64 / occ.len() as f64;
        if cov >= budget.coverage_threshold {
            break;
        }
    }
    Ok((cov, done))
}

fn family_is_constant(analysis: &Analysis) -> bool {
    analysis.family.fields().all(|f| f.components().iter().all(|e| e.as_const().is_some()))
}

/// Corroborates a verdict with simulation: coverage from the window center
/// and four random points in both drift directions for a certified verdict,
/// the monotone witness check at failing points for negative evidence.
pub fn cross_validate(
    verdict: &GlobalVerdict,
    system: &SystemSpec,
    analysis: &Analysis,
    budget: &OracleBudget,
    seed: u64,
    settings: &Settings,
) -> Result<AgreementReport, Error> {
    let mut checks = Vec::new();
    let mut notes = Vec::new();
    let exec = settings.exec;
    match verdict.status {
        Status::ControllableCertified => {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x0AC1E));
            let w = &system.window;
            let mut origins = vec![w.center()];
            for _ in 0..4 {
                origins.push((0..w.dim()).map(|i| rng.random_range(w.lo[i]..=w.hi[i])).collect());
            }
            let reversed = system.time_reversed();
            for (j, x0) in origins.iter().enumerate() {
                let (cf, nf) = coverage_run(system, x0, budget, derive_seed(seed, 2 * j as u64 + 1), exec)?;
                let (cr, nr) = coverage_run(&reversed, x0, budget, derive_seed(seed, 2 * j as u64 + 2), exec)?;
                let ok = cf >= budget.coverage_threshold && cr >= budget.coverage_threshold;
                checks.push(OracleCheck {
                    origin: x0.clone(),
                    flag: if ok { Agreement::Agree } else { Agreement::Disagree },
                    coverage_forward: Some(cf),
                    coverage_reverse: Some(cr),
                    trajectories_forward: nf,
                    trajectories_reverse: nr,
                    witness_check: None,
                    heuristic: false,
                });
            }
            notes.push("coverage runs stop once the threshold is reached".into());
        }
        Status::UncontrollableEvidence => {
            let heuristic = !family_is_constant(analysis);
            if heuristic {
                notes.push("monotone witness check is heuristic: G is not constant on the window".into());
            }
            for (j, p) in verdict.failing_points().take(5).enumerate() {
                let flag_and_check = match &p.witness {
                    Witness::Covector { quotient, .. } => {
                        let proj = analysis.projection_at(&p.base, settings)?;
                        let cloud = simulate_reach(
                            system,
                            &p.base,
                            budget.horizon,
                            budget.n_traj,
                            &budget.policy,
                            budget.stride,
                            derive_seed(seed, 100 + j as u64),
                            exec,
                        )?;
                        let ok = monotone_witness_check(&cloud, &proj, quotient, budget.witness_tol);
                        (if ok { Agreement::Agree } else { Agreement::Disagree }, Some(ok), cloud.trajectories)
                    }
                    _ => (Agreement::Untested, None, 0),
                };
                checks.push(OracleCheck {
                    origin: p.base.clone(),
                    flag: flag_and_check.0,
                    coverage_forward: None,
                    coverage_reverse: None,
                    trajectories_forward: flag_and_check.2,
                    trajectories_reverse: 0,
                    witness_check: flag_and_check.1,
                    heuristic,
                });
            }
        }
        Status::Inconclusive | Status::NotRegular => {
            notes.push(format!("verdict {} is not simulated", verdict.status.as_str()));
        }
    }
    let overall = if checks.iter().any(|c| c.flag == Agreement::Disagree) {
        Agreement::Disagree
    } else if checks.iter().any(|c| c.flag == Agreement::Agree) {
        Agreement::Agree
    } else {
        Agreement::Untested
    };
    Ok(AgreementReport { overall, budget: budget.clone(), checks, notes })
}
