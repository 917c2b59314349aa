//! Upper-bound estimators for the control cost `d(x, y)`, the
//! sub-Riemannian distance of the driftless extension, and the loop function.
//!
//! All estimators shoot piecewise-constant controls in seeded rounds,
//! project candidates onto the endpoint constraint with Levenberg–Marquardt,
//! then shrink the cost while staying feasible. The incumbent only improves,
//! so more budget never yields a larger value.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Error;
use crate::field::VectorField;
use crate::ode::{Dopri5, FlowError, StepControl, Window};
use crate::par::{self, derive_seed, Exec};
use crate::system::SystemSpec;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Segment {
    pub controls: Vec<f64>,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostEstimate {
    /// Best value found, `None` when no trajectory met the tolerance.
    pub value: Option<f64>,
    pub word: Vec<Segment>,
    pub endpoint_error: f64,
    pub budget_spent: usize,
    pub tolerance: f64,
    pub time_cap: f64,
    pub label: &'static str,
}

impl CostEstimate {
    pub fn is_unreachable(&self) -> bool {
        self.value.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricOptions {
    pub endpoint_tol: f64,
    pub time_cap: f64,
    /// Minimum total duration of a loop.
    pub min_loop_duration: f64,
    /// Candidates per shooting round.
    pub batch: usize,
    pub max_segments: usize,
    pub exec: Exec,
}

impl Default for MetricOptions {
    fn default() -> Self {
        MetricOptions {
            endpoint_tol: 1e-2,
            time_cap: 50.0,
            min_loop_duration: 1.0,
            batch: 32,
            max_segments: 4,
            exec: Exec::default(),
        }
    }
}

#[derive(Clone, Copy, PartialEq)]
enum CostKind {
    /// `∫ ‖u‖ dt`.
    ControlNorm,
    /// Arc length in the metric of the driftless extension.
    SrLength,
}

struct Problem<'a> {
    drift: Option<&'a VectorField>,
    controls: Vec<&'a VectorField>,
    /// Fields spanning the extension, for arc length.
    sr_fields: Vec<&'a VectorField>,
    cost: CostKind,
    x: Vec<f64>,
    y: Vec<f64>,
    min_duration: f64,
    guard: Window,
    opts: MetricOptions,
}

#[derive(Clone)]
struct Eval {
    params: Vec<f64>,
    residual: Vec<f64>,
    err: f64,
    cost: f64,
}

const FAILED: f64 = 1e6;

/// Simulations each search round may spend on refinement, in multiples of
/// the batch size. Round zero gets twice as much.
const REFINE_ALLOWANCE: usize = 16;

impl Problem<'_> {
    fn m(&self) -> usize {
        self.controls.len()
    }

    fn decode(&self, p: &[f64]) -> Vec<Segment> {
        let m = self.m();
        let mut segs: Vec<Segment> =
            p.chunks(m + 1).map(|c| Segment { controls: c[..m].to_vec(), duration: c[m].abs() }).collect();
        let total: f64 = segs.iter().map(|s| s.duration).sum();
        if total < self.min_duration {
            let scale = if total > 0.0 { self.min_duration / total } else { 0.0 };
            if scale > 0.0 {
                segs.iter_mut().for_each(|s| s.duration *= scale);
            } else if let Some(s) = segs.first_mut() {
                s.duration = self.min_duration;
            }
        }
        segs
    }

    fn arc_rate(&self, x: &[f64], v: &[f64]) -> f64 {
        let n = x.len();
        let cols: Vec<Vec<f64>> = self.sr_fields.iter().filter_map(|f| f.eval_vec(x).ok()).collect();
        let m = DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]);
        let max = m.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        if max == 0.0 {
            return if v.iter().all(|c| *c == 0.0) { 0.0 } else { FAILED };
        }
        match m.pseudo_inverse(1e-10 * max.max(1.0)) {
            Ok(pinv) => (pinv * DVector::from_column_slice(v)).norm(),
            Err(_) => FAILED,
        }
    }

    /// Endpoint and cost of the word encoded by `p`.
    fn simulate(&self, segs: &[Segment]) -> Result<(Vec<f64>, f64), FlowError> {
        let n = self.x.len();
        let total: f64 = segs.iter().map(|s| s.duration).sum();
        if total > self.opts.time_cap {
            return Err(FlowError::TooManySteps { t: total });
        }
        let sr = self.cost == CostKind::SrLength;
        let dim = if sr { n + 1 } else { n };
        let mut state = self.x.clone();
        if sr {
            state.push(0.0);
        }
        let mut ig = Dopri5::new(dim, StepControl::with_tolerance(1e-10));
        let mut buf = vec![0.0; n];
        let guard_dim = self.guard.clone();
        for s in segs {
            if s.duration == 0.0 {
                continue;
            }
            let rhs = |z: &[f64], out: &mut [f64]| {
                let x = &z[..n];
                let (v, rest) = out.split_at_mut(n);
                match self.drift {
                    Some(f) => f.eval(x, v)?,
                    None => v.iter_mut().for_each(|c| *c = 0.0),
                }
                for (g, u) in self.controls.iter().zip(&s.controls) {
                    if *u != 0.0 {
                        g.eval(x, &mut buf)?;
                        v.iter_mut().zip(&buf).for_each(|(o, b)| *o += u * b);
                    }
                }
                if sr {
                    rest[0] = self.arc_rate(x, v);
                }
                Ok(())
            };
            ig.advance(rhs, &mut state, s.duration, Some(&guard_dim))?;
        }
        let cost = if sr {
            state[n]
        } else {
            segs.iter().map(|s| s.duration * s.controls.iter().map(|u| u * u).sum::<f64>().sqrt()).sum()
        };
        state.truncate(n);
        Ok((state, cost))
    }

    fn evaluate(&self, p: &[f64]) -> Eval {
        let segs = self.decode(p);
        match self.simulate(&segs) {
            Ok((end, cost)) => {
                let residual: Vec<f64> = end.iter().zip(&self.y).map(|(a, b)| a - b).collect();
                let err = residual.iter().map(|r| r * r).sum::<f64>().sqrt();
                Eval { params: p.to_vec(), residual, err, cost }
            }
            Err(_) => Eval { params: p.to_vec(), residual: vec![FAILED; self.x.len()], err: FAILED, cost: FAILED },
        }
    }

    fn feasible(&self, e: &Eval) -> bool {
        e.err <= self.opts.endpoint_tol && e.cost < FAILED
    }

    /// Levenberg–Marquardt on the endpoint residual.
    fn project(&self, start: Eval, max_iter: usize, target: f64, sims: &mut usize, limit: usize) -> Eval {
        let mut cur = start;
        let mut lambda = 1e-3;
        let np = cur.params.len();
        let nr = cur.residual.len();
        for _ in 0..max_iter {
            if cur.err <= target || cur.err >= FAILED || *sims >= limit {
                break;
            }
            let mut jac = DMatrix::zeros(nr, np);
            for j in 0..np {
                let h = 1e-6 * cur.params[j].abs().max(1.0);
                let mut q = cur.params.clone();
                q[j] += h;
                let e = self.evaluate(&q);
                *sims += 1;
                for i in 0..nr {
                    jac[(i, j)] = (e.residual[i] - cur.residual[i]) / h;
                }
            }
            let r = DVector::from_column_slice(&cur.residual);
            let jtj = jac.transpose() * &jac;
            let g = jac.transpose() * r;
            let mut improved = false;
            for _ in 0..8 {
                let mut a = jtj.clone();
                for d in 0..np {
                    a[(d, d)] += lambda * (jtj[(d, d)] + 1e-9);
                }
                let Some(step) = a.lu().solve(&(-&g)) else {
                    lambda *= 10.0;
                    continue;
                };
                let q: Vec<f64> = cur.params.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
                let e = self.evaluate(&q);
                *sims += 1;
                if e.err < cur.err {
                    cur = e;
                    lambda = (lambda / 3.0).max(1e-12);
                    improved = true;
                    break;
                }
                lambda *= 4.0;
            }
            if !improved {
                break;
            }
        }
        cur
    }

    /// Shrinks the cost while keeping the endpoint within tolerance.
    fn descend(&self, start: Eval, sims: &mut usize, limit: usize) -> Eval {
        let mut best = start;
        let m = self.m();
        let target = 0.5 * self.opts.endpoint_tol;
        let mut eta = 0.3;
        let mut sweeps = 0;
        while eta > 1e-3 && sweeps < 40 && *sims < limit {
            sweeps += 1;
            let mut moves: Vec<Vec<f64>> = Vec::new();
            // Scale all controls down, shorten each duration, nudge each control.
            moves.push(
                best.params
                    .iter()
                    .enumerate()
                    .map(|(i, v)| if i % (m + 1) == m { *v } else { v * (1.0 - eta) })
                    .collect(),
            );
            for (i, v) in best.params.iter().enumerate() {
                let mut q = best.params.clone();
                if i % (m + 1) == m {
                    q[i] = v * (1.0 - eta);
                } else {
                    q[i] = v - eta * v.abs().max(0.1) * v.signum();
                }
                moves.push(q);
            }
            let mut improved = false;
            for q in moves {
                if *sims >= limit {
                    break;
                }
                let e = self.evaluate(&q);
                *sims += 1;
                let e = if self.feasible(&e) { e } else { self.project(e, 10, target, sims, limit) };
                if self.feasible(&e) && e.cost < best.cost - 1e-12 {
                    best = e;
                    improved = true;
                }
            }
            if !improved {
                eta *= 0.5;
            }
        }
        best
    }

    fn random_params(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let m = self.m();
        let segs = rng.random_range(1..=self.opts.max_segments.max(1));
        let mut p = Vec::with_capacity(segs * (m + 1));
        for _ in 0..segs {
            for _ in 0..m {
                p.push(rng.random_range(-3.0..3.0));
            }
            p.push(rng.random_range(0.05..1.5));
        }
        p
    }

    /// Linearized single-segment guesses `x + τ(f + Gu) = y`.
    fn linear_guesses(&self) -> Vec<Vec<f64>> {
        let n = self.x.len();
        let m = self.m();
        let cols: Vec<Vec<f64>> = match self.controls.iter().map(|g| g.eval_vec(&self.x)).collect() {
            Ok(c) => c,
            Err(_) => return Vec::new(),
        };
        let f0 = self.drift.and_then(|f| f.eval_vec(&self.x).ok()).unwrap_or_else(|| vec![0.0; n]);
        let g = DMatrix::from_fn(n, m, |i, j| cols[j][i]);
        let Ok(pinv) = g.pseudo_inverse(1e-10) else { return Vec::new() };
        [0.25, 1.0, 3.0]
            .iter()
            .map(|&tau| {
                let rhs = DVector::from_fn(n, |i, _| (self.y[i] - self.x[i]) / tau - f0[i]);
                let u = &pinv * rhs;
                let mut p: Vec<f64> = u.iter().cloned().collect();
                p.push(tau);
                p
            })
            .collect()
    }

    /// `u ≡ 0`: closest approach along the drift orbit, refined by golden section.
    fn drift_only(&self, sims: &mut usize) -> Option<Eval> {
        self.drift?;
        let m = self.m();
        let at = |tau: f64, sims: &mut usize| {
            let mut p = vec![0.0; m];
            p.push(tau);
            *sims += 1;
            self.evaluate(&p)
        };
        let cap = self.opts.time_cap;
        let steps = 200;
        let h = cap / steps as f64;
        let (mut best_i, mut best_err) = (0, f64::INFINITY);
        for i in 0..=steps {
            let e = at(i as f64 * h, sims);
            if e.err < best_err {
                best_err = e.err;
                best_i = i;
            }
        }
        let (mut a, mut b) = (((best_i as f64) - 1.0).max(0.0) * h, ((best_i as f64) + 1.0).min(steps as f64) * h);
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..60 {
            let c = b - phi * (b - a);
            let d = a + phi * (b - a);
            if at(c, sims).err < at(d, sims).err {
                b = d;
            } else {
                a = c;
            }
        }
        let e = at(0.5 * (a + b), sims);
        let e0 = at(best_i as f64 * h, sims);
        Some(if e.err <= e0.err { e } else { e0 })
    }

    fn solve(&self, budget: usize, seed: u64) -> CostEstimate {
        let mut sims = 0usize;
        let tol = self.opts.endpoint_tol;
        let mut best: Option<Eval> = None;
        let mut closest: Option<Eval> = None;
        let consider = |e: Eval, best: &mut Option<Eval>, closest: &mut Option<Eval>| {
            if closest.as_ref().is_none_or(|c| e.err < c.err) {
                *closest = Some(e.clone());
            }
            if self.feasible(&e) && best.as_ref().is_none_or(|b| e.cost < b.cost) {
                *best = Some(e);
            }
        };

        let dist = self.x.iter().zip(&self.y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        if self.min_duration == 0.0 && dist <= tol {
            return CostEstimate {
                value: Some(0.0),
                word: Vec::new(),
                endpoint_error: dist,
                budget_spent: 0,
                tolerance: tol,
                time_cap: self.opts.time_cap,
                label: "upper bound",
            };
        }

        // Round zero: structured guesses.
        let mut seeds: Vec<Vec<f64>> = self.linear_guesses();
        if self.min_duration > 0.0 {
            let mut p = vec![0.0; self.m()];
            p.push(self.min_duration);
            seeds.push(p);
        }
        if let Some(e) = self.drift_only(&mut sims) {
            consider(e.clone(), &mut best, &mut closest);
            if self.feasible(&e) {
                seeds.push(e.params);
            }
        }
        let batch = self.opts.batch.max(1);
        let limit = sims + 2 * REFINE_ALLOWANCE * batch;
        for p in seeds {
            let e = self.evaluate(&p);
            sims += 1;
            let e = self.project(e, 40, 0.5 * tol, &mut sims, limit);
            consider(e.clone(), &mut best, &mut closest);
            if self.feasible(&e) {
                let d = self.descend(e, &mut sims, limit);
                consider(d, &mut best, &mut closest);
            }
        }

        let rounds = budget.div_ceil(batch);
        for r in 0..rounds {
            let round_seed = derive_seed(seed, r as u64);
            let cands = par::map_indexed(self.opts.exec, batch, |i| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(round_seed, i as u64));
                self.evaluate(&self.random_params(&mut rng))
            });
            sims += batch;
            let limit = sims + REFINE_ALLOWANCE * batch;
            let mut order: Vec<usize> = (0..cands.len()).collect();
            order.sort_by(|&a, &b| cands[a].err.total_cmp(&cands[b].err).then(a.cmp(&b)));
            for &i in order.iter().take(2) {
                let e = self.project(cands[i].clone(), 40, 0.5 * tol, &mut sims, limit);
                consider(e.clone(), &mut best, &mut closest);
                if self.feasible(&e) {
                    let d = self.descend(e, &mut sims, limit);
                    consider(d, &mut best, &mut closest);
                }
            }
        }

        let (value, chosen) = match best {
            Some(b) => (Some(b.cost), b),
            None => (None, closest.expect("at least one candidate evaluated")),
        };
        let mut word = self.decode(&chosen.params);
        word.retain(|s| s.duration > 0.0);
        CostEstimate {
            value,
            word,
            endpoint_error: chosen.err,
            budget_spent: sims,
            tolerance: tol,
            time_cap: self.opts.time_cap,
            label: "upper bound",
        }
    }
}

fn check_points(system: &SystemSpec, pts: &[&[f64]]) -> Result<(), Error> {
    for p in pts {
        if p.len() != system.dim() {
            return Err(Error::Dimension { expected: system.dim(), got: p.len(), what: "point" });
        }
    }
    Ok(())
}

fn guard(system: &SystemSpec) -> Window {
    system.window.inflated(4.0)
}

fn extension_fields(system: &SystemSpec) -> Vec<&VectorField> {
    system.drifts.iter().chain(system.controls.iter()).collect()
}

/// Upper bound on `inf ∫ ‖u‖ dt` over controls steering `x` to within
/// `endpoint_tol` of `y`. Switched systems use their first drift.
pub fn estimate_cost(
    system: &SystemSpec,
    x: &[f64],
    y: &[f64],
    budget: usize,
    opts: &MetricOptions,
    seed: u64,
) -> Result<CostEstimate, Error> {
    check_points(system, &[x, y])?;
    if !(opts.endpoint_tol > 0.0) {
        return Err(Error::InvalidArgument("endpoint tolerance must be positive".into()));
    }
    let p = Problem {
        drift: system.drifts.first(),
        controls: system.controls.iter().collect(),
        sr_fields: Vec::new(),
        cost: CostKind::ControlNorm,
        x: x.to_vec(),
        y: y.to_vec(),
        min_duration: 0.0,
        guard: guard(system),
        opts: opts.clone(),
    };
    Ok(p.solve(budget, seed))
}

/// Distance in the driftless extension where every drift gets its own control.
pub fn sr_distance(
    system: &SystemSpec,
    x: &[f64],
    y: &[f64],
    budget: usize,
    opts: &MetricOptions,
    seed: u64,
) -> Result<CostEstimate, Error> {
    check_points(system, &[x, y])?;
    if !(opts.endpoint_tol > 0.0) {
        return Err(Error::InvalidArgument("endpoint tolerance must be positive".into()));
    }
    let p = Problem {
        drift: None,
        controls: extension_fields(system),
        sr_fields: Vec::new(),
        cost: CostKind::ControlNorm,
        x: x.to_vec(),
        y: y.to_vec(),
        min_duration: 0.0,
        guard: guard(system),
        opts: opts.clone(),
    };
    Ok(p.solve(budget, seed))
}

/// Shortest drifted loop at `x` (total duration at least
/// `opts.min_loop_duration`), measured by arc length in the extension metric.
pub fn loop_length(
    system: &SystemSpec,
    x: &[f64],
    budget: usize,
    opts: &MetricOptions,
    seed: u64,
) -> Result<CostEstimate, Error> {
    check_points(system, &[x])?;
    if !(opts.endpoint_tol > 0.0) {
        return Err(Error::InvalidArgument("endpoint tolerance must be positive".into()));
    }
    let p = Problem {
        drift: system.drifts.first(),
        controls: system.controls.iter().collect(),
        sr_fields: extension_fields(system),
        cost: CostKind::SrLength,
        x: x.to_vec(),
        y: x.to_vec(),
        min_duration: opts.min_loop_duration.max(f64::MIN_POSITIVE),
        guard: guard(system),
        opts: opts.clone(),
    };
    Ok(p.solve(budget, seed))
}

/// Arc length (extension metric) of the concatenation of the best `x → y`
/// and `y → x` trajectories.
pub fn circle_length(
    system: &SystemSpec,
    x: &[f64],
    there: &CostEstimate,
    back: &CostEstimate,
    opts: &MetricOptions,
) -> Option<f64> {
    if there.is_unreachable() || back.is_unreachable() {
        return None;
    }
    let p = Problem {
        drift: system.drifts.first(),
        controls: system.controls.iter().collect(),
        sr_fields: extension_fields(system),
        cost: CostKind::SrLength,
        x: x.to_vec(),
        y: x.to_vec(),
        min_duration: 0.0,
        guard: guard(system),
        opts: MetricOptions { time_cap: 2.0 * opts.time_cap, ..opts.clone() },
    };
    let word: Vec<Segment> = there.word.iter().chain(back.word.iter()).cloned().collect();
    p.simulate(&word).ok().map(|(_, c)| c)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoopScan {
    pub probes: Vec<Vec<f64>>,
    pub estimates: Vec<CostEstimate>,
    pub max: Option<f64>,
    pub label: &'static str,
}

/// Loop estimates over probe points and their maximum. A bounded maximum on
/// a finite probe set says nothing definite about boundedness on the space.
pub fn loop_scan(
    system: &SystemSpec,
    probes: &[Vec<f64>],
    budget: usize,
    opts: &MetricOptions,
    seed: u64,
) -> Result<LoopScan, Error> {
    let estimates = probes
        .iter()
        .enumerate()
        .map(|(i, p)| loop_length(system, p, budget, opts, derive_seed(seed, i as u64)))
        .collect::<Result<Vec<_>, _>>()?;
    let max = estimates
        .iter()
        .map(|e| e.value.unwrap_or(f64::INFINITY))
        .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))));
    Ok(LoopScan { probes: probes.to_vec(), estimates, max, label: "non-conclusive" })
}
