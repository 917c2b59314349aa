//! Controllability conditions: the determinant sign-change test for
//! codimension one, the convex-position test in the quotient by `G`, and the
//! supporting-distribution verifier for non-controllability.

use std::collections::HashSet;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::convex::{interior_convex_test, witness_valid};
use crate::error::Error;
use crate::expr::EvalError;
use crate::field::{lie_bracket, VectorField};
use crate::lie::{audit_regularity, generate_bracket_basis, BracketFamily, RegularityReport};
use crate::ode::{StepControl, ESCAPE_INFLATION};
use crate::par::{self, derive_seed};
use crate::system::{Settings, SystemSpec};
use crate::transport::{shift_to_base, LeafSample, LeafWalker};

/// `det(f(x), g̃₁(x), …, g̃ₙ₋₁(x))`.
pub fn criterion_value(f: &VectorField, gtilde: &[VectorField], x: &[f64]) -> Result<f64, Error> {
    let n = f.dim();
    if gtilde.len() + 1 != n {
        return Err(Error::Dimension { expected: n - 1, got: gtilde.len(), what: "frame" });
    }
    if x.len() != n {
        return Err(Error::Dimension { expected: n, got: x.len(), what: "point" });
    }
    let mut cols = vec![f.eval_vec(x)?];
    for g in gtilde {
        if g.dim() != n {
            return Err(Error::Dimension { expected: n, got: g.dim(), what: "frame field" });
        }
        cols.push(g.eval_vec(x)?);
    }
    Ok(DMatrix::from_fn(n, n, |i, j| cols[j][i]).determinant())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    /// Two leaf points where the criterion function has opposite signs.
    SignChange {
        y1: Vec<f64>,
        c1: f64,
        y2: Vec<f64>,
        c2: f64,
    },
    /// The projected shifted drifts surround the origin.
    Interior {
        exact: bool,
    },
    /// `⟨d, πv⟩ ≥ −margin` for every collected vector; `ambient` is `Σ dᵢ qᵢ`.
    Covector {
        quotient: Vec<f64>,
        ambient: Vec<f64>,
        exact: bool,
    },
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeterminantCheck {
    pub holds: bool,
    pub witness: Witness,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointVerdict {
    pub base: Vec<f64>,
    pub condition_holds: bool,
    pub witness: Witness,
    pub samples_used: usize,
    pub codimension: usize,
    pub walk_attempts: usize,
    pub escaped: usize,
    pub transport_failures: usize,
    /// Codimension-one determinant path on the same leaf sample, when a frame is available.
    pub determinant: Option<DeterminantCheck>,
}

fn sign_change(values: impl IntoIterator<Item = (Vec<f64>, f64)>, eps_sign: f64) -> (bool, Witness, usize) {
    let mut pos: Option<(Vec<f64>, f64)> = None;
    let mut neg: Option<(Vec<f64>, f64)> = None;
    let mut count = 0;
    for (y, c) in values {
        count += 1;
        if c > eps_sign && pos.is_none() {
            pos = Some((y, c));
        } else if c < -eps_sign && neg.is_none() {
            neg = Some((y, c));
        }
        if pos.is_some() && neg.is_some() {
            break;
        }
    }
    match (pos, neg) {
        (Some((y1, c1)), Some((y2, c2))) => (true, Witness::SignChange { y1, c1, y2, c2 }, count),
        _ => (false, Witness::None, count),
    }
}

/// Does `c` take both signs (beyond `eps_sign`) over the base and visits of `leaf`?
/// Points where `c` cannot be evaluated are skipped.
pub fn sign_change_on_leaf<F>(leaf: &LeafSample, c: F, eps_sign: f64) -> PointVerdict
where
    F: Fn(&[f64]) -> Result<f64, Error>,
{
    let points = std::iter::once(&leaf.base).chain(leaf.visits.iter().map(|v| &v.point));
    let values = points.filter_map(|y| c(y).ok().map(|v| (y.clone(), v)));
    let (holds, witness, used) = sign_change(values, eps_sign);
    PointVerdict {
        base: leaf.base.clone(),
        condition_holds: holds,
        witness,
        samples_used: used,
        codimension: 1,
        walk_attempts: leaf.attempts,
        escaped: leaf.escaped,
        transport_failures: leaf.transport_failures,
        determinant: None,
    }
}

/// Orthonormal basis `q₁..q_k` of the orthogonal complement of `span(G|ₓ)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuotientProjection {
    pub n: usize,
    pub basis: Vec<Vec<f64>>,
}

impl QuotientProjection {
    pub fn k(&self) -> usize {
        self.basis.len()
    }

    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        self.basis.iter().map(|q| dot(q, v)).collect()
    }

    pub fn lift(&self, d: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (q, c) in self.basis.iter().zip(d) {
            for (o, qi) in out.iter_mut().zip(q) {
                *o += c * qi;
            }
        }
        out
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Orthonormal basis of `span(vectors)` from a thin SVD.
fn span_basis(vectors: &[Vec<f64>], n: usize, tol: f64) -> Vec<Vec<f64>> {
    if vectors.is_empty() {
        return Vec::new();
    }
    let m = DMatrix::from_fn(n, vectors.len(), |i, j| vectors[j][i]);
    let svd = m.svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 || !max.is_finite() {
        return Vec::new();
    }
    svd.singular_values
        .iter()
        .enumerate()
        .filter(|(_, s)| **s > tol * max)
        .map(|(j, _)| u.column(j).iter().cloned().collect())
        .collect()
}

/// Component of `b` orthogonal to `span(vectors)`, as a norm.
fn span_residual(vectors: &[Vec<f64>], b: &[f64], tol: f64) -> f64 {
    let basis = span_basis(vectors, b.len(), tol);
    let mut r = b.to_vec();
    for u in &basis {
        let c = dot(u, &r);
        r.iter_mut().zip(u).for_each(|(ri, ui)| *ri -= c * ui);
    }
    dot(&r, &r).sqrt()
}

/// Complement basis by pivoted Gram–Schmidt on `(I − UUᵀ)eⱼ`, returned in
/// coordinate order so that e.g. `span{e₃}` gives `q = (e₁, e₂)`.
fn complement_basis(span: &[Vec<f64>], n: usize) -> Vec<Vec<f64>> {
    let k = n.saturating_sub(span.len());
    let mut cands: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut v = vec![0.0; n];
            v[j] = 1.0;
            for u in span {
                let c = u[j];
                v.iter_mut().zip(u).for_each(|(vi, ui)| *vi -= c * ui);
            }
            v
        })
        .collect();
    let mut chosen: Vec<(usize, Vec<f64>)> = Vec::with_capacity(k);
    let mut used = vec![false; n];
    for _ in 0..k {
        let mut best: Option<(usize, f64)> = None;
        for (j, v) in cands.iter().enumerate() {
            if used[j] {
                continue;
            }
            let norm = dot(v, v).sqrt();
            if best.is_none_or(|(_, b)| norm > b + 1e-12) {
                best = Some((j, norm));
            }
        }
        let Some((j, norm)) = best else { break };
        if norm < 1e-12 {
            break;
        }
        used[j] = true;
        let mut q: Vec<f64> = cands[j].iter().map(|x| x / norm).collect();
        // Reorthogonalize against the span and earlier picks.
        for u in span.iter().chain(chosen.iter().map(|(_, c)| c)) {
            let c = dot(u, &q);
            q.iter_mut().zip(u).for_each(|(qi, ui)| *qi -= c * ui);
        }
        let qn = dot(&q, &q).sqrt();
        q.iter_mut().for_each(|x| *x /= qn);
        for (i, v) in cands.iter_mut().enumerate() {
            if !used[i] {
                let c = dot(&q, v);
                v.iter_mut().zip(&q).for_each(|(vi, qi)| *vi -= c * qi);
            }
        }
        chosen.push((j, q));
    }
    chosen.sort_by_key(|(j, _)| *j);
    chosen.into_iter().map(|(_, q)| q).collect()
}

/// Projection onto quotient coordinates at a point where `G|ₓ` is spanned by
/// `g_basis`. With `expected_rank` set, a different numerical rank is an error.
pub fn quotient_projection(
    g_basis: &[Vec<f64>],
    n: usize,
    tol: f64,
    expected_rank: Option<usize>,
) -> Result<QuotientProjection, Error> {
    if let Some(v) = g_basis.iter().find(|v| v.len() != n) {
        return Err(Error::Dimension { expected: n, got: v.len(), what: "distribution vector" });
    }
    let span = span_basis(g_basis, n, tol);
    if let Some(r) = expected_rank {
        if r != span.len() {
            return Err(Error::RankMismatch { expected: r, got: span.len() });
        }
    }
    Ok(QuotientProjection { n, basis: complement_basis(&span, n) })
}

/// Bracket family and regularity audit for a system, computed once and
/// shared by every per-point check.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub family: BracketFamily,
    pub regularity: RegularityReport,
}

impl Analysis {
    pub fn new(system: &SystemSpec, settings: &Settings) -> Result<Analysis, Error> {
        let probes = system.window.grid(settings.probe_grid.max(2));
        let family = generate_bracket_basis(&system.controls, settings.depth_cap, &probes, settings.rank_tol)?;
        let regularity =
            audit_regularity(&family, &system.window, system.budgets.grid_per_axis, settings.rank_tol, settings.exec)?;
        Ok(Analysis { family, regularity })
    }

    pub fn codimension(&self) -> Result<usize, Error> {
        crate::lie::codimension(&self.regularity)
    }

    pub fn projection_at(&self, x: &[f64], settings: &Settings) -> Result<QuotientProjection, Error> {
        let r = self.family.dim() - self.codimension()?;
        quotient_projection(&self.family.evaluate(x)?, self.family.dim(), settings.rank_tol, Some(r))
    }
}

/// The frame used for the determinant path: the user's, or the generators
/// themselves when there are exactly `n − 1` of them.
fn determinant_frame(system: &SystemSpec, k: usize) -> Option<&[VectorField]> {
    if k != 1 || system.drifts.len() != 1 {
        return None;
    }
    let n = system.dim();
    if system.frame.len() + 1 == n {
        Some(&system.frame)
    } else if system.controls.len() + 1 == n {
        Some(&system.controls)
    } else {
        None
    }
}

/// Per-point pipeline shared by the plain and switched conditions.
fn check_with_drifts(
    system: &SystemSpec,
    analysis: &Analysis,
    drifts: &[VectorField],
    x: &[f64],
    leaf_budget: usize,
    seed: u64,
    settings: &Settings,
) -> Result<PointVerdict, Error> {
    if drifts.is_empty() {
        return Err(Error::InvalidArgument("empty drift family".into()));
    }
    let n = system.dim();
    if x.len() != n {
        return Err(Error::Dimension { expected: n, got: x.len(), what: "base point" });
    }
    let proj = analysis.projection_at(x, settings)?;
    let k = proj.k();
    let mut verdict = PointVerdict {
        base: x.to_vec(),
        condition_holds: false,
        witness: Witness::None,
        samples_used: 0,
        codimension: k,
        walk_attempts: 0,
        escaped: 0,
        transport_failures: 0,
        determinant: None,
    };
    if k == 0 {
        verdict.condition_holds = true;
        verdict.witness = Witness::Interior { exact: true };
        return Ok(verdict);
    }

    let generators = &analysis.family.generators;
    let guard = system.window.inflated(ESCAPE_INFLATION);
    let walker = LeafWalker {
        generators,
        guard: guard.clone(),
        policy: settings.walk_policy(&system.window),
        step: StepControl::default(),
        seed,
    };
    let mut leaf = LeafSample::new(x.to_vec());
    let mut projected: Vec<Vec<f64>> = Vec::new();
    for f in drifts {
        projected.push(proj.project(&f.eval_vec(x)?));
    }
    // Leaf points whose drifts were transported successfully, base first.
    let mut used_points = vec![x.to_vec()];
    let mut result = interior_convex_test(&projected, settings.margin)?;
    let batch = settings.leaf_batch.max(1);
    let mut start = 0;
    while !result.inside && start < leaf_budget {
        let end = (start + batch).min(leaf_budget);
        let before = leaf.visits.len();
        walker.extend(&mut leaf, start..end);
        for visit in &leaf.visits[before..] {
            match shift_to_base(drifts, generators, visit, StepControl::default(), Some(&guard)) {
                Ok(vs) => {
                    projected.extend(vs.iter().map(|v| proj.project(v)));
                    used_points.push(visit.point.clone());
                }
                Err(_) => leaf.transport_failures += 1,
            }
        }
        result = interior_convex_test(&projected, settings.margin)?;
        start = end;
    }

    verdict.samples_used = projected.len();
    verdict.walk_attempts = leaf.attempts;
    verdict.escaped = leaf.escaped;
    verdict.transport_failures = leaf.transport_failures;
    verdict.condition_holds = result.inside;
    verdict.witness = match result.witness {
        None => Witness::Interior { exact: result.exact },
        Some(d) => {
            debug_assert!(witness_valid(&projected, &d, settings.margin));
            Witness::Covector { ambient: proj.lift(&d), quotient: d, exact: result.exact }
        }
    };
    if let Some(frame) = determinant_frame(system, k) {
        let f = &drifts[0];
        let values = used_points.iter().filter_map(|y| criterion_value(f, frame, y).ok().map(|c| (y.clone(), c)));
        let (holds, witness, _) = sign_change(values, settings.eps_sign);
        verdict.determinant = Some(DeterminantCheck { holds, witness });
    }
    Ok(verdict)
}

/// Convex-position condition at `x` for the system's drift family.
pub fn check_condition(
    system: &SystemSpec,
    analysis: &Analysis,
    x: &[f64],
    leaf_budget: usize,
    seed: u64,
    settings: &Settings,
) -> Result<PointVerdict, Error> {
    check_with_drifts(system, analysis, &system.drifts, x, leaf_budget, seed, settings)
}

/// Same pipeline with shifted vectors collected from every drift in `family`.
pub fn switched_condition(
    system: &SystemSpec,
    analysis: &Analysis,
    family: &[VectorField],
    x: &[f64],
    leaf_budget: usize,
    seed: u64,
    settings: &Settings,
) -> Result<PointVerdict, Error> {
    check_with_drifts(system, analysis, family, x, leaf_budget, seed, settings)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Status {
    ControllableCertified,
    UncontrollableEvidence,
    Inconclusive,
    NotRegular,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::ControllableCertified => "CONTROLLABLE_CERTIFIED",
            Status::UncontrollableEvidence => "UNCONTROLLABLE_EVIDENCE",
            Status::Inconclusive => "INCONCLUSIVE",
            Status::NotRegular => "NOT_REGULAR",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointFailure {
    pub base: Vec<f64>,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assumptions {
    pub regularity: String,
    pub regular_on_grid: bool,
    pub assume_not_dense: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GlobalVerdict {
    pub status: Status,
    pub codimension: Option<usize>,
    pub grid_points: usize,
    pub points: Vec<PointVerdict>,
    pub errors: Vec<PointFailure>,
    pub assumptions: Assumptions,
    pub notes: Vec<String>,
}

impl GlobalVerdict {
    pub fn failing_points(&self) -> impl Iterator<Item = &PointVerdict> {
        self.points.iter().filter(|p| !p.condition_holds)
    }
}

/// One representative grid point per leaf, identified by the values of the
/// user-supplied invariants (rounded to 1e-6).
fn leaf_representatives(system: &SystemSpec, points: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    if system.invariants.is_empty() {
        return points;
    }
    let mut seen = HashSet::new();
    points
        .into_iter()
        .filter(|p| {
            let key: Option<Vec<i64>> =
                system.invariants.iter().map(|e| e.evaluate(p).ok().map(|v| (v * 1e6).round() as i64)).collect();
            key.is_none_or(|k| seen.insert(k))
        })
        .collect()
}

/// Checks the condition on a grid of base points and aggregates.
pub fn global_verdict(system: &SystemSpec, settings: &Settings) -> Result<GlobalVerdict, Error> {
    let analysis = Analysis::new(system, settings)?;
    global_verdict_with(system, &analysis, settings)
}

pub fn global_verdict_with(
    system: &SystemSpec,
    analysis: &Analysis,
    settings: &Settings,
) -> Result<GlobalVerdict, Error> {
    let assumptions = Assumptions {
        regularity: analysis.regularity.finding.clone(),
        regular_on_grid: analysis.regularity.constant_rank,
        assume_not_dense: system.assume_not_dense,
    };
    let Ok(k) = analysis.codimension() else {
        return Ok(GlobalVerdict {
            status: Status::NotRegular,
            codimension: None,
            grid_points: 0,
            points: Vec::new(),
            errors: Vec::new(),
            assumptions,
            notes: vec!["the control distribution has non-constant rank on the window".into()],
        });
    };
    let bases = leaf_representatives(system, system.window.grid(system.budgets.grid_per_axis.max(2)));
    let seed = system.budgets.seed;
    let results = par::map_indexed(settings.exec, bases.len(), |i| {
        check_condition(system, analysis, &bases[i], system.budgets.leaf_budget, derive_seed(seed, i as u64), settings)
    });
    let mut points = Vec::new();
    let mut errors = Vec::new();
    for (base, r) in bases.iter().zip(results) {
        match r {
            Ok(v) => points.push(v),
            Err(e) => errors.push(PointFailure { base: base.clone(), error: format!("{}: {e}", e.code()) }),
        }
    }
    let any_fail = points.iter().any(|p| !p.condition_holds);
    let mut notes = Vec::new();
    let status = if any_fail {
        if system.assume_not_dense == Some(true) {
            Status::UncontrollableEvidence
        } else {
            notes.push("the condition failed at some base points, but necessity needs assume_not_dense = true".into());
            Status::Inconclusive
        }
    } else if errors.is_empty() {
        Status::ControllableCertified
    } else {
        Status::Inconclusive
    };
    if k >= 3 {
        notes.push("convex test is approximate for codimension >= 3".into());
        if status == Status::UncontrollableEvidence {
            notes.push("necessity in codimension >= 3 should be backed by a verified supporting distribution".into());
        }
    }
    if status == Status::UncontrollableEvidence {
        notes.push("budget exhaustion is evidence, not proof".into());
    }
    Ok(GlobalVerdict { status, codimension: Some(k), grid_points: bases.len(), points, errors, assumptions, notes })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClauseResult {
    pub holds: bool,
    pub checked: usize,
    /// First failing points (at most 10).
    pub failing_points: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SupportConclusion {
    NotControllable,
    CandidateRejected,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupportReport {
    pub codimension: usize,
    /// `π(S)` has rank `k − 1`.
    pub clause_a: ClauseResult,
    /// `[gᵢ, Sⱼ]` lies in `span(G ∪ S)`.
    pub clause_b: ClauseResult,
    /// Projected shifted drifts lie in one closed half-space bounded by `π(S)`.
    pub clause_c: ClauseResult,
    /// `f(x)` is not in `span Lie(S)|ₓ`.
    pub clause_d: ClauseResult,
    pub conclusion: SupportConclusion,
    pub rejected_at: Vec<char>,
    pub message: String,
    pub notes: Vec<String>,
}

#[derive(Default)]
struct PointClauses {
    a: bool,
    b: bool,
    c: bool,
    d: bool,
}

/// Checks a user-supplied supporting distribution `s` on the grid.
pub fn verify_supporting_distribution(
    system: &SystemSpec,
    s: &[VectorField],
    settings: &Settings,
) -> Result<SupportReport, Error> {
    let analysis = Analysis::new(system, settings)?;
    let k = analysis.codimension()?;
    if k < 2 {
        return Err(Error::InvalidArgument(format!("supporting distributions need codimension >= 2, found {k}")));
    }
    if s.len() != k - 1 {
        return Err(Error::Dimension { expected: k - 1, got: s.len(), what: "supporting distribution" });
    }
    let n = system.dim();
    if let Some(f) = s.iter().find(|f| f.dim() != n) {
        return Err(Error::Dimension { expected: n, got: f.dim(), what: "supporting field" });
    }
    let probes = system.window.grid(settings.probe_grid.max(2));
    let lie_s = generate_bracket_basis(s, settings.depth_cap, &probes, settings.rank_tol)?;
    let brackets: Vec<VectorField> =
        analysis.family.generators.iter().flat_map(|g| s.iter().map(move |sj| lie_bracket(g, sj))).collect();
    let points = system.window.grid(system.budgets.grid_per_axis.max(2));
    let seed = system.budgets.seed;
    let tol = settings.span_tol;

    let eval_point = |i: usize| -> Result<PointClauses, Error> {
        let x = &points[i];
        let proj = analysis.projection_at(x, settings)?;
        let s_at: Vec<Vec<f64>> = s.iter().map(|f| f.eval_vec(x)).collect::<Result<_, EvalError>>()?;
        let ps: Vec<Vec<f64>> = s_at.iter().map(|v| proj.project(v)).collect();
        let mut out = PointClauses {
            a: crate::lie::numerical_rank(&ps, k, settings.rank_tol) == k - 1
                && ps.iter().all(|v| dot(v, v).sqrt() > tol),
            ..Default::default()
        };

        let mut span = analysis.family.evaluate(x)?;
        span.extend(s_at.iter().cloned());
        out.b = true;
        for b in &brackets {
            let bv = b.eval_vec(x)?;
            let scale = dot(&bv, &bv).sqrt().max(1.0);
            if span_residual(&span, &bv, settings.rank_tol) > tol * scale {
                out.b = false;
            }
        }

        // Normal of π(S) inside the quotient.
        let s_span = span_basis(&ps, k, settings.rank_tol);
        let normal = complement_basis(&s_span, k);
        out.c = if normal.len() == 1 {
            let nu = &normal[0];
            let generators = &analysis.family.generators;
            let guard = system.window.inflated(ESCAPE_INFLATION);
            let walker = LeafWalker {
                generators,
                guard: guard.clone(),
                policy: settings.walk_policy(&system.window),
                step: StepControl::default(),
                seed: derive_seed(seed, i as u64),
            };
            let mut leaf = LeafSample::new(x.clone());
            walker.extend(&mut leaf, 0..system.budgets.leaf_budget.max(1));
            let mut values: Vec<f64> = Vec::new();
            for f in &system.drifts {
                values.push(dot(nu, &proj.project(&f.eval_vec(x)?)));
            }
            for visit in &leaf.visits {
                if let Ok(vs) = shift_to_base(&system.drifts, generators, visit, StepControl::default(), Some(&guard)) {
                    values.extend(vs.iter().map(|v| dot(nu, &proj.project(v))));
                }
            }
            values.iter().all(|v| *v >= -settings.margin) || values.iter().all(|v| *v <= settings.margin)
        } else {
            false
        };

        let lie_at = lie_s.evaluate(x)?;
        out.d = true;
        for f in &system.drifts {
            let fv = f.eval_vec(x)?;
            let scale = dot(&fv, &fv).sqrt().max(1.0);
            if span_residual(&lie_at, &fv, settings.rank_tol) <= tol * scale {
                out.d = false;
            }
        }
        Ok(out)
    };
    let results = par::map_indexed(settings.exec, points.len(), eval_point);

    let mut clauses: [ClauseResult; 4] =
        std::array::from_fn(|_| ClauseResult { holds: true, checked: 0, failing_points: Vec::new() });
    for (x, r) in points.iter().zip(results) {
        let r = r?;
        for (c, ok) in clauses.iter_mut().zip([r.a, r.b, r.c, r.d]) {
            c.checked += 1;
            if !ok {
                c.holds = false;
                if c.failing_points.len() < 10 {
                    c.failing_points.push(x.clone());
                }
            }
        }
    }
    let [clause_a, clause_b, clause_c, clause_d] = clauses;
    let rejected_at: Vec<char> = [&clause_a, &clause_b, &clause_c, &clause_d]
        .iter()
        .zip(['a', 'b', 'c', 'd'])
        .filter(|(c, _)| !c.holds)
        .map(|(_, l)| l)
        .collect();
    let (conclusion, message) = if rejected_at.is_empty() {
        (
            SupportConclusion::NotControllable,
            "not globally controllable: supporting distribution verified on the grid".to_string(),
        )
    } else {
        let list: Vec<String> = rejected_at.iter().map(|c| format!("({c})")).collect();
        (SupportConclusion::CandidateRejected, format!("candidate rejected at clause {}", list.join(", ")))
    };
    Ok(SupportReport {
        codimension: k,
        clause_a,
        clause_b,
        clause_c,
        clause_d,
        conclusion,
        rejected_at,
        message,
        notes: vec![
            "the complement in the S-supported definition is read as the orthogonal complement of G".into(),
            format!("clauses checked on {} grid points only", points.len()),
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vf(src: &[&str]) -> VectorField {
        let vars: Vec<String> = (1..=src.len()).map(|i| format!("x{i}")).collect();
        VectorField::parse(src, &vars).unwrap()
    }

    #[test]
    fn determinant_examples() {
        let c = criterion_value(&vf(&["x2", "0"]), &[vf(&["0", "1"])], &[0.3, -0.7]).unwrap();
        assert!((c + 0.7).abs() < 1e-15);
        let c = criterion_value(
            &vf(&["0", "0", "sin(x1)"]),
            &[vf(&["1", "0", "0"]), vf(&["0", "1", "0"])],
            &[0.4, 1.0, 2.0],
        )
        .unwrap();
        assert!((c - 0.4f64.sin()).abs() < 1e-15);
        let g = vf(&["1", "x1", "0"]);
        assert_eq!(criterion_value(&g, &[g.clone(), vf(&["0", "0", "1"])], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert!(criterion_value(&g, std::slice::from_ref(&g), &[0.0; 3]).is_err());
    }

    #[test]
    fn sign_change_examples() {
        let vals = [0.5, -0.3, 0.1].map(|c| (vec![c], c));
        let (holds, w, _) = sign_change(vals, 1e-9);
        assert!(holds);
        assert_eq!(w, Witness::SignChange { y1: vec![0.5], c1: 0.5, y2: vec![-0.3], c2: -0.3 });
        let vals = [0.5, 0.2, 1e-12].map(|c| (vec![c], c));
        assert!(!sign_change(vals, 1e-9).0);
    }

    #[test]
    fn projection_examples() {
        let p = quotient_projection(&[vec![0.0, 1.0]], 2, 1e-8, Some(1)).unwrap();
        assert_eq!(p.k(), 1);
        assert!((p.project(&[3.0, 5.0])[0].abs() - 3.0).abs() < 1e-12);
        let p = quotient_projection(&[vec![0.0, 0.0, 2.0]], 3, 1e-8, Some(1)).unwrap();
        let v = p.project(&[1.5, -0.5, 7.0]);
        assert!((v[0] - 1.5).abs() < 1e-12 && (v[1] + 0.5).abs() < 1e-12);
        let p = quotient_projection(&[vec![1.0, 0.0], vec![0.0, 1.0]], 2, 1e-8, Some(2)).unwrap();
        assert_eq!(p.k(), 0);
        assert!(matches!(
            quotient_projection(&[vec![1.0, 0.0], vec![2.0, 0.0]], 2, 1e-8, Some(2)),
            Err(Error::RankMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn projection_is_orthonormal_complement() {
        let g = vec![vec![1.0, 2.0, -1.0, 0.5], vec![0.0, 1.0, 1.0, 1.0]];
        let p = quotient_projection(&g, 4, 1e-8, Some(2)).unwrap();
        for (i, q) in p.basis.iter().enumerate() {
            for v in &g {
                assert!(dot(q, v).abs() < 1e-12);
            }
            for (j, r) in p.basis.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot(q, r) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn residual_detects_span() {
        assert!(span_residual(&[vec![1.0, 1.0, 0.0]], &[2.0, 2.0, 0.0], 1e-8) < 1e-12);
        assert!((span_residual(&[vec![1.0, 0.0, 0.0]], &[0.0, 3.0, 4.0], 1e-8) - 5.0).abs() < 1e-12);
        assert!((span_residual(&[vec![0.0; 3]], &[0.0, 1.0, 0.0], 1e-8) - 1.0).abs() < 1e-12);
    }
}
