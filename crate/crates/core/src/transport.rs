//! Flows of vector fields, random exploration of the leaves of the driftless
//! system, and transport of drift vectors back to the base point of a leaf.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::field::VectorField;
use crate::ode::{Dopri5, FlowError, StepControl, Window};
use crate::par::derive_seed;

/// One piece of a control word: flow along `sign · g[field]` for `duration`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Letter {
    pub field: usize,
    pub sign: i8,
    pub duration: f64,
}

impl Letter {
    /// Signed flow time along the unsigned field.
    pub fn time(&self) -> f64 {
        f64::from(self.sign) * self.duration
    }
}

/// Piecewise-constant control word, applied left to right.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ControlWord(pub Vec<Letter>);

impl ControlWord {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total_duration(&self) -> f64 {
        self.0.iter().map(|l| l.duration).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Visit {
    pub point: Vec<f64>,
    pub word: ControlWord,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeafSample {
    pub base: Vec<f64>,
    pub visits: Vec<Visit>,
    /// Walk attempts made; escaped walks count against the budget.
    pub attempts: usize,
    pub escaped: usize,
    pub shifted_drifts: Vec<Vec<f64>>,
    /// Visits whose drift transport failed and were skipped.
    pub transport_failures: usize,
}

impl LeafSample {
    pub fn new(base: Vec<f64>) -> LeafSample {
        LeafSample {
            base,
            visits: Vec::new(),
            attempts: 0,
            escaped: 0,
            shifted_drifts: Vec::new(),
            transport_failures: 0,
        }
    }
}

/// `ψ^V_t(x0)`; `t` may be negative.
pub fn integrate_flow(
    v: &VectorField,
    x0: &[f64],
    t: f64,
    step: StepControl,
    guard: Option<&Window>,
) -> Result<Vec<f64>, FlowError> {
    let mut y = x0.to_vec();
    let mut ig = Dopri5::new(y.len(), step);
    ig.advance(|x, out| v.eval(x, out), &mut y, t, guard)?;
    Ok(y)
}

/// Carries the tangent vectors `etas` (at `y`) along `ψ^V_t` by integrating
/// the variational equation `v' = DV(x)·v` jointly with the trajectory.
/// The vectors are overwritten with `Φ(t)·eta`; the endpoint is returned.
pub fn pushforward_many(
    v: &VectorField,
    y: &[f64],
    t: f64,
    etas: &mut [Vec<f64>],
    step: StepControl,
    guard: Option<&Window>,
) -> Result<Vec<f64>, FlowError> {
    let n = y.len();
    let q = etas.len();
    let jac = v.compiled_jacobian();
    let mut state = Vec::with_capacity(n * (q + 1));
    state.extend_from_slice(y);
    for e in etas.iter() {
        state.extend_from_slice(e);
    }
    let mut ig = Dopri5::new(state.len(), step);
    let rhs = |s: &[f64], out: &mut [f64]| {
        let (x, vs) = s.split_at(n);
        let (dx, dvs) = out.split_at_mut(n);
        v.eval(x, dx)?;
        for (vj, dvj) in vs.chunks(n).zip(dvs.chunks_mut(n)) {
            jac.apply(x, vj, dvj)?;
        }
        Ok(())
    };
    ig.advance(rhs, &mut state, t, guard)?;
    for (j, e) in etas.iter_mut().enumerate() {
        e.copy_from_slice(&state[n * (j + 1)..n * (j + 2)]);
    }
    state.truncate(n);
    Ok(state)
}

/// `(ψ^V_t)_* eta` at `ψ^V_t(y)`.
pub fn pushforward_along(
    v: &VectorField,
    y: &[f64],
    t: f64,
    eta: &[f64],
    step: StepControl,
    guard: Option<&Window>,
) -> Result<Vec<f64>, FlowError> {
    let mut etas = vec![eta.to_vec()];
    pushforward_many(v, y, t, &mut etas, step, guard)?;
    Ok(etas.pop().unwrap())
}

/// Random-walk policy for leaf exploration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WalkPolicy {
    pub max_letters: usize,
    pub max_duration: f64,
}

impl Default for WalkPolicy {
    fn default() -> Self {
        WalkPolicy { max_letters: 8, max_duration: 1.0 }
    }
}

/// Leaf explorer over the driftless system `ẋ = Σ uⁱ gᵢ`. Walk `j` draws its
/// word from its own RNG stream, so any prefix of attempts is reproducible.
pub struct LeafWalker<'a> {
    pub generators: &'a [VectorField],
    pub guard: Window,
    pub policy: WalkPolicy,
    pub step: StepControl,
    pub seed: u64,
}

impl LeafWalker<'_> {
    fn random_word(&self, attempt: usize) -> ControlWord {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, attempt as u64));
        let len = rng.random_range(1..=self.policy.max_letters.max(1));
        let letters = (0..len)
            .map(|_| {
                let field = rng.random_range(0..self.generators.len());
                let sign = if rng.random_bool(0.5) { 1 } else { -1 };
                // Uniform on (0, max_duration].
                let duration = self.policy.max_duration * (1.0 - rng.random::<f64>());
                Letter { field, sign, duration }
            })
            .collect();
        ControlWord(letters)
    }

    /// Endpoint of `word` from `x`, or the first integration failure.
    pub fn follow(&self, x: &[f64], word: &ControlWord) -> Result<Vec<f64>, FlowError> {
        let mut y = x.to_vec();
        let mut ig = Dopri5::new(y.len(), self.step);
        for l in &word.0 {
            let g = &self.generators[l.field];
            ig.advance(|p, out| g.eval(p, out), &mut y, l.time(), Some(&self.guard))?;
        }
        Ok(y)
    }

    /// Runs walk attempts `range` and appends the successful ones to `leaf`.
    pub fn extend(&self, leaf: &mut LeafSample, range: std::ops::Range<usize>) {
        for attempt in range {
            let word = self.random_word(attempt);
            leaf.attempts += 1;
            match self.follow(&leaf.base, &word) {
                Ok(point) => leaf.visits.push(Visit { point, word }),
                Err(_) => leaf.escaped += 1,
            }
        }
    }
}

/// Samples `budget` random walks on the leaf through `x`. Walks leaving
/// `window` inflated by 20% are dropped.
pub fn sample_leaf(
    generators: &[VectorField],
    x: &[f64],
    budget: usize,
    policy: WalkPolicy,
    window: &Window,
    seed: u64,
) -> LeafSample {
    let walker = LeafWalker {
        generators,
        guard: window.inflated(crate::ode::ESCAPE_INFLATION),
        policy,
        step: StepControl::default(),
        seed,
    };
    let mut leaf = LeafSample::new(x.to_vec());
    walker.extend(&mut leaf, 0..budget.max(1));
    leaf
}

/// Drift values at `visit`, transported back to the base along the inverse
/// of the visit's word.
pub fn shift_to_base(
    drifts: &[VectorField],
    generators: &[VectorField],
    visit: &Visit,
    step: StepControl,
    guard: Option<&Window>,
) -> Result<Vec<Vec<f64>>, FlowError> {
    let mut vectors = drifts.iter().map(|f| f.eval_vec(&visit.point)).collect::<Result<Vec<_>, _>>()?;
    let mut y = visit.point.clone();
    for l in visit.word.0.iter().rev() {
        y = pushforward_many(&generators[l.field], &y, -l.time(), &mut vectors, step, guard)?;
    }
    Ok(vectors)
}

/// The Δ-shift of the drift set to the base point: `f(base)` for every drift,
/// then every visit's drift values transported back. Also stored in
/// `leaf.shifted_drifts`.
pub fn shift_drift_set(
    drifts: &[VectorField],
    generators: &[VectorField],
    leaf: &mut LeafSample,
    window: &Window,
) -> Result<Vec<Vec<f64>>, FlowError> {
    let guard = window.inflated(crate::ode::ESCAPE_INFLATION);
    let mut out = drifts.iter().map(|f| f.eval_vec(&leaf.base)).collect::<Result<Vec<_>, _>>()?;
    leaf.transport_failures = 0;
    for visit in &leaf.visits {
        match shift_to_base(drifts, generators, visit, StepControl::default(), Some(&guard)) {
            Ok(vs) => out.extend(vs),
            Err(_) => leaf.transport_failures += 1,
        }
    }
    leaf.shifted_drifts = out.clone();
    Ok(out)
}
