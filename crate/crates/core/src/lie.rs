//! The control Lie algebra `G = Lie{gᵢ}`: bracket generation, pointwise rank,
//! and the regularity audit that fixes the codimension.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::Error;
use crate::expr::EvalError;
use crate::field::{lie_bracket, VectorField};
use crate::ode::Window;
use crate::par::{self, Exec};

/// Default relative singular-value threshold for numerical rank.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;
pub const DEFAULT_DEPTH_CAP: usize = 4;

/// Bracket expression over generator indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BracketWord {
    Gen(usize),
    Bracket(Box<BracketWord>, Box<BracketWord>),
}

impl fmt::Display for BracketWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BracketWord::Gen(i) => write!(f, "g{}", i + 1),
            BracketWord::Bracket(a, b) => write!(f, "[{a}, {b}]"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FamilyEntry {
    pub field: VectorField,
    pub depth: usize,
    pub word: BracketWord,
}

/// Generators plus the brackets retained while building `G`.
#[derive(Debug, Clone)]
pub struct BracketFamily {
    pub generators: Vec<VectorField>,
    pub entries: Vec<FamilyEntry>,
}

impl BracketFamily {
    /// A family made of the generators only (no brackets).
    pub fn from_generators(generators: Vec<VectorField>) -> BracketFamily {
        let entries = generators
            .iter()
            .enumerate()
            .map(|(i, g)| FamilyEntry { field: g.clone(), depth: 1, word: BracketWord::Gen(i) })
            .collect();
        BracketFamily { generators, entries }
    }

    pub fn dim(&self) -> usize {
        self.generators.first().map_or(0, VectorField::dim)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn fields(&self) -> impl Iterator<Item = &VectorField> {
        self.entries.iter().map(|e| &e.field)
    }

    /// Every family field evaluated at `p`.
    pub fn evaluate(&self, p: &[f64]) -> Result<Vec<Vec<f64>>, EvalError> {
        self.fields().map(|f| f.eval_vec(p)).collect()
    }

    pub fn max_depth(&self) -> usize {
        self.entries.iter().map(|e| e.depth).max().unwrap_or(0)
    }
}

/// Number of singular values above `tol` times the largest one.
pub fn numerical_rank(vectors: &[Vec<f64>], n: usize, tol: f64) -> usize {
    if vectors.is_empty() || n == 0 {
        return 0;
    }
    let m = DMatrix::from_fn(n, vectors.len(), |i, j| vectors[j][i]);
    let sv = m.singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 || !max.is_finite() {
        return 0;
    }
    sv.iter().filter(|s| **s > tol * max).count()
}

/// Builds `Lie{generators}` level by level. A bracket is kept only if it
/// raises the numerical rank of the family at one or more probe points.
pub fn generate_bracket_basis(
    generators: &[VectorField],
    depth_cap: usize,
    probe_points: &[Vec<f64>],
    tol: f64,
) -> Result<BracketFamily, Error> {
    if generators.is_empty() {
        return Err(Error::EmptyGenerators);
    }
    let n = generators[0].dim();
    if let Some(g) = generators.iter().find(|g| g.dim() != n) {
        return Err(Error::Dimension { expected: n, got: g.dim(), what: "generator" });
    }
    let mut family = BracketFamily::from_generators(generators.to_vec());
    // Evaluated family columns per probe point; unevaluable probes are skipped.
    let mut columns: Vec<Option<Vec<Vec<f64>>>> = probe_points.iter().map(|p| family.evaluate(p).ok()).collect();
    let mut ranks: Vec<usize> = columns.iter().map(|c| c.as_ref().map_or(0, |c| numerical_rank(c, n, tol))).collect();
    let mut frontier: Vec<usize> = (0..family.len()).collect();
    let mut tried = std::collections::HashSet::new();
    for depth in 2..=depth_cap.max(1) {
        if ranks.iter().all(|&r| r == n) {
            break;
        }
        let mut added = Vec::new();
        for &a in &frontier {
            for b in 0..family.len() {
                if a == b || !tried.insert((a.min(b), a.max(b))) {
                    continue;
                }
                let (lo, hi) = (a.min(b), a.max(b));
                let cand = lie_bracket(&family.entries[lo].field, &family.entries[hi].field);
                if cand.is_zero() {
                    continue;
                }
                let mut raises = false;
                let mut evals = Vec::with_capacity(probe_points.len());
                for (k, p) in probe_points.iter().enumerate() {
                    let v = match (cand.eval_vec(p), &columns[k]) {
                        (Ok(v), Some(_)) => v,
                        _ => {
                            evals.push(None);
                            continue;
                        }
                    };
                    let mut cols = columns[k].clone().unwrap_or_default();
                    cols.push(v.clone());
                    if numerical_rank(&cols, n, tol) > ranks[k] {
                        raises = true;
                    }
                    evals.push(Some(v));
                }
                if !raises {
                    continue;
                }
                for (k, v) in evals.into_iter().enumerate() {
                    if let (Some(v), Some(cols)) = (v, columns[k].as_mut()) {
                        cols.push(v);
                        ranks[k] = numerical_rank(cols, n, tol);
                    }
                }
                let word = BracketWord::Bracket(
                    Box::new(family.entries[lo].word.clone()),
                    Box::new(family.entries[hi].word.clone()),
                );
                family.entries.push(FamilyEntry { field: cand, depth, word });
                added.push(family.len() - 1);
            }
        }
        if added.is_empty() {
            break;
        }
        frontier = added;
    }
    Ok(family)
}

/// Numerical rank of the evaluated family at `p`.
pub fn rank_at(family: &BracketFamily, p: &[f64], tol: f64) -> Result<usize, EvalError> {
    Ok(numerical_rank(&family.evaluate(p)?, family.dim(), tol))
}

#[derive(Debug, Clone, Serialize)]
pub struct RegularityReport {
    pub dim: usize,
    pub grid_per_axis: usize,
    pub points: Vec<Vec<f64>>,
    pub ranks: Vec<usize>,
    pub modal_rank: usize,
    pub constant_rank: bool,
    pub rank: Option<usize>,
    pub codimension: Option<usize>,
    pub singular_points: Vec<Vec<f64>>,
    /// A finite grid can only falsify regularity, never certify it.
    pub finding: String,
}

/// Evaluates the family rank on a tensor grid over `window`.
pub fn audit_regularity(
    family: &BracketFamily,
    window: &Window,
    grid_per_axis: usize,
    tol: f64,
    exec: Exec,
) -> Result<RegularityReport, EvalError> {
    let points = window.grid(grid_per_axis.max(2));
    let ranks =
        par::map_slice(exec, &points, |p| rank_at(family, p, tol)).into_iter().collect::<Result<Vec<_>, _>>()?;
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &r in &ranks {
        *counts.entry(r).or_default() += 1;
    }
    // Ties go to the larger rank.
    let modal_rank = counts.iter().max_by_key(|(r, c)| (**c, **r)).map(|(r, _)| *r).unwrap_or(0);
    let singular_points: Vec<Vec<f64>> =
        points.iter().zip(&ranks).filter(|(_, r)| **r != modal_rank).map(|(p, _)| p.clone()).collect();
    let constant_rank = singular_points.is_empty();
    let n = family.dim();
    let finding = if constant_rank {
        format!("no violation found on grid: rank {modal_rank} at all {} points", points.len())
    } else {
        format!(
            "rank not constant: {} of {} grid points differ from modal rank {modal_rank}",
            singular_points.len(),
            points.len()
        )
    };
    Ok(RegularityReport {
        dim: n,
        grid_per_axis: grid_per_axis.max(2),
        points,
        ranks,
        modal_rank,
        constant_rank,
        rank: constant_rank.then_some(modal_rank),
        codimension: constant_rank.then_some(n - modal_rank),
        singular_points,
        finding,
    })
}

/// `n − dim G`, only defined for a regular family.
pub fn codimension(report: &RegularityReport) -> Result<usize, Error> {
    match (report.constant_rank, report.rank) {
        (true, Some(r)) => Ok(report.dim - r),
        _ => Err(Error::NotRegular { singular_points: report.singular_points.len() }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vf(src: &[&str]) -> VectorField {
        let vars: Vec<String> = (1..=src.len()).map(|i| format!("x{i}")).collect();
        VectorField::parse(src, &vars).unwrap()
    }

    fn probes3() -> Vec<Vec<f64>> {
        Window::cube(3, -1.0, 1.0).grid(3)
    }

    #[test]
    fn heisenberg_family() {
        let gens = [vf(&["1", "0", "-x2/2"]), vf(&["0", "1", "x1/2"])];
        let fam = generate_bracket_basis(&gens, 4, &probes3(), DEFAULT_RANK_TOL).unwrap();
        assert_eq!(fam.len(), 3);
        assert_eq!(fam.entries[2].depth, 2);
        assert_eq!(fam.entries[2].field.to_string(), "(0, 0, 1)");
        assert_eq!(fam.entries[2].word.to_string(), "[g1, g2]");
        for p in probes3() {
            assert_eq!(rank_at(&fam, &p, DEFAULT_RANK_TOL).unwrap(), 3);
        }
    }

    #[test]
    fn commuting_and_single_generators() {
        let gens = [vf(&["1", "0", "0"]), vf(&["0", "1", "0"])];
        let fam = generate_bracket_basis(&gens, 4, &probes3(), DEFAULT_RANK_TOL).unwrap();
        assert_eq!(fam.len(), 2);
        let fam = generate_bracket_basis(&[vf(&["0", "0", "1"])], 4, &probes3(), DEFAULT_RANK_TOL).unwrap();
        assert_eq!(fam.len(), 1);
        assert_eq!(rank_at(&fam, &[0.3, 0.1, 2.0], DEFAULT_RANK_TOL).unwrap(), 1);
    }

    #[test]
    fn empty_generators_rejected() {
        assert!(matches!(generate_bracket_basis(&[], 4, &[], 1e-8), Err(Error::EmptyGenerators)));
    }

    #[test]
    fn rank_drops_on_line() {
        let fam = BracketFamily::from_generators(vec![vf(&["1", "0"]), vf(&["0", "x1"])]);
        assert_eq!(rank_at(&fam, &[0.0, 5.0], DEFAULT_RANK_TOL).unwrap(), 1);
        assert_eq!(rank_at(&fam, &[2.0, 5.0], DEFAULT_RANK_TOL).unwrap(), 2);
    }

    #[test]
    fn audit_examples() {
        let w = Window::cube(2, -2.0, 2.0);
        let fam = BracketFamily::from_generators(vec![vf(&["0", "1"])]);
        let rep = audit_regularity(&fam, &w, 11, DEFAULT_RANK_TOL, Exec::Sequential).unwrap();
        assert!(rep.constant_rank);
        assert_eq!(codimension(&rep).unwrap(), 1);

        let fam = BracketFamily::from_generators(vec![vf(&["1", "0"]), vf(&["0", "x1"])]);
        let rep = audit_regularity(&fam, &w, 11, DEFAULT_RANK_TOL, Exec::Sequential).unwrap();
        assert!(!rep.constant_rank);
        assert_eq!(rep.singular_points.len(), 11);
        assert!(rep.singular_points.iter().all(|p| p[0] == 0.0));
        assert!(codimension(&rep).is_err());

        let w3 = Window::new(vec![-2.0, -2.0, -3.0], vec![2.0, 2.0, 3.0]);
        let fam = BracketFamily::from_generators(vec![vf(&["0", "0", "1"])]);
        let rep = audit_regularity(&fam, &w3, 5, DEFAULT_RANK_TOL, Exec::Sequential).unwrap();
        assert_eq!(codimension(&rep).unwrap(), 2);
    }
}
