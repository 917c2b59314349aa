//! Is the origin interior to the convex hull of a finite point set in ℝᵏ?
//!
//! k = 1 and k = 2 are decided exactly; k ≥ 3 uses a fixed direction design
//! and can report "inside" for sets whose hull misses a thin cone of
//! directions, so it is flagged approximate.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Error;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvexVerdict {
    pub inside: bool,
    /// Covector `d` with `⟨d, p⟩ ≥ −margin` for every point, when outside.
    pub witness: Option<Vec<f64>>,
    pub exact: bool,
}

pub const DEFAULT_MARGIN: f64 = 1e-7;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// True iff `⟨d, p⟩ ≥ −margin` for every point.
pub fn witness_valid(points: &[Vec<f64>], d: &[f64], margin: f64) -> bool {
    points.iter().all(|p| dot(d, p) >= -margin)
}

pub fn interior_convex_test(points: &[Vec<f64>], margin: f64) -> Result<ConvexVerdict, Error> {
    let k = match points.first() {
        None => return Err(Error::InvalidArgument("convex test on an empty point list".into())),
        Some(p) => p.len(),
    };
    if let Some(p) = points.iter().find(|p| p.len() != k) {
        return Err(Error::Dimension { expected: k, got: p.len(), what: "quotient point" });
    }
    Ok(match k {
        0 => return Err(Error::InvalidArgument("convex test needs k >= 1".into())),
        1 => test_line(points, margin),
        2 => test_plane(points, margin),
        _ => test_design(points, margin, &sphere_design(k)),
    })
}

fn test_line(points: &[Vec<f64>], margin: f64) -> ConvexVerdict {
    let max = points.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
    let min = points.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
    if max > margin && min < -margin {
        return ConvexVerdict { inside: true, witness: None, exact: true };
    }
    let d = if min >= -margin { 1.0 } else { -1.0 };
    ConvexVerdict { inside: false, witness: Some(vec![d]), exact: true }
}

/// Sorted polar angles in `[0, 2π)` of points with norm above `margin`.
fn angles(points: &[Vec<f64>], margin: f64) -> Vec<f64> {
    let mut a: Vec<f64> =
        points.iter().filter(|p| p[0].hypot(p[1]) > margin).map(|p| p[1].atan2(p[0]).rem_euclid(TAU)).collect();
    a.sort_by(f64::total_cmp);
    a
}

fn test_plane(points: &[Vec<f64>], margin: f64) -> ConvexVerdict {
    let a = angles(points, margin);
    if a.is_empty() {
        return ConvexVerdict { inside: false, witness: Some(vec![1.0, 0.0]), exact: true };
    }
    let m = a.len();
    let (gap_at, gap) = (0..m)
        .map(|i| {
            let g = if i + 1 < m { a[i + 1] - a[i] } else { a[0] + TAU - a[m - 1] };
            (i, g)
        })
        .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
    if gap < PI {
        return ConvexVerdict { inside: true, witness: None, exact: true };
    }
    // Bisect the occupied arc, which spans 2π − gap ≤ π.
    let start = a[(gap_at + 1) % m];
    let mid = start + 0.5 * (TAU - gap);
    ConvexVerdict { inside: false, witness: Some(vec![mid.cos(), mid.sin()]), exact: true }
}

fn test_design(points: &[Vec<f64>], margin: f64, design: &[Vec<f64>]) -> ConvexVerdict {
    let mut worst: Option<(f64, &Vec<f64>)> = None;
    for d in design {
        let support = points.iter().map(|p| dot(d, p)).fold(f64::NEG_INFINITY, f64::max);
        if support <= margin && worst.is_none_or(|(s, _)| support < s) {
            worst = Some((support, d));
        }
    }
    match worst {
        None => ConvexVerdict { inside: true, witness: None, exact: false },
        Some((_, d)) => ConvexVerdict { inside: false, witness: Some(d.iter().map(|x| -x).collect()), exact: false },
    }
}

/// Deterministic unit directions in ℝᵏ: `±eᵢ`, `(±eᵢ ± eⱼ)/√2` (2k² in
/// total), plus 64·k seeded Gaussian directions.
pub fn sphere_design(k: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for i in 0..k {
        for s in [1.0, -1.0] {
            let mut d = vec![0.0; k];
            d[i] = s;
            out.push(d);
        }
    }
    let h = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..k {
        for j in i + 1..k {
            for (si, sj) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                let mut d = vec![0.0; k];
                d[i] = si * h;
                d[j] = sj * h;
                out.push(d);
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5e_edd1_2ec7);
    for _ in 0..64 * k {
        let mut d: Vec<f64> = (0..k).map(|_| standard_normal(&mut rng)).collect();
        let norm = d.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            d.iter_mut().for_each(|x| *x /= norm);
            out.push(d);
        }
    }
    out
}

/// Box–Muller draw from N(0, 1).
fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
}
