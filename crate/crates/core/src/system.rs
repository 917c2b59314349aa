//! System definition files and numerical settings.
//!
//! The file format is line oriented, `key = value`, with `#` comments.
//! Expression lists are comma separated; window axes are `lo:hi` pairs.
//!
//! ```text
//! name = unicycle
//! vars = x1, x2, x3
//! drift = cos(x3), sin(x3), 0
//! control = 0, 0, 1
//! window = -2:2, -2:2, -pi:pi
//! assume_not_dense = true
//! ```
//!
//! Repeating `drift` declares a switched family. Optional keys: `dim`,
//! `frame` (repeatable, a pointwise frame of `G` for the determinant
//! criterion), `invariant` (repeatable, leaf-identifying functions),
//! `support` (repeatable, candidate supporting distribution), `from`, `to`,
//! `probe` (repeatable points for the metric commands), and the budgets
//! `grid`, `leaf_budget`, `traj`, `horizon`, `seed`, `metric_budget`.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::Error;
use crate::expr::{parse_expression, Expr};
use crate::field::VectorField;
use crate::lie::{DEFAULT_DEPTH_CAP, DEFAULT_RANK_TOL};
use crate::ode::Window;
use crate::par::Exec;
use crate::transport::WalkPolicy;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Budgets {
    pub grid_per_axis: usize,
    pub leaf_budget: usize,
    pub n_traj: usize,
    pub horizon: f64,
    pub seed: u64,
    pub metric_budget: usize,
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets { grid_per_axis: 5, leaf_budget: 200, n_traj: 2000, horizon: 20.0, seed: 1, metric_budget: 256 }
    }
}

/// Numerical knobs that are not part of the system file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Settings {
    pub rank_tol: f64,
    pub depth_cap: usize,
    pub margin: f64,
    pub eps_sign: f64,
    pub walk: WalkPolicy,
    /// Raise the walk's `max_duration` to half the smallest window side.
    pub auto_walk_duration: bool,
    /// Walks per incremental batch in the per-point check.
    pub leaf_batch: usize,
    /// Points per axis used to probe bracket rank while generating `G`.
    pub probe_grid: usize,
    /// Membership tolerance for the supporting-distribution clauses.
    pub span_tol: f64,
    pub exec: Exec,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            rank_tol: DEFAULT_RANK_TOL,
            depth_cap: DEFAULT_DEPTH_CAP,
            margin: crate::convex::DEFAULT_MARGIN,
            eps_sign: 1e-9,
            walk: WalkPolicy::default(),
            auto_walk_duration: true,
            leaf_batch: 16,
            probe_grid: 3,
            span_tol: 1e-6,
            exec: Exec::default(),
        }
    }
}

impl Settings {
    /// Leaf-walk policy scaled to `window`.
    pub fn walk_policy(&self, window: &Window) -> WalkPolicy {
        if !self.auto_walk_duration {
            return self.walk;
        }
        let min_side = window.lo.iter().zip(&window.hi).map(|(l, h)| h - l).fold(f64::INFINITY, f64::min);
        WalkPolicy { max_duration: self.walk.max_duration.max(0.5 * min_side), ..self.walk }
    }
}

/// A parsed, validated system definition. Source texts are kept so that
/// serialization reproduces the file.
#[derive(Debug, Clone)]
pub struct SystemSpec {
    pub name: String,
    pub vars: Vec<String>,
    pub drift_sources: Vec<Vec<String>>,
    pub control_sources: Vec<Vec<String>>,
    pub frame_sources: Vec<Vec<String>>,
    pub invariant_sources: Vec<String>,
    pub support_sources: Vec<Vec<String>>,
    pub window_sources: Vec<(String, String)>,
    pub window: Window,
    pub assume_not_dense: Option<bool>,
    pub budgets: Budgets,
    pub from: Option<Vec<f64>>,
    pub to: Option<Vec<f64>>,
    pub probes: Vec<Vec<f64>>,

    pub drifts: Vec<VectorField>,
    pub controls: Vec<VectorField>,
    pub frame: Vec<VectorField>,
    pub invariants: Vec<Expr>,
    pub support: Vec<VectorField>,
}

impl PartialEq for SystemSpec {
    fn eq(&self, o: &Self) -> bool {
        self.name == o.name
            && self.vars == o.vars
            && self.drift_sources == o.drift_sources
            && self.control_sources == o.control_sources
            && self.frame_sources == o.frame_sources
            && self.invariant_sources == o.invariant_sources
            && self.support_sources == o.support_sources
            && self.window == o.window
            && self.assume_not_dense == o.assume_not_dense
            && self.budgets == o.budgets
            && self.from == o.from
            && self.to == o.to
            && self.probes == o.probes
    }
}

fn split_list(value: &str) -> Vec<String> {
    value.split(',').map(|s| s.trim().to_string()).collect()
}

fn const_value(src: &str, line: usize) -> Result<f64, Error> {
    let e = parse_expression::<&str>(src, &[]).map_err(|e| Error::Spec { line, message: format!("{src:?}: {e}") })?;
    e.evaluate(&[]).map_err(|e| Error::Spec { line, message: format!("{src:?}: {e}") })
}

fn parse_point(value: &str, line: usize) -> Result<Vec<f64>, Error> {
    split_list(value).iter().map(|s| const_value(s, line)).collect()
}

fn parse_field(sources: &[String], vars: &[String], line: usize) -> Result<VectorField, Error> {
    if sources.len() != vars.len() {
        return Err(Error::Spec {
            line,
            message: format!("dimension mismatch: {} components for {} state variables", sources.len(), vars.len()),
        });
    }
    VectorField::parse(sources, vars).map_err(|e| Error::Spec { line, message: e.to_string() })
}

impl SystemSpec {
    pub fn dim(&self) -> usize {
        self.vars.len()
    }

    pub fn is_switched(&self) -> bool {
        self.drifts.len() > 1
    }

    pub fn from_text(text: &str) -> Result<SystemSpec, Error> {
        let mut name = None;
        let mut dim: Option<usize> = None;
        let mut vars: Option<Vec<String>> = None;
        let mut drifts: Vec<(usize, Vec<String>)> = Vec::new();
        let mut controls: Vec<(usize, Vec<String>)> = Vec::new();
        let mut frame: Vec<(usize, Vec<String>)> = Vec::new();
        let mut support: Vec<(usize, Vec<String>)> = Vec::new();
        let mut invariants: Vec<(usize, String)> = Vec::new();
        let mut window: Option<(usize, Vec<(String, String)>)> = None;
        let mut assume = None;
        let mut budgets = Budgets::default();
        let mut from = None;
        let mut to = None;
        let mut probes = Vec::new();
        let mut seen = std::collections::HashSet::new();

        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(Error::Spec { line, message: "expected `key = value`".into() });
            };
            let (key, value) = (key.trim(), value.trim());
            let repeatable = matches!(key, "drift" | "control" | "frame" | "support" | "invariant" | "probe");
            if !repeatable && !seen.insert(key.to_string()) {
                return Err(Error::Spec { line, message: format!("duplicate key {key:?}") });
            }
            let int = |v: &str| {
                v.parse::<u64>().map_err(|_| Error::Spec { line, message: format!("{key}: expected an integer") })
            };
            match key {
                "name" => name = Some(value.to_string()),
                "dim" => dim = Some(int(value)? as usize),
                "vars" => vars = Some(split_list(value)),
                "drift" => drifts.push((line, split_list(value))),
                "control" => controls.push((line, split_list(value))),
                "frame" => frame.push((line, split_list(value))),
                "support" => support.push((line, split_list(value))),
                "invariant" => invariants.push((line, value.to_string())),
                "window" => {
                    let axes = split_list(value)
                        .into_iter()
                        .map(|axis| match axis.split_once(':') {
                            Some((lo, hi)) => Ok((lo.trim().to_string(), hi.trim().to_string())),
                            None => Err(Error::Spec { line, message: format!("window axis {axis:?} must be lo:hi") }),
                        })
                        .collect::<Result<Vec<_>, _>>()?;
                    window = Some((line, axes));
                }
                "assume_not_dense" => {
                    assume = Some(match value {
                        "true" => true,
                        "false" => false,
                        _ => {
                            return Err(Error::Spec { line, message: "assume_not_dense must be true or false".into() })
                        }
                    })
                }
                "grid" => budgets.grid_per_axis = int(value)? as usize,
                "leaf_budget" => budgets.leaf_budget = int(value)? as usize,
                "traj" => budgets.n_traj = int(value)? as usize,
                "metric_budget" => budgets.metric_budget = int(value)? as usize,
                "seed" => budgets.seed = int(value)?,
                "horizon" => budgets.horizon = const_value(value, line)?,
                "from" => from = Some(parse_point(value, line)?),
                "to" => to = Some(parse_point(value, line)?),
                "probe" => probes.push(parse_point(value, line)?),
                other => return Err(Error::Spec { line, message: format!("unknown key {other:?}") }),
            }
        }

        let n = match (dim, &vars, drifts.first()) {
            (Some(d), _, _) => d,
            (None, Some(v), _) => v.len(),
            (None, None, Some((_, d))) => d.len(),
            _ => return Err(Error::Spec { line: 0, message: "cannot infer dimension".into() }),
        };
        let vars = vars.unwrap_or_else(|| (1..=n).map(|i| format!("x{i}")).collect());
        if vars.len() != n {
            return Err(Error::Spec {
                line: 0,
                message: format!("dimension mismatch: dim = {n} but {} variables", vars.len()),
            });
        }
        if n == 0 {
            return Err(Error::Spec { line: 0, message: "dimension must be at least 1".into() });
        }
        if drifts.is_empty() {
            return Err(Error::Spec { line: 0, message: "missing drift".into() });
        }
        if controls.is_empty() {
            return Err(Error::EmptyGenerators);
        }
        let fields = |list: &[(usize, Vec<String>)]| {
            list.iter().map(|(l, s)| parse_field(s, &vars, *l)).collect::<Result<Vec<_>, _>>()
        };
        let drift_fields = fields(&drifts)?;
        let control_fields = fields(&controls)?;
        let frame_fields = fields(&frame)?;
        let support_fields = fields(&support)?;
        let invariant_exprs = invariants
            .iter()
            .map(|(l, s)| parse_expression(s, &vars).map_err(|e| Error::Spec { line: *l, message: e.to_string() }))
            .collect::<Result<Vec<_>, _>>()?;
        let (wline, window_sources) = window.ok_or(Error::Spec { line: 0, message: "missing window".into() })?;
        if window_sources.len() != n {
            return Err(Error::Spec {
                line: wline,
                message: format!("dimension mismatch: window has {} axes, expected {n}", window_sources.len()),
            });
        }
        let mut lo = Vec::with_capacity(n);
        let mut hi = Vec::with_capacity(n);
        for (l, h) in &window_sources {
            let (l, h) = (const_value(l, wline)?, const_value(h, wline)?);
            if !(l < h) {
                return Err(Error::Spec { line: wline, message: format!("window axis {l}:{h} is empty") });
            }
            lo.push(l);
            hi.push(h);
        }
        for p in from.iter().chain(to.iter()).chain(probes.iter()) {
            if p.len() != n {
                return Err(Error::Spec {
                    line: 0,
                    message: format!("dimension mismatch: point with {} coordinates", p.len()),
                });
            }
        }
        Ok(SystemSpec {
            name: name.unwrap_or_else(|| "system".into()),
            vars,
            drift_sources: drifts.into_iter().map(|(_, s)| s).collect(),
            control_sources: controls.into_iter().map(|(_, s)| s).collect(),
            frame_sources: frame.into_iter().map(|(_, s)| s).collect(),
            invariant_sources: invariants.into_iter().map(|(_, s)| s).collect(),
            support_sources: support.into_iter().map(|(_, s)| s).collect(),
            window_sources,
            window: Window::new(lo, hi),
            assume_not_dense: assume,
            budgets,
            from,
            to,
            probes,
            drifts: drift_fields,
            controls: control_fields,
            frame: frame_fields,
            invariants: invariant_exprs,
            support: support_fields,
        })
    }

    /// Canonical text form; `from_text(to_text())` reproduces the spec.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let fmt_point = |p: &[f64]| p.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(", ");
        let _ = writeln!(s, "name = {}", self.name);
        let _ = writeln!(s, "vars = {}", self.vars.join(", "));
        for d in &self.drift_sources {
            let _ = writeln!(s, "drift = {}", d.join(", "));
        }
        for c in &self.control_sources {
            let _ = writeln!(s, "control = {}", c.join(", "));
        }
        for f in &self.frame_sources {
            let _ = writeln!(s, "frame = {}", f.join(", "));
        }
        for i in &self.invariant_sources {
            let _ = writeln!(s, "invariant = {i}");
        }
        for f in &self.support_sources {
            let _ = writeln!(s, "support = {}", f.join(", "));
        }
        let axes: Vec<String> = self.window_sources.iter().map(|(l, h)| format!("{l}:{h}")).collect();
        let _ = writeln!(s, "window = {}", axes.join(", "));
        if let Some(a) = self.assume_not_dense {
            let _ = writeln!(s, "assume_not_dense = {a}");
        }
        let b = &self.budgets;
        let _ = writeln!(s, "grid = {}", b.grid_per_axis);
        let _ = writeln!(s, "leaf_budget = {}", b.leaf_budget);
        let _ = writeln!(s, "traj = {}", b.n_traj);
        let _ = writeln!(s, "horizon = {:?}", b.horizon);
        let _ = writeln!(s, "seed = {}", b.seed);
        let _ = writeln!(s, "metric_budget = {}", b.metric_budget);
        if let Some(p) = &self.from {
            let _ = writeln!(s, "from = {}", fmt_point(p));
        }
        if let Some(p) = &self.to {
            let _ = writeln!(s, "to = {}", fmt_point(p));
        }
        for p in &self.probes {
            let _ = writeln!(s, "probe = {}", fmt_point(p));
        }
        s
    }

    /// Same system with the drift family negated (time reversal of the drift).
    pub fn time_reversed(&self) -> SystemSpec {
        let mut out = self.clone();
        out.drifts = self.drifts.iter().map(VectorField::negated).collect();
        out.drift_sources = out
            .drifts
            .iter()
            .map(|f| f.components().iter().map(|e| e.display_with(&self.vars).to_string()).collect())
            .collect();
        out.name = format!("{} (reversed drift)", self.name);
        out
    }
}

/// Reads and validates a system file.
pub fn load_spec(path: impl AsRef<Path>) -> Result<SystemSpec, Error> {
    let text = std::fs::read_to_string(path)?;
    SystemSpec::from_text(&text)
}
