//! Command orchestration and the JSON report.

use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::criterion::{
    global_verdict_with, verify_supporting_distribution, Analysis, PointVerdict, Status, SupportReport,
};
use crate::error::Error;
use crate::lie::RegularityReport;
use crate::metrics::{circle_length, estimate_cost, loop_scan, sr_distance, CostEstimate, LoopScan, MetricOptions};
use crate::reach::{
    coverage, cross_validate, simulate_reach, write_cloud_csv, Agreement, AgreementReport, ControlPolicy, OracleBudget,
    ReachCloud,
};
use crate::system::{Settings, SystemSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Audit,
    Check,
    Reach,
    Dist,
    Loop,
}

impl Command {
    pub fn parse(s: &str) -> Option<Command> {
        Some(match s {
            "audit" => Command::Audit,
            "check" => Command::Check,
            "reach" => Command::Reach,
            "dist" => Command::Dist,
            "loop" => Command::Loop,
            _ => return None,
        })
    }
}

/// Command-line budget overrides.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub grid: Option<usize>,
    pub leaf_budget: Option<usize>,
    pub traj: Option<usize>,
    pub horizon: Option<f64>,
    pub seed: Option<u64>,
}

impl Overrides {
    pub fn apply(&self, spec: &mut SystemSpec) {
        let b = &mut spec.budgets;
        if let Some(v) = self.grid {
            b.grid_per_axis = v;
        }
        if let Some(v) = self.leaf_budget {
            b.leaf_budget = v;
        }
        if let Some(v) = self.traj {
            b.n_traj = v;
        }
        if let Some(v) = self.horizon {
            b.horizon = v;
        }
        if let Some(v) = self.seed {
            b.seed = v;
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SystemEcho {
    pub name: String,
    pub command: Command,
    pub dim: usize,
    pub switched: bool,
    pub spec: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegularityEcho {
    pub grid_per_axis: usize,
    pub grid_points: usize,
    pub modal_rank: usize,
    pub constant_rank: bool,
    pub codimension: Option<usize>,
    pub singular_points: Vec<Vec<f64>>,
    pub finding: String,
    /// Fields of `G` kept during generation, as bracket words.
    pub family: Vec<FamilyEcho>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FamilyEcho {
    pub word: String,
    pub depth: usize,
    pub field: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerdictEcho {
    pub status: Status,
    pub codimension: Option<usize>,
    pub grid_points: usize,
    pub holding: usize,
    pub failing: usize,
    pub errors: Vec<crate::criterion::PointFailure>,
    pub notes: Vec<String>,
    pub supporting_distribution: Option<SupportReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReachSummary {
    pub origin: Vec<f64>,
    pub horizon: f64,
    pub trajectories: usize,
    pub escaped: usize,
    pub points: usize,
    pub cells_per_axis: usize,
    pub coverage: f64,
    pub policy: ControlPolicy,
}

#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum OracleSection {
    Agreement(AgreementReport),
    Reach(ReachSummary),
}

#[derive(Debug, Clone, Serialize)]
pub struct DistanceMetrics {
    pub from: Vec<f64>,
    pub to: Vec<f64>,
    pub cost_forward: CostEstimate,
    pub cost_backward: CostEstimate,
    pub sr_forward: CostEstimate,
    pub sr_backward: CostEstimate,
    /// Arc length of the forward and backward trajectories joined.
    pub circle_sr_length: Option<f64>,
    pub note: &'static str,
}

#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum MetricsSection {
    Distance(Box<DistanceMetrics>),
    Loops(LoopScan),
}

#[derive(Debug, Clone, Serialize)]
pub struct AssumptionsEcho {
    pub regular_on_grid: Option<bool>,
    pub regularity_finding: Option<String>,
    pub assume_not_dense: Option<bool>,
}

/// Field order is the serialized order.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub system: SystemEcho,
    pub hash: String,
    pub regularity: Option<RegularityEcho>,
    pub verdict: Option<VerdictEcho>,
    pub witnesses: Vec<PointVerdict>,
    pub oracle: Option<OracleSection>,
    pub metrics: Option<MetricsSection>,
    pub assumptions: AssumptionsEcho,
    pub seed: u64,
    pub version: String,
}

impl Report {
    /// 3 for a non-regular distribution, 2 when the oracle disagrees, else 0.
    pub fn exit_code(&self) -> i32 {
        let not_regular = self.regularity.as_ref().is_some_and(|r| !r.constant_rank)
            || self.verdict.as_ref().is_some_and(|v| v.status == Status::NotRegular);
        if not_regular {
            return 3;
        }
        if let Some(OracleSection::Agreement(a)) = &self.oracle {
            if a.overall == Agreement::Disagree {
                return 2;
            }
        }
        0
    }

    pub fn to_json(&self) -> Result<String, Error> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// One-line human summary.
    pub fn summary(&self) -> String {
        let mut parts = vec![format!("{}: {:?}", self.system.name, self.system.command).to_lowercase()];
        if let Some(r) = &self.regularity {
            parts.push(match r.codimension {
                Some(k) => format!("regular, codimension {k}"),
                None => format!("not regular ({} singular grid points)", r.singular_points.len()),
            });
        }
        if let Some(v) = &self.verdict {
            parts.push(v.status.as_str().to_string());
        }
        match &self.oracle {
            Some(OracleSection::Agreement(a)) => parts.push(format!("oracle {}", a.overall.as_str())),
            Some(OracleSection::Reach(r)) => parts.push(format!("coverage {:.3}", r.coverage)),
            None => {}
        }
        parts.join(", ")
    }
}

pub fn spec_hash(spec: &SystemSpec) -> String {
    hex::encode(Sha256::digest(spec.to_text().as_bytes()))
}

fn regularity_echo(analysis: &Analysis, spec: &SystemSpec) -> RegularityEcho {
    let r: &RegularityReport = &analysis.regularity;
    RegularityEcho {
        grid_per_axis: r.grid_per_axis,
        grid_points: r.points.len(),
        modal_rank: r.modal_rank,
        constant_rank: r.constant_rank,
        codimension: r.codimension,
        singular_points: r.singular_points.clone(),
        finding: r.finding.clone(),
        family: analysis
            .family
            .entries
            .iter()
            .map(|e| FamilyEcho {
                word: e.word.to_string(),
                depth: e.depth,
                field: e.field.display_with(&spec.vars).to_string(),
            })
            .collect(),
    }
}

/// Output of a pipeline run: the report plus any point cloud for CSV export.
pub struct RunOutput {
    pub report: Report,
    pub cloud: Option<ReachCloud>,
}

/// Runs `command` on `spec` (after applying `overrides`).
pub fn run_pipeline(
    spec: &SystemSpec,
    command: Command,
    overrides: &Overrides,
    settings: &Settings,
) -> Result<RunOutput, Error> {
    let mut spec = spec.clone();
    overrides.apply(&mut spec);
    let seed = spec.budgets.seed;
    let mut report = Report {
        system: SystemEcho {
            name: spec.name.clone(),
            command,
            dim: spec.dim(),
            switched: spec.is_switched(),
            spec: spec.to_text(),
        },
        hash: spec_hash(&spec),
        regularity: None,
        verdict: None,
        witnesses: Vec::new(),
        oracle: None,
        metrics: None,
        assumptions: AssumptionsEcho {
            regular_on_grid: None,
            regularity_finding: None,
            assume_not_dense: spec.assume_not_dense,
        },
        seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
    };
    let mut cloud_out = None;
    let metric_opts = MetricOptions { exec: settings.exec, ..MetricOptions::default() };

    match command {
        Command::Audit | Command::Check => {
            if command == Command::Check && spec.assume_not_dense.is_none() {
                return Err(Error::InvalidArgument(
                    "check requires `assume_not_dense = true|false` in the system file".into(),
                ));
            }
            let analysis = Analysis::new(&spec, settings)?;
            report.regularity = Some(regularity_echo(&analysis, &spec));
            report.assumptions.regular_on_grid = Some(analysis.regularity.constant_rank);
            report.assumptions.regularity_finding = Some(analysis.regularity.finding.clone());
            if command == Command::Check {
                let verdict = global_verdict_with(&spec, &analysis, settings)?;
                let support = match (verdict.codimension, spec.support.is_empty()) {
                    (Some(k), false) if k >= 2 => Some(verify_supporting_distribution(&spec, &spec.support, settings)?),
                    _ => None,
                };
                let budget = OracleBudget::from_spec(&spec);
                let agreement = cross_validate(&verdict, &spec, &analysis, &budget, seed, settings)?;
                report.verdict = Some(VerdictEcho {
                    status: verdict.status,
                    codimension: verdict.codimension,
                    grid_points: verdict.grid_points,
                    holding: verdict.points.iter().filter(|p| p.condition_holds).count(),
                    failing: verdict.points.iter().filter(|p| !p.condition_holds).count(),
                    errors: verdict.errors.clone(),
                    notes: verdict.notes.clone(),
                    supporting_distribution: support,
                });
                report.witnesses = verdict.points;
                report.oracle = Some(OracleSection::Agreement(agreement));
            }
        }
        Command::Reach => {
            let x0 = spec.from.clone().unwrap_or_else(|| spec.window.center());
            let policy = ControlPolicy::default();
            let cloud = simulate_reach(
                &spec,
                &x0,
                spec.budgets.horizon,
                spec.budgets.n_traj,
                &policy,
                0.1,
                seed,
                settings.exec,
            )?;
            let cells = 8;
            report.oracle = Some(OracleSection::Reach(ReachSummary {
                origin: x0,
                horizon: cloud.horizon,
                trajectories: cloud.trajectories,
                escaped: cloud.escaped,
                points: cloud.points.len(),
                cells_per_axis: cells,
                coverage: coverage(&cloud, &spec.window, cells),
                policy,
            }));
            cloud_out = Some(cloud);
        }
        Command::Dist => {
            let (Some(x), Some(y)) = (spec.from.clone(), spec.to.clone()) else {
                return Err(Error::InvalidArgument("dist needs `from` and `to` in the system file".into()));
            };
            let budget = spec.budgets.metric_budget;
            let cost_forward = estimate_cost(&spec, &x, &y, budget, &metric_opts, seed)?;
            let cost_backward = estimate_cost(&spec, &y, &x, budget, &metric_opts, seed.wrapping_add(1))?;
            let sr_forward = sr_distance(&spec, &x, &y, budget, &metric_opts, seed.wrapping_add(2))?;
            let sr_backward = sr_distance(&spec, &y, &x, budget, &metric_opts, seed.wrapping_add(3))?;
            let circle_sr_length = circle_length(&spec, &x, &cost_forward, &cost_backward, &metric_opts);
            report.metrics = Some(MetricsSection::Distance(Box::new(DistanceMetrics {
                from: x,
                to: y,
                cost_forward,
                cost_backward,
                sr_forward,
                sr_backward,
                circle_sr_length,
                note: "all values are upper bounds; the control cost is not symmetric",
            })));
        }
        Command::Loop => {
            let probes = if !spec.probes.is_empty() {
                spec.probes.clone()
            } else if let Some(x) = &spec.from {
                vec![x.clone()]
            } else {
                spec.window.grid(3)
            };
            let scan = loop_scan(&spec, &probes, spec.budgets.metric_budget, &metric_opts, seed)?;
            report.metrics = Some(MetricsSection::Loops(scan));
        }
    }
    Ok(RunOutput { report, cloud: cloud_out })
}

/// Writes the report JSON and, when present, the cloud CSV.
pub fn write_outputs(out: &RunOutput, json: Option<&Path>, csv: Option<&Path>) -> Result<(), Error> {
    if let Some(p) = json {
        std::fs::write(p, out.report.to_json()?)?;
    }
    if let (Some(p), Some(cloud)) = (csv, &out.cloud) {
        write_cloud_csv(cloud, std::fs::File::create(p)?)?;
    }
    Ok(())
}
