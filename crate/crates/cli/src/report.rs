//! Analysis report and its file outputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use blowup_core::context_map::HybridRepresentation;
use blowup_core::dimension::DimensionProfile;
use blowup_core::synth::{GroundTruth, SynthSpec};
use blowup_core::{Resolution, SingularLocusReport};
use serde::{Deserialize, Serialize};

use crate::config::{CommandKind, RunConfig};

pub const SCHEMA_VERSION: u32 = 1;
pub const TIMING_KEY: &str = "timing";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
}

impl ToolInfo {
    pub fn current() -> Self {
        ToolInfo {
            name: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudSummary {
    pub points: usize,
    pub dim: usize,
    pub labelled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthOutput {
    pub spec: SynthSpec,
    pub cloud_file: String,
    pub truth_file: String,
    pub truth: GroundTruth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CenterOutcome {
    Resolved { resolution: Box<Resolution> },
    Failed { error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenterResult {
    pub center_id: usize,
    #[serde(flatten)]
    pub outcome: CenterOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextEntry {
    pub position: usize,
    pub token: usize,
    pub context_size: usize,
    #[serde(default)]
    pub representation: Option<HybridRepresentation>,
    /// Cone cluster nearest to the divisor point, for singular tokens.
    #[serde(default)]
    pub component: Option<usize>,
    #[serde(default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Summary {
    pub singular_count: Option<usize>,
    pub undetermined_count: Option<usize>,
    pub centers_resolved: usize,
    pub centers_failed: usize,
    /// For blow-up commands: every resolved center satisfies the regularity
    /// check and the isomorphism check.
    pub theorem_holds: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Timing {
    pub total_ms: f64,
    pub stages_ms: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub schema_version: u32,
    pub tool: ToolInfo,
    pub command: CommandKind,
    pub config: RunConfig,
    pub cloud: Option<CloudSummary>,
    pub locus: Option<SingularLocusReport>,
    pub centers: Vec<CenterResult>,
    pub synth: Option<SynthOutput>,
    pub context: Option<Vec<ContextEntry>>,
    pub summary: Summary,
    pub timing: Timing,
}

impl AnalysisReport {
    pub fn new(config: RunConfig) -> Self {
        AnalysisReport {
            schema_version: SCHEMA_VERSION,
            tool: ToolInfo::current(),
            command: config.command,
            config,
            cloud: None,
            locus: None,
            centers: vec![],
            synth: None,
            context: None,
            summary: Summary::default(),
            timing: Timing::default(),
        }
    }
}

pub fn to_json(report: &AnalysisReport) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

pub fn write_report(report: &AnalysisReport, dir: &Path) -> Result<()> {
    let path = dir.join("report.json");
    fs::write(&path, to_json(report)?).with_context(|| format!("writing {}", path.display()))
}

/// JSON value of a report with the timing fields removed.
pub fn without_timing(mut v: serde_json::Value) -> serde_json::Value {
    if let Some(o) = v.as_object_mut() {
        o.remove(TIMING_KEY);
    }
    v
}

/// `r,V,dim` rows; `dim` is empty where undefined.
pub fn profile_csv(profile: &DimensionProfile) -> String {
    let mut s = String::from("r,V,dim\n");
    for p in &profile.samples {
        let dim = p.dim.map(|d| format!("{d:?}")).unwrap_or_default();
        s.push_str(&format!("{:?},{},{}\n", p.r, p.volume, dim));
    }
    s
}

pub fn write_profile(dir: &Path, name: &str, profile: &DimensionProfile) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, profile_csv(profile)).with_context(|| format!("writing {}", path.display()))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("-".to_string(), |x| format!("{x:.3}"))
}

/// Human-readable summary for standard output.
pub fn summary_table(report: &AnalysisReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("{} {}\n", report.command.name(), report.tool.version));
    if let Some(c) = &report.cloud {
        out.push_str(&format!("cloud: {} points in R^{}\n", c.points, c.dim));
    }
    if let Some(s) = &report.synth {
        out.push_str(&format!(
            "synth: {:?}, {} components, wrote {}\n",
            s.spec.kind,
            s.truth.components.len(),
            s.cloud_file
        ));
    }
    if let Some(l) = &report.locus {
        out.push_str(&format!(
            "singular points: {} (undetermined: {})\n",
            l.singular_ids.len(),
            l.undetermined_count()
        ));
        for (id, w) in l.witnesses.iter().take(20) {
            out.push_str(&format!(
                "  #{id:<8} dim {:.3} @ r={:.4} vs {:.3} @ r={:.4}  variation {:.3}\n",
                w.dim1, w.r1, w.dim2, w.r2, w.variation
            ));
        }
        if l.witnesses.len() > 20 {
            out.push_str(&format!("  ... {} more\n", l.witnesses.len() - 20));
        }
    }
    if !report.centers.is_empty() {
        out.push_str("center     k  lambda    center_var  exceptional (var, outcome)\n");
        for c in &report.centers {
            match &c.outcome {
                CenterOutcome::Resolved { resolution: r } => {
                    let ex: Vec<String> = r
                        .regularization
                        .verdicts
                        .iter()
                        .map(|v| format!("({}, {:?})", fmt_opt(v.max_variation), v.outcome))
                        .collect();
                    out.push_str(&format!(
                        "{:<10} {:<2} {:<9.4} {:<11} {}\n",
                        c.center_id,
                        r.cone.k(),
                        r.lambda,
                        fmt_opt(r.center_variation),
                        ex.join(" ")
                    ));
                }
                CenterOutcome::Failed { error } => out.push_str(&format!("{:<10} failed: {error}\n", c.center_id)),
            }
        }
    }
    if let Some(ctx) = &report.context {
        let sing = ctx
            .iter()
            .filter(|e| matches!(e.representation, Some(HybridRepresentation::Desingularized { .. })))
            .count();
        let errs = ctx.iter().filter(|e| e.error.is_some()).count();
        out.push_str(&format!(
            "context map: {} positions, {} desingularized, {} errors\n",
            ctx.len(),
            sing,
            errs
        ));
    }
    if let Some(t) = report.summary.theorem_holds {
        out.push_str(&format!("regularization: {}\n", if t { "holds" } else { "FAILS" }));
    }
    out.push_str(&format!("time: {:.1} ms\n", report.timing.total_ms));
    out
}
