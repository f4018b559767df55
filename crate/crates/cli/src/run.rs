//! Executes a [`RunConfig`] and writes its outputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use blowup_core::context_map::{hybrid_embed, nearest_divisor_component, ContextWindow, HybridRepresentation};
use blowup_core::io::{self, Format};
use blowup_core::pipeline::default_r_loc;
use blowup_core::singularity::{singular_locus_with_profiles, verdict};
use blowup_core::synth::generate;
use blowup_core::tangent_cone::{estimate_tangent_cone, TangentConeEstimate};
use blowup_core::{dimension, resolve_center, PointCloud, SingularLocusReport};
use rayon::prelude::*;

use crate::config::{CommandKind, ProfileOutput, RunConfig};
use crate::report::{write_profile, write_report, AnalysisReport, CenterOutcome, CenterResult, CloudSummary, ContextEntry, SynthOutput};

/// Outcome of a run that completed without an error.
pub struct RunOutcome {
    pub report: AnalysisReport,
    /// A blow-up command found a center where the regularity check fails.
    pub theorem_failed: bool,
}

struct Stopwatch {
    start: Instant,
    stages: BTreeMap<String, f64>,
}

impl Stopwatch {
    fn new() -> Self {
        Stopwatch {
            start: Instant::now(),
            stages: BTreeMap::new(),
        }
    }

    fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.stages.insert(stage.to_string(), t.elapsed().as_secs_f64() * 1e3);
        out
    }
}

fn input_format(config: &RunConfig, path: &Path) -> Result<Format> {
    config
        .format
        .or_else(|| Format::from_extension(path))
        .with_context(|| format!("cannot infer format of {}; pass --format", path.display()))
}

fn load_cloud(config: &RunConfig) -> Result<PointCloud> {
    let [path] = config.inputs.as_slice() else {
        bail!("expected exactly one input file, got {}", config.inputs.len());
    };
    let format = input_format(config, path)?;
    io::ingest(path, format).with_context(|| format!("reading {}", path.display()))
}

fn summarize(cloud: &PointCloud) -> CloudSummary {
    CloudSummary {
        points: cloud.len(),
        dim: cloud.dim(),
        labelled: cloud.labels().is_some(),
    }
}

pub fn execute(config: &RunConfig) -> Result<RunOutcome> {
    config.validate()?;
    let mut clock = Stopwatch::new();
    let mut report = AnalysisReport::new(config.clone());
    let out = &config.out_dir;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut theorem_failed = false;

    match config.command {
        CommandKind::Synth => {
            let spec = config.synth.clone().context("synth needs a spec")?;
            let (cloud, truth) = clock.time("generate", || generate(&spec))?;
            let format = config.format.unwrap_or(Format::Csv);
            let cloud_file = match format {
                Format::Csv => "cloud.csv",
                Format::RawF32 => "cloud.f32",
                Format::RawF64 => "cloud.f64",
            };
            io::write(&cloud, &out.join(cloud_file), format)?;
            let truth_file = "truth.json";
            fs::write(out.join(truth_file), serde_json::to_string_pretty(&truth)? + "\n")
                .with_context(|| format!("writing {}", out.join(truth_file).display()))?;
            report.cloud = Some(summarize(&cloud));
            report.synth = Some(SynthOutput {
                spec,
                cloud_file: cloud_file.into(),
                truth_file: truth_file.into(),
                truth,
            });
        }
        CommandKind::Detect => {
            let cloud = clock.time("ingest", || load_cloud(config))?;
            let (locus, profiles) = clock.time("locus", || singular_locus_with_profiles(&cloud, &config.singularity))?;
            let dir = out.join("profiles");
            if config.profiles != ProfileOutput::None {
                fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            for (i, p) in profiles.iter().enumerate() {
                let keep = match config.profiles {
                    ProfileOutput::None => false,
                    ProfileOutput::Singular => locus.contains(i),
                    ProfileOutput::All => true,
                };
                if keep {
                    write_profile(&dir, &format!("point_{i}.csv"), p)?;
                }
            }
            report.summary.singular_count = Some(locus.singular_ids.len());
            report.summary.undetermined_count = Some(locus.undetermined_count());
            report.cloud = Some(summarize(&cloud));
            report.locus = Some(locus);
        }
        CommandKind::Blowup | CommandKind::VerifyTheorem1 => {
            let cloud = clock.time("ingest", || load_cloud(config))?;
            let (locus, _) = clock.time("locus", || singular_locus_with_profiles(&cloud, &config.singularity))?;
            let centers = config.centers.clone().unwrap_or_else(|| locus.singular_ids.clone());
            if let Some(&bad) = centers.iter().find(|&&c| c >= cloud.len()) {
                bail!("center {bad} out of range for {} points", cloud.len());
            }
            let results: Vec<CenterResult> = clock.time("resolve", || {
                centers
                    .par_iter()
                    .map(|&id| {
                        let outcome = match resolve_center(
                            &cloud,
                            Some(id),
                            cloud.point(id),
                            &locus.params,
                            &config.cone,
                            config.lambda,
                            config.divisor,
                            config.seed,
                        ) {
                            Ok(r) => CenterOutcome::Resolved { resolution: Box::new(r) },
                            Err(e) => CenterOutcome::Failed { error: e.to_string() },
                        };
                        CenterResult { center_id: id, outcome }
                    })
                    .collect()
            });
            let dir = out.join("profiles");
            fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            let mut holds = true;
            for c in &results {
                match &c.outcome {
                    CenterOutcome::Resolved { resolution: r } => {
                        report.summary.centers_resolved += 1;
                        holds &= r.theorem_holds && r.isomorphism.ok;
                        write_profile(&dir, &format!("center_{}.csv", c.center_id), &r.center_profile)?;
                        for v in &r.regularization.verdicts {
                            write_profile(&dir, &format!("center_{}_exceptional_{}.csv", c.center_id, v.index), &v.profile)?;
                        }
                    }
                    CenterOutcome::Failed { .. } => {
                        report.summary.centers_failed += 1;
                        holds = false;
                    }
                }
            }
            report.summary.singular_count = Some(locus.singular_ids.len());
            report.summary.undetermined_count = Some(locus.undetermined_count());
            report.summary.theorem_holds = Some(holds);
            theorem_failed = config.command == CommandKind::VerifyTheorem1 && !holds;
            report.cloud = Some(summarize(&cloud));
            report.locus = Some(locus);
            report.centers = results;
        }
        CommandKind::ContextMap => {
            let cloud = clock.time("ingest", || load_cloud(config))?;
            let ctx = config.context.as_ref().context("context-map needs a token sequence")?;
            if let Some(&bad) = ctx.sequence.iter().find(|&&t| t >= cloud.len()) {
                bail!("token {bad} out of range for table of {} rows", cloud.len());
            }
            let (locus, profiles) = clock.time("locus", || singular_locus_with_profiles(&cloud, &config.singularity))?;
            let entries = clock.time("context", || context_entries(&cloud, &locus, &profiles, config))?;
            report.summary.singular_count = Some(locus.singular_ids.len());
            report.summary.undetermined_count = Some(locus.undetermined_count());
            report.cloud = Some(summarize(&cloud));
            report.locus = Some(locus);
            report.context = Some(entries);
        }
    }

    report.timing.stages_ms = clock.stages;
    report.timing.total_ms = clock.start.elapsed().as_secs_f64() * 1e3;
    write_report(&report, out)?;
    Ok(RunOutcome { report, theorem_failed })
}

fn context_entries(
    cloud: &PointCloud,
    locus: &SingularLocusReport,
    profiles: &[dimension::DimensionProfile],
    config: &RunConfig,
) -> Result<Vec<ContextEntry>> {
    let ctx = config.context.as_ref().context("context-map needs a token sequence")?;
    let rows: Vec<Vec<f64>> = ctx.sequence.iter().map(|&t| cloud.point(t).to_vec()).collect();
    let positions: Vec<usize> = ctx.positions.clone().unwrap_or_else(|| (0..ctx.sequence.len()).collect());
    if let Some(&bad) = positions.iter().find(|&&p| p >= ctx.sequence.len()) {
        bail!("position {bad} out of range for a sequence of {}", ctx.sequence.len());
    }
    let mut cones: BTreeMap<usize, Result<TangentConeEstimate, String>> = BTreeMap::new();
    let mut cone_for = |token: usize| -> Result<TangentConeEstimate, String> {
        cones
            .entry(token)
            .or_insert_with(|| {
                let p = &profiles[token];
                let v = verdict(p, &locus.params);
                let r_loc = config.cone.r_loc.unwrap_or_else(|| default_r_loc(p, &v));
                estimate_tangent_cone(cloud, cloud.point(token), r_loc, &config.cone).map_err(|e| e.to_string())
            })
            .clone()
    };
    let mut out = Vec::with_capacity(positions.len());
    for p in positions {
        let token = ctx.sequence[p];
        let mut entry = ContextEntry {
            position: p,
            token,
            context_size: 0,
            representation: None,
            component: None,
            error: None,
        };
        let result = ContextWindow::from_sequence(&rows, p, ctx.window)
            .and_then(|w| {
                entry.context_size = w.len();
                hybrid_embed(token, &w, locus, cloud, &ctx.aggregator)
            })
            .map_err(|e| e.to_string());
        match result {
            Ok(rep) => {
                if let HybridRepresentation::Desingularized { divisor_point, .. } = &rep {
                    match cone_for(token).and_then(|c| nearest_divisor_component(divisor_point, &c).map_err(|e| e.to_string())) {
                        Ok(j) => entry.component = Some(j),
                        Err(e) => entry.error = Some(e),
                    }
                }
                entry.representation = Some(rep);
            }
            Err(e) => entry.error = Some(e),
        }
        out.push(entry);
    }
    Ok(out)
}
