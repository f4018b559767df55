//! `blowup`: detect singular points in an embedding cloud, blow them up and
//! check that the exceptional points are regular.
//!
//! Exit codes: 0 success, 2 invalid input or parameters, 3 the regularity
//! check failed (`verify-theorem1`).

mod config;
mod report;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use blowup_core::context_map::AggregatorSpec;
use blowup_core::io::Format;
use blowup_core::synth::{SynthKind, SynthSpec};
use blowup_core::{DivisorMode, Estimator, LambdaPolicy, RMaxPolicy};
use clap::{Args, Parser, Subcommand, ValueEnum};

use config::{CommandKind, ContextConfig, ProfileOutput, RunConfig};

const EXIT_INVALID: u8 = 2;
const EXIT_THEOREM: u8 = 3;

#[derive(Parser)]
#[command(name = "blowup", version, about = "Singularity detection and point blow-up for embedding clouds")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic cloud with ground truth.
    Synth(SynthArgs),
    /// Compute the singular locus of a cloud.
    Detect(DetectArgs),
    /// Blow up singular points and check the exceptional points.
    Blowup(BlowupArgs),
    /// Like `blowup`, but exit with status 3 unless every center regularizes.
    VerifyTheorem1(BlowupArgs),
    /// Hybrid embeddings of a token sequence through the context map.
    ContextMap(ContextArgs),
    /// Re-run the configuration stored in a report and compare the result.
    Report(ReportArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (0 = one per core).
    #[arg(long, env = "BLOWUP_THREADS", default_value_t = 0)]
    threads: usize,
}

#[derive(Args)]
struct InputArgs {
    /// Input cloud (CSV, or EMB1 binary).
    #[arg(long)]
    input: PathBuf,
    /// Input format; inferred from the extension (.csv, .f32, .f64) if omitted.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    RawF32,
    RawF64,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::RawF32 => Format::RawF32,
            FormatArg::RawF64 => Format::RawF64,
        }
    }
}

#[derive(Args)]
struct DetectParams {
    /// Singularity threshold ε.
    #[arg(long, default_value_t = blowup_core::singularity::DEFAULT_EPSILON)]
    epsilon: f64,
    /// `auto`, a radius, or `knn:K` for the K-th neighbor distance per point.
    #[arg(long, default_value = "auto", value_parser = parse_r_max)]
    r_max: RMaxPolicy,
    /// Radii per profile.
    #[arg(long, default_value_t = blowup_core::dimension::DEFAULT_GRID_SIZE)]
    grid_size: usize,
    /// The grid starts at this neighbor's distance (self counts as the first).
    #[arg(long, default_value_t = blowup_core::dimension::DEFAULT_START_NEIGHBOR)]
    start_neighbor: usize,
    /// `two-point` or `window:W` (odd W >= 3).
    #[arg(long, default_value = "window:15", value_parser = parse_estimator)]
    estimator: Estimator,
    /// Smallest ball count at which a dimension sample is defined.
    #[arg(long, default_value_t = blowup_core::dimension::DEFAULT_V_MIN)]
    v_min: usize,
}

#[derive(Args)]
struct DetectArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    params: DetectParams,
    /// Which per-point profile CSVs to write.
    #[arg(long, value_enum, default_value_t = ProfileOutput::Singular)]
    profiles: ProfileOutput,
}

#[derive(Args)]
struct ConeArgs {
    /// Fixed cluster count (default: automatic).
    #[arg(long)]
    k: Option<usize>,
    /// Starting cluster count for automatic k.
    #[arg(long, default_value_t = blowup_core::tangent_cone::DEFAULT_K_MAX)]
    k_max: usize,
    /// Merge clusters closer than this angle (degrees).
    #[arg(long, default_value_t = blowup_core::tangent_cone::DEFAULT_MERGE_ANGLE_DEG)]
    merge_angle_deg: f64,
    /// Directions closer than this fraction of r_loc only join existing clusters.
    #[arg(long, default_value_t = blowup_core::tangent_cone::DEFAULT_CORE_FRACTION)]
    core_fraction: f64,
    /// Locality radius for secant directions (default: from the witness).
    #[arg(long)]
    r_loc: Option<f64>,
    /// Blow-up scale λ: `auto` or a positive number.
    #[arg(long, default_value = "auto", value_parser = parse_lambda)]
    lambda: LambdaPolicy,
}

#[derive(Args)]
struct BlowupArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    params: DetectParams,
    #[command(flatten)]
    cone: ConeArgs,
    /// Center point ids (repeatable); default: every detected singular point.
    #[arg(long = "center")]
    centers: Vec<usize>,
    /// Replace the per-cluster exceptional points with this many random ones.
    #[arg(long)]
    dense_divisor: Option<usize>,
    /// Seed for sampled checks and the dense divisor.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ContextArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    params: DetectParams,
    #[command(flatten)]
    cone: ConeArgs,
    /// File of token ids (rows of the input), separated by whitespace or commas.
    #[arg(long, conflicts_with = "tokens")]
    sequence: Option<PathBuf>,
    /// Token ids inline, comma-separated.
    #[arg(long, value_delimiter = ',')]
    tokens: Vec<usize>,
    /// Positions to embed (default: all).
    #[arg(long, value_delimiter = ',')]
    positions: Vec<usize>,
    /// Half-width k of the context window.
    #[arg(long, default_value_t = 2)]
    window: usize,
    /// Aggregator as inline JSON or a JSON file: {"kind":"mean"} or
    /// {"kind":"softmax_attention","q":[...],"tau":t}.
    #[arg(long)]
    aggregator: Option<String>,
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Seed for the generator (required).
    #[arg(long)]
    seed: u64,
    /// Spec as inline JSON or a JSON file; its seed is replaced by --seed.
    /// Overrides the shape flags.
    #[arg(long)]
    spec: Option<String>,
    #[arg(long, value_enum, default_value_t = KindArg::FlatPatch)]
    kind: KindArg,
    #[arg(long, default_value_t = 10)]
    ambient: usize,
    /// Component dimensions, comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "2")]
    dims: Vec<usize>,
    /// Samples per component.
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    /// Noise σ (default: 0.01 × radius).
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
    #[arg(long, default_value_t = 45.0)]
    cone_half_angle_deg: f64,
    #[arg(long, default_value_t = 30.0)]
    min_angle_deg: f64,
    /// Output cloud format.
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    AffineSubspaceUnion,
    CrossingLines,
    Cone,
    SpherePatch,
    FlatPatch,
}

impl From<KindArg> for SynthKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::AffineSubspaceUnion => SynthKind::AffineSubspaceUnion,
            KindArg::CrossingLines => SynthKind::CrossingLines,
            KindArg::Cone => SynthKind::Cone,
            KindArg::SpherePatch => SynthKind::SpherePatch,
            KindArg::FlatPatch => SynthKind::FlatPatch,
        }
    }
}

#[derive(Args)]
struct ReportArgs {
    /// A report.json written by an earlier run.
    #[arg(long)]
    report: PathBuf,
    /// Write the replay here instead of the original output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, env = "BLOWUP_THREADS")]
    threads: Option<usize>,
}

fn parse_r_max(s: &str) -> Result<RMaxPolicy, String> {
    if s == "auto" {
        return Ok(RMaxPolicy::Auto);
    }
    if let Some(k) = s.strip_prefix("knn:") {
        return k.parse().map(RMaxPolicy::PerPointNeighbor).map_err(|e| e.to_string());
    }
    s.parse().map(RMaxPolicy::Fixed).map_err(|_| format!("expected auto, knn:K or a radius, got {s:?}"))
}

fn parse_estimator(s: &str) -> Result<Estimator, String> {
    if s == "two-point" {
        return Ok(Estimator::TwoPoint);
    }
    s.strip_prefix("window:")
        .and_then(|w| w.parse().ok())
        .map(Estimator::RegressionWindow)
        .ok_or_else(|| format!("expected two-point or window:W, got {s:?}"))
}

fn parse_lambda(s: &str) -> Result<LambdaPolicy, String> {
    if s == "auto" {
        return Ok(LambdaPolicy::Auto);
    }
    s.parse().map(LambdaPolicy::Fixed).map_err(|_| format!("expected auto or a number, got {s:?}"))
}

fn base_config(command: CommandKind, common: &CommonArgs) -> RunConfig {
    let mut c = RunConfig::new(command, common.out.clone());
    c.threads = common.threads;
    c
}

fn apply_input(c: &mut RunConfig, input: &InputArgs) {
    c.inputs = vec![input.input.clone()];
    c.format = input.format.map(Format::from);
}

fn apply_params(c: &mut RunConfig, p: &DetectParams) {
    c.singularity.epsilon = p.epsilon;
    let d = &mut c.singularity.dimension;
    d.r_max = p.r_max;
    d.grid_size = p.grid_size;
    d.start_neighbor = p.start_neighbor;
    d.estimator = p.estimator;
    d.v_min = p.v_min;
}

fn apply_cone(c: &mut RunConfig, a: &ConeArgs) {
    c.cone.k = a.k;
    c.cone.k_max = a.k_max;
    c.cone.merge_angle = a.merge_angle_deg.to_radians();
    c.cone.core_fraction = a.core_fraction;
    c.cone.r_loc = a.r_loc;
    c.lambda = a.lambda;
}

/// Parses `arg` as JSON if it looks like an object, otherwise reads it as a file.
fn read_json<T: serde::de::DeserializeOwned>(arg: &str) -> Result<T> {
    if arg.trim_start().starts_with('{') {
        return serde_json::from_str(arg).with_context(|| format!("parsing {arg}"));
    }
    let text = std::fs::read_to_string(arg).with_context(|| format!("reading {arg}"))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {arg}"))
}

fn read_sequence(path: &Path) -> Result<Vec<usize>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().with_context(|| format!("bad token id {t:?} in {}", path.display())))
        .collect()
}

fn build_config(cmd: Cmd) -> Result<Option<RunConfig>> {
    let config = match cmd {
        Cmd::Synth(a) => {
            let mut c = base_config(CommandKind::Synth, &a.common);
            let mut spec = match &a.spec {
                Some(p) => read_json::<SynthSpec>(p)?,
                None => SynthSpec {
                    kind: a.kind.into(),
                    ambient: a.ambient,
                    dims: a.dims.clone(),
                    samples: a.samples,
                    noise: a.noise,
                    seed: a.seed,
                    radius: a.radius,
                    cone_half_angle_deg: a.cone_half_angle_deg,
                    min_principal_angle_deg: a.min_angle_deg,
                },
            };
            spec.seed = a.seed;
            c.seed = a.seed;
            c.format = Some(a.format.into());
            c.synth = Some(spec);
            c
        }
        Cmd::Detect(a) => {
            let mut c = base_config(CommandKind::Detect, &a.common);
            apply_input(&mut c, &a.input);
            apply_params(&mut c, &a.params);
            c.profiles = a.profiles;
            c
        }
        Cmd::Blowup(a) => blowup_config(CommandKind::Blowup, a),
        Cmd::VerifyTheorem1(a) => blowup_config(CommandKind::VerifyTheorem1, a),
        Cmd::ContextMap(a) => {
            let mut c = base_config(CommandKind::ContextMap, &a.common);
            apply_input(&mut c, &a.input);
            apply_params(&mut c, &a.params);
            apply_cone(&mut c, &a.cone);
            let sequence = match &a.sequence {
                Some(p) => read_sequence(p)?,
                None => a.tokens.clone(),
            };
            if sequence.is_empty() {
                bail!("context-map needs --sequence or --tokens");
            }
            let aggregator = match &a.aggregator {
                Some(p) => read_json(p)?,
                None => AggregatorSpec::Mean,
            };
            c.context = Some(ContextConfig {
                sequence,
                positions: (!a.positions.is_empty()).then_some(a.positions),
                window: a.window,
                aggregator,
            });
            c
        }
        Cmd::Report(a) => {
            replay(&a)?;
            return Ok(None);
        }
    };
    Ok(Some(config))
}

fn blowup_config(kind: CommandKind, a: BlowupArgs) -> RunConfig {
    let mut c = base_config(kind, &a.common);
    apply_input(&mut c, &a.input);
    apply_params(&mut c, &a.params);
    apply_cone(&mut c, &a.cone);
    c.centers = (!a.centers.is_empty()).then_some(a.centers);
    c.divisor = match a.dense_divisor {
        Some(count) => DivisorMode::Dense { count, seed: a.seed },
        None => DivisorMode::Cone,
    };
    c.seed = a.seed;
    c
}

fn init_threads(n: usize) {
    if n > 0 {
        // only fails if the pool already exists, which is fine
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

/// Replays the config echo of an earlier report and compares the new report
/// with the old one, ignoring timing (and the output directory if moved).
fn replay(a: &ReportArgs) -> Result<()> {
    let old_text = std::fs::read_to_string(&a.report).with_context(|| format!("reading {}", a.report.display()))?;
    let old: serde_json::Value = serde_json::from_str(&old_text).with_context(|| format!("parsing {}", a.report.display()))?;
    let mut config: RunConfig = serde_json::from_value(old.get("config").cloned().context("report has no config")?)
        .context("report config does not match this tool version")?;
    if let Some(out) = &a.out {
        config.out_dir = out.clone();
    }
    if let Some(t) = a.threads {
        config.threads = t;
    }
    init_threads(config.threads);
    let outcome = run::execute(&config)?;
    print!("{}", report::summary_table(&outcome.report));
    let mut fresh = report::without_timing(serde_json::to_value(&outcome.report)?);
    let mut old = report::without_timing(old);
    for v in [&mut fresh, &mut old] {
        if let Some(c) = v.get_mut("config").and_then(|c| c.as_object_mut()) {
            c.remove("out_dir");
            c.remove("threads");
        }
    }
    if fresh == old {
        println!("replay: identical to {}", a.report.display());
        Ok(())
    } else {
        bail!("replay differs from {}", a.report.display())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match build_config(cli.command) {
        Ok(Some(c)) => c,
        Ok(None) => return ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(EXIT_INVALID);
        }
    };
    init_threads(config.threads);
    match run::execute(&config) {
        Ok(outcome) => {
            print!("{}", report::summary_table(&outcome.report));
            if outcome.theorem_failed {
                ExitCode::from(EXIT_THEOREM)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INVALID)
        }
    }
}
