//! Run configuration: everything needed to replay a run.

use std::path::PathBuf;

use blowup_core::context_map::AggregatorSpec;
use blowup_core::io::Format;
use blowup_core::synth::SynthSpec;
use blowup_core::tangent_cone::ConeParams;
use blowup_core::{DivisorMode, LambdaPolicy, SingularityParams};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    Synth,
    Detect,
    Blowup,
    VerifyTheorem1,
    ContextMap,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::Synth => "synth",
            CommandKind::Detect => "detect",
            CommandKind::Blowup => "blowup",
            CommandKind::VerifyTheorem1 => "verify-theorem1",
            CommandKind::ContextMap => "context-map",
        }
    }
}

/// Which per-point profile CSVs `detect` writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ProfileOutput {
    None,
    #[default]
    Singular,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextConfig {
    /// Token ids (rows of the input table) in sequence order.
    pub sequence: Vec<usize>,
    /// Positions to embed; `None` means every position.
    pub positions: Option<Vec<usize>>,
    pub window: usize,
    pub aggregator: AggregatorSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: CommandKind,
    pub inputs: Vec<PathBuf>,
    pub format: Option<Format>,
    pub singularity: SingularityParams,
    pub cone: ConeParams,
    pub lambda: LambdaPolicy,
    /// Centers to blow up; `None` means every detected singular point.
    pub centers: Option<Vec<usize>>,
    pub divisor: DivisorMode,
    pub profiles: ProfileOutput,
    pub out_dir: PathBuf,
    pub seed: u64,
    /// Worker threads; 0 lets the pool decide.
    pub threads: usize,
    pub synth: Option<SynthSpec>,
    pub context: Option<ContextConfig>,
}

impl RunConfig {
    pub fn new(command: CommandKind, out_dir: PathBuf) -> Self {
        RunConfig {
            command,
            inputs: vec![],
            format: None,
            singularity: SingularityParams::default(),
            cone: ConeParams::default(),
            lambda: LambdaPolicy::Auto,
            centers: None,
            divisor: DivisorMode::Cone,
            profiles: ProfileOutput::default(),
            out_dir,
            seed: 0,
            threads: 0,
            synth: None,
            context: None,
        }
    }

    pub fn validate(&self) -> blowup_core::Result<()> {
        self.singularity.validate()?;
        self.cone.validate()?;
        if let LambdaPolicy::Fixed(l) = self.lambda {
            if !(l > 0.0 && l.is_finite()) {
                return Err(blowup_core::Error::NonPositiveScale(l));
            }
        }
        if let Some(s) = &self.synth {
            s.validate()?;
        }
        if let Some(c) = &self.context {
            c.aggregator.validate()?;
        }
        Ok(())
    }
}
