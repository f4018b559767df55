//! The (ε, r_max)-singularity test and the singular locus of a cloud.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dimension::{point_profile, DimensionConfig, DimensionProfile};
use crate::error::{Error, Result};
use crate::geom::PointCloud;

pub const DEFAULT_EPSILON: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularityParams {
    pub epsilon: f64,
    #[serde(flatten)]
    pub dimension: DimensionConfig,
}

impl Default for SingularityParams {
    fn default() -> Self {
        SingularityParams {
            epsilon: DEFAULT_EPSILON,
            dimension: DimensionConfig::default(),
        }
    }
}

impl SingularityParams {
    pub fn validate(&self) -> Result<()> {
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "epsilon must be > 0, got {}",
                self.epsilon
            )));
        }
        self.dimension.validate()
    }

    pub fn resolved(&self, cloud: &PointCloud) -> SingularityParams {
        SingularityParams {
            epsilon: self.epsilon,
            dimension: self.dimension.resolved(cloud),
        }
    }
}

/// Pair of radii whose dimension samples differ by more than ε.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularityWitness {
    pub r1: f64,
    pub r2: f64,
    pub dim1: f64,
    pub dim2: f64,
    pub variation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Regular { max_variation: f64 },
    Singular { witness: SingularityWitness },
    Undetermined,
}

impl Verdict {
    pub fn is_singular(&self) -> bool {
        matches!(self, Verdict::Singular { .. })
    }

    pub fn is_regular(&self) -> bool {
        matches!(self, Verdict::Regular { .. })
    }
}

/// Largest-variation pair `r1 < r2 <= r_max` among the defined samples.
fn max_pair(profile: &DimensionProfile, r_max: f64) -> Result<SingularityWitness> {
    let defined: Vec<(f64, f64)> = profile.defined().filter(|&(r, _)| r <= r_max).collect();
    if defined.len() < 2 {
        return Err(Error::NoDefinedSamples);
    }
    let mut best: Option<SingularityWitness> = None;
    for i in 0..defined.len() {
        for j in i + 1..defined.len() {
            let (r1, d1) = defined[i];
            let (r2, d2) = defined[j];
            let v = (d1 - d2).abs();
            if best.as_ref().is_none_or(|b| v > b.variation) {
                best = Some(SingularityWitness {
                    r1,
                    r2,
                    dim1: d1,
                    dim2: d2,
                    variation: v,
                });
            }
        }
    }
    Ok(best.expect("at least one pair"))
}

/// Max-variation witness when it exceeds ε; `None` for a regular profile.
/// Samples past the profile's own `r_max` are ignored.
pub fn is_singular(profile: &DimensionProfile, params: &SingularityParams) -> Result<Option<SingularityWitness>> {
    let w = max_pair(profile, profile.grid.r_max())?;
    Ok((w.variation > params.epsilon).then_some(w))
}

pub fn verdict(profile: &DimensionProfile, params: &SingularityParams) -> Verdict {
    match max_pair(profile, profile.grid.r_max()) {
        Err(_) => Verdict::Undetermined,
        Ok(w) if w.variation > params.epsilon => Verdict::Singular { witness: w },
        Ok(w) => Verdict::Regular {
            max_variation: w.variation,
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularLocusReport {
    /// Parameters with `r_max` resolved to the value actually used.
    pub params: SingularityParams,
    pub verdicts: Vec<Verdict>,
    pub singular_ids: Vec<usize>,
    pub witnesses: BTreeMap<usize, SingularityWitness>,
}

impl SingularLocusReport {
    pub fn contains(&self, id: usize) -> bool {
        self.singular_ids.binary_search(&id).is_ok()
    }

    pub fn undetermined_count(&self) -> usize {
        self.verdicts
            .iter()
            .filter(|v| matches!(v, Verdict::Undetermined))
            .count()
    }
}

/// Applies the test to every point. Per-point work runs on the current rayon
/// pool; the report is assembled in index order.
pub fn singular_locus_with_profiles(
    cloud: &PointCloud,
    params: &SingularityParams,
) -> Result<(SingularLocusReport, Vec<DimensionProfile>)> {
    params.validate()?;
    let params = params.resolved(cloud);
    let profiles: Vec<DimensionProfile> = (0..cloud.len())
        .into_par_iter()
        .map(|i| point_profile(cloud, i, &params.dimension))
        .collect::<Result<_>>()?;
    let verdicts: Vec<Verdict> = profiles.iter().map(|p| verdict(p, &params)).collect();
    let mut witnesses = BTreeMap::new();
    for (i, v) in verdicts.iter().enumerate() {
        if let Verdict::Singular { witness } = v {
            witnesses.insert(i, witness.clone());
        }
    }
    let report = SingularLocusReport {
        params,
        singular_ids: witnesses.keys().copied().collect(),
        witnesses,
        verdicts,
    };
    Ok((report, profiles))
}

pub fn singular_locus(cloud: &PointCloud, params: &SingularityParams) -> Result<SingularLocusReport> {
    singular_locus_with_profiles(cloud, params).map(|(r, _)| r)
}
