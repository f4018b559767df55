//! Detect → cone → blow-up → regularity check for one center.

use serde::{Deserialize, Serialize};

use crate::blowup::{blow_up, blow_up_dense, default_lambda, regularization_check, verify_isomorphism_away_from_center, CheckOutcome, IsomorphismReport, RegularizationReport};
use crate::dimension::{dimension_profile, DimensionProfile, ProfilePoint, RMaxPolicy};
use crate::error::Result;
use crate::geom::PointCloud;
use crate::singularity::{verdict, SingularityParams, Verdict};
use crate::tangent_cone::{estimate_cluster_dimension, estimate_tangent_cone, ConeParams, TangentConeEstimate};

/// Metric pairs sampled by the isomorphism check.
pub const ISOMORPHISM_PAIRS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum LambdaPolicy {
    /// Median distance from the center to the cone members.
    Auto,
    Fixed(f64),
}

/// How the exceptional divisor is discretized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DivisorMode {
    /// One exceptional point per cone cluster.
    Cone,
    /// `count` random directions; most get empty neighborhoods. Exploration only.
    Dense { count: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resolution {
    pub center_id: Option<usize>,
    pub center: Vec<f64>,
    pub center_verdict: Verdict,
    pub center_variation: Option<f64>,
    pub center_profile: DimensionProfile,
    pub r_loc: f64,
    pub cone: TangentConeEstimate,
    pub lambda: f64,
    pub isomorphism: IsomorphismReport,
    pub regularization: RegularizationReport,
    /// Every exceptional point passes and varies less than the center.
    pub theorem_holds: bool,
}

/// Default locality radius: the largest defined grid radius of the center's
/// profile up to the witness `r2`; the profile's `r_max` without a witness.
pub fn default_r_loc(profile: &DimensionProfile, v: &Verdict) -> f64 {
    match v {
        Verdict::Singular { witness } => profile
            .defined()
            .map(|(r, _)| r)
            .filter(|&r| r <= witness.r2)
            .last()
            .unwrap_or(witness.r2),
        _ => profile.grid.r_max(),
    }
}

/// Runs the whole chain at `center` (a cloud point when `center_id` is set).
#[allow(clippy::too_many_arguments)]
pub fn resolve_center(
    cloud: &PointCloud,
    center_id: Option<usize>,
    center: &[f64],
    params: &SingularityParams,
    cone_params: &ConeParams,
    lambda: LambdaPolicy,
    divisor: DivisorMode,
    seed: u64,
) -> Result<Resolution> {
    params.validate()?;
    cone_params.validate()?;
    let params = &params.resolved(cloud);
    let config = &params.dimension;
    let grid = config.grid_for(cloud, center)?;
    let point = center_id.map_or(ProfilePoint::External, ProfilePoint::Cloud);
    let profile = dimension_profile(cloud, center, point, &grid, config.estimator, config.v_min)?;
    let center_verdict = verdict(&profile, params);
    let center_variation = profile.max_variation();
    let r_loc = cone_params.r_loc.unwrap_or_else(|| default_r_loc(&profile, &center_verdict));

    let mut cone = estimate_tangent_cone(cloud, center, r_loc, cone_params)?;
    for c in &mut cone.clusters {
        c.dim = estimate_cluster_dimension(cloud, &c.member_ids, config).ok();
    }
    let lambda = match lambda {
        LambdaPolicy::Auto => default_lambda(cloud, &cone)?,
        LambdaPolicy::Fixed(l) => l,
    };
    let blown = match divisor {
        DivisorMode::Cone => blow_up(cloud, center, &cone, lambda)?,
        DivisorMode::Dense { count, seed } => blow_up_dense(cloud, center, &cone, lambda, count, seed)?,
    };
    let isomorphism = verify_isomorphism_away_from_center(cloud, &blown, ISOMORPHISM_PAIRS, seed)?;
    let r_max = grid.r_max();
    let blown_params = SingularityParams {
        epsilon: params.epsilon,
        dimension: crate::dimension::DimensionConfig {
            r_max: RMaxPolicy::Fixed(r_max),
            ..config.clone()
        },
    };
    let regularization = regularization_check(&blown, &blown_params)?;
    let theorem_holds = !regularization.verdicts.is_empty()
        && regularization.verdicts.iter().all(|v| {
            v.outcome == CheckOutcome::Pass
                && match (v.max_variation, center_variation) {
                    (Some(e), Some(c)) => e < c,
                    _ => false,
                }
        });
    Ok(Resolution {
        center_id,
        center: center.to_vec(),
        center_verdict,
        center_variation,
        center_profile: profile,
        r_loc,
        cone,
        lambda,
        isomorphism,
        regularization,
        theorem_holds,
    })
}
