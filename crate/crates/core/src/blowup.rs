//! Point blow-up of a cloud at a center `s`: strict transform, exceptional
//! points from the tangent cone, and the regularity check at each
//! exceptional point.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dimension::{assemble, count_lin, estimate_dims, grid_between, DimensionConfig, DimensionProfile, ProfilePoint, RMaxPolicy};
use crate::error::{Error, Result};
use crate::geom::{blowup_distance, norm, BlowupPoint, PointCloud, ProjectivePoint, ZERO_NORM};
use crate::kdtree::sq_dist;
use crate::singularity::SingularityParams;
use crate::tangent_cone::{nearest_component, TangentConeEstimate};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlownUpCloud {
    pub center: Vec<f64>,
    pub lambda: f64,
    /// Strict transform: one lift per cloud point distinct from the center.
    pub lifted: Vec<BlowupPoint>,
    /// One point per tangent-cone cluster (or per sampled direction in dense mode).
    pub exceptional: Vec<BlowupPoint>,
    /// Source cloud index of each lifted point.
    pub origin_ids: Vec<usize>,
    pub cone: TangentConeEstimate,
}

/// Median distance from the center to the cone's members.
pub fn default_lambda(cloud: &PointCloud, cone: &TangentConeEstimate) -> Result<f64> {
    let mut d: Vec<f64> = cone
        .clusters
        .iter()
        .flat_map(|c| c.member_ids.iter())
        .map(|&i| sq_dist(cloud.point(i), &cone.center).sqrt())
        .collect();
    if d.is_empty() {
        return Err(Error::EmptyNeighborhood);
    }
    d.sort_unstable_by(f64::total_cmp);
    let m = d.len();
    let med = if m % 2 == 1 {
        d[m / 2]
    } else {
        0.5 * (d[m / 2 - 1] + d[m / 2])
    };
    if med > 0.0 {
        Ok(med)
    } else {
        Err(Error::NonPositiveScale(med))
    }
}

fn coincides(x: &[f64], s: &[f64]) -> bool {
    let diff: Vec<f64> = x.iter().zip(s).map(|(a, b)| a - b).collect();
    norm(&diff) < ZERO_NORM
}

/// Lifts every `x ≠ s` to `(x, [x - s])` and adds one exceptional point per
/// cone cluster.
pub fn blow_up(cloud: &PointCloud, s: &[f64], cone: &TangentConeEstimate, lambda: f64) -> Result<BlownUpCloud> {
    let exceptional = cone
        .clusters
        .iter()
        .map(|c| BlowupPoint::exceptional(s, c.centroid.clone()))
        .collect();
    blow_up_with(cloud, s, cone, lambda, exceptional)
}

/// Same lift, but the exceptional divisor is sampled with `count` random
/// directions (antipodally folded Gaussian directions). For exploration only.
pub fn blow_up_dense(cloud: &PointCloud, s: &[f64], cone: &TangentConeEstimate, lambda: f64, count: usize, seed: u64) -> Result<BlownUpCloud> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut exceptional = Vec::with_capacity(count);
    while exceptional.len() < count {
        let v: Vec<f64> = (0..cloud.dim()).map(|_| StandardNormal.sample(&mut rng)).collect();
        if let Ok(dir) = ProjectivePoint::from_vector(&v) {
            exceptional.push(BlowupPoint::exceptional(s, dir));
        }
    }
    blow_up_with(cloud, s, cone, lambda, exceptional)
}

fn blow_up_with(cloud: &PointCloud, s: &[f64], cone: &TangentConeEstimate, lambda: f64, exceptional: Vec<BlowupPoint>) -> Result<BlownUpCloud> {
    if s.len() != cloud.dim() {
        return Err(Error::DimensionMismatch {
            expected: cloud.dim(),
            found: s.len(),
        });
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::NonPositiveScale(lambda));
    }
    let mut lifted = Vec::with_capacity(cloud.len());
    let mut origin_ids = Vec::with_capacity(cloud.len());
    for (i, x) in cloud.points().enumerate() {
        if coincides(x, s) {
            continue;
        }
        lifted.push(BlowupPoint::lift(x, s)?);
        origin_ids.push(i);
    }
    if lifted.is_empty() {
        return Err(Error::DegenerateCenter);
    }
    Ok(BlownUpCloud {
        center: s.to_vec(),
        lambda,
        lifted,
        exceptional,
        origin_ids,
        cone: cone.clone(),
    })
}

/// π: base point of a blow-up point.
pub fn project(p: &BlowupPoint) -> &[f64] {
    p.project()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsomorphismReport {
    pub ok: bool,
    /// Source ids that should be lifted but are not (or are lifted twice).
    pub failing_ids: Vec<usize>,
    /// Lifted positions whose base or direction disagrees with the source.
    pub failing_lifts: Vec<usize>,
    pub pairs_checked: usize,
    pub max_discrepancy: f64,
    pub max_discrepancy_tenth_lambda: f64,
    pub bound: f64,
}

/// Checks that π restricted to the strict transform is a bijection onto
/// `T \ {s}` with exact base equality, and that the blown-up metric departs
/// from the base metric by at most `λπ/2`, shrinking as `λ → λ/10`.
pub fn verify_isomorphism_away_from_center(cloud: &PointCloud, blown: &BlownUpCloud, pairs: usize, seed: u64) -> Result<IsomorphismReport> {
    let s = &blown.center;
    let mut seen = vec![0usize; cloud.len()];
    let mut failing_lifts = Vec::new();
    for (pos, (&id, p)) in blown.origin_ids.iter().zip(&blown.lifted).enumerate() {
        if id >= cloud.len() {
            failing_lifts.push(pos);
            continue;
        }
        seen[id] += 1;
        let x = cloud.point(id);
        let dir_ok = BlowupPoint::lift(x, s).map(|l| l.dir == p.dir).unwrap_or(false);
        if p.project() != x || p.is_exceptional || !dir_ok {
            failing_lifts.push(pos);
        }
    }
    if blown.origin_ids.len() != blown.lifted.len() {
        failing_lifts.extend(blown.origin_ids.len().min(blown.lifted.len())..blown.origin_ids.len().max(blown.lifted.len()));
    }
    let failing_ids: Vec<usize> = (0..cloud.len())
        .filter(|&i| {
            let expected = usize::from(!coincides(cloud.point(i), s));
            seen[i] != expected
        })
        .collect();

    let m = blown.lifted.len().min(blown.origin_ids.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bound = blown.lambda * std::f64::consts::FRAC_PI_2;
    let (mut worst, mut worst_tenth, mut checked) = (0.0f64, 0.0f64, 0);
    let mut shrink_ok = true;
    if m >= 2 {
        for _ in 0..pairs {
            let ij = sample(&mut rng, m, 2);
            let (a, b) = (&blown.lifted[ij.index(0)], &blown.lifted[ij.index(1)]);
            let base = sq_dist(&a.base, &b.base).sqrt();
            let d = (blowup_distance(a, b, blown.lambda)? - base).abs();
            let d10 = (blowup_distance(a, b, blown.lambda / 10.0)? - base).abs();
            shrink_ok &= d10 <= d;
            worst = worst.max(d);
            worst_tenth = worst_tenth.max(d10);
            checked += 1;
        }
    }
    // tolerance for the rounding in sqrt(base^2 + t^2) - base
    let metric_ok = worst <= bound * (1.0 + 1e-12) + 1e-12 && shrink_ok && (worst == 0.0 || worst_tenth * 5.0 <= worst);
    Ok(IsomorphismReport {
        ok: failing_ids.is_empty() && failing_lifts.is_empty() && metric_ok,
        failing_ids,
        failing_lifts,
        pairs_checked: checked,
        max_discrepancy: worst,
        max_discrepancy_tenth_lambda: worst_tenth,
        bound,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckOutcome {
    Pass,
    Fail,
    Undetermined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExceptionalVerdict {
    pub index: usize,
    pub dir: ProjectivePoint,
    pub profile: DimensionProfile,
    pub max_variation: Option<f64>,
    pub outcome: CheckOutcome,
    /// Per grid radius: share of lifted neighbors from this point's own
    /// cluster (`None` when the ball holds no lifted point).
    pub purity: Vec<Option<f64>>,
    /// Largest grid radius up to which purity stays 1.0 (if any).
    pub pure_up_to: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularizationReport {
    pub lambda: f64,
    pub epsilon: f64,
    pub r_max: f64,
    pub verdicts: Vec<ExceptionalVerdict>,
}

impl RegularizationReport {
    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.outcome == CheckOutcome::Pass)
    }
}

/// Dimension profile and verdict at every exceptional point of the blown-up
/// space `lifted ∪ exceptional` under the product metric. `r_max` must be
/// resolved (`params.resolved`) or fixed; the grid is rebuilt per point from
/// blown-up distances.
pub fn regularization_check(blown: &BlownUpCloud, params: &SingularityParams) -> Result<RegularizationReport> {
    params.validate()?;
    let config: &DimensionConfig = &params.dimension;
    let r_max = match config.r_max {
        RMaxPolicy::Fixed(r) => r,
        _ => {
            return Err(Error::InvalidParams(
                "regularization check needs a fixed r_max".into(),
            ))
        }
    };
    let mut verdicts = Vec::with_capacity(blown.exceptional.len());
    for (j, e) in blown.exceptional.iter().enumerate() {
        let mut dists: Vec<(f64, Option<usize>)> = Vec::with_capacity(blown.lifted.len() + blown.exceptional.len());
        for (p, &id) in blown.lifted.iter().zip(&blown.origin_ids) {
            dists.push((blowup_distance(e, p, blown.lambda)?, Some(id)));
        }
        for f in &blown.exceptional {
            dists.push((blowup_distance(e, f, blown.lambda)?, None));
        }
        dists.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        let sorted: Vec<f64> = dists.iter().map(|d| d.0).collect();
        let k = config.start_neighbor.min(sorted.len());
        let grid = grid_between(sorted[k - 1], r_max, config.grid_size)?;
        let volumes: Vec<usize> = grid.radii().iter().map(|&r| count_lin(&sorted, r)).collect();
        let dims = estimate_dims(&grid, &volumes, |r| count_lin(&sorted, r), config.estimator, config.v_min);
        let profile = assemble(ProfilePoint::Exceptional(j), grid, volumes, dims, config.estimator);

        // own cluster: the cone cluster nearest to this exceptional direction
        let members = nearest_component(&e.dir, &blown.cone.clusters)
            .ok()
            .map(|c| &blown.cone.clusters[c].member_ids);
        let purity: Vec<Option<f64>> = profile
            .grid
            .radii()
            .iter()
            .map(|&r| {
                let (mut own, mut all) = (0usize, 0usize);
                for &(d, id) in &dists {
                    if d > r {
                        break;
                    }
                    if let Some(id) = id {
                        all += 1;
                        if members.is_some_and(|m| m.binary_search(&id).is_ok()) {
                            own += 1;
                        }
                    }
                }
                (all > 0).then(|| own as f64 / all as f64)
            })
            .collect();
        let mut pure_up_to = None;
        for (&r, p) in profile.grid.radii().iter().zip(&purity) {
            match p {
                Some(v) if *v < 1.0 => break,
                Some(_) => pure_up_to = Some(r),
                None => {}
            }
        }
        let max_variation = profile.max_variation();
        let outcome = match max_variation {
            None => CheckOutcome::Undetermined,
            Some(v) if v < params.epsilon => CheckOutcome::Pass,
            Some(_) => CheckOutcome::Fail,
        };
        verdicts.push(ExceptionalVerdict {
            index: j,
            dir: e.dir.clone(),
            profile,
            max_variation,
            outcome,
            purity,
            pure_up_to,
        });
    }
    Ok(RegularizationReport {
        lambda: blown.lambda,
        epsilon: params.epsilon,
        r_max,
        verdicts,
    })
}
