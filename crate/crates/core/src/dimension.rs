//! Local volume `V_ψ(r)` and the log-log slope estimate of intrinsic dimension.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{PointCloud, RadiusGrid};

/// Minimum ball count for a defined dimension sample.
pub const DEFAULT_V_MIN: usize = 10;
pub const DEFAULT_GRID_SIZE: usize = 32;
/// The grid starts at the distance to this neighbor (self counts as the first).
pub const DEFAULT_START_NEIGHBOR: usize = 5;
pub const DEFAULT_WINDOW: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "window", rename_all = "snake_case")]
pub enum Estimator {
    /// Literal two-radius slope between consecutive grid radii.
    TwoPoint,
    /// Least-squares slope of `log V` on `log r` over `w` grid points centered
    /// at the sample (odd `w >= 3`).
    RegressionWindow(usize),
}

impl Default for Estimator {
    fn default() -> Self {
        Estimator::RegressionWindow(DEFAULT_WINDOW)
    }
}

impl Estimator {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Estimator::TwoPoint => Ok(()),
            Estimator::RegressionWindow(w) if w >= 3 && w % 2 == 1 => Ok(()),
            Estimator::RegressionWindow(w) => Err(Error::InvalidParams(format!(
                "regression window must be odd and >= 3, got {w}"
            ))),
        }
    }
}

/// How the analysis window `[0, r_max]` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum RMaxPolicy {
    /// Half the largest distance from the cloud centroid, shared by all points.
    #[default]
    Auto,
    Fixed(f64),
    /// Per-point: distance to the given nearest neighbor.
    PerPointNeighbor(usize),
}


/// Grid and estimator settings shared by every profile of one analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionConfig {
    pub r_max: RMaxPolicy,
    pub grid_size: usize,
    pub start_neighbor: usize,
    pub estimator: Estimator,
    pub v_min: usize,
}

impl Default for DimensionConfig {
    fn default() -> Self {
        DimensionConfig {
            r_max: RMaxPolicy::Auto,
            grid_size: DEFAULT_GRID_SIZE,
            start_neighbor: DEFAULT_START_NEIGHBOR,
            estimator: Estimator::default(),
            v_min: DEFAULT_V_MIN,
        }
    }
}

impl DimensionConfig {
    pub fn validate(&self) -> Result<()> {
        self.estimator.validate()?;
        if self.grid_size < RadiusGrid::MIN_LEN {
            return Err(Error::InvalidParams(format!(
                "grid size {} below {}",
                self.grid_size,
                RadiusGrid::MIN_LEN
            )));
        }
        if self.v_min == 0 || self.start_neighbor == 0 {
            return Err(Error::InvalidParams(
                "v_min and start_neighbor must be >= 1".into(),
            ));
        }
        match self.r_max {
            RMaxPolicy::Fixed(r) if !(r > 0.0 && r.is_finite()) => Err(Error::InvalidParams(
                format!("r_max must be positive, got {r}"),
            )),
            RMaxPolicy::PerPointNeighbor(0) => {
                Err(Error::InvalidParams("per-point r_max neighbor must be >= 1".into()))
            }
            _ => Ok(()),
        }
    }

    /// Replaces `Auto` by the concrete global value for `cloud`.
    pub fn resolved(&self, cloud: &PointCloud) -> DimensionConfig {
        let mut out = self.clone();
        if self.r_max == RMaxPolicy::Auto {
            out.r_max = RMaxPolicy::Fixed(default_r_max(cloud));
        }
        out
    }

    /// `r_max` used for the point `psi`.
    pub fn r_max_for(&self, cloud: &PointCloud, psi: &[f64]) -> Result<f64> {
        match self.r_max {
            RMaxPolicy::Auto => Ok(default_r_max(cloud)),
            RMaxPolicy::Fixed(r) => Ok(r),
            RMaxPolicy::PerPointNeighbor(k) => {
                let r = cloud.kth_neighbor_distance(psi, k)?;
                Ok(if r > 0.0 { r } else { 1.0 })
            }
        }
    }

    /// Default log-spaced grid for `psi`: from the `start_neighbor`-th
    /// neighbor distance up to `r_max`.
    pub fn grid_for(&self, cloud: &PointCloud, psi: &[f64]) -> Result<RadiusGrid> {
        let r_max = self.r_max_for(cloud, psi)?;
        let r_start = cloud.kth_neighbor_distance(psi, self.start_neighbor)?;
        grid_between(r_start, r_max, self.grid_size)
    }
}

/// Log grid from `r_start` to `r_max`. A start that is zero (duplicates) or not
/// below `r_max` falls back to `r_max / 1000`.
pub fn grid_between(r_start: f64, r_max: f64, size: usize) -> Result<RadiusGrid> {
    let lo = if r_start > 0.0 && r_start < r_max {
        r_start
    } else {
        r_max * 1e-3
    };
    RadiusGrid::geometric(lo, r_max, size)
}

/// Half the largest distance from the centroid; 1.0 for a zero-extent cloud.
pub fn default_r_max(cloud: &PointCloud) -> f64 {
    let c = cloud.centroid();
    let far = cloud
        .points()
        .map(|p| crate::kdtree::sq_dist(p, &c))
        .fold(0.0, f64::max)
        .sqrt();
    if far > 0.0 {
        0.5 * far
    } else {
        1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "id", rename_all = "snake_case")]
pub enum ProfilePoint {
    Cloud(usize),
    External,
    /// Exceptional point of a blow-up, by tangent-cone cluster index.
    Exceptional(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionSample {
    pub r: f64,
    pub volume: usize,
    pub dim: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionProfile {
    pub point: ProfilePoint,
    pub samples: Vec<DimensionSample>,
    pub grid: RadiusGrid,
    pub estimator: Estimator,
}

impl DimensionProfile {
    pub fn defined(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.samples.iter().filter_map(|s| s.dim.map(|d| (s.r, d)))
    }

    pub fn dim_at(&self, r: f64) -> Option<f64> {
        self.samples
            .iter()
            .find(|s| (s.r - r).abs() <= 1e-12 * r.abs().max(1.0))
            .and_then(|s| s.dim)
    }

    pub fn max_variation(&self) -> Option<f64> {
        let mut it = self.defined().map(|(_, d)| d);
        let first = it.next()?;
        let (lo, hi, n) = it.fold((first, first, 1), |(lo, hi, n), d| (lo.min(d), hi.max(d), n + 1));
        (n >= 2).then_some(hi - lo)
    }
}

/// Volume of the closed ball around `psi`, counting `psi` itself if it is a
/// cloud point.
pub fn local_volume(cloud: &PointCloud, psi: &[f64], r: f64) -> Result<usize> {
    cloud.range_count(psi, r)
}

fn two_point_slope(v_lo: usize, v_hi: usize, r: f64, r_hi: f64) -> f64 {
    ((v_hi as f64).ln() - (v_lo as f64).ln()) / (r_hi.ln() - r.ln())
}

/// Two-radius estimate `(log V(r+δr) - log V(r)) / (log(r+δr) - log r)`.
pub fn dimension_at(cloud: &PointCloud, psi: &[f64], r: f64, dr: f64, v_min: usize) -> Result<f64> {
    if !(r > 0.0 && dr > 0.0) {
        return Err(Error::InvalidParams(format!(
            "need r > 0 and dr > 0, got {r}, {dr}"
        )));
    }
    let v = local_volume(cloud, psi, r)?;
    if v < v_min {
        return Err(Error::InsufficientNeighbors {
            volume: v,
            required: v_min,
        });
    }
    let r_hi = r + dr;
    let v_hi = local_volume(cloud, psi, r_hi)?;
    Ok(two_point_slope(v, v_hi, r, r_hi))
}

/// Ball counts from an ascending list of squared distances.
pub(crate) fn count_sq(sorted_sq: &[f64], r: f64) -> usize {
    let r2 = r * r;
    sorted_sq.partition_point(|&d2| d2 <= r2)
}

/// Ball counts from an ascending list of (unsquared) distances.
pub(crate) fn count_lin(sorted: &[f64], r: f64) -> usize {
    sorted.partition_point(|&d| d <= r)
}

/// Dimension samples from per-radius volumes. `upper` gives `V(r_i + (r_{i+1} - r_i))`
/// for the two-point estimator.
pub(crate) fn estimate_dims(
    grid: &RadiusGrid,
    volumes: &[usize],
    upper: impl Fn(f64) -> usize,
    estimator: Estimator,
    v_min: usize,
) -> Vec<Option<f64>> {
    let radii = grid.radii();
    let m = radii.len();
    match estimator {
        Estimator::TwoPoint => (0..m)
            .map(|i| {
                if i + 1 >= m || volumes[i] < v_min {
                    return None;
                }
                let r = radii[i];
                let r_hi = r + (radii[i + 1] - r);
                Some(two_point_slope(volumes[i], upper(r_hi), r, r_hi))
            })
            .collect(),
        Estimator::RegressionWindow(w) => {
            let h = w / 2;
            (0..m)
                .map(|i| {
                    if i < h || i + h >= m {
                        return None;
                    }
                    let win = (i - h)..=(i + h);
                    if volumes[win.clone()].iter().any(|&v| v < v_min) {
                        return None;
                    }
                    let xs: Vec<f64> = radii[win.clone()].iter().map(|r| r.ln()).collect();
                    let ys: Vec<f64> = volumes[win].iter().map(|&v| (v as f64).ln()).collect();
                    let n = xs.len() as f64;
                    let mx = xs.iter().sum::<f64>() / n;
                    let my = ys.iter().sum::<f64>() / n;
                    let (mut sxy, mut sxx) = (0.0, 0.0);
                    for (x, y) in xs.iter().zip(&ys) {
                        sxy += (x - mx) * (y - my);
                        sxx += (x - mx) * (x - mx);
                    }
                    (sxx > 0.0).then(|| sxy / sxx)
                })
                .collect()
        }
    }
}

pub(crate) fn assemble(
    point: ProfilePoint,
    grid: RadiusGrid,
    volumes: Vec<usize>,
    dims: Vec<Option<f64>>,
    estimator: Estimator,
) -> DimensionProfile {
    let samples = grid
        .radii()
        .iter()
        .zip(volumes)
        .zip(dims)
        .map(|((&r, volume), dim)| DimensionSample { r, volume, dim })
        .collect();
    DimensionProfile {
        point,
        samples,
        grid,
        estimator,
    }
}

/// Profile of `psi` over `grid`. Samples that cannot be estimated are left
/// undefined rather than failing the whole profile.
pub fn dimension_profile(
    cloud: &PointCloud,
    psi: &[f64],
    point: ProfilePoint,
    grid: &RadiusGrid,
    estimator: Estimator,
    v_min: usize,
) -> Result<DimensionProfile> {
    estimator.validate()?;
    let radii = grid.radii();
    // the two-point upper radius may round slightly past r_max
    let reach = radii[radii.len() - 1] * (1.0 + 1e-9);
    let mut sq: Vec<f64> = cloud
        .neighbors_within(psi, reach)?
        .into_iter()
        .map(|(_, d2)| d2)
        .collect();
    sq.sort_unstable_by(f64::total_cmp);
    let volumes: Vec<usize> = radii.iter().map(|&r| count_sq(&sq, r)).collect();
    let dims = estimate_dims(grid, &volumes, |r| count_sq(&sq, r), estimator, v_min);
    Ok(assemble(point, grid.clone(), volumes, dims, estimator))
}

/// Profile of cloud point `id` on its default grid.
pub fn point_profile(cloud: &PointCloud, id: usize, config: &DimensionConfig) -> Result<DimensionProfile> {
    let psi = cloud.point(id);
    let grid = config.grid_for(cloud, psi)?;
    dimension_profile(cloud, psi, ProfilePoint::Cloud(id), &grid, config.estimator, config.v_min)
}

/// `|dim(r1) - dim(r2)|` read off the profile.
pub fn dimensional_variation(profile: &DimensionProfile, r1: f64, r2: f64) -> Result<f64> {
    let d1 = profile.dim_at(r1).ok_or(Error::UndefinedAtRadius(r1))?;
    let d2 = profile.dim_at(r2).ok_or(Error::UndefinedAtRadius(r2))?;
    Ok((d1 - d2).abs())
}
