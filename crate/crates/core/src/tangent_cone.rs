//! Tangent cone at a point, estimated as clusters of secant directions in
//! `P^{n-1}`.
//!
//! Clustering is projective k-means (nearest centroid under the angular
//! metric, centroid = principal eigenvector of the members' outer-product
//! sum) followed by a greedy merge of clusters closer than `θ_m`. Two
//! clusters are "close" when either their centroids or their nearest members
//! are within `θ_m`; the second test lets the arcs that k-means carves out of
//! one higher-dimensional component (a plane's circle of directions) collapse
//! back into one cluster.
//!
//! Directions from points very close to the center are dominated by noise,
//! so centroids and merges are decided on the "core" directions (distance
//! at least `core_fraction · r_loc`). The remaining directions join the
//! cluster of their nearest core direction.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::dimension::{point_profile, DimensionConfig};
use crate::error::{Error, Result};
use crate::geom::{angle_between_lines, norm, PointCloud, ProjectivePoint, ZERO_NORM};

pub const DEFAULT_K_MAX: usize = 8;
pub const DEFAULT_MERGE_ANGLE_DEG: f64 = 20.0;
pub const DEFAULT_CORE_FRACTION: f64 = 0.25;
pub const MAX_ITERATIONS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionEntry {
    pub id: usize,
    pub dir: ProjectivePoint,
    /// Distance from the center; 1.0 for directions given without a source point.
    pub dist: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalDirections {
    pub entries: Vec<DirectionEntry>,
    /// Points within `r_loc` that coincide with the center.
    pub skipped_coincident: usize,
}

impl LocalDirections {
    pub fn from_directions(dirs: Vec<(usize, ProjectivePoint)>) -> Self {
        LocalDirections {
            entries: dirs
                .into_iter()
                .map(|(id, dir)| DirectionEntry { id, dir, dist: 1.0 })
                .collect(),
            skipped_coincident: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Secant directions `[x - s]` of every cloud point with `0 < |x - s| <= r_loc`,
/// in index order.
pub fn local_directions(cloud: &PointCloud, s: &[f64], r_loc: f64) -> Result<LocalDirections> {
    if r_loc.is_nan() || r_loc <= 0.0 {
        return Err(Error::InvalidParams(format!("r_loc must be > 0, got {r_loc}")));
    }
    let mut entries = Vec::new();
    let mut skipped = 0;
    for (id, d2) in cloud.neighbors_within(s, r_loc)? {
        let x = cloud.point(id);
        let diff: Vec<f64> = x.iter().zip(s).map(|(a, b)| a - b).collect();
        let dist = d2.sqrt();
        if norm(&diff) < ZERO_NORM {
            skipped += 1;
            continue;
        }
        entries.push(DirectionEntry {
            id,
            dir: ProjectivePoint::from_vector(&diff)?,
            dist,
        });
    }
    if entries.is_empty() {
        return Err(Error::EmptyNeighborhood);
    }
    Ok(LocalDirections {
        entries,
        skipped_coincident: skipped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeParams {
    /// Requested cluster count; `None` starts from `k_max` and relies on merging.
    pub k: Option<usize>,
    pub k_max: usize,
    /// Merge threshold θ_m in radians.
    pub merge_angle: f64,
    pub core_fraction: f64,
    /// Locality radius; `None` derives it from the center's witness.
    pub r_loc: Option<f64>,
}

impl Default for ConeParams {
    fn default() -> Self {
        ConeParams {
            k: None,
            k_max: DEFAULT_K_MAX,
            merge_angle: DEFAULT_MERGE_ANGLE_DEG.to_radians(),
            core_fraction: DEFAULT_CORE_FRACTION,
            r_loc: None,
        }
    }
}

impl ConeParams {
    pub fn validate(&self) -> Result<()> {
        if self.k == Some(0) || self.k_max == 0 {
            return Err(Error::InvalidParams("cluster counts must be >= 1".into()));
        }
        if (self.merge_angle.is_nan() || self.merge_angle < 0.0) || !(0.0..1.0).contains(&self.core_fraction) {
            return Err(Error::InvalidParams(
                "merge angle must be >= 0 and core fraction in [0, 1)".into(),
            ));
        }
        if let Some(r) = self.r_loc {
            if r.is_nan() || r <= 0.0 {
                return Err(Error::InvalidParams(format!("r_loc must be > 0, got {r}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeCluster {
    pub centroid: ProjectivePoint,
    /// Source cloud indices, ascending.
    pub member_ids: Vec<usize>,
    /// Estimated local dimension `D_j`, when computed.
    pub dim: Option<f64>,
    /// Mean angular deviation of members from the centroid (radians).
    pub spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangentConeEstimate {
    pub center: Vec<f64>,
    pub r_loc: f64,
    pub clusters: Vec<ConeCluster>,
    pub skipped_coincident: usize,
    /// Lloyd iterations used before merging.
    pub iterations: usize,
}

impl TangentConeEstimate {
    pub fn k(&self) -> usize {
        self.clusters.len()
    }

    pub fn cluster_of(&self, id: usize) -> Option<usize> {
        self.clusters
            .iter()
            .position(|c| c.member_ids.binary_search(&id).is_ok())
    }
}

/// Principal eigenvector of `Σ d dᵀ`, as a projective point.
pub fn projective_mean<'a>(dirs: impl IntoIterator<Item = &'a ProjectivePoint>) -> Result<ProjectivePoint> {
    let mut it = dirs.into_iter().peekable();
    let n = it.peek().map(|d| d.dim()).ok_or(Error::EmptyNeighborhood)?;
    let mut m = DMatrix::<f64>::zeros(n, n);
    for d in it {
        let r = d.rep();
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] += r[i] * r[j];
            }
        }
    }
    let eig = SymmetricEigen::new(m);
    let mut best = 0;
    for i in 1..n {
        if eig.eigenvalues[i] > eig.eigenvalues[best] {
            best = i;
        }
    }
    let v: Vec<f64> = eig.eigenvectors.column(best).iter().copied().collect();
    ProjectivePoint::from_vector(&v)
}

fn nearest(dir: &ProjectivePoint, centroids: &[ProjectivePoint]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, c) in centroids.iter().enumerate() {
        let d = angle_between_lines(dir.rep(), c.rep());
        if d < best_d {
            best = j;
            best_d = d;
        }
    }
    best
}

/// Farthest-point seeding starting from the first (lowest-index) direction.
fn seed_centroids(dirs: &[&ProjectivePoint], k: usize) -> Vec<ProjectivePoint> {
    let mut centroids = vec![dirs[0].clone()];
    let mut min_d: Vec<f64> = dirs
        .iter()
        .map(|d| angle_between_lines(d.rep(), dirs[0].rep()))
        .collect();
    while centroids.len() < k {
        let (pos, &far) = min_d
            .iter()
            .enumerate()
            .fold((0, &min_d[0]), |acc, (i, d)| if *d > *acc.1 { (i, d) } else { acc });
        if far <= 0.0 {
            break;
        }
        let c = dirs[pos].clone();
        for (m, d) in min_d.iter_mut().zip(dirs) {
            *m = m.min(angle_between_lines(d.rep(), c.rep()));
        }
        centroids.push(c);
    }
    centroids
}

/// Lloyd iterations to an assignment fixed point. Returns labels, centroids
/// (empty clusters removed, labels compacted) and the iteration count.
fn lloyd(dirs: &[&ProjectivePoint], mut centroids: Vec<ProjectivePoint>) -> Result<(Vec<usize>, Vec<ProjectivePoint>, usize)> {
    let mut labels: Vec<usize> = dirs.iter().map(|d| nearest(d, &centroids)).collect();
    let mut iterations = 0;
    loop {
        iterations += 1;
        let k = centroids.len();
        let mut next = Vec::with_capacity(k);
        let mut remap = vec![usize::MAX; k];
        for (j, slot) in remap.iter_mut().enumerate() {
            let members: Vec<&ProjectivePoint> = dirs
                .iter()
                .zip(&labels)
                .filter(|(_, &l)| l == j)
                .map(|(d, _)| *d)
                .collect();
            if members.is_empty() {
                continue;
            }
            *slot = next.len();
            next.push(projective_mean(members)?);
        }
        centroids = next;
        let relabeled: Vec<usize> = dirs.iter().map(|d| nearest(d, &centroids)).collect();
        let compacted: Vec<usize> = labels.iter().map(|&l| remap[l]).collect();
        if relabeled == compacted || iterations >= MAX_ITERATIONS {
            return Ok((relabeled, centroids, iterations));
        }
        labels = relabeled;
    }
}

/// Clusters secant directions into tangent-cone components.
pub fn cluster_directions(local: &LocalDirections, params: &ConeParams) -> Result<Vec<ConeCluster>> {
    cluster_with_stats(local, params).map(|(c, _)| c)
}

fn cluster_with_stats(local: &LocalDirections, params: &ConeParams) -> Result<(Vec<ConeCluster>, usize)> {
    params.validate()?;
    if local.is_empty() {
        return Err(Error::EmptyNeighborhood);
    }
    let entries = &local.entries;
    let reach = entries.iter().map(|e| e.dist).fold(0.0, f64::max);
    let mut core: Vec<usize> = (0..entries.len())
        .filter(|&i| entries[i].dist >= params.core_fraction * reach)
        .collect();
    if core.len() < 2 {
        core = (0..entries.len()).collect();
    }
    let core_dirs: Vec<&ProjectivePoint> = core.iter().map(|&i| &entries[i].dir).collect();
    let k0 = params.k.unwrap_or(params.k_max).min(core_dirs.len());
    let seeds = seed_centroids(&core_dirs, k0);
    let (labels, centroids, iterations) = lloyd(&core_dirs, seeds)?;

    // greedy merge on min(centroid angle, single-link member gap)
    let k = centroids.len();
    let mut gap = vec![vec![f64::INFINITY; k]; k];
    for a in 0..core_dirs.len() {
        for b in a + 1..core_dirs.len() {
            let (la, lb) = (labels[a], labels[b]);
            if la != lb {
                let d = angle_between_lines(core_dirs[a].rep(), core_dirs[b].rep());
                if d < gap[la][lb] {
                    gap[la][lb] = d;
                    gap[lb][la] = d;
                }
            }
        }
    }
    let mut groups: Vec<Option<Vec<usize>>> = (0..k).map(|j| Some(vec![j])).collect();
    let mut group_centroid: Vec<ProjectivePoint> = centroids.clone();
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..k {
            if groups[a].is_none() {
                continue;
            }
            for b in a + 1..k {
                if groups[b].is_none() {
                    continue;
                }
                let link = angle_between_lines(group_centroid[a].rep(), group_centroid[b].rep()).min(gap[a][b]);
                if link < params.merge_angle && best.is_none_or(|(l, _, _)| link < l) {
                    best = Some((link, a, b));
                }
            }
        }
        let Some((_, a, b)) = best else { break };
        let moved = groups[b].take().expect("live group");
        groups[a].as_mut().expect("live group").extend(moved);
        let merged: Vec<f64> = (0..k).map(|c| gap[a][c].min(gap[b][c])).collect();
        for (c, g) in merged.into_iter().enumerate() {
            gap[a][c] = g;
            gap[c][a] = g;
        }
        let members = groups[a].as_ref().expect("live group");
        group_centroid[a] = projective_mean(
            core_dirs
                .iter()
                .zip(&labels)
                .filter(|(_, l)| members.contains(l))
                .map(|(d, _)| *d),
        )?;
    }
    let mut group_of_label = vec![0usize; k];
    let live: Vec<usize> = (0..k).filter(|&j| groups[j].is_some()).collect();
    for (g, &j) in live.iter().enumerate() {
        for &l in groups[j].as_ref().expect("live group") {
            group_of_label[l] = g;
        }
    }

    // every entry gets the group of its nearest core direction (itself, for core entries)
    let mut entry_group = vec![usize::MAX; entries.len()];
    for (pos, &i) in core.iter().enumerate() {
        entry_group[i] = group_of_label[labels[pos]];
    }
    for (i, e) in entries.iter().enumerate() {
        if entry_group[i] != usize::MAX {
            continue;
        }
        let mut best = (f64::INFINITY, 0);
        for (pos, d) in core_dirs.iter().enumerate() {
            let a = angle_between_lines(e.dir.rep(), d.rep());
            if a < best.0 {
                best = (a, pos);
            }
        }
        entry_group[i] = group_of_label[labels[best.1]];
    }

    let mut clusters = Vec::with_capacity(live.len());
    for g in 0..live.len() {
        let members: Vec<&DirectionEntry> = entries
            .iter()
            .zip(&entry_group)
            .filter(|(_, &eg)| eg == g)
            .map(|(e, _)| e)
            .collect();
        let centroid = projective_mean(members.iter().map(|e| &e.dir))?;
        let spread = members
            .iter()
            .map(|e| angle_between_lines(e.dir.rep(), centroid.rep()))
            .sum::<f64>()
            / members.len() as f64;
        let mut member_ids: Vec<usize> = members.iter().map(|e| e.id).collect();
        member_ids.sort_unstable();
        clusters.push(ConeCluster {
            centroid,
            member_ids,
            dim: None,
            spread,
        });
    }
    clusters.sort_by_key(|c| c.member_ids[0]);
    Ok((clusters, iterations))
}

/// Full estimate: local directions within `r_loc`, then clustering.
pub fn estimate_tangent_cone(cloud: &PointCloud, s: &[f64], r_loc: f64, params: &ConeParams) -> Result<TangentConeEstimate> {
    let local = local_directions(cloud, s, r_loc)?;
    let (clusters, iterations) = cluster_with_stats(&local, params)?;
    Ok(TangentConeEstimate {
        center: s.to_vec(),
        r_loc,
        clusters,
        skipped_coincident: local.skipped_coincident,
        iterations,
    })
}

/// `D_j`: median of the defined dimension samples of the members' sub-cloud,
/// profiled at its medoid.
pub fn estimate_cluster_dimension(cloud: &PointCloud, member_ids: &[usize], config: &DimensionConfig) -> Result<f64> {
    if member_ids.len() < config.v_min {
        return Err(Error::InsufficientNeighbors {
            volume: member_ids.len(),
            required: config.v_min,
        });
    }
    let sub = cloud.subset(member_ids)?;
    let medoid = (0..sub.len())
        .map(|i| {
            let p = sub.point(i);
            let total: f64 = sub.points().map(|q| crate::kdtree::sq_dist(p, q).sqrt()).sum();
            (total, i)
        })
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, i)| i)
        .expect("non-empty");
    let config = config.resolved(&sub);
    let profile = point_profile(&sub, medoid, &config)?;
    let mut dims: Vec<f64> = profile.defined().map(|(_, d)| d).collect();
    if dims.is_empty() {
        return Err(Error::NoDefinedSamples);
    }
    dims.sort_unstable_by(f64::total_cmp);
    let m = dims.len();
    Ok(if m % 2 == 1 {
        dims[m / 2]
    } else {
        0.5 * (dims[m / 2 - 1] + dims[m / 2])
    })
}

/// Index of the centroid nearest to `point` (lowest index on ties).
pub fn nearest_component(point: &ProjectivePoint, clusters: &[ConeCluster]) -> Result<usize> {
    if clusters.is_empty() {
        return Err(Error::EmptyNeighborhood);
    }
    let mut best = (f64::INFINITY, 0);
    for (j, c) in clusters.iter().enumerate() {
        let d = point.distance(&c.centroid)?;
        if d < best.0 {
            best = (d, j);
        }
    }
    Ok(best.1)
}
