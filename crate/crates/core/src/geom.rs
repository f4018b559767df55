//! Point clouds, projective points and the product metric on the blown-up space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kdtree::{sq_dist, KdTree};

/// Norms below this are treated as the zero vector.
pub const ZERO_NORM: f64 = 1e-12;

/// Grid used to snap pivot-relative coordinates of a projective representative.
const SNAP: f64 = 4294967296.0; // 2^32

/// Finite point set in `R^n` with an exact range-query index.
#[derive(Debug, Clone)]
pub struct PointCloud {
    coords: Vec<f64>,
    dim: usize,
    labels: Option<Vec<String>>,
    index: KdTree,
}

impl PointCloud {
    /// Builds a cloud from a row-major coordinate buffer.
    pub fn from_flat(coords: Vec<f64>, dim: usize, labels: Option<Vec<String>>) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidCloud(format!("ambient dimension {dim} < 2")));
        }
        if coords.is_empty() || !coords.len().is_multiple_of(dim) {
            return Err(Error::InvalidCloud(format!(
                "{} coordinates do not form rows of {dim}",
                coords.len()
            )));
        }
        let len = coords.len() / dim;
        if let Some(pos) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFiniteValue {
                row: pos / dim,
                col: pos % dim,
            });
        }
        if let Some(l) = &labels {
            if l.len() != len {
                return Err(Error::InvalidCloud(format!(
                    "{} labels for {len} points",
                    l.len()
                )));
            }
        }
        let index = KdTree::build(&coords, dim);
        Ok(PointCloud {
            coords,
            dim,
            labels,
            index,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: Option<Vec<String>>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut coords = Vec::with_capacity(rows.len() * dim);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != dim {
                return Err(Error::RowDimensionMismatch {
                    row: i,
                    expected: dim,
                    found: r.len(),
                });
            }
            coords.extend_from_slice(r);
        }
        Self::from_flat(coords, dim, labels)
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Sub-cloud made of the given rows, in the given order.
    pub fn subset(&self, ids: &[usize]) -> Result<PointCloud> {
        let mut coords = Vec::with_capacity(ids.len() * self.dim);
        for &i in ids {
            coords.extend_from_slice(self.point(i));
        }
        let labels = self
            .labels
            .as_ref()
            .map(|l| ids.iter().map(|&i| l[i].clone()).collect());
        PointCloud::from_flat(coords, self.dim, labels)
    }

    fn check_dim(&self, center: &[f64]) -> Result<()> {
        if center.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: center.len(),
            });
        }
        Ok(())
    }

    /// Number of cloud points in the closed ball of radius `r` (index query).
    pub fn range_count(&self, center: &[f64], r: f64) -> Result<usize> {
        self.check_dim(center)?;
        if r.is_nan() || r < 0.0 {
            return Err(Error::InvalidParams(format!("radius {r} must be >= 0")));
        }
        Ok(self.index.count_within(&self.coords, center, r * r))
    }

    /// Linear-scan reference for [`PointCloud::range_count`].
    pub fn range_count_naive(&self, center: &[f64], r: f64) -> usize {
        let r2 = r * r;
        self.points().filter(|p| sq_dist(p, center) <= r2).count()
    }

    /// `(index, squared distance)` for all points within `r`, sorted by index.
    pub fn neighbors_within(&self, center: &[f64], r: f64) -> Result<Vec<(usize, f64)>> {
        self.check_dim(center)?;
        Ok(self.index.within(&self.coords, center, r * r))
    }

    /// Distance from `center` to its `k`-th nearest cloud point (1-based,
    /// counting `center` itself if it belongs to the cloud). Saturates at the
    /// farthest point when `k > len`.
    pub fn kth_neighbor_distance(&self, center: &[f64], k: usize) -> Result<f64> {
        self.check_dim(center)?;
        let best = self.index.k_nearest_sq(&self.coords, center, k.max(1));
        Ok(best.last().copied().unwrap_or(0.0).sqrt())
    }

    pub fn centroid(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.dim];
        for p in self.points() {
            for (a, b) in c.iter_mut().zip(p) {
                *a += b;
            }
        }
        let n = self.len() as f64;
        c.iter_mut().for_each(|a| *a /= n);
        c
    }
}

/// Element of `P^{n-1}`: a unit vector whose first non-negligible coordinate
/// is positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectivePoint {
    rep: Vec<f64>,
}

impl ProjectivePoint {
    /// Canonical class of `v`.
    ///
    /// Coordinates are taken relative to the largest-magnitude entry (lowest
    /// index on ties) and snapped to a 2^-32 grid before normalizing, so `v`
    /// and any rescaling `αv` produce the same bits, and re-projecting a
    /// representative returns it unchanged.
    pub fn from_vector(v: &[f64]) -> Result<Self> {
        if v.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite);
        }
        if norm(v) < ZERO_NORM {
            return Err(Error::ZeroVector);
        }
        let mut pivot = 0;
        for (i, c) in v.iter().enumerate() {
            if c.abs() > v[pivot].abs() {
                pivot = i;
            }
        }
        let p = v[pivot];
        let mut w: Vec<f64> = v
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                if i == pivot {
                    1.0
                } else {
                    // round() is symmetric about zero, so snapping commutes with negation
                    (c / p * SNAP).round() / SNAP
                }
            })
            .collect();
        if let Some(first) = w.iter().find(|c| c.abs() > ZERO_NORM) {
            if *first < 0.0 {
                w.iter_mut().for_each(|c| *c = -*c);
            }
        }
        let n = norm(&w);
        w.iter_mut().for_each(|c| *c /= n);
        // -0.0 and 0.0 would otherwise break bitwise equality
        w.iter_mut().for_each(|c| {
            if *c == 0.0 {
                *c = 0.0
            }
        });
        Ok(ProjectivePoint { rep: w })
    }

    pub fn rep(&self) -> &[f64] {
        &self.rep
    }

    pub fn dim(&self) -> usize {
        self.rep.len()
    }

    /// Angular distance `arccos |<a, b>|` in `[0, π/2]`.
    ///
    /// Evaluated as `2 atan2(|a - σb|, |a + σb|)` with `σ = sign <a, b>`,
    /// which is exactly zero for equal representatives and well conditioned
    /// near 0.
    pub fn distance(&self, other: &ProjectivePoint) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(angle_between_lines(&self.rep, &other.rep))
    }
}

pub(crate) fn angle_between_lines(a: &[f64], b: &[f64]) -> f64 {
    let d = dot(a, b);
    let s = if d < 0.0 { -1.0 } else { 1.0 };
    let mut diff = 0.0;
    let mut sum = 0.0;
    for (x, y) in a.iter().zip(b) {
        let m = x - s * y;
        let p = x + s * y;
        diff += m * m;
        sum += p * p;
    }
    2.0 * diff.sqrt().atan2(sum.sqrt())
}

pub fn projective_from_vector(v: &[f64]) -> Result<ProjectivePoint> {
    ProjectivePoint::from_vector(v)
}

pub fn projective_distance(a: &ProjectivePoint, b: &ProjectivePoint) -> Result<f64> {
    a.distance(b)
}

/// Point of the blow-up: a base point together with a direction class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlowupPoint {
    pub base: Vec<f64>,
    pub dir: ProjectivePoint,
    pub is_exceptional: bool,
}

impl BlowupPoint {
    /// Strict-transform lift `x ↦ (x, [x - s])`.
    pub fn lift(x: &[f64], center: &[f64]) -> Result<Self> {
        if x.len() != center.len() {
            return Err(Error::DimensionMismatch {
                expected: center.len(),
                found: x.len(),
            });
        }
        let diff: Vec<f64> = x.iter().zip(center).map(|(a, b)| a - b).collect();
        Ok(BlowupPoint {
            base: x.to_vec(),
            dir: ProjectivePoint::from_vector(&diff)?,
            is_exceptional: false,
        })
    }

    pub fn exceptional(center: &[f64], dir: ProjectivePoint) -> Self {
        BlowupPoint {
            base: center.to_vec(),
            dir,
            is_exceptional: true,
        }
    }

    /// The projection π: the base point (the center, for exceptional points).
    pub fn project(&self) -> &[f64] {
        &self.base
    }
}

/// `λ · d_P(a.dir, b.dir)`, the projective part of [`blowup_distance`].
pub fn projective_term(a: &BlowupPoint, b: &BlowupPoint, lambda: f64) -> Result<f64> {
    check_scale(lambda)?;
    Ok(lambda * a.dir.distance(&b.dir)?)
}

/// Product metric `sqrt(|a - b|^2 + λ^2 d_P^2)` on `R^n × P^{n-1}`.
pub fn blowup_distance(a: &BlowupPoint, b: &BlowupPoint, lambda: f64) -> Result<f64> {
    if a.base.len() != b.base.len() {
        return Err(Error::DimensionMismatch {
            expected: a.base.len(),
            found: b.base.len(),
        });
    }
    let t = projective_term(a, b, lambda)?;
    Ok((sq_dist(&a.base, &b.base) + t * t).sqrt())
}

fn check_scale(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveScale(lambda))
    }
}

/// Strictly increasing positive radii; the last one is `r_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusGrid {
    radii: Vec<f64>,
}

impl RadiusGrid {
    pub const MIN_LEN: usize = 4;

    pub fn new(radii: Vec<f64>) -> Result<Self> {
        if radii.len() < Self::MIN_LEN {
            return Err(Error::InvalidGrid(format!(
                "{} radii, need at least {}",
                radii.len(),
                Self::MIN_LEN
            )));
        }
        if radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::InvalidGrid("radii must be finite and > 0".into()));
        }
        if radii.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid("radii must be strictly increasing".into()));
        }
        Ok(RadiusGrid { radii })
    }

    /// `count` log-spaced radii from `r_min` to `r_max`, both included exactly.
    pub fn geometric(r_min: f64, r_max: f64, count: usize) -> Result<Self> {
        if !(r_min > 0.0 && r_max > r_min) {
            return Err(Error::InvalidGrid(format!(
                "need 0 < r_min < r_max, got {r_min}, {r_max}"
            )));
        }
        let count = count.max(2);
        let step = (r_max / r_min).ln() / (count - 1) as f64;
        let mut radii: Vec<f64> = (0..count)
            .map(|i| r_min * (step * i as f64).exp())
            .collect();
        radii[0] = r_min;
        radii[count - 1] = r_max;
        Self::new(radii)
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn r_max(&self) -> f64 {
        *self.radii.last().expect("grid is non-empty")
    }

    pub fn len(&self) -> usize {
        self.radii.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radii.is_empty()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn pp(v: &[f64]) -> ProjectivePoint {
        ProjectivePoint::from_vector(v).unwrap()
    }

    #[test]
    fn projective_normalizes_and_flips_sign() {
        assert_eq!(pp(&[0.0, 3.0]).rep(), &[0.0, 1.0]);
        assert_eq!(pp(&[-2.0, 0.0]).rep(), &[1.0, 0.0]);
        assert!(matches!(
            ProjectivePoint::from_vector(&[0.0, 1e-13]),
            Err(Error::ZeroVector)
        ));
        assert!(matches!(
            ProjectivePoint::from_vector(&[f64::NAN, 1.0]),
            Err(Error::NonFinite)
        ));
    }

    #[test]
    fn projective_rescaling_is_bitwise_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            let v: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
            let w: Vec<f64> = v.iter().map(|c| 7.3 * c).collect();
            let a = pp(&v);
            let b = pp(&w);
            assert_eq!(a, b);
            assert!((norm(a.rep()) - 1.0).abs() < 1e-12);
            // idempotent
            assert_eq!(pp(a.rep()), a);
        }
    }

    #[test]
    fn projective_distance_examples() {
        let e1 = pp(&[1.0, 0.0]);
        let e2 = pp(&[0.0, 1.0]);
        let neg = pp(&[-1.0, 0.0]);
        let diag = pp(&[1.0, 1.0]);
        assert!((e1.distance(&e2).unwrap() - FRAC_PI_2).abs() < 1e-15);
        assert_eq!(e1.distance(&neg).unwrap(), 0.0);
        assert!((e1.distance(&diag).unwrap() - FRAC_PI_4).abs() < 1e-9);
        let e3 = pp(&[1.0, 0.0, 0.0]);
        assert!(matches!(
            e1.distance(&e3),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn blowup_distance_examples() {
        let s = [0.0, 0.0];
        let a = BlowupPoint::lift(&[1.0, 0.0], &s).unwrap();
        let b = BlowupPoint::lift(&[4.0, 0.0], &s).unwrap();
        assert_eq!(blowup_distance(&a, &a, 1.0).unwrap(), 0.0);
        assert!((blowup_distance(&a, &b, 1.0).unwrap() - 3.0).abs() < 1e-15);
        let x = BlowupPoint::exceptional(&s, pp(&[1.0, 0.0]));
        let y = BlowupPoint::exceptional(&s, pp(&[0.0, 1.0]));
        assert!((blowup_distance(&x, &y, 2.0).unwrap() - PI).abs() < 1e-12);
        assert!(matches!(
            blowup_distance(&x, &y, 0.0),
            Err(Error::NonPositiveScale(_))
        ));
    }

    #[test]
    fn doubling_lambda_doubles_projective_term_exactly() {
        let s = [0.0, 0.0, 0.0];
        let a = BlowupPoint::lift(&[1.0, 0.2, 0.3], &s).unwrap();
        let b = BlowupPoint::lift(&[0.1, 1.0, -0.4], &s).unwrap();
        let t1 = projective_term(&a, &b, 0.37).unwrap();
        let t2 = projective_term(&a, &b, 0.74).unwrap();
        assert_eq!(t2, 2.0 * t1);
    }

    #[test]
    fn range_count_edges() {
        let cloud = PointCloud::from_rows(
            &[vec![0.0, 0.0], vec![0.0, 0.0], vec![1.0, 0.0], vec![3.0, 4.0]],
            None,
        )
        .unwrap();
        assert_eq!(cloud.range_count(&[0.0, 0.0], 0.0).unwrap(), 2);
        assert_eq!(cloud.range_count(&[0.0, 0.0], 1.0).unwrap(), 3);
        assert_eq!(cloud.range_count(&[0.0, 0.0], 5.0).unwrap(), 4);
        assert!(cloud.range_count(&[0.0, 0.0], -1.0).is_err());
    }

    #[test]
    fn cloud_validation() {
        assert!(PointCloud::from_rows(&[vec![1.0]], None).is_err());
        assert!(PointCloud::from_rows(&[vec![1.0, f64::INFINITY]], None).is_err());
        assert!(PointCloud::from_rows(&[vec![1.0, 2.0]], Some(vec![])).is_err());
        assert!(matches!(
            PointCloud::from_rows(&[vec![1.0, 2.0], vec![1.0]], None),
            Err(Error::RowDimensionMismatch { row: 1, .. })
        ));
    }

    #[test]
    fn grid_validation() {
        assert!(RadiusGrid::new(vec![1.0, 2.0, 3.0]).is_err());
        assert!(RadiusGrid::new(vec![1.0, 2.0, 2.0, 3.0]).is_err());
        assert!(RadiusGrid::new(vec![0.0, 2.0, 2.5, 3.0]).is_err());
        let g = RadiusGrid::geometric(0.1, 1.0, 32).unwrap();
        assert_eq!(g.len(), 32);
        assert_eq!(g.r_max(), 1.0);
        assert_eq!(g.radii()[0], 0.1);
    }

    #[test]
    fn kth_neighbor_distance_counts_self() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 0.0]).collect();
        let cloud = PointCloud::from_rows(&rows, None).unwrap();
        assert_eq!(cloud.kth_neighbor_distance(&[0.0, 0.0], 1).unwrap(), 0.0);
        assert_eq!(cloud.kth_neighbor_distance(&[0.0, 0.0], 5).unwrap(), 4.0);
        assert_eq!(cloud.kth_neighbor_distance(&[0.0, 0.0], 50).unwrap(), 9.0);
    }
}
