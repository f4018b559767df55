//! Synthetic clouds with analytic ground truth.
//!
//! All randomness comes from `ChaCha8Rng::seed_from_u64(seed)`, so a spec
//! produces the same bytes on every platform.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{dot, norm, PointCloud, ProjectivePoint};

const MAX_PLACEMENT_TRIES: usize = 1000;
const DEFAULT_MIN_ANGLE_DEG: f64 = 30.0;
const DEFAULT_CONE_HALF_ANGLE_DEG: f64 = 45.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthKind {
    /// Uniform balls in random subspaces through the origin.
    AffineSubspaceUnion,
    /// The x and y axes (`xy = 0`) embedded in the first two coordinates.
    CrossingLines,
    /// Circular cone surface with apex at the origin.
    Cone,
    /// A `D`-sphere of the given radius in a random `(D+1)`-subspace.
    SpherePatch,
    /// A single `D`-ball in a random subspace; no singular point.
    FlatPatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub kind: SynthKind,
    pub ambient: usize,
    /// One intrinsic dimension per component.
    pub dims: Vec<usize>,
    /// Samples drawn per component.
    pub samples: usize,
    /// Isotropic Gaussian σ; `None` means `0.01 × radius`.
    #[serde(default)]
    pub noise: Option<f64>,
    pub seed: u64,
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_cone_angle")]
    pub cone_half_angle_deg: f64,
    #[serde(default = "default_min_angle")]
    pub min_principal_angle_deg: f64,
}

fn default_radius() -> f64 {
    1.0
}

fn default_cone_angle() -> f64 {
    DEFAULT_CONE_HALF_ANGLE_DEG
}

fn default_min_angle() -> f64 {
    DEFAULT_MIN_ANGLE_DEG
}

impl SynthSpec {
    pub fn new(kind: SynthKind, ambient: usize, dims: Vec<usize>, samples: usize, seed: u64) -> Self {
        SynthSpec {
            kind,
            ambient,
            dims,
            samples,
            noise: None,
            seed,
            radius: default_radius(),
            cone_half_angle_deg: default_cone_angle(),
            min_principal_angle_deg: default_min_angle(),
        }
    }

    pub fn crossing_lines(ambient: usize, samples: usize, seed: u64) -> Self {
        Self::new(SynthKind::CrossingLines, ambient, vec![1, 1], samples, seed)
    }

    pub fn flat_patch(ambient: usize, dim: usize, samples: usize, seed: u64) -> Self {
        Self::new(SynthKind::FlatPatch, ambient, vec![dim], samples, seed)
    }

    pub fn with_noise(mut self, sigma: f64) -> Self {
        self.noise = Some(sigma);
        self
    }

    pub fn sigma(&self) -> f64 {
        self.noise.unwrap_or(0.01 * self.radius)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        if self.ambient < 2 {
            return bad(format!("ambient dimension must be >= 2, got {}", self.ambient));
        }
        if self.dims.is_empty() {
            return bad("at least one component dimension is required".into());
        }
        if let Some(d) = self.dims.iter().find(|&&d| d == 0 || d >= self.ambient) {
            return bad(format!("component dimension {d} must be in 1..{}", self.ambient));
        }
        if self.samples == 0 {
            return bad("samples must be > 0".into());
        }
        let sigma = self.sigma();
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return bad(format!("noise must be >= 0, got {sigma}"));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return bad(format!("radius must be > 0, got {}", self.radius));
        }
        match self.kind {
            SynthKind::CrossingLines if self.dims != [1, 1] => bad("crossing lines have dims [1, 1]".into()),
            SynthKind::FlatPatch | SynthKind::SpherePatch | SynthKind::Cone if self.dims.len() != 1 => {
                bad(format!("{:?} takes exactly one component dimension", self.kind))
            }
            SynthKind::SpherePatch | SynthKind::Cone if self.dims[0] + 1 > self.ambient => {
                bad(format!("{:?} of dimension {} needs ambient >= {}", self.kind, self.dims[0], self.dims[0] + 1))
            }
            SynthKind::Cone if !(self.cone_half_angle_deg > 0.0 && self.cone_half_angle_deg < 90.0) => {
                bad("cone half angle must be in (0, 90) degrees".into())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum ComponentShape {
    /// Ball of the given radius in `origin + span(basis)`.
    Flat { radius: f64 },
    /// Sphere of the given radius centered at `origin` in `span(basis)`.
    Sphere { radius: f64 },
    /// Cone surface: `basis[0]` is the axis, the rest span the opening directions.
    Cone { half_angle: f64, height: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub dim: usize,
    pub origin: Vec<f64>,
    /// Orthonormal basis of the component's span.
    pub basis: Vec<Vec<f64>>,
    #[serde(flatten)]
    pub shape: ComponentShape,
}

impl Component {
    fn project(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let rel: Vec<f64> = x.iter().zip(&self.origin).map(|(a, b)| a - b).collect();
        let coeffs: Vec<f64> = self.basis.iter().map(|b| dot(b, &rel)).collect();
        let mut resid = rel;
        for (c, b) in coeffs.iter().zip(&self.basis) {
            for (r, bi) in resid.iter_mut().zip(b) {
                *r -= c * bi;
            }
        }
        (coeffs, resid)
    }

    /// Euclidean distance from `x` to the (unbounded) component surface.
    pub fn distance(&self, x: &[f64]) -> f64 {
        let (c, resid) = self.project(x);
        let off = norm(&resid);
        match &self.shape {
            ComponentShape::Flat { .. } => off,
            ComponentShape::Sphere { radius } => (off * off + (norm(&c) - radius).powi(2)).sqrt(),
            ComponentShape::Cone { half_angle, .. } => {
                // distance within the span to the cone surface, via the 2D
                // (axial, radial) half-plane
                let a = c[0];
                let rho = norm(&c[1..]);
                let (s, co) = half_angle.sin_cos();
                let along = a * co + rho * s;
                let in_plane = if along <= 0.0 {
                    (a * a + rho * rho).sqrt()
                } else {
                    (rho * co - a * s).abs()
                };
                (off * off + in_plane * in_plane).sqrt()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub singular_points: Vec<Vec<f64>>,
    pub components: Vec<Component>,
    /// Component of each sample; `None` for a recorded singular point.
    pub membership: Vec<Option<usize>>,
    pub noise: f64,
}

impl GroundTruth {
    /// Containment tolerance for a component: three noise standard deviations
    /// of the off-component residual, plus a floor for exact data.
    pub fn tolerance(&self, component: usize) -> f64 {
        let ambient = self.components[component].origin.len();
        let codim = ambient - self.components[component].dim;
        3.0 * self.noise * (codim as f64).sqrt() + 1e-9
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "dims", rename_all = "snake_case")]
pub enum OracleDimension {
    Single(usize),
    /// Several components meet here; no single dimension applies.
    Multiple(Vec<usize>),
}

/// Analytic dimension at `point`. Components within `scale` (plus the noise
/// tolerance) all count; several distinct components give `Multiple`.
pub fn oracle_dimension(truth: &GroundTruth, point: &[f64], scale: f64) -> Result<OracleDimension> {
    let near: Vec<usize> = truth
        .components
        .iter()
        .enumerate()
        .filter(|(j, c)| c.distance(point) <= truth.tolerance(*j) + scale.max(0.0))
        .map(|(_, c)| c.dim)
        .collect();
    match near.len() {
        0 => Err(Error::OffManifold),
        1 => Ok(OracleDimension::Single(near[0])),
        _ => Ok(OracleDimension::Multiple(near)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConeComponentTruth {
    /// Projective classes of the component's basis directions.
    Frame { directions: Vec<ProjectivePoint> },
    /// All directions at `half_angle` from `axis`.
    Circular { axis: ProjectivePoint, half_angle: f64 },
}

/// Tangent-cone components at a recorded singular point.
pub fn oracle_tangent_cone(truth: &GroundTruth, s: &[f64]) -> Result<Vec<ConeComponentTruth>> {
    let known = truth.singular_points.iter().any(|p| {
        p.len() == s.len() && p.iter().zip(s).all(|(a, b)| (a - b).abs() <= 1e-9)
    });
    if !known {
        return Err(Error::UnknownSingularPoint);
    }
    truth
        .components
        .iter()
        .map(|c| match &c.shape {
            ComponentShape::Cone { half_angle, .. } => Ok(ConeComponentTruth::Circular {
                axis: ProjectivePoint::from_vector(&c.basis[0])?,
                half_angle: *half_angle,
            }),
            _ => Ok(ConeComponentTruth::Frame {
                directions: c
                    .basis
                    .iter()
                    .map(|b| ProjectivePoint::from_vector(b))
                    .collect::<Result<_>>()?,
            }),
        })
        .collect()
}

/// Angle between the line `[dir]` and the span of an orthonormal `basis`.
pub fn angle_to_span(dir: &ProjectivePoint, basis: &[Vec<f64>]) -> f64 {
    let v = dir.rep();
    let proj2: f64 = basis.iter().map(|b| dot(b, v).powi(2)).sum();
    proj2.sqrt().clamp(0.0, 1.0).acos()
}

fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Orthonormal `n × d` frame from the QR factor of a Gaussian matrix.
fn random_frame(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    let g: Vec<f64> = gaussian_vec(rng, n * d);
    let m = DMatrix::from_column_slice(n, d, &g);
    let q = m.qr().q();
    (0..d).map(|j| q.column(j).iter().copied().collect()).collect()
}

/// Smallest principal angle between two spans.
pub fn min_principal_angle(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let m = DMatrix::from_fn(a.len(), b.len(), |i, j| dot(&a[i], &b[j]));
    let top = m.singular_values().iter().copied().fold(0.0, f64::max);
    top.clamp(0.0, 1.0).acos()
}

/// Uniform point in the unit `d`-ball.
fn unit_ball(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    let g = gaussian_vec(rng, d);
    let len = norm(&g);
    let u: f64 = rng.random();
    let r = u.powf(1.0 / d as f64);
    g.iter().map(|x| x * r / len).collect()
}

fn unit_sphere(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let g = gaussian_vec(rng, d);
        let len = norm(&g);
        if len > 1e-12 {
            return g.iter().map(|x| x / len).collect();
        }
    }
}

fn combine(n: usize, basis: &[Vec<f64>], coeffs: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; n];
    for (c, b) in coeffs.iter().zip(basis) {
        for (xi, bi) in x.iter_mut().zip(b) {
            *xi += c * bi;
        }
    }
    x
}

fn axis(n: usize, i: usize) -> Vec<f64> {
    let mut e = vec![0.0; n];
    e[i] = 1.0;
    e
}

fn place_subspaces(rng: &mut ChaCha8Rng, spec: &SynthSpec) -> Result<Vec<Vec<Vec<f64>>>> {
    let min_angle = spec.min_principal_angle_deg.to_radians();
    for _ in 0..MAX_PLACEMENT_TRIES {
        let frames: Vec<Vec<Vec<f64>>> = spec.dims.iter().map(|&d| random_frame(rng, spec.ambient, d)).collect();
        let ok = (0..frames.len()).all(|i| (i + 1..frames.len()).all(|j| min_principal_angle(&frames[i], &frames[j]) >= min_angle));
        if ok {
            return Ok(frames);
        }
    }
    Err(Error::InfeasibleSpec(format!(
        "could not place subspaces of dims {:?} in R^{} with principal angles >= {}°",
        spec.dims, spec.ambient, spec.min_principal_angle_deg
    )))
}

/// Draws the cloud and its ground truth. Singular points (intersection, apex)
/// come first and carry no noise.
pub fn generate(spec: &SynthSpec) -> Result<(PointCloud, GroundTruth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.ambient;
    let r = spec.radius;
    let origin = vec![0.0; n];

    let components: Vec<Component> = match spec.kind {
        SynthKind::AffineSubspaceUnion => place_subspaces(&mut rng, spec)?
            .into_iter()
            .zip(&spec.dims)
            .map(|(basis, &dim)| Component {
                dim,
                origin: origin.clone(),
                basis,
                shape: ComponentShape::Flat { radius: r },
            })
            .collect(),
        SynthKind::CrossingLines => (0..2)
            .map(|i| Component {
                dim: 1,
                origin: origin.clone(),
                basis: vec![axis(n, i)],
                shape: ComponentShape::Flat { radius: r },
            })
            .collect(),
        SynthKind::FlatPatch => vec![Component {
            dim: spec.dims[0],
            origin: origin.clone(),
            basis: random_frame(&mut rng, n, spec.dims[0]),
            shape: ComponentShape::Flat { radius: r },
        }],
        SynthKind::SpherePatch => vec![Component {
            dim: spec.dims[0],
            origin: origin.clone(),
            basis: random_frame(&mut rng, n, spec.dims[0] + 1),
            shape: ComponentShape::Sphere { radius: r },
        }],
        SynthKind::Cone => vec![Component {
            dim: spec.dims[0],
            origin: origin.clone(),
            basis: random_frame(&mut rng, n, spec.dims[0] + 1),
            shape: ComponentShape::Cone {
                half_angle: spec.cone_half_angle_deg.to_radians(),
                height: r,
            },
        }],
    };

    let singular_points = match spec.kind {
        SynthKind::FlatPatch | SynthKind::SpherePatch => vec![],
        _ => vec![origin.clone()],
    };

    let sigma = spec.sigma();
    let total = singular_points.len() + spec.samples * components.len();
    let mut coords = Vec::with_capacity(total * n);
    let mut membership = Vec::with_capacity(total);
    for s in &singular_points {
        coords.extend_from_slice(s);
        membership.push(None);
    }
    for (j, c) in components.iter().enumerate() {
        for _ in 0..spec.samples {
            let local: Vec<f64> = match &c.shape {
                ComponentShape::Flat { radius } => unit_ball(&mut rng, c.dim).iter().map(|x| x * radius).collect(),
                ComponentShape::Sphere { radius } => unit_sphere(&mut rng, c.dim + 1).iter().map(|x| x * radius).collect(),
                ComponentShape::Cone { half_angle, height } => {
                    // surface measure of a D-dim cone grows as t^(D-1)
                    let u: f64 = rng.random();
                    let t = height * u.powf(1.0 / c.dim as f64);
                    let around = unit_sphere(&mut rng, c.dim);
                    let (s, co) = half_angle.sin_cos();
                    std::iter::once(t * co).chain(around.iter().map(|x| t * s * x)).collect()
                }
            };
            let mut x = combine(n, &c.basis, &local);
            for (xi, oi) in x.iter_mut().zip(&c.origin) {
                *xi += oi;
            }
            if sigma > 0.0 {
                for xi in x.iter_mut() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *xi += sigma * z;
                }
            }
            coords.extend_from_slice(&x);
            membership.push(Some(j));
        }
    }
    let cloud = PointCloud::from_flat(coords, n, None)?;
    Ok((
        cloud,
        GroundTruth {
            singular_points,
            components,
            membership,
            noise: sigma,
        },
    ))
}
