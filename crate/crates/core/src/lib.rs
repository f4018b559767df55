//! Detection and resolution of dimension-instability singularities in
//! embedding point clouds.
//!
//! A point is singular when the log-log slope of its neighbor count changes
//! by more than `ε` across scales. Such a point can be blown up: every other
//! point is lifted to `(x, [x - s])` in `R^n × P^{n-1}`, and each branch of
//! the tangent cone at `s` gets its own exceptional point, which should then
//! look regular.

pub mod blowup;
pub mod context_map;
pub mod dimension;
pub mod error;
pub mod geom;
pub mod io;
pub mod kdtree;
pub mod pipeline;
pub mod singularity;
pub mod synth;
pub mod tangent_cone;

pub use blowup::{blow_up, default_lambda, regularization_check, verify_isomorphism_away_from_center, BlownUpCloud};
pub use context_map::{aggregate, context_map, hybrid_embed, nearest_divisor_component, AggregatorSpec, ContextWindow, HybridRepresentation};
pub use dimension::{dimension_at, dimension_profile, local_volume, DimensionConfig, DimensionProfile, Estimator, RMaxPolicy};
pub use error::{Error, Result};
pub use geom::{blowup_distance, projective_distance, projective_from_vector, BlowupPoint, PointCloud, ProjectivePoint, RadiusGrid};
pub use singularity::{is_singular, singular_locus, SingularLocusReport, SingularityParams, Verdict};
pub use synth::{generate, GroundTruth, SynthKind, SynthSpec};
pub use tangent_cone::{estimate_tangent_cone, ConeParams, TangentConeEstimate};
pub use pipeline::{resolve_center, DivisorMode, LambdaPolicy, Resolution};
