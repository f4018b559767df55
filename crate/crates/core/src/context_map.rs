//! Context map `Φ = p ∘ g`: aggregate a context window, then project to a
//! point of the exceptional divisor. Also the hybrid embedding `E′`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{dot, norm, PointCloud, ProjectivePoint, ZERO_NORM};
use crate::singularity::SingularLocusReport;
use crate::tangent_cone::{nearest_component, TangentConeEstimate};

/// Context vectors around a token position, keyed by their sequence index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextWindow {
    pub position: usize,
    pub k: usize,
    pub entries: Vec<(usize, Vec<f64>)>,
    pub left_count: usize,
    pub right_count: usize,
}

impl ContextWindow {
    /// Symmetric window of half-width `k` around `position` in `sequence`,
    /// truncated at the edges.
    pub fn from_sequence(sequence: &[Vec<f64>], position: usize, k: usize) -> Result<Self> {
        if position >= sequence.len() {
            return Err(Error::TokenOutOfRange {
                id: position,
                len: sequence.len(),
            });
        }
        let lo = position.saturating_sub(k);
        let hi = (position + k).min(sequence.len() - 1);
        let entries: Vec<(usize, Vec<f64>)> = (lo..=hi)
            .filter(|&j| j != position)
            .map(|j| (j, sequence[j].clone()))
            .collect();
        Self::from_entries(position, k, entries)
    }

    /// Window from explicit `(index, vector)` pairs. Entries may come in any
    /// order; aggregation sorts them.
    pub fn from_entries(position: usize, k: usize, entries: Vec<(usize, Vec<f64>)>) -> Result<Self> {
        if let Some((_, first)) = entries.first() {
            let n = first.len();
            for (_, v) in &entries {
                if v.len() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        found: v.len(),
                    });
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NonFinite);
                }
            }
        }
        let left_count = entries.iter().filter(|(j, _)| *j < position).count();
        let right_count = entries.iter().filter(|(j, _)| *j > position).count();
        Ok(ContextWindow {
            position,
            k,
            entries,
            left_count,
            right_count,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Every context vector multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let entries = self
            .entries
            .iter()
            .map(|(j, v)| (*j, v.iter().map(|x| x * c).collect()))
            .collect();
        ContextWindow {
            entries,
            ..self.clone()
        }
    }

    /// Entries in canonical order: by index, then by coordinate bits.
    fn canonical(&self) -> Vec<&(usize, Vec<f64>)> {
        let mut e: Vec<&(usize, Vec<f64>)> = self.entries.iter().collect();
        e.sort_by(|a, b| {
            a.0.cmp(&b.0).then_with(|| {
                a.1.iter()
                    .map(|x| x.to_bits())
                    .cmp(b.1.iter().map(|x| x.to_bits()))
            })
        });
        e
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AggregatorSpec {
    Mean,
    SoftmaxAttention { q: Vec<f64>, tau: f64 },
}

impl AggregatorSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            AggregatorSpec::Mean => Ok(()),
            AggregatorSpec::SoftmaxAttention { q, tau } => {
                if !(*tau > 0.0 && tau.is_finite()) {
                    return Err(Error::InvalidParams(format!("tau must be > 0, got {tau}")));
                }
                if q.iter().any(|x| !x.is_finite()) {
                    return Err(Error::InvalidParams("attention query must be finite".into()));
                }
                Ok(())
            }
        }
    }
}

/// `g`: mean or softmax-attention pooling of the window, summed in canonical
/// order so the result does not depend on entry order.
pub fn aggregate(window: &ContextWindow, spec: &AggregatorSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let entries = window.canonical();
    let Some((_, first)) = entries.first() else {
        return Err(Error::EmptyContext);
    };
    let n = first.len();
    let mut acc = vec![0.0; n];
    match spec {
        AggregatorSpec::Mean => {
            for (_, v) in &entries {
                for (a, x) in acc.iter_mut().zip(v) {
                    *a += x;
                }
            }
            let m = entries.len() as f64;
            acc.iter_mut().for_each(|a| *a /= m);
        }
        AggregatorSpec::SoftmaxAttention { q, tau } => {
            if q.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: q.len(),
                });
            }
            let logits: Vec<f64> = entries.iter().map(|(_, v)| dot(q, v) / tau).collect();
            let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let weights: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
            let z: f64 = weights.iter().sum();
            for ((_, v), w) in entries.iter().zip(&weights) {
                let w = w / z;
                for (a, x) in acc.iter_mut().zip(v) {
                    *a += w * x;
                }
            }
        }
    }
    Ok(acc)
}

/// `Φ = p ∘ g`.
pub fn context_map(window: &ContextWindow, spec: &AggregatorSpec) -> Result<ProjectivePoint> {
    let g = aggregate(window, spec)?;
    if norm(&g) < ZERO_NORM {
        return Err(Error::ZeroAggregate);
    }
    ProjectivePoint::from_vector(&g)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum HybridRepresentation {
    Regular { vector: Vec<f64> },
    Desingularized { token_id: usize, divisor_point: ProjectivePoint },
}

/// `E′`: the table row for regular tokens, the context's divisor point for
/// singular ones.
pub fn hybrid_embed(
    token_id: usize,
    window: &ContextWindow,
    locus: &SingularLocusReport,
    table: &PointCloud,
    spec: &AggregatorSpec,
) -> Result<HybridRepresentation> {
    if token_id >= table.len() {
        return Err(Error::TokenOutOfRange {
            id: token_id,
            len: table.len(),
        });
    }
    if !locus.contains(token_id) {
        return Ok(HybridRepresentation::Regular {
            vector: table.point(token_id).to_vec(),
        });
    }
    if window.is_empty() {
        return Err(Error::MissingContext(token_id));
    }
    Ok(HybridRepresentation::Desingularized {
        token_id,
        divisor_point: context_map(window, spec)?,
    })
}

/// Cone cluster whose centroid is closest to `point`; ties go to the lowest index.
pub fn nearest_divisor_component(point: &ProjectivePoint, cone: &TangentConeEstimate) -> Result<usize> {
    nearest_component(point, &cone.clusters)
}
