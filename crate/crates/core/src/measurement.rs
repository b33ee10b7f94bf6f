//! Shape distance between two poses on the pre-shape sphere.
//!
//! Matched representative samples are re-centered and re-normalized, the
//! optimal proper rotation between them comes from the SVD of their 3×3
//! cross-covariance, and the distance is the arc cosine of the resulting
//! inner product.

use std::f64::consts::PI;

use nalgebra::SVD;

use crate::error::{Error, Result};
use crate::geometry::{Matrix3, RotationMatrix, Vector3};
use crate::partition::{matched_pairs, PartitionProfile, SampleSet, MIN_MATCHED_CELLS};

/// Measure reported for a pose without enough correspondence.
pub const SENTINEL_MEASURE: f64 = PI;

/// Result of aligning one matched sample set: `local_rotation` and
/// `local_scale` map the centered source samples onto the centered target
/// samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalAlignment {
    /// Radians on the pre-shape sphere, within `[0, π]`.
    pub measure: f64,
    pub local_rotation: RotationMatrix,
    /// `s(target samples) / s(source samples)`.
    pub local_scale: f64,
    pub matched_count: usize,
    pub target_centroid: Vector3,
    pub source_centroid: Vector3,
}

impl LocalAlignment {
    pub fn sentinel(matched_count: usize) -> Self {
        Self {
            measure: SENTINEL_MEASURE,
            local_rotation: RotationMatrix::identity(),
            local_scale: 1.0,
            matched_count,
            target_centroid: Vector3::zeros(),
            source_centroid: Vector3::zeros(),
        }
    }

    pub fn is_valid(&self) -> bool {
        self.measure < SENTINEL_MEASURE
    }
}

/// Rotation `O` maximizing `Σ aᵢ · O bᵢ` over SO(3), with the maximum.
///
/// `a` and `b` are row-aligned and expected to be centered with unit
/// Frobenius norm, in which case the returned trace lies in `[-1, 1]`.
pub fn solve_local_rotation(a: &[Vector3], b: &[Vector3]) -> Result<(RotationMatrix, f64)> {
    if a.len() != b.len() {
        return Err(Error::InvalidParameter(format!(
            "sample sets differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    let mut h = Matrix3::zeros();
    for (p, q) in a.iter().zip(b) {
        h += p * q.transpose();
    }
    rotation_from_cross_covariance(&h)
}

fn rotation_from_cross_covariance(h: &Matrix3) -> Result<(RotationMatrix, f64)> {
    let svd = SVD::new(*h, true, true);
    let (Some(u), Some(v_t)) = (svd.u, svd.v_t) else {
        return Err(Error::DegenerateCorrespondence);
    };
    let sv = svd.singular_values;
    if !(sv.max() > 1e-14) {
        return Err(Error::DegenerateCorrespondence);
    }
    let smallest = sv.imin();
    let mut u = u;
    let flip = (u * v_t).determinant() < 0.0;
    let mut trace = sv.sum();
    if flip {
        let col = -u.column(smallest);
        u.set_column(smallest, &col);
        trace -= 2.0 * sv[smallest];
    }
    Ok((RotationMatrix::new(u * v_t)?, trace))
}

fn center_and_scale(samples: &[Vector3]) -> (Vector3, f64) {
    let c = samples.iter().sum::<Vector3>() / samples.len() as f64;
    let s = samples.iter().map(|p| (p - c).norm_squared()).sum::<f64>().sqrt();
    (c, s)
}

/// Aligns two equally long matched sample sequences.
///
/// Fewer than four pairs yields the sentinel alignment (measure `π`).
pub fn measure_pair(target: &[Vector3], source: &[Vector3]) -> Result<LocalAlignment> {
    if target.len() != source.len() {
        return Err(Error::InvalidParameter(format!(
            "sample sets differ in length ({} vs {})",
            target.len(),
            source.len()
        )));
    }
    let n = target.len();
    if n < MIN_MATCHED_CELLS {
        return Ok(LocalAlignment::sentinel(n));
    }
    let (ca, sa) = center_and_scale(target);
    let (cb, sb) = center_and_scale(source);
    if !(sa > 0.0 && sb > 0.0) {
        return Err(Error::DegenerateCorrespondence);
    }
    let mut h = Matrix3::zeros();
    for (p, q) in target.iter().zip(source) {
        h += ((p - ca) / sa) * ((q - cb) / sb).transpose();
    }
    let (rotation, trace) = rotation_from_cross_covariance(&h)?;
    Ok(LocalAlignment {
        measure: trace.clamp(-1.0, 1.0).acos(),
        local_rotation: rotation,
        local_scale: sa / sb,
        matched_count: n,
        target_centroid: ca,
        source_centroid: cb,
    })
}

/// Combined contour and feature measure between two poses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeMeasure {
    /// `max(contour, features)` when both are available, else the contour
    /// measure; `π` when the contour sets do not correspond.
    pub value: f64,
    pub contour: LocalAlignment,
    pub feature_measure: Option<f64>,
}

impl ShapeMeasure {
    pub fn sentinel(matched: usize) -> Self {
        Self {
            value: SENTINEL_MEASURE,
            contour: LocalAlignment::sentinel(matched),
            feature_measure: None,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.contour.is_valid()
    }
}

/// Combines the contour and feature measures between a target and a source
/// profile. The alignment carried along is always the contour one.
pub fn combine(contour: Result<LocalAlignment>, features: Option<Result<LocalAlignment>>) -> ShapeMeasure {
    let contour = match contour {
        Ok(c) if c.is_valid() => c,
        Ok(c) => return ShapeMeasure::sentinel(c.matched_count),
        Err(_) => return ShapeMeasure::sentinel(0),
    };
    let feature_measure = features
        .and_then(Result::ok)
        .filter(LocalAlignment::is_valid)
        .map(|f| f.measure);
    ShapeMeasure {
        value: feature_measure.map_or(contour.measure, |f| f.max(contour.measure)),
        contour,
        feature_measure,
    }
}

pub fn combined_measure(
    target: &PartitionProfile,
    source: &PartitionProfile,
    use_features: bool,
) -> Result<ShapeMeasure> {
    if target.layout != source.layout {
        return Err(Error::InvalidParameter("profiles use different layouts".into()));
    }
    let contour = match matched_pairs(target, source, SampleSet::Contour) {
        Ok((a, b)) => measure_pair(&a, &b),
        Err(Error::InsufficientCorrespondence { matched, .. }) => {
            return Ok(ShapeMeasure::sentinel(matched))
        }
        Err(e) => return Err(e),
    };
    let features = use_features
        .then(|| matched_pairs(target, source, SampleSet::Features).ok())
        .flatten()
        .map(|(a, b)| measure_pair(&a, &b));
    Ok(combine(contour, features))
}
