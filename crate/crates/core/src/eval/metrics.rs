use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{apply_transform, estimate_normals, KdTree, PointCloud, RotationMatrix, SimilarityTransform};

/// Success threshold on [`gt_cosine`].
pub const GT_COS_THRESHOLD: f64 = 0.8;
/// Success threshold on [`mse_closest_point`] when that condition is enabled.
pub const MSE_THRESHOLD: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mse: f64,
    pub mse_n: f64,
    pub gt_cos: f64,
    pub success: bool,
}

impl Metrics {
    pub fn new(mse: f64, mse_n: f64, gt_cos: f64, use_mse_condition: bool) -> Self {
        Self {
            mse,
            mse_n,
            gt_cos,
            success: is_success(mse, gt_cos, use_mse_condition),
        }
    }
}

pub fn is_success(mse: f64, gt_cos: f64, use_mse_condition: bool) -> bool {
    gt_cos > GT_COS_THRESHOLD && (!use_mse_condition || mse < MSE_THRESHOLD)
}

/// Mean squared distance from each source point to its nearest template
/// point.
pub fn mse_closest_point(source: &PointCloud, template: &PointCloud) -> f64 {
    let tree = KdTree::from_cloud(template);
    let total: f64 = source
        .points()
        .iter()
        .map(|p| tree.nearest(p).map_or(0.0, |(_, d2)| d2))
        .sum();
    total / source.len() as f64
}

/// Mean of `1 − n_s · n_t` where `n_t` is the normal of the template point
/// nearest to each source point.
pub fn mse_normal(source: &PointCloud, template: &PointCloud) -> Result<f64> {
    let (ns, nt) = match (source.normals(), template.normals()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::InvalidParameter("normals required on both clouds".into())),
    };
    let tree = KdTree::from_cloud(template);
    let total: f64 = source
        .points()
        .iter()
        .zip(ns)
        .map(|(p, n)| 1.0 - n.dot(&nt[tree.nearest(p).map_or(0, |(i, _)| i)]))
        .sum();
    // unit normals can overshoot a dot product of 1 by an ulp
    Ok((total / source.len() as f64).max(0.0))
}

/// Normalized trace similarity `tr(T_gᵀ T') / 3`.
pub fn gt_cosine(ground_truth: &RotationMatrix, recovered: &RotationMatrix) -> f64 {
    (ground_truth.matrix().transpose() * recovered.matrix()).trace() / 3.0
}

/// Fraction of successful records, re-judged under `use_mse_condition`.
pub fn registration_recall(records: &[Metrics], use_mse_condition: bool) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::InvalidParameter("no records".into()));
    }
    let hits = records
        .iter()
        .filter(|m| is_success(m.mse, m.gt_cos, use_mse_condition))
        .count();
    Ok(hits as f64 / records.len() as f64)
}

/// Scores a recovered transform against the ground truth `truth`, which
/// maps the template onto the source.
///
/// `source` and `template` are the clouds the registration ran on. Normals
/// for the normal error are estimated from `normal_k` neighbors after
/// alignment.
pub fn evaluate_registration(
    source: &PointCloud,
    template: &PointCloud,
    truth: &SimilarityTransform,
    recovered: &SimilarityTransform,
    normal_k: usize,
    use_mse_condition: bool,
) -> Result<Metrics> {
    let aligned = estimate_normals(&apply_transform(recovered, source), normal_k)?;
    let template = estimate_normals(template, normal_k)?;
    let mse = mse_closest_point(&aligned, &template);
    let mse_n = mse_normal(&aligned, &template)?;
    let gt_cos = gt_cosine(&truth.rotation().inverse(), recovered.rotation());
    Ok(Metrics::new(mse, mse_n, gt_cos, use_mse_condition))
}
