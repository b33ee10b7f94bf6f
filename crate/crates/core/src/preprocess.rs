//! Cloud normalization ahead of shape-space work: mutual-neighbor outlier
//! culling, farthest-point resampling and the pre-shape map.

use serde::{Deserialize, Serialize};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{centroid, KdTree, Point3, PointCloud, Vector3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub knn_k: usize,
    pub target_count: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            knn_k: 12,
            target_count: 3000,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.knn_k == 0 || self.knn_k >= self.target_count {
            return Err(Error::InvalidParameter(format!(
                "knn_k must satisfy 1 <= knn_k < target_count (got {} and {})",
                self.knn_k, self.target_count
            )));
        }
        Ok(())
    }
}

/// Removes every point that lists a neighbor which does not list it back.
///
/// The neighbors of a point are its `k` nearest, except that a group tied at
/// the `k`-th distance which does not fit in `k` is left out entirely, so no
/// tie is broken arbitrarily. A point counts as listed by `j` when it is no
/// farther from `j` than the `k`-th neighbor distance of `j`.
///
/// Neighborhoods are evaluated once over the input cloud; the rule is not
/// iterated on the survivors. Returns the survivors in input order together
/// with the removed indices.
pub fn cull_outliers(cloud: &PointCloud, k: usize) -> Result<(PointCloud, Vec<usize>)> {
    let n = cloud.len();
    if n <= k || k == 0 {
        return Err(Error::InsufficientPoints {
            requested: k,
            available: n.saturating_sub(1),
        });
    }
    let tree = KdTree::from_cloud(cloud);
    let pts = cloud.points();
    let probe = (k + 1).min(n - 1);
    let neighborhoods: Vec<(Vec<(usize, f64)>, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut nbrs = tree.knn_with_distances(&pts[i], probe, Some(i))?;
            let reach = nbrs[k - 1].1;
            if nbrs.len() > k && nbrs[k].1 == reach {
                nbrs.retain(|&(_, d2)| d2 < reach);
            } else {
                nbrs.truncate(k);
            }
            Ok((nbrs, reach))
        })
        .collect::<Result<_>>()?;
    let outlier: Vec<bool> = (0..n)
        .into_par_iter()
        .map(|i| neighborhoods[i].0.iter().any(|&(j, d2)| d2 > neighborhoods[j].1))
        .collect();
    let (removed, kept): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| outlier[i]);
    if kept.is_empty() {
        return Err(Error::DegenerateCloud);
    }
    Ok((cloud.select(&kept), removed))
}

/// Farthest-point sampling order: indices of the selected points, seeded at
/// the point nearest the centroid. Clouds with at most `m` points are
/// returned whole, in input order.
pub fn resample_indices(cloud: &PointCloud, m: usize) -> Result<Vec<usize>> {
    if m == 0 {
        return Err(Error::InvalidParameter("resample count must be positive".into()));
    }
    let pts = cloud.points();
    let n = pts.len();
    if n <= m {
        return Ok((0..n).collect());
    }
    let c = centroid(pts);
    let seed = argmax_first(pts.iter().map(|p| -(p - c).norm_squared()));
    let mut selected = Vec::with_capacity(m);
    let mut min_dist = vec![f64::INFINITY; n];
    let mut current = seed;
    selected.push(current);
    while selected.len() < m {
        let anchor = pts[current];
        for (d, p) in min_dist.iter_mut().zip(pts) {
            let dd = (p - anchor).norm_squared();
            if dd < *d {
                *d = dd;
            }
        }
        current = argmax_first(min_dist.iter().copied());
        selected.push(current);
    }
    Ok(selected)
}

/// Farthest-point resampling to at most `m` points; output is in selection order.
pub fn resample(cloud: &PointCloud, m: usize) -> Result<PointCloud> {
    let idx = resample_indices(cloud, m)?;
    Ok(cloud.select(&idx))
}

fn argmax_first(values: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, v) in values.enumerate() {
        if v > best_val {
            best = i;
            best_val = v;
        }
    }
    best
}

/// A cloud mapped onto the pre-shape space: centered rows with unit
/// Frobenius norm, plus what is needed to map back to model units.
#[derive(Debug, Clone, PartialEq)]
pub struct PreShape {
    rows: Vec<Vector3>,
    centroid: Point3,
    scale: f64,
    source_indices: Vec<usize>,
}

impl PreShape {
    pub fn rows(&self) -> &[Vector3] {
        &self.rows
    }

    pub fn centroid(&self) -> &Point3 {
        &self.centroid
    }

    /// Frobenius size `s(P)` of the centered cloud, in model units.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Cloud index of each row.
    pub fn source_indices(&self) -> &[usize] {
        &self.source_indices
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Model-space position of a pre-shape coordinate.
    pub fn denormalize(&self, v: &Vector3) -> Point3 {
        self.centroid + v * self.scale
    }
}

/// Centers `cloud` and divides by its Frobenius size.
pub fn to_preshape(cloud: &PointCloud) -> Result<PreShape> {
    let pts = cloud.points();
    if pts.len() < 2 {
        return Err(Error::InsufficientPoints {
            requested: 2,
            available: pts.len(),
        });
    }
    let c = centroid(pts);
    let centered: Vec<Vector3> = pts.iter().map(|p| p - c).collect();
    let scale = centered.iter().map(|v| v.norm_squared()).sum::<f64>().sqrt();
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::ZeroShapeScale);
    }
    Ok(PreShape {
        rows: centered.into_iter().map(|v| v / scale).collect(),
        centroid: c,
        scale,
        source_indices: (0..pts.len()).collect(),
    })
}
