//! Spherical partition of the pre-shape around its center, and the two
//! representative sample sets drawn from it: the contour (farthest point per
//! cell) and the feature points (largest local plane-fit residual per cell).
//!
//! Cell ids are `elevation_bin * azimuth_bins + azimuth_bin`. Two clouds
//! partitioned with the same layout correspond cell by cell, which is what
//! lets unordered clouds be compared row against row.

use std::f64::consts::{PI, TAU};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::pca::{covariance, sorted_eigen};
use crate::geometry::{centroid, KdTree, Point3, PointCloud, Vector3};
use crate::preprocess::PreShape;

/// Fewest shared cells accepted as a correspondence.
pub const MIN_MATCHED_CELLS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionLayout {
    pub azimuth_bins: usize,
    pub elevation_bins: usize,
}

impl Default for PartitionLayout {
    fn default() -> Self {
        Self {
            azimuth_bins: 12,
            elevation_bins: 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cell {
    pub azimuth: usize,
    pub elevation: usize,
}

impl PartitionLayout {
    pub fn new(azimuth_bins: usize, elevation_bins: usize) -> Result<Self> {
        if azimuth_bins == 0 || elevation_bins == 0 {
            return Err(Error::InvalidParameter("partition bins must be positive".into()));
        }
        Ok(Self {
            azimuth_bins,
            elevation_bins,
        })
    }

    pub fn cell_count(&self) -> usize {
        self.azimuth_bins * self.elevation_bins
    }

    pub fn id(&self, cell: Cell) -> usize {
        cell.elevation * self.azimuth_bins + cell.azimuth
    }

    pub fn cell(&self, id: usize) -> Cell {
        Cell {
            azimuth: id % self.azimuth_bins,
            elevation: id / self.azimuth_bins,
        }
    }

    /// Spherical cell of a direction from the origin. Azimuth is measured in
    /// `[0, 2π)` from +x toward +y, elevation in `[0, π]` from +z; the zero
    /// vector lands in cell `(0, 0)`.
    pub fn cell_of(&self, v: &Vector3) -> Cell {
        let r = v.norm();
        if r == 0.0 {
            return Cell {
                azimuth: 0,
                elevation: 0,
            };
        }
        Cell {
            azimuth: self.azimuth_bin(v.x, v.y),
            elevation: self.elevation_bin(v.z / r),
        }
    }

    pub fn cell_id_of(&self, v: &Vector3) -> usize {
        self.id(self.cell_of(v))
    }

    pub(crate) fn azimuth_bin(&self, x: f64, y: f64) -> usize {
        if x == 0.0 && y == 0.0 {
            return 0;
        }
        let mut az = y.atan2(x);
        if az < 0.0 {
            az += TAU;
        }
        let bin = (az / (TAU / self.azimuth_bins as f64)) as usize;
        bin.min(self.azimuth_bins - 1)
    }

    pub(crate) fn elevation_bin(&self, cos_el: f64) -> usize {
        let el = cos_el.clamp(-1.0, 1.0).acos();
        let bin = (el / (PI / self.elevation_bins as f64)) as usize;
        bin.min(self.elevation_bins - 1)
    }
}

/// One representative sample: the pre-shape row it came from and its
/// coordinates in the pose it was selected in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Representative {
    pub row: usize,
    pub point: Vector3,
}

/// At most one representative per cell, indexed by cell id.
#[derive(Debug, Clone, PartialEq)]
pub struct CellMap {
    cells: Vec<Option<Representative>>,
}

impl CellMap {
    pub fn empty(layout: &PartitionLayout) -> Self {
        Self {
            cells: vec![None; layout.cell_count()],
        }
    }

    pub fn get(&self, cell_id: usize) -> Option<&Representative> {
        self.cells.get(cell_id).and_then(|c| c.as_ref())
    }

    pub fn insert(&mut self, cell_id: usize, rep: Representative) {
        self.cells[cell_id] = Some(rep);
    }

    /// Occupied cells, ascending by id.
    pub fn iter(&self) -> impl Iterator<Item = (usize, &Representative)> {
        self.cells
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.as_ref().map(|r| (i, r)))
    }

    /// Number of occupied cells.
    pub fn len(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn rows(&self) -> Vec<usize> {
        self.iter().map(|(_, r)| r.row).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub pca_k: usize,
    pub feature_fraction: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            pca_k: 12,
            feature_fraction: 0.15,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.feature_fraction > 0.0 && self.feature_fraction <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "feature_fraction must lie in (0, 1], got {}",
                self.feature_fraction
            )));
        }
        if self.pca_k == 0 {
            return Err(Error::InvalidParameter("pca_k must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionProfile {
    pub contour: CellMap,
    pub features: CellMap,
    pub layout: PartitionLayout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleSet {
    Contour,
    Features,
}

impl PartitionProfile {
    pub fn samples(&self, which: SampleSet) -> &CellMap {
        match which {
            SampleSet::Contour => &self.contour,
            SampleSet::Features => &self.features,
        }
    }
}

/// Row indices falling in each cell, indexed by cell id.
pub fn assign_cells(shape: &PreShape, layout: &PartitionLayout) -> Vec<Vec<usize>> {
    let mut cells = vec![Vec::new(); layout.cell_count()];
    for (i, r) in shape.rows().iter().enumerate() {
        cells[layout.cell_id_of(r)].push(i);
    }
    cells
}

/// Per cell, the row farthest from the center (lowest row on ties).
pub fn extract_contour(shape: &PreShape, layout: &PartitionLayout) -> CellMap {
    let mut best = vec![f64::NEG_INFINITY; layout.cell_count()];
    let mut map = CellMap::empty(layout);
    for (row, r) in shape.rows().iter().enumerate() {
        let id = layout.cell_id_of(r);
        let norm = r.norm_squared();
        if norm > best[id] {
            best[id] = norm;
            map.insert(id, Representative { row, point: *r });
        }
    }
    map
}

fn plane_residual(p: &Point3, neighbors: &[Point3]) -> f64 {
    let mean = centroid(neighbors);
    let cov = covariance(neighbors, &mean);
    if cov.trace() == 0.0 {
        return 0.0;
    }
    let (_, vecs) = sorted_eigen(cov);
    (p - mean).dot(&vecs[2]).abs()
}

/// Distance from a point to the least-squares plane of its `k` nearest
/// neighbors (the point itself excluded).
pub fn d_pca(cloud: &PointCloud, index: usize, k: usize) -> Result<f64> {
    let tree = KdTree::from_cloud(cloud);
    d_pca_with(&tree, cloud.points(), index, k)
}

fn d_pca_with(tree: &KdTree, pts: &[Point3], index: usize, k: usize) -> Result<f64> {
    if pts.len() <= k {
        return Err(Error::InsufficientPoints {
            requested: k,
            available: pts.len().saturating_sub(1),
        });
    }
    let nbrs: Vec<Point3> = tree
        .knn(&pts[index], k, Some(index))?
        .into_iter()
        .map(|j| pts[j])
        .collect();
    Ok(plane_residual(&pts[index], &nbrs))
}

/// Plane-fit residual of every cloud point.
pub fn d_pca_all(cloud: &PointCloud, k: usize) -> Result<Vec<f64>> {
    let tree = KdTree::from_cloud(cloud);
    let pts = cloud.points();
    (0..pts.len())
        .into_par_iter()
        .map(|i| d_pca_with(&tree, pts, i, k))
        .collect()
}

/// Plane-fit residuals of a pre-shape's rows and the rows selected as
/// feature candidates.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureScores {
    /// Residual per pre-shape row.
    pub scores: Vec<f64>,
    pub threshold: f64,
    /// Rows with a residual strictly above `threshold`, ascending.
    pub candidates: Vec<usize>,
}

/// Scores every row of `shape` by the residual of its cloud point and keeps
/// the top `feature_fraction` as candidates.
pub fn feature_scores(cloud: &PointCloud, shape: &PreShape, cfg: &FeatureConfig) -> Result<FeatureScores> {
    cfg.validate()?;
    let per_point = d_pca_all(cloud, cfg.pca_k)?;
    let scores: Vec<f64> = shape
        .source_indices()
        .iter()
        .map(|&i| {
            per_point.get(i).copied().ok_or_else(|| {
                Error::InvalidParameter(format!("pre-shape row refers to missing cloud index {i}"))
            })
        })
        .collect::<Result<_>>()?;
    let n = scores.len();
    let keep = ((cfg.feature_fraction * n as f64).round() as usize).min(n);
    let threshold = if keep == n {
        f64::NEG_INFINITY
    } else {
        let mut sorted = scores.clone();
        sorted.sort_by(f64::total_cmp);
        sorted[n - keep - 1]
    };
    let candidates = (0..n).filter(|&i| scores[i] > threshold).collect();
    Ok(FeatureScores {
        scores,
        threshold,
        candidates,
    })
}

/// Per cell, the candidate with the largest residual (lowest row on ties).
pub fn select_features(shape: &PreShape, scores: &FeatureScores, layout: &PartitionLayout) -> CellMap {
    let rows = shape.rows();
    let mut best = vec![f64::NEG_INFINITY; layout.cell_count()];
    let mut map = CellMap::empty(layout);
    for &row in &scores.candidates {
        let id = layout.cell_id_of(&rows[row]);
        let s = scores.scores[row];
        if map.get(id).is_none() || s > best[id] {
            best[id] = s;
            map.insert(id, Representative { row, point: rows[row] });
        }
    }
    map
}

pub fn extract_features(
    cloud: &PointCloud,
    shape: &PreShape,
    layout: &PartitionLayout,
    cfg: &FeatureConfig,
) -> Result<CellMap> {
    let scores = feature_scores(cloud, shape, cfg)?;
    Ok(select_features(shape, &scores, layout))
}

pub fn build_profile(
    cloud: &PointCloud,
    shape: &PreShape,
    layout: &PartitionLayout,
    cfg: &FeatureConfig,
) -> Result<PartitionProfile> {
    Ok(PartitionProfile {
        contour: extract_contour(shape, layout),
        features: extract_features(cloud, shape, layout, cfg)?,
        layout: *layout,
    })
}

/// Sample points of cells occupied in both profiles, ascending by cell id.
pub fn matched_pairs(
    a: &PartitionProfile,
    b: &PartitionProfile,
    which: SampleSet,
) -> Result<(Vec<Vector3>, Vec<Vector3>)> {
    if a.layout != b.layout {
        return Err(Error::InvalidParameter("profiles use different layouts".into()));
    }
    let (ma, mb) = (a.samples(which), b.samples(which));
    let (pa, pb): (Vec<Vector3>, Vec<Vector3>) = ma
        .iter()
        .filter_map(|(id, ra)| mb.get(id).map(|rb| (ra.point, rb.point)))
        .unzip();
    if pa.len() < MIN_MATCHED_CELLS {
        return Err(Error::InsufficientCorrespondence {
            matched: pa.len(),
            required: MIN_MATCHED_CELLS,
        });
    }
    Ok((pa, pb))
}
