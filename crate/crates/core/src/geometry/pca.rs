use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use super::{centroid, Matrix3, Point3, Vector3};
use crate::error::{Error, Result};

/// Principal axes of a point set.
///
/// `axes[0]` carries the largest eigenvalue. Each axis is signed so that its
/// dot product with `(1, 1, 1)` is non-negative; an exact zero falls back to
/// the first non-zero component being positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PcaFrame {
    pub mean: Point3,
    pub axes: [Vector3; 3],
    pub eigenvalues: [f64; 3],
}

impl PcaFrame {
    pub fn u(&self) -> &Vector3 {
        &self.axes[0]
    }

    pub fn v(&self) -> &Vector3 {
        &self.axes[1]
    }

    pub fn w(&self) -> &Vector3 {
        &self.axes[2]
    }
}

pub(crate) fn covariance(points: &[Point3], mean: &Point3) -> Matrix3 {
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - mean;
        cov += d * d.transpose();
    }
    cov / points.len() as f64
}

fn canonical_sign(v: Vector3) -> Vector3 {
    let s = v.x + v.y + v.z;
    let flip = if s != 0.0 {
        s < 0.0
    } else {
        v.iter().find(|c| **c != 0.0).is_some_and(|c| *c < 0.0)
    };
    if flip {
        -v
    } else {
        v
    }
}

/// Eigen-decomposition of a symmetric 3×3 matrix, eigenvalues descending.
pub(crate) fn sorted_eigen(m: Matrix3) -> ([f64; 3], [Vector3; 3]) {
    let eig = SymmetricEigen::new(m);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals = order.map(|i| eig.eigenvalues[i]);
    let vecs = order.map(|i| eig.eigenvectors.column(i).into_owned());
    (vals, vecs)
}

/// Principal component frame of `points`.
pub fn pca(points: &[Point3]) -> Result<PcaFrame> {
    if points.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    let mean = centroid(points);
    let (vals, vecs) = sorted_eigen(covariance(points, &mean));
    Ok(PcaFrame {
        mean,
        axes: vecs.map(canonical_sign),
        eigenvalues: vals.map(|l| l.max(0.0)),
    })
}
