//! Foundational geometric types and kernels.
//!
//! Everything here is immutable after construction, so clouds, transforms and
//! spatial indices can be shared freely between search workers.

mod kdtree;
mod normals;
pub(crate) mod pca;

pub use kdtree::{knn, KdTree};
pub use normals::{estimate_normals, orient_normals};
pub use pca::{pca, PcaFrame};

use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point3 = nalgebra::Point3<f64>;
pub type Vector3 = nalgebra::Vector3<f64>;
pub type Matrix3 = nalgebra::Matrix3<f64>;

/// Tolerance used to accept a matrix as a member of SO(3).
pub const ROTATION_TOLERANCE: f64 = 1e-9;

/// A proper rotation, checked on construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Matrix3", into = "Matrix3")]
pub struct RotationMatrix(Matrix3);

impl RotationMatrix {
    pub fn new(m: Matrix3) -> Result<Self> {
        let err = (m.transpose() * m - Matrix3::identity()).abs().max();
        let det = m.determinant();
        if !err.is_finite() || err > ROTATION_TOLERANCE || (det - 1.0).abs() > ROTATION_TOLERANCE {
            return Err(Error::NotARotation {
                orthonormality: err,
                det,
            });
        }
        Ok(Self(m))
    }

    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    pub fn about_x(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self(Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c))
    }

    pub fn about_y(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self(Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c))
    }

    pub fn about_z(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self(Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0))
    }

    /// `R_z(z) * R_y(y) * R_x(x)`.
    pub fn from_euler_zyx(x: f64, y: f64, z: f64) -> Self {
        Self::about_z(z) * Self::about_y(y) * Self::about_x(x)
    }

    /// Rotation by `angle` radians about `axis` (need not be unit length).
    pub fn from_axis_angle(axis: &Vector3, angle: f64) -> Self {
        let axis = nalgebra::Unit::new_normalize(*axis);
        Self(*nalgebra::Rotation3::from_axis_angle(&axis, angle).matrix())
    }

    pub fn matrix(&self) -> &Matrix3 {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn inverse(&self) -> Self {
        self.transpose()
    }

    /// Geodesic angle of this rotation, in radians within `[0, π]`.
    pub fn angle(&self) -> f64 {
        ((self.0.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
    }

    /// Angle of the relative rotation `selfᵀ · other`.
    pub fn angle_to(&self, other: &RotationMatrix) -> f64 {
        (self.transpose() * *other).angle()
    }
}

impl std::ops::Mul for RotationMatrix {
    type Output = RotationMatrix;
    fn mul(self, rhs: RotationMatrix) -> RotationMatrix {
        RotationMatrix(self.0 * rhs.0)
    }
}

impl std::ops::Mul<Vector3> for &RotationMatrix {
    type Output = Vector3;
    fn mul(self, rhs: Vector3) -> Vector3 {
        self.0 * rhs
    }
}

impl TryFrom<Matrix3> for RotationMatrix {
    type Error = Error;
    fn try_from(m: Matrix3) -> Result<Self> {
        Self::new(m)
    }
}

impl From<RotationMatrix> for Matrix3 {
    fn from(r: RotationMatrix) -> Matrix3 {
        r.0
    }
}

/// `p ↦ scale · R · p + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityTransform {
    scale: f64,
    rotation: RotationMatrix,
    translation: Vector3,
}

impl SimilarityTransform {
    pub fn new(scale: f64, rotation: RotationMatrix, translation: Vector3) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidScale(scale));
        }
        Ok(Self {
            scale,
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: RotationMatrix::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn rotation(&self) -> &RotationMatrix {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3 {
        &self.translation
    }

    pub fn apply_point(&self, p: &Point3) -> Point3 {
        Point3::from(self.scale * (self.rotation.0 * p.coords) + self.translation)
    }

    pub fn apply_vector(&self, v: &Vector3) -> Vector3 {
        self.rotation.0 * v
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        let inv_scale = 1.0 / self.scale;
        Self {
            scale: inv_scale,
            rotation: rt,
            translation: -(inv_scale * (rt.0 * self.translation)),
        }
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &SimilarityTransform) -> Self {
        Self {
            scale: self.scale * other.scale,
            rotation: self.rotation * other.rotation,
            translation: self.scale * (self.rotation.0 * other.translation) + self.translation,
        }
    }

    /// Homogeneous 4×4 matrix with the scale folded into the linear block.
    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&(self.rotation.0 * self.scale));
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }
}

/// An unordered set of 3D points with optional unit normals.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3>,
    normals: Option<Vec<Vector3>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyPointSet);
        }
        if let Some(i) = points.iter().position(|p| !p.coords.iter().all(|c| c.is_finite())) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self {
            points,
            normals: None,
        })
    }

    /// Builds a cloud with normals; normals are re-normalized to unit length.
    pub fn with_normals(points: Vec<Point3>, normals: Vec<Vector3>) -> Result<Self> {
        let mut cloud = Self::new(points)?;
        cloud.set_normals(normals)?;
        Ok(cloud)
    }

    pub fn set_normals(&mut self, mut normals: Vec<Vector3>) -> Result<()> {
        if normals.len() != self.points.len() {
            return Err(Error::NormalsMismatch {
                points: self.points.len(),
                normals: normals.len(),
            });
        }
        for (i, n) in normals.iter_mut().enumerate() {
            let len = n.norm();
            if !len.is_finite() {
                return Err(Error::NonFinite(i));
            }
            if len == 0.0 {
                return Err(Error::ZeroNormal(i));
            }
            *n /= len;
        }
        self.normals = Some(normals);
        Ok(())
    }

    pub fn without_normals(mut self) -> Self {
        self.normals = None;
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn normals(&self) -> Option<&[Vector3]> {
        self.normals.as_deref()
    }

    /// New cloud holding the listed indices, in the given order.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|ns| indices.iter().map(|&i| ns[i]).collect()),
        }
    }

    pub fn centroid(&self) -> Point3 {
        centroid(&self.points)
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn bounding_box(&self) -> (Point3, Point3) {
        let mut lo = self.points[0];
        let mut hi = self.points[0];
        for p in &self.points[1..] {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        (lo, hi)
    }

    pub fn bbox_diagonal(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        (hi - lo).norm()
    }
}

pub(crate) fn centroid(points: &[Point3]) -> Point3 {
    let sum = points
        .iter()
        .fold(Vector3::zeros(), |acc, p| acc + p.coords);
    Point3::from(sum / points.len() as f64)
}

/// Maps every point (and normal) of `cloud` through `transform`.
pub fn apply_transform(transform: &SimilarityTransform, cloud: &PointCloud) -> PointCloud {
    PointCloud {
        points: cloud.points.iter().map(|p| transform.apply_point(p)).collect(),
        normals: cloud.normals.as_ref().map(|ns| {
            ns.iter()
                .map(|n| transform.apply_vector(n).normalize())
                .collect()
        }),
    }
}
