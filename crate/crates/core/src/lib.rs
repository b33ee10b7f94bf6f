//! Similarity-invariant point cloud registration on the pre-shape space.
//!
//! Clouds are culled, resampled and mapped to pre-shapes (centered, unit
//! Frobenius norm). Pose similarity is an arc-cosine shape distance computed
//! over per-cell representative samples of a spherical partition, and the
//! full similarity transform is recovered by an exhaustive, data-parallel
//! search over a grid of rotations and center offsets.

pub mod error;
pub mod eval;
pub mod geometry;
pub mod measurement;
pub mod partition;
pub mod pipeline;
pub mod preprocess;
pub mod search;

#[cfg(test)]
mod oracle;

pub use error::{Error, Result};
pub use geometry::{
    apply_transform, estimate_normals, knn, pca, KdTree, Matrix3, PcaFrame, Point3, PointCloud,
    RotationMatrix, SimilarityTransform, Vector3,
};
pub use measurement::{combined_measure, measure_pair, solve_local_rotation, LocalAlignment};
pub use partition::{FeatureConfig, PartitionLayout, PartitionProfile};
pub use pipeline::{register, register_full, Registration, RegistrationConfig, RegistrationReport};
pub use preprocess::{cull_outliers, resample, to_preshape, PreShape, PreprocessConfig};
pub use search::{CandidateGrid, ProfileRebuild, SearchConfig, SearchResult};
