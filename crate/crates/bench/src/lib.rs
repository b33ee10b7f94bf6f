//! Shared fixtures for the benchmarks.

use preshape_align::eval::perturb::{random_similarity, SimilaritySpec};
use preshape_align::eval::shapes::asymmetric_shape;
use preshape_align::pipeline::{prepare, Prepared};
use preshape_align::{apply_transform, PointCloud, RegistrationConfig};

/// A procedural shape and a randomly moved copy of it.
pub fn pair(seed: u64, points: usize) -> (PointCloud, PointCloud) {
    let template = asymmetric_shape(seed, points);
    let truth = random_similarity(seed, &SimilaritySpec::default(), template.bbox_diagonal()).expect("valid spec");
    (apply_transform(&truth, &template), template)
}

/// [`pair`] after culling, resampling and profiling.
pub fn prepared_pair(seed: u64, points: usize, cfg: &RegistrationConfig) -> (Prepared, Prepared) {
    let (source, template) = pair(seed, points);
    (prepare(&source, cfg).expect("source prepares"), prepare(&template, cfg).expect("template prepares"))
}
