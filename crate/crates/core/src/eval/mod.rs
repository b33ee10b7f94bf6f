//! Evaluation metrics, seeded perturbations and procedural test shapes.

pub mod metrics;
pub mod perturb;
pub mod shapes;

pub use metrics::{evaluate_registration, gt_cosine, mse_closest_point, mse_normal, registration_recall, Metrics};
pub use perturb::{
    add_noise, band_decimate, make_defect, mean_knn_distance, perturb, random_similarity,
    BandAxis, BandSpec, NoiseKind, NoiseSpec, PerturbSpec, PerturbationRecord, SimilaritySpec,
};
