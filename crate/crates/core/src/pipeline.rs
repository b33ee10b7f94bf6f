//! End-to-end registration of a source cloud onto a template.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, SimilarityTransform};
use crate::partition::{build_profile, feature_scores, FeatureConfig, FeatureScores, PartitionLayout, PartitionProfile};
use crate::preprocess::{cull_outliers, resample, to_preshape, PreShape, PreprocessConfig};
use crate::search::{compose_final_transform, global_search, refine, CandidateGrid, RefineConfig, ProfileRebuild, SearchConfig, SearchResult, SearchSource};

/// Every tunable of a registration run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegistrationConfig {
    pub target_count: usize,
    pub knn_k: usize,
    pub rotation_steps: usize,
    pub translation_steps: usize,
    pub azimuth_bins: usize,
    pub elevation_bins: usize,
    pub feature_fraction: f64,
    pub pca_k: usize,
    pub use_features: bool,
    pub profile_rebuild: ProfileRebuild,
    pub align_sample_centroids: bool,
    /// Local refinement after the grid search; `None` keeps the grid pose.
    pub refine: Option<RefineConfig>,
    /// Search threads; `None` uses the global pool.
    pub workers: Option<usize>,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        let search = SearchConfig::default();
        let pre = PreprocessConfig::default();
        let layout = PartitionLayout::default();
        let feat = FeatureConfig::default();
        Self {
            target_count: pre.target_count,
            knn_k: pre.knn_k,
            rotation_steps: search.rotation_steps,
            translation_steps: search.translation_steps,
            azimuth_bins: layout.azimuth_bins,
            elevation_bins: layout.elevation_bins,
            feature_fraction: feat.feature_fraction,
            pca_k: feat.pca_k,
            use_features: search.use_features,
            profile_rebuild: search.profile_rebuild,
            align_sample_centroids: false,
            refine: Some(RefineConfig::default()),
            workers: None,
        }
    }
}

impl RegistrationConfig {
    pub fn preprocess(&self) -> PreprocessConfig {
        PreprocessConfig {
            knn_k: self.knn_k,
            target_count: self.target_count,
        }
    }

    pub fn layout(&self) -> Result<PartitionLayout> {
        PartitionLayout::new(self.azimuth_bins, self.elevation_bins)
    }

    pub fn features(&self) -> FeatureConfig {
        FeatureConfig {
            pca_k: self.pca_k,
            feature_fraction: self.feature_fraction,
        }
    }

    pub fn search(&self) -> SearchConfig {
        SearchConfig {
            rotation_steps: self.rotation_steps,
            translation_steps: self.translation_steps,
            use_features: self.use_features,
            profile_rebuild: self.profile_rebuild,
            shortlist: self.refine.map_or(1, |r| r.candidates.max(1)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.preprocess().validate()?;
        self.layout()?;
        self.features().validate()?;
        if self.rotation_steps == 0 {
            return Err(Error::InvalidParameter("rotation_steps must be positive".into()));
        }
        if self.translation_steps % 2 == 0 {
            return Err(Error::EvenTranslationSteps(self.translation_steps));
        }
        if self.workers == Some(0) {
            return Err(Error::InvalidParameter("workers must be positive".into()));
        }
        Ok(())
    }
}

/// A cloud after culling and resampling, with its pre-shape and profile.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub cloud: PointCloud,
    pub culled: usize,
    pub shape: PreShape,
    pub scores: FeatureScores,
    pub profile: PartitionProfile,
}

pub fn prepare(cloud: &PointCloud, cfg: &RegistrationConfig) -> Result<Prepared> {
    cfg.validate()?;
    let (kept, removed) = cull_outliers(cloud, cfg.knn_k)?;
    let cloud = resample(&kept, cfg.target_count)?;
    let shape = to_preshape(&cloud)?;
    let features = cfg.features();
    let scores = feature_scores(&cloud, &shape, &features)?;
    let profile = build_profile(&cloud, &shape, &cfg.layout()?, &features)?;
    Ok(Prepared {
        cloud,
        culled: removed.len(),
        shape,
        scores,
        profile,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Timings {
    pub preprocess_s: f64,
    pub search_s: f64,
    pub total_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationReport {
    /// Maps the source cloud into the template's model frame.
    pub transform: SimilarityTransform,
    /// Best measure on the candidate grid.
    pub best_measure: f64,
    /// Measure after local refinement (equal to `best_measure` without it).
    pub final_measure: f64,
    pub rotation_index: usize,
    pub translation_index: usize,
    pub evaluations: usize,
    pub valid_evaluations: usize,
    pub source_points: usize,
    pub template_points: usize,
    pub source_culled: usize,
    pub template_culled: usize,
    pub timings: Timings,
    pub config: RegistrationConfig,
}

/// Registers two already prepared clouds.
pub fn register_prepared(
    source: &Prepared,
    template: &Prepared,
    cfg: &RegistrationConfig,
) -> Result<(SimilarityTransform, SearchResult)> {
    let grid = CandidateGrid::for_source(&source.shape, cfg.rotation_steps, cfg.translation_steps)?;
    let src = SearchSource {
        shape: &source.shape,
        scores: &source.scores,
    };
    let search = cfg.search();
    let mut result = with_workers(cfg.workers, || global_search(&template.profile, &src, &grid, &search))?;
    if let Some(r) = &cfg.refine {
        result = with_workers(cfg.workers, || refine(&template.profile, &src, &grid, &result, &search, r));
    }
    let transform = compose_final_transform(&template.shape, &source.shape, &result, cfg.align_sample_centroids)?;
    Ok((transform, result))
}

/// A finished registration together with both prepared clouds.
#[derive(Debug, Clone)]
pub struct Registration {
    pub report: RegistrationReport,
    pub source: Prepared,
    pub template: Prepared,
}

/// Full pipeline: cull, resample, normalize, profile, search and compose.
pub fn register(source: &PointCloud, template: &PointCloud, cfg: &RegistrationConfig) -> Result<RegistrationReport> {
    register_full(source, template, cfg).map(|r| r.report)
}

/// [`register`], also returning the resampled clouds the search ran on.
pub fn register_full(source: &PointCloud, template: &PointCloud, cfg: &RegistrationConfig) -> Result<Registration> {
    let start = Instant::now();
    let (src, tpl) = with_workers(cfg.workers, || rayon::join(|| prepare(source, cfg), || prepare(template, cfg)));
    let (src, tpl) = (src?, tpl?);
    let preprocess_s = start.elapsed().as_secs_f64();
    let search_start = Instant::now();
    let (transform, result) = register_prepared(&src, &tpl, cfg)?;
    let search_s = search_start.elapsed().as_secs_f64();
    let report = RegistrationReport {
        transform,
        best_measure: result.best_measure,
        final_measure: result.final_measure,
        rotation_index: result.best_rotation_index,
        translation_index: result.best_translation_index,
        evaluations: result.evaluations,
        valid_evaluations: result.valid_evaluations,
        source_points: src.cloud.len(),
        template_points: tpl.cloud.len(),
        source_culled: src.culled,
        template_culled: tpl.culled,
        timings: Timings {
            preprocess_s,
            search_s,
            total_s: start.elapsed().as_secs_f64(),
        },
        config: *cfg,
    };
    Ok(Registration {
        report,
        source: src,
        template: tpl,
    })
}

fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match workers {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        },
        None => f(),
    }
}
