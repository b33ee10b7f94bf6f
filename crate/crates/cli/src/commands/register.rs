use std::path::{Path, PathBuf};

use preshape_align::pipeline::Timings;
use preshape_align::{apply_transform, register_full, SimilarityTransform};
use serde::{Deserialize, Serialize};

use super::{with_pool, write_json, SCHEMA_VERSION};
use crate::config::RunConfig;
use crate::error::CliError;
use crate::io::{load_cloud, save_cloud, Format, SaveFormat};

#[derive(Debug, Clone)]
pub struct RegisterOptions {
    pub source: PathBuf,
    pub template: PathBuf,
    pub format: Format,
    pub config: RunConfig,
    /// Where to write the source mapped into the template frame.
    pub aligned: Option<PathBuf>,
    pub aligned_format: SaveFormat,
    pub report: Option<PathBuf>,
}

/// The recovered transform in several equivalent forms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformOut {
    /// Row-major homogeneous matrix with the scale folded in.
    pub matrix: [[f64; 4]; 4],
    pub scale: f64,
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

impl From<&SimilarityTransform> for TransformOut {
    fn from(t: &SimilarityTransform) -> Self {
        let h = t.to_homogeneous();
        let r = t.rotation().matrix();
        Self {
            matrix: std::array::from_fn(|i| std::array::from_fn(|j| h[(i, j)])),
            scale: t.scale(),
            rotation: std::array::from_fn(|i| std::array::from_fn(|j| r[(i, j)])),
            translation: [t.translation().x, t.translation().y, t.translation().z],
        }
    }
}

/// Deterministic outcome of a registration; everything except timings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegisterResult {
    pub transform: TransformOut,
    pub best_measure: f64,
    pub final_measure: f64,
    pub rotation_index: usize,
    pub translation_index: usize,
    pub evaluations: usize,
    pub valid_evaluations: usize,
    pub source_points: usize,
    pub template_points: usize,
    pub source_culled: usize,
    pub template_culled: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegisterReport {
    pub schema_version: u32,
    pub source: String,
    pub template: String,
    pub result: RegisterResult,
    pub timings: Timings,
    pub config: RunConfig,
}

pub fn run(opts: &RegisterOptions) -> Result<RegisterReport, CliError> {
    opts.config.validate()?;
    let source = load_cloud(&opts.source, opts.format)?;
    let template = load_cloud(&opts.template, opts.format)?;
    let reg_cfg = opts.config.registration();
    let registration = with_pool(opts.config.worker_count, || register_full(&source, &template, &reg_cfg))?
        .map_err(CliError::Registration)?;
    let r = &registration.report;
    let report = RegisterReport {
        schema_version: SCHEMA_VERSION,
        source: display(&opts.source),
        template: display(&opts.template),
        result: RegisterResult {
            transform: TransformOut::from(&r.transform),
            best_measure: r.best_measure,
            final_measure: r.final_measure,
            rotation_index: r.rotation_index,
            translation_index: r.translation_index,
            evaluations: r.evaluations,
            valid_evaluations: r.valid_evaluations,
            source_points: r.source_points,
            template_points: r.template_points,
            source_culled: r.source_culled,
            template_culled: r.template_culled,
        },
        timings: r.timings,
        config: opts.config.clone(),
    };
    if let Some(path) = &opts.aligned {
        save_cloud(path, &apply_transform(&r.transform, &source), opts.aligned_format)?;
    }
    if let Some(path) = &opts.report {
        write_json(path, &report)?;
    }
    Ok(report)
}

fn display(path: &Path) -> String {
    path.display().to_string()
}
