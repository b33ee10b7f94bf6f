pub mod bench;
pub mod perturb;
pub mod register;
pub mod synth;

use std::path::Path;

use preshape_align::eval::{BandAxis, BandSpec, NoiseKind, PerturbSpec, SimilaritySpec};
use serde::Serialize;

use crate::error::CliError;

/// Version of every JSON document the commands write.
pub const SCHEMA_VERSION: u32 = 1;

/// Runs `f` on a dedicated pool of `workers` threads.
pub fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(f))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::write(path, e))?;
    }
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::write(path, e))?;
    std::fs::write(path, text + "\n").map_err(|e| CliError::write(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum NoiseArg {
    Gaussian,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum AxisArg {
    X,
    Y,
    Z,
    Longest,
}

/// Perturbation flags shared by `perturb` and `synth`.
#[derive(Debug, Clone, Default, PartialEq, clap::Args)]
pub struct PerturbFlags {
    /// Random rotation, each Euler angle uniform in [-pi, pi].
    #[arg(long)]
    pub rotate: bool,
    /// Random uniform scale in [0.5, 2].
    #[arg(long)]
    pub scale: bool,
    /// Random translation up to half the bounding box diagonal per axis.
    #[arg(long)]
    pub translate: bool,
    /// Noise along the normals.
    #[arg(long, value_enum)]
    pub noise: Option<NoiseArg>,
    /// Noise ratio relative to the mean neighbor spacing.
    #[arg(long = "r")]
    pub noise_ratio: Option<f64>,
    /// Fraction of points removed around a random seed point.
    #[arg(long)]
    pub defect: Option<f64>,
    /// Keep every other of 2 x BANDS slabs.
    #[arg(long)]
    pub bands: Option<usize>,
    #[arg(long, value_enum)]
    pub band_axis: Option<AxisArg>,
}

impl PerturbFlags {
    pub fn to_spec(&self) -> Result<PerturbSpec, CliError> {
        let usage = |msg: &str| Err(CliError::Usage(msg.to_string()));
        let similarity = (self.rotate || self.scale || self.translate).then(|| {
            let full = SimilaritySpec::default();
            SimilaritySpec {
                rotation_range: if self.rotate { full.rotation_range } else { (0.0, 0.0) },
                scale_range: if self.scale { full.scale_range } else { (1.0, 1.0) },
                translation_frac: if self.translate { full.translation_frac } else { 0.0 },
            }
        });
        let noise = match (self.noise, self.noise_ratio) {
            (None, None) => None,
            (Some(_), None) => return usage("--noise needs --r"),
            (None, Some(_)) => return usage("--r needs --noise"),
            (Some(_), Some(r)) if !(r.is_finite() && r >= 0.0) => return usage("--r must be a non-negative number"),
            (Some(kind), Some(r)) => Some((
                match kind {
                    NoiseArg::Gaussian => NoiseKind::Gaussian,
                    NoiseArg::Mean => NoiseKind::Mean,
                },
                r,
            )),
        };
        if let Some(f) = self.defect {
            if !(0.0..1.0).contains(&f) {
                return usage("--defect must lie in [0, 1)");
            }
        }
        let bands = match (self.bands, self.band_axis) {
            (None, Some(_)) => return usage("--band-axis needs --bands"),
            (None, None) => None,
            (Some(b), _) if b < 2 => return usage("--bands must be at least 2"),
            (Some(bands), axis) => Some(BandSpec {
                bands,
                axis: match axis.unwrap_or(AxisArg::Longest) {
                    AxisArg::X => BandAxis::X,
                    AxisArg::Y => BandAxis::Y,
                    AxisArg::Z => BandAxis::Z,
                    AxisArg::Longest => BandAxis::Longest,
                },
            }),
        };
        Ok(PerturbSpec {
            similarity,
            noise,
            defect: self.defect,
            bands,
        })
    }
}
