use std::path::PathBuf;

use preshape_align::eval::shapes::{asymmetric_shape_sampled, symmetric_contour_shape_sampled};
use preshape_align::eval::PerturbSpec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::perturb::{write_item, ItemPaths};
use crate::error::CliError;
use crate::io::SaveFormat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ShapeKind {
    /// Composite of boxes, an ellipsoid and a cylinder with no symmetry.
    Asymmetric,
    /// Spheroid outline with internal fins that fix the orientation.
    Symmetric,
}

#[derive(Debug, Clone)]
pub struct SynthOptions {
    pub out_dir: PathBuf,
    pub count: usize,
    pub shape: ShapeKind,
    pub points: usize,
    /// Sample the perturbed copy independently of the template.
    pub independent_sampling: bool,
    pub spec: PerturbSpec,
    /// Upper end of a per-item defect fraction drawn from `[spec.defect, defect_max]`.
    pub defect_max: Option<f64>,
    pub seed: u64,
    pub save_format: SaveFormat,
}

/// Seeds of item `index`: shape, surface sample and perturbation.
pub fn item_seeds(seed: u64, index: usize) -> (u64, u64, u64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    (rng.random(), rng.random(), rng.random(), rng.random())
}

/// Writes `count` corpus items named `item_0000`, `item_0001`, ...
pub fn run(opts: &SynthOptions) -> Result<Vec<ItemPaths>, CliError> {
    if opts.count == 0 {
        return Err(CliError::Usage("--count must be positive".into()));
    }
    if let Some(hi) = opts.defect_max {
        let lo = opts.spec.defect.ok_or_else(|| CliError::Usage("--defect-max needs --defect".into()))?;
        if !(lo..1.0).contains(&hi) {
            return Err(CliError::Usage("--defect-max must lie in [--defect, 1)".into()));
        }
    }
    (0..opts.count)
        .into_par_iter()
        .map(|i| {
            let (shape_seed, sample_seed, perturb_seed, u) = item_seeds(opts.seed, i);
            let make = |sample: u64| match opts.shape {
                ShapeKind::Asymmetric => asymmetric_shape_sampled(shape_seed, sample, opts.points),
                ShapeKind::Symmetric => symmetric_contour_shape_sampled(shape_seed, sample, opts.points),
            };
            let template = make(shape_seed);
            let source = if opts.independent_sampling { make(sample_seed) } else { template.clone() };
            let mut spec = opts.spec;
            if let (Some(lo), Some(hi)) = (spec.defect, opts.defect_max) {
                spec.defect = Some(lo + u * (hi - lo));
            }
            let paths = ItemPaths::new(&opts.out_dir, &format!("item_{i:04}"), opts.save_format);
            write_item(&template, &source, &spec, perturb_seed, &paths, opts.save_format)?;
            Ok(paths)
        })
        .collect()
}
