//! Seeded perturbations used to build evaluation corpora.
//!
//! Every generator is a pure function of its input, spec and seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    apply_transform, estimate_normals, KdTree, PointCloud, RotationMatrix, SimilarityTransform,
    Vector3,
};

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo < hi {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilaritySpec {
    /// Per-axis Euler angle range, radians.
    pub rotation_range: (f64, f64),
    pub scale_range: (f64, f64),
    /// Per-axis translation bound as a fraction of the bounding box diagonal.
    pub translation_frac: f64,
}

impl Default for SimilaritySpec {
    fn default() -> Self {
        Self {
            rotation_range: (-std::f64::consts::PI, std::f64::consts::PI),
            scale_range: (0.5, 2.0),
            translation_frac: 0.5,
        }
    }
}

/// Random similarity: Euler angles composed z·y·x, uniform scale, and a
/// per-axis translation within `±translation_frac · diagonal`.
pub fn random_similarity(seed: u64, spec: &SimilaritySpec, diagonal: f64) -> Result<SimilarityTransform> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = uniform(&mut rng, spec.rotation_range);
    let y = uniform(&mut rng, spec.rotation_range);
    let z = uniform(&mut rng, spec.rotation_range);
    let scale = uniform(&mut rng, spec.scale_range);
    let bound = spec.translation_frac * diagonal;
    let mut t = Vector3::zeros();
    for c in t.iter_mut() {
        *c = uniform(&mut rng, (-bound, bound));
    }
    SimilarityTransform::new(scale, RotationMatrix::from_euler_zyx(x, y, z), t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Gaussian,
    /// Centered uniform offsets in `[−σ, σ]`.
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub r: f64,
    pub k: usize,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(kind: NoiseKind, r: f64, seed: u64) -> Self {
        Self { kind, r, k: 12, seed }
    }
}

/// Mean distance from each point to its `k` nearest neighbors, averaged over
/// the cloud.
pub fn mean_knn_distance(cloud: &PointCloud, k: usize) -> Result<f64> {
    let tree = KdTree::from_cloud(cloud);
    let mut total = 0.0;
    for (i, p) in cloud.points().iter().enumerate() {
        let nbrs = tree.knn_with_distances(p, k, Some(i))?;
        total += nbrs.iter().map(|(_, d2)| d2.sqrt()).sum::<f64>() / k as f64;
    }
    Ok(total / cloud.len() as f64)
}

/// Moves every point along its normal by an offset of scale `σ = r · l_k`.
/// Normals are estimated when absent.
pub fn add_noise(cloud: &PointCloud, spec: &NoiseSpec) -> Result<PointCloud> {
    if !(spec.r > 0.0) {
        return Err(Error::InvalidParameter(format!("noise range must be positive, got {}", spec.r)));
    }
    let with_normals;
    let cloud = match cloud.normals() {
        Some(_) => cloud,
        None => {
            with_normals = estimate_normals(cloud, spec.k)?;
            &with_normals
        }
    };
    let sigma = spec.r * mean_knn_distance(cloud, spec.k)?;
    let offsets = noise_offsets(spec.kind, sigma, cloud.len(), spec.seed);
    let normals = cloud.normals().unwrap_or_default();
    let points = cloud
        .points()
        .iter()
        .zip(normals)
        .zip(&offsets)
        .map(|((p, n), m)| p + n * *m)
        .collect();
    PointCloud::with_normals(points, normals.to_vec())
}

pub(crate) fn noise_offsets(kind: NoiseKind, sigma: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        NoiseKind::Gaussian => {
            let normal = Normal::new(0.0, sigma).expect("finite sigma");
            (0..n).map(|_| normal.sample(&mut rng)).collect()
        }
        NoiseKind::Mean => (0..n).map(|_| rng.random_range(-sigma..=sigma)).collect(),
    }
}

/// Removes the `⌈fraction · n⌉` points nearest to a random seed point.
pub fn make_defect(cloud: &PointCloud, fraction: f64, seed: u64) -> Result<PointCloud> {
    let removed = defect_indices(cloud, fraction, seed)?;
    let mut keep = vec![true; cloud.len()];
    for i in removed {
        keep[i] = false;
    }
    let survivors: Vec<usize> = (0..cloud.len()).filter(|&i| keep[i]).collect();
    Ok(cloud.select(&survivors))
}

/// Indices removed by [`make_defect`], nearest first.
pub fn defect_indices(cloud: &PointCloud, fraction: f64, seed: u64) -> Result<Vec<usize>> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::InvalidParameter(format!("defect fraction must lie in [0, 1), got {fraction}")));
    }
    let n = cloud.len();
    let count = (fraction * n as f64).ceil() as usize;
    if count == 0 {
        return Ok(Vec::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let center = cloud.points()[rng.random_range(0..n)];
    let tree = KdTree::from_cloud(cloud);
    Ok(tree.knn(&center, count, None)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandAxis {
    X,
    Y,
    Z,
    Longest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BandSpec {
    pub bands: usize,
    pub axis: BandAxis,
}

/// Splits the bounding box extent along `axis` into `2 · bands` equal slabs
/// and keeps the points of even-indexed slabs.
pub fn band_decimate(cloud: &PointCloud, spec: &BandSpec) -> Result<PointCloud> {
    if spec.bands < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 bands, got {}", spec.bands)));
    }
    let (lo, hi) = cloud.bounding_box();
    let extent = hi - lo;
    let axis = match spec.axis {
        BandAxis::X => 0,
        BandAxis::Y => 1,
        BandAxis::Z => 2,
        BandAxis::Longest => extent.imax(),
    };
    let slabs = 2 * spec.bands;
    let width = extent[axis] / slabs as f64;
    let keep: Vec<usize> = (0..cloud.len())
        .filter(|&i| {
            if width <= 0.0 {
                return true;
            }
            let slab = (((cloud.points()[i][axis] - lo[axis]) / width) as usize).min(slabs - 1);
            slab % 2 == 0
        })
        .collect();
    Ok(cloud.select(&keep))
}

/// A combination of perturbations applied in the fixed order transform,
/// noise, defect, decimation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PerturbSpec {
    pub similarity: Option<SimilaritySpec>,
    pub noise: Option<(NoiseKind, f64)>,
    pub defect: Option<f64>,
    pub bands: Option<BandSpec>,
}

/// Ground truth and settings of one perturbed cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationRecord {
    /// Applied transform `T_g` (identity when no similarity was requested).
    pub transform: SimilarityTransform,
    pub similarity: Option<SimilaritySpec>,
    pub noise: Option<NoiseSpec>,
    pub defect_fraction: Option<f64>,
    pub bands: Option<BandSpec>,
    pub seed: u64,
}

pub fn perturb(cloud: &PointCloud, spec: &PerturbSpec, seed: u64) -> Result<(PointCloud, PerturbationRecord)> {
    let stage_seed = |stream: u64| rng_for(seed, stream).random::<u64>();
    let mut out = cloud.clone();
    let transform = match &spec.similarity {
        Some(s) => random_similarity(stage_seed(1), s, cloud.bbox_diagonal())?,
        None => SimilarityTransform::identity(),
    };
    if spec.similarity.is_some() {
        out = apply_transform(&transform, &out);
    }
    let noise = spec.noise.map(|(kind, r)| NoiseSpec::new(kind, r, stage_seed(2)));
    if let Some(n) = &noise {
        out = add_noise(&out, n)?;
    }
    if let Some(f) = spec.defect {
        out = make_defect(&out, f, stage_seed(3))?;
    }
    if let Some(b) = &spec.bands {
        out = band_decimate(&out, b)?;
    }
    Ok((
        out,
        PerturbationRecord {
            transform,
            similarity: spec.similarity,
            noise,
            defect_fraction: spec.defect,
            bands: spec.bands,
            seed,
        },
    ))
}
