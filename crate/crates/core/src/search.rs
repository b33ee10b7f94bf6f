//! Exhaustive search over candidate rotations and center offsets.
//!
//! Every pose `O_f · (rows − S_i)` of the source pre-shape is scored against
//! the fixed target profile, and the smallest measure wins. The reduction is
//! a total order on `(measure, translation index, rotation index)`, so the
//! winner does not depend on how candidates are split across workers.
//!
//! When the per-axis rotation step divides the azimuth bin count, a rotation
//! about z by a grid angle moves every point by a whole number of azimuth
//! bins. Candidates are then evaluated in groups sharing `(n_x, n_y, S_i)`:
//! points are binned once per group and each z step only re-indexes cells.

use std::cmp::Ordering;
use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{pca, PcaFrame, Point3, RotationMatrix, SimilarityTransform, Vector3};
use crate::measurement::{combine, measure_pair, LocalAlignment, ShapeMeasure};
use crate::partition::{
    extract_contour, select_features, CellMap, FeatureScores, PartitionLayout, PartitionProfile,
    Representative, MIN_MATCHED_CELLS,
};
use crate::preprocess::PreShape;

/// How a candidate pose's representatives are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileRebuild {
    /// Re-extract from every row (contour) and every feature candidate.
    Reselect,
    /// Re-bin only the representatives chosen in the source's own pose.
    Rebin,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub rotation_steps: usize,
    pub translation_steps: usize,
    pub use_features: bool,
    pub profile_rebuild: ProfileRebuild,
    /// Number of best distinct grid rotations kept for [`refine`].
    pub shortlist: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            rotation_steps: 12,
            translation_steps: 5,
            use_features: true,
            profile_rebuild: ProfileRebuild::Reselect,
            shortlist: 32,
        }
    }
}

/// Candidate rotations `R_z(n_z θ) R_y(n_y θ) R_x(n_x θ)` with `θ = 2π/steps`,
/// enumerated with `n_x` outermost and `n_z` innermost.
pub fn build_rotation_grid(steps: usize) -> Result<Vec<RotationMatrix>> {
    if steps == 0 {
        return Err(Error::InvalidParameter("rotation steps must be positive".into()));
    }
    let theta = TAU / steps as f64;
    let mut out = Vec::with_capacity(steps.pow(3));
    for nx in 0..steps {
        for ny in 0..steps {
            for nz in 0..steps {
                out.push(RotationMatrix::from_euler_zyx(
                    nx as f64 * theta,
                    ny as f64 * theta,
                    nz as f64 * theta,
                ));
            }
        }
    }
    Ok(out)
}

/// Extent `max − min` of the rows projected onto the frame's major axis.
pub fn major_axis_extent(rows: &[Vector3], frame: &PcaFrame) -> f64 {
    let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
        let t = r.dot(frame.u());
        (lo.min(t), hi.max(t))
    });
    if lo <= hi {
        hi - lo
    } else {
        0.0
    }
}

/// Center offsets `Σ c_d ê_d` over the frame axes, each `c_d` taking `steps`
/// evenly spaced values in `[−extent/4, extent/4]`; enumerated with the `u`
/// coefficient outermost.
pub fn build_translation_grid(frame: &PcaFrame, extent: f64, steps: usize) -> Result<Vec<Vector3>> {
    if steps % 2 == 0 {
        return Err(Error::EvenTranslationSteps(steps));
    }
    let half = extent / 4.0;
    let coeffs: Vec<f64> = if steps == 1 {
        vec![0.0]
    } else {
        let mid = steps / 2;
        (0..steps)
            .map(|j| half * (j as f64 - mid as f64) / mid as f64)
            .collect()
    };
    let mut out = Vec::with_capacity(steps.pow(3));
    for &cu in &coeffs {
        for &cv in &coeffs {
            for &cw in &coeffs {
                out.push(frame.axes[0] * cu + frame.axes[1] * cv + frame.axes[2] * cw);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateGrid {
    pub rotations: Vec<RotationMatrix>,
    pub translations: Vec<Vector3>,
    pub rotation_steps: usize,
    pub translation_steps: usize,
    /// Axes the offsets are spread along.
    pub axes: [Vector3; 3],
    /// Extent `L` along the major axis.
    pub extent: f64,
}

impl CandidateGrid {
    pub fn new(rotation_steps: usize, translation_steps: usize, frame: &PcaFrame, extent: f64) -> Result<Self> {
        Ok(Self {
            rotations: build_rotation_grid(rotation_steps)?,
            translations: build_translation_grid(frame, extent, translation_steps)?,
            rotation_steps,
            translation_steps,
            axes: frame.axes,
            extent,
        })
    }

    /// Grid whose offsets follow the principal axes of the source pre-shape.
    pub fn for_source(source: &PreShape, rotation_steps: usize, translation_steps: usize) -> Result<Self> {
        let pts: Vec<Point3> = source.rows().iter().map(|r| Point3::from(*r)).collect();
        let frame = pca(&pts)?;
        let extent = major_axis_extent(source.rows(), &frame);
        Self::new(rotation_steps, translation_steps, &frame, extent)
    }

    /// Angle between neighboring rotations along one axis.
    pub fn rotation_step(&self) -> f64 {
        TAU / self.rotation_steps as f64
    }

    /// Spacing between neighboring offsets along one axis.
    pub fn translation_step(&self) -> f64 {
        if self.translation_steps > 1 {
            self.extent / 2.0 / (self.translation_steps - 1) as f64
        } else {
            self.extent / 4.0
        }
    }

    pub fn len(&self) -> usize {
        self.rotations.len() * self.translations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn rotation_index(&self, nx: usize, ny: usize, nz: usize) -> usize {
        let s = self.rotation_steps;
        (nx * s + ny) * s + nz
    }
}

/// A grid candidate and its measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub rotation_index: usize,
    pub translation_index: usize,
    pub measure: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub best_measure: f64,
    pub best_rotation_index: usize,
    pub best_translation_index: usize,
    pub rotation: RotationMatrix,
    pub translation: Vector3,
    /// Frobenius norm of `rows − S_i` used to renormalize the winning pose.
    pub pose_norm: f64,
    pub local: LocalAlignment,
    pub feature_measure: Option<f64>,
    pub evaluations: usize,
    pub valid_evaluations: usize,
    /// Measure of the pose in `rotation`/`translation`; equals
    /// `best_measure` until [`refine`] moves the pose off the grid.
    pub final_measure: f64,
    pub refinement_iterations: usize,
    /// Best candidate of each of the leading distinct grid rotations,
    /// ascending by measure; the first entry is the winner.
    pub shortlist: Vec<Candidate>,
}

/// Source-side inputs of the search.
#[derive(Debug, Clone, Copy)]
pub struct SearchSource<'a> {
    pub shape: &'a PreShape,
    pub scores: &'a FeatureScores,
}

struct Pools {
    contour: Vec<usize>,
    features: Vec<usize>,
}

impl Pools {
    fn new(source: &SearchSource<'_>, layout: &PartitionLayout, cfg: &SearchConfig) -> Self {
        let mut pools = match cfg.profile_rebuild {
            ProfileRebuild::Reselect => Pools {
                contour: (0..source.shape.len()).collect(),
                features: source.scores.candidates.clone(),
            },
            ProfileRebuild::Rebin => Pools {
                contour: extract_contour(source.shape, layout).rows(),
                features: select_features(source.shape, source.scores, layout).rows(),
            },
        };
        if !cfg.use_features {
            pools.features.clear();
        }
        pools.contour.sort_unstable();
        pools.features.sort_unstable();
        pools
    }
}

/// Frobenius norm of `rows − offset`.
fn shifted_norm(rows: &[Vector3], offset: &Vector3) -> f64 {
    rows.iter().map(|r| (r - offset).norm_squared()).sum::<f64>().sqrt()
}

/// Scores one candidate pose of the source against the target profile.
pub fn evaluate_candidate(
    target: &PartitionProfile,
    source: &SearchSource<'_>,
    rotation: &RotationMatrix,
    translation: &Vector3,
    cfg: &SearchConfig,
) -> ShapeMeasure {
    let layout = &target.layout;
    let pools = Pools::new(source, layout, cfg);
    let rows = source.shape.rows();
    let norm = shifted_norm(rows, translation);
    let posed = |row: usize| (rotation * (rows[row] - translation)) / norm;

    let mut contour = CellMap::empty(layout);
    let mut best = vec![f64::NEG_INFINITY; layout.cell_count()];
    for &row in &pools.contour {
        let p = posed(row);
        let id = layout.cell_id_of(&p);
        let n = p.norm_squared();
        if n > best[id] {
            best[id] = n;
            contour.insert(id, Representative { row, point: p });
        }
    }
    let mut features = CellMap::empty(layout);
    let mut best = vec![f64::NEG_INFINITY; layout.cell_count()];
    for &row in &pools.features {
        let p = posed(row);
        let id = layout.cell_id_of(&p);
        let s = source.scores.scores[row];
        if s > best[id] {
            best[id] = s;
            features.insert(id, Representative { row, point: p });
        }
    }
    let posed_profile = PartitionProfile {
        contour,
        features,
        layout: *layout,
    };
    crate::measurement::combined_measure(target, &posed_profile, cfg.use_features)
        .unwrap_or_else(|_| ShapeMeasure::sentinel(0))
}

#[derive(Debug, Clone, Copy)]
struct Best {
    measure: ShapeMeasure,
    translation_index: usize,
    rotation_index: usize,
}

impl Best {
    fn key_cmp(&self, other: &Best) -> Ordering {
        self.measure
            .value
            .total_cmp(&other.measure.value)
            .then(self.translation_index.cmp(&other.translation_index))
            .then(self.rotation_index.cmp(&other.rotation_index))
    }
}

/// Running reduction: counts, and the best candidate of each of the
/// `cap` best distinct rotations seen so far, sorted by key.
#[derive(Debug, Clone)]
struct Tally {
    leaders: Vec<Best>,
    cap: usize,
    evaluations: usize,
    valid: usize,
}

impl Tally {
    fn new(cap: usize) -> Self {
        Self {
            leaders: Vec::with_capacity(cap + 1),
            cap: cap.max(1),
            evaluations: 0,
            valid: 0,
        }
    }

    fn offer(&mut self, cand: Best) {
        self.evaluations += 1;
        if cand.measure.is_valid() {
            self.valid += 1;
            self.admit(cand);
        }
    }

    fn admit(&mut self, cand: Best) {
        if self.leaders.len() == self.cap
            && self.leaders[self.cap - 1].key_cmp(&cand) == Ordering::Less
        {
            return;
        }
        if let Some(pos) = self.leaders.iter().position(|b| b.rotation_index == cand.rotation_index) {
            if self.leaders[pos].key_cmp(&cand) == Ordering::Less {
                return;
            }
            self.leaders.remove(pos);
        }
        let at = self.leaders.partition_point(|b| b.key_cmp(&cand) == Ordering::Less);
        self.leaders.insert(at, cand);
        self.leaders.truncate(self.cap);
    }

    fn merge(mut self, other: Tally) -> Tally {
        self.evaluations += other.evaluations;
        self.valid += other.valid;
        for cand in other.leaders {
            self.admit(cand);
        }
        self
    }
}

/// Evaluates every candidate in `grid` and returns the minimum.
pub fn global_search(
    target: &PartitionProfile,
    source: &SearchSource<'_>,
    grid: &CandidateGrid,
    cfg: &SearchConfig,
) -> Result<SearchResult> {
    let layout = target.layout;
    let tally = if grid.rotations.len() == grid.rotation_steps.pow(3)
        && layout.azimuth_bins % grid.rotation_steps == 0
    {
        grouped_search(target, source, grid, cfg)
    } else {
        exhaustive_search(target, source, grid, cfg)
    };
    finish(tally, source, grid)
}

/// Plain per-candidate evaluation, in parallel over candidates.
pub fn exhaustive_search_result(
    target: &PartitionProfile,
    source: &SearchSource<'_>,
    grid: &CandidateGrid,
    cfg: &SearchConfig,
) -> Result<SearchResult> {
    finish(exhaustive_search(target, source, grid, cfg), source, grid)
}

fn exhaustive_search(
    target: &PartitionProfile,
    source: &SearchSource<'_>,
    grid: &CandidateGrid,
    cfg: &SearchConfig,
) -> Tally {
    let nr = grid.rotations.len();
    (0..grid.len())
        .into_par_iter()
        .fold(|| Tally::new(cfg.shortlist), |mut tally, idx| {
            let (t, r) = (idx / nr, idx % nr);
            let measure = evaluate_candidate(
                target,
                source,
                &grid.rotations[r],
                &grid.translations[t],
                cfg,
            );
            tally.offer(Best {
                measure,
                translation_index: t,
                rotation_index: r,
            });
            tally
        })
        .reduce(|| Tally::new(cfg.shortlist), Tally::merge)
}

fn finish(tally: Tally, source: &SearchSource<'_>, grid: &CandidateGrid) -> Result<SearchResult> {
    let best = *tally.leaders.first().ok_or(Error::RegistrationFailed)?;
    let translation = grid.translations[best.translation_index];
    Ok(SearchResult {
        best_measure: best.measure.value,
        best_rotation_index: best.rotation_index,
        best_translation_index: best.translation_index,
        rotation: grid.rotations[best.rotation_index],
        translation,
        pose_norm: shifted_norm(source.shape.rows(), &translation),
        local: best.measure.contour,
        feature_measure: best.measure.feature_measure,
        evaluations: tally.evaluations,
        valid_evaluations: tally.valid,
        final_measure: best.measure.value,
        refinement_iterations: 0,
        shortlist: tally
            .leaders
            .iter()
            .map(|b| Candidate {
                rotation_index: b.rotation_index,
                translation_index: b.translation_index,
                measure: b.measure.value,
            })
            .collect(),
    })
}

/// Per-cell winner while binning one pose: `(key, row, point)`.
type Slot = Option<(f64, usize, Vector3)>;

fn grouped_search(
    target: &PartitionProfile,
    source: &SearchSource<'_>,
    grid: &CandidateGrid,
    cfg: &SearchConfig,
) -> Tally {
    let layout = target.layout;
    let steps = grid.rotation_steps;
    let theta = TAU / steps as f64;
    let bin_shift = layout.azimuth_bins / steps;
    let pools = Pools::new(source, &layout, cfg);
    let rows = source.shape.rows();
    let scores = &source.scores.scores;
    let norms: Vec<f64> = grid.translations.iter().map(|t| shifted_norm(rows, t)).collect();
    let z_rotations: Vec<RotationMatrix> = (0..steps)
        .map(|nz| RotationMatrix::about_z(nz as f64 * theta))
        .collect();
    let target_contour: Vec<(usize, Vector3)> = target.contour.iter().map(|(id, r)| (id, r.point)).collect();
    let target_features: Vec<(usize, Vector3)> = target.features.iter().map(|(id, r)| (id, r.point)).collect();
    let k = layout.cell_count();

    (0..steps * steps)
        .into_par_iter()
        .fold(|| Tally::new(cfg.shortlist), |mut tally, xy| {
            let (nx, ny) = (xy / steps, xy % steps);
            let r_xy = RotationMatrix::about_y(ny as f64 * theta) * RotationMatrix::about_x(nx as f64 * theta);
            let rot_contour: Vec<Vector3> = pools.contour.iter().map(|&i| &r_xy * rows[i]).collect();
            let rot_features: Vec<Vector3> = pools.features.iter().map(|&i| &r_xy * rows[i]).collect();
            let mut contour_slots: Vec<Slot> = vec![None; k];
            let mut feature_slots: Vec<Slot> = vec![None; k];
            let mut ta = Vec::with_capacity(k);
            let mut sb = Vec::with_capacity(k);

            for (t, offset) in grid.translations.iter().enumerate() {
                let shift = &r_xy * *offset;
                contour_slots.iter_mut().for_each(|s| *s = None);
                feature_slots.iter_mut().for_each(|s| *s = None);
                for (&row, p) in pools.contour.iter().zip(&rot_contour) {
                    let q = p - shift;
                    let key = q.norm_squared();
                    let id = layout.cell_id_of(&q);
                    if contour_slots[id].is_none_or(|(best, _, _)| key > best) {
                        contour_slots[id] = Some((key, row, q));
                    }
                }
                for (&row, p) in pools.features.iter().zip(&rot_features) {
                    let q = p - shift;
                    let key = scores[row];
                    let id = layout.cell_id_of(&q);
                    if feature_slots[id].is_none_or(|(best, _, _)| key > best) {
                        feature_slots[id] = Some((key, row, q));
                    }
                }
                let inv_norm = 1.0 / norms[t];
                for (nz, rz) in z_rotations.iter().enumerate() {
                    let shift_bins = nz * bin_shift;
                    let mut pairs = |target_reps: &[(usize, Vector3)], slots: &[Slot]| {
                        ta.clear();
                        sb.clear();
                        for &(id, a) in target_reps {
                            let c = layout.cell(id);
                            let az = (c.azimuth + layout.azimuth_bins - shift_bins) % layout.azimuth_bins;
                            let src = c.elevation * layout.azimuth_bins + az;
                            if let Some((_, _, q)) = slots[src] {
                                ta.push(a);
                                sb.push((rz * q) * inv_norm);
                            }
                        }
                        if ta.len() < MIN_MATCHED_CELLS {
                            None
                        } else {
                            Some(measure_pair(&ta, &sb))
                        }
                    };
                    let contour = pairs(&target_contour, &contour_slots);
                    let features = if cfg.use_features {
                        pairs(&target_features, &feature_slots)
                    } else {
                        None
                    };
                    let measure = match contour {
                        Some(c) => combine(c, features),
                        None => ShapeMeasure::sentinel(0),
                    };
                    tally.offer(Best {
                        measure,
                        translation_index: t,
                        rotation_index: grid.rotation_index(nx, ny, nz),
                    });
                }
            }
            tally
        })
        .reduce(|| Tally::new(cfg.shortlist), Tally::merge)
}

/// Settings of the local search run from each shortlisted candidate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefineConfig {
    /// Candidates refined, taken from the head of the shortlist.
    pub candidates: usize,
    /// Search stops once the rotation step falls below this angle (radians).
    pub min_angle: f64,
    pub max_evaluations: usize,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            candidates: 32,
            min_angle: 1e-4,
            max_evaluations: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Pose {
    rotation: RotationMatrix,
    translation: Vector3,
    measure: ShapeMeasure,
}

/// Compass search on the measure around one starting pose: tries small
/// rotations about each axis and offsets along each grid axis, moves to the
/// best strict improvement, and halves both step sizes when none improves.
fn compass_search(
    target: &PartitionProfile,
    source: &SearchSource<'_>,
    grid: &CandidateGrid,
    cfg: &SearchConfig,
    refine: &RefineConfig,
    start: Pose,
) -> (Pose, usize) {
    let mut pose = start;
    let mut angle = grid.rotation_step() / 2.0;
    let mut offset = grid.translation_step() / 2.0;
    let mut evaluations = 0;
    let axes = [Vector3::x(), Vector3::y(), Vector3::z()];
    while angle >= refine.min_angle && evaluations < refine.max_evaluations {
        let mut best: Option<Pose> = None;
        // the local alignment's own rotation is tried first
        let local = pose.measure.contour;
        let n = shifted_norm(source.shape.rows(), &pose.translation);
        let turned = local.local_rotation * pose.rotation;
        let recentered = pose.translation + n * (pose.rotation.transpose().matrix() * local.source_centroid)
            - (n / local.local_scale) * (turned.transpose().matrix() * local.target_centroid);
        for (rotation, translation) in [(turned, pose.translation), (turned, recentered)] {
            let measure = evaluate_candidate(target, source, &rotation, &translation, cfg);
            evaluations += 1;
            if measure.is_valid() && best.is_none_or(|b| measure.value < b.measure.value) {
                best = Some(Pose { rotation, translation, measure });
            }
        }
        for (axis, offset_axis) in axes.iter().zip(&grid.axes) {
            for sign in [1.0, -1.0] {
                let moves = [
                    (RotationMatrix::from_axis_angle(axis, sign * angle) * pose.rotation, pose.translation),
                    (pose.rotation, pose.translation + offset_axis * (sign * offset)),
                ];
                for (rotation, translation) in moves {
                    let measure = evaluate_candidate(target, source, &rotation, &translation, cfg);
                    evaluations += 1;
                    if measure.is_valid() && best.is_none_or(|b| measure.value < b.measure.value) {
                        best = Some(Pose { rotation, translation, measure });
                    }
                }
            }
        }
        match best {
            Some(b) if b.measure.value < pose.measure.value => pose = b,
            _ => {
                angle /= 2.0;
                offset /= 2.0;
            }
        }
    }
    (pose, evaluations)
}

/// Refines the leading shortlisted candidates off the grid and keeps the one
/// reaching the lowest measure (earliest shortlist entry on ties).
pub fn refine(
    target: &PartitionProfile,
    source: &SearchSource<'_>,
    grid: &CandidateGrid,
    result: &SearchResult,
    cfg: &SearchConfig,
    refine: &RefineConfig,
) -> SearchResult {
    let starts: Vec<Pose> = result
        .shortlist
        .iter()
        .take(refine.candidates)
        .map(|c| {
            let rotation = grid.rotations[c.rotation_index];
            let translation = grid.translations[c.translation_index];
            let measure = evaluate_candidate(target, source, &rotation, &translation, cfg);
            Pose { rotation, translation, measure }
        })
        .filter(|p| p.measure.is_valid())
        .collect();
    let outcomes: Vec<(Pose, usize)> = starts
        .par_iter()
        .map(|&start| compass_search(target, source, grid, cfg, refine, start))
        .collect();
    let mut out = result.clone();
    let best = outcomes
        .iter()
        .min_by(|a, b| a.0.measure.value.total_cmp(&b.0.measure.value));
    if let Some((pose, _)) = best {
        if pose.measure.value < out.final_measure {
            out.rotation = pose.rotation;
            out.translation = pose.translation;
            out.pose_norm = shifted_norm(source.shape.rows(), &pose.translation);
            out.local = pose.measure.contour;
            out.feature_measure = pose.measure.feature_measure;
            out.final_measure = pose.measure.value;
        }
    }
    out.refinement_iterations = outcomes.iter().map(|(_, n)| n).sum();
    out
}

/// Flattens the search outcome into one similarity transform taking the
/// source cloud into the target's model frame.
///
/// The chain is: source normalization, center shift `−S_i`, rotation `O_f`
/// with renormalization, the local rotation and scale of the winning
/// contour alignment, then target de-normalization. With
/// `align_sample_centroids` the local step also carries the offset between
/// the matched sample centroids.
pub fn compose_final_transform(
    target: &PreShape,
    source: &PreShape,
    result: &SearchResult,
    align_sample_centroids: bool,
) -> Result<SimilarityTransform> {
    let normalize = SimilarityTransform::new(
        1.0 / source.scale(),
        RotationMatrix::identity(),
        -source.centroid().coords / source.scale(),
    )?;
    let shift = SimilarityTransform::new(1.0, RotationMatrix::identity(), -result.translation)?;
    let pose = SimilarityTransform::new(1.0 / result.pose_norm, result.rotation, Vector3::zeros())?;
    let local = &result.local;
    let local_offset = if align_sample_centroids && local.is_valid() {
        local.target_centroid - local.local_scale * (&local.local_rotation * local.source_centroid)
    } else {
        Vector3::zeros()
    };
    let local = SimilarityTransform::new(local.local_scale, local.local_rotation, local_offset)?;
    let denormalize = SimilarityTransform::new(target.scale(), RotationMatrix::identity(), target.centroid().coords)?;
    Ok(denormalize
        .compose(&local)
        .compose(&pose)
        .compose(&shift)
        .compose(&normalize))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{apply_transform, PointCloud};
    use crate::partition::{build_profile, feature_scores, FeatureConfig};
    use crate::preprocess::to_preshape;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn default_grid_sizes() {
        assert_eq!(build_rotation_grid(12).unwrap().len(), 1728);
        let frame = pca(&[Point3::new(-1.0, 0.0, 0.0), Point3::new(1.0, 0.1, 0.0), Point3::new(0.0, 0.0, 0.3)]).unwrap();
        let t = build_translation_grid(&frame, 2.0, 5).unwrap();
        assert_eq!(t.len(), 125);
        assert!(t.iter().any(|v| v.norm() == 0.0));
    }

    #[test]
    fn single_step_grids() {
        let r = build_rotation_grid(1).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0], RotationMatrix::identity());
        let frame = pca(&[Point3::new(-1.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0)]).unwrap();
        assert_eq!(build_translation_grid(&frame, 2.0, 1).unwrap(), vec![Vector3::zeros()]);
        assert_eq!(build_translation_grid(&frame, 2.0, 4), Err(Error::EvenTranslationSteps(4)));
    }

    #[test]
    fn rotation_grid_arithmetic() {
        let grid = build_rotation_grid(12).unwrap();
        let idx = (12 + 2) * 12 + 3;
        let expected = RotationMatrix::about_z(PI / 2.0) * RotationMatrix::about_y(PI / 3.0) * RotationMatrix::about_x(PI / 6.0);
        assert!((grid[idx].matrix() - expected.matrix()).abs().max() < 1e-15);
    }

    #[test]
    fn translation_offsets_respect_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<Point3> = (0..300)
            .map(|_| Point3::new(3.0 * rng.random::<f64>(), rng.random(), 0.5 * rng.random::<f64>()))
            .collect();
        let shape = to_preshape(&PointCloud::new(pts).unwrap()).unwrap();
        let grid = CandidateGrid::for_source(&shape, 12, 5).unwrap();
        let frame = pca(&shape.rows().iter().map(|r| Point3::from(*r)).collect::<Vec<_>>()).unwrap();
        let extent = major_axis_extent(shape.rows(), &frame);
        for t in &grid.translations {
            for axis in &frame.axes {
                assert!(t.dot(axis).abs() <= extent / 4.0 + 1e-12);
            }
        }
        assert_eq!(grid.translations[62], Vector3::zeros());
    }

    fn shape_cloud(seed: u64, n: usize) -> PointCloud {
        crate::eval::shapes::asymmetric_shape(seed, n)
    }

    struct Prepared {
        shape: PreShape,
        scores: FeatureScores,
        profile: PartitionProfile,
    }

    fn prepare(cloud: &PointCloud) -> Prepared {
        let shape = to_preshape(cloud).unwrap();
        let layout = PartitionLayout::default();
        let cfg = FeatureConfig::default();
        Prepared {
            scores: feature_scores(cloud, &shape, &cfg).unwrap(),
            profile: build_profile(cloud, &shape, &layout, &cfg).unwrap(),
            shape,
        }
    }

    #[test]
    fn identity_candidate_on_identical_shapes() {
        let p = prepare(&shape_cloud(3, 800));
        let src = SearchSource { shape: &p.shape, scores: &p.scores };
        let m = evaluate_candidate(&p.profile, &src, &RotationMatrix::identity(), &Vector3::zeros(), &SearchConfig::default());
        assert!(m.value < 1e-7);
    }

    #[test]
    fn grid_rotation_is_undone_by_its_inverse() {
        let cloud = shape_cloud(4, 800);
        let r_g = RotationMatrix::from_euler_zyx(PI / 3.0, -PI / 6.0, 5.0 * PI / 6.0);
        let moved = apply_transform(&SimilarityTransform::new(1.0, r_g, Vector3::zeros()).unwrap(), &cloud);
        let t = prepare(&cloud);
        let s = prepare(&moved);
        let src = SearchSource { shape: &s.shape, scores: &s.scores };
        let m = evaluate_candidate(&t.profile, &src, &r_g.inverse(), &Vector3::zeros(), &SearchConfig::default());
        assert!(m.value < 1e-6, "{}", m.value);
    }

    #[test]
    fn far_offset_scores_worse() {
        for seed in 0..10 {
            let p = prepare(&shape_cloud(100 + seed, 600));
            let src = SearchSource { shape: &p.shape, scores: &p.scores };
            let cfg = SearchConfig::default();
            let at_zero = evaluate_candidate(&p.profile, &src, &RotationMatrix::identity(), &Vector3::zeros(), &cfg);
            let far = evaluate_candidate(&p.profile, &src, &RotationMatrix::identity(), &Vector3::new(2.0, 2.0, 2.0), &cfg);
            assert!(far.value > at_zero.value);
        }
    }

    fn small_grid(shape: &PreShape) -> CandidateGrid {
        CandidateGrid::for_source(shape, 6, 3).unwrap()
    }

    #[test]
    fn grouped_search_agrees_with_exhaustive_evaluation() {
        let cloud = shape_cloud(5, 700);
        let r_g = RotationMatrix::from_euler_zyx(0.4, 2.0, -1.0);
        let moved = apply_transform(&SimilarityTransform::new(0.7, r_g, Vector3::new(1.0, 2.0, 3.0)).unwrap(), &cloud);
        let t = prepare(&cloud);
        let s = prepare(&moved);
        let src = SearchSource { shape: &s.shape, scores: &s.scores };
        let grid = small_grid(&s.shape);
        for rebuild in [ProfileRebuild::Reselect, ProfileRebuild::Rebin] {
            let cfg = SearchConfig {
                rotation_steps: 6,
                translation_steps: 3,
                profile_rebuild: rebuild,
                ..SearchConfig::default()
            };
            let fast = global_search(&t.profile, &src, &grid, &cfg).unwrap();
            let slow = exhaustive_search_result(&t.profile, &src, &grid, &cfg).unwrap();
            assert!((fast.best_measure - slow.best_measure).abs() < 1e-9);
            // the two paths round differently, so only near-ties may swap
            let other = evaluate_candidate(
                &t.profile,
                &src,
                &grid.rotations[fast.best_rotation_index],
                &grid.translations[fast.best_translation_index],
                &cfg,
            );
            assert!((other.value - slow.best_measure).abs() < 1e-9);
            assert_eq!(fast.evaluations, grid.len());
            // spot check every candidate's measure
            let nr = grid.rotations.len();
            for idx in (0..grid.len()).step_by(97) {
                let m = evaluate_candidate(&t.profile, &src, &grid.rotations[idx % nr], &grid.translations[idx / nr], &cfg);
                assert!(fast.best_measure <= m.value + 1e-9);
            }
        }
    }

    #[test]
    fn identical_source_picks_identity() {
        let p = prepare(&shape_cloud(6, 700));
        let src = SearchSource { shape: &p.shape, scores: &p.scores };
        let grid = small_grid(&p.shape);
        let cfg = SearchConfig { rotation_steps: 6, translation_steps: 3, ..SearchConfig::default() };
        let res = global_search(&p.profile, &src, &grid, &cfg).unwrap();
        assert!(res.best_measure < 1e-7);
        assert_eq!(res.best_rotation_index, 0);
        assert_eq!(res.translation, Vector3::zeros());
        let tf = compose_final_transform(&p.shape, &p.shape, &res, false).unwrap();
        assert!((tf.to_homogeneous() - nalgebra::Matrix4::identity()).abs().max() < 1e-7);
    }

    #[test]
    fn worker_count_does_not_change_result() {
        let cloud = shape_cloud(7, 600);
        let moved = apply_transform(
            &SimilarityTransform::new(1.3, RotationMatrix::from_euler_zyx(1.0, 0.2, -2.2), Vector3::zeros()).unwrap(),
            &cloud,
        );
        let t = prepare(&cloud);
        let s = prepare(&moved);
        let src = SearchSource { shape: &s.shape, scores: &s.scores };
        let grid = small_grid(&s.shape);
        let cfg = SearchConfig { rotation_steps: 6, translation_steps: 3, ..SearchConfig::default() };
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| global_search(&t.profile, &src, &grid, &cfg).unwrap())
        };
        let one = run(1);
        for threads in [2, 3, 8] {
            assert_eq!(run(threads), one);
        }
    }

    #[test]
    fn pure_scale_copy() {
        let cloud = shape_cloud(8, 600);
        let doubled = apply_transform(&SimilarityTransform::new(2.0, RotationMatrix::identity(), Vector3::zeros()).unwrap(), &cloud);
        let t = prepare(&cloud);
        let s = prepare(&doubled);
        let src = SearchSource { shape: &s.shape, scores: &s.scores };
        let grid = small_grid(&s.shape);
        let cfg = SearchConfig { rotation_steps: 6, translation_steps: 3, ..SearchConfig::default() };
        let res = global_search(&t.profile, &src, &grid, &cfg).unwrap();
        let tf = compose_final_transform(&t.shape, &s.shape, &res, false).unwrap();
        assert!((tf.scale() - 0.5).abs() < 1e-6);
    }

    #[test]
    fn refinement_improves_an_off_grid_pose() {
        let cloud = shape_cloud(9, 700);
        let r_g = RotationMatrix::from_euler_zyx(0.2, -0.15, 0.1);
        let moved = apply_transform(&SimilarityTransform::new(1.0, r_g, Vector3::zeros()).unwrap(), &cloud);
        let t = prepare(&cloud);
        let s = prepare(&moved);
        let src = SearchSource { shape: &s.shape, scores: &s.scores };
        let grid = small_grid(&s.shape);
        let cfg = SearchConfig { rotation_steps: 6, translation_steps: 3, shortlist: 4, ..SearchConfig::default() };
        let coarse = global_search(&t.profile, &src, &grid, &cfg).unwrap();
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| refine(&t.profile, &src, &grid, &coarse, &cfg, &RefineConfig::default()))
        };
        let fine = run(1);
        assert_eq!(run(4), fine);
        assert!(fine.final_measure <= coarse.final_measure);
        assert!(fine.final_measure < 0.05, "{}", fine.final_measure);
        let err = fine.rotation.angle_to(&r_g.inverse());
        assert!(err < coarse.rotation.angle_to(&r_g.inverse()));
        assert!(err < 2f64.to_radians(), "{}", err.to_degrees());
    }
}
