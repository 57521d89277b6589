//! Synthetic teeth arches and ground-truth cases, so the renderer and
//! pose fitter are verifiable without clinical scans or segmentation
//! networks. Teeth are rounded boxes placed along a parabolic arch;
//! realism is not the point, controllable geometry is.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camera::PoseParams;
use crate::error::{Error, Result};
use crate::fit::{default_initial_pose, FitResult};
use crate::mesh::{TeethModel, Tooth, TreatmentSeries};
use crate::raster::{
    crop_silhouette, depth_to_mask, id_map_to_silhouette, render_depth, render_id_map, MaskImage,
    SilhouetteImage,
};

/// Parameters of the generated arch.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArchSpec {
    pub teeth_per_jaw: u32,
    pub arch_width: f64,
    pub arch_depth: f64,
    /// per-tooth half extents (x, y, z)
    pub tooth_size: [f64; 3],
    /// vertical gap between the jaws
    pub jaw_gap: f64,
    pub seed: u64,
    /// rounded-box tessellation (stacks, slices); raise for heavier models
    pub resolution: (u32, u32),
}

impl Default for ArchSpec {
    fn default() -> Self {
        ArchSpec {
            teeth_per_jaw: 14,
            arch_width: 50.0,
            arch_depth: 35.0,
            tooth_size: [1.5, 3.5, 3.0],
            jaw_gap: 1.0,
            seed: 0,
            resolution: (6, 8),
        }
    }
}

impl ArchSpec {
    pub fn validate(&self) -> Result<()> {
        if self.teeth_per_jaw < 1 {
            return Err(Error::Config("teeth_per_jaw must be >= 1".into()));
        }
        if self.arch_width <= 0.0
            || self.arch_depth <= 0.0
            || self.jaw_gap <= 0.0
            || self.tooth_size.iter().any(|&s| s <= 0.0)
        {
            return Err(Error::Config("arch dimensions must be positive".into()));
        }
        Ok(())
    }
}

/// Perturbation ranges for sampling a ground-truth pose around the
/// default framing pose.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoseRanges {
    pub rotation_deg: f64,
    /// translation as a fraction of the scene diagonal
    pub translation_frac: f64,
    pub focal_factor: (f64, f64),
    /// jaw offset as a fraction of the scene diagonal
    pub jaw_frac: f64,
}

impl Default for PoseRanges {
    fn default() -> Self {
        PoseRanges {
            rotation_deg: 5.0,
            translation_frac: 0.05,
            focal_factor: (0.9, 1.1),
            jaw_frac: 0.02,
        }
    }
}

/// A fully specified ground-truth fitting problem.
#[derive(Debug, Clone)]
pub struct SyntheticCase {
    pub series: TreatmentSeries,
    pub true_pose: PoseParams,
    pub target_silhouette: SilhouetteImage,
    pub mouth_label: MaskImage,
}

/// FDI ids laid out right-to-left across a jaw, matching the arch
/// parameter from -1 (patient right) to +1 (patient left).
fn jaw_ids(teeth_per_jaw: u32, upper: bool) -> Vec<u16> {
    let right = (teeth_per_jaw + 1) / 2;
    let left = teeth_per_jaw - right;
    let (right_quadrant, left_quadrant) = if upper { (10, 20) } else { (40, 30) };
    let mut ids = Vec::with_capacity(teeth_per_jaw as usize);
    for p in (1..=right).rev() {
        ids.push((right_quadrant + p) as u16);
    }
    for p in 1..=left {
        ids.push((left_quadrant + p) as u16);
    }
    ids
}

/// Rounded box: a UV-sphere grid pushed onto the 4-norm unit ball, then
/// scaled by the half extents.
fn rounded_box(id: u16, center: Vector3<f64>, half: [f64; 3], resolution: (u32, u32)) -> Tooth {
    let (stacks, slices) = (resolution.0.max(2), resolution.1.max(3));
    let mut vertices = Vec::new();
    for i in 0..=stacks {
        let phi = PI * i as f64 / stacks as f64; // 0 at +y pole
        for j in 0..slices {
            let theta = 2.0 * PI * j as f64 / slices as f64;
            let dir = Vector3::new(phi.sin() * theta.cos(), phi.cos(), phi.sin() * theta.sin());
            let p_norm = (dir.x.abs().powi(4) + dir.y.abs().powi(4) + dir.z.abs().powi(4))
                .powf(0.25)
                .max(1e-12);
            let on_ball = dir / p_norm;
            vertices.push(
                center + Vector3::new(on_ball.x * half[0], on_ball.y * half[1], on_ball.z * half[2]),
            );
        }
    }
    let index = |i: u32, j: u32| -> u32 { i * slices + (j % slices) };
    let mut triangles = Vec::new();
    for i in 0..stacks {
        for j in 0..slices {
            let a = index(i, j);
            let b = index(i + 1, j);
            let c = index(i + 1, j + 1);
            let d = index(i, j + 1);
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    Tooth::new(id, vertices, triangles).expect("generated tooth is valid")
}

fn arch_position(spec: &ArchSpec, t: f64, upper: bool) -> Vector3<f64> {
    // parabola opening away from the camera: incisors at z = 0, molars at
    // z = arch_depth
    let x = t * spec.arch_width / 2.0;
    let z = spec.arch_depth * t * t;
    // image y grows downward, so the upper jaw sits at negative y
    let y_magnitude = spec.jaw_gap / 2.0 + spec.tooth_size[1];
    let y = if upper { -y_magnitude } else { y_magnitude };
    Vector3::new(x, y, z)
}

/// Builds the pre-treatment arch; deterministic in the spec.
pub fn make_arch_model(spec: &ArchSpec) -> Result<TeethModel> {
    make_arch_model_with_jitter(spec, &std::collections::HashMap::new(), 0)
}

fn make_arch_model_with_jitter(
    spec: &ArchSpec,
    jitter: &std::collections::HashMap<u16, Vector3<f64>>,
    stage_index: usize,
) -> Result<TeethModel> {
    spec.validate()?;
    let mut teeth = Vec::new();
    for upper in [true, false] {
        let ids = jaw_ids(spec.teeth_per_jaw, upper);
        for (slot, &id) in ids.iter().enumerate() {
            let t = if spec.teeth_per_jaw == 1 {
                0.0
            } else {
                -1.0 + 2.0 * slot as f64 / (spec.teeth_per_jaw - 1) as f64
            };
            let mut center = arch_position(spec, t, upper);
            if let Some(offset) = jitter.get(&id) {
                center += offset;
            }
            teeth.push(rounded_box(id, center, spec.tooth_size, spec.resolution));
        }
    }
    TeethModel::new(teeth, stage_index)
}

/// Two-stage series: stage 1 nudges a few teeth to mimic planned
/// movement. Deterministic in the spec seed.
pub fn make_series(spec: &ArchSpec) -> Result<TreatmentSeries> {
    let stage0 = make_arch_model(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let ids: Vec<u16> = stage0.tooth_ids().into_iter().collect();
    let moved = 3.min(ids.len());
    let mut jitter = std::collections::HashMap::new();
    for _ in 0..moved {
        let id = ids[rng.gen_range(0..ids.len())];
        let amplitude = spec.tooth_size[0] * 0.6;
        jitter.insert(
            id,
            Vector3::new(
                rng.gen_range(-amplitude..amplitude),
                rng.gen_range(-amplitude..amplitude),
                rng.gen_range(-amplitude..amplitude),
            ),
        );
    }
    let stage1 = make_arch_model_with_jitter(spec, &jitter, 1)?;
    TreatmentSeries::new(vec![stage0, stage1])
}

const MOUTH_DILATION_PX: i64 = 8;
const LIP_ROW_FRACTION: f64 = 0.10;
const MAX_POSE_RETRIES: u32 = 16;

/// Convex hull of the mask support, filled, dilated, with the top and
/// bottom rows zeroed to mimic lip occlusion.
pub fn simulate_mouth_label(teeth_mask: &MaskImage) -> MaskImage {
    let (width, height) = (teeth_mask.width, teeth_mask.height);
    let mut points: Vec<(f64, f64)> = Vec::new();
    for y in 0..height {
        for x in 0..width {
            if teeth_mask.at(x, y) == 1 {
                points.push((x as f64, y as f64));
            }
        }
    }
    let mut label = MaskImage::filled(width, height, 0);
    if points.is_empty() {
        return label;
    }
    let hull = convex_hull(&mut points);
    // fill the hull
    let mut filled = MaskImage::filled(width, height, 0);
    for y in 0..height {
        for x in 0..width {
            if point_in_hull(&hull, x as f64, y as f64) {
                filled.values[(y * width + x) as usize] = 1;
            }
        }
    }
    // dilate with a Euclidean disc
    let r = MOUTH_DILATION_PX;
    for y in 0..height as i64 {
        for x in 0..width as i64 {
            'search: for dy in -r..=r {
                for dx in -r..=r {
                    if dx * dx + dy * dy > r * r {
                        continue;
                    }
                    let (sx, sy) = (x + dx, y + dy);
                    if sx >= 0
                        && sy >= 0
                        && sx < width as i64
                        && sy < height as i64
                        && filled.values[(sy as u32 * width + sx as u32) as usize] == 1
                    {
                        label.values[(y as u32 * width + x as u32) as usize] = 1;
                        break 'search;
                    }
                }
            }
        }
    }
    // lip occlusion
    let band = (height as f64 * LIP_ROW_FRACTION) as u32;
    for y in (0..band).chain(height - band..height) {
        for x in 0..width {
            label.values[(y * width + x) as usize] = 0;
        }
    }
    label
}

/// Andrew monotone chain.
fn convex_hull(points: &mut Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    points.sort_by(|a, b| a.partial_cmp(b).unwrap());
    points.dedup();
    if points.len() < 3 {
        return points.clone();
    }
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| {
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    };
    let mut hull: Vec<(f64, f64)> = Vec::new();
    for &p in points.iter() {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in points.iter().rev() {
        while hull.len() >= lower_len && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0
        {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

fn point_in_hull(hull: &[(f64, f64)], x: f64, y: f64) -> bool {
    if hull.len() < 3 {
        return hull.iter().any(|&(hx, hy)| hx == x && hy == y);
    }
    // hull is counter-clockwise; accept boundary points
    for i in 0..hull.len() {
        let a = hull[i];
        let b = hull[(i + 1) % hull.len()];
        let cross = (b.0 - a.0) * (y - a.1) - (b.1 - a.1) * (x - a.0);
        if cross < 0.0 {
            return false;
        }
    }
    true
}

/// Samples a ground-truth pose, renders the target silhouette and the
/// simulated mouth label. Degenerate poses (empty silhouette) are
/// resampled a bounded number of times.
pub fn make_synthetic_case(
    spec: &ArchSpec,
    ranges: &PoseRanges,
    size: (u32, u32),
    visibility_window: f64,
) -> Result<SyntheticCase> {
    spec.validate()?;
    let series = make_series(spec)?;
    let stage0 = &series.stages[0];
    let diagonal = stage0.bounds()?.diagonal();
    let base = default_initial_pose(stage0, size)?;
    // separate stream from the stage-1 jitter
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(0x9e3779b97f4a7c15));

    for attempt in 0..MAX_POSE_RETRIES {
        let true_pose = sample_pose(&mut rng, &base, ranges, diagonal);
        let depth = render_depth(&true_pose, stage0, size, visibility_window);
        let teeth_mask = depth_to_mask(&depth);
        if teeth_mask.count_ones() == 0 {
            continue;
        }
        let mouth_label = simulate_mouth_label(&teeth_mask);
        if mouth_label.count_ones() == 0 {
            continue;
        }
        let idmap = render_id_map(&true_pose, stage0, size, visibility_window);
        let mut target = id_map_to_silhouette(&idmap, 0.0);
        crop_silhouette(&mut target, &mouth_label);
        if target.values.iter().all(|&v| v == 0.0) {
            continue;
        }
        let _ = attempt;
        return Ok(SyntheticCase {
            series,
            true_pose,
            target_silhouette: target,
            mouth_label,
        });
    }
    Err(Error::DegenerateCase(MAX_POSE_RETRIES))
}

fn sample_pose(
    rng: &mut ChaCha8Rng,
    base: &PoseParams,
    ranges: &PoseRanges,
    diagonal: f64,
) -> PoseParams {
    let angle = rng.gen_range(0.0..=ranges.rotation_deg.to_radians());
    let axis = loop {
        let v = Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 {
            break v / n;
        }
    };
    let rotation: Vector3<f64> = axis * angle;
    let t_amp = ranges.translation_frac * diagonal;
    let j_amp = ranges.jaw_frac * diagonal;
    PoseParams {
        focal: base.focal * rng.gen_range(ranges.focal_factor.0..=ranges.focal_factor.1),
        rotation: [rotation.x, rotation.y, rotation.z],
        translation: [
            base.translation[0] + rng.gen_range(-t_amp..=t_amp),
            base.translation[1] + rng.gen_range(-t_amp..=t_amp),
            base.translation[2] + rng.gen_range(-t_amp..=t_amp),
        ],
        jaw_offset: [
            rng.gen_range(-j_amp..=j_amp),
            rng.gen_range(-j_amp..=j_amp),
            rng.gen_range(-j_amp..=j_amp),
        ],
    }
}

/// Pose-recovery errors against the ground truth, with pass/fail at the
/// benchmark thresholds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub rotation_error_deg: f64,
    pub translation_error_rel: f64,
    pub focal_error_rel: f64,
    pub jaw_offset_error_rel: f64,
    pub rotation_ok: bool,
    pub translation_ok: bool,
    pub focal_ok: bool,
    pub jaw_offset_ok: bool,
    pub pass: bool,
}

pub const ROTATION_THRESHOLD_DEG: f64 = 2.0;
pub const TRANSLATION_THRESHOLD_REL: f64 = 0.02;
pub const FOCAL_THRESHOLD_REL: f64 = 0.02;
pub const JAW_THRESHOLD_REL: f64 = 0.02;

pub fn evaluate_recovery(
    result: &FitResult,
    truth: &PoseParams,
    scene_scale: f64,
) -> RecoveryReport {
    let fitted = &result.pose;
    let relative = fitted.rotation_matrix().rotation_to(&truth.rotation_matrix());
    let rotation_error_deg = relative.angle().to_degrees();
    let translation_error_rel =
        (fitted.translation_vec() - truth.translation_vec()).norm() / scene_scale;
    let focal_error_rel = (fitted.focal - truth.focal).abs() / truth.focal;
    let jaw_offset_error_rel =
        (fitted.jaw_offset_vec() - truth.jaw_offset_vec()).norm() / scene_scale;
    let rotation_ok = rotation_error_deg <= ROTATION_THRESHOLD_DEG;
    let translation_ok = translation_error_rel <= TRANSLATION_THRESHOLD_REL;
    let focal_ok = focal_error_rel <= FOCAL_THRESHOLD_REL;
    let jaw_offset_ok = jaw_offset_error_rel <= JAW_THRESHOLD_REL;
    RecoveryReport {
        rotation_error_deg,
        translation_error_rel,
        focal_error_rel,
        jaw_offset_error_rel,
        rotation_ok,
        translation_ok,
        focal_ok,
        jaw_offset_ok,
        pass: rotation_ok && translation_ok && focal_ok && jaw_offset_ok,
    }
}

/// Writes a case in the formats the pipeline consumes: stage meshes,
/// target and mouth-label PNGs, and the ground-truth pose as JSON.
pub fn write_case(dir: &Path, case: &SyntheticCase) -> Result<()> {
    crate::mesh::write_treatment_series(&dir.join("series"), &case.series)?;
    case.target_silhouette.save_png(&dir.join("target.png"))?;
    case.mouth_label.save_png(&dir.join("mouth_label.png"))?;
    let json = serde_json::to_string_pretty(&case.true_pose).expect("pose serializes");
    std::fs::write(dir.join("true_pose.json"), json).map_err(|source| Error::Io {
        path: dir.join("true_pose.json"),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> ArchSpec {
        ArchSpec {
            teeth_per_jaw: 7,
            resolution: (4, 6),
            seed: 7,
            ..ArchSpec::default()
        }
    }

    #[test]
    fn single_tooth_per_jaw_yields_two_teeth() {
        let spec = ArchSpec {
            teeth_per_jaw: 1,
            ..ArchSpec::default()
        };
        let model = make_arch_model(&spec).unwrap();
        assert_eq!(model.teeth.len(), 2);
        let jaws: Vec<_> = model.teeth.iter().map(|t| t.jaw).collect();
        assert!(jaws.contains(&crate::mesh::Jaw::Upper));
        assert!(jaws.contains(&crate::mesh::Jaw::Lower));
    }

    #[test]
    fn arch_generation_is_deterministic() {
        let spec = small_spec();
        assert_eq!(make_arch_model(&spec).unwrap(), make_arch_model(&spec).unwrap());
        let a = make_series(&spec).unwrap();
        let b = make_series(&spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn default_arch_width_matches_spec() {
        let spec = ArchSpec::default();
        let model = make_arch_model(&spec).unwrap();
        let bounds = model.bounds().unwrap();
        let width = bounds.size().x;
        // centers span arch_width; the mesh adds up to one tooth extent
        assert!((width - spec.arch_width).abs() <= 2.0 * spec.tooth_size[0] + 1e-9);
    }

    #[test]
    fn series_stages_share_tooth_ids() {
        let series = make_series(&small_spec()).unwrap();
        assert_eq!(series.len(), 2);
        assert_eq!(series.stages[0].tooth_ids(), series.stages[1].tooth_ids());
        // stage 1 actually moves something
        assert_ne!(series.stages[0].teeth, series.stages[1].teeth);
    }

    #[test]
    fn case_reproduces_target_bit_exactly() {
        let case = make_synthetic_case(&small_spec(), &PoseRanges::default(), (128, 128), 0.5)
            .unwrap();
        let idmap = render_id_map(&case.true_pose, &case.series.stages[0], (128, 128), 0.5);
        let mut re = id_map_to_silhouette(&idmap, 0.0);
        crop_silhouette(&mut re, &case.mouth_label);
        assert_eq!(re, case.target_silhouette);
    }

    #[test]
    fn case_generation_is_deterministic() {
        let spec = small_spec();
        let ranges = PoseRanges::default();
        let a = make_synthetic_case(&spec, &ranges, (64, 64), 0.5).unwrap();
        let b = make_synthetic_case(&spec, &ranges, (64, 64), 0.5).unwrap();
        assert_eq!(a.true_pose, b.true_pose);
        assert_eq!(a.target_silhouette, b.target_silhouette);
        assert_eq!(a.mouth_label, b.mouth_label);
    }

    #[test]
    fn mouth_label_covers_most_of_teeth_mask() {
        for seed in 0..5u64 {
            let spec = ArchSpec {
                seed,
                ..small_spec()
            };
            let case =
                make_synthetic_case(&spec, &PoseRanges::default(), (128, 128), 0.5).unwrap();
            let depth = render_depth(&case.true_pose, &case.series.stages[0], (128, 128), 0.5);
            let mask = depth_to_mask(&depth);
            let total = mask.count_ones();
            let covered = mask
                .values
                .iter()
                .zip(&case.mouth_label.values)
                .filter(|&(&m, &l)| m == 1 && l == 1)
                .count();
            assert!(
                covered as f64 >= 0.95 * total as f64,
                "seed {seed}: covered {covered}/{total}"
            );
        }
    }

    #[test]
    fn recovery_report_on_exact_pose() {
        let pose = PoseParams {
            focal: 200.0,
            rotation: [0.01, 0.02, 0.03],
            translation: [1.0, 2.0, 50.0],
            jaw_offset: [0.1, 0.0, 0.0],
        };
        let result = FitResult {
            pose,
            final_loss: 0.0,
            loss_trace: vec![0.0],
            iterations_run: 1,
            converged: true,
        };
        let report = evaluate_recovery(&result, &pose, 10.0);
        assert_eq!(report.rotation_error_deg, 0.0);
        assert_eq!(report.translation_error_rel, 0.0);
        assert_eq!(report.focal_error_rel, 0.0);
        assert_eq!(report.jaw_offset_error_rel, 0.0);
        assert!(report.pass);
    }

    #[test]
    fn recovery_rotation_error_of_constructed_rotation() {
        let truth = PoseParams {
            focal: 200.0,
            rotation: [0.0; 3],
            translation: [0.0, 0.0, 50.0],
            jaw_offset: [0.0; 3],
        };
        let fitted = PoseParams {
            rotation: [5.0f64.to_radians(), 0.0, 0.0],
            ..truth
        };
        let result = FitResult {
            pose: fitted,
            final_loss: 0.0,
            loss_trace: vec![],
            iterations_run: 0,
            converged: false,
        };
        let report = evaluate_recovery(&result, &truth, 10.0);
        assert!((report.rotation_error_deg - 5.0).abs() < 1e-9);
        assert!(!report.rotation_ok);
    }

    #[test]
    fn recovery_translation_threshold_contract() {
        let truth = PoseParams {
            focal: 200.0,
            rotation: [0.0; 3],
            translation: [0.0, 0.0, 50.0],
            jaw_offset: [0.0; 3],
        };
        let fitted = PoseParams {
            translation: [0.3, 0.0, 50.0], // 0.03 of scene scale 10
            ..truth
        };
        let result = FitResult {
            pose: fitted,
            final_loss: 0.0,
            loss_trace: vec![],
            iterations_run: 0,
            converged: false,
        };
        let report = evaluate_recovery(&result, &truth, 10.0);
        assert!(!report.translation_ok);
        assert!(!report.pass);
        assert!(report.rotation_ok && report.focal_ok && report.jaw_offset_ok);
    }

    #[test]
    fn written_case_round_trips_through_the_loader() {
        let case = make_synthetic_case(&small_spec(), &PoseRanges::default(), (64, 64), 0.5)
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_case(dir.path(), &case).unwrap();
        let series = crate::mesh::load_treatment_series(&dir.path().join("series")).unwrap();
        assert_eq!(series.len(), case.series.len());
        for (a, b) in series.stages.iter().zip(&case.series.stages) {
            assert_eq!(a.tooth_ids(), b.tooth_ids());
            for (ta, tb) in a.teeth.iter().zip(&b.teeth) {
                for (va, vb) in ta.vertices.iter().zip(&tb.vertices) {
                    assert!((va - vb).norm() < 1e-6);
                }
            }
        }
        let label = MaskImage::load_png(&dir.path().join("mouth_label.png")).unwrap();
        assert_eq!(label, case.mouth_label);
        let target = SilhouetteImage::load_png(&dir.path().join("target.png")).unwrap();
        assert_eq!(target, case.target_silhouette);
    }
}
