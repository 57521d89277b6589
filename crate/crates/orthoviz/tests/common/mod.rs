//! Shared helpers for integration tests: a brute-force ray-casting
//! renderer used as an independent oracle for the rasterizer, plus
//! randomized scene generation.

use nalgebra::Vector3;
use rand::Rng;

use orthoviz::camera::{project_points, PoseParams};
use orthoviz::mesh::{Jaw, TeethModel, Tooth};

/// Möller–Trumbore ray/triangle intersection. Returns the ray parameter
/// `t` (depth along `dir`) of the hit, or None.
pub fn ray_triangle(
    origin: Vector3<f64>,
    dir: Vector3<f64>,
    v0: Vector3<f64>,
    v1: Vector3<f64>,
    v2: Vector3<f64>,
) -> Option<f64> {
    let e1 = v1 - v0;
    let e2 = v2 - v0;
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv_det = 1.0 / det;
    let s = origin - v0;
    let u = s.dot(&p) * inv_det;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv_det;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(&q) * inv_det;
    if t <= 0.0 {
        return None;
    }
    Some(t)
}

/// Brute-force reference renderer: casts one ray through every pixel
/// center and keeps the nearest intersection over all triangles.
///
/// Returns per-pixel tooth ids (0 = background) and an "ambiguous" flag
/// marking pixels where the two nearest hits are too close to order
/// reliably in floating point.
pub fn oracle_id_map(
    pose: &PoseParams,
    model: &TeethModel,
    size: (u32, u32),
) -> (Vec<u16>, Vec<bool>) {
    let rotation = pose.rotation_matrix();
    let translation = pose.translation_vec();
    let jaw = pose.jaw_offset_vec();
    let cx = (size.0 as f64 - 1.0) / 2.0;
    let cy = (size.1 as f64 - 1.0) / 2.0;

    // camera-space triangles, jaw offset applied in model space
    let mut triangles: Vec<(u16, [Vector3<f64>; 3])> = Vec::new();
    for tooth in &model.teeth {
        let offset = match tooth.jaw {
            Jaw::Lower => jaw,
            Jaw::Upper => Vector3::zeros(),
        };
        let cam: Vec<Vector3<f64>> = tooth
            .vertices
            .iter()
            .map(|v| rotation * (v + offset) + translation)
            .collect();
        for tri in &tooth.triangles {
            triangles.push((
                tooth.id,
                [
                    cam[tri[0] as usize],
                    cam[tri[1] as usize],
                    cam[tri[2] as usize],
                ],
            ));
        }
    }

    let mut ids = vec![0u16; (size.0 * size.1) as usize];
    let mut ambiguous = vec![false; (size.0 * size.1) as usize];
    for y in 0..size.1 {
        for x in 0..size.0 {
            let dir = Vector3::new(
                (f64::from(x) - cx) / pose.focal,
                (f64::from(y) - cy) / pose.focal,
                1.0,
            );
            let mut best = f64::INFINITY;
            let mut second = f64::INFINITY;
            let mut best_id = 0u16;
            for &(id, [v0, v1, v2]) in &triangles {
                if let Some(t) = ray_triangle(Vector3::zeros(), dir, v0, v1, v2) {
                    if t < best {
                        second = best;
                        best = t;
                        best_id = id;
                    } else if t < second {
                        second = t;
                    }
                }
            }
            let i = (y * size.0 + x) as usize;
            ids[i] = best_id;
            // depth tie between different surfaces: either winner is a
            // defensible nearest, so don't score the pixel
            ambiguous[i] = second.is_finite() && second - best <= 1e-9 * best;
        }
    }
    (ids, ambiguous)
}

/// Minimum screen-space distance from each pixel center to any projected
/// triangle edge.
pub fn edge_distance_map(pose: &PoseParams, model: &TeethModel, size: (u32, u32)) -> Vec<f64> {
    let jaw = pose.jaw_offset_vec();
    let mut segments: Vec<[(f64, f64); 2]> = Vec::new();
    for tooth in &model.teeth {
        let points: Vec<Vector3<f64>> = match tooth.jaw {
            Jaw::Lower => tooth.vertices.iter().map(|v| v + jaw).collect(),
            Jaw::Upper => tooth.vertices.clone(),
        };
        let projected = project_points(pose, &points, size);
        for tri in &tooth.triangles {
            for k in 0..3 {
                let a = projected[tri[k] as usize];
                let b = projected[tri[(k + 1) % 3] as usize];
                segments.push([(a.u, a.v), (b.u, b.v)]);
            }
        }
    }
    let mut distances = vec![f64::INFINITY; (size.0 * size.1) as usize];
    for y in 0..size.1 {
        for x in 0..size.0 {
            let p = (f64::from(x), f64::from(y));
            let d = segments
                .iter()
                .map(|s| point_segment_distance(p, s[0], s[1]))
                .fold(f64::INFINITY, f64::min);
            distances[(y * size.0 + x) as usize] = d;
        }
    }
    distances
}

fn point_segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (px, py) = (p.0 - a.0, p.1 - a.1);
    let (bx, by) = (b.0 - a.0, b.1 - a.1);
    let len2 = bx * bx + by * by;
    let t = if len2 == 0.0 {
        0.0
    } else {
        ((px * bx + py * by) / len2).clamp(0.0, 1.0)
    };
    let (dx, dy) = (px - t * bx, py - t * by);
    (dx * dx + dy * dy).sqrt()
}

/// Random scene of up to three single-triangle teeth, built by sampling
/// screen positions and depths and back-projecting, so coverage of the
/// image is guaranteed.
pub fn random_scene<R: Rng>(rng: &mut R, size: (u32, u32)) -> (TeethModel, PoseParams) {
    let pose = PoseParams {
        focal: size.0 as f64 * 0.75,
        rotation: [0.0; 3],
        translation: [0.0; 3],
        jaw_offset: [0.0; 3],
    };
    let cx = (size.0 as f64 - 1.0) / 2.0;
    let cy = (size.1 as f64 - 1.0) / 2.0;
    let n_teeth = rng.gen_range(1..=3);
    let ids = [11u16, 12, 13];
    let mut teeth = Vec::new();
    for &id in ids.iter().take(n_teeth) {
        let vertices: Vec<Vector3<f64>> = (0..3)
            .map(|_| {
                let u = rng.gen_range(-2.0..size.0 as f64 + 1.0);
                let v = rng.gen_range(-2.0..size.1 as f64 + 1.0);
                let z = rng.gen_range(2.0..6.0);
                Vector3::new((u - cx) * z / pose.focal, (v - cy) * z / pose.focal, z)
            })
            .collect();
        teeth.push(Tooth::new(id, vertices, vec![[0, 1, 2]]).expect("valid tooth"));
    }
    (TeethModel::new(teeth, 0).expect("valid model"), pose)
}
