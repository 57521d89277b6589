//! Per-tooth labeled triangle meshes and treatment-stage series.
//!
//! Stage files are a small `.obj` subset (`o`, `v`, `f` records) with one
//! object group per tooth named `tooth_<FDI>`. Models are immutable after
//! load and safe to share between threads.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;

use crate::error::{Error, Result};

/// Which jaw a tooth belongs to. Derivable from the FDI quadrant digit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Jaw {
    Upper,
    Lower,
}

impl Jaw {
    /// Jaw encoded by an FDI tooth number (quadrants 1,2 upper; 3,4 lower).
    pub fn from_fdi(id: u16) -> Result<Jaw> {
        match id / 10 {
            1 | 2 => Ok(Jaw::Upper),
            3 | 4 => Ok(Jaw::Lower),
            _ => Err(Error::InvalidToothId(id)),
        }
    }
}

/// Checks an FDI tooth number: quadrant 1-4, position 1-8.
pub fn valid_fdi(id: u16) -> bool {
    let quadrant = id / 10;
    let position = id % 10;
    (1..=4).contains(&quadrant) && (1..=8).contains(&position)
}

/// A single tooth: triangle mesh labeled with its FDI number.
#[derive(Debug, Clone, PartialEq)]
pub struct Tooth {
    pub id: u16,
    pub jaw: Jaw,
    pub vertices: Vec<Vector3<f64>>,
    pub triangles: Vec<[u32; 3]>,
}

impl Tooth {
    pub fn new(id: u16, vertices: Vec<Vector3<f64>>, triangles: Vec<[u32; 3]>) -> Result<Tooth> {
        if !valid_fdi(id) {
            return Err(Error::InvalidToothId(id));
        }
        let jaw = Jaw::from_fdi(id)?;
        if vertices.is_empty() {
            return Err(Error::InvalidTooth {
                id,
                message: "empty vertex list".into(),
            });
        }
        let n = vertices.len() as u32;
        for tri in &triangles {
            if tri.iter().any(|&i| i >= n) {
                return Err(Error::InvalidTooth {
                    id,
                    message: format!("triangle index out of range: {:?} (have {} vertices)", tri, n),
                });
            }
        }
        Ok(Tooth {
            id,
            jaw,
            vertices,
            triangles,
        })
    }
}

/// One treatment stage: the full set of teeth in a shared coordinate frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TeethModel {
    pub teeth: Vec<Tooth>,
    pub stage_index: usize,
}

impl TeethModel {
    pub fn new(teeth: Vec<Tooth>, stage_index: usize) -> Result<TeethModel> {
        let mut seen = BTreeSet::new();
        for tooth in &teeth {
            if !seen.insert(tooth.id) {
                return Err(Error::DuplicateTooth {
                    id: tooth.id,
                    stage: stage_index,
                });
            }
        }
        Ok(TeethModel { teeth, stage_index })
    }

    pub fn tooth_ids(&self) -> BTreeSet<u16> {
        self.teeth.iter().map(|t| t.id).collect()
    }

    pub fn triangle_count(&self) -> usize {
        self.teeth.iter().map(|t| t.triangles.len()).sum()
    }

    /// Lower-jaw teeth translated by `offset`; upper teeth untouched.
    pub fn apply_jaw_offset(&self, offset: Vector3<f64>) -> TeethModel {
        let teeth = self
            .teeth
            .iter()
            .map(|tooth| {
                if tooth.jaw == Jaw::Lower {
                    let mut moved = tooth.clone();
                    for v in &mut moved.vertices {
                        *v += offset;
                    }
                    moved
                } else {
                    tooth.clone()
                }
            })
            .collect();
        TeethModel {
            teeth,
            stage_index: self.stage_index,
        }
    }

    /// Axis-aligned bounding box over all vertices of all teeth.
    pub fn bounds(&self) -> Result<Aabb> {
        let mut points = self.teeth.iter().flat_map(|t| t.vertices.iter());
        let first = points.next().ok_or(Error::EmptyModel)?;
        let mut aabb = Aabb {
            min: *first,
            max: *first,
        };
        for p in points {
            aabb.min = aabb.min.inf(p);
            aabb.max = aabb.max.sup(p);
        }
        Ok(aabb)
    }
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Aabb {
    pub fn center(&self) -> Vector3<f64> {
        (self.min + self.max) * 0.5
    }

    pub fn size(&self) -> Vector3<f64> {
        self.max - self.min
    }

    pub fn diagonal(&self) -> f64 {
        self.size().norm()
    }
}

/// Ordered treatment stages; index 0 is the pre-treatment model matching
/// the input photograph.
#[derive(Debug, Clone, PartialEq)]
pub struct TreatmentSeries {
    pub stages: Vec<TeethModel>,
}

impl TreatmentSeries {
    /// Validates that every stage carries the identical tooth-id set.
    pub fn new(stages: Vec<TeethModel>) -> Result<TreatmentSeries> {
        let first = stages.first().ok_or_else(|| Error::EmptyDirectory(PathBuf::new()))?;
        let reference = first.tooth_ids();
        for stage in &stages[1..] {
            let ids = stage.tooth_ids();
            if ids != reference {
                let missing: Vec<u16> = reference.difference(&ids).copied().collect();
                let extra: Vec<u16> = ids.difference(&reference).copied().collect();
                return Err(Error::ToothSetMismatch {
                    stage: stage.stage_index,
                    detail: format!("missing {:?}, extra {:?}", missing, extra),
                });
            }
        }
        Ok(TreatmentSeries { stages })
    }

    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }
}

/// Loads `stage_000.obj`, `stage_001.obj`, ... from a directory into a
/// validated series. Stage order follows the file numbering.
pub fn load_treatment_series(dir: &Path) -> Result<TreatmentSeries> {
    let entries = std::fs::read_dir(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut stage_files: Vec<(usize, PathBuf)> = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let path = entry.path();
        let name = match path.file_name().and_then(|n| n.to_str()) {
            Some(n) => n,
            None => continue,
        };
        if let Some(rest) = name.strip_prefix("stage_") {
            if let Some(num) = rest.strip_suffix(".obj") {
                if let Ok(index) = num.parse::<usize>() {
                    stage_files.push((index, path));
                }
            }
        }
    }
    if stage_files.is_empty() {
        return Err(Error::EmptyDirectory(dir.to_path_buf()));
    }
    stage_files.sort();
    let mut stages = Vec::with_capacity(stage_files.len());
    for (order, (_, path)) in stage_files.iter().enumerate() {
        stages.push(load_stage_obj(path, order)?);
    }
    TreatmentSeries::new(stages)
}

/// Parses one stage file. Object groups must be named `tooth_<FDI>`;
/// quad and larger faces are fan-triangulated.
pub fn load_stage_obj(path: &Path, stage_index: usize) -> Result<TeethModel> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let malformed = |line: usize, message: String| Error::MalformedMesh {
        path: path.to_path_buf(),
        line,
        message,
    };

    // Vertex indices in `f` records are global to the file; each tooth keeps
    // only the vertices its faces reference.
    let mut global_vertices: Vec<Vector3<f64>> = Vec::new();
    let mut teeth: Vec<(u16, Vec<[u32; 3]>)> = Vec::new();
    let mut current: Option<usize> = None;

    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        match parts.next().unwrap() {
            "o" | "g" => {
                let name = parts
                    .next()
                    .ok_or_else(|| malformed(lineno, "object record without a name".into()))?;
                let id = name
                    .strip_prefix("tooth_")
                    .and_then(|s| s.parse::<u16>().ok())
                    .ok_or_else(|| {
                        malformed(lineno, format!("object name `{name}` is not tooth_<FDI>"))
                    })?;
                teeth.push((id, Vec::new()));
                current = Some(teeth.len() - 1);
            }
            "v" => {
                let mut coord = [0.0f64; 3];
                for c in &mut coord {
                    *c = parts
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| malformed(lineno, "vertex needs three coordinates".into()))?;
                }
                global_vertices.push(Vector3::new(coord[0], coord[1], coord[2]));
            }
            "f" => {
                let slot = current
                    .ok_or_else(|| malformed(lineno, "face record before any object group".into()))?;
                let mut indices: Vec<u32> = Vec::with_capacity(4);
                for token in parts {
                    // accept v, v/vt, v//vn, v/vt/vn forms
                    let vertex_token = token.split('/').next().unwrap_or("");
                    let index: i64 = vertex_token
                        .parse()
                        .map_err(|_| malformed(lineno, format!("bad face index `{token}`")))?;
                    let resolved = if index > 0 {
                        index - 1
                    } else if index < 0 {
                        global_vertices.len() as i64 + index
                    } else {
                        return Err(malformed(lineno, "face index 0 is invalid".into()));
                    };
                    if resolved < 0 || resolved as usize >= global_vertices.len() {
                        return Err(malformed(lineno, format!("face index {index} out of range")));
                    }
                    indices.push(resolved as u32);
                }
                if indices.len() < 3 {
                    return Err(malformed(lineno, "face needs at least three vertices".into()));
                }
                for i in 1..indices.len() - 1 {
                    teeth[slot].1.push([indices[0], indices[i], indices[i + 1]]);
                }
            }
            // tolerated records from common exporters
            "vn" | "vt" | "s" | "usemtl" | "mtllib" => {}
            other => {
                return Err(malformed(lineno, format!("unsupported record `{other}`")));
            }
        }
    }

    let mut built = Vec::with_capacity(teeth.len());
    for (id, faces) in teeth {
        if faces.is_empty() {
            return Err(Error::InvalidTooth {
                id,
                message: "tooth has no faces".into(),
            });
        }
        // remap global indices to a compact per-tooth vertex list,
        // keeping the file's vertex order
        let used: BTreeSet<u32> = faces.iter().flatten().copied().collect();
        let mut remap: std::collections::HashMap<u32, u32> = std::collections::HashMap::new();
        let mut vertices = Vec::with_capacity(used.len());
        for global in used {
            remap.insert(global, vertices.len() as u32);
            vertices.push(global_vertices[global as usize]);
        }
        let triangles = faces
            .iter()
            .map(|face| [remap[&face[0]], remap[&face[1]], remap[&face[2]]])
            .collect();
        built.push(Tooth::new(id, vertices, triangles)?);
    }
    TeethModel::new(built, stage_index)
}

/// Writes one stage in the same `.obj` subset the loader reads.
pub fn write_stage_obj(path: &Path, model: &TeethModel) -> Result<()> {
    let mut out = String::new();
    let mut base = 1usize;
    for tooth in &model.teeth {
        writeln!(out, "o tooth_{}", tooth.id).unwrap();
        for v in &tooth.vertices {
            writeln!(out, "v {} {} {}", v.x, v.y, v.z).unwrap();
        }
        for tri in &tooth.triangles {
            writeln!(
                out,
                "f {} {} {}",
                base + tri[0] as usize,
                base + tri[1] as usize,
                base + tri[2] as usize
            )
            .unwrap();
        }
        base += tooth.vertices.len();
    }
    std::fs::write(path, out).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes every stage of a series as `stage_<iii>.obj` under `dir`.
pub fn write_treatment_series(dir: &Path, series: &TreatmentSeries) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    for (i, stage) in series.stages.iter().enumerate() {
        write_stage_obj(&dir.join(format!("stage_{i:03}.obj")), stage)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube_tooth(id: u16, center: Vector3<f64>, half: f64) -> Tooth {
        let mut vertices = Vec::new();
        for &z in &[-half, half] {
            for &y in &[-half, half] {
                for &x in &[-half, half] {
                    vertices.push(center + Vector3::new(x, y, z));
                }
            }
        }
        let quads = [
            [0, 1, 3, 2],
            [4, 6, 7, 5],
            [0, 2, 6, 4],
            [1, 5, 7, 3],
            [0, 4, 5, 1],
            [2, 3, 7, 6],
        ];
        let mut triangles = Vec::new();
        for q in quads {
            triangles.push([q[0], q[1], q[2]]);
            triangles.push([q[0], q[2], q[3]]);
        }
        Tooth::new(id, vertices, triangles).unwrap()
    }

    #[test]
    fn jaw_from_fdi_quadrants() {
        assert_eq!(Jaw::from_fdi(11).unwrap(), Jaw::Upper);
        assert_eq!(Jaw::from_fdi(27).unwrap(), Jaw::Upper);
        assert_eq!(Jaw::from_fdi(31).unwrap(), Jaw::Lower);
        assert_eq!(Jaw::from_fdi(48).unwrap(), Jaw::Lower);
        assert!(Jaw::from_fdi(51).is_err());
    }

    #[test]
    fn tooth_rejects_bad_indices() {
        let verts = vec![Vector3::zeros(), Vector3::x(), Vector3::y()];
        assert!(Tooth::new(11, verts.clone(), vec![[0, 1, 3]]).is_err());
        assert!(Tooth::new(11, verts, vec![[0, 1, 2]]).is_ok());
        assert!(Tooth::new(11, vec![], vec![]).is_err());
    }

    #[test]
    fn duplicate_tooth_id_rejected() {
        let t1 = cube_tooth(11, Vector3::zeros(), 1.0);
        let t2 = cube_tooth(11, Vector3::x(), 1.0);
        assert!(matches!(
            TeethModel::new(vec![t1, t2], 0),
            Err(Error::DuplicateTooth { id: 11, .. })
        ));
    }

    #[test]
    fn jaw_offset_moves_only_lower() {
        let upper = cube_tooth(11, Vector3::zeros(), 1.0);
        let lower = cube_tooth(31, Vector3::zeros(), 1.0);
        let model = TeethModel::new(vec![upper, lower], 0).unwrap();
        let offset = Vector3::new(0.0, 0.0, 1.0);
        let moved = model.apply_jaw_offset(offset);
        assert_eq!(moved.teeth[0].vertices, model.teeth[0].vertices);
        for (a, b) in moved.teeth[1].vertices.iter().zip(&model.teeth[1].vertices) {
            assert_eq!(*a, b + offset);
        }
        // identity
        let same = model.apply_jaw_offset(Vector3::zeros());
        assert_eq!(same, model);
        // inverse within 1e-12
        let back = moved.apply_jaw_offset(-offset);
        for (a, b) in back.teeth[1].vertices.iter().zip(&model.teeth[1].vertices) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn jaw_offset_composes_additively() {
        let model = TeethModel::new(vec![cube_tooth(34, Vector3::new(1.0, 2.0, 3.0), 0.5)], 0).unwrap();
        // dyadic offsets keep the float sums exact
        let a = Vector3::new(0.125, -0.25, 0.375);
        let b = Vector3::new(-0.5, 0.5, -0.625);
        let two_steps = model.apply_jaw_offset(a).apply_jaw_offset(b);
        let one_step = model.apply_jaw_offset(a + b);
        assert_eq!(two_steps, one_step);
    }

    #[test]
    fn bounds_single_vertex_and_two_teeth() {
        let single = Tooth::new(11, vec![Vector3::new(1.0, 2.0, 3.0)], vec![]).unwrap();
        let model = TeethModel::new(vec![single], 0).unwrap();
        let aabb = model.bounds().unwrap();
        assert_eq!(aabb.min, Vector3::new(1.0, 2.0, 3.0));
        assert_eq!(aabb.max, Vector3::new(1.0, 2.0, 3.0));

        let a = cube_tooth(11, Vector3::zeros(), 0.5);
        let b = cube_tooth(21, Vector3::new(10.0, 0.0, 0.0), 0.5);
        let model = TeethModel::new(vec![a, b], 0).unwrap();
        let aabb = model.bounds().unwrap();
        assert_eq!(aabb.min, Vector3::new(-0.5, -0.5, -0.5));
        assert_eq!(aabb.max, Vector3::new(10.5, 0.5, 0.5));

        assert!(TeethModel::new(vec![], 0).unwrap().bounds().is_err());
    }

    #[test]
    fn series_rejects_tooth_set_mismatch() {
        let s0 = TeethModel::new(
            vec![cube_tooth(11, Vector3::zeros(), 0.5), cube_tooth(21, Vector3::x(), 0.3)],
            0,
        )
        .unwrap();
        let s1 = TeethModel::new(vec![cube_tooth(11, Vector3::zeros(), 0.5)], 1).unwrap();
        match TreatmentSeries::new(vec![s0, s1]) {
            Err(Error::ToothSetMismatch { stage: 1, detail }) => {
                assert!(detail.contains("21"), "detail: {detail}");
            }
            other => panic!("expected tooth set mismatch, got {other:?}"),
        }
    }

    #[test]
    fn obj_round_trip_preserves_vertices() {
        let model = TeethModel::new(
            vec![
                cube_tooth(11, Vector3::new(0.123456789, -4.5, 6.7), 0.37),
                cube_tooth(31, Vector3::new(-1.0, 0.25, 1e-3), 0.41),
            ],
            0,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stage_000.obj");
        write_stage_obj(&path, &model).unwrap();
        let reloaded = load_stage_obj(&path, 0).unwrap();
        assert_eq!(reloaded.teeth.len(), 2);
        for (orig, back) in model.teeth.iter().zip(&reloaded.teeth) {
            assert_eq!(orig.id, back.id);
            assert_eq!(orig.triangles.len(), back.triangles.len());
            for (a, b) in orig.vertices.iter().zip(&back.vertices) {
                assert!((a - b).norm() < 1e-6);
            }
        }
    }

    #[test]
    fn load_series_orders_and_validates() {
        let dir = tempfile::tempdir().unwrap();
        let s0 = TeethModel::new(vec![cube_tooth(11, Vector3::zeros(), 0.5)], 0).unwrap();
        let mut s1 = s0.clone();
        s1.stage_index = 1;
        write_stage_obj(&dir.path().join("stage_000.obj"), &s0).unwrap();
        write_stage_obj(&dir.path().join("stage_001.obj"), &s1).unwrap();
        let series = load_treatment_series(dir.path()).unwrap();
        assert_eq!(series.len(), 2);
        assert_eq!(series.stages[0].stage_index, 0);
        assert_eq!(series.stages[1].stage_index, 1);

        let empty = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_treatment_series(empty.path()),
            Err(Error::EmptyDirectory(_))
        ));
    }

    #[test]
    fn load_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let model = TeethModel::new(vec![cube_tooth(14, Vector3::new(0.1, 0.2, 0.3), 0.9)], 0).unwrap();
        write_stage_obj(&dir.path().join("stage_000.obj"), &model).unwrap();
        let a = load_treatment_series(dir.path()).unwrap();
        let b = load_treatment_series(dir.path()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn quads_are_fan_triangulated() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stage_000.obj");
        std::fs::write(
            &path,
            "o tooth_11\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n",
        )
        .unwrap();
        let model = load_stage_obj(&path, 0).unwrap();
        assert_eq!(model.teeth[0].triangles.len(), 2);
    }

    #[test]
    fn malformed_records_are_reported_with_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stage_000.obj");
        std::fs::write(&path, "o tooth_11\nv 0 0\n").unwrap();
        match load_stage_obj(&path, 0) {
            Err(Error::MalformedMesh { line: 2, .. }) => {}
            other => panic!("expected malformed mesh at line 2, got {other:?}"),
        }
    }
}
