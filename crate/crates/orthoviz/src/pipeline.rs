//! File-level pipeline driver behind the CLI subcommands: fit a pose to
//! a segmented silhouette, render every treatment stage with it, fuse and
//! color-correct a generated mouth crop back into the face photo.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::camera::PoseParams;
use crate::error::{Error, Result};
use crate::fit::{default_initial_pose, fit_pose, silhouette_distance, FitOptions, FitResult};
use crate::imaging::{color_transfer, extract_crop, fuse, paste_crop, CropRect, RgbImage};
use crate::mesh::load_treatment_series;
use crate::raster::{
    crop_depth, crop_mask, crop_silhouette, depth_to_mask, id_map_to_silhouette, render_depth,
    render_id_map, MaskImage, SilhouetteImage,
};
use crate::synth::{make_synthetic_case, write_case, ArchSpec, PoseRanges};

pub const MIN_RENDER_SIZE: u32 = 64;

fn check_size(size: u32) -> Result<u32> {
    if size < MIN_RENDER_SIZE {
        return Err(Error::Config(format!(
            "render size {size} is below the minimum {MIN_RENDER_SIZE}"
        )));
    }
    Ok(size)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Inputs of the `fit` subcommand.
#[derive(Debug, Clone)]
pub struct FitJob {
    pub series_dir: PathBuf,
    pub target: PathBuf,
    pub mouth_label: PathBuf,
    pub output_dir: PathBuf,
    pub size: u32,
    pub options: FitOptions,
    pub include_trace: bool,
    /// starting pose; auto-framing when absent
    pub initial_pose: Option<PoseParams>,
}

/// Runs the registration optimization and writes `fit.json` plus a
/// target/render overlay for visual inspection.
pub fn run_fit(job: &FitJob) -> Result<FitResult> {
    check_size(job.size)?;
    let series = load_treatment_series(&job.series_dir)?;
    let target = SilhouetteImage::load_png(&job.target)?;
    let mouth_label = MaskImage::load_png(&job.mouth_label)?;
    let stage0 = &series.stages[0];
    let initial = match job.initial_pose {
        Some(pose) => pose,
        None => default_initial_pose(stage0, (target.width, target.height))?,
    };
    let result = fit_pose(stage0, &target, &mouth_label, &initial, &job.options)?;

    std::fs::create_dir_all(&job.output_dir).map_err(|source| Error::Io {
        path: job.output_dir.clone(),
        source,
    })?;
    write_fit_json(&job.output_dir.join("fit.json"), &result, job.include_trace)?;

    // overlay: target silhouette in red, fitted render in green
    let idmap = render_id_map(
        &result.pose,
        stage0,
        (target.width, target.height),
        job.options.visibility_window,
    );
    let mut rendered = id_map_to_silhouette(&idmap, 0.0);
    crop_silhouette(&mut rendered, &mouth_label);
    let pixels = target
        .values
        .iter()
        .zip(&rendered.values)
        .map(|(&t, &r)| [t, r, 0.0])
        .collect();
    let overlay = RgbImage {
        width: target.width,
        height: target.height,
        pixels,
    };
    overlay.save_png(&job.output_dir.join("overlay.png"))?;
    Ok(result)
}

fn write_fit_json(path: &Path, result: &FitResult, include_trace: bool) -> Result<()> {
    let mut doc = json!({
        "pose": result.pose,
        "final_loss": result.final_loss,
        "iterations_run": result.iterations_run,
        "converged": result.converged,
    });
    if include_trace {
        doc["loss_trace"] = json!(result.loss_trace);
    }
    write_text(path, &serde_json::to_string_pretty(&doc).expect("fit result serializes"))
}

/// Reads a pose from either a `fit.json` document or a bare pose JSON.
pub fn read_pose_file(path: &Path) -> Result<PoseParams> {
    #[derive(Deserialize)]
    struct FitDoc {
        pose: PoseParams,
    }
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    if let Ok(doc) = serde_json::from_str::<FitDoc>(&text) {
        return Ok(doc.pose);
    }
    serde_json::from_str::<PoseParams>(&text).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Inputs of the `render` subcommand.
#[derive(Debug, Clone)]
pub struct RenderJob {
    pub series_dir: PathBuf,
    pub pose_file: PathBuf,
    pub mouth_label: PathBuf,
    pub output_dir: PathBuf,
    pub size: u32,
    pub visibility_window: f64,
}

/// Renders silhouette, teeth mask and depth for every stage with the one
/// fitted pose, cropped by the mouth label.
pub fn run_render(job: &RenderJob) -> Result<Vec<PathBuf>> {
    check_size(job.size)?;
    let series = load_treatment_series(&job.series_dir)?;
    let pose = read_pose_file(&job.pose_file)?;
    let mouth_label = MaskImage::load_png(&job.mouth_label)?;
    let size = (job.size, job.size);
    if (mouth_label.width, mouth_label.height) != size {
        return Err(Error::DimensionMismatch {
            expected: size,
            got: (mouth_label.width, mouth_label.height),
        });
    }
    std::fs::create_dir_all(&job.output_dir).map_err(|source| Error::Io {
        path: job.output_dir.clone(),
        source,
    })?;
    let mut written = Vec::new();
    for (i, stage) in series.stages.iter().enumerate() {
        let idmap = render_id_map(&pose, stage, size, job.visibility_window);
        let mut silhouette = id_map_to_silhouette(&idmap, 0.0);
        crop_silhouette(&mut silhouette, &mouth_label);
        let mut depth = render_depth(&pose, stage, size, job.visibility_window);
        crop_depth(&mut depth, &mouth_label);
        let mut mask = depth_to_mask(&depth);
        crop_mask(&mut mask, &mouth_label);

        let s_path = job.output_dir.join(format!("stage_{i}_silhouette.png"));
        let m_path = job.output_dir.join(format!("stage_{i}_mask.png"));
        let d_path = job.output_dir.join(format!("stage_{i}_depth.png"));
        silhouette.save_png(&s_path)?;
        mask.save_png(&m_path)?;
        depth.save_png(&d_path)?;
        written.extend([s_path, m_path, d_path]);
    }
    Ok(written)
}

/// Inputs of the `composite` subcommand.
#[derive(Debug, Clone)]
pub struct CompositeJob {
    pub face: PathBuf,
    pub generated_crop: PathBuf,
    pub rect_file: PathBuf,
    pub mouth_label: PathBuf,
    pub output_dir: PathBuf,
    pub color_transfer: bool,
    /// teeth-region masks for the color statistics; the mouth label is
    /// the fallback when either is absent
    pub output_teeth_mask: Option<PathBuf>,
    pub reference_teeth_mask: Option<PathBuf>,
}

/// Fuses the generated mouth crop into the original, optionally corrects
/// its color statistics, and pastes the crop back into the face image.
pub fn run_composite(job: &CompositeJob) -> Result<PathBuf> {
    let face = RgbImage::load_png(&job.face)?;
    let generated = RgbImage::load_png(&job.generated_crop)?;
    let rect: CropRect = read_json(&job.rect_file)?;
    let mouth_label = MaskImage::load_png(&job.mouth_label)?;
    let original_crop = extract_crop(&face, &rect)?;

    let mut fused = fuse(&generated, &original_crop, &mouth_label)?;
    if job.color_transfer {
        let output_region = match &job.output_teeth_mask {
            Some(path) => MaskImage::load_png(path)?,
            None => mouth_label.clone(),
        };
        let reference_region = match &job.reference_teeth_mask {
            Some(path) => MaskImage::load_png(path)?,
            None => mouth_label.clone(),
        };
        let corrected = color_transfer(&fused, &original_crop, &output_region, &reference_region)?;
        // the fusion guarantee outlives color correction: outside the
        // mouth the crop stays the original, bit for bit
        fused = fuse(&corrected, &original_crop, &mouth_label)?;
    }
    let result = paste_crop(&face, &fused, &rect)?;

    std::fs::create_dir_all(&job.output_dir).map_err(|source| Error::Io {
        path: job.output_dir.clone(),
        source,
    })?;
    let out = job.output_dir.join("result.png");
    result.save_png(&out)?;
    Ok(out)
}

/// Output of the `metrics` subcommand.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub silhouette_distance: f64,
    pub iou: f64,
}

/// Silhouette distance plus intersection-over-union of the binarized
/// inputs, both restricted to `region`.
pub fn compute_metrics(
    a: &SilhouetteImage,
    b: &SilhouetteImage,
    region: &MaskImage,
) -> Result<MetricsReport> {
    let distance = silhouette_distance(a, b, region)?;
    let mut intersection = 0usize;
    let mut union = 0usize;
    for ((&va, &vb), &m) in a.values.iter().zip(&b.values).zip(&region.values) {
        if m != 1 {
            continue;
        }
        let ba = va >= 0.5;
        let bb = vb >= 0.5;
        if ba && bb {
            intersection += 1;
        }
        if ba || bb {
            union += 1;
        }
    }
    let iou = if union == 0 {
        1.0
    } else {
        intersection as f64 / union as f64
    };
    Ok(MetricsReport {
        silhouette_distance: distance,
        iou,
    })
}

/// Runs `metrics` over files and writes `metrics.json`.
pub fn run_metrics(
    a_path: &Path,
    b_path: &Path,
    region_path: &Path,
    output_dir: &Path,
) -> Result<MetricsReport> {
    let a = SilhouetteImage::load_png(a_path)?;
    let b = SilhouetteImage::load_png(b_path)?;
    let region = MaskImage::load_png(region_path)?;
    let report = compute_metrics(&a, &b, &region)?;
    std::fs::create_dir_all(output_dir).map_err(|source| Error::Io {
        path: output_dir.to_path_buf(),
        source,
    })?;
    write_text(
        &output_dir.join("metrics.json"),
        &serde_json::to_string_pretty(&report).expect("report serializes"),
    )?;
    Ok(report)
}

/// Inputs of the `synth` subcommand.
#[derive(Debug, Clone)]
pub struct SynthJob {
    pub spec: ArchSpec,
    pub ranges: PoseRanges,
    pub size: u32,
    pub visibility_window: f64,
    pub output_dir: PathBuf,
}

/// Generates a synthetic case and writes it in the formats the other
/// subcommands consume.
pub fn run_synth(job: &SynthJob) -> Result<()> {
    check_size(job.size)?;
    let case = make_synthetic_case(
        &job.spec,
        &job.ranges,
        (job.size, job.size),
        job.visibility_window,
    )?;
    std::fs::create_dir_all(&job.output_dir).map_err(|source| Error::Io {
        path: job.output_dir.clone(),
        source,
    })?;
    write_case(&job.output_dir, &case)
}

/// Flat `key = value` config file; `#` starts a comment. CLI flags
/// override whatever the file sets.
pub fn load_flat_config(path: &Path) -> Result<std::collections::HashMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut map = std::collections::HashMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!(
                "{}:{}: expected `key = value`, got `{line}`",
                path.display(),
                lineno + 1
            ))
        })?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}
