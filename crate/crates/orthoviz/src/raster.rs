//! Software rasterizer with the two customized shaders: a tooth-ID pass
//! that yields per-tooth silhouette edges, and a depth pass shading by
//! distance to the camera (nearer is brighter).
//!
//! Rasterization is a per-pixel-center coverage test against a
//! floating-point z-buffer. There is no multisampling; the smoothness the
//! optimizer needs comes from the Gaussian blur applied to silhouettes.
//! Rendering is a pure function of its inputs and bit-deterministic.

use std::path::Path;

use nalgebra::Vector3;

use crate::camera::PoseParams;
use crate::error::{Error, Result};
use crate::mesh::{Jaw, TeethModel};

/// Depth intensity assigned to the farthest included surface, keeping
/// every covered pixel nonzero so the mask is the exact depth support.
pub const EPSILON_FLOOR: f64 = 0.05;

/// Per-pixel FDI id of the nearest tooth surface; 0 is background.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdMap {
    pub width: u32,
    pub height: u32,
    pub ids: Vec<u16>,
}

/// Single-channel intensity raster in [0,1].
#[derive(Debug, Clone, PartialEq)]
pub struct SilhouetteImage {
    pub width: u32,
    pub height: u32,
    pub values: Vec<f64>,
}

/// Distance-shaded raster: 0 background, brighter is nearer.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub width: u32,
    pub height: u32,
    pub values: Vec<f64>,
}

/// Binary raster with values in {0,1}.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskImage {
    pub width: u32,
    pub height: u32,
    pub values: Vec<u8>,
}

impl IdMap {
    pub fn at(&self, x: u32, y: u32) -> u16 {
        self.ids[(y * self.width + x) as usize]
    }
}

impl SilhouetteImage {
    pub fn zeros(width: u32, height: u32) -> SilhouetteImage {
        SilhouetteImage {
            width,
            height,
            values: vec![0.0; (width * height) as usize],
        }
    }

    pub fn at(&self, x: u32, y: u32) -> f64 {
        self.values[(y * self.width + x) as usize]
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        save_gray_png(path, self.width, self.height, &self.values)
    }

    pub fn load_png(path: &Path) -> Result<SilhouetteImage> {
        let (width, height, values) = load_gray_png(path)?;
        Ok(SilhouetteImage { width, height, values })
    }
}

impl DepthImage {
    pub fn at(&self, x: u32, y: u32) -> f64 {
        self.values[(y * self.width + x) as usize]
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        save_gray_png(path, self.width, self.height, &self.values)
    }
}

impl MaskImage {
    pub fn filled(width: u32, height: u32, value: u8) -> MaskImage {
        MaskImage {
            width,
            height,
            values: vec![value.min(1); (width * height) as usize],
        }
    }

    pub fn at(&self, x: u32, y: u32) -> u8 {
        self.values[(y * self.width + x) as usize]
    }

    pub fn count_ones(&self) -> usize {
        self.values.iter().filter(|&&v| v == 1).count()
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let values: Vec<f64> = self.values.iter().map(|&v| v as f64).collect();
        save_gray_png(path, self.width, self.height, &values)
    }

    /// Reads an 8-bit grayscale PNG, thresholding at 128.
    pub fn load_png(path: &Path) -> Result<MaskImage> {
        let (width, height, values) = load_gray_png(path)?;
        let values = values
            .iter()
            .map(|&v| if v * 255.0 >= 128.0 { 1 } else { 0 })
            .collect();
        Ok(MaskImage { width, height, values })
    }
}

fn save_gray_png(path: &Path, width: u32, height: u32, values: &[f64]) -> Result<()> {
    let bytes: Vec<u8> = values
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let buffer = image::GrayImage::from_raw(width, height, bytes)
        .expect("raster buffer matches dimensions");
    buffer.save(path).map_err(|e| Error::Png {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn load_gray_png(path: &Path) -> Result<(u32, u32, Vec<f64>)> {
    let img = image::open(path)
        .map_err(|e| Error::Png {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?
        .into_luma8();
    let (width, height) = img.dimensions();
    let values = img.into_raw().iter().map(|&b| b as f64 / 255.0).collect();
    Ok((width, height, values))
}

/// Raster-pass output shared by the two shaders: id buffer plus the
/// camera-space z-buffer (infinity where uncovered).
struct RasterPass {
    ids: Vec<u16>,
    depth: Vec<f64>,
}

fn rasterize(
    pose: &PoseParams,
    model: &TeethModel,
    size: (u32, u32),
    visibility_window: f64,
) -> RasterPass {
    let (width, height) = size;
    let npix = (width * height) as usize;
    let mut pass = RasterPass {
        ids: vec![0; npix],
        depth: vec![f64::INFINITY; npix],
    };

    let rotation = pose.rotation_matrix();
    let translation = pose.translation_vec();
    let jaw_offset = pose.jaw_offset_vec();
    let cx = (width as f64 - 1.0) / 2.0;
    let cy = (height as f64 - 1.0) / 2.0;

    // camera-space vertices per tooth, with the jaw offset folded in
    let mut transformed: Vec<(u16, Vec<Vector3<f64>>, &[[u32; 3]], f64)> =
        Vec::with_capacity(model.teeth.len());
    for tooth in &model.teeth {
        let offset = if tooth.jaw == Jaw::Lower {
            jaw_offset
        } else {
            Vector3::zeros()
        };
        let mut min_depth = f64::INFINITY;
        let cam: Vec<Vector3<f64>> = tooth
            .vertices
            .iter()
            .map(|p| {
                let c = rotation * (p + offset) + translation;
                min_depth = min_depth.min(c.z);
                c
            })
            .collect();
        transformed.push((tooth.id, cam, &tooth.triangles, min_depth));
    }

    // far-tooth exclusion: threshold over the per-tooth nearest depths of
    // teeth in front of the camera
    let front_depths: Vec<f64> = transformed
        .iter()
        .map(|t| t.3)
        .filter(|&d| d > 0.0 && d.is_finite())
        .collect();
    let tau_vis = match (
        front_depths.iter().cloned().fold(f64::INFINITY, f64::min),
        front_depths.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    ) {
        (z_front, z_back) if z_front.is_finite() => {
            z_front + visibility_window * (z_back - z_front)
        }
        _ => return pass,
    };

    for (id, cam, triangles, min_depth) in &transformed {
        if *min_depth > tau_vis {
            continue;
        }
        for tri in triangles.iter() {
            let a = &cam[tri[0] as usize];
            let b = &cam[tri[1] as usize];
            let c = &cam[tri[2] as usize];
            if a.z <= 0.0 || b.z <= 0.0 || c.z <= 0.0 {
                continue;
            }
            raster_triangle(&mut pass, *id, pose.focal, cx, cy, width, height, a, b, c);
        }
    }
    pass
}

#[allow(clippy::too_many_arguments)]
fn raster_triangle(
    pass: &mut RasterPass,
    id: u16,
    focal: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
    a: &Vector3<f64>,
    b: &Vector3<f64>,
    c: &Vector3<f64>,
) {
    let pa = (focal * a.x / a.z + cx, focal * a.y / a.z + cy);
    let pb = (focal * b.x / b.z + cx, focal * b.y / b.z + cy);
    let pc = (focal * c.x / c.z + cx, focal * c.y / c.z + cy);

    let area = (pb.0 - pa.0) * (pc.1 - pa.1) - (pb.1 - pa.1) * (pc.0 - pa.0);
    if area == 0.0 {
        return; // degenerate in screen space
    }
    let inv_area = 1.0 / area;

    let min_x = pa.0.min(pb.0).min(pc.0).ceil().max(0.0) as i64;
    let max_x = pa.0.max(pb.0).max(pc.0).floor().min(width as f64 - 1.0) as i64;
    let min_y = pa.1.min(pb.1).min(pc.1).ceil().max(0.0) as i64;
    let max_y = pa.1.max(pb.1).max(pc.1).floor().min(height as f64 - 1.0) as i64;
    if min_x > max_x || min_y > max_y {
        return;
    }

    let (iza, izb, izc) = (1.0 / a.z, 1.0 / b.z, 1.0 / c.z);

    for y in min_y..=max_y {
        let py = y as f64;
        for x in min_x..=max_x {
            let px = x as f64;
            // barycentric via edge functions, sign-normalized by the area
            let w0 = ((pb.0 - pa.0) * (py - pa.1) - (pb.1 - pa.1) * (px - pa.0)) * inv_area;
            let w1 = ((pc.0 - pb.0) * (py - pb.1) - (pc.1 - pb.1) * (px - pb.0)) * inv_area;
            let w2 = 1.0 - w0 - w1;
            if w0 < 0.0 || w1 < 0.0 || w2 < 0.0 {
                continue;
            }
            // screen-space barycentrics interpolate 1/z exactly; each
            // vertex takes the weight of its opposite edge
            let inv_z = w1 * iza + w2 * izb + w0 * izc;
            let z = 1.0 / inv_z;
            let idx = (y as u32 * width + x as u32) as usize;
            if z < pass.depth[idx] {
                pass.depth[idx] = z;
                pass.ids[idx] = id;
            }
        }
    }
}

/// Tooth-ID shader: nearest-surface FDI id per pixel, with far teeth
/// excluded by `visibility_window` (fraction of the scene depth extent;
/// 1.0 disables the exclusion).
pub fn render_id_map(
    pose: &PoseParams,
    model: &TeethModel,
    size: (u32, u32),
    visibility_window: f64,
) -> IdMap {
    let pass = rasterize(pose, model, size, visibility_window);
    IdMap {
        width: size.0,
        height: size.1,
        ids: pass.ids,
    }
}

/// Marks covered pixels whose 4-neighborhood holds a different id
/// (background and image border count as different), then blurs.
/// This keeps per-tooth interproximal lines in the silhouette.
pub fn id_map_to_silhouette(idmap: &IdMap, blur_sigma: f64) -> SilhouetteImage {
    let (width, height) = (idmap.width, idmap.height);
    let mut edges = vec![0.0f64; (width * height) as usize];
    let id_at = |x: i64, y: i64| -> u16 {
        if x < 0 || y < 0 || x >= width as i64 || y >= height as i64 {
            0
        } else {
            idmap.ids[(y as u32 * width + x as u32) as usize]
        }
    };
    for y in 0..height as i64 {
        for x in 0..width as i64 {
            let id = id_at(x, y);
            if id == 0 {
                continue;
            }
            let edge = id_at(x - 1, y) != id
                || id_at(x + 1, y) != id
                || id_at(x, y - 1) != id
                || id_at(x, y + 1) != id;
            if edge {
                edges[(y as u32 * width + x as u32) as usize] = 1.0;
            }
        }
    }
    if blur_sigma > 0.0 {
        edges = gaussian_blur(&edges, width, height, blur_sigma);
        for v in &mut edges {
            *v = v.clamp(0.0, 1.0);
        }
    }
    SilhouetteImage {
        width,
        height,
        values: edges,
    }
}

/// Separable Gaussian with zero extension outside the image.
pub fn gaussian_blur(values: &[f64], width: u32, height: u32, sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return values.to_vec();
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let mut kernel = Vec::with_capacity((2 * radius + 1) as usize);
    let mut sum = 0.0;
    for i in -radius..=radius {
        let w = (-(i as f64).powi(2) / (2.0 * sigma * sigma)).exp();
        kernel.push(w);
        sum += w;
    }
    for w in &mut kernel {
        *w /= sum;
    }

    // scatter form, skipping zero sources: silhouette rasters are sparse
    // and the zero terms contribute nothing either way
    let (w, h) = (width as i64, height as i64);
    let mut horizontal = vec![0.0f64; values.len()];
    for y in 0..h {
        let row_base = (y * w) as usize;
        for x in 0..w {
            let v = values[row_base + x as usize];
            if v == 0.0 {
                continue;
            }
            let lo = (x - radius).max(0);
            let hi = (x + radius).min(w - 1);
            for tx in lo..=hi {
                horizontal[row_base + tx as usize] += v * kernel[(tx - x + radius) as usize];
            }
        }
    }
    let mut out = vec![0.0f64; values.len()];
    for y in 0..h {
        let row_base = (y * w) as usize;
        for x in 0..w {
            let v = horizontal[row_base + x as usize];
            if v == 0.0 {
                continue;
            }
            let lo = (y - radius).max(0);
            let hi = (y + radius).min(h - 1);
            for ty in lo..=hi {
                out[(ty * w + x) as usize] += v * kernel[(ty - y + radius) as usize];
            }
        }
    }
    out
}

/// Depth shader: white at the nearest covered surface fading to
/// `EPSILON_FLOOR` at the farthest; background stays exactly 0.
pub fn render_depth(
    pose: &PoseParams,
    model: &TeethModel,
    size: (u32, u32),
    visibility_window: f64,
) -> DepthImage {
    let pass = rasterize(pose, model, size, visibility_window);
    let mut d_near = f64::INFINITY;
    let mut d_far = f64::NEG_INFINITY;
    for &z in &pass.depth {
        if z.is_finite() {
            d_near = d_near.min(z);
            d_far = d_far.max(z);
        }
    }
    // a spread at rounding level counts as a single constant depth
    let degenerate_range = d_far - d_near <= 1e-9 * d_far.abs();
    let values = pass
        .depth
        .iter()
        .map(|&z| {
            if !z.is_finite() {
                0.0
            } else if degenerate_range {
                1.0
            } else {
                ((d_far - z) / (d_far - d_near)).max(EPSILON_FLOOR)
            }
        })
        .collect();
    DepthImage {
        width: size.0,
        height: size.1,
        values,
    }
}

/// The teeth mask is the support of the depth image.
pub fn depth_to_mask(depth: &DepthImage) -> MaskImage {
    MaskImage {
        width: depth.width,
        height: depth.height,
        values: depth.values.iter().map(|&v| (v > 0.0) as u8).collect(),
    }
}

/// Knobs shared by the stage renderer and the fitter.
#[derive(Debug, Clone, Copy)]
pub struct RenderOptions {
    pub size: (u32, u32),
    pub visibility_window: f64,
    pub blur_sigma: f64,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions {
            size: (256, 256),
            visibility_window: 0.5,
            blur_sigma: 0.0,
        }
    }
}

/// Renders silhouette and teeth mask with a shared pose, then zeroes both
/// outside the mouth label.
pub fn render_stage(
    pose: &PoseParams,
    model: &TeethModel,
    mouth_label: &MaskImage,
    options: &RenderOptions,
) -> Result<(SilhouetteImage, MaskImage)> {
    if (mouth_label.width, mouth_label.height) != options.size {
        return Err(Error::DimensionMismatch {
            expected: options.size,
            got: (mouth_label.width, mouth_label.height),
        });
    }
    let idmap = render_id_map(pose, model, options.size, options.visibility_window);
    let mut silhouette = id_map_to_silhouette(&idmap, options.blur_sigma);
    let depth = render_depth(pose, model, options.size, options.visibility_window);
    let mut mask = depth_to_mask(&depth);
    crop_silhouette(&mut silhouette, mouth_label);
    crop_mask(&mut mask, mouth_label);
    Ok((silhouette, mask))
}

/// Zeroes silhouette pixels outside the mouth label; inside is untouched.
pub fn crop_silhouette(silhouette: &mut SilhouetteImage, mouth_label: &MaskImage) {
    for (v, &m) in silhouette.values.iter_mut().zip(&mouth_label.values) {
        if m == 0 {
            *v = 0.0;
        }
    }
}

pub fn crop_mask(mask: &mut MaskImage, mouth_label: &MaskImage) {
    for (v, &m) in mask.values.iter_mut().zip(&mouth_label.values) {
        if m == 0 {
            *v = 0;
        }
    }
}

/// Zeroes depth pixels outside the mouth label.
pub fn crop_depth(depth: &mut DepthImage, mouth_label: &MaskImage) {
    for (v, &m) in depth.values.iter_mut().zip(&mouth_label.values) {
        if m == 0 {
            *v = 0.0;
        }
    }
}
