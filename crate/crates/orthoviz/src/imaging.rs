//! Compositing, crop bookkeeping and lαβ color transfer.
//!
//! Fusion is per-pixel selection against a binary mask, so pixels outside
//! the mouth label are bit-exact copies of the original. Color transfer
//! matches per-channel mean and standard deviation in the decorrelated
//! lαβ space of Reinhard-style statistics transfer.

use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::MaskImage;

/// RGB image with channel values in [0,1].
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    pub width: u32,
    pub height: u32,
    /// row-major, origin top-left
    pub pixels: Vec<[f64; 3]>,
}

/// lαβ image; channels are unbounded reals.
#[derive(Debug, Clone, PartialEq)]
pub struct LabImage {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<[f64; 3]>,
}

/// Square crop position inside a face image, the "system buffer" entry
/// that lets a processed mouth crop go back where it came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropRect {
    pub x0: u32,
    pub y0: u32,
    pub side: u32,
}

impl CropRect {
    pub fn check_inside(&self, width: u32, height: u32) -> Result<()> {
        if self.x0 + self.side > width || self.y0 + self.side > height {
            return Err(Error::RectOutOfBounds {
                x0: self.x0,
                y0: self.y0,
                side: self.side,
                width,
                height,
            });
        }
        Ok(())
    }
}

impl RgbImage {
    pub fn filled(width: u32, height: u32, color: [f64; 3]) -> RgbImage {
        RgbImage {
            width,
            height,
            pixels: vec![color; (width * height) as usize],
        }
    }

    pub fn at(&self, x: u32, y: u32) -> [f64; 3] {
        self.pixels[(y * self.width + x) as usize]
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::with_capacity(self.pixels.len() * 3);
        for p in &self.pixels {
            for c in p {
                bytes.push((c.clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
        let buffer = image::RgbImage::from_raw(self.width, self.height, bytes)
            .expect("pixel buffer matches dimensions");
        buffer.save(path).map_err(|e| Error::Png {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn load_png(path: &Path) -> Result<RgbImage> {
        let img = image::open(path)
            .map_err(|e| Error::Png {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?
            .into_rgb8();
        let (width, height) = img.dimensions();
        let pixels = img
            .pixels()
            .map(|p| {
                [
                    p[0] as f64 / 255.0,
                    p[1] as f64 / 255.0,
                    p[2] as f64 / 255.0,
                ]
            })
            .collect();
        Ok(RgbImage {
            width,
            height,
            pixels,
        })
    }

    fn check_same_dims(&self, other_w: u32, other_h: u32) -> Result<()> {
        if (self.width, self.height) != (other_w, other_h) {
            return Err(Error::DimensionMismatch {
                expected: (self.width, self.height),
                got: (other_w, other_h),
            });
        }
        Ok(())
    }
}

/// Fusion layer: generated content inside the mouth label, original
/// outside. Selection, not blending, so the outside region is bit-exact.
pub fn fuse(generated: &RgbImage, original: &RgbImage, mouth_label: &MaskImage) -> Result<RgbImage> {
    generated.check_same_dims(original.width, original.height)?;
    generated.check_same_dims(mouth_label.width, mouth_label.height)?;
    let pixels = generated
        .pixels
        .iter()
        .zip(&original.pixels)
        .zip(&mouth_label.values)
        .map(|((g, o), &m)| if m == 1 { *g } else { *o })
        .collect();
    Ok(RgbImage {
        width: generated.width,
        height: generated.height,
        pixels,
    })
}

/// Copies the square `rect` region out of a face image.
pub fn extract_crop(face: &RgbImage, rect: &CropRect) -> Result<RgbImage> {
    rect.check_inside(face.width, face.height)?;
    let mut pixels = Vec::with_capacity((rect.side * rect.side) as usize);
    for y in rect.y0..rect.y0 + rect.side {
        for x in rect.x0..rect.x0 + rect.side {
            pixels.push(face.at(x, y));
        }
    }
    Ok(RgbImage {
        width: rect.side,
        height: rect.side,
        pixels,
    })
}

/// Writes a crop back into the face at its saved position; everything
/// outside the rect stays bit-exact.
pub fn paste_crop(face: &RgbImage, crop: &RgbImage, rect: &CropRect) -> Result<RgbImage> {
    rect.check_inside(face.width, face.height)?;
    if (crop.width, crop.height) != (rect.side, rect.side) {
        return Err(Error::DimensionMismatch {
            expected: (rect.side, rect.side),
            got: (crop.width, crop.height),
        });
    }
    let mut out = face.clone();
    for y in 0..rect.side {
        for x in 0..rect.side {
            out.pixels[(((rect.y0 + y) * face.width) + rect.x0 + x) as usize] =
                crop.at(x, y);
        }
    }
    Ok(out)
}

// RGB -> LMS matrix of the statistics-transfer color space.
fn rgb_to_lms_matrix() -> Matrix3<f64> {
    Matrix3::new(
        0.3811, 0.5783, 0.0402, //
        0.1967, 0.7244, 0.0782, //
        0.0241, 0.1288, 0.8444,
    )
}

// log-LMS -> lab: diag(1/sqrt3, 1/sqrt6, 1/sqrt2) * [[1,1,1],[1,1,-2],[1,-1,0]]
fn lms_to_lab_matrix() -> Matrix3<f64> {
    let s3 = 1.0 / 3.0f64.sqrt();
    let s6 = 1.0 / 6.0f64.sqrt();
    let s2 = 1.0 / 2.0f64.sqrt();
    Matrix3::new(
        s3, s3, s3, //
        s6, s6, -2.0 * s6, //
        s2, -s2, 0.0,
    )
}

const LOG_CLAMP: f64 = 1e-4;

/// RGB to lαβ: clamp, LMS transform, log10, decorrelating rotation.
pub fn rgb_to_lab(img: &RgbImage) -> LabImage {
    let m_lms = rgb_to_lms_matrix();
    let m_lab = lms_to_lab_matrix();
    let pixels = img
        .pixels
        .iter()
        .map(|p| {
            let rgb = Vector3::new(
                p[0].clamp(LOG_CLAMP, 1.0),
                p[1].clamp(LOG_CLAMP, 1.0),
                p[2].clamp(LOG_CLAMP, 1.0),
            );
            let lms = m_lms * rgb;
            let log_lms = Vector3::new(lms.x.log10(), lms.y.log10(), lms.z.log10());
            let lab = m_lab * log_lms;
            [lab.x, lab.y, lab.z]
        })
        .collect();
    LabImage {
        width: img.width,
        height: img.height,
        pixels,
    }
}

/// Inverse of [`rgb_to_lab`]; output clamped to [0,1].
pub fn lab_to_rgb(img: &LabImage) -> RgbImage {
    let m_lms_inv = rgb_to_lms_matrix().try_inverse().expect("matrix invertible");
    let m_lab_inv = lms_to_lab_matrix().try_inverse().expect("matrix invertible");
    let pixels = img
        .pixels
        .iter()
        .map(|p| {
            let lab = Vector3::new(p[0], p[1], p[2]);
            let log_lms = m_lab_inv * lab;
            let lms = Vector3::new(
                10f64.powf(log_lms.x),
                10f64.powf(log_lms.y),
                10f64.powf(log_lms.z),
            );
            let rgb = m_lms_inv * lms;
            [
                rgb.x.clamp(0.0, 1.0),
                rgb.y.clamp(0.0, 1.0),
                rgb.z.clamp(0.0, 1.0),
            ]
        })
        .collect();
    RgbImage {
        width: img.width,
        height: img.height,
        pixels,
    }
}

const SIGMA_GUARD: f64 = 1e-6;

/// Per-channel lαβ moment transfer: pixels inside `output_region` take on
/// the reference region's mean and standard deviation; everything else is
/// untouched bit-exactly. Near-constant channels get a mean shift only.
pub fn color_transfer(
    output_img: &RgbImage,
    reference_img: &RgbImage,
    output_region: &MaskImage,
    reference_region: &MaskImage,
) -> Result<RgbImage> {
    output_img.check_same_dims(output_region.width, output_region.height)?;
    reference_img.check_same_dims(reference_region.width, reference_region.height)?;
    if output_region.count_ones() == 0 || reference_region.count_ones() == 0 {
        return Err(Error::EmptyRegion);
    }

    let out_lab = rgb_to_lab(output_img);
    let ref_lab = rgb_to_lab(reference_img);
    let (mu_out, sigma_out) = region_moments(&out_lab, output_region);
    let (mu_ref, sigma_ref) = region_moments(&ref_lab, reference_region);

    let mut transferred = out_lab.clone();
    for (pixel, &m) in transferred.pixels.iter_mut().zip(&output_region.values) {
        if m != 1 {
            continue;
        }
        for c in 0..3 {
            let scale = if sigma_out[c] < SIGMA_GUARD {
                1.0
            } else {
                sigma_ref[c] / sigma_out[c]
            };
            pixel[c] = (pixel[c] - mu_out[c]) * scale + mu_ref[c];
        }
    }
    let rgb = lab_to_rgb(&transferred);

    // outside the region the output must be the input, bit for bit
    let pixels = rgb
        .pixels
        .iter()
        .zip(&output_img.pixels)
        .zip(&output_region.values)
        .map(|((new, old), &m)| if m == 1 { *new } else { *old })
        .collect();
    Ok(RgbImage {
        width: rgb.width,
        height: rgb.height,
        pixels,
    })
}

/// Mean and (population) standard deviation per lαβ channel over a region.
pub fn region_moments(img: &LabImage, region: &MaskImage) -> ([f64; 3], [f64; 3]) {
    let mut sum = [0.0; 3];
    let mut count = 0usize;
    for (p, &m) in img.pixels.iter().zip(&region.values) {
        if m == 1 {
            for c in 0..3 {
                sum[c] += p[c];
            }
            count += 1;
        }
    }
    let n = count.max(1) as f64;
    let mean = [sum[0] / n, sum[1] / n, sum[2] / n];
    let mut var = [0.0; 3];
    for (p, &m) in img.pixels.iter().zip(&region.values) {
        if m == 1 {
            for c in 0..3 {
                let d = p[c] - mean[c];
                var[c] += d * d;
            }
        }
    }
    let sigma = [
        (var[0] / n).sqrt(),
        (var[1] / n).sqrt(),
        (var[2] / n).sqrt(),
    ];
    (mean, sigma)
}
