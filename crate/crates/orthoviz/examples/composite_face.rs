//! Mouth-region compositing: fuses a generated mouth crop into a face
//! image so that everything outside the mouth label stays bit-identical
//! to the original, then corrects the color statistics of the new mouth
//! content against the original crop.
//!
//! The face, crop, and masks are synthesized in-process so the example is
//! runnable standalone; outputs land in `composite_demo/`.

use std::path::Path;

use orthoviz::imaging::{color_transfer, extract_crop, fuse, paste_crop, CropRect, RgbImage};
use orthoviz::raster::MaskImage;

fn main() {
    let out = Path::new("composite_demo");
    std::fs::create_dir_all(out).expect("create output dir");

    // a synthetic "photo": vertical gradient with a dark mouth area
    let (fw, fh) = (320u32, 240u32);
    let mut face = RgbImage::filled(fw, fh, [0.0; 3]);
    for y in 0..fh {
        for x in 0..fw {
            let t = f64::from(y) / f64::from(fh - 1);
            face.pixels[(y * fw + x) as usize] = [0.8 - 0.3 * t, 0.6 - 0.2 * t, 0.5 - 0.1 * t];
        }
    }
    let rect = CropRect { x0: 96, y0: 80, side: 128 };
    for y in 0..rect.side {
        for x in 0..rect.side {
            if mouth_shape(x, y, rect.side) {
                face.pixels[((rect.y0 + y) * fw + rect.x0 + x) as usize] = [0.15, 0.05, 0.05];
            }
        }
    }
    face.save_png(&out.join("face.png")).expect("save face");

    // the "generated" crop: brighter teeth-like bands inside the mouth
    let mut generated = extract_crop(&face, &rect).expect("extract crop");
    let mut mouth_label = MaskImage::filled(rect.side, rect.side, 0);
    for y in 0..rect.side {
        for x in 0..rect.side {
            if mouth_shape(x, y, rect.side) {
                mouth_label.values[(y * rect.side + x) as usize] = 1;
                let band = if (x / 14) % 2 == 0 { 0.92 } else { 0.78 };
                generated.pixels[(y * rect.side + x) as usize] = [band, band, band * 0.96];
            }
        }
    }

    let original_crop = extract_crop(&face, &rect).expect("extract crop");
    let fused = fuse(&generated, &original_crop, &mouth_label).expect("fuse");
    let corrected =
        color_transfer(&fused, &original_crop, &mouth_label, &mouth_label).expect("transfer");
    // re-fuse so pixels outside the mouth stay bit-identical after the
    // color pass
    let fused = fuse(&corrected, &original_crop, &mouth_label).expect("fuse");
    let result = paste_crop(&face, &fused, &rect).expect("paste");
    result.save_png(&out.join("result.png")).expect("save result");

    let unchanged = face
        .pixels
        .iter()
        .zip(&result.pixels)
        .filter(|(a, b)| a == b)
        .count();
    println!(
        "wrote {}/face.png and {}/result.png ({unchanged}/{} pixels untouched)",
        out.display(),
        out.display(),
        face.pixels.len()
    );
}

/// A lens-shaped mouth region centered in the crop.
fn mouth_shape(x: u32, y: u32, side: u32) -> bool {
    let cx = f64::from(side - 1) / 2.0;
    let cy = f64::from(side - 1) / 2.0;
    let dx = (f64::from(x) - cx) / (f64::from(side) * 0.42);
    let dy = (f64::from(y) - cy) / (f64::from(side) * 0.22);
    dx * dx + dy * dy < 1.0
}
