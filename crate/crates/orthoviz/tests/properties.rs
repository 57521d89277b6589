//! Randomized invariants of the imaging and mesh layers.

use nalgebra::Vector3;
use proptest::prelude::*;

use orthoviz::imaging::{fuse, lab_to_rgb, rgb_to_lab, RgbImage};
use orthoviz::mesh::{write_stage_obj, load_stage_obj, TeethModel, Tooth};
use orthoviz::raster::{gaussian_blur, MaskImage};

fn rgb_image(width: u32, height: u32) -> impl Strategy<Value = RgbImage> {
    proptest::collection::vec(
        [0.0f64..=1.0, 0.0f64..=1.0, 0.0f64..=1.0],
        (width * height) as usize,
    )
    .prop_map(move |pixels| RgbImage {
        width,
        height,
        pixels,
    })
}

fn mask_image(width: u32, height: u32) -> impl Strategy<Value = MaskImage> {
    proptest::collection::vec(0u8..=1, (width * height) as usize).prop_map(move |values| {
        MaskImage {
            width,
            height,
            values,
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fusion_is_idempotent_and_preserves_background(
        generated in rgb_image(8, 8),
        original in rgb_image(8, 8),
        mask in mask_image(8, 8),
    ) {
        let fused = fuse(&generated, &original, &mask).unwrap();
        for i in 0..64 {
            if mask.values[i] == 0 {
                prop_assert_eq!(fused.pixels[i], original.pixels[i]);
            } else {
                prop_assert_eq!(fused.pixels[i], generated.pixels[i]);
            }
        }
        let again = fuse(&fused, &original, &mask).unwrap();
        prop_assert_eq!(again.pixels, fused.pixels);
    }

    #[test]
    fn lab_round_trip_is_tight(img in rgb_image(4, 4)) {
        // stay above the log clamp; below it the map is not invertible
        let img = RgbImage {
            width: img.width,
            height: img.height,
            pixels: img
                .pixels
                .iter()
                .map(|p| [
                    p[0].max(1.0 / 255.0),
                    p[1].max(1.0 / 255.0),
                    p[2].max(1.0 / 255.0),
                ])
                .collect(),
        };
        let back = lab_to_rgb(&rgb_to_lab(&img));
        for (a, b) in img.pixels.iter().zip(&back.pixels) {
            for c in 0..3 {
                prop_assert!((a[c] - b[c]).abs() <= 1e-4, "{} vs {}", a[c], b[c]);
            }
        }
    }

    #[test]
    fn blur_preserves_interior_mass_and_positivity(
        values in proptest::collection::vec(0.0f64..=1.0, 144),
        sigma in 0.3f64..2.0,
    ) {
        let blurred = gaussian_blur(&values, 12, 12, sigma);
        prop_assert!(blurred.iter().all(|&v| v >= 0.0));
        // zero extension only removes mass, never adds it
        let before: f64 = values.iter().sum();
        let after: f64 = blurred.iter().sum();
        prop_assert!(after <= before + 1e-9);
    }

    #[test]
    fn obj_round_trip_is_exact(
        coords in proptest::collection::vec(-10.0f64..10.0, 18),
    ) {
        let make_tooth = |id: u16, chunk: &[f64]| {
            let vertices = chunk
                .chunks(3)
                .map(|c| Vector3::new(c[0], c[1], c[2]))
                .collect::<Vec<_>>();
            Tooth::new(id, vertices, vec![[0, 1, 2]]).unwrap()
        };
        let model = TeethModel::new(
            vec![make_tooth(11, &coords[..9]), make_tooth(31, &coords[9..])],
            0,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stage_000.obj");
        write_stage_obj(&path, &model).unwrap();
        let loaded = load_stage_obj(&path, 0).unwrap();
        prop_assert_eq!(loaded.teeth.len(), 2);
        for (a, b) in model.teeth.iter().zip(&loaded.teeth) {
            prop_assert_eq!(a.id, b.id);
            prop_assert_eq!(&a.vertices, &b.vertices);
            prop_assert_eq!(&a.triangles, &b.triangles);
        }
    }
}
