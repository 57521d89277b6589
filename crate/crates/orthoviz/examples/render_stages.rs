//! Renders silhouette, teeth-mask and depth images for every treatment
//! stage with one shared camera pose, cropped by the mouth label.
//!
//! With no arguments a synthetic case is generated first, so the example
//! is runnable standalone; pass a case directory (as written by
//! `synth_case` or the `synth` subcommand) to render your own.
//!
//! Usage: cargo run --release --example render_stages [case_dir] [out_dir]

use std::path::PathBuf;

use orthoviz::pipeline::{run_render, run_synth, RenderJob, SynthJob};
use orthoviz::synth::{ArchSpec, PoseRanges};

fn main() {
    let mut args = std::env::args().skip(1);
    let case_dir = match args.next() {
        Some(dir) => PathBuf::from(dir),
        None => {
            let dir = PathBuf::from("render_demo_case");
            run_synth(&SynthJob {
                spec: ArchSpec::default(),
                ranges: PoseRanges::default(),
                size: 256,
                visibility_window: 0.5,
                output_dir: dir.clone(),
            })
            .expect("synthesize demo case");
            println!("generated demo case in {}", dir.display());
            dir
        }
    };
    let out_dir = PathBuf::from(args.next().unwrap_or_else(|| "render_demo_out".to_string()));

    // render at the mouth label's resolution; the true pose stands in
    // for a fitted one, any fit.json works too
    let label = orthoviz::raster::MaskImage::load_png(&case_dir.join("mouth_label.png"))
        .expect("load mouth label");
    let job = RenderJob {
        series_dir: case_dir.join("series"),
        pose_file: case_dir.join("true_pose.json"),
        mouth_label: case_dir.join("mouth_label.png"),
        output_dir: out_dir.clone(),
        size: label.width,
        visibility_window: 0.5,
    };
    let written = run_render(&job).expect("render");
    println!("wrote {} files to {}", written.len(), out_dir.display());
    for path in written {
        println!("  {}", path.display());
    }
}
