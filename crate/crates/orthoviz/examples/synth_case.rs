//! Generates a synthetic ground-truth case and writes it to disk in the
//! same layout the CLI consumes: an OBJ series, the target silhouette,
//! the mouth label, and the true pose.
//!
//! Usage: cargo run --release --example synth_case [out_dir] [seed] [size]

use orthoviz::synth::{make_synthetic_case, write_case, ArchSpec, PoseRanges};

fn main() {
    let mut args = std::env::args().skip(1);
    let out_dir = args.next().unwrap_or_else(|| "synth_demo".to_string());
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    let size: u32 = args.next().and_then(|s| s.parse().ok()).unwrap_or(256);

    let spec = ArchSpec { seed, ..ArchSpec::default() };
    let case = make_synthetic_case(&spec, &PoseRanges::default(), (size, size), 0.5)
        .expect("case generation");
    std::fs::create_dir_all(&out_dir).expect("create output dir");
    write_case(std::path::Path::new(&out_dir), &case).expect("write case");

    let stage0 = &case.series.stages[0];
    println!(
        "wrote {}: {} stages, {} teeth, {} triangles, target {size}x{size}",
        out_dir,
        case.series.len(),
        stage0.teeth.len(),
        stage0.triangle_count(),
    );
    println!(
        "true pose: focal {:.2}, rotation {:?}, translation {:?}",
        case.true_pose.focal, case.true_pose.rotation, case.true_pose.translation
    );
}
