//! Compares the silhouettes of two treatment stages rendered with the
//! same camera pose: silhouette distance (blurred mean-squared error) and
//! intersection-over-union inside the mouth label.
//!
//! Usage: cargo run --release --example metrics_compare [seed]

use orthoviz::pipeline::compute_metrics;
use orthoviz::raster::{render_stage, RenderOptions};
use orthoviz::synth::{make_synthetic_case, ArchSpec, PoseRanges};

fn main() {
    let seed: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(1);
    let spec = ArchSpec { seed, ..ArchSpec::default() };
    let case = make_synthetic_case(&spec, &PoseRanges::default(), (256, 256), 0.5)
        .expect("case generation");

    let options = RenderOptions::default();
    let mut silhouettes = Vec::new();
    for stage in &case.series.stages {
        let (silhouette, _mask) =
            render_stage(&case.true_pose, stage, &case.mouth_label, &options).expect("render");
        silhouettes.push(silhouette);
    }
    let report = compute_metrics(&silhouettes[0], &silhouettes[1], &case.mouth_label)
        .expect("metrics");
    println!(
        "stage 0 vs stage 1: silhouette distance {:.6e}, IoU {:.4}",
        report.silhouette_distance, report.iou
    );
    let self_report =
        compute_metrics(&silhouettes[0], &silhouettes[0], &case.mouth_label).expect("metrics");
    println!(
        "stage 0 vs itself:  silhouette distance {:.6e}, IoU {:.4}",
        self_report.silhouette_distance, self_report.iou
    );
}
