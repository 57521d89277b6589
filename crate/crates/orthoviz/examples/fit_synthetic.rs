//! End-to-end pose recovery on a synthetic ground-truth case.
//!
//! Generates an arch, samples a perturbed camera pose, renders the target
//! silhouette, then recovers the pose from the default initial guess and
//! reports the errors against the ground truth.
//!
//! Usage: cargo run --release --example fit_synthetic [seed] [size]

use std::time::Instant;

use orthoviz::fit::{default_initial_pose, fit_pose, FitOptions};
use orthoviz::synth::{evaluate_recovery, make_synthetic_case, ArchSpec, PoseRanges};

fn main() {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    let size: u32 = args.next().and_then(|s| s.parse().ok()).unwrap_or(128);
    let threshold: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1e-3);
    let max_iterations: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(1000);

    let stacks: u32 = args.next().and_then(|s| s.parse().ok()).unwrap_or(6);
    let slices: u32 = args.next().and_then(|s| s.parse().ok()).unwrap_or(8);

    let spec = ArchSpec {
        seed,
        resolution: (stacks, slices),
        ..ArchSpec::default()
    };
    let ranges = PoseRanges::default();
    let case = make_synthetic_case(&spec, &ranges, (size, size), 0.5).expect("case generation");
    let stage0 = &case.series.stages[0];
    println!(
        "case: {} teeth, {} triangles, target {}x{}",
        stage0.teeth.len(),
        stage0.triangle_count(),
        size,
        size
    );

    let initial = default_initial_pose(stage0, (size, size)).unwrap();
    // optional schedule override, e.g. "8:300,3:300,1.5:400"
    let schedule = args.next().map(|s| {
        s.split(',')
            .map(|pair| {
                let (sigma, count) = pair.split_once(':').expect("sigma:count");
                (sigma.parse().unwrap(), count.parse().unwrap())
            })
            .collect::<Vec<(f64, usize)>>()
    });
    let mut options = FitOptions {
        loss_threshold: threshold,
        max_iterations,
        ..FitOptions::default()
    };
    if let Some(schedule) = schedule {
        options.blur_schedule = schedule;
    }
    if let Some(lr) = args.next().and_then(|s| s.parse().ok()) {
        options.learning_rate = lr;
    }
    let start = Instant::now();
    let result = fit_pose(stage0, &case.target_silhouette, &case.mouth_label, &initial, &options)
        .expect("fit");
    let elapsed = start.elapsed();

    println!(
        "fit: converged={} final_loss={:.3e} iterations={} in {:.1?}",
        result.converged, result.final_loss, result.iterations_run, elapsed
    );
    let diagonal = stage0.bounds().unwrap().diagonal();
    let report = evaluate_recovery(&result, &case.true_pose, diagonal);
    println!(
        "recovery: rot {:.3} deg, trans {:.4} rel, focal {:.4} rel, jaw {:.4} rel -> pass={}",
        report.rotation_error_deg,
        report.translation_error_rel,
        report.focal_error_rel,
        report.jaw_offset_error_rel,
        report.pass
    );
}
