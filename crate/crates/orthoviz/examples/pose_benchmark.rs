//! Seeded pose-recovery benchmark over many synthetic cases.
//!
//! Each case is solved with a coarse-to-fine fit at 192x192 (with one
//! wider-schedule retry if the loss stalls), then cross-validated against
//! the same scene rendered at 256x256: if the scaled pose does not hold
//! up at the higher resolution, the case is re-fit at 256x256 and the
//! pose with the lower 256-loss wins. The two resolutions stall on
//! different cases, so the ensemble is far more reliable than either
//! alone. Prints one line per seed and a final pass count.
//!
//! Usage: cargo run --release --example pose_benchmark [start_seed] [end_seed]

use std::time::Instant;

use orthoviz::fit::{
    default_initial_pose, fit_pose, masked_silhouette_loss, FitOptions, FitResult,
};
use orthoviz::synth::{evaluate_recovery, make_synthetic_case, ArchSpec, PoseRanges, SyntheticCase};

const COARSE: u32 = 192;
const FINE: u32 = 256;
/// Loss above which a schedule is considered stalled and retried.
const RETRY_LOSS: f64 = 1.5e-4;
/// Fine-resolution loss below which the coarse pose is accepted as-is.
const ACCEPT_CROSS_LOSS: f64 = 8e-5;

/// Coarse-to-fine fit with one wider-schedule retry on stall; both
/// attempts start from the default initial pose, the lower loss wins.
fn fit_with_retry(case: &SyntheticCase, size: u32) -> FitResult {
    let stage = &case.series.stages[0];
    let initial = default_initial_pose(stage, (size, size)).unwrap();
    // blur sigmas are in pixels, so the ladder scales with render size,
    // but the last rung stays at the 1.5 px the loss is judged at
    let k = f64::from(size) / f64::from(COARSE);
    let schedules: [Vec<(f64, usize)>; 2] = [
        vec![(5.0 * k, 300), (2.5 * k, 300), (1.5, 400)],
        vec![(8.0 * k, 200), (5.0 * k, 200), (2.5 * k, 300), (1.5, 300)],
    ];
    let mut result: Option<FitResult> = None;
    for schedule in schedules {
        let options = FitOptions {
            loss_threshold: 5e-5,
            blur_schedule: schedule,
            ..FitOptions::default()
        };
        let attempt = fit_pose(
            stage,
            &case.target_silhouette,
            &case.mouth_label,
            &initial,
            &options,
        )
        .expect("fit");
        let better = match &result {
            None => true,
            Some(best) => attempt.final_loss < best.final_loss,
        };
        if better {
            result = Some(attempt);
        }
        if result.as_ref().unwrap().final_loss < RETRY_LOSS {
            break;
        }
    }
    result.unwrap()
}

/// Solves a case at the coarse resolution and validates (or replaces)
/// the pose at the fine resolution. Returns the winning result with its
/// loss measured on the fine case, plus the fine case for scoring.
fn solve_case(seed: u64) -> (FitResult, SyntheticCase, String) {
    let spec = ArchSpec { seed, ..ArchSpec::default() };
    let ranges = PoseRanges::default();
    let coarse_case = make_synthetic_case(&spec, &ranges, (COARSE, COARSE), 0.5).expect("case");
    let fine_case = make_synthetic_case(&spec, &ranges, (FINE, FINE), 0.5).expect("case");
    let fine_stage = &fine_case.series.stages[0];

    let mut result = fit_with_retry(&coarse_case, COARSE);
    // the synthetic camera's focal scales with the render size; the rest
    // of the pose is in world units and carries over unchanged
    result.pose.focal *= f64::from(FINE) / f64::from(COARSE);
    let cross_loss = masked_silhouette_loss(
        &result.pose,
        fine_stage,
        &fine_case.target_silhouette,
        &fine_case.mouth_label,
        1.5,
        0.5,
    )
    .expect("cross loss");
    result.final_loss = cross_loss;
    result.converged = cross_loss < 1e-3;
    if cross_loss < ACCEPT_CROSS_LOSS {
        return (result, fine_case, format!("cross {cross_loss:.3e}"));
    }

    let refit = fit_with_retry(&fine_case, FINE);
    let note = format!(
        "cross {cross_loss:.3e}, refit {:.3e}",
        refit.final_loss
    );
    // in the band just above the accept bar, small loss differences do
    // not track pose quality; only a decisive improvement displaces the
    // coarse pose
    let winner = if refit.final_loss < 0.6 * cross_loss { refit } else { result };
    (winner, fine_case, note)
}

fn main() {
    let mut args = std::env::args().skip(1);
    let start_seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    let end_seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(start_seed + 9);

    let mut passes = 0u32;
    let mut total = 0u32;
    let sweep_start = Instant::now();
    for seed in start_seed..=end_seed {
        let case_start = Instant::now();
        let (result, case, note) = solve_case(seed);
        let stage = &case.series.stages[0];
        let diagonal = stage.bounds().unwrap().diagonal();
        let report = evaluate_recovery(&result, &case.true_pose, diagonal);
        let pass = report.pass && result.final_loss < 1e-3;
        println!(
            "seed {seed}: loss {:.3e} ({note}, {:.1?}) rot {:.3} deg, trans {:.4}, focal {:.4}, jaw {:.4} -> pass={pass}",
            result.final_loss,
            case_start.elapsed(),
            report.rotation_error_deg,
            report.translation_error_rel,
            report.focal_error_rel,
            report.jaw_offset_error_rel,
        );
        total += 1;
        if pass {
            passes += 1;
        }
    }
    println!("passed {passes}/{total} in {:.1?}", sweep_start.elapsed());
}
