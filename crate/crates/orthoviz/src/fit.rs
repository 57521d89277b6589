//! Pose recovery: minimize the masked L2 silhouette loss over the ten
//! pose scalars with Adam.
//!
//! Gradients come from central finite differences (20 renders per
//! iteration). The optimizer works in a normalized parameter space
//! (focal relative to its initial value, translations relative to the
//! scene diagonal) so one learning rate serves all groups, and a
//! coarse-to-fine Gaussian blur schedule widens the loss basin the way a
//! soft rasterizer would.

use serde::{Deserialize, Serialize};

use crate::camera::PoseParams;
use crate::error::{Error, Result};
use crate::mesh::TeethModel;
use crate::raster::{
    gaussian_blur, id_map_to_silhouette, render_id_map, MaskImage, SilhouetteImage,
};

/// Default blur used by [`silhouette_distance`].
pub const DISTANCE_SIGMA: f64 = 1.5;

/// Per-parameter-group relative step sizes for finite differences.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FdSteps {
    /// Focal step as a fraction of the current focal length.
    pub focal_rel: f64,
    /// Rotation step in radians.
    pub rotation_abs: f64,
    /// Translation and jaw-offset step as a fraction of the scene diagonal.
    pub translation_rel: f64,
}

impl Default for FdSteps {
    fn default() -> Self {
        FdSteps {
            focal_rel: 1e-2,
            rotation_abs: 1e-3,
            translation_rel: 1e-3,
        }
    }
}

impl FdSteps {
    /// Absolute step per parameter in [focal, rot(3), trans(3), jaw(3)]
    /// order.
    pub fn absolute(&self, pose: &PoseParams, scene_diagonal: f64) -> [f64; 10] {
        let mut h = [0.0; 10];
        h[0] = self.focal_rel * pose.focal.abs();
        for v in &mut h[1..4] {
            *v = self.rotation_abs;
        }
        for v in &mut h[4..10] {
            *v = self.translation_rel * scene_diagonal;
        }
        h
    }
}

/// Optimizer configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitOptions {
    pub learning_rate: f64,
    pub max_iterations: usize,
    /// Convergence threshold on the mean-squared per-pixel loss inside
    /// the mouth label, at the finest blur.
    pub loss_threshold: f64,
    /// (sigma, iteration count) pairs, coarse to fine.
    pub blur_schedule: Vec<(f64, usize)>,
    pub fd_steps: FdSteps,
    pub visibility_window: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            learning_rate: 0.001,
            max_iterations: 1000,
            loss_threshold: 1e-3,
            blur_schedule: vec![(4.0, 300), (1.5, 700)],
            fd_steps: FdSteps::default(),
            visibility_window: 0.5,
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be > 0".into()));
        }
        if self.max_iterations < 1 {
            return Err(Error::Config("max_iterations must be >= 1".into()));
        }
        if self.blur_schedule.is_empty() {
            return Err(Error::Config("blur_schedule must be non-empty".into()));
        }
        if self.blur_schedule.iter().any(|&(s, _)| s < 0.0) {
            return Err(Error::Config("blur sigmas must be >= 0".into()));
        }
        Ok(())
    }
}

/// Outcome of one fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub pose: PoseParams,
    pub final_loss: f64,
    pub loss_trace: Vec<f64>,
    pub iterations_run: usize,
    pub converged: bool,
}

/// Mean-squared silhouette difference inside the mouth label, both
/// silhouettes blurred with `sigma` before masking.
pub fn masked_silhouette_loss(
    pose: &PoseParams,
    model: &TeethModel,
    target: &SilhouetteImage,
    mouth_label: &MaskImage,
    sigma: f64,
    visibility_window: f64,
) -> Result<f64> {
    check_dims(target, mouth_label)?;
    let mask_count = mouth_label.count_ones();
    if mask_count == 0 {
        return Err(Error::EmptyRegion);
    }
    let size = (target.width, target.height);
    let idmap = render_id_map(pose, model, size, visibility_window);
    let rendered = id_map_to_silhouette(&idmap, 0.0);
    let rendered = gaussian_blur(&rendered.values, size.0, size.1, sigma);
    let blurred_target = gaussian_blur(&target.values, size.0, size.1, sigma);
    Ok(masked_mse(&rendered, &blurred_target, mouth_label, mask_count))
}

fn masked_mse(a: &[f64], b: &[f64], mask: &MaskImage, mask_count: usize) -> f64 {
    let mut sum = 0.0;
    for ((&x, &y), &m) in a.iter().zip(b).zip(&mask.values) {
        if m == 1 {
            let d = x - y;
            sum += d * d;
        }
    }
    sum / mask_count as f64
}

fn check_dims(a: &SilhouetteImage, mask: &MaskImage) -> Result<()> {
    if (a.width, a.height) != (mask.width, mask.height) {
        return Err(Error::DimensionMismatch {
            expected: (a.width, a.height),
            got: (mask.width, mask.height),
        });
    }
    Ok(())
}

/// Central finite-difference gradient of an arbitrary scalar function of
/// the pose. `steps` holds the absolute step per parameter.
pub fn fd_gradient<F>(pose: &PoseParams, steps: &[f64; 10], loss: F) -> [f64; 10]
where
    F: Fn(&PoseParams) -> f64,
{
    let center = pose.to_vector();
    let mut gradient = [0.0; 10];
    for i in 0..10 {
        let h = steps[i];
        if h == 0.0 {
            continue;
        }
        let mut plus = center;
        plus[i] += h;
        let mut minus = center;
        minus[i] -= h;
        let lp = loss(&PoseParams::from_vector(&plus));
        let lm = loss(&PoseParams::from_vector(&minus));
        gradient[i] = (lp - lm) / (2.0 * h);
    }
    gradient
}

/// Mean-squared difference of two silhouettes over a region after a
/// sigma=1.5 blur. Symmetric in its image arguments.
pub fn silhouette_distance(
    a: &SilhouetteImage,
    b: &SilhouetteImage,
    region: &MaskImage,
) -> Result<f64> {
    silhouette_distance_with_sigma(a, b, region, DISTANCE_SIGMA)
}

pub fn silhouette_distance_with_sigma(
    a: &SilhouetteImage,
    b: &SilhouetteImage,
    region: &MaskImage,
    sigma: f64,
) -> Result<f64> {
    check_dims(a, region)?;
    check_dims(b, region)?;
    let count = region.count_ones();
    if count == 0 {
        return Err(Error::EmptyRegion);
    }
    let ba = gaussian_blur(&a.values, a.width, a.height, sigma);
    let bb = gaussian_blur(&b.values, b.width, b.height, sigma);
    Ok(masked_mse(&ba, &bb, region, count))
}

struct Adam {
    m: [f64; 10],
    v: [f64; 10],
    step: usize,
    lr: f64,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(lr: f64) -> Adam {
        Adam {
            m: [0.0; 10],
            v: [0.0; 10],
            step: 0,
            lr,
        }
    }

    fn update(&mut self, params: &mut [f64; 10], gradient: &[f64; 10]) {
        self.step += 1;
        let bc1 = 1.0 - Self::BETA1.powi(self.step as i32);
        let bc2 = 1.0 - Self::BETA2.powi(self.step as i32);
        for i in 0..10 {
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * gradient[i];
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * gradient[i] * gradient[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + Self::EPS);
        }
    }
}

/// Wraps the axis-angle magnitude into (-pi, pi].
fn canonicalize(pose: &mut PoseParams) {
    let r = nalgebra::Vector3::from(pose.rotation);
    let angle = r.norm();
    if angle > std::f64::consts::PI {
        let wrapped = angle - 2.0 * std::f64::consts::PI * (angle / (2.0 * std::f64::consts::PI)).round();
        let scaled = r * (wrapped / angle);
        pose.rotation = [scaled.x, scaled.y, scaled.z];
    }
}

/// Runs Adam over the blur schedule, stopping early once the loss at the
/// finest sigma drops below the threshold. Returns the best-seen pose
/// (judged at the finest sigma), never a worse-than-initial one.
pub fn fit_pose(
    model: &TeethModel,
    target: &SilhouetteImage,
    mouth_label: &MaskImage,
    initial_pose: &PoseParams,
    options: &FitOptions,
) -> Result<FitResult> {
    initial_pose.validate()?;
    options.validate()?;
    check_dims(target, mouth_label)?;
    let mask_count = mouth_label.count_ones();
    if mask_count == 0 {
        return Err(Error::EmptyRegion);
    }

    let size = (target.width, target.height);
    let diagonal = model.bounds()?.diagonal();
    let fine_sigma = options.blur_schedule.last().unwrap().0;

    // optimizer works on normalized parameters: theta = u * scale
    let mut scale = [1.0f64; 10];
    scale[0] = initial_pose.focal;
    for s in &mut scale[4..10] {
        *s = diagonal;
    }
    let to_pose = |u: &[f64; 10]| {
        let mut theta = [0.0; 10];
        for i in 0..10 {
            theta[i] = u[i] * scale[i];
        }
        let mut pose = PoseParams::from_vector(&theta);
        canonicalize(&mut pose);
        pose
    };

    // blurred targets, computed once per sigma
    let blur_target = |sigma: f64| gaussian_blur(&target.values, size.0, size.1, sigma);
    let fine_target = blur_target(fine_sigma);

    let render = |pose: &PoseParams| -> Vec<f64> {
        let idmap = render_id_map(pose, model, size, options.visibility_window);
        id_map_to_silhouette(&idmap, 0.0).values
    };
    let loss_against = |rendered: &[f64], sigma: f64, blurred_target: &[f64]| -> f64 {
        let blurred = gaussian_blur(rendered, size.0, size.1, sigma);
        masked_mse(&blurred, blurred_target, mouth_label, mask_count)
    };

    let mut u = {
        let theta = initial_pose.to_vector();
        let mut u = [0.0; 10];
        for i in 0..10 {
            u[i] = theta[i] / scale[i];
        }
        u
    };
    let mut adam = Adam::new(options.learning_rate);
    let mut trace = Vec::new();
    let mut best_pose = *initial_pose;
    let mut best_fine = f64::INFINITY;
    let mut converged = false;

    // expand the schedule, truncated to max_iterations
    let mut sigmas = Vec::with_capacity(options.max_iterations);
    'expand: for &(sigma, count) in &options.blur_schedule {
        for _ in 0..count {
            if sigmas.len() >= options.max_iterations {
                break 'expand;
            }
            sigmas.push(sigma);
        }
    }
    while sigmas.len() < options.max_iterations {
        sigmas.push(fine_sigma);
    }

    let mut current_sigma = f64::NAN;
    let mut current_target: Vec<f64> = Vec::new();
    for (iteration, &sigma) in sigmas.iter().enumerate() {
        if sigma != current_sigma {
            current_sigma = sigma;
            current_target = if sigma == fine_sigma {
                fine_target.clone()
            } else {
                blur_target(sigma)
            };
        }
        let pose = to_pose(&u);
        let rendered = render(&pose);
        let loss = loss_against(&rendered, sigma, &current_target);
        let fine_loss = if sigma == fine_sigma {
            loss
        } else {
            loss_against(&rendered, fine_sigma, &fine_target)
        };
        if !loss.is_finite() || !fine_loss.is_finite() {
            return Err(Error::NonFiniteLoss(iteration));
        }
        trace.push(loss);
        if fine_loss < best_fine {
            best_fine = fine_loss;
            best_pose = pose;
        }
        if fine_loss < options.loss_threshold {
            converged = true;
            break;
        }

        // central differences in normalized space; the scale division
        // turns the configured relative steps into u-space steps
        let mut steps = options.fd_steps.absolute(&pose, diagonal);
        for i in 0..10 {
            steps[i] /= scale[i];
        }
        let sigma_now = sigma;
        let target_now = &current_target;
        let gradient = fd_gradient_normalized(&u, &steps, |cand| {
            let pose = to_pose(cand);
            let rendered = render(&pose);
            loss_against(&rendered, sigma_now, target_now)
        });
        adam.update(&mut u, &gradient);
    }

    // the initial pose itself was the first evaluated iterate, so
    // final_loss can never exceed the loss at initial_pose
    let final_loss = best_fine;
    Ok(FitResult {
        pose: best_pose,
        final_loss,
        iterations_run: trace.len(),
        loss_trace: trace,
        converged: converged || final_loss < options.loss_threshold,
    })
}

fn fd_gradient_normalized<F>(u: &[f64; 10], steps: &[f64; 10], loss: F) -> [f64; 10]
where
    F: Fn(&[f64; 10]) -> f64,
{
    let mut gradient = [0.0; 10];
    for i in 0..10 {
        let h = steps[i];
        if h == 0.0 {
            continue;
        }
        let mut plus = *u;
        plus[i] += h;
        let mut minus = *u;
        minus[i] -= h;
        gradient[i] = (loss(&plus) - loss(&minus)) / (2.0 * h);
    }
    gradient
}

/// Default starting pose: camera on the +z axis, identity rotation, the
/// model framed at 80% of the image height, zero jaw offset.
pub fn default_initial_pose(model: &TeethModel, size: (u32, u32)) -> Result<PoseParams> {
    let bounds = model.bounds()?;
    let center = bounds.center();
    let extent = bounds.size().x.max(bounds.size().y).max(1e-9);
    let focal = size.1 as f64;
    let distance = focal * extent / (0.8 * size.1 as f64);
    Ok(PoseParams {
        focal,
        rotation: [0.0; 3],
        translation: [-center.x, -center.y, distance - center.z],
        jaw_offset: [0.0; 3],
    })
}
