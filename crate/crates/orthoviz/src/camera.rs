//! Pinhole camera model and pose parameterization.
//!
//! The camera looks along +z of its own frame, principal point at the
//! image center, square pixels. Rotation is axis-angle with magnitude
//! below pi so the ten pose scalars stay free of constraints during
//! gradient descent.

use nalgebra::{Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The ten optimized scalars: focal length (pixels), camera rotation
/// (axis-angle, radians), camera translation (model units) and the rigid
/// offset of the lower teeth towards the upper.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseParams {
    pub focal: f64,
    pub rotation: [f64; 3],
    pub translation: [f64; 3],
    pub jaw_offset: [f64; 3],
}

impl PoseParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.focal > 0.0) {
            return Err(Error::InvalidPose(format!("focal must be > 0, got {}", self.focal)));
        }
        let angle = Vector3::from(self.rotation).norm();
        if angle >= std::f64::consts::PI {
            return Err(Error::InvalidPose(format!(
                "rotation magnitude {angle} exceeds pi"
            )));
        }
        Ok(())
    }

    pub fn rotation_matrix(&self) -> Rotation3<f64> {
        let axis_angle = Vector3::from(self.rotation);
        let angle = axis_angle.norm();
        if angle == 0.0 {
            Rotation3::identity()
        } else {
            Rotation3::from_axis_angle(&Unit::new_normalize(axis_angle), angle)
        }
    }

    pub fn translation_vec(&self) -> Vector3<f64> {
        Vector3::from(self.translation)
    }

    pub fn jaw_offset_vec(&self) -> Vector3<f64> {
        Vector3::from(self.jaw_offset)
    }

    /// Flattened view used by the optimizer: [focal, rot, trans, jaw].
    pub fn to_vector(&self) -> [f64; 10] {
        let mut v = [0.0; 10];
        v[0] = self.focal;
        v[1..4].copy_from_slice(&self.rotation);
        v[4..7].copy_from_slice(&self.translation);
        v[7..10].copy_from_slice(&self.jaw_offset);
        v
    }

    pub fn from_vector(v: &[f64; 10]) -> PoseParams {
        PoseParams {
            focal: v[0],
            rotation: [v[1], v[2], v[3]],
            translation: [v[4], v[5], v[6]],
            jaw_offset: [v[7], v[8], v[9]],
        }
    }
}

/// One projected point: pixel coordinates plus camera-space depth.
/// Points at or behind the camera plane are flagged instead of erroring.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedPoint {
    pub u: f64,
    pub v: f64,
    pub z_cam: f64,
    pub behind_camera: bool,
}

/// Projects model-space points through the pinhole camera onto a WxH image.
pub fn project_points(
    pose: &PoseParams,
    points: &[Vector3<f64>],
    size: (u32, u32),
) -> Vec<ProjectedPoint> {
    let rotation = pose.rotation_matrix();
    let translation = pose.translation_vec();
    let cx = (size.0 as f64 - 1.0) / 2.0;
    let cy = (size.1 as f64 - 1.0) / 2.0;
    points
        .iter()
        .map(|p| {
            let cam = rotation * p + translation;
            let behind = cam.z <= 0.0;
            let z = if behind { cam.z.min(-f64::MIN_POSITIVE) } else { cam.z };
            ProjectedPoint {
                u: pose.focal * cam.x / z + cx,
                v: pose.focal * cam.y / z + cy,
                z_cam: cam.z,
                behind_camera: behind,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn test_pose() -> PoseParams {
        PoseParams {
            focal: 256.0,
            rotation: [0.0; 3],
            translation: [0.0, 0.0, 10.0],
            jaw_offset: [0.0; 3],
        }
    }

    #[test]
    fn on_axis_point_hits_principal_point() {
        let projected = project_points(&test_pose(), &[Vector3::zeros()], (256, 256));
        assert_relative_eq!(projected[0].u, 127.5);
        assert_relative_eq!(projected[0].v, 127.5);
        assert_relative_eq!(projected[0].z_cam, 10.0);
        assert!(!projected[0].behind_camera);
    }

    #[test]
    fn off_axis_point_matches_hand_computed_pinhole() {
        // u = 127.5 + 256 * (1/10) = 153.1
        let projected = project_points(&test_pose(), &[Vector3::new(1.0, 0.0, 0.0)], (256, 256));
        assert_relative_eq!(projected[0].u, 153.1, epsilon = 1e-12);
        assert_relative_eq!(projected[0].v, 127.5, epsilon = 1e-12);
    }

    #[test]
    fn point_behind_camera_is_flagged() {
        let pose = PoseParams {
            translation: [0.0, 0.0, -1.0],
            ..test_pose()
        };
        let projected = project_points(&pose, &[Vector3::zeros()], (256, 256));
        assert!(projected[0].behind_camera);
        assert_eq!(projected[0].z_cam, -1.0);
    }

    #[test]
    fn rotation_round_trips_through_matrix() {
        let pose = PoseParams {
            rotation: [0.1, -0.2, 0.3],
            ..test_pose()
        };
        let rotation = pose.rotation_matrix();
        let axis_angle = rotation.scaled_axis();
        assert_relative_eq!(axis_angle.x, 0.1, epsilon = 1e-12);
        assert_relative_eq!(axis_angle.y, -0.2, epsilon = 1e-12);
        assert_relative_eq!(axis_angle.z, 0.3, epsilon = 1e-12);
    }

    #[test]
    fn validation_rejects_bad_poses() {
        let mut pose = test_pose();
        assert!(pose.validate().is_ok());
        pose.focal = 0.0;
        assert!(pose.validate().is_err());
        pose.focal = 100.0;
        pose.rotation = [std::f64::consts::PI, 0.0, 0.0];
        assert!(pose.validate().is_err());
    }

    #[test]
    fn vector_round_trip() {
        let pose = PoseParams {
            focal: 300.0,
            rotation: [0.1, 0.2, 0.3],
            translation: [1.0, 2.0, 3.0],
            jaw_offset: [4.0, 5.0, 6.0],
        };
        assert_eq!(PoseParams::from_vector(&pose.to_vector()), pose);
    }
}
