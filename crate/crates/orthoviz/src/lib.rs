//! Orthodontic treatment visualization support library.
//!
//! Given a patient's staged 3D teeth models and a segmented photo of
//! their smile, this crate recovers the camera/jaw pose aligning model
//! and photo, renders consistent per-stage silhouette, mask and depth
//! modalities, and handles the compositing and color-correction steps
//! that put a generated mouth image back into the face photograph.
//!
//! The pieces:
//!
//! - [`mesh`] — per-tooth labeled meshes, treatment-stage series, obj I/O
//! - [`camera`] — pinhole projection and the ten-parameter pose
//! - [`raster`] — tooth-ID and depth shaders over a z-buffered rasterizer
//! - [`fit`] — masked L2 silhouette loss minimized with Adam over
//!   finite-difference gradients
//! - [`imaging`] — mask fusion, crop bookkeeping, lαβ color transfer
//! - [`synth`] — synthetic arches and ground-truth cases for verification
//! - [`pipeline`] — the file-level jobs behind the CLI subcommands
//!
//! See the crate examples for runnable end-to-end walkthroughs of each
//! capability.

pub mod camera;
pub mod error;
pub mod fit;
pub mod imaging;
pub mod mesh;
pub mod pipeline;
pub mod raster;
pub mod synth;

pub use camera::{project_points, PoseParams};
pub use error::{Error, Result};
pub use fit::{fit_pose, masked_silhouette_loss, silhouette_distance, FitOptions, FitResult};
pub use imaging::{color_transfer, fuse, paste_crop, rgb_to_lab, lab_to_rgb, CropRect, RgbImage};
pub use mesh::{load_treatment_series, TeethModel, Tooth, TreatmentSeries};
pub use raster::{
    depth_to_mask, id_map_to_silhouette, render_depth, render_id_map, render_stage, DepthImage,
    IdMap, MaskImage, SilhouetteImage,
};
pub use synth::{evaluate_recovery, make_arch_model, make_synthetic_case, ArchSpec, PoseRanges};
