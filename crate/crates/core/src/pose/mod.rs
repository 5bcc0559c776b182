//! Similarity registration between NOCS coordinates and back-projected
//! camera points.

mod eval;
mod ransac;
mod split;
mod umeyama;

pub use eval::{eval_pose, rotation_error_deg, translation_error, PoseEvalReport};
pub use ransac::{ransac_sim3, RansacConfig, RansacResult};
pub use split::{correspondences, split_instances, SplitInstance};
pub use umeyama::{alignment_residual, umeyama_sim3};
