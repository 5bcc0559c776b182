//! Object-centric scene assembly from dense per-pixel prediction maps.
//!
//! The crate turns a [`maps::DenseMaps`] bundle (depth, text-space
//! embeddings, NOCS coordinates and per-pixel Gaussian parameters) into
//! discovered object instances with similarity poses and canonical Gaussian
//! models, and provides the evaluation metrics, training objectives and a
//! ray-cast synthetic oracle used to validate every stage.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod depth;
pub mod error;
pub mod eval3d;
pub mod gaussians;
pub mod geometry;
pub mod io;
pub mod maps;
pub mod nocs;
pub mod objectives;
pub mod pipeline;
pub mod pose;
pub mod render;
pub mod rng;
pub mod semantics;
pub mod synth;

pub use error::{Error, Result};
pub use gaussians::{GaussianPrimitive, GaussianSet};
pub use geometry::{CameraIntrinsics, Extrinsics, Sim3, Vec3};
pub use maps::DenseMaps;
