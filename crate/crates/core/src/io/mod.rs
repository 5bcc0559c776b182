//! File formats: NPY tensors, prediction bundles, PLY Gaussians and scene
//! descriptors.

pub mod bundle;
pub mod npy;
pub mod ply;
pub mod scene;
