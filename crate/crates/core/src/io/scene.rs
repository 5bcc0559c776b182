//! `scene.json`: discovered instances with their poses.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Sim3};

pub const SCENE_FILE: &str = "scene.json";
pub const OBJECTS_DIR: &str = "objects";

pub fn object_file(index: usize) -> String {
    format!("obj_{index}.ply")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub label_id: u32,
    pub label_name: String,
    pub sim3: Sim3,
    /// Pixels of the semantic component the instance was split from.
    pub pixel_count: usize,
    pub inlier_count: usize,
    /// Relative path of the canonical Gaussian file.
    pub gaussians: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneDescriptor {
    pub instances: Vec<InstanceRecord>,
    pub camera: CameraIntrinsics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
}

impl SceneDescriptor {
    pub fn validate(&self) -> Result<()> {
        for (i, inst) in self.instances.iter().enumerate() {
            if inst.inlier_count > inst.pixel_count {
                return Err(Error::Invariant(format!(
                    "instance {i}: inlier count {} exceeds pixel count {}",
                    inst.inlier_count, inst.pixel_count
                )));
            }
        }
        Ok(())
    }
}

pub fn write_scene(scene: &SceneDescriptor, path: &Path) -> Result<()> {
    scene.validate()?;
    let mut text = serde_json::to_string_pretty(scene).map_err(|e| Error::format(path, e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_scene(path: &Path) -> Result<SceneDescriptor> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let scene: SceneDescriptor = serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
    scene.validate()?;
    Ok(scene)
}
