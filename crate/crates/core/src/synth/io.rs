//! Ground-truth directory: the scene description plus per-pixel depth,
//! instance and class maps.

use std::fs;
use std::path::Path;

use super::{OracleFrame, SceneOracle};
use crate::error::{Error, Result};
use crate::io::npy::{self, NpyArray};

pub const GT_DIR: &str = "gt";
pub const ORACLE_FILE: &str = "oracle.json";
pub const GT_DEPTH_FILE: &str = "depth.npy";
pub const GT_INSTANCE_FILE: &str = "instance.npy";
pub const GT_CLASS_FILE: &str = "class.npy";
/// Instance-map value of background pixels.
pub const NO_INSTANCE: u16 = u16::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub scene: SceneOracle,
    pub depth: Vec<f32>,
    pub instance: Vec<u16>,
    pub class: Vec<u16>,
}

impl GroundTruth {
    pub fn new(scene: &SceneOracle, frame: &OracleFrame) -> Result<Self> {
        if scene.objects.len() >= NO_INSTANCE as usize {
            return Err(Error::Domain(format!("too many objects ({})", scene.objects.len())));
        }
        Ok(Self {
            scene: scene.clone(),
            depth: frame.depth.iter().map(|&d| d as f32).collect(),
            instance: frame.instance.iter().map(|i| i.map_or(NO_INSTANCE, |j| j as u16)).collect(),
            class: frame.class.iter().map(|&c| c as u16).collect(),
        })
    }

    pub fn instance_pixels(&self, j: usize) -> Vec<usize> {
        (0..self.instance.len()).filter(|&p| self.instance[p] as usize == j).collect()
    }
}

/// Writes `dir/oracle.json` and the three maps.
pub fn write_ground_truth(dir: &Path, gt: &GroundTruth) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(ORACLE_FILE);
    let mut text = serde_json::to_string_pretty(&gt.scene).map_err(|e| Error::format(&path, e.to_string()))?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    let shape = vec![gt.scene.intrinsics.height, gt.scene.intrinsics.width];
    npy::write(&dir.join(GT_DEPTH_FILE), &NpyArray::f32(shape.clone(), gt.depth.clone()))?;
    npy::write(&dir.join(GT_INSTANCE_FILE), &NpyArray::u16(shape.clone(), gt.instance.clone()))?;
    npy::write(&dir.join(GT_CLASS_FILE), &NpyArray::u16(shape, gt.class.clone()))
}

pub fn read_ground_truth(dir: &Path) -> Result<GroundTruth> {
    let path = dir.join(ORACLE_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let scene: SceneOracle = serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))?;
    let n = scene.intrinsics.pixel_count();
    let load = |name: &str| -> Result<NpyArray> {
        let p = dir.join(name);
        let a = npy::read(&p)?;
        if a.shape != [scene.intrinsics.height, scene.intrinsics.width] {
            return Err(Error::format(&p, format!("expected shape {:?}, found {:?}", [scene.intrinsics.height, scene.intrinsics.width], a.shape)));
        }
        Ok(a)
    };
    let depth = load(GT_DEPTH_FILE)?.into_f32(&dir.join(GT_DEPTH_FILE))?;
    let instance = load(GT_INSTANCE_FILE)?.into_u16(&dir.join(GT_INSTANCE_FILE))?;
    let class = load(GT_CLASS_FILE)?.into_u16(&dir.join(GT_CLASS_FILE))?;
    debug_assert_eq!(depth.len(), n);
    if let Some(&bad) = instance.iter().find(|&&i| i != NO_INSTANCE && i as usize >= scene.objects.len()) {
        return Err(Error::format(dir.join(GT_INSTANCE_FILE), format!("instance id {bad} without an object")));
    }
    Ok(GroundTruth {
        scene,
        depth,
        instance,
        class,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_scene, raycast, SceneConfig};

    #[test]
    fn round_trip() {
        let scene = generate_scene(&SceneConfig {
            seed: 8,
            objects: 2,
            width: 96,
            height: 80,
            ..SceneConfig::default()
        })
        .unwrap();
        let frame = raycast(&scene).unwrap();
        let gt = GroundTruth::new(&scene, &frame).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_ground_truth(dir.path(), &gt).unwrap();
        assert_eq!(read_ground_truth(dir.path()).unwrap(), gt);
    }
}
