//! Bundle directory: `meta.json`, `depth.npy`, `embeddings.npy`,
//! `nocs.npy` (or `nocs_bins.npy` + `nocs_delta.npy`) and `gaussians.npy`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::npy::{self, NpyArray};
use crate::error::{Error, Result};
use crate::maps::{DenseMaps, DepthKind, Vocabulary, GAUSSIAN_PARAMS};
use crate::nocs::{self, NocsBinned};

pub const META_FILE: &str = "meta.json";
pub const DEPTH_FILE: &str = "depth.npy";
pub const EMBEDDINGS_FILE: &str = "embeddings.npy";
pub const NOCS_FILE: &str = "nocs.npy";
pub const NOCS_BINS_FILE: &str = "nocs_bins.npy";
pub const NOCS_DELTA_FILE: &str = "nocs_delta.npy";
pub const GAUSSIANS_FILE: &str = "gaussians.npy";

const FORMAT: &str = "scenekit-bundle";
const GAUSSIAN_LAYOUT: [&str; GAUSSIAN_PARAMS] = [
    "offset_x", "offset_y", "offset_z", "log_scale_0", "log_scale_1", "log_scale_2", "rot_w", "rot_x",
    "rot_y", "rot_z", "opacity_logit", "color_r", "color_g", "color_b",
];

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    format: String,
    version: u32,
    width: usize,
    height: usize,
    embedding_dim: usize,
    gaussians_per_pixel: usize,
    gaussian_layout: Vec<String>,
    depth_kind: DepthKind,
    fov: [f64; 2],
    #[serde(default = "default_bins")]
    nocs_bins: usize,
    vocab: Vocabulary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<serde_json::Value>,
}

fn default_bins() -> usize {
    nocs::DEFAULT_BINS
}

fn expect_shape(path: &Path, array: &NpyArray, expected: &[usize]) -> Result<()> {
    if array.shape != expected {
        return Err(Error::shape(
            format!("{}", path.display()),
            format!("{expected:?}"),
            format!("{:?}", array.shape),
        ));
    }
    Ok(())
}

pub fn write_bundle(maps: &DenseMaps, dir: &Path) -> Result<()> {
    maps.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (h, w) = (maps.height, maps.width);
    let meta = Meta {
        format: FORMAT.into(),
        version: 1,
        width: w,
        height: h,
        embedding_dim: maps.embedding_dim,
        gaussians_per_pixel: maps.gaussians_per_pixel,
        gaussian_layout: GAUSSIAN_LAYOUT.iter().map(|s| s.to_string()).collect(),
        depth_kind: maps.depth_kind,
        fov: [maps.fov.0, maps.fov.1],
        nocs_bins: nocs::DEFAULT_BINS,
        vocab: maps.vocab.clone(),
        provenance: maps.provenance.clone(),
    };
    let mut json = serde_json::to_vec_pretty(&meta).expect("meta serializes");
    json.push(b'\n');
    let meta_path = dir.join(META_FILE);
    fs::write(&meta_path, json).map_err(|e| Error::io(&meta_path, e))?;

    npy::write(&dir.join(DEPTH_FILE), &NpyArray::f32(vec![h, w], maps.depth.clone()))?;
    npy::write(
        &dir.join(EMBEDDINGS_FILE),
        &NpyArray::f32(vec![h, w, maps.embedding_dim], maps.embeddings.clone()),
    )?;
    npy::write(&dir.join(NOCS_FILE), &NpyArray::f32(vec![h, w, 3], maps.nocs.clone()))?;
    npy::write(
        &dir.join(GAUSSIANS_FILE),
        &NpyArray::f32(
            vec![h, w, maps.gaussians_per_pixel, GAUSSIAN_PARAMS],
            maps.gaussians.clone(),
        ),
    )?;
    Ok(())
}

fn required(dir: &Path, name: &str) -> Result<NpyArray> {
    let path = dir.join(name);
    if !path.exists() {
        return Err(Error::io(
            &path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "required bundle file is missing"),
        ));
    }
    npy::read(&path)
}

pub fn read_bundle(dir: &Path) -> Result<DenseMaps> {
    let meta_path = dir.join(META_FILE);
    let meta_bytes = fs::read(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: Meta =
        serde_json::from_slice(&meta_bytes).map_err(|e| Error::format(&meta_path, e.to_string()))?;
    if meta.format != FORMAT {
        return Err(Error::format(&meta_path, format!("unknown bundle format '{}'", meta.format)));
    }
    let (h, w) = (meta.height, meta.width);

    let depth = required(dir, DEPTH_FILE)?;
    expect_shape(&dir.join(DEPTH_FILE), &depth, &[h, w])?;
    let depth = depth.into_f32(&dir.join(DEPTH_FILE))?;

    let emb = required(dir, EMBEDDINGS_FILE)?;
    expect_shape(&dir.join(EMBEDDINGS_FILE), &emb, &[h, w, meta.embedding_dim])?;
    let embeddings = emb.into_f32(&dir.join(EMBEDDINGS_FILE))?;

    let nocs = read_nocs(dir, h, w, meta.nocs_bins)?;

    let gauss = required(dir, GAUSSIANS_FILE)?;
    expect_shape(
        &dir.join(GAUSSIANS_FILE),
        &gauss,
        &[h, w, meta.gaussians_per_pixel, GAUSSIAN_PARAMS],
    )?;
    let gaussians = gauss.into_f32(&dir.join(GAUSSIANS_FILE))?;

    let maps = DenseMaps {
        width: w,
        height: h,
        depth_kind: meta.depth_kind,
        depth,
        embedding_dim: meta.embedding_dim,
        embeddings,
        nocs,
        gaussians_per_pixel: meta.gaussians_per_pixel,
        gaussians,
        fov: (meta.fov[0], meta.fov[1]),
        vocab: meta.vocab,
        provenance: meta.provenance,
    };
    maps.validate()?;
    Ok(maps)
}

/// Reads decoded `nocs.npy`, or decodes `nocs_bins.npy` (bin indices H×W×3
/// or logits H×W×3×M) with `nocs_delta.npy`.
fn read_nocs(dir: &Path, h: usize, w: usize, default_bins: usize) -> Result<Vec<f32>> {
    let decoded = dir.join(NOCS_FILE);
    if decoded.exists() {
        let a = npy::read(&decoded)?;
        expect_shape(&decoded, &a, &[h, w, 3])?;
        return a.into_f32(&decoded);
    }
    let bins_path = dir.join(NOCS_BINS_FILE);
    let delta_path = dir.join(NOCS_DELTA_FILE);
    if !bins_path.exists() {
        return Err(Error::io(
            &decoded,
            std::io::Error::new(
                std::io::ErrorKind::NotFound,
                "neither nocs.npy nor nocs_bins.npy + nocs_delta.npy present",
            ),
        ));
    }
    let bins = npy::read(&bins_path)?;
    let delta = npy::read(&delta_path)?;
    expect_shape(&delta_path, &delta, &[h, w, 3])?;
    let offsets = delta.to_f64();
    let decoded: Vec<f64> = match bins.shape.as_slice() {
        [bh, bw, 3] if *bh == h && *bw == w => {
            let idx = bins.to_f64();
            idx.iter()
                .zip(&offsets)
                .map(|(&b, &d)| {
                    if b < 0.0 || b.fract() != 0.0 {
                        return Err(Error::format(&bins_path, format!("bin index {b} is not a nonnegative integer")));
                    }
                    nocs::decode(b as usize, d, default_bins)
                })
                .collect::<Result<_>>()?
        }
        [bh, bw, 3, m] if *bh == h && *bw == w => NocsBinned {
            width: w,
            height: h,
            bins: *m,
            logits: bins.to_f64(),
            offsets,
        }
        .decode_field()?,
        other => {
            return Err(Error::shape(
                format!("{}", bins_path.display()),
                format!("[{h}, {w}, 3] or [{h}, {w}, 3, M]"),
                format!("{other:?}"),
            ))
        }
    };
    Ok(decoded.into_iter().map(|v| v as f32).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn small_maps() -> DenseMaps {
        let (w, h, d, k) = (4, 3, 5, 2);
        let n = w * h;
        DenseMaps {
            width: w,
            height: h,
            depth_kind: DepthKind::Metric,
            depth: (0..n).map(|i| 1.0 + i as f32 * 0.25).collect(),
            embedding_dim: d,
            embeddings: (0..n * d).map(|i| (i as f32 * 0.37).sin()).collect(),
            nocs: (0..n * 3).map(|i| (i % 7) as f32 / 7.0).collect(),
            gaussians_per_pixel: k,
            gaussians: (0..n * k * GAUSSIAN_PARAMS).map(|i| (i as f32 * 0.11).cos()).collect(),
            fov: (1.0, 0.8),
            vocab: Vocabulary {
                names: vec!["other".into(), "mug".into()],
                background: 0,
                embeddings: vec![vec![1.0, 0.0, 0.0, 0.0, 0.0], vec![0.0, 0.6, 0.8, 0.0, 0.0]],
            },
            provenance: None,
        }
    }

    #[test]
    fn round_trip_is_exact_and_deterministic() {
        let maps = small_maps();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        write_bundle(&maps, a.path()).unwrap();
        write_bundle(&maps, b.path()).unwrap();
        assert_eq!(read_bundle(a.path()).unwrap(), maps);
        for f in [META_FILE, DEPTH_FILE, EMBEDDINGS_FILE, NOCS_FILE, GAUSSIANS_FILE] {
            assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let maps = small_maps();
        let dir = tempfile::tempdir().unwrap();
        write_bundle(&maps, dir.path()).unwrap();
        let bad = NpyArray::f32(vec![4, 4, 5], vec![0.0; 80]);
        npy::write(&dir.path().join(EMBEDDINGS_FILE), &bad).unwrap();
        let err = read_bundle(dir.path()).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch { .. }), "{err}");
    }

    #[test]
    fn nan_depth_rejected_with_pixel() {
        let mut maps = small_maps();
        let dir = tempfile::tempdir().unwrap();
        maps.depth[6] = f32::NAN;
        assert!(write_bundle(&maps, dir.path()).is_err());
        maps.depth[6] = 1.0;
        write_bundle(&maps, dir.path()).unwrap();
        let mut depth = maps.depth.clone();
        depth[6] = f32::NAN;
        npy::write(&dir.path().join(DEPTH_FILE), &NpyArray::f32(vec![3, 4], depth)).unwrap();
        let err = read_bundle(dir.path()).unwrap_err();
        match err {
            Error::NonFinite { index, ref what } => {
                assert_eq!(index, 6);
                assert!(what.contains("u=2, v=1"), "{what}");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn missing_file_names_path() {
        let dir = tempfile::tempdir().unwrap();
        write_bundle(&small_maps(), dir.path()).unwrap();
        fs::remove_file(dir.path().join(GAUSSIANS_FILE)).unwrap();
        let msg = read_bundle(dir.path()).unwrap_err().to_string();
        assert!(msg.contains(GAUSSIANS_FILE), "{msg}");
    }

    #[test]
    fn write_to_unwritable_path_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, b"x").unwrap();
        let err = write_bundle(&small_maps(), &blocker.join("sub")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn binned_nocs_decoded_on_load() {
        let maps = small_maps();
        let dir = tempfile::tempdir().unwrap();
        write_bundle(&maps, dir.path()).unwrap();
        fs::remove_file(dir.path().join(NOCS_FILE)).unwrap();
        let mut idx = Vec::new();
        let mut delta = Vec::new();
        for &c in &maps.nocs {
            let (b, d) = nocs::encode(c as f64, 64).unwrap();
            idx.push(b as u16);
            delta.push(d as f32);
        }
        npy::write(&dir.path().join(NOCS_BINS_FILE), &NpyArray::u16(vec![3, 4, 3], idx)).unwrap();
        npy::write(&dir.path().join(NOCS_DELTA_FILE), &NpyArray::f32(vec![3, 4, 3], delta)).unwrap();
        let loaded = read_bundle(dir.path()).unwrap();
        for (a, b) in loaded.nocs.iter().zip(&maps.nocs) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}
