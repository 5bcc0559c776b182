//! Binary little-endian PLY point files in the common splatting layout
//! (`x y z`, `scale_0..2` log-scale, `rot_0..3` quaternion `w x y z`,
//! `opacity` logit, `f_dc_0..2` degree-0 SH coefficients).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::gaussians::{logit, sigmoid, Frame, GaussianPrimitive, GaussianSet};
use crate::geometry::Vec3;

/// Degree-0 real spherical harmonic, `1 / (2 sqrt(pi))`.
pub const SH_C0: f64 = 0.28209479177387814;

const PROPERTIES: [&str; 14] = [
    "x", "y", "z", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3", "opacity", "f_dc_0",
    "f_dc_1", "f_dc_2",
];

pub fn color_to_sh(c: f64) -> f64 {
    (c - 0.5) / SH_C0
}

pub fn sh_to_color(sh: f64) -> f64 {
    sh * SH_C0 + 0.5
}

pub fn encode(set: &GaussianSet, comments: &[String]) -> Result<Vec<u8>> {
    let mut header = String::from("ply\nformat binary_little_endian 1.0\n");
    header.push_str(&format!("comment frame {}\n", set.frame.as_str()));
    for c in comments {
        if c.contains('\n') {
            return Err(Error::Domain("PLY comments must be single-line".into()));
        }
        header.push_str(&format!("comment {c}\n"));
    }
    header.push_str(&format!("element vertex {}\n", set.len()));
    for p in PROPERTIES {
        header.push_str(&format!("property float {p}\n"));
    }
    header.push_str("end_header\n");

    let mut out = header.into_bytes();
    for (i, g) in set.gaussians.iter().enumerate() {
        if !g.is_finite() || !(g.opacity > 0.0 && g.opacity < 1.0) {
            return Err(Error::NonFinite {
                what: "gaussian parameters for PLY export".into(),
                index: i,
            });
        }
        let values = [
            g.mean.x,
            g.mean.y,
            g.mean.z,
            g.log_scale.x,
            g.log_scale.y,
            g.log_scale.z,
            g.rotation[0],
            g.rotation[1],
            g.rotation[2],
            g.rotation[3],
            logit(g.opacity),
            color_to_sh(g.color.x),
            color_to_sh(g.color.y),
            color_to_sh(g.color.z),
        ];
        for v in values {
            let f = v as f32;
            if !f.is_finite() {
                return Err(Error::NonFinite {
                    what: "gaussian parameter overflows f32".into(),
                    index: i,
                });
            }
            out.extend_from_slice(&f.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn export_gaussians_ply(set: &GaussianSet, path: &Path, comments: &[String]) -> Result<()> {
    let bytes = encode(set, comments)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_gaussians_ply(path: &Path) -> Result<GaussianSet> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<GaussianSet> {
    const END: &[u8] = b"end_header\n";
    let end = bytes
        .windows(END.len())
        .position(|w| w == END)
        .ok_or_else(|| Error::format(path, "missing end_header"))?
        + END.len();
    let header = std::str::from_utf8(&bytes[..end]).map_err(|_| Error::format(path, "non-ASCII header"))?;
    let mut lines = header.lines();
    if lines.next() != Some("ply") {
        return Err(Error::format(path, "missing ply magic"));
    }
    let mut frame = Frame::Canonical;
    let mut count = None;
    let mut props = Vec::new();
    for line in lines {
        let parts: Vec<&str> = line.split_whitespace().collect();
        match parts.as_slice() {
            ["format", fmt, _] if *fmt != "binary_little_endian" => {
                return Err(Error::format(path, format!("unsupported PLY format {fmt}")))
            }
            ["comment", "frame", f] => {
                frame = match *f {
                    "camera" => Frame::Camera,
                    "canonical" => Frame::Canonical,
                    other => return Err(Error::format(path, format!("unknown frame tag {other}"))),
                }
            }
            ["element", "vertex", n] => {
                count = Some(n.parse::<usize>().map_err(|_| Error::format(path, "bad vertex count"))?)
            }
            ["element", other, _] => {
                return Err(Error::format(path, format!("unexpected element {other}")));
            }
            ["property", "float", name] => props.push(name.to_string()),
            ["property", ty, name] => {
                return Err(Error::format(path, format!("property {name} has unsupported type {ty}")))
            }
            _ => {}
        }
    }
    let count = count.ok_or_else(|| Error::format(path, "missing vertex element"))?;
    let index_of = |name: &str| {
        props
            .iter()
            .position(|p| p == name)
            .ok_or_else(|| Error::format(path, format!("missing property {name}")))
    };
    let idx: Vec<usize> = PROPERTIES.iter().map(|p| index_of(p)).collect::<Result<_>>()?;
    let stride = props.len() * 4;
    let body = &bytes[end..];
    if body.len() != count * stride {
        return Err(Error::format(
            path,
            format!("vertex payload has {} bytes, expected {}", body.len(), count * stride),
        ));
    }
    let mut gaussians = Vec::with_capacity(count);
    for row in body.chunks_exact(stride) {
        let v = |k: usize| {
            let o = idx[k] * 4;
            f32::from_le_bytes(row[o..o + 4].try_into().expect("4 bytes")) as f64
        };
        gaussians.push(GaussianPrimitive {
            mean: Vec3::new(v(0), v(1), v(2)),
            log_scale: Vec3::new(v(3), v(4), v(5)),
            rotation: [v(6), v(7), v(8), v(9)],
            opacity: sigmoid(v(10)),
            color: Vec3::new(sh_to_color(v(11)), sh_to_color(v(12)), sh_to_color(v(13))),
        });
    }
    Ok(GaussianSet::new(frame, gaussians))
}
