//! Minimal NPY v1.0 reader/writer (little-endian, C order).
//!
//! Header layout: `\x93NUMPY`, version `1 0`, u16 header length, then an
//! ASCII dict padded with spaces and terminated by `\n` so that the payload
//! starts on a 64-byte boundary.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

const MAGIC: &[u8] = b"\x93NUMPY";

#[derive(Debug, Clone, PartialEq)]
pub enum NpyData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    U16(Vec<u16>),
}

impl NpyData {
    fn descr(&self) -> &'static str {
        match self {
            NpyData::F32(_) => "<f4",
            NpyData::F64(_) => "<f8",
            NpyData::U16(_) => "<u2",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            NpyData::F32(v) => v.len(),
            NpyData::F64(v) => v.len(),
            NpyData::U16(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NpyArray {
    pub shape: Vec<usize>,
    pub data: NpyData,
}

impl NpyArray {
    pub fn f32(shape: Vec<usize>, data: Vec<f32>) -> Self {
        Self { shape, data: NpyData::F32(data) }
    }

    pub fn u16(shape: Vec<usize>, data: Vec<u16>) -> Self {
        Self { shape, data: NpyData::U16(data) }
    }

    pub fn into_f32(self, path: &Path) -> Result<Vec<f32>> {
        match self.data {
            NpyData::F32(v) => Ok(v),
            other => Err(Error::format(path, format!("expected <f4 payload, found {}", other.descr()))),
        }
    }

    pub fn into_u16(self, path: &Path) -> Result<Vec<u16>> {
        match self.data {
            NpyData::U16(v) => Ok(v),
            other => Err(Error::format(path, format!("expected <u2 payload, found {}", other.descr()))),
        }
    }

    /// Converts any numeric payload to f64.
    pub fn to_f64(&self) -> Vec<f64> {
        match &self.data {
            NpyData::F32(v) => v.iter().map(|&x| x as f64).collect(),
            NpyData::F64(v) => v.clone(),
            NpyData::U16(v) => v.iter().map(|&x| x as f64).collect(),
        }
    }
}

fn shape_literal(shape: &[usize]) -> String {
    match shape.len() {
        0 => "()".to_string(),
        1 => format!("({},)", shape[0]),
        _ => format!(
            "({})",
            shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(", ")
        ),
    }
}

pub fn encode(array: &NpyArray) -> Vec<u8> {
    let expected: usize = array.shape.iter().product();
    assert_eq!(expected, array.data.len(), "npy shape does not match payload length");
    let mut header = format!(
        "{{'descr': '{}', 'fortran_order': False, 'shape': {}, }}",
        array.data.descr(),
        shape_literal(&array.shape)
    );
    let unpadded = MAGIC.len() + 2 + 2 + header.len() + 1;
    let pad = (64 - unpadded % 64) % 64;
    header.push_str(&" ".repeat(pad));
    header.push('\n');

    let mut out = Vec::with_capacity(MAGIC.len() + 4 + header.len() + array.data.len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(header.len() as u16).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    match &array.data {
        NpyData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        NpyData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        NpyData::U16(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
    }
    out
}

pub fn write(path: &Path, array: &NpyArray) -> Result<()> {
    fs::write(path, encode(array)).map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path) -> Result<NpyArray> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

fn header_value<'a>(header: &'a str, key: &str) -> Option<&'a str> {
    let needle = format!("'{key}':");
    let start = header.find(&needle)? + needle.len();
    Some(header[start..].trim_start())
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<NpyArray> {
    if bytes.len() < 10 || &bytes[..6] != MAGIC {
        return Err(Error::format(path, "missing NPY magic"));
    }
    let (major, header_len, offset) = match bytes[6] {
        1 => (1, u16::from_le_bytes([bytes[8], bytes[9]]) as usize, 10),
        2 | 3 if bytes.len() >= 12 => (
            bytes[6],
            u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize,
            12,
        ),
        v => return Err(Error::format(path, format!("unsupported NPY version {v}"))),
    };
    let _ = major;
    let end = offset + header_len;
    if bytes.len() < end {
        return Err(Error::format(path, "truncated NPY header"));
    }
    let header = std::str::from_utf8(&bytes[offset..end])
        .map_err(|_| Error::format(path, "NPY header is not ASCII"))?;

    let descr = header_value(header, "descr")
        .and_then(|s| s.strip_prefix('\''))
        .and_then(|s| s.split('\'').next())
        .ok_or_else(|| Error::format(path, "NPY header lacks descr"))?;
    let fortran = header_value(header, "fortran_order")
        .ok_or_else(|| Error::format(path, "NPY header lacks fortran_order"))?;
    if fortran.starts_with("True") {
        return Err(Error::format(path, "fortran-ordered arrays are not supported"));
    }
    let shape_src = header_value(header, "shape")
        .and_then(|s| s.strip_prefix('('))
        .and_then(|s| s.split(')').next())
        .ok_or_else(|| Error::format(path, "NPY header lacks shape"))?;
    let shape = shape_src
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<usize>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| Error::format(path, format!("bad NPY shape ({shape_src})")))?;
    let count: usize = shape.iter().product();
    let payload = &bytes[end..];

    let data = match descr {
        "<f4" => NpyData::F32(read_elems(payload, count, path, f32::from_le_bytes)?),
        "<f8" => NpyData::F64(read_elems(payload, count, path, f64::from_le_bytes)?),
        "<u2" => NpyData::U16(read_elems(payload, count, path, u16::from_le_bytes)?),
        other => return Err(Error::format(path, format!("unsupported dtype {other}"))),
    };
    Ok(NpyArray { shape, data })
}

fn read_elems<T, const N: usize>(
    payload: &[u8],
    count: usize,
    path: &Path,
    conv: fn([u8; N]) -> T,
) -> Result<Vec<T>> {
    if payload.len() != count * N {
        return Err(Error::format(
            path,
            format!("payload has {} bytes, shape implies {}", payload.len(), count * N),
        ));
    }
    Ok(payload
        .chunks_exact(N)
        .map(|c| conv(c.try_into().expect("chunk size")))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_is_64_byte_aligned() {
        let a = NpyArray::f32(vec![2, 3], vec![0.0; 6]);
        let bytes = encode(&a);
        let hlen = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
        assert_eq!((10 + hlen) % 64, 0);
        assert_eq!(bytes[10 + hlen - 1], b'\n');
        assert_eq!(bytes.len(), 10 + hlen + 24);
        let header = std::str::from_utf8(&bytes[10..10 + hlen]).unwrap();
        assert!(header.starts_with("{'descr': '<f4', 'fortran_order': False, 'shape': (2, 3), }"));
    }

    #[test]
    fn round_trip_all_dtypes() {
        let p = Path::new("mem");
        for a in [
            NpyArray::f32(vec![3], vec![1.5, -0.0, f32::MIN_POSITIVE]),
            NpyArray { shape: vec![1, 2], data: NpyData::F64(vec![1e-300, 7.0]) },
            NpyArray::u16(vec![2, 2, 1], vec![0, 1, 65535, 9]),
            NpyArray::f32(vec![0, 4], vec![]),
        ] {
            assert_eq!(decode(&encode(&a), p).unwrap(), a);
        }
    }

    #[test]
    fn truncated_payload_rejected() {
        let mut bytes = encode(&NpyArray::f32(vec![4], vec![1.0; 4]));
        bytes.pop();
        assert!(decode(&bytes, Path::new("x.npy")).is_err());
        assert!(decode(b"not an npy", Path::new("x.npy")).is_err());
    }
}
