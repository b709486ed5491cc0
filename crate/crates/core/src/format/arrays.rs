//! Raw float arrays on disk: a one-line whitespace-separated dimension
//! header followed by little-endian 32-bit reals.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Write `data` with dimensions `dims` (e.g. `[128, 128, 32]` for a feature
/// map in row, col, channel order).
pub fn write_raw_array(path: &Path, data: &[f32], dims: &[usize]) -> Result<()> {
    let expect: usize = dims.iter().product();
    if data.len() != expect {
        return Err(Error::DimensionMismatch(format!(
            "array payload is {} values, header says {expect}",
            data.len()
        )));
    }
    let header = dims.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(" ");
    let mut bytes = header.into_bytes();
    bytes.push(b'\n');
    bytes.reserve(data.len() * 4);
    for v in data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_raw_array(path: &Path) -> Result<(Vec<f32>, Vec<usize>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let nl = bytes
        .iter()
        .position(|b| *b == b'\n')
        .ok_or_else(|| Error::Parse { path: path.into(), msg: "missing header line".into() })?;
    let header = String::from_utf8_lossy(&bytes[..nl]);
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| {
            t.parse().map_err(|_| Error::Parse { path: path.into(), msg: format!("bad dimension '{t}'") })
        })
        .collect::<Result<_>>()?;
    let expect: usize = dims.iter().product();
    let payload = &bytes[nl + 1..];
    if payload.len() != expect * 4 {
        return Err(Error::Parse {
            path: path.into(),
            msg: format!("payload is {} bytes, header implies {}", payload.len(), expect * 4),
        });
    }
    let data = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    Ok((data, dims))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = std::env::temp_dir().join("tripyramid_raw_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("map.raw");
        let data: Vec<f32> = (0..24).map(|i| (i as f32).sin() * 1e-3).collect();
        write_raw_array(&path, &data, &[2, 3, 4]).unwrap();
        let (back, dims) = read_raw_array(&path).unwrap();
        assert_eq!(dims, vec![2, 3, 4]);
        assert_eq!(back.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                   data.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let dir = std::env::temp_dir().join("tripyramid_raw_test2");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.raw");
        assert!(write_raw_array(&path, &[0.0; 5], &[2, 3]).is_err());
    }
}
