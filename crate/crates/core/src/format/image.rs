//! Binary PPM (P6) and PGM (P5) with the naive clamp-and-scale 8-bit
//! mapping: byte = round(clamp(v, 0, 1) * 255), v = byte / 255.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::real::Real;

fn quantize<F: Real>(v: F) -> u8 {
    (v.clamp01().to_f64() * 255.0).round() as u8
}

/// Write an H x W x 3 row-major RGB image in [0, 1].
pub fn write_ppm<F: Real>(path: &Path, rgb: &[F], width: usize, height: usize) -> Result<()> {
    if rgb.len() != width * height * 3 {
        return Err(Error::DimensionMismatch(format!(
            "ppm payload is {} values, expected {width}x{height}x3",
            rgb.len()
        )));
    }
    let mut bytes = format!("P6\n{width} {height}\n255\n").into_bytes();
    bytes.extend(rgb.iter().map(|v| quantize(*v)));
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Write an H x W row-major grayscale image in [0, 1].
pub fn write_pgm<F: Real>(path: &Path, gray: &[F], width: usize, height: usize) -> Result<()> {
    if gray.len() != width * height {
        return Err(Error::DimensionMismatch(format!(
            "pgm payload is {} values, expected {width}x{height}",
            gray.len()
        )));
    }
    let mut bytes = format!("P5\n{width} {height}\n255\n").into_bytes();
    bytes.extend(gray.iter().map(|v| quantize(*v)));
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn parse_header<'a>(path: &Path, bytes: &'a [u8], magic: &str) -> Result<(usize, usize, &'a [u8])> {
    // Header: magic, width, height, maxval as whitespace-separated tokens,
    // with '#' comment lines allowed, then a single whitespace byte before
    // the payload.
    let mut at = 0usize;
    let mut tokens: Vec<String> = Vec::new();
    while tokens.len() < 4 && at < bytes.len() {
        match bytes[at] {
            b'#' => {
                while at < bytes.len() && bytes[at] != b'\n' {
                    at += 1;
                }
            }
            c if c.is_ascii_whitespace() => at += 1,
            _ => {
                let start = at;
                while at < bytes.len() && !bytes[at].is_ascii_whitespace() && bytes[at] != b'#' {
                    at += 1;
                }
                tokens.push(String::from_utf8_lossy(&bytes[start..at]).into_owned());
            }
        }
    }
    if tokens.len() < 4 {
        return Err(Error::Parse { path: path.into(), msg: "truncated netpbm header".into() });
    }
    if tokens[0] != magic {
        return Err(Error::Parse {
            path: path.into(),
            msg: format!("expected {magic}, found {}", tokens[0]),
        });
    }
    if tokens[3] != "255" {
        return Err(Error::Parse { path: path.into(), msg: "only maxval 255 is supported".into() });
    }
    let parse = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::Parse { path: path.into(), msg: format!("bad dimension '{s}'") })
    };
    let (w, h) = (parse(&tokens[1])?, parse(&tokens[2])?);
    // Exactly one whitespace byte separates the header from the payload.
    if at >= bytes.len() || !bytes[at].is_ascii_whitespace() {
        return Err(Error::Parse { path: path.into(), msg: "missing payload separator".into() });
    }
    Ok((w, h, &bytes[at + 1..]))
}

/// Read a P6 image into row-major [0, 1] RGB.
pub fn read_ppm<F: Real>(path: &Path) -> Result<(Vec<F>, usize, usize)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (w, h, payload) = parse_header(path, &bytes, "P6")?;
    if payload.len() < w * h * 3 {
        return Err(Error::Parse { path: path.into(), msg: "truncated ppm payload".into() });
    }
    let rgb = payload[..w * h * 3].iter().map(|b| F::c(*b as f64 / 255.0)).collect();
    Ok((rgb, w, h))
}

/// Read a P5 image into row-major [0, 1] grayscale.
pub fn read_pgm<F: Real>(path: &Path) -> Result<(Vec<F>, usize, usize)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (w, h, payload) = parse_header(path, &bytes, "P5")?;
    if payload.len() < w * h {
        return Err(Error::Parse { path: path.into(), msg: "truncated pgm payload".into() });
    }
    let gray = payload[..w * h].iter().map(|b| F::c(*b as f64 / 255.0)).collect();
    Ok((gray, w, h))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_quantized_round_trip() {
        let dir = std::env::temp_dir().join("tripyramid_ppm_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("img.ppm");
        let rgb: Vec<f32> = (0..5 * 4 * 3).map(|i| (i as f32) / 60.0).collect();
        write_ppm(&path, &rgb, 5, 4).unwrap();
        let (back, w, h) = read_ppm::<f32>(&path).unwrap();
        assert_eq!((w, h), (5, 4));
        for (a, b) in rgb.iter().zip(&back) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-6);
        }
        // Byte-exact stability: re-encoding the decoded image is identity.
        let path2 = dir.join("img2.ppm");
        write_ppm(&path2, &back, 5, 4).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn pgm_round_trip_and_clamping() {
        let dir = std::env::temp_dir().join("tripyramid_pgm_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("mask.pgm");
        let gray = vec![-0.5f64, 0.0, 0.25, 0.5, 1.0, 2.0];
        write_pgm(&path, &gray, 3, 2).unwrap();
        let (back, w, h) = read_pgm::<f64>(&path).unwrap();
        assert_eq!((w, h), (3, 2));
        assert_eq!(back[0], 0.0); // clamped below
        assert_eq!(back[5], 1.0); // clamped above
        assert!((back[2] - 0.25).abs() < 0.5 / 255.0);
    }

    #[test]
    fn header_errors_are_reported() {
        let dir = std::env::temp_dir().join("tripyramid_ppm_err");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.ppm");
        std::fs::write(&path, b"P3\n2 2\n255\n").unwrap();
        assert!(read_ppm::<f32>(&path).is_err());
        assert!(read_ppm::<f32>(&dir.join("absent.ppm")).is_err());
    }
}
