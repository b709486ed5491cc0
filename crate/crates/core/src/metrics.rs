//! Image-quality metrics: PSNR and the Sharpness Difference.

use crate::error::{Error, Result};
use crate::real::Real;

/// PSNR cap returned for identical images (the ratio is undefined at zero
/// error).
pub const PSNR_CAP_DB: f64 = 99.0;
/// Floor for the Sharpness Difference denominator.
pub const SD_EPS: f64 = 1e-8;

/// Two H x W x 3 images in [0, 1], row-major (row, col, channel).
#[derive(Debug, Clone, Copy)]
pub struct ImagePair<'a, F> {
    pub a: &'a [F],
    pub b: &'a [F],
    pub height: usize,
    pub width: usize,
}

impl<'a, F: Real> ImagePair<'a, F> {
    pub fn new(a: &'a [F], b: &'a [F], height: usize, width: usize) -> Result<Self> {
        let len = height * width * 3;
        if a.len() != len || b.len() != len {
            return Err(Error::DimensionMismatch(format!(
                "image pair must both be {height}x{width}x3 ({len} values), got {} and {}",
                a.len(),
                b.len()
            )));
        }
        if height == 0 || width == 0 {
            return Err(Error::config("images must be nonempty"));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { context: "image pair".into() });
        }
        Ok(ImagePair { a, b, height, width })
    }
}

/// `20 log10(max / RMSE)` with max = 1.0, capped at [`PSNR_CAP_DB`] for
/// identical images.
pub fn psnr<F: Real>(pair: &ImagePair<F>) -> f64 {
    let n = pair.a.len() as f64;
    let mse: f64 = pair
        .a
        .iter()
        .zip(pair.b.iter())
        .map(|(x, y)| {
            let d = (*x - *y).to_f64();
            d * d
        })
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        return PSNR_CAP_DB;
    }
    (20.0 * (1.0 / mse.sqrt()).log10()).min(PSNR_CAP_DB)
}

/// Sharpness Difference in decibels:
/// `10 log10(N max^2 / sum |(grad_m A + grad_n A) - (grad_m B + grad_n B)|)`
/// with adjacent-pixel absolute-difference gradients along rows and columns,
/// N the scalar sample count (H * W * 3), max = 1.0, and the denominator
/// floored at [`SD_EPS`]. The sum runs where both gradients exist
/// (row >= 1, col >= 1), per channel.
pub fn sharpness_difference<F: Real>(pair: &ImagePair<F>) -> Result<f64> {
    let (h, w) = (pair.height, pair.width);
    if h < 2 || w < 2 {
        return Err(Error::config("sharpness difference needs at least 2x2 images"));
    }
    let at = |img: &[F], i: usize, j: usize, c: usize| img[(i * w + j) * 3 + c].to_f64();
    let grad_sum = |img: &[F], i: usize, j: usize, c: usize| {
        let v = at(img, i, j, c);
        (v - at(img, i - 1, j, c)).abs() + (v - at(img, i, j - 1, c)).abs()
    };
    let mut total = 0.0;
    for i in 1..h {
        for j in 1..w {
            for c in 0..3 {
                total += (grad_sum(pair.a, i, j, c) - grad_sum(pair.b, i, j, c)).abs();
            }
        }
    }
    let n = (h * w * 3) as f64;
    Ok(10.0 * (n / total.max(SD_EPS)).log10())
}
