//! DCT perceptual hash.
//!
//! Pipeline: 7x7 mean filter, area-average resize to 32x32, 2-D DCT-II, keep
//! the 8x8 block of coefficients at rows 1..=8 and columns 1..=8, then set bit
//! `row * 8 + col` when the coefficient is strictly above the block median
//! (mean of the 32nd and 33rd order statistics).
//!
//! Coefficients are snapped to a 2^-16 grid before thresholding so that
//! floating-point residue on flat regions cannot flip bits.

use std::sync::OnceLock;

use rayon::prelude::*;
use thiserror::Error;

use super::image::GrayImage;
use super::PerceptualHash;

const BLUR_RADIUS: i64 = 3;
const SIZE: usize = 32;
const BLOCK: usize = 8;
const MIN_SIDE: u32 = 8;
const SNAP: f64 = 65536.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum PhashError {
    #[error("image is {width}x{height}; both sides must be at least 8 pixels")]
    ImageTooSmall { width: u32, height: u32 },
}

/// `cos(pi * (2n + 1) * k / 64)` for k in 1..=8, n in 0..32.
fn dct_rows() -> &'static [[f64; SIZE]; BLOCK] {
    static TABLE: OnceLock<[[f64; SIZE]; BLOCK]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = [[0.0; SIZE]; BLOCK];
        for (k, row) in t.iter_mut().enumerate() {
            for (n, v) in row.iter_mut().enumerate() {
                let angle = std::f64::consts::PI * ((2 * n + 1) * (k + 1)) as f64 / (2 * SIZE) as f64;
                *v = angle.cos();
            }
        }
        t
    })
}

/// Mean over the in-bounds part of each 7x7 window, via an integral image.
fn box_blur(img: &GrayImage) -> Vec<f64> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let stride = w + 1;
    let mut integral = vec![0u64; stride * (h + 1)];
    for y in 0..h {
        let mut row = 0u64;
        for x in 0..w {
            row += img.get(x as u32, y as u32) as u64;
            integral[(y + 1) * stride + x + 1] = integral[y * stride + x + 1] + row;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h as i64 {
        let y0 = (y - BLUR_RADIUS).max(0) as usize;
        let y1 = (y + BLUR_RADIUS + 1).min(h as i64) as usize;
        for x in 0..w as i64 {
            let x0 = (x - BLUR_RADIUS).max(0) as usize;
            let x1 = (x + BLUR_RADIUS + 1).min(w as i64) as usize;
            let sum = integral[y1 * stride + x1] + integral[y0 * stride + x0]
                - integral[y0 * stride + x1]
                - integral[y1 * stride + x0];
            let count = ((y1 - y0) * (x1 - x0)) as u64;
            out[y as usize * w + x as usize] = sum as f64 / count as f64;
        }
    }
    out
}

/// Integer overlap weights between `len` source cells and 32 output cells.
/// In units where a source cell spans 32 and an output cell spans `len`,
/// each output cell's weights sum to `len`.
fn area_weights(len: usize) -> Vec<Vec<(usize, f64)>> {
    (0..SIZE)
        .map(|o| {
            let (lo, hi) = (o * len, (o + 1) * len);
            (lo / SIZE..hi.div_ceil(SIZE))
                .filter_map(|i| {
                    let overlap = hi.min((i + 1) * SIZE).saturating_sub(lo.max(i * SIZE));
                    (overlap > 0).then_some((i, overlap as f64))
                })
                .collect()
        })
        .collect()
}

fn area_resize(src: &[f64], w: usize, h: usize) -> [[f64; SIZE]; SIZE] {
    let wx = area_weights(w);
    let wy = area_weights(h);
    let mut horiz = vec![[0.0; SIZE]; h];
    for (y, row) in horiz.iter_mut().enumerate() {
        let line = &src[y * w..(y + 1) * w];
        for (ox, weights) in wx.iter().enumerate() {
            row[ox] = weights.iter().map(|&(i, wt)| wt * line[i]).sum();
        }
    }
    let norm = (w * h) as f64;
    let mut out = [[0.0; SIZE]; SIZE];
    for (oy, weights) in wy.iter().enumerate() {
        for ox in 0..SIZE {
            let s: f64 = weights.iter().map(|&(j, wt)| wt * horiz[j][ox]).sum();
            out[oy][ox] = s / norm;
        }
    }
    out
}

/// The 8x8 low-frequency DCT-II block (excluding the DC row and column).
fn dct_block(px: &[[f64; SIZE]; SIZE]) -> [[f64; BLOCK]; BLOCK] {
    let c = dct_rows();
    // vertical pass: partial[u][x] = sum_y c[u][y] * px[y][x]
    let mut partial = [[0.0; SIZE]; BLOCK];
    for (u, prow) in partial.iter_mut().enumerate() {
        for (y, line) in px.iter().enumerate() {
            let cu = c[u][y];
            for x in 0..SIZE {
                prow[x] += cu * line[x];
            }
        }
    }
    let mut out = [[0.0; BLOCK]; BLOCK];
    for u in 0..BLOCK {
        for v in 0..BLOCK {
            out[u][v] = (0..SIZE).map(|x| c[v][x] * partial[u][x]).sum();
        }
    }
    out
}

pub fn phash(img: &GrayImage) -> Result<PerceptualHash, PhashError> {
    let (w, h) = (img.width(), img.height());
    if w < MIN_SIDE || h < MIN_SIDE {
        return Err(PhashError::ImageTooSmall { width: w, height: h });
    }
    let blurred = box_blur(img);
    let small = area_resize(&blurred, w as usize, h as usize);
    let block = dct_block(&small);

    let mut coeffs = [0i64; BLOCK * BLOCK];
    for (k, c) in coeffs.iter_mut().enumerate() {
        *c = (block[k / BLOCK][k % BLOCK] * SNAP).round() as i64;
    }
    let mut sorted = coeffs;
    sorted.sort_unstable();
    // compare 2c against the sum of the two middle values to stay integral
    let median2 = sorted[31] + sorted[32];
    let bits = coeffs
        .iter()
        .enumerate()
        .filter(|(_, &c)| 2 * c > median2)
        .fold(0u64, |acc, (k, _)| acc | (1 << k));
    Ok(PerceptualHash(bits))
}

/// Hashes many images on the current rayon pool; output order follows input.
pub fn phash_batch(images: &[GrayImage]) -> Vec<Result<PerceptualHash, PhashError>> {
    images.par_iter().map(phash).collect()
}
