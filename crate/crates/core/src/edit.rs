//! Pixel executors for the five editing effects.
//!
//! All arithmetic is done in `f64`, rounded half away from zero and clamped
//! to `[0, 255]`. Every function is pure; `*_with` variants take an [`Exec`]
//! mode so callers can pick sequential or row-parallel execution.

use std::collections::VecDeque;

use thiserror::Error;

use crate::command::{ColorName, Intensity};
use crate::image::RasterImage;
use crate::par::Exec;

/// Named color targets for `adjust_color`.
pub fn color_rgb(color: ColorName) -> [u8; 3] {
    match color {
        ColorName::Red => [255, 0, 0],
        ColorName::Orange => [255, 165, 0],
        ColorName::Green => [0, 128, 0],
        ColorName::Blue => [0, 0, 255],
        ColorName::SkyBlue => [135, 206, 235],
        ColorName::Purple => [128, 0, 128],
        ColorName::Brown => [165, 42, 42],
        ColorName::Yellow => [255, 255, 0],
        ColorName::Pink => [255, 192, 203],
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CutoutError {
    #[error("cutout failed: kept region covers {coverage_pct:.1}% of the image (allowed 5%..=95%)")]
    CoverageOutOfBand { coverage_pct: f64 },
    #[error("cutout needs at least 4 border pixels")]
    TooSmall,
}

const ROW_CHUNK: usize = 16;

#[inline]
fn to_channel(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

fn map_channels<F>(img: &RasterImage, exec: Exec, f: F) -> RasterImage
where
    F: Fn(usize, u8) -> u8 + Sync + Send,
{
    let mut out = img.clone();
    let row_bytes = img.width() * 3;
    exec.for_each_chunk_mut(out.pixels_mut(), row_bytes * ROW_CHUNK, |_, chunk| {
        for (i, px) in chunk.iter_mut().enumerate() {
            *px = f(i % 3, *px);
        }
    });
    out
}

pub fn adjust_color(img: &RasterImage, color: ColorName, intensity: Intensity) -> RasterImage {
    adjust_color_with(img, color, intensity, Exec::default())
}

/// `out = round((1 - a) * in + a * target)` per channel.
pub fn adjust_color_with(img: &RasterImage, color: ColorName, intensity: Intensity, exec: Exec) -> RasterImage {
    let alpha = intensity.value();
    let target = color_rgb(color);
    map_channels(img, exec, |c, v| to_channel((1.0 - alpha) * v as f64 + alpha * target[c] as f64))
}

pub fn adjust_brightness(img: &RasterImage, value: i32) -> RasterImage {
    adjust_brightness_with(img, value, Exec::default())
}

/// `out = clamp(round(in * (1 + value / 100)))`.
pub fn adjust_brightness_with(img: &RasterImage, value: i32, exec: Exec) -> RasterImage {
    let gain = 1.0 + value as f64 / 100.0;
    map_channels(img, exec, |_, v| to_channel(v as f64 * gain))
}

pub fn adjust_contrast(img: &RasterImage, value: i32) -> RasterImage {
    adjust_contrast_with(img, value, Exec::default())
}

/// `out = clamp(round((in - 128) * (1 + value / 100) + 128))`.
pub fn adjust_contrast_with(img: &RasterImage, value: i32, exec: Exec) -> RasterImage {
    let slope = 1.0 + value as f64 / 100.0;
    map_channels(img, exec, |_, v| to_channel((v as f64 - 128.0) * slope + 128.0))
}

pub fn rotate(img: &RasterImage, degrees: i32) -> RasterImage {
    rotate_with(img, degrees, Exec::default())
}

/// Counter-clockwise rotation about the center onto the bounding-box canvas.
///
/// Multiples of 90 degrees are exact pixel permutations; other angles use
/// nearest-neighbour inverse mapping with black fill.
pub fn rotate_with(img: &RasterImage, degrees: i32, exec: Exec) -> RasterImage {
    let (w, h) = (img.width(), img.height());
    match degrees.rem_euclid(360) {
        0 => img.clone(),
        90 => permute(img, h, w, exec, |x, y| (w - 1 - y, x)),
        180 => permute(img, w, h, exec, |x, y| (w - 1 - x, h - 1 - y)),
        270 => permute(img, h, w, exec, |x, y| (y, h - 1 - x)),
        d => rotate_arbitrary(img, d as f64, exec),
    }
}

/// Builds an `out_w x out_h` image where output `(x, y)` reads source `src(x, y)`.
fn permute<F>(img: &RasterImage, out_w: usize, out_h: usize, exec: Exec, src: F) -> RasterImage
where
    F: Fn(usize, usize) -> (usize, usize) + Sync + Send,
{
    let mut pixels = vec![0u8; out_w * out_h * 3];
    exec.for_each_chunk_mut(&mut pixels, out_w * 3 * ROW_CHUNK, |chunk_idx, chunk| {
        let y0 = chunk_idx * ROW_CHUNK;
        for (i, px) in chunk.chunks_exact_mut(3).enumerate() {
            let (x, y) = (i % out_w, y0 + i / out_w);
            let (sx, sy) = src(x, y);
            px.copy_from_slice(&img.get(sx, sy));
        }
    });
    RasterImage::new(out_w, out_h, pixels).expect("permutation preserves buffer size")
}

fn rotate_arbitrary(img: &RasterImage, degrees: f64, exec: Exec) -> RasterImage {
    let (w, h) = (img.width() as f64, img.height() as f64);
    let theta = degrees.to_radians();
    let (sin, cos) = theta.sin_cos();
    let out_w = ((w * cos.abs() + h * sin.abs()) - 1e-9).ceil().max(1.0) as usize;
    let out_h = ((w * sin.abs() + h * cos.abs()) - 1e-9).ceil().max(1.0) as usize;
    let (ocx, ocy) = (out_w as f64 / 2.0, out_h as f64 / 2.0);
    let mut pixels = vec![0u8; out_w * out_h * 3];
    exec.for_each_chunk_mut(&mut pixels, out_w * 3 * ROW_CHUNK, |chunk_idx, chunk| {
        let y0 = chunk_idx * ROW_CHUNK;
        for (i, px) in chunk.chunks_exact_mut(3).enumerate() {
            let xo = (i % out_w) as f64 + 0.5 - ocx;
            let yo = (y0 + i / out_w) as f64 + 0.5 - ocy;
            // Inverse of the y-down counter-clockwise map.
            let sx = (xo * cos - yo * sin + w / 2.0).floor();
            let sy = (xo * sin + yo * cos + h / 2.0).floor();
            if sx >= 0.0 && sy >= 0.0 && sx < w && sy < h {
                px.copy_from_slice(&img.get(sx as usize, sy as usize));
            }
        }
    });
    RasterImage::new(out_w, out_h, pixels).expect("buffer sized from canvas")
}

/// Border-color / Otsu / largest-component background removal.
pub fn image_cutout(img: &RasterImage) -> Result<RasterImage, CutoutError> {
    let mask = cutout_mask(img)?;
    let kept = mask.iter().filter(|&&m| m).count();
    let coverage = kept as f64 / img.pixel_count() as f64;
    if !(0.05..=0.95).contains(&coverage) {
        return Err(CutoutError::CoverageOutOfBand {
            coverage_pct: coverage * 100.0,
        });
    }
    let mut out = img.clone();
    for (px, keep) in out.pixels_mut().chunks_exact_mut(3).zip(&mask) {
        if !keep {
            px.fill(0);
        }
    }
    Ok(out)
}

/// Foreground mask of the largest 4-connected component above the Otsu threshold.
pub fn cutout_mask(img: &RasterImage) -> Result<Vec<bool>, CutoutError> {
    let (w, h) = (img.width(), img.height());
    let border: Vec<[u8; 3]> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .filter(|&(x, y)| x == 0 || y == 0 || x + 1 == w || y + 1 == h)
        .map(|(x, y)| img.get(x, y))
        .collect();
    if border.len() < 4 {
        return Err(CutoutError::TooSmall);
    }
    let background = median_color(&border);
    let scores: Vec<f64> = img
        .pixels()
        .chunks_exact(3)
        .map(|p| {
            let d: f64 = (0..3).map(|c| (p[c] as f64 - background[c] as f64).powi(2)).sum();
            d.sqrt()
        })
        .collect();
    let bins: Vec<usize> = scores.iter().map(|s| s.floor() as usize).collect();
    let threshold = otsu_threshold(&bins);
    let foreground: Vec<bool> = bins.iter().map(|&b| b > threshold).collect();
    Ok(largest_component(&foreground, w, h))
}

/// Per-channel median (lower median for even counts).
fn median_color(pixels: &[[u8; 3]]) -> [u8; 3] {
    let mut out = [0u8; 3];
    for (c, slot) in out.iter_mut().enumerate() {
        let mut channel: Vec<u8> = pixels.iter().map(|p| p[c]).collect();
        channel.sort_unstable();
        *slot = channel[(channel.len() - 1) / 2];
    }
    out
}

/// Otsu's threshold over integer bins. Pixels with bin `<= t` are background.
/// Returns the first bin maximizing between-class variance; a histogram with
/// a single occupied bin yields that bin, so nothing is foreground.
pub fn otsu_threshold(bins: &[usize]) -> usize {
    let max_bin = bins.iter().copied().max().unwrap_or(0);
    let mut hist = vec![0u64; max_bin + 1];
    for &b in bins {
        hist[b] += 1;
    }
    let total = bins.len() as f64;
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum();
    let (mut w0, mut sum0) = (0.0f64, 0.0f64);
    let mut best = (f64::NEG_INFINITY, max_bin);
    for (t, &count) in hist.iter().enumerate() {
        w0 += count as f64;
        sum0 += t as f64 * count as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let mu0 = sum0 / w0;
        let mu1 = (sum_all - sum0) / w1;
        let between = w0 * w1 * (mu0 - mu1).powi(2);
        if between > best.0 {
            best = (between, t);
        }
    }
    best.1
}

/// Keeps the largest 4-connected `true` region; ties go to the region found
/// first in raster order.
fn largest_component(mask: &[bool], w: usize, h: usize) -> Vec<bool> {
    let mut label = vec![usize::MAX; mask.len()];
    let mut best: Option<(usize, usize)> = None;
    let mut queue = VecDeque::new();
    let mut next = 0;
    for start in 0..mask.len() {
        if !mask[start] || label[start] != usize::MAX {
            continue;
        }
        let mut size = 0;
        label[start] = next;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            size += 1;
            let (x, y) = (i % w, i / w);
            let mut visit = |j: usize| {
                if mask[j] && label[j] == usize::MAX {
                    label[j] = next;
                    queue.push_back(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        if best.is_none_or(|(_, s)| size > s) {
            best = Some((next, size));
        }
        next += 1;
    }
    match best {
        Some((keep, _)) => label.iter().map(|&l| l == keep).collect(),
        None => vec![false; mask.len()],
    }
}
