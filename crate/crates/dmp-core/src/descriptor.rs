//! Built-in hand-crafted frame descriptor.
//!
//! Stands in for a learned encoder so the engine can run on raw videos: the
//! image is converted to CIELAB, cut into non-overlapping square patches
//! (stride = patch size; trailing pixels that do not fill a patch are
//! dropped), and each patch yields 10 channels — mean L/a/b, per-patch
//! L/a/b standard deviation, and a 4-bin gradient-orientation histogram of
//! the L plane. Channels are finally standardized to zero mean and unit
//! variance over the frame (constant channels standardize to zero).

use crate::color::rgb_to_lab;
use crate::error::{Error, Result};
use crate::feature::FeatureMap;
use image::RgbImage;

/// Channel count produced per patch.
pub const DESCRIPTOR_CHANNELS: usize = 10;

/// Orientation histogram bins over gradient direction modulo pi; bin 0
/// holds near-horizontal gradients (vertical edges).
const ORIENTATION_BINS: usize = 4;

fn luminance_plane(image: &RgbImage) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (w, h) = image.dimensions();
    let n = (w * h) as usize;
    let (mut l, mut a, mut b) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for pixel in image.pixels() {
        let (pl, pa, pb) = rgb_to_lab(pixel.0[0], pixel.0[1], pixel.0[2]);
        l.push(pl);
        a.push(pa);
        b.push(pb);
    }
    (l, a, b)
}

/// Clamped central differences of a plane: borders fall back to halved
/// one-sided differences via index clamping.
fn gradients(plane: &[f64], h: usize, w: usize) -> (Vec<f64>, Vec<f64>) {
    let mut gx = vec![0.0f64; h * w];
    let mut gy = vec![0.0f64; h * w];
    for y in 0..h {
        for x in 0..w {
            let xp = (x + 1).min(w - 1);
            let xm = x.saturating_sub(1);
            let yp = (y + 1).min(h - 1);
            let ym = y.saturating_sub(1);
            gx[y * w + x] = (plane[y * w + xp] - plane[y * w + xm]) / 2.0;
            gy[y * w + x] = (plane[yp * w + x] - plane[ym * w + x]) / 2.0;
        }
    }
    (gx, gy)
}

/// Patch statistics before frame-level standardization. Uniform images
/// yield exact zeros in the std and histogram channels.
pub fn builtin_features_raw(image: &RgbImage, patch_size: usize) -> Result<FeatureMap> {
    if patch_size == 0 {
        return Err(Error::validation("patch size must be positive".to_string()));
    }
    let (w, h) = (image.width() as usize, image.height() as usize);
    if h < patch_size || w < patch_size {
        return Err(Error::validation(format!(
            "image {h}x{w} is smaller than one {patch_size}x{patch_size} patch"
        )));
    }
    let (hf, wf) = (h / patch_size, w / patch_size);

    let (l, a, b) = luminance_plane(image);
    let (gx, gy) = gradients(&l, h, w);

    let mut out = FeatureMap::zeros(hf, wf, DESCRIPTOR_CHANNELS)?;
    let area = (patch_size * patch_size) as f64;
    for py in 0..hf {
        for px in 0..wf {
            let mut mean = [0.0f64; 3];
            let mut sq = [0.0f64; 3];
            let mut hist = [0.0f64; ORIENTATION_BINS];
            let mut mass = 0.0f64;
            for dy in 0..patch_size {
                for dx in 0..patch_size {
                    let idx = (py * patch_size + dy) * w + px * patch_size + dx;
                    for (k, plane) in [&l, &a, &b].into_iter().enumerate() {
                        mean[k] += plane[idx];
                        sq[k] += plane[idx] * plane[idx];
                    }
                    let (dgx, dgy) = (gx[idx], gy[idx]);
                    let magnitude = (dgx * dgx + dgy * dgy).sqrt();
                    if magnitude > 0.0 {
                        let theta = dgy.atan2(dgx).rem_euclid(std::f64::consts::PI);
                        let bin = ((theta / (std::f64::consts::PI / ORIENTATION_BINS as f64))
                            as usize)
                            .min(ORIENTATION_BINS - 1);
                        hist[bin] += magnitude;
                        mass += magnitude;
                    }
                }
            }
            for k in 0..3 {
                mean[k] /= area;
                let var = (sq[k] / area - mean[k] * mean[k]).max(0.0);
                out.set(py, px, k, mean[k]);
                out.set(py, px, 3 + k, var.sqrt());
            }
            if mass > 0.0 {
                for (bin, &v) in hist.iter().enumerate() {
                    out.set(py, px, 6 + bin, v / mass);
                }
            }
        }
    }
    Ok(out)
}

/// Standardizes every channel to zero mean and unit variance across the
/// frame's patches; channels with no variance become all-zero.
pub fn standardize_per_frame(map: &FeatureMap) -> FeatureMap {
    let n = (map.height() * map.width()) as f64;
    let c = map.channels();
    let mut means = vec![0.0f64; c];
    let mut sqs = vec![0.0f64; c];
    for p in 0..map.height() * map.width() {
        for (ch, &v) in map.pixel_flat(p).iter().enumerate() {
            means[ch] += v;
            sqs[ch] += v * v;
        }
    }
    let mut scales = vec![0.0f64; c];
    for ch in 0..c {
        means[ch] /= n;
        let var = (sqs[ch] / n - means[ch] * means[ch]).max(0.0);
        let std = var.sqrt();
        scales[ch] = if std > 1e-12 { 1.0 / std } else { 0.0 };
    }

    let mut out = map.clone();
    for y in 0..map.height() {
        for x in 0..map.width() {
            for ch in 0..c {
                out.set(y, x, ch, (map.get(y, x, ch) - means[ch]) * scales[ch]);
            }
        }
    }
    out
}

/// Full descriptor: patch statistics standardized per frame.
pub fn builtin_features(image: &RgbImage, patch_size: usize) -> Result<FeatureMap> {
    Ok(standardize_per_frame(&builtin_features_raw(image, patch_size)?))
}
