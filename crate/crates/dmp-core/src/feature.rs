//! Dense per-pixel feature maps and the smoothing / peak-extraction
//! primitives built on top of them.
//!
//! A [`FeatureMap`] is a channel-last, row-major `h x w x c` tensor of finite
//! `f64` values. The blur here is a truncated, renormalized Gaussian applied
//! with reflect padding; peaks are taken on the channel-summed blurred map
//! and reported in resolution-independent `[0, 1]` coordinates so that maps
//! of different sizes can be compared.

use crate::error::{Error, Result};

/// Channel-last, row-major dense feature tensor.
///
/// Index layout: `data[(y * width + x) * channels + c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    /// Builds a map from raw channel-last data, validating shape and
    /// finiteness.
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::validation(format!(
                "feature map dimensions must be positive, got {height}x{width}x{channels}"
            )));
        }
        let expected = height * width * channels;
        if data.len() != expected {
            return Err(Error::validation(format!(
                "feature map data length {} does not match {height}x{width}x{channels} = {expected}",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::validation(format!(
                "feature map contains non-finite value {bad}"
            )));
        }
        Ok(FeatureMap {
            height,
            width,
            channels,
            data,
        })
    }

    /// All-zero map of the given shape.
    pub fn zeros(height: usize, width: usize, channels: usize) -> Result<Self> {
        FeatureMap::new(height, width, channels, vec![0.0; height * width * channels])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Number of spatial positions (`height * width`).
    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        debug_assert!(y < self.height && x < self.width && c < self.channels);
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, value: f64) {
        debug_assert!(y < self.height && x < self.width && c < self.channels);
        debug_assert!(value.is_finite());
        self.data[(y * self.width + x) * self.channels + c] = value;
    }

    /// Channel slice of one spatial position.
    #[inline]
    pub fn pixel(&self, y: usize, x: usize) -> &[f64] {
        debug_assert!(y < self.height && x < self.width);
        let start = (y * self.width + x) * self.channels;
        &self.data[start..start + self.channels]
    }

    /// Channel slice of one spatial position, by flat pixel index
    /// (`y * width + x`).
    #[inline]
    pub fn pixel_flat(&self, p: usize) -> &[f64] {
        debug_assert!(p < self.pixels());
        let start = p * self.channels;
        &self.data[start..start + self.channels]
    }
}

/// A point in resolution-independent coordinates, both axes in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedPoint {
    x: f64,
    y: f64,
}

impl NormalizedPoint {
    pub fn new(x: f64, y: f64) -> Result<Self> {
        if !(x.is_finite() && y.is_finite()) || !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y)
        {
            return Err(Error::validation(format!(
                "normalized point ({x}, {y}) outside [0,1]^2"
            )));
        }
        Ok(NormalizedPoint { x, y })
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }
}

/// Euclidean distance between two normalized points (range `[0, sqrt(2)]`).
pub fn normalized_distance(a: NormalizedPoint, b: NormalizedPoint) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    (dx * dx + dy * dy).sqrt()
}

/// Truncated-Gaussian blur parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlurParams {
    sigma_x: f64,
    sigma_y: f64,
    radius: usize,
}

impl BlurParams {
    pub fn new(sigma_x: f64, sigma_y: f64, radius: usize) -> Result<Self> {
        if !(sigma_x.is_finite() && sigma_y.is_finite()) || sigma_x <= 0.0 || sigma_y <= 0.0 {
            return Err(Error::validation(format!(
                "blur sigmas must be positive and finite, got ({sigma_x}, {sigma_y})"
            )));
        }
        Ok(BlurParams {
            sigma_x,
            sigma_y,
            radius,
        })
    }

    /// Default parameters for a map of the given spatial size:
    /// `sigma = 0.05 * min(h, w)` on both axes, radius `ceil(3 * sigma)`.
    pub fn for_map(height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::validation(
                "blur defaults need a non-empty map".to_string(),
            ));
        }
        let sigma = 0.05 * height.min(width) as f64;
        // Guard tiny maps: 0.05 * 1 is a valid sigma, but keep it positive.
        let sigma = sigma.max(1e-3);
        let radius = (3.0 * sigma).ceil() as usize;
        BlurParams::new(sigma, sigma, radius)
    }

    pub fn sigma_x(&self) -> f64 {
        self.sigma_x
    }

    pub fn sigma_y(&self) -> f64 {
        self.sigma_y
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    /// One-dimensional kernel for one axis, renormalized to sum to 1.
    /// The product of the two axis kernels is the full 2-D kernel, which
    /// therefore also sums to 1.
    fn kernel(sigma: f64, radius: usize) -> Vec<f64> {
        let mut k: Vec<f64> = (-(radius as isize)..=radius as isize)
            .map(|d| {
                let d = d as f64;
                (-(d * d) / (2.0 * sigma * sigma)).exp()
            })
            .collect();
        let total: f64 = k.iter().sum();
        for w in &mut k {
            *w /= total;
        }
        k
    }
}

/// Reflects an out-of-range index back into `[0, n)` by folding across the
/// borders (whole-sample reflection: `-1 -> 1`, `n -> n - 2`). Any offset is
/// handled by reducing modulo the folding period first.
#[inline]
fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let n = n as isize;
    let period = 2 * (n - 1);
    let mut j = i.rem_euclid(period);
    if j >= n {
        j = period - j;
    }
    j as usize
}

/// Gaussian-blurs every channel of `map` with reflect padding.
///
/// The kernel is separable, so this runs as a horizontal pass followed by a
/// vertical pass; with per-axis reflect indexing that is exactly equivalent
/// to one dense 2-D convolution with the product kernel.
pub fn gaussian_blur_2d(map: &FeatureMap, params: &BlurParams) -> Result<FeatureMap> {
    let (h, w, c) = (map.height, map.width, map.channels);
    let r = params.radius as isize;
    let kx = BlurParams::kernel(params.sigma_x, params.radius);
    let ky = BlurParams::kernel(params.sigma_y, params.radius);

    // Horizontal pass.
    let mut tmp = vec![0.0f64; h * w * c];
    for y in 0..h {
        for x in 0..w {
            let out = (y * w + x) * c;
            for (ki, &kw) in kx.iter().enumerate() {
                let sx = reflect_index(x as isize + ki as isize - r, w);
                let src = (y * w + sx) * c;
                for ch in 0..c {
                    tmp[out + ch] += kw * map.data[src + ch];
                }
            }
        }
    }

    // Vertical pass.
    let mut out_data = vec![0.0f64; h * w * c];
    for y in 0..h {
        for x in 0..w {
            let out = (y * w + x) * c;
            for (ki, &kw) in ky.iter().enumerate() {
                let sy = reflect_index(y as isize + ki as isize - r, h);
                let src = (sy * w + x) * c;
                for ch in 0..c {
                    out_data[out + ch] += kw * tmp[src + ch];
                }
            }
        }
    }

    FeatureMap::new(h, w, c, out_data)
}

/// Location of the strongest response in a feature map.
///
/// The map is blurred, channels are summed per pixel, and the argmax is
/// reported in normalized coordinates (`x = col / (w - 1)`,
/// `y = row / (h - 1)`; a length-1 axis maps to 0). Ties resolve to the
/// lowest row, then the lowest column.
pub fn peak_location(map: &FeatureMap, params: &BlurParams) -> Result<NormalizedPoint> {
    let blurred = gaussian_blur_2d(map, params)?;
    let (h, w, c) = (blurred.height, blurred.width, blurred.channels);

    let mut best_val = f64::NEG_INFINITY;
    let mut best = (0usize, 0usize);
    for y in 0..h {
        for x in 0..w {
            let s: f64 = blurred.pixel(y, x).iter().sum();
            // Strict comparison keeps the first (lowest row, then column)
            // position on ties.
            if s > best_val {
                best_val = s;
                best = (y, x);
            }
        }
    }
    let _ = c;

    let x = if w > 1 {
        best.1 as f64 / (w - 1) as f64
    } else {
        0.0
    };
    let y = if h > 1 {
        best.0 as f64 / (h - 1) as f64
    } else {
        0.0
    };
    NormalizedPoint::new(x, y)
}
