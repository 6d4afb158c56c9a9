//! Per-pixel label fields: the values that get propagated from reference
//! frames onto a query frame.
//!
//! Three kinds are supported. Color labels are a single rescaled a-channel
//! (self-supervision signal); mask labels are per-pixel one-hot (well,
//! simplex-valued once they have been averaged or reconstructed) class
//! distributions with channel 0 reserved for background; keypoint labels are
//! one Gaussian heatmap channel per tracked point.

use crate::error::{Error, Result};

/// What a [`LabelField`]'s channels mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelKind {
    /// Single channel: the rescaled Lab a-channel in `[0, 1]`.
    ColorAChannel,
    /// `K + 1` channels: background + K objects, each pixel a distribution
    /// over classes.
    MaskOnehot,
    /// One heatmap channel per keypoint, values in `[0, 1]`.
    KeypointHeatmap,
}

/// Channel-last, row-major label tensor tied to a [`LabelKind`].
#[derive(Debug, Clone, PartialEq)]
pub struct LabelField {
    height: usize,
    width: usize,
    label_dim: usize,
    kind: LabelKind,
    data: Vec<f64>,
}

/// Slack allowed when checking that a mask pixel's class distribution sums
/// to one.
const SIMPLEX_TOLERANCE: f64 = 1e-5;

impl LabelField {
    /// Builds a field from raw channel-last data, validating the per-kind
    /// invariants (finiteness everywhere; simplex rows for masks; `[0, 1]`
    /// range for color and heatmap channels, with a small tolerance).
    pub fn new(
        height: usize,
        width: usize,
        label_dim: usize,
        kind: LabelKind,
        data: Vec<f64>,
    ) -> Result<Self> {
        if height == 0 || width == 0 || label_dim == 0 {
            return Err(Error::validation(format!(
                "label field dimensions must be positive, got {height}x{width}x{label_dim}"
            )));
        }
        if kind == LabelKind::ColorAChannel && label_dim != 1 {
            return Err(Error::validation(format!(
                "color label fields are single-channel, got {label_dim}"
            )));
        }
        let expected = height * width * label_dim;
        if data.len() != expected {
            return Err(Error::validation(format!(
                "label data length {} does not match {height}x{width}x{label_dim} = {expected}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation(
                "label field contains non-finite values".to_string(),
            ));
        }
        let field = LabelField {
            height,
            width,
            label_dim,
            kind,
            data,
        };
        field.check_kind_invariants()?;
        Ok(field)
    }

    fn check_kind_invariants(&self) -> Result<()> {
        match self.kind {
            LabelKind::MaskOnehot => {
                for p in 0..self.pixels() {
                    let row = self.pixel_flat(p);
                    let mut sum = 0.0;
                    for &v in row {
                        if v < -SIMPLEX_TOLERANCE || v > 1.0 + SIMPLEX_TOLERANCE {
                            return Err(Error::validation(format!(
                                "mask label value {v} outside [0,1] at pixel {p}"
                            )));
                        }
                        sum += v;
                    }
                    if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
                        return Err(Error::validation(format!(
                            "mask label at pixel {p} sums to {sum}, expected 1"
                        )));
                    }
                }
            }
            LabelKind::ColorAChannel | LabelKind::KeypointHeatmap => {
                for (i, &v) in self.data.iter().enumerate() {
                    if v < -SIMPLEX_TOLERANCE || v > 1.0 + SIMPLEX_TOLERANCE {
                        return Err(Error::validation(format!(
                            "label value {v} outside [0,1] at flat index {i}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn label_dim(&self) -> usize {
        self.label_dim
    }

    pub fn kind(&self) -> LabelKind {
        self.kind
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, d: usize) -> f64 {
        debug_assert!(y < self.height && x < self.width && d < self.label_dim);
        self.data[(y * self.width + x) * self.label_dim + d]
    }

    /// Label vector of one spatial position, by flat pixel index.
    #[inline]
    pub fn pixel_flat(&self, p: usize) -> &[f64] {
        debug_assert!(p < self.pixels());
        let start = p * self.label_dim;
        &self.data[start..start + self.label_dim]
    }

    /// Per-pixel argmax class, ties resolving to the lowest channel index.
    /// Only meaningful for mask fields, where it recovers class indices.
    pub fn argmax_classes(&self) -> Vec<usize> {
        (0..self.pixels())
            .map(|p| {
                let row = self.pixel_flat(p);
                let mut best = 0usize;
                for (i, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = i;
                    }
                }
                best
            })
            .collect()
    }
}
