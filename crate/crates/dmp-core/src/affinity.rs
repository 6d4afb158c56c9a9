//! Affinity computation and label reconstruction.
//!
//! The affinity matrix is the workhorse of propagation: row `i` is a
//! probability distribution over every reference pixel, obtained by a single
//! joint softmax of scaled feature dot products across the union of all
//! reference frames. Reconstructing a query label is then one matrix-vector
//! product per label channel, and two branches' affinities are fused by a
//! loss-weighted convex combination.

use crate::error::{Error, Result};
use crate::feature::FeatureMap;
use crate::label::LabelField;

/// Row-stochastic matrix mapping query pixels to reference pixels.
///
/// Rows are laid out row-major over the query's spatial positions; columns
/// run over the concatenated reference pixels in the order the reference
/// frames were supplied.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    target_height: usize,
    target_width: usize,
    source_pixels: usize,
    weights: Vec<f64>,
}

/// Slack allowed on row sums and entry range when validating a matrix.
const ROW_SUM_TOLERANCE: f64 = 1e-5;
const ENTRY_TOLERANCE: f64 = 1e-9;

impl AffinityMatrix {
    /// Builds a matrix from raw row-major weights, validating that every
    /// entry lies in `[0, 1]` and every row sums to 1 (within tolerance).
    pub fn new(
        target_height: usize,
        target_width: usize,
        source_pixels: usize,
        weights: Vec<f64>,
    ) -> Result<Self> {
        if target_height == 0 || target_width == 0 || source_pixels == 0 {
            return Err(Error::validation(format!(
                "affinity dimensions must be positive, got {target_height}x{target_width} -> {source_pixels}"
            )));
        }
        let rows = target_height * target_width;
        if weights.len() != rows * source_pixels {
            return Err(Error::validation(format!(
                "affinity weight count {} does not match {rows} rows x {source_pixels} columns",
                weights.len()
            )));
        }
        for r in 0..rows {
            let row = &weights[r * source_pixels..(r + 1) * source_pixels];
            let mut sum = 0.0;
            for &w in row {
                if !w.is_finite() || w < -ENTRY_TOLERANCE || w > 1.0 + ENTRY_TOLERANCE {
                    return Err(Error::validation(format!(
                        "affinity entry {w} outside [0,1] in row {r}"
                    )));
                }
                sum += w;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::validation(format!(
                    "affinity row {r} sums to {sum}, expected 1"
                )));
            }
        }
        Ok(AffinityMatrix {
            target_height,
            target_width,
            source_pixels,
            weights,
        })
    }

    pub fn target_height(&self) -> usize {
        self.target_height
    }

    pub fn target_width(&self) -> usize {
        self.target_width
    }

    /// Number of query rows (`target_height * target_width`).
    pub fn target_pixels(&self) -> usize {
        self.target_height * self.target_width
    }

    pub fn source_pixels(&self) -> usize {
        self.source_pixels
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        debug_assert!(i < self.target_pixels());
        &self.weights[i * self.source_pixels..(i + 1) * self.source_pixels]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Computes the row-stochastic affinity between a query map and the union of
/// reference maps: one softmax per query pixel over *all* reference pixels
/// jointly, scores being feature dot products divided by `temperature`.
pub fn compute_affinity(
    query: &FeatureMap,
    references: &[&FeatureMap],
    temperature: f64,
) -> Result<AffinityMatrix> {
    if references.is_empty() {
        return Err(Error::validation(
            "affinity needs at least one reference frame".to_string(),
        ));
    }
    if !temperature.is_finite() || temperature <= 0.0 {
        return Err(Error::validation(format!(
            "softmax temperature must be positive, got {temperature}"
        )));
    }
    let c = query.channels();
    for (i, r) in references.iter().enumerate() {
        if r.channels() != c {
            return Err(Error::validation(format!(
                "reference {i} has {} channels, query has {c}",
                r.channels()
            )));
        }
    }

    let source_pixels: usize = references.iter().map(|r| r.pixels()).sum();
    let rows = query.pixels();
    let mut weights = vec![0.0f64; rows * source_pixels];
    let mut scores = vec![0.0f64; source_pixels];

    for i in 0..rows {
        let q = query.pixel_flat(i);
        let mut col = 0usize;
        for r in references {
            for j in 0..r.pixels() {
                let k = r.pixel_flat(j);
                let mut dot = 0.0;
                for ch in 0..c {
                    dot += q[ch] * k[ch];
                }
                scores[col] = dot / temperature;
                col += 1;
            }
        }
        // Max-subtracted softmax: immune to overflow, and underflow of
        // hopeless entries to exact zero is fine for a probability row.
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for s in scores.iter_mut() {
            *s = (*s - max).exp();
            denom += *s;
        }
        let out = &mut weights[i * source_pixels..(i + 1) * source_pixels];
        for (w, &s) in out.iter_mut().zip(scores.iter()) {
            *w = s / denom;
        }
    }

    AffinityMatrix::new(query.height(), query.width(), source_pixels, weights)
}

/// Propagates reference labels onto the query: each query pixel's label is
/// the affinity-weighted average of all reference pixels' labels.
pub fn reconstruct_labels(
    affinity: &AffinityMatrix,
    reference_labels: &[&LabelField],
) -> Result<LabelField> {
    if reference_labels.is_empty() {
        return Err(Error::validation(
            "label reconstruction needs at least one reference label field".to_string(),
        ));
    }
    let kind = reference_labels[0].kind();
    let dim = reference_labels[0].label_dim();
    for (i, l) in reference_labels.iter().enumerate() {
        if l.kind() != kind {
            return Err(Error::Mode(format!(
                "reference label {i} has kind {:?}, expected {kind:?}",
                l.kind()
            )));
        }
        if l.label_dim() != dim {
            return Err(Error::validation(format!(
                "reference label {i} has dim {}, expected {dim}",
                l.label_dim()
            )));
        }
    }
    let total: usize = reference_labels.iter().map(|l| l.pixels()).sum();
    if total != affinity.source_pixels() {
        return Err(Error::validation(format!(
            "reference labels cover {total} pixels, affinity expects {}",
            affinity.source_pixels()
        )));
    }

    // Flatten the reference label pixels once so the inner loop is a plain
    // weighted accumulation.
    let mut flat = Vec::with_capacity(total);
    for l in reference_labels {
        for p in 0..l.pixels() {
            flat.push(l.pixel_flat(p));
        }
    }

    let rows = affinity.target_pixels();
    let mut out = vec![0.0f64; rows * dim];
    for i in 0..rows {
        let row = affinity.row(i);
        let acc = &mut out[i * dim..(i + 1) * dim];
        for (j, &w) in row.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (a, &v) in acc.iter_mut().zip(flat[j]) {
                *a += w * v;
            }
        }
    }

    LabelField::new(
        affinity.target_height(),
        affinity.target_width(),
        dim,
        kind,
        out,
    )
}

/// Normalized mean absolute error between two label fields of the same kind
/// and shape. All label kinds live in `[0, 1]`, so the range normalizer is 1
/// and the result is clamped to `[0, 1]`.
pub fn reconstruction_loss(predicted: &LabelField, observed: &LabelField) -> Result<f64> {
    if predicted.kind() != observed.kind() {
        return Err(Error::Mode(format!(
            "cannot compare {:?} labels against {:?}",
            predicted.kind(),
            observed.kind()
        )));
    }
    if predicted.height() != observed.height()
        || predicted.width() != observed.width()
        || predicted.label_dim() != observed.label_dim()
    {
        return Err(Error::validation(format!(
            "label shapes differ: {}x{}x{} vs {}x{}x{}",
            predicted.height(),
            predicted.width(),
            predicted.label_dim(),
            observed.height(),
            observed.width(),
            observed.label_dim()
        )));
    }
    let n = predicted.data().len() as f64;
    let mae: f64 = predicted
        .data()
        .iter()
        .zip(observed.data())
        .map(|(p, o)| (p - o).abs())
        .sum::<f64>()
        / n;
    // Label values span [0, 1] for every kind, so the range divisor is 1.
    Ok(mae.clamp(0.0, 1.0))
}

/// One propagation branch's output: its affinity, the label field it
/// reconstructed, and its (clamped) reconstruction loss.
#[derive(Debug, Clone)]
pub struct BranchResult {
    affinity: AffinityMatrix,
    reconstruction: LabelField,
    loss: f64,
}

impl BranchResult {
    pub fn new(affinity: AffinityMatrix, reconstruction: LabelField, loss: f64) -> Result<Self> {
        if !loss.is_finite() {
            return Err(Error::validation(format!("branch loss {loss} is not finite")));
        }
        if reconstruction.height() != affinity.target_height()
            || reconstruction.width() != affinity.target_width()
        {
            return Err(Error::validation(format!(
                "branch reconstruction is {}x{}, affinity target is {}x{}",
                reconstruction.height(),
                reconstruction.width(),
                affinity.target_height(),
                affinity.target_width()
            )));
        }
        Ok(BranchResult {
            affinity,
            reconstruction,
            loss: loss.clamp(0.0, 1.0),
        })
    }

    pub fn affinity(&self) -> &AffinityMatrix {
        &self.affinity
    }

    pub fn reconstruction(&self) -> &LabelField {
        &self.reconstruction
    }

    pub fn loss(&self) -> f64 {
        self.loss
    }
}

/// Fuses the two branches' affinities with cross-loss weights:
///
/// ```text
/// A_fuse = ((1 - loss_pr) * A_nr + (1 - loss_nr) * A_pr)
///          / ((1 - loss_pr) + (1 - loss_nr))
/// ```
///
/// When both losses are 1 the weights vanish and the fusion falls back to
/// the unweighted element-wise mean. Degenerate single-sided weights return
/// the surviving matrix bit-exactly.
pub fn fuse_affinity(nr: &BranchResult, pr: &BranchResult) -> Result<AffinityMatrix> {
    let a = nr.affinity();
    let b = pr.affinity();
    if a.target_height() != b.target_height()
        || a.target_width() != b.target_width()
        || a.source_pixels() != b.source_pixels()
    {
        return Err(Error::validation(format!(
            "cannot fuse affinities of different shapes: {}x{}->{} vs {}x{}->{}",
            a.target_height(),
            a.target_width(),
            a.source_pixels(),
            b.target_height(),
            b.target_width(),
            b.source_pixels()
        )));
    }

    let w_nr = 1.0 - pr.loss();
    let w_pr = 1.0 - nr.loss();

    let fused: Vec<f64> = if w_nr == w_pr {
        // Covers both the equal-loss case and the double-degenerate
        // "both losses are 1" fallback: the element-wise mean.
        a.weights()
            .iter()
            .zip(b.weights())
            .map(|(x, y)| 0.5 * (x + y))
            .collect()
    } else if w_pr == 0.0 {
        a.weights().to_vec()
    } else if w_nr == 0.0 {
        b.weights().to_vec()
    } else {
        let denom = w_nr + w_pr;
        a.weights()
            .iter()
            .zip(b.weights())
            .map(|(x, y)| (w_nr * x + w_pr * y) / denom)
            .collect()
    };

    AffinityMatrix::new(a.target_height(), a.target_width(), a.source_pixels(), fused)
}
