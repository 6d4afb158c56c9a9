//! End-to-end propagation: frame ingestion, feature provision, per-frame
//! dual-branch label transport, and sequence-level memory advance.
//!
//! Per query frame the engine (1) reconstructs labels through a joint
//! softmax affinity over every banked reference, (2) optionally builds a
//! second affinity from a label-enhanced query against recent references
//! plus cluster-restricted matching against distant ones, (3) weighs the two
//! by how well each reconstructs the observed chroma, and (4) feeds the
//! admission gates that decide which frames the banks keep.

use crate::affinity::{
    compute_affinity, fuse_affinity, reconstruct_labels, reconstruction_loss, AffinityMatrix,
    BranchResult,
};
use crate::clustering::{cluster_reference, cluster_target, partition_grids, ClusterParams};
use crate::color::rgb_to_lab_a_channel;
use crate::config::{ProviderKind, RunConfig};
use crate::descriptor::builtin_features;
use crate::error::{Error, Result};
use crate::feature::{peak_location, BlurParams, FeatureMap};
use crate::io::mask_png::IndexMask;
use crate::label::{LabelField, LabelKind};
use crate::memory::{FrameRecord, MemoryBanks};
use crate::metrics::Keypoint;
use crate::prediction::{
    apply_labels, forward_label_optimize, merged_restricted_affinity, split_by_cluster,
};
use image::RgbImage;
use std::collections::VecDeque;
use std::time::Instant;

/// Spread (in feature pixels) of the Gaussian bump around a seeded keypoint.
pub const KEYPOINT_SIGMA: f64 = 2.0;

/// What kind of labels a sequence carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Self-supervised chroma reconstruction: labels are the observed
    /// a-channels themselves.
    Color,
    /// Segmentation masks seeded on frame 0.
    Mask,
    /// Sparse keypoints seeded on frame 0, carried as heatmap channels.
    Keypoint,
}

/// A sequence to propagate: ordered frames plus the frame-0 annotation
/// appropriate for the mode.
#[derive(Debug, Clone)]
pub struct SequenceSource {
    pub images: Vec<RgbImage>,
    pub mode: Mode,
    /// Frame-0 mask at image resolution (mask mode).
    pub seed_mask: Option<IndexMask>,
    /// Frame-0 keypoints in pixel coordinates (keypoint mode).
    pub seed_keypoints: Option<Vec<Keypoint>>,
}

/// Where per-frame features come from.
#[derive(Debug, Clone)]
pub enum FeatureProvider {
    /// Patch descriptor computed from the frames themselves.
    Builtin { patch_size: usize },
    /// One externally produced map per frame, in frame order.
    Precomputed { maps: Vec<FeatureMap> },
}

/// Ablation switches. Defaults enable everything.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PipelineOptions {
    /// When false the long-term bank is neither read nor extended; all
    /// references come from the short-term bank.
    pub enable_long_term: bool,
    /// When false the prediction branch and fusion are skipped entirely and
    /// labels are reconstructed from the joint-softmax affinity alone.
    pub enable_prediction_branch: bool,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            enable_long_term: true,
            enable_prediction_branch: true,
        }
    }
}

/// One admission attempt against one bank.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AdmissionRecord {
    pub candidate: usize,
    pub admitted: bool,
    pub evicted: Option<usize>,
}

/// Per-frame diagnostics, parallel to the outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameDiagnostics {
    pub frame_index: usize,
    /// Chroma-reconstruction loss of the joint-softmax branch.
    pub loss_nr: f64,
    /// Chroma-reconstruction loss of the prediction branch (`None` when the
    /// branch is disabled).
    pub loss_pr: Option<f64>,
    /// Pre-normalization fusion weight on the joint-softmax affinity.
    pub weight_nr: f64,
    /// Pre-normalization fusion weight on the prediction affinity.
    pub weight_pr: f64,
    pub short_admission: Option<AdmissionRecord>,
    pub long_admission: Option<AdmissionRecord>,
    /// Cluster count of the query's region model (`None` when the
    /// prediction branch is disabled).
    pub cluster_count: Option<usize>,
    pub wall_ms: f64,
}

/// Sequence-level state folded over the frames: the memory banks, the
/// emitted label fields, and their diagnostics.
#[derive(Debug, Clone)]
pub struct PropagationState {
    banks: MemoryBanks,
    mode: Mode,
    options: PipelineOptions,
    run: RunConfig,
    patch: usize,
    label_dim: usize,
    image_height: usize,
    image_width: usize,
    feat_height: usize,
    feat_width: usize,
    feat_channels: usize,
    next_index: usize,
    outputs: Vec<LabelField>,
    diagnostics: Vec<FrameDiagnostics>,
    /// Recently processed records (including frame 0), kept long enough to
    /// serve as short-term candidates (previous frame) and long-term
    /// candidates (exactly `long_min_gap` frames back).
    history: VecDeque<FrameRecord>,
}

impl PropagationState {
    /// Seeds the state with frame 0: its features, its image (for the
    /// chroma target), and its labels at feature resolution.
    pub fn seed(
        run: &RunConfig,
        options: PipelineOptions,
        mode: Mode,
        patch: usize,
        features: FeatureMap,
        image: &RgbImage,
        labels: LabelField,
    ) -> Result<Self> {
        run.validate()?;
        if patch == 0 {
            return Err(Error::validation("patch size must be positive".to_string()));
        }
        let expected_kind = match mode {
            Mode::Color => LabelKind::ColorAChannel,
            Mode::Mask => LabelKind::MaskOnehot,
            Mode::Keypoint => LabelKind::KeypointHeatmap,
        };
        if labels.kind() != expected_kind {
            return Err(Error::Mode(format!(
                "{mode:?} mode cannot seed {:?} labels",
                labels.kind()
            )));
        }
        if labels.height() != features.height() || labels.width() != features.width() {
            return Err(Error::validation(format!(
                "seed labels {}x{} do not match features {}x{}",
                labels.height(),
                labels.width(),
                features.height(),
                features.width()
            )));
        }
        let (feat_height, feat_width, feat_channels) =
            (features.height(), features.width(), features.channels());
        if feat_height * patch > image.height() as usize
            || feat_width * patch > image.width() as usize
        {
            return Err(Error::validation(format!(
                "feature grid {feat_height}x{feat_width} with patch {patch} exceeds the {}x{} image",
                image.height(),
                image.width()
            )));
        }

        let color = downsample_a_channel(image, patch, feat_height, feat_width)?;
        let blur = BlurParams::for_map(feat_height, feat_width)?;
        let peak = peak_location(&features, &blur)?;
        let record = FrameRecord::new(0, features, labels, color, peak)?;

        let mut banks = MemoryBanks::new(run.memory.clone())?;
        banks.seed_initial(record.clone())?;

        let mut history = VecDeque::new();
        history.push_back(record);

        Ok(PropagationState {
            banks,
            mode,
            options,
            run: run.clone(),
            patch,
            label_dim: 0,
            image_height: image.height() as usize,
            image_width: image.width() as usize,
            feat_height,
            feat_width,
            feat_channels,
            next_index: 1,
            outputs: Vec::new(),
            diagnostics: Vec::new(),
            history,
        })
    }

    pub fn banks(&self) -> &MemoryBanks {
        &self.banks
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Side length of the pixel block each feature cell covers.
    pub fn patch(&self) -> usize {
        self.patch
    }

    pub fn image_height(&self) -> usize {
        self.image_height
    }

    pub fn image_width(&self) -> usize {
        self.image_width
    }

    /// Index of the next frame to be propagated.
    pub fn current_index(&self) -> usize {
        self.next_index
    }

    /// One label field per processed frame (frames 1..N-1), at feature
    /// resolution.
    pub fn outputs(&self) -> &[LabelField] {
        &self.outputs
    }

    pub fn diagnostics(&self) -> &[FrameDiagnostics] {
        &self.diagnostics
    }

    fn reconstruct_from(
        &self,
        query: &FeatureMap,
        refs: &[&FrameRecord],
    ) -> Result<LabelField> {
        let feats: Vec<&FeatureMap> = refs.iter().map(|r| r.features()).collect();
        let labels: Vec<&LabelField> = refs.iter().map(|r| r.labels()).collect();
        let affinity = compute_affinity(query, &feats, self.run.temperature)?;
        reconstruct_labels(&affinity, &labels)
    }

    /// Offers the previous frame to the short-term bank and, in mask mode,
    /// the frame exactly `long_min_gap` back to the long-term bank. Both
    /// gates use the new query (its peak, its reconstructions).
    fn update_memory(
        &mut self,
        t: usize,
        features: &FeatureMap,
        query_peak: crate::feature::NormalizedPoint,
    ) -> Result<(Option<AdmissionRecord>, Option<AdmissionRecord>)> {
        let mut short_admission = None;
        let previous = t - 1;
        let already_short = self
            .banks
            .short_term()
            .iter()
            .any(|r| r.frame_index() == previous);
        if !already_short {
            let candidate = self
                .history
                .iter()
                .find(|r| r.frame_index() == previous)
                .cloned()
                .ok_or_else(|| {
                    Error::validation(format!("frame {previous} missing from history"))
                })?;
            let outcome = self
                .banks
                .try_admit_short_term(candidate, query_peak, t)?;
            short_admission = Some(AdmissionRecord {
                candidate: previous,
                admitted: outcome.admitted,
                evicted: outcome.evicted,
            });
        }

        let mut long_admission = None;
        let gap = self.run.memory.long_min_gap;
        if self.options.enable_long_term && self.mode == Mode::Mask && t >= gap {
            let idx = t - gap;
            let already_long = self
                .banks
                .long_term()
                .iter()
                .any(|r| r.frame_index() == idx);
            if !already_long {
                if let Some(candidate) =
                    self.history.iter().find(|r| r.frame_index() == idx).cloned()
                {
                    let short_refs: Vec<&FrameRecord> = self.banks.short_term().iter().collect();
                    let recon_short = self.reconstruct_from(features, &short_refs)?;
                    let recon_long = self.reconstruct_from(features, &[&candidate])?;
                    let outcome =
                        self.banks
                            .try_admit_long_term(candidate, t, &recon_short, &recon_long)?;
                    long_admission = Some(AdmissionRecord {
                        candidate: idx,
                        admitted: outcome.admitted,
                        evicted: outcome.evicted,
                    });
                }
            }
        }
        Ok((short_admission, long_admission))
    }

    /// Propagates labels onto one new frame and advances the state.
    /// Returns the predicted label field at feature resolution.
    pub fn propagate_frame(
        &mut self,
        features: FeatureMap,
        image: &RgbImage,
    ) -> Result<LabelField> {
        let started = Instant::now();
        let t = self.next_index;
        if features.channels() != self.feat_channels {
            return Err(Error::validation(format!(
                "frame {t}: provider produced {} feature channels, the sequence uses {}",
                features.channels(),
                self.feat_channels
            )));
        }
        if features.height() != self.feat_height || features.width() != self.feat_width {
            return Err(Error::validation(format!(
                "frame {t}: feature map {}x{} does not match the sequence {}x{}",
                features.height(),
                features.width(),
                self.feat_height,
                self.feat_width
            )));
        }
        if image.height() as usize != self.image_height
            || image.width() as usize != self.image_width
        {
            return Err(Error::validation(format!(
                "frame {t}: image {}x{} does not match the sequence {}x{}",
                image.height(),
                image.width(),
                self.image_height,
                self.image_width
            )));
        }

        let color = downsample_a_channel(image, self.patch, self.feat_height, self.feat_width)?;
        let blur = BlurParams::for_map(self.feat_height, self.feat_width)?;
        let query_peak = peak_location(&features, &blur)?;

        let (short_admission, long_admission) = self.update_memory(t, &features, query_peak)?;

        // Reference roster: recent (short-only) frames ascending, then
        // distant frames ascending. Frames present in both banks are served
        // by the distant path so each reference appears exactly once.
        let long_refs: Vec<&FrameRecord> = if self.options.enable_long_term {
            let mut refs: Vec<&FrameRecord> = self.banks.long_term().iter().collect();
            refs.sort_by_key(|r| r.frame_index());
            refs
        } else {
            Vec::new()
        };
        let long_indices: Vec<usize> = long_refs.iter().map(|r| r.frame_index()).collect();
        let mut short_refs: Vec<&FrameRecord> = self
            .banks
            .short_term()
            .iter()
            .filter(|r| !long_indices.contains(&r.frame_index()))
            .collect();
        short_refs.sort_by_key(|r| r.frame_index());

        let roster: Vec<&FrameRecord> = short_refs
            .iter()
            .chain(long_refs.iter())
            .copied()
            .collect();
        if roster.is_empty() {
            return Err(Error::validation(format!(
                "frame {t}: no reference frames available"
            )));
        }
        let roster_feats: Vec<&FeatureMap> = roster.iter().map(|r| r.features()).collect();
        let roster_labels: Vec<&LabelField> = roster.iter().map(|r| r.labels()).collect();
        let roster_colors: Vec<&LabelField> = roster.iter().map(|r| r.color()).collect();

        let affinity_nr = compute_affinity(&features, &roster_feats, self.run.temperature)?;
        let recon_color_nr = reconstruct_labels(&affinity_nr, &roster_colors)?;
        let loss_nr = reconstruction_loss(&recon_color_nr, &color)?;

        let mut loss_pr = None;
        let mut cluster_count = None;
        let (final_affinity, weight_nr, weight_pr) = if self.options.enable_prediction_branch {
            let s = grid_size_for(self.feat_height, self.feat_width, self.run.grid_cells);
            let (geom, cells) = partition_grids(&features, s)?;
            let params = ClusterParams {
                lambda: self.run.lambda,
                ..ClusterParams::default()
            };
            let model = cluster_target(&cells, params)?;
            cluster_count = Some(model.cluster_count());

            let mut blocks: Vec<AffinityMatrix> = Vec::new();
            if !short_refs.is_empty() {
                let optimized = forward_label_optimize(
                    &model,
                    &cells,
                    self.run.zeta,
                    self.run.steps,
                    self.run.step_size,
                )?;
                let enhanced = apply_labels(&features, &geom, &optimized.labels)?;
                let short_feats: Vec<&FeatureMap> =
                    short_refs.iter().map(|r| r.features()).collect();
                blocks.push(compute_affinity(
                    &enhanced,
                    &short_feats,
                    self.run.temperature,
                )?);
            }
            if !long_refs.is_empty() {
                let assignment: Vec<Option<usize>> =
                    model.assignment().iter().map(|&c| Some(c)).collect();
                let query_split = split_by_cluster(
                    &features,
                    &geom,
                    &cells,
                    &assignment,
                    model.cluster_count(),
                )?;
                for reference in &long_refs {
                    let (ref_geom, ref_cells) = partition_grids(reference.features(), s)?;
                    let matched = cluster_reference(&ref_cells, &model)?;
                    let ref_split = split_by_cluster(
                        reference.features(),
                        &ref_geom,
                        &ref_cells,
                        matched.assigned(),
                        model.cluster_count(),
                    )?;
                    blocks.push(merged_restricted_affinity(
                        &query_split,
                        &ref_split,
                        self.run.temperature,
                    )?);
                }
            }
            let affinity_pr = concat_renormalize(&blocks)?;
            let recon_color_pr = reconstruct_labels(&affinity_pr, &roster_colors)?;
            let pr_loss = reconstruction_loss(&recon_color_pr, &color)?;
            loss_pr = Some(pr_loss);

            let nr_branch = BranchResult::new(affinity_nr, recon_color_nr, loss_nr)?;
            let pr_branch = BranchResult::new(affinity_pr, recon_color_pr, pr_loss)?;
            let fused = fuse_affinity(&nr_branch, &pr_branch)?;
            (fused, 1.0 - pr_loss, 1.0 - loss_nr)
        } else {
            (affinity_nr, 1.0, 0.0)
        };

        let labels = reconstruct_labels(&final_affinity, &roster_labels)?;

        drop(roster);
        drop(short_refs);
        drop(long_refs);

        // Banked masks are requantized to their argmax so the reference
        // chain carries crisp class decisions; relaying the soft fields
        // instead compounds their blur toward uniformity within a few
        // frames. Emitted outputs stay soft.
        let record_labels = match self.mode {
            Mode::Mask => requantize_mask(&labels)?,
            Mode::Color | Mode::Keypoint => labels.clone(),
        };
        let record = FrameRecord::new(t, features, record_labels, color, query_peak)?;
        self.history.push_back(record);
        let keep = self.run.memory.long_min_gap + 1;
        while self.history.len() > keep {
            self.history.pop_front();
        }

        self.label_dim = labels.label_dim();
        self.outputs.push(labels.clone());
        self.diagnostics.push(FrameDiagnostics {
            frame_index: t,
            loss_nr,
            loss_pr,
            weight_nr,
            weight_pr,
            short_admission,
            long_admission,
            cluster_count,
            wall_ms: started.elapsed().as_secs_f64() * 1000.0,
        });
        self.next_index += 1;

        #[cfg(debug_assertions)]
        self.banks.check_invariants()?;

        Ok(labels)
    }
}

/// Grid side length that yields about `grid_cells` cells along the longer
/// feature-map side, clamped so a cell never exceeds the map.
pub fn grid_size_for(height: usize, width: usize, grid_cells: usize) -> usize {
    let long_side = height.max(width);
    let s = long_side.div_ceil(grid_cells.max(1));
    s.max(1).min(height.min(width).max(1))
}

/// Column-concatenates row-stochastic blocks and renormalizes each row, so
/// every block contributes equal mass.
fn concat_renormalize(blocks: &[AffinityMatrix]) -> Result<AffinityMatrix> {
    if blocks.is_empty() {
        return Err(Error::validation(
            "prediction branch produced no affinity blocks".to_string(),
        ));
    }
    let height = blocks[0].target_height();
    let width = blocks[0].target_width();
    let rows = height * width;
    let columns: usize = blocks.iter().map(|b| b.source_pixels()).sum();
    let mut weights = Vec::with_capacity(rows * columns);
    for r in 0..rows {
        let start = weights.len();
        for block in blocks {
            weights.extend_from_slice(block.row(r));
        }
        let sum: f64 = weights[start..].iter().sum();
        for w in &mut weights[start..] {
            *w /= sum;
        }
    }
    AffinityMatrix::new(height, width, columns, weights)
}

/// Runs the whole sequence: seeds frame 0, then folds `propagate_frame`
/// over frames 1..N-1. Deterministic for identical inputs.
pub fn propagate_sequence(
    source: &SequenceSource,
    provider: &FeatureProvider,
    run: &RunConfig,
    options: PipelineOptions,
) -> Result<PropagationState> {
    run.validate()?;
    if source.images.len() < 2 {
        return Err(Error::validation(format!(
            "a sequence needs at least 2 frames, got {}",
            source.images.len()
        )));
    }
    let image_height = source.images[0].height() as usize;
    let image_width = source.images[0].width() as usize;
    for (i, image) in source.images.iter().enumerate() {
        if image.height() as usize != image_height || image.width() as usize != image_width {
            return Err(Error::validation(format!(
                "frame {i} is {}x{} but frame 0 is {image_height}x{image_width}",
                image.height(),
                image.width()
            )));
        }
    }

    let (features0, patch) = match provider {
        FeatureProvider::Builtin { patch_size } => {
            (builtin_features(&source.images[0], *patch_size)?, *patch_size)
        }
        FeatureProvider::Precomputed { maps } => {
            if maps.len() != source.images.len() {
                return Err(Error::validation(format!(
                    "{} precomputed feature maps for {} frames",
                    maps.len(),
                    source.images.len()
                )));
            }
            let first = &maps[0];
            if first.height() == 0 || first.height() > image_height {
                return Err(Error::validation(format!(
                    "feature height {} incompatible with image height {image_height}",
                    first.height()
                )));
            }
            let patch = image_height / first.height();
            if image_width / first.width().max(1) != patch || first.width() == 0 {
                return Err(Error::validation(format!(
                    "feature grid {}x{} does not tile the {image_height}x{image_width} image \
                     with square blocks",
                    first.height(),
                    first.width()
                )));
            }
            (first.clone(), patch)
        }
    };
    let feat_height = features0.height();
    let feat_width = features0.width();

    let seed_labels = match source.mode {
        Mode::Color => downsample_a_channel(&source.images[0], patch, feat_height, feat_width)?,
        Mode::Mask => {
            let mask = source.seed_mask.as_ref().ok_or_else(|| {
                Error::validation("mask mode needs a frame-0 mask".to_string())
            })?;
            if mask.height != image_height || mask.width != image_width {
                return Err(Error::validation(format!(
                    "seed mask {}x{} does not match the {image_height}x{image_width} frames",
                    mask.height, mask.width
                )));
            }
            mask_to_field(mask, patch, feat_height, feat_width, mask.max_class() + 1)?
        }
        Mode::Keypoint => {
            let keypoints = source.seed_keypoints.as_ref().ok_or_else(|| {
                Error::validation("keypoint mode needs frame-0 keypoints".to_string())
            })?;
            keypoints_to_field(keypoints, patch, feat_height, feat_width)?
        }
    };

    let mut state = PropagationState::seed(
        run,
        options,
        source.mode,
        patch,
        features0,
        &source.images[0],
        seed_labels,
    )?;
    for (t, image) in source.images.iter().enumerate().skip(1) {
        let features = match provider {
            FeatureProvider::Builtin { patch_size } => builtin_features(image, *patch_size)?,
            FeatureProvider::Precomputed { maps } => maps[t].clone(),
        };
        state.propagate_frame(features, image)?;
    }
    Ok(state)
}

/// Builds a provider from a run configuration; precomputed maps must be
/// supplied by the caller (they come from files).
pub fn provider_from_config(run: &RunConfig, precomputed: Option<Vec<FeatureMap>>) -> Result<FeatureProvider> {
    match run.provider {
        ProviderKind::Builtin => Ok(FeatureProvider::Builtin {
            patch_size: run.patch_size,
        }),
        ProviderKind::Precomputed => {
            let maps = precomputed.ok_or_else(|| {
                Error::validation(
                    "configured for precomputed features but none were supplied".to_string(),
                )
            })?;
            Ok(FeatureProvider::Precomputed { maps })
        }
    }
}

/// Block-averages a pixel-resolution class mask into a simplex-valued
/// one-hot field at feature resolution. Trailing pixels that no feature
/// cell covers are ignored, mirroring the descriptor's patch grid.
pub fn mask_to_field(
    mask: &IndexMask,
    patch: usize,
    feat_height: usize,
    feat_width: usize,
    dim: usize,
) -> Result<LabelField> {
    if patch == 0 || feat_height == 0 || feat_width == 0 {
        return Err(Error::validation(
            "mask downsampling needs positive patch and grid dimensions".to_string(),
        ));
    }
    if feat_height * patch > mask.height || feat_width * patch > mask.width {
        return Err(Error::validation(format!(
            "feature grid {feat_height}x{feat_width} with patch {patch} exceeds the \
             {}x{} mask",
            mask.height, mask.width
        )));
    }
    if dim <= mask.max_class() {
        return Err(Error::validation(format!(
            "mask names class {} but the field has {dim} classes",
            mask.max_class()
        )));
    }
    let area = (patch * patch) as f64;
    let mut data = vec![0.0f64; feat_height * feat_width * dim];
    for r in 0..feat_height {
        for c in 0..feat_width {
            let base = (r * feat_width + c) * dim;
            for y in r * patch..(r + 1) * patch {
                for x in c * patch..(c + 1) * patch {
                    let class = mask.classes[y * mask.width + x];
                    data[base + class] += 1.0;
                }
            }
            for d in 0..dim {
                data[base + d] /= area;
            }
        }
    }
    LabelField::new(feat_height, feat_width, dim, LabelKind::MaskOnehot, data)
}

/// Expands a feature-resolution mask field back to image resolution:
/// each pixel takes the argmax class of its block (ties to the lowest
/// class), and trailing pixels inherit the last block on their axis.
pub fn field_to_mask(
    field: &LabelField,
    patch: usize,
    height: usize,
    width: usize,
) -> Result<IndexMask> {
    if field.kind() != LabelKind::MaskOnehot {
        return Err(Error::Mode(format!(
            "cannot expand {:?} labels into a class mask",
            field.kind()
        )));
    }
    if patch == 0 || height == 0 || width == 0 {
        return Err(Error::validation(
            "mask upsampling needs positive dimensions".to_string(),
        ));
    }
    if field.height() * patch > height || field.width() * patch > width {
        return Err(Error::validation(format!(
            "field {}x{} with patch {patch} exceeds the target {height}x{width} mask",
            field.height(),
            field.width()
        )));
    }
    let block_classes = field.argmax_classes();
    let mut classes = vec![0usize; height * width];
    for y in 0..height {
        let r = (y / patch).min(field.height() - 1);
        for x in 0..width {
            let c = (x / patch).min(field.width() - 1);
            classes[y * width + x] = block_classes[r * field.width() + c];
        }
    }
    Ok(IndexMask {
        height,
        width,
        classes,
    })
}

/// Snaps a soft mask field to the one-hot field of its per-cell argmax
/// (ties to the lowest class).
pub fn requantize_mask(field: &LabelField) -> Result<LabelField> {
    if field.kind() != LabelKind::MaskOnehot {
        return Err(Error::Mode(format!(
            "cannot requantize {:?} labels as a class mask",
            field.kind()
        )));
    }
    let dim = field.label_dim();
    let mut data = vec![0.0f64; field.height() * field.width() * dim];
    for (cell, class) in field.argmax_classes().into_iter().enumerate() {
        data[cell * dim + class] = 1.0;
    }
    LabelField::new(
        field.height(),
        field.width(),
        dim,
        LabelKind::MaskOnehot,
        data,
    )
}

/// Renders seed keypoints as Gaussian heatmap channels at feature
/// resolution. A missing keypoint becomes an all-zero channel.
pub fn keypoints_to_field(
    keypoints: &[Keypoint],
    patch: usize,
    feat_height: usize,
    feat_width: usize,
) -> Result<LabelField> {
    if keypoints.is_empty() {
        return Err(Error::validation(
            "keypoint mode needs at least one keypoint".to_string(),
        ));
    }
    if patch == 0 {
        return Err(Error::validation("patch size must be positive".to_string()));
    }
    let dim = keypoints.len();
    let mut data = vec![0.0f64; feat_height * feat_width * dim];
    for (d, keypoint) in keypoints.iter().enumerate() {
        let Some((x, y)) = keypoint else { continue };
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::validation(format!(
                "keypoint {d} has non-finite coordinates ({x}, {y})"
            )));
        }
        let u = x / patch as f64;
        let v = y / patch as f64;
        for r in 0..feat_height {
            for c in 0..feat_width {
                let dx = (c as f64 + 0.5) - u;
                let dy = (r as f64 + 0.5) - v;
                let value = (-(dx * dx + dy * dy) / (2.0 * KEYPOINT_SIGMA * KEYPOINT_SIGMA)).exp();
                data[(r * feat_width + c) * dim + d] = value;
            }
        }
    }
    LabelField::new(
        feat_height,
        feat_width,
        dim,
        LabelKind::KeypointHeatmap,
        data,
    )
}

/// Reads keypoints back out of a heatmap field: per channel, the argmax
/// cell's block center in pixel coordinates, or `None` for an all-zero
/// channel (a lost keypoint).
pub fn field_to_keypoints(field: &LabelField, patch: usize) -> Result<Vec<Keypoint>> {
    if field.kind() != LabelKind::KeypointHeatmap {
        return Err(Error::Mode(format!(
            "cannot extract keypoints from {:?} labels",
            field.kind()
        )));
    }
    if patch == 0 {
        return Err(Error::validation("patch size must be positive".to_string()));
    }
    let mut keypoints = Vec::with_capacity(field.label_dim());
    for d in 0..field.label_dim() {
        let mut best = 0.0f64;
        let mut at = None;
        for r in 0..field.height() {
            for c in 0..field.width() {
                let value = field.get(r, c, d);
                if value > best {
                    best = value;
                    at = Some((r, c));
                }
            }
        }
        keypoints.push(at.map(|(r, c)| {
            (
                (c as f64 + 0.5) * patch as f64,
                (r as f64 + 0.5) * patch as f64,
            )
        }));
    }
    Ok(keypoints)
}

/// Block-averaged a-channel of a frame at feature resolution: the
/// observable reconstruction target shared by both branches.
pub fn downsample_a_channel(
    image: &RgbImage,
    patch: usize,
    feat_height: usize,
    feat_width: usize,
) -> Result<LabelField> {
    if patch == 0 {
        return Err(Error::validation("patch size must be positive".to_string()));
    }
    let height = image.height() as usize;
    let width = image.width() as usize;
    if feat_height * patch > height || feat_width * patch > width {
        return Err(Error::validation(format!(
            "feature grid {feat_height}x{feat_width} with patch {patch} exceeds the \
             {height}x{width} image"
        )));
    }
    let pixel_field = rgb_to_lab_a_channel(image)?;
    let area = (patch * patch) as f64;
    let mut data = vec![0.0f64; feat_height * feat_width];
    for r in 0..feat_height {
        for c in 0..feat_width {
            let mut sum = 0.0;
            for y in r * patch..(r + 1) * patch {
                for x in c * patch..(c + 1) * patch {
                    sum += pixel_field.get(y, x, 0);
                }
            }
            data[r * feat_width + c] = sum / area;
        }
    }
    LabelField::new(
        feat_height,
        feat_width,
        1,
        LabelKind::ColorAChannel,
        data,
    )
}
