//! The `run` subcommand: propagate labels through a sequence and write
//! predictions, a plain-text report, and optional overlays and debug dumps.

use crate::sequence::{load_sequence, LoadedSequence};
use dmp_core::config::RunConfig;
use dmp_core::io::keypoints::{write_keypoints, KeypointTrack};
use dmp_core::io::mask_png::{segmentation_palette, write_mask_png, IndexMask};
use dmp_core::metrics::{
    contour_accuracy_f, davis_boundary_tolerance, pck_pooled, region_similarity_j, EvalReport,
};
use dmp_core::pipeline::{
    field_to_keypoints, field_to_mask, propagate_sequence, provider_from_config,
    Mode, PipelineOptions, PropagationState,
};
use dmp_core::{Error, Result};
use image::RgbImage;
use std::path::Path;

/// PCK threshold reported for keypoint runs.
const PCK_ALPHA: f64 = 0.1;

pub struct RunArtifacts {
    pub report: EvalReport,
}

fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path)
        .map_err(|e| Error::io(format!("creating directory {}", path.display()), e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Blends the mask's palette colors onto the frame at half opacity;
/// background pixels keep the original frame.
fn render_overlay(frame: &RgbImage, mask: &IndexMask) -> RgbImage {
    let palette = segmentation_palette();
    let mut out = frame.clone();
    for (p, pixel) in out.pixels_mut().enumerate() {
        let class = mask.classes[p];
        if class > 0 {
            let tint = &palette[class * 3..class * 3 + 3];
            for (v, &t) in pixel.0.iter_mut().zip(tint) {
                *v = ((*v as u16 + t as u16) / 2) as u8;
            }
        }
    }
    out
}

/// Scores a predicted mask against truth at image resolution.
fn score_mask(predicted: &IndexMask, truth: &IndexMask) -> Result<(f64, f64)> {
    let dim = predicted.max_class().max(truth.max_class()) + 1;
    let pred = predicted.to_onehot(dim)?;
    let truth_field = truth.to_onehot(dim)?;
    let j = region_similarity_j(&pred, &truth_field)?;
    let tolerance = davis_boundary_tolerance(truth.height, truth.width);
    let f = contour_accuracy_f(&pred, &truth_field, tolerance)?;
    Ok((j, f))
}

/// Builds the report and writes every artifact for a finished run.
fn emit_outputs(
    sequence: &LoadedSequence,
    state: &PropagationState,
    config: &RunConfig,
    out_dir: &Path,
    overlays: bool,
    dump_memory: bool,
    dump_clusters: bool,
) -> Result<RunArtifacts> {
    ensure_dir(out_dir)?;
    let patch = state.patch();
    let (height, width) = (state.image_height(), state.image_width());

    let mut per_frame_j = Vec::new();
    let mut per_frame_f = Vec::new();
    let mut pck = None;

    match sequence.source.mode {
        Mode::Mask => {
            let masks_dir = out_dir.join("masks");
            ensure_dir(&masks_dir)?;
            let overlays_dir = out_dir.join("overlays");
            if overlays {
                ensure_dir(&overlays_dir)?;
            }
            for (i, output) in state.outputs().iter().enumerate() {
                let frame_index = i + 1;
                let name = &sequence.frame_names[frame_index];
                let predicted = field_to_mask(output, patch, height, width)?;
                let png_name = Path::new(name).with_extension("png");
                write_mask_png(&masks_dir.join(&png_name), &predicted)?;
                if overlays {
                    let overlay =
                        render_overlay(&sequence.source.images[frame_index], &predicted);
                    overlay
                        .save(overlays_dir.join(&png_name))
                        .map_err(|e| Error::Format(format!("writing overlay: {e}")))?;
                }
                if let Some(truth) = sequence.truth_masks.get(name) {
                    let (j, f) = score_mask(&predicted, truth)?;
                    per_frame_j.push(j);
                    per_frame_f.push(f);
                }
            }
        }
        Mode::Keypoint => {
            let mut track: KeypointTrack = Vec::new();
            let mut pred_frames = Vec::new();
            let mut truth_frames = Vec::new();
            for (i, output) in state.outputs().iter().enumerate() {
                let frame_index = i + 1;
                let points = field_to_keypoints(output, patch)?;
                if let Some(truth) = sequence.truth_keypoints.get(&frame_index) {
                    pred_frames.push(points.clone());
                    truth_frames.push(truth.clone());
                }
                track.push((frame_index, points));
            }
            write_keypoints(&out_dir.join("keypoints_pred.txt"), &track)?;
            if !truth_frames.is_empty() {
                pck = Some((PCK_ALPHA, pck_pooled(&pred_frames, &truth_frames, PCK_ALPHA)?));
            }
        }
        Mode::Color => {}
    }

    let report = EvalReport {
        mode: match sequence.source.mode {
            Mode::Mask => "mask".to_string(),
            Mode::Keypoint => "keypoint".to_string(),
            Mode::Color => "color".to_string(),
        },
        per_frame_j,
        per_frame_f,
        pck,
        config: config.echo(),
        wall_ms: state.diagnostics().iter().map(|d| d.wall_ms).collect(),
    };
    write_text(&out_dir.join("report.txt"), &report.render())?;

    if dump_memory {
        let mut text = String::new();
        for diag in state.diagnostics() {
            text.push_str(&format!("frame {}:", diag.frame_index));
            match &diag.short_admission {
                Some(a) => {
                    text.push_str(&format!(
                        " short candidate {} {}",
                        a.candidate,
                        if a.admitted { "admitted" } else { "rejected" }
                    ));
                    if let Some(e) = a.evicted {
                        text.push_str(&format!(" (evicted {e})"));
                    }
                }
                None => text.push_str(" short candidate none"),
            }
            match &diag.long_admission {
                Some(a) => {
                    text.push_str(&format!(
                        "; long candidate {} {}",
                        a.candidate,
                        if a.admitted { "admitted" } else { "rejected" }
                    ));
                    if let Some(e) = a.evicted {
                        text.push_str(&format!(" (evicted {e})"));
                    }
                }
                None => text.push_str("; long candidate none"),
            }
            text.push('\n');
        }
        text.push_str(&state.banks().dump_report(None)?);
        write_text(&out_dir.join("memory.txt"), &text)?;
    }

    if dump_clusters {
        let mut text = String::new();
        for diag in state.diagnostics() {
            match diag.cluster_count {
                Some(count) => text.push_str(&format!(
                    "frame {}: clusters = {count}\n",
                    diag.frame_index
                )),
                None => text.push_str(&format!(
                    "frame {}: prediction branch disabled\n",
                    diag.frame_index
                )),
            }
        }
        write_text(&out_dir.join("clusters.txt"), &text)?;
    }

    Ok(RunArtifacts { report })
}

/// Loads, propagates, and writes artifacts; returns the report.
pub fn run_command(
    sequence_dir: &Path,
    config: &RunConfig,
    out_dir: &Path,
    overlays: bool,
    dump_memory: bool,
    dump_clusters: bool,
) -> Result<RunArtifacts> {
    let sequence = load_sequence(sequence_dir, config)?;
    let provider = provider_from_config(config, sequence.features.clone())?;
    let state = propagate_sequence(
        &sequence.source,
        &provider,
        config,
        PipelineOptions::default(),
    )?;
    emit_outputs(
        &sequence,
        &state,
        config,
        out_dir,
        overlays,
        dump_memory,
        dump_clusters,
    )
}
