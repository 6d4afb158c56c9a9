//! The `eval` subcommand: score existing predictions against ground truth.
//!
//! Mask mode pairs every `*.png` in the prediction directory with the
//! same-named file in the truth directory. Keypoint mode reads
//! `keypoints_pred.txt` (falling back to `keypoints.txt`) from the
//! prediction directory and `keypoints.txt` (falling back to
//! `keypoints_pred.txt`) from the truth directory, scoring the frames both
//! tracks cover.

use dmp_core::io::keypoints::read_keypoints;
use dmp_core::io::mask_png::read_mask_png;
use dmp_core::metrics::{
    contour_accuracy_f, davis_boundary_tolerance, pck_pooled, region_similarity_j, EvalReport,
    Keypoint,
};
use dmp_core::{Error, Result};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// PCK threshold reported by `eval`.
const PCK_ALPHA: f64 = 0.1;

/// Label modes `eval` understands (the color mode has no ground truth).
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum EvalMode {
    Mask,
    Keypoint,
}

fn sorted_pngs(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir)
        .map_err(|e| Error::io(format!("reading directory {}", dir.display()), e))?;
    let mut files = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(format!("reading {}", dir.display()), e))?;
        let path = entry.path();
        if path.is_file()
            && path
                .extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case("png"))
        {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn eval_masks(pred_dir: &Path, truth_dir: &Path) -> Result<EvalReport> {
    let pred_paths = sorted_pngs(pred_dir)?;
    if pred_paths.is_empty() {
        return Err(Error::validation(format!(
            "{} holds no prediction masks",
            pred_dir.display()
        )));
    }
    let mut per_frame_j = Vec::new();
    let mut per_frame_f = Vec::new();
    for pred_path in &pred_paths {
        let name = pred_path.file_name().expect("png file has a name");
        let truth_path = truth_dir.join(name);
        if !truth_path.is_file() {
            return Err(Error::validation(format!(
                "missing ground truth {} for prediction {}",
                truth_path.display(),
                pred_path.display()
            )));
        }
        let pred = read_mask_png(pred_path)?;
        let truth = read_mask_png(&truth_path)?;
        let dim = pred.max_class().max(truth.max_class()) + 1;
        let pred_field = pred.to_onehot(dim)?;
        let truth_field = truth.to_onehot(dim)?;
        per_frame_j.push(region_similarity_j(&pred_field, &truth_field)?);
        let tolerance = davis_boundary_tolerance(truth.height, truth.width);
        per_frame_f.push(contour_accuracy_f(&pred_field, &truth_field, tolerance)?);
    }
    Ok(EvalReport {
        mode: "mask".to_string(),
        per_frame_j,
        per_frame_f,
        pck: None,
        config: Vec::new(),
        wall_ms: Vec::new(),
    })
}

/// Reads the first existing candidate file as a frame-indexed track.
fn read_track(dir: &Path, candidates: [&str; 2]) -> Result<BTreeMap<usize, Vec<Keypoint>>> {
    let path = candidates
        .iter()
        .map(|name| dir.join(name))
        .find(|p| p.is_file())
        .ok_or_else(|| {
            Error::validation(format!(
                "{} holds neither {} nor {}",
                dir.display(),
                candidates[0],
                candidates[1]
            ))
        })?;
    let mut by_frame = BTreeMap::new();
    for (frame, points) in read_keypoints(&path)? {
        if by_frame.insert(frame, points).is_some() {
            return Err(Error::Format(format!(
                "{} lists frame {frame} twice",
                path.display()
            )));
        }
    }
    Ok(by_frame)
}

fn eval_keypoints(pred_dir: &Path, truth_dir: &Path) -> Result<EvalReport> {
    let pred = read_track(pred_dir, ["keypoints_pred.txt", "keypoints.txt"])?;
    let truth = read_track(truth_dir, ["keypoints.txt", "keypoints_pred.txt"])?;
    let mut pred_frames = Vec::new();
    let mut truth_frames = Vec::new();
    for (frame, points) in &pred {
        if let Some(truth_points) = truth.get(frame) {
            pred_frames.push(points.clone());
            truth_frames.push(truth_points.clone());
        }
    }
    if pred_frames.is_empty() {
        return Err(Error::validation(
            "prediction and truth tracks share no frames".to_string(),
        ));
    }
    let pck = pck_pooled(&pred_frames, &truth_frames, PCK_ALPHA)?;
    Ok(EvalReport {
        mode: "keypoint".to_string(),
        per_frame_j: Vec::new(),
        per_frame_f: Vec::new(),
        pck: Some((PCK_ALPHA, pck)),
        config: Vec::new(),
        wall_ms: Vec::new(),
    })
}

/// Scores predictions in `pred_dir` against `truth_dir` and returns the
/// report.
pub fn eval_command(pred_dir: &Path, truth_dir: &Path, mode: EvalMode) -> Result<EvalReport> {
    match mode {
        EvalMode::Mask => eval_masks(pred_dir, truth_dir),
        EvalMode::Keypoint => eval_keypoints(pred_dir, truth_dir),
    }
}
