//! Sequence directory loading.
//!
//! Layout:
//!
//! ```text
//! <sequence>/
//!   frames/        *.png or *.jpg, sorted by file name   (required, >= 2)
//!   masks/         <frame name>.png indexed-palette      (mask mode)
//!   keypoints.txt  frame_index x y ... per line          (keypoint mode)
//!   features/      *.dmpf, sorted, one per frame         (precomputed provider)
//! ```
//!
//! Mode is inferred: a non-empty `masks/` directory selects mask mode, a
//! `keypoints.txt` file selects keypoint mode, both present is an error,
//! neither selects color mode. In mask mode the mask matching the first
//! frame is the propagation seed and every other mask is held as ground
//! truth for scoring; in keypoint mode the line for frame 0 seeds the run.

use dmp_core::config::{ProviderKind, RunConfig};
use dmp_core::feature::FeatureMap;
use dmp_core::io::feature_file::read_feature_map;
use dmp_core::io::keypoints::{read_keypoints, KeypointTrack};
use dmp_core::io::mask_png::{read_mask_png, IndexMask};
use dmp_core::metrics::Keypoint;
use dmp_core::pipeline::{Mode, SequenceSource};
use dmp_core::{Error, Result};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// A fully loaded sequence directory.
pub struct LoadedSequence {
    pub source: SequenceSource,
    /// Frame file names (with extension), sorted; parallel to the frames.
    pub frame_names: Vec<String>,
    /// Ground-truth masks by frame name (mask mode; includes the seed).
    pub truth_masks: BTreeMap<String, IndexMask>,
    /// Ground-truth keypoints by frame index (keypoint mode).
    pub truth_keypoints: BTreeMap<usize, Vec<Keypoint>>,
    /// Per-frame precomputed feature maps when the provider asks for them.
    pub features: Option<Vec<FeatureMap>>,
}

/// Sorted file names with one of the given extensions inside `dir`.
fn sorted_files(dir: &Path, extensions: &[&str]) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir)
        .map_err(|e| Error::io(format!("reading directory {}", dir.display()), e))?;
    let mut files = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(format!("reading {}", dir.display()), e))?;
        let path = entry.path();
        let matches = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| extensions.iter().any(|x| e.eq_ignore_ascii_case(x)));
        if path.is_file() && matches {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Loads a sequence directory, inferring the label mode and honoring the
/// configured feature provider.
pub fn load_sequence(dir: &Path, config: &RunConfig) -> Result<LoadedSequence> {
    if !dir.is_dir() {
        return Err(Error::validation(format!(
            "sequence directory {} does not exist",
            dir.display()
        )));
    }
    let frames_dir = dir.join("frames");
    let frame_paths = sorted_files(&frames_dir, &["png", "jpg", "jpeg"])?;
    if frame_paths.len() < 2 {
        return Err(Error::validation(format!(
            "{} holds {} frame images; a sequence needs at least 2",
            frames_dir.display(),
            frame_paths.len()
        )));
    }
    let frame_names: Vec<String> = frame_paths.iter().map(|p| file_name(p)).collect();
    let mut images = Vec::with_capacity(frame_paths.len());
    for path in &frame_paths {
        let img = image::open(path)
            .map_err(|e| Error::Format(format!("decoding {}: {e}", path.display())))?;
        images.push(img.to_rgb8());
    }

    let masks_dir = dir.join("masks");
    let keypoints_file = dir.join("keypoints.txt");
    let mask_paths = if masks_dir.is_dir() {
        sorted_files(&masks_dir, &["png"])?
    } else {
        Vec::new()
    };
    let has_masks = !mask_paths.is_empty();
    let has_keypoints = keypoints_file.is_file();
    if has_masks && has_keypoints {
        return Err(Error::validation(format!(
            "{} supplies both masks/ and keypoints.txt; the label mode is ambiguous",
            dir.display()
        )));
    }

    let mut truth_masks = BTreeMap::new();
    let mut truth_keypoints = BTreeMap::new();
    let (mode, seed_mask, seed_keypoints) = if has_masks {
        for path in &mask_paths {
            truth_masks.insert(file_name(path), read_mask_png(path)?);
        }
        let seed = truth_masks.get(&frame_names[0]).cloned().ok_or_else(|| {
            Error::validation(format!(
                "mask mode needs a seed mask masks/{} for the first frame",
                frame_names[0]
            ))
        })?;
        (Mode::Mask, Some(seed), None)
    } else if has_keypoints {
        let track: KeypointTrack = read_keypoints(&keypoints_file)?;
        for (frame, points) in track {
            if truth_keypoints.insert(frame, points).is_some() {
                return Err(Error::Format(format!(
                    "keypoints.txt lists frame {frame} twice"
                )));
            }
        }
        let seed = truth_keypoints.get(&0).cloned().ok_or_else(|| {
            Error::validation("keypoint mode needs a frame-0 line in keypoints.txt".to_string())
        })?;
        (Mode::Keypoint, None, Some(seed))
    } else {
        (Mode::Color, None, None)
    };

    let features = match config.provider {
        ProviderKind::Builtin => None,
        ProviderKind::Precomputed => {
            let feature_paths = sorted_files(&dir.join("features"), &["dmpf"])?;
            if feature_paths.len() != images.len() {
                return Err(Error::validation(format!(
                    "{} feature files for {} frames",
                    feature_paths.len(),
                    images.len()
                )));
            }
            let mut maps = Vec::with_capacity(feature_paths.len());
            for path in &feature_paths {
                maps.push(read_feature_map(path)?);
            }
            Some(maps)
        }
    };

    Ok(LoadedSequence {
        source: SequenceSource {
            images,
            mode,
            seed_mask,
            seed_keypoints,
        },
        frame_names,
        truth_masks,
        truth_keypoints,
        features,
    })
}
