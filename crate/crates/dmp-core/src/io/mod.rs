//! File formats: binary feature maps, indexed-palette mask PNGs, and
//! plain-text keypoint tracks.

pub mod feature_file;
pub mod keypoints;
pub mod mask_png;
