//! Evaluation metrics: region similarity (J), contour accuracy (F),
//! keypoint PCK, and the line-oriented evaluation report.
//!
//! Masks are compared per object: the classes present in the ground truth
//! define the object list, each object contributes its own IoU / boundary
//! F-score, and the per-frame value is the mean over objects. A frame whose
//! truth contains no object scores 1 by the empty-union convention.

use crate::error::{Error, Result};
use crate::label::{LabelField, LabelKind};

fn check_mask_pair(pred: &LabelField, truth: &LabelField) -> Result<()> {
    if pred.kind() != LabelKind::MaskOnehot || truth.kind() != LabelKind::MaskOnehot {
        return Err(Error::validation(
            "mask metrics need one-hot mask fields".to_string(),
        ));
    }
    if pred.height() != truth.height()
        || pred.width() != truth.width()
        || pred.label_dim() != truth.label_dim()
    {
        return Err(Error::validation(format!(
            "mask shapes differ: {}x{}x{} vs {}x{}x{}",
            pred.height(),
            pred.width(),
            pred.label_dim(),
            truth.height(),
            truth.width(),
            truth.label_dim()
        )));
    }
    Ok(())
}

/// Nonzero classes present in a class map, ascending.
fn present_classes(classes: &[usize]) -> Vec<usize> {
    let mut seen: Vec<usize> = classes.iter().copied().filter(|&c| c > 0).collect();
    seen.sort_unstable();
    seen.dedup();
    seen
}

/// Mean per-object IoU between two one-hot masks; objects are the classes
/// present in `truth`. Returns 1 when the truth has no object.
pub fn region_similarity_j(pred: &LabelField, truth: &LabelField) -> Result<f64> {
    check_mask_pair(pred, truth)?;
    let p = pred.argmax_classes();
    let t = truth.argmax_classes();
    let objects = present_classes(&t);
    if objects.is_empty() {
        return Ok(1.0);
    }
    let mut total = 0.0;
    for &k in &objects {
        let mut inter = 0usize;
        let mut union = 0usize;
        for (a, b) in p.iter().zip(&t) {
            let (pa, tb) = (*a == k, *b == k);
            inter += usize::from(pa && tb);
            union += usize::from(pa || tb);
        }
        total += if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        };
    }
    Ok(total / objects.len() as f64)
}

/// Foreground pixels with a background 4-neighbor (pixels outside the
/// image count as background, so the image border is always boundary).
fn boundary_pixels(classes: &[usize], h: usize, w: usize, object: usize) -> Vec<(usize, usize)> {
    let fg = |y: isize, x: isize| -> bool {
        y >= 0 && x >= 0 && (y as usize) < h && (x as usize) < w
            && classes[y as usize * w + x as usize] == object
    };
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if classes[y * w + x] != object {
                continue;
            }
            let (yi, xi) = (y as isize, x as isize);
            if !fg(yi - 1, xi) || !fg(yi + 1, xi) || !fg(yi, xi - 1) || !fg(yi, xi + 1) {
                out.push((y, x));
            }
        }
    }
    out
}

/// Fraction of `from` boundary pixels lying within Euclidean distance
/// `tolerance` of some `to` boundary pixel (window scan, exact distances).
fn matched_fraction(from: &[(usize, usize)], to: &[(usize, usize)], h: usize, w: usize, tolerance: f64) -> f64 {
    let mut membership = vec![false; h * w];
    for &(y, x) in to {
        membership[y * w + x] = true;
    }
    let r = tolerance.floor() as isize;
    let tol_sq = tolerance * tolerance;
    let mut hit = 0usize;
    for &(y, x) in from {
        let mut found = false;
        'scan: for dy in -r..=r {
            for dx in -r..=r {
                if (dy * dy + dx * dx) as f64 > tol_sq {
                    continue;
                }
                let (ny, nx) = (y as isize + dy, x as isize + dx);
                if ny >= 0 && nx >= 0 && (ny as usize) < h && (nx as usize) < w
                    && membership[ny as usize * w + nx as usize]
                {
                    found = true;
                    break 'scan;
                }
            }
        }
        hit += usize::from(found);
    }
    hit as f64 / from.len() as f64
}

/// Standard boundary-matching tolerance: 0.8% of the image diagonal,
/// rounded up to a whole pixel.
pub fn davis_boundary_tolerance(height: usize, width: usize) -> f64 {
    let diag = ((height * height + width * width) as f64).sqrt();
    (0.008 * diag).ceil()
}

/// Mean per-object boundary F-score. Per object: precision is the matched
/// fraction of predicted boundary, recall the matched fraction of truth
/// boundary, F their harmonic mean; both boundaries empty scores 1,
/// exactly one empty scores 0.
pub fn contour_accuracy_f(pred: &LabelField, truth: &LabelField, tolerance: f64) -> Result<f64> {
    check_mask_pair(pred, truth)?;
    if !tolerance.is_finite() || tolerance < 0.0 {
        return Err(Error::validation(format!(
            "boundary tolerance must be non-negative, got {tolerance}"
        )));
    }
    let (h, w) = (pred.height(), pred.width());
    let p = pred.argmax_classes();
    let t = truth.argmax_classes();
    let objects = present_classes(&t);
    if objects.is_empty() {
        return Ok(1.0);
    }
    let mut total = 0.0;
    for &k in &objects {
        let pb = boundary_pixels(&p, h, w, k);
        let tb = boundary_pixels(&t, h, w, k);
        total += match (pb.is_empty(), tb.is_empty()) {
            (true, true) => 1.0,
            (true, false) | (false, true) => 0.0,
            (false, false) => {
                let precision = matched_fraction(&pb, &tb, h, w, tolerance);
                let recall = matched_fraction(&tb, &pb, h, w, tolerance);
                if precision + recall == 0.0 {
                    0.0
                } else {
                    2.0 * precision * recall / (precision + recall)
                }
            }
        };
    }
    Ok(total / objects.len() as f64)
}

/// A keypoint position in pixel coordinates; `None` marks a missing point.
pub type Keypoint = Option<(f64, f64)>;

/// Fraction of keypoints whose prediction lies within `alpha * reference`
/// of the truth. Truth `None` entries leave both numerator and
/// denominator; a missing prediction for a present truth counts as a miss.
pub fn pck_at_alpha(
    pred: &[Keypoint],
    truth: &[Keypoint],
    alpha: f64,
    reference: f64,
) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::validation(format!(
            "{} predicted keypoints vs {} truth",
            pred.len(),
            truth.len()
        )));
    }
    if !alpha.is_finite() || alpha < 0.0 || !reference.is_finite() || reference < 0.0 {
        return Err(Error::validation(
            "alpha and reference size must be non-negative".to_string(),
        ));
    }
    let (mut correct, mut counted) = (0usize, 0usize);
    for (p, t) in pred.iter().zip(truth) {
        let Some((tx, ty)) = t else { continue };
        counted += 1;
        if let Some((px, py)) = p {
            let d = ((px - tx) * (px - tx) + (py - ty) * (py - ty)).sqrt();
            if d <= alpha * reference {
                correct += 1;
            }
        }
    }
    if counted == 0 {
        return Err(Error::validation(
            "no truth keypoints to evaluate".to_string(),
        ));
    }
    Ok(correct as f64 / counted as f64)
}

/// Longest side of the truth keypoints' bounding box; the per-frame PCK
/// reference scale. `None` when fewer than one point is present.
pub fn truth_bbox_reference(truth: &[Keypoint]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = truth.iter().flatten().copied().collect();
    let first = pts.first()?;
    let (mut min_x, mut max_x, mut min_y, mut max_y) = (first.0, first.0, first.1, first.1);
    for &(x, y) in &pts {
        min_x = min_x.min(x);
        max_x = max_x.max(x);
        min_y = min_y.min(y);
        max_y = max_y.max(y);
    }
    Some((max_x - min_x).max(max_y - min_y))
}

/// PCK pooled over frames: every frame uses its own truth bounding-box
/// reference, correct/total counts are pooled, all-missing frames are
/// skipped.
pub fn pck_pooled(pred_frames: &[Vec<Keypoint>], truth_frames: &[Vec<Keypoint>], alpha: f64) -> Result<f64> {
    if pred_frames.len() != truth_frames.len() {
        return Err(Error::validation(format!(
            "{} predicted frames vs {} truth frames",
            pred_frames.len(),
            truth_frames.len()
        )));
    }
    let (mut correct, mut counted) = (0usize, 0usize);
    for (pred, truth) in pred_frames.iter().zip(truth_frames) {
        let Some(reference) = truth_bbox_reference(truth) else {
            continue;
        };
        if pred.len() != truth.len() {
            return Err(Error::validation(
                "keypoint counts differ between prediction and truth".to_string(),
            ));
        }
        for (p, t) in pred.iter().zip(truth) {
            let Some((tx, ty)) = t else { continue };
            counted += 1;
            if let Some((px, py)) = p {
                let d = ((px - tx) * (px - tx) + (py - ty) * (py - ty)).sqrt();
                if d <= alpha * reference {
                    correct += 1;
                }
            }
        }
    }
    if counted == 0 {
        return Err(Error::validation(
            "no truth keypoints in any frame".to_string(),
        ));
    }
    Ok(correct as f64 / counted as f64)
}

/// Sequence evaluation summary with a fixed rendering order so reports
/// diff cleanly.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub mode: String,
    pub per_frame_j: Vec<f64>,
    pub per_frame_f: Vec<f64>,
    /// `(alpha, value)` in keypoint mode.
    pub pck: Option<(f64, f64)>,
    /// Echoed configuration, rendered in the order given.
    pub config: Vec<(String, String)>,
    pub wall_ms: Vec<f64>,
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

fn recall_over(values: &[f64], threshold: f64) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().filter(|&&v| v > threshold).count() as f64 / values.len() as f64
    }
}

impl EvalReport {
    pub fn mean_j(&self) -> f64 {
        mean(&self.per_frame_j)
    }

    pub fn mean_f(&self) -> f64 {
        mean(&self.per_frame_f)
    }

    pub fn j_and_f(&self) -> f64 {
        (self.mean_j() + self.mean_f()) / 2.0
    }

    pub fn recall_j(&self) -> f64 {
        recall_over(&self.per_frame_j, 0.5)
    }

    pub fn recall_f(&self) -> f64 {
        recall_over(&self.per_frame_f, 0.5)
    }

    /// Plain-text rendering, keys in a fixed order: header metrics,
    /// config echo, then one line per frame.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("mode = {}\n", self.mode));
        let frames = self.per_frame_j.len().max(self.wall_ms.len());
        out.push_str(&format!("frames = {frames}\n"));
        if !self.per_frame_j.is_empty() {
            out.push_str(&format!("mean_j = {:.6}\n", self.mean_j()));
            out.push_str(&format!("mean_f = {:.6}\n", self.mean_f()));
            out.push_str(&format!("j_and_f = {:.6}\n", self.j_and_f()));
            out.push_str(&format!("recall_j_0.5 = {:.6}\n", self.recall_j()));
            out.push_str(&format!("recall_f_0.5 = {:.6}\n", self.recall_f()));
        }
        if let Some((alpha, value)) = self.pck {
            out.push_str(&format!("pck_{alpha} = {value:.6}\n"));
        }
        for (key, value) in &self.config {
            out.push_str(&format!("config.{key} = {value}\n"));
        }
        for i in 0..frames {
            out.push_str(&format!("frame {}", i + 1));
            if let Some(j) = self.per_frame_j.get(i) {
                out.push_str(&format!(" j={j:.6}"));
            }
            if let Some(f) = self.per_frame_f.get(i) {
                out.push_str(&format!(" f={f:.6}"));
            }
            if let Some(ms) = self.wall_ms.get(i) {
                out.push_str(&format!(" wall_ms={ms:.3}"));
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// One-hot mask from a class map.
    fn mask(h: usize, w: usize, classes: &[usize], dim: usize) -> LabelField {
        let mut data = vec![0.0; h * w * dim];
        for (p, &c) in classes.iter().enumerate() {
            data[p * dim + c] = 1.0;
        }
        LabelField::new(h, w, dim, LabelKind::MaskOnehot, data).unwrap()
    }

    #[test]
    fn identical_masks_score_one_on_both_metrics() {
        let classes: Vec<usize> = (0..16).map(|p| usize::from(p % 5 == 0)).collect();
        let m = mask(4, 4, &classes, 2);
        assert_eq!(region_similarity_j(&m, &m).unwrap(), 1.0);
        assert_eq!(contour_accuracy_f(&m, &m, 2.0).unwrap(), 1.0);
    }

    #[test]
    fn disjoint_masks_score_zero_region_similarity() {
        let mut a = vec![0usize; 16];
        let mut b = vec![0usize; 16];
        a[0] = 1;
        a[1] = 1;
        b[14] = 1;
        b[15] = 1;
        let j = region_similarity_j(&mask(4, 4, &a, 2), &mask(4, 4, &b, 2)).unwrap();
        assert_eq!(j, 0.0);
    }

    #[test]
    fn overlap_counts_match_pixel_arithmetic() {
        // Truth: 10 px object; pred: 8 px with 6 overlapping -> 6/12.
        let mut truth = vec![0usize; 25];
        let mut pred = vec![0usize; 25];
        for p in 0..10 {
            truth[p] = 1;
        }
        for p in 4..12 {
            pred[p] = 1;
        }
        let j = region_similarity_j(&mask(5, 5, &pred, 2), &mask(5, 5, &truth, 2)).unwrap();
        assert!((j - 0.5).abs() < 1e-12);
    }

    #[test]
    fn empty_truth_scores_one() {
        let empty = mask(4, 4, &vec![0; 16], 2);
        let some = mask(4, 4, &{
            let mut v = vec![0; 16];
            v[5] = 1;
            v
        }, 2);
        assert_eq!(region_similarity_j(&some, &empty).unwrap(), 1.0);
        assert_eq!(contour_accuracy_f(&some, &empty, 2.0).unwrap(), 1.0);
    }

    #[test]
    fn multi_object_j_averages_per_object() {
        // Object 1 perfectly predicted, object 2 completely missed -> 0.5.
        let mut truth = vec![0usize; 16];
        truth[0] = 1;
        truth[1] = 1;
        truth[14] = 2;
        truth[15] = 2;
        let mut pred = vec![0usize; 16];
        pred[0] = 1;
        pred[1] = 1;
        let j = region_similarity_j(&mask(4, 4, &pred, 3), &mask(4, 4, &truth, 3)).unwrap();
        assert!((j - 0.5).abs() < 1e-12);
    }

    #[test]
    fn far_shifted_boundary_scores_zero() {
        let mut truth = vec![0usize; 100];
        let mut pred = vec![0usize; 100];
        truth[0] = 1; // corner pixel
        pred[99] = 1; // opposite corner
        let f = contour_accuracy_f(&mask(10, 10, &pred, 2), &mask(10, 10, &truth, 2), 2.0).unwrap();
        assert_eq!(f, 0.0);
    }

    /// Brute-force oracle: every boundary pixel checks its minimum
    /// Euclidean distance to the entire other boundary set.
    fn f_oracle(pred: &[usize], truth: &[usize], h: usize, w: usize, tol: f64) -> f64 {
        let objects = present_classes(truth);
        if objects.is_empty() {
            return 1.0;
        }
        let mut total = 0.0;
        for &k in &objects {
            let pb = boundary_pixels(pred, h, w, k);
            let tb = boundary_pixels(truth, h, w, k);
            total += match (pb.is_empty(), tb.is_empty()) {
                (true, true) => 1.0,
                (true, false) | (false, true) => 0.0,
                _ => {
                    let frac = |from: &[(usize, usize)], to: &[(usize, usize)]| -> f64 {
                        let hits = from
                            .iter()
                            .filter(|&&(y, x)| {
                                to.iter().any(|&(ty, tx)| {
                                    let dy = y as f64 - ty as f64;
                                    let dx = x as f64 - tx as f64;
                                    (dy * dy + dx * dx).sqrt() <= tol
                                })
                            })
                            .count();
                        hits as f64 / from.len() as f64
                    };
                    let p = frac(&pb, &tb);
                    let r = frac(&tb, &pb);
                    if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) }
                }
            };
        }
        total / objects.len() as f64
    }

    #[test]
    fn shifted_square_matches_distance_oracle() {
        let (h, w) = (12, 12);
        let mut truth = vec![0usize; h * w];
        let mut pred = vec![0usize; h * w];
        for y in 3..7 {
            for x in 3..7 {
                truth[y * w + x] = 1;
                pred[y * w + x + 1] = 1; // shifted right by one
            }
        }
        let got = contour_accuracy_f(&mask(h, w, &pred, 2), &mask(h, w, &truth, 2), 2.0).unwrap();
        let want = f_oracle(&pred, &truth, h, w, 2.0);
        assert!((got - want).abs() < 1e-9);
        assert_eq!(got, 1.0, "1-px shift within 2-px tolerance matches fully");
    }

    #[test]
    fn random_masks_match_distance_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        for _ in 0..40 {
            let h = rng.gen_range(2..12);
            let w = rng.gen_range(2..12);
            let dim = 3;
            let truth: Vec<usize> = (0..h * w).map(|_| rng.gen_range(0..dim)).collect();
            let pred: Vec<usize> = (0..h * w).map(|_| rng.gen_range(0..dim)).collect();
            let tol = *[1.0, 2.0, 3.0].iter().nth(rng.gen_range(0..3)).unwrap();
            let got =
                contour_accuracy_f(&mask(h, w, &pred, dim), &mask(h, w, &truth, dim), tol).unwrap();
            let want = f_oracle(&pred, &truth, h, w, tol);
            assert!((got - want).abs() < 1e-9, "mismatch: {got} vs {want}");
        }
    }

    #[test]
    fn davis_tolerance_rounds_up_the_diagonal_fraction() {
        assert_eq!(davis_boundary_tolerance(64, 64), 1.0);
        assert_eq!(davis_boundary_tolerance(480, 854), 8.0);
    }

    #[test]
    fn pck_counts_thresholded_distances() {
        let truth: Vec<Keypoint> = vec![
            Some((10.0, 10.0)),
            Some((20.0, 10.0)),
            Some((10.0, 20.0)),
            Some((20.0, 20.0)),
        ];
        assert_eq!(pck_at_alpha(&truth, &truth, 0.1, 10.0).unwrap(), 1.0);

        // Three within 1 px of truth, one far: alpha * reference = 1.
        let pred: Vec<Keypoint> = vec![
            Some((10.5, 10.0)),
            Some((20.0, 10.9)),
            Some((10.0, 19.1)),
            Some((28.0, 28.0)),
        ];
        assert!((pck_at_alpha(&pred, &truth, 0.1, 10.0).unwrap() - 0.75).abs() < 1e-12);

        let far: Vec<Keypoint> = truth
            .iter()
            .map(|kp| kp.map(|(x, y)| (x + 50.0, y)))
            .collect();
        assert_eq!(pck_at_alpha(&far, &truth, 0.1, 10.0).unwrap(), 0.0);
    }

    #[test]
    fn missing_truth_keypoints_are_excluded() {
        let truth: Vec<Keypoint> = vec![Some((0.0, 0.0)), None, Some((10.0, 0.0))];
        let pred: Vec<Keypoint> = vec![Some((0.0, 0.0)), Some((99.0, 99.0)), None];
        // Second point excluded; third is a miss (prediction absent).
        let v = pck_at_alpha(&pred, &truth, 0.5, 2.0).unwrap();
        assert!((v - 0.5).abs() < 1e-12);
    }

    #[test]
    fn pooled_pck_uses_per_frame_references() {
        // Frame 1 bbox side 10, frame 2 bbox side 100: the same 2-px error
        // fails at alpha 0.1 in frame 1 but passes in frame 2.
        let truth = vec![
            vec![Some((0.0, 0.0)), Some((10.0, 0.0))],
            vec![Some((0.0, 0.0)), Some((100.0, 0.0))],
        ];
        let pred = vec![
            vec![Some((2.0, 0.0)), Some((10.0, 0.0))],
            vec![Some((2.0, 0.0)), Some((100.0, 0.0))],
        ];
        let v = pck_pooled(&pred, &truth, 0.1).unwrap();
        assert!((v - 0.75).abs() < 1e-12);

        // All-missing frames are skipped entirely.
        let truth2 = vec![vec![None, None], truth[1].clone()];
        let pred2 = vec![vec![Some((0.0, 0.0)), None], pred[1].clone()];
        let v2 = pck_pooled(&pred2, &truth2, 0.1).unwrap();
        assert!((v2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn report_is_self_consistent_and_ordered() {
        let report = EvalReport {
            mode: "mask".to_string(),
            per_frame_j: vec![0.9, 0.8, 0.4],
            per_frame_f: vec![0.85, 0.75, 0.6],
            pck: None,
            config: vec![("beta".to_string(), "0.15".to_string())],
            wall_ms: vec![1.5, 2.25, 1.75],
        };
        assert!((report.j_and_f() - (report.mean_j() + report.mean_f()) / 2.0).abs() < 1e-9);
        assert!((report.recall_j() - 2.0 / 3.0).abs() < 1e-12);

        let text = report.render();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "mode = mask");
        assert_eq!(lines[1], "frames = 3");
        assert!(lines[2].starts_with("mean_j = 0.7"));
        assert!(lines[4].starts_with("j_and_f = "));
        assert_eq!(lines[7], "config.beta = 0.15");
        assert!(lines[8].starts_with("frame 1 j=0.900000 f=0.850000 wall_ms=1.500"));
    }
}
