//! Plain-text keypoint tracks: one line per frame, the frame index
//! followed by `x y` pairs in pixel coordinates; a missing keypoint is
//! written as `nan nan`.

use crate::error::{Error, Result};
use crate::metrics::Keypoint;
use std::path::Path;

/// Keypoints for a sequence: `(frame_index, points)` per line.
pub type KeypointTrack = Vec<(usize, Vec<Keypoint>)>;

/// Parses a keypoint file. Blank lines and `#` comments are skipped; every
/// frame must carry complete `x y` pairs, with `nan nan` marking a missing
/// point (a half-missing pair is malformed).
pub fn parse_keypoints(text: &str) -> Result<KeypointTrack> {
    let mut track = KeypointTrack::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split_whitespace();
        let frame: usize = fields
            .next()
            .expect("non-empty line has a first field")
            .parse()
            .map_err(|_| {
                Error::Format(format!("keypoints line {}: bad frame index", lineno + 1))
            })?;
        let coords: Vec<&str> = fields.collect();
        if coords.len() % 2 != 0 {
            return Err(Error::Format(format!(
                "keypoints line {}: odd coordinate count",
                lineno + 1
            )));
        }
        let mut points = Vec::with_capacity(coords.len() / 2);
        for pair in coords.chunks_exact(2) {
            let x: f64 = pair[0].parse().map_err(|_| {
                Error::Format(format!("keypoints line {}: bad x '{}'", lineno + 1, pair[0]))
            })?;
            let y: f64 = pair[1].parse().map_err(|_| {
                Error::Format(format!("keypoints line {}: bad y '{}'", lineno + 1, pair[1]))
            })?;
            points.push(match (x.is_nan(), y.is_nan()) {
                (true, true) => None,
                (false, false) => Some((x, y)),
                _ => {
                    return Err(Error::Format(format!(
                        "keypoints line {}: half-missing pair",
                        lineno + 1
                    )))
                }
            });
        }
        track.push((frame, points));
    }
    Ok(track)
}

pub fn read_keypoints(path: &Path) -> Result<KeypointTrack> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    parse_keypoints(&text)
}

/// Renders a track back to the text format (shortest round-trip float
/// representation; missing points as `nan nan`).
pub fn render_keypoints(track: &KeypointTrack) -> String {
    let mut out = String::new();
    for (frame, points) in track {
        out.push_str(&format!("{frame}"));
        for p in points {
            match p {
                Some((x, y)) => out.push_str(&format!(" {x} {y}")),
                None => out.push_str(" nan nan"),
            }
        }
        out.push('\n');
    }
    out
}

pub fn write_keypoints(path: &Path, track: &KeypointTrack) -> Result<()> {
    std::fs::write(path, render_keypoints(track))
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_handles_points_and_gaps() {
        let text = "# header comment\n0 10.5 20 30 40\n1 nan nan 31.25 41\n";
        let track = parse_keypoints(text).unwrap();
        assert_eq!(track.len(), 2);
        assert_eq!(track[0], (0, vec![Some((10.5, 20.0)), Some((30.0, 40.0))]));
        assert_eq!(track[1], (1, vec![None, Some((31.25, 41.0))]));
    }

    #[test]
    fn round_trip_is_exact() {
        let track: KeypointTrack = vec![
            (0, vec![Some((1.5, 2.25)), None]),
            (7, vec![Some((0.1, -3.75)), Some((640.0, 480.0))]),
        ];
        let text = render_keypoints(&track);
        assert_eq!(parse_keypoints(&text).unwrap(), track);
    }

    #[test]
    fn malformed_lines_are_format_errors() {
        assert!(matches!(
            parse_keypoints("0 1.0").unwrap_err(),
            Error::Format(_)
        ));
        assert!(matches!(
            parse_keypoints("x 1.0 2.0").unwrap_err(),
            Error::Format(_)
        ));
        assert!(matches!(
            parse_keypoints("0 nan 2.0").unwrap_err(),
            Error::Format(_)
        ));
        assert!(matches!(
            parse_keypoints("0 one 2.0").unwrap_err(),
            Error::Format(_)
        ));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("kp.txt");
        let track: KeypointTrack = vec![(0, vec![Some((5.0, 6.0))]), (1, vec![None])];
        write_keypoints(&path, &track).unwrap();
        assert_eq!(read_keypoints(&path).unwrap(), track);
    }
}
