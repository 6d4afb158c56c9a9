//! Binary feature-map files: magic `DMPF`, a version byte, three 32-bit
//! little-endian dims (height, width, channels), then `h*w*c` 32-bit
//! little-endian floats in channel-last row-major order.

use crate::error::{Error, Result};
use crate::feature::FeatureMap;
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"DMPF";
const VERSION: u8 = 1;

/// Serializes a feature map (values narrowed to 32-bit floats).
pub fn write_feature_map(path: &Path, map: &FeatureMap) -> Result<()> {
    let mut bytes = Vec::with_capacity(17 + map.data().len() * 4);
    bytes.extend_from_slice(MAGIC);
    bytes.push(VERSION);
    for dim in [map.height(), map.width(), map.channels()] {
        let v = u32::try_from(dim)
            .map_err(|_| Error::validation(format!("dimension {dim} exceeds the file format")))?;
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    for &v in map.data() {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let mut file = std::fs::File::create(path)
        .map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    file.write_all(&bytes)
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Reads a feature map, rejecting wrong magic, unknown versions, and
/// truncated or oversized payloads.
pub fn read_feature_map(path: &Path) -> Result<FeatureMap> {
    let mut file = std::fs::File::open(path)
        .map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;

    if bytes.len() < 17 {
        return Err(Error::Format(format!(
            "{}: shorter than the fixed header",
            path.display()
        )));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::Format(format!(
            "{}: bad magic, not a feature file",
            path.display()
        )));
    }
    if bytes[4] != VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported version {}",
            path.display(),
            bytes[4]
        )));
    }
    let dim = |at: usize| -> usize {
        u32::from_le_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]]) as usize
    };
    let (h, w, c) = (dim(5), dim(9), dim(13));
    if h == 0 || w == 0 || c == 0 {
        return Err(Error::Format(format!(
            "{}: zero dimension {h}x{w}x{c}",
            path.display()
        )));
    }
    let expected = 17 + h * w * c * 4;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "{}: payload is {} bytes, expected {expected}",
            path.display(),
            bytes.len()
        )));
    }
    let mut data = Vec::with_capacity(h * w * c);
    for chunk in bytes[17..].chunks_exact(4) {
        data.push(f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]) as f64);
    }
    FeatureMap::new(h, w, c, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_preserves_values_at_f32_precision() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("map.dmpf");

        // Quarter multiples are exactly representable in f32.
        let exact: Vec<f64> = (0..24).map(|i| i as f64 * 0.25 - 3.0).collect();
        let map = FeatureMap::new(2, 3, 4, exact).unwrap();
        write_feature_map(&path, &map).unwrap();
        assert_eq!(read_feature_map(&path).unwrap(), map);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data: Vec<f64> = (0..60).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let map = FeatureMap::new(3, 4, 5, data).unwrap();
        write_feature_map(&path, &map).unwrap();
        let back = read_feature_map(&path).unwrap();
        for (a, b) in back.data().iter().zip(map.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn corrupt_files_are_format_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.dmpf");

        std::fs::write(&path, b"JUNKJUNKJUNKJUNKJUNK").unwrap();
        assert!(matches!(
            read_feature_map(&path).unwrap_err(),
            Error::Format(_)
        ));

        // Right magic, truncated payload.
        let map = FeatureMap::new(2, 2, 1, vec![1.0; 4]).unwrap();
        write_feature_map(&path, &map).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 3);
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            read_feature_map(&path).unwrap_err(),
            Error::Format(_)
        ));

        // Unknown version byte.
        write_feature_map(&path, &map).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4] = 9;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            read_feature_map(&path).unwrap_err(),
            Error::Format(_)
        ));
    }

    #[test]
    fn missing_file_is_an_io_error() {
        let err = read_feature_map(Path::new("/nonexistent/nope.dmpf")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
