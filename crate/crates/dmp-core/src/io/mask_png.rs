//! Indexed-palette PNG masks: palette index 0 is background, indices 1..K
//! are object ids. Files are written with the classic segmentation
//! colormap so any viewer shows distinct object colors.

use crate::error::{Error, Result};
use crate::label::{LabelField, LabelKind};
use std::path::Path;

/// Number of palette entries written (8-bit indexed).
const PALETTE_SIZE: usize = 256;

/// The de-facto segmentation palette: each index expands its bits in
/// reverse order across the RGB channels (index 1 = dark red, 2 = dark
/// green, 3 = dark yellow, ...).
pub fn segmentation_palette() -> Vec<u8> {
    let mut palette = Vec::with_capacity(PALETTE_SIZE * 3);
    for index in 0..PALETTE_SIZE {
        let (mut r, mut g, mut b) = (0u8, 0u8, 0u8);
        let mut c = index;
        for j in 0..8 {
            r |= (((c >> 0) & 1) as u8) << (7 - j);
            g |= (((c >> 1) & 1) as u8) << (7 - j);
            b |= (((c >> 2) & 1) as u8) << (7 - j);
            c >>= 3;
        }
        palette.extend_from_slice(&[r, g, b]);
    }
    palette
}

/// A decoded class-index mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexMask {
    pub height: usize,
    pub width: usize,
    /// Row-major palette indices (class ids).
    pub classes: Vec<usize>,
}

impl IndexMask {
    pub fn max_class(&self) -> usize {
        self.classes.iter().copied().max().unwrap_or(0)
    }

    /// Expands to a one-hot mask field with `dim` classes (class ids must
    /// all be below `dim`).
    pub fn to_onehot(&self, dim: usize) -> Result<LabelField> {
        if let Some(&c) = self.classes.iter().find(|&&c| c >= dim) {
            return Err(Error::validation(format!(
                "mask names class {c} but the label field has {dim} classes"
            )));
        }
        let mut data = vec![0.0; self.height * self.width * dim];
        for (p, &c) in self.classes.iter().enumerate() {
            data[p * dim + c] = 1.0;
        }
        LabelField::new(self.height, self.width, dim, LabelKind::MaskOnehot, data)
    }

    /// Collapses a one-hot (or soft simplex) mask field to class indices.
    pub fn from_field(field: &LabelField) -> Result<IndexMask> {
        if field.kind() != LabelKind::MaskOnehot {
            return Err(Error::Mode(
                "only mask fields can be written as palette PNGs".to_string(),
            ));
        }
        Ok(IndexMask {
            height: field.height(),
            width: field.width(),
            classes: field.argmax_classes(),
        })
    }
}

/// Writes a class mask as an 8-bit indexed PNG with the segmentation
/// palette.
pub fn write_mask_png(path: &Path, mask: &IndexMask) -> Result<()> {
    if mask.classes.len() != mask.height * mask.width {
        return Err(Error::validation(format!(
            "mask has {} entries for {}x{}",
            mask.classes.len(),
            mask.height,
            mask.width
        )));
    }
    let mut indices = Vec::with_capacity(mask.classes.len());
    for &c in &mask.classes {
        indices.push(u8::try_from(c).map_err(|_| {
            Error::validation(format!("class id {c} exceeds the 8-bit palette"))
        })?);
    }

    let file = std::fs::File::create(path)
        .map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    let writer = std::io::BufWriter::new(file);
    let mut encoder = png::Encoder::new(
        writer,
        u32::try_from(mask.width).map_err(|_| Error::validation("mask too wide".to_string()))?,
        u32::try_from(mask.height).map_err(|_| Error::validation("mask too tall".to_string()))?,
    );
    encoder.set_color(png::ColorType::Indexed);
    encoder.set_depth(png::BitDepth::Eight);
    encoder.set_palette(segmentation_palette());
    let mut writer = encoder
        .write_header()
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    writer
        .write_image_data(&indices)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    Ok(())
}

/// Reads an 8-bit indexed PNG as a class mask; other color types and
/// depths are rejected.
pub fn read_mask_png(path: &Path) -> Result<IndexMask> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    let decoder = png::Decoder::new(std::io::BufReader::new(file));
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let info = reader.info();
    if info.color_type != png::ColorType::Indexed {
        return Err(Error::Format(format!(
            "{}: masks must be indexed-palette PNGs, found {:?}",
            path.display(),
            info.color_type
        )));
    }
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::Format(format!(
            "{}: only 8-bit palettes are supported, found {:?}",
            path.display(),
            info.bit_depth
        )));
    }
    let (width, height) = (info.width as usize, info.height as usize);
    let buffer_size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Format(format!("{}: image too large", path.display())))?;
    let mut buf = vec![0u8; buffer_size];
    let frame = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    buf.truncate(frame.buffer_size());
    Ok(IndexMask {
        height,
        width,
        classes: buf.into_iter().map(usize::from).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn palette_matches_reference_entries() {
        let p = segmentation_palette();
        assert_eq!(&p[0..3], &[0, 0, 0]); // background
        assert_eq!(&p[3..6], &[128, 0, 0]); // object 1
        assert_eq!(&p[6..9], &[0, 128, 0]); // object 2
        assert_eq!(&p[9..12], &[128, 128, 0]); // object 3
        assert_eq!(&p[12..15], &[0, 0, 128]); // object 4
    }

    #[test]
    fn mask_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mask.png");
        let mask = IndexMask {
            height: 3,
            width: 4,
            classes: vec![0, 1, 2, 0, 1, 1, 2, 2, 0, 0, 3, 0],
        };
        write_mask_png(&path, &mask).unwrap();
        assert_eq!(read_mask_png(&path).unwrap(), mask);
    }

    #[test]
    fn onehot_expansion_round_trips_through_argmax() {
        let mask = IndexMask {
            height: 2,
            width: 2,
            classes: vec![0, 2, 1, 0],
        };
        let field = mask.to_onehot(3).unwrap();
        assert_eq!(IndexMask::from_field(&field).unwrap(), mask);
        assert!(mask.to_onehot(2).unwrap_err().is_validation());
    }

    #[test]
    fn non_indexed_png_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gray.png");
        let file = std::fs::File::create(&path).unwrap();
        let mut encoder = png::Encoder::new(std::io::BufWriter::new(file), 2, 2);
        encoder.set_color(png::ColorType::Grayscale);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder.write_header().unwrap();
        writer.write_image_data(&[0, 1, 2, 3]).unwrap();
        drop(writer);

        assert!(matches!(
            read_mask_png(&path).unwrap_err(),
            Error::Format(_)
        ));
    }
}
