//! Color-space support: sRGB to CIELAB (D65 white point) and the
//! normalized a-channel used as a self-supervised per-pixel label.

use crate::error::{Error, Result};
use crate::label::{LabelField, LabelKind};
use image::RgbImage;

/// Gamma-decodes one 8-bit sRGB channel to linear light.
fn srgb_to_linear(v: u8) -> f64 {
    let c = v as f64 / 255.0;
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

/// D65 reference white.
const WHITE: (f64, f64, f64) = (0.95047, 1.0, 1.08883);

fn lab_f(t: f64) -> f64 {
    const DELTA: f64 = 6.0 / 29.0;
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

/// Converts one 8-bit sRGB triplet to CIELAB under D65.
pub fn rgb_to_lab(r: u8, g: u8, b: u8) -> (f64, f64, f64) {
    let (rl, gl, bl) = (srgb_to_linear(r), srgb_to_linear(g), srgb_to_linear(b));
    let x = 0.4124564 * rl + 0.3575761 * gl + 0.1804375 * bl;
    let y = 0.2126729 * rl + 0.7151522 * gl + 0.0721750 * bl;
    let z = 0.0193339 * rl + 0.1191920 * gl + 0.9503041 * bl;

    let fx = lab_f(x / WHITE.0);
    let fy = lab_f(y / WHITE.1);
    let fz = lab_f(z / WHITE.2);
    (116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz))
}

/// Rescales a Lab a-value into `[0, 1]`: neutral colors (a = 0) land at
/// 0.5, and the full sRGB gamut stays inside the unit interval.
pub fn normalize_a(a: f64) -> f64 {
    (a / 255.0 + 0.5).clamp(0.0, 1.0)
}

/// Extracts the image's a-channel as a per-pixel color label field.
pub fn rgb_to_lab_a_channel(image: &RgbImage) -> Result<LabelField> {
    let (w, h) = image.dimensions();
    if w == 0 || h == 0 {
        return Err(Error::validation("image has no pixels".to_string()));
    }
    let mut data = Vec::with_capacity((w * h) as usize);
    for pixel in image.pixels() {
        let (_, a, _) = rgb_to_lab(pixel.0[0], pixel.0[1], pixel.0[2]);
        data.push(normalize_a(a));
    }
    LabelField::new(h as usize, w as usize, 1, LabelKind::ColorAChannel, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Published colorimetry reference values for sRGB primaries under D65
    /// (independent of this implementation).
    const REFERENCE: &[((u8, u8, u8), (f64, f64, f64))] = &[
        ((255, 0, 0), (53.2408, 80.0925, 67.2032)),
        ((0, 255, 0), (87.7347, -86.1827, 83.1793)),
        ((0, 0, 255), (32.2970, 79.1875, -107.8602)),
        ((255, 255, 255), (100.0, 0.0, 0.0)),
        ((0, 0, 0), (0.0, 0.0, 0.0)),
    ];

    #[test]
    fn primaries_match_reference_colorimetry() {
        for &((r, g, b), (wl, wa, wb)) in REFERENCE {
            let (l, a, bb) = rgb_to_lab(r, g, b);
            assert!((l - wl).abs() < 0.01, "L for ({r},{g},{b}): {l} vs {wl}");
            assert!((a - wa).abs() < 0.01, "a for ({r},{g},{b}): {a} vs {wa}");
            assert!((bb - wb).abs() < 0.01, "b for ({r},{g},{b}): {bb} vs {wb}");
        }
    }

    #[test]
    fn neutral_gray_sits_on_the_a_axis() {
        let (_, a, _) = rgb_to_lab(128, 128, 128);
        assert!(a.abs() < 1e-3);
        assert!((normalize_a(a) - 0.5).abs() < 1e-4);
    }

    #[test]
    fn red_has_larger_a_than_green() {
        let (_, a_red, _) = rgb_to_lab(255, 0, 0);
        let (_, a_green, _) = rgb_to_lab(0, 255, 0);
        assert!(a_red > a_green);
    }

    #[test]
    fn gamut_extremes_stay_in_unit_interval() {
        for r in [0u8, 64, 128, 192, 255] {
            for g in [0u8, 128, 255] {
                for b in [0u8, 128, 255] {
                    let (_, a, _) = rgb_to_lab(r, g, b);
                    let n = normalize_a(a);
                    assert!((0.0..=1.0).contains(&n));
                }
            }
        }
    }

    #[test]
    fn a_channel_field_has_color_kind_and_image_shape() {
        let mut img = RgbImage::new(3, 2);
        img.put_pixel(0, 0, image::Rgb([255, 0, 0]));
        img.put_pixel(2, 1, image::Rgb([0, 255, 0]));
        let field = rgb_to_lab_a_channel(&img).unwrap();
        assert_eq!((field.height(), field.width(), field.label_dim()), (2, 3, 1));
        assert_eq!(field.kind(), LabelKind::ColorAChannel);
        // Red pixel well above neutral, green pixel well below.
        assert!(field.get(0, 0, 0) > 0.7);
        assert!(field.get(1, 2, 0) < 0.2);
    }
}
