//! Synthetic benchmark sequences: a colored square translating over a
//! contrasting background, optionally hidden for a window of frames. The
//! translating sequence uses exact flat colors so every patch has exact
//! feature twins in every other frame (correspondence is unambiguous); the
//! occluded sequence adds seeded per-pixel jitter so paired memory
//! configurations can be compared across independent noise draws. Both
//! return the sequence and its ground-truth masks, so end-to-end accuracy
//! can be scored without any external data.

use crate::io::mask_png::IndexMask;
use crate::pipeline::{Mode, SequenceSource};
use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Side length of every generated frame.
pub const FRAME_SIDE: usize = 64;
/// Side length of the moving square.
pub const SQUARE_SIDE: usize = 16;
/// Base color of the square (warm red).
pub const OBJECT_COLOR: [u8; 3] = [205, 60, 50];
/// Base color of the background (cool blue).
pub const BACKGROUND_COLOR: [u8; 3] = [40, 110, 205];
/// Peak amplitude of the per-pixel color jitter in the occluded sequence.
const OCCLUSION_JITTER: i16 = 4;

/// A generated sequence plus its per-frame ground truth (frame 0 included).
#[derive(Debug, Clone)]
pub struct SquareFixture {
    pub source: SequenceSource,
    pub truth: Vec<IndexMask>,
}

fn jittered(rng: &mut ChaCha8Rng, base: [u8; 3], jitter: i16) -> Rgb<u8> {
    let mut out = [0u8; 3];
    for (o, &b) in out.iter_mut().zip(&base) {
        let delta: i16 = rng.gen_range(-jitter..=jitter);
        *o = (b as i16 + delta).clamp(0, 255) as u8;
    }
    Rgb(out)
}

/// Renders one frame: background everywhere, the square at `position`
/// (left, top) when given. `jitter` adds independent per-pixel color
/// noise; zero renders exact flat colors.
fn render_frame(
    rng: &mut ChaCha8Rng,
    position: Option<(usize, usize)>,
    jitter: i16,
) -> (RgbImage, IndexMask) {
    let side = FRAME_SIDE as u32;
    let mut image = RgbImage::new(side, side);
    let mut classes = vec![0usize; FRAME_SIDE * FRAME_SIDE];
    for y in 0..FRAME_SIDE {
        for x in 0..FRAME_SIDE {
            let on_square = position.is_some_and(|(left, top)| {
                x >= left && x < left + SQUARE_SIDE && y >= top && y < top + SQUARE_SIDE
            });
            let base = if on_square {
                OBJECT_COLOR
            } else {
                BACKGROUND_COLOR
            };
            let color = if jitter == 0 {
                Rgb(base)
            } else {
                jittered(rng, base, jitter)
            };
            image.put_pixel(x as u32, y as u32, color);
            if on_square {
                classes[y * FRAME_SIDE + x] = 1;
            }
        }
    }
    (
        image,
        IndexMask {
            height: FRAME_SIDE,
            width: FRAME_SIDE,
            classes,
        },
    )
}

fn build(
    frames: usize,
    seed: u64,
    jitter: i16,
    position: impl Fn(usize) -> Option<(usize, usize)>,
) -> SquareFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut images = Vec::with_capacity(frames);
    let mut truth = Vec::with_capacity(frames);
    for t in 0..frames {
        let (image, mask) = render_frame(&mut rng, position(t), jitter);
        images.push(image);
        truth.push(mask);
    }
    let seed_mask = truth[0].clone();
    SquareFixture {
        source: SequenceSource {
            images,
            mode: Mode::Mask,
            seed_mask: Some(seed_mask),
            seed_keypoints: None,
        },
        truth,
    }
}

/// Horizontal sweep: right by `step` px/frame until the square reaches the
/// frame edge, then back. Positions stay inside the frame for any length.
fn swept_left(t: usize, step: usize) -> usize {
    let lo = 8;
    let hi = FRAME_SIDE - SQUARE_SIDE; // 48
    let span = (hi - lo) / step;
    let phase = t % (2 * span);
    if phase <= span {
        lo + step * phase
    } else {
        hi - step * (phase - span)
    }
}

/// Noise-free sequence, square sliding 4 px/frame (one feature cell at
/// patch size 4), never leaving the frame, visible throughout. Flat colors
/// and cell-aligned motion make correspondence exact by construction.
pub fn translating_square(frames: usize) -> SquareFixture {
    build(frames, 0, 0, |t| Some((swept_left(t, 4), 24)))
}

/// Like [`translating_square`] but with seeded per-pixel color jitter and
/// the square hidden for the frames in `hidden` (ground truth is all
/// background there), moving 2 px/frame so it travels during the blackout.
pub fn occluded_square(
    frames: usize,
    hidden: std::ops::Range<usize>,
    seed: u64,
) -> SquareFixture {
    build(frames, seed, OCCLUSION_JITTER, move |t| {
        if hidden.contains(&t) {
            None
        } else {
            Some((swept_left(t, 2), 24))
        }
    })
}
