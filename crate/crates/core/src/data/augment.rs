use rand::Rng;

use super::ImageShape;

/// Zero-pads by `pad`, crops an `H x W` window at offset `(dy, dx)` of the
/// padded image, then mirrors horizontally when `flip` is set.
pub fn pad_crop_flip(
    image: &[f64],
    shape: ImageShape,
    pad: usize,
    dy: usize,
    dx: usize,
    flip: bool,
) -> Vec<f64> {
    let ImageShape {
        channels,
        height,
        width,
    } = shape;
    debug_assert!(dy <= 2 * pad && dx <= 2 * pad);
    let mut out = vec![0.0; image.len()];
    for c in 0..channels {
        for y in 0..height {
            let sy = (y + dy) as isize - pad as isize;
            if sy < 0 || sy >= height as isize {
                continue;
            }
            for x in 0..width {
                let sx = (x + dx) as isize - pad as isize;
                if sx < 0 || sx >= width as isize {
                    continue;
                }
                let ox = if flip { width - 1 - x } else { x };
                out[(c * height + y) * width + ox] =
                    image[(c * height + sy as usize) * width + sx as usize];
            }
        }
    }
    out
}

/// Random pad-and-crop with a horizontal flip half the time. Draws the
/// row offset, column offset and flip bit from `rng` in that order.
pub fn augment_pad_crop_flip<R: Rng + ?Sized>(
    image: &[f64],
    shape: ImageShape,
    pad: usize,
    rng: &mut R,
) -> Vec<f64> {
    let dy = rng.gen_range(0..=2 * pad);
    let dx = rng.gen_range(0..=2 * pad);
    let flip = rng.gen_bool(0.5);
    pad_crop_flip(image, shape, pad, dy, dx, flip)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SHAPE: ImageShape = ImageShape {
        channels: 2,
        height: 3,
        width: 4,
    };

    fn image() -> Vec<f64> {
        (0..SHAPE.len()).map(|v| v as f64 + 1.0).collect()
    }

    #[test]
    fn identity_without_pad_or_flip() {
        assert_eq!(pad_crop_flip(&image(), SHAPE, 0, 0, 0, false), image());
        assert_eq!(pad_crop_flip(&image(), SHAPE, 2, 2, 2, false), image());
    }

    #[test]
    fn double_flip_is_identity() {
        let once = pad_crop_flip(&image(), SHAPE, 0, 0, 0, true);
        assert_ne!(once, image());
        assert_eq!(once[0], 4.0);
        assert_eq!(pad_crop_flip(&once, SHAPE, 0, 0, 0, true), image());
    }

    #[test]
    fn shifted_crop_pulls_in_zeros() {
        let out = pad_crop_flip(&image(), SHAPE, 1, 0, 0, false);
        // shifted down-right by one: first row and column are padding
        assert_eq!(&out[0..4], &[0.0, 0.0, 0.0, 0.0]);
        assert_eq!(out[5], 1.0);
    }
}
