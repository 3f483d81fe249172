//! Edge patch layout and per-patch tone statistics.

use crate::color::{ita, rgb_to_lab, ItaDegrees, LabColor};
use crate::scalar::Real;

use super::{BinaryMask, ImageProcError, RasterImage};

/// A square sample window inside an image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct PatchSpec {
    /// Top-left corner, x.
    pub x: usize,
    /// Top-left corner, y.
    pub y: usize,
    /// Side length in pixels.
    pub side: usize,
}

impl PatchSpec {
    pub fn area(&self) -> usize {
        self.side * self.side
    }

    pub fn in_bounds(&self, width: usize, height: usize) -> bool {
        self.x + self.side <= width && self.y + self.side <= height
    }
}

/// The fixed eight-patch border layout: the four corners followed by the
/// four edge midpoints (top, bottom, left, right), each inset by `margin`
/// from the nearest border. Deterministic; the order is part of the
/// contract because ties in tone selection break toward the lowest index.
pub fn edge_patch_layout(
    width: usize,
    height: usize,
    side: usize,
    margin: usize,
) -> Result<[PatchSpec; 8], ImageProcError> {
    let needed = 2 * margin + side;
    if side == 0 || width < needed || height < needed {
        return Err(ImageProcError::ImageTooSmall {
            width,
            height,
            min_width: needed.max(1),
            min_height: needed.max(1),
        });
    }
    let left = margin;
    let top = margin;
    let right = width - margin - side;
    let bottom = height - margin - side;
    let mid_x = (width - side) / 2;
    let mid_y = (height - side) / 2;
    let at = |x, y| PatchSpec { x, y, side };
    Ok([
        at(left, top),
        at(right, top),
        at(left, bottom),
        at(right, bottom),
        at(mid_x, top),
        at(mid_x, bottom),
        at(left, mid_y),
        at(right, mid_y),
    ])
}

/// Mean Lab over the selected pixels of a patch, plus how many pixels
/// contributed. With `ignore_mask` the mask is disregarded entirely.
pub(super) fn patch_mean_lab<T: Real>(
    image: &RasterImage,
    mask: &BinaryMask,
    patch: &PatchSpec,
    ignore_mask: bool,
) -> (usize, Option<LabColor<T>>) {
    assert!(
        patch.in_bounds(image.width(), image.height()),
        "patch {patch:?} out of bounds for {}x{}",
        image.width(),
        image.height()
    );
    let mut used = 0usize;
    let mut sum_l = T::zero();
    let mut sum_a = T::zero();
    let mut sum_b = T::zero();
    for y in patch.y..patch.y + patch.side {
        for x in patch.x..patch.x + patch.side {
            if !ignore_mask && mask.get(x, y) {
                continue;
            }
            let lab = rgb_to_lab::<T>(image.get(x, y));
            sum_l += lab.l;
            sum_a += lab.a;
            sum_b += lab.b;
            used += 1;
        }
    }
    if used == 0 {
        return (0, None);
    }
    let n = T::from_count(used);
    (
        used,
        Some(LabColor { l: sum_l / n, a: sum_a / n, b: sum_b / n }),
    )
}

/// ITA of the mean Lab over unmasked patch pixels, or `None` when fewer
/// than `min_coverage` of the patch survives the mask. Averaging happens
/// before the arctangent so single noisy pixels cannot dominate.
pub fn patch_ita<T: Real>(
    image: &RasterImage,
    mask: &BinaryMask,
    patch: &PatchSpec,
    min_coverage: f64,
) -> Option<ItaDegrees<T>> {
    let (used, mean) = patch_mean_lab::<T>(image, mask, patch, false);
    let coverage = used as f64 / patch.area() as f64;
    if coverage < min_coverage {
        return None;
    }
    mean.map(ita)
}
