//! Flat grayscale morphology: dilation, erosion, closing, black-hat.
//!
//! Structuring elements are odd-sided squares. Windows are clipped at the
//! image border, which is the usual padding-free convention (dilation pads
//! with the minimum, erosion with the maximum), so closing stays extensive
//! and idempotent.
//!
//! The separable square window lets every pass run as a sliding min/max
//! over rows then columns in O(1) amortised comparisons per pixel, so the
//! kernel size has no impact on runtime.

use std::collections::VecDeque;

use super::{GrayImage, ImageProcError};

/// An odd-sided square structuring element.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StructuringElement {
    side: usize,
}

impl StructuringElement {
    /// A `side x side` square; `side` must be odd and at least 1.
    pub fn square(side: usize) -> Result<Self, ImageProcError> {
        if side == 0 || side.is_multiple_of(2) {
            return Err(ImageProcError::InvalidKernel { side });
        }
        Ok(Self { side })
    }

    pub fn side(self) -> usize {
        self.side
    }

    fn radius(self) -> usize {
        self.side / 2
    }

    fn check_fits(self, image: &GrayImage) -> Result<(), ImageProcError> {
        if self.side > image.width() || self.side > image.height() {
            return Err(ImageProcError::KernelTooLarge {
                side: self.side,
                width: image.width(),
                height: image.height(),
            });
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
enum Extreme {
    Max,
    Min,
}

/// Sliding window extreme over `src`, window `[i - radius, i + radius]`
/// clipped to the slice, written into `dst`. Monotonic-deque algorithm.
fn sliding_extreme(src: &[u8], dst: &mut [u8], radius: usize, mode: Extreme) {
    debug_assert_eq!(src.len(), dst.len());
    let n = src.len();
    let mut deque: VecDeque<usize> = VecDeque::with_capacity(2 * radius + 2);
    let mut next = 0usize;
    for (j, out) in dst.iter_mut().enumerate() {
        let hi = (j + radius).min(n - 1);
        while next <= hi {
            while let Some(&back) = deque.back() {
                let dominated = match mode {
                    Extreme::Max => src[back] <= src[next],
                    Extreme::Min => src[back] >= src[next],
                };
                if dominated {
                    deque.pop_back();
                } else {
                    break;
                }
            }
            deque.push_back(next);
            next += 1;
        }
        while deque.front().is_some_and(|&f| f + radius < j) {
            deque.pop_front();
        }
        *out = src[*deque.front().expect("window never empty")];
    }
}

fn apply_separable(gray: &GrayImage, radius: usize, mode: Extreme) -> GrayImage {
    let (w, h) = (gray.width(), gray.height());
    let mut rows = GrayImage::new(w, h, 0);
    for y in 0..h {
        sliding_extreme(gray.row(y), rows.row_mut(y), radius, mode);
    }
    let mut out = GrayImage::new(w, h, 0);
    let mut col_in = vec![0u8; h];
    let mut col_out = vec![0u8; h];
    for x in 0..w {
        for (y, v) in col_in.iter_mut().enumerate() {
            *v = rows.get(x, y);
        }
        sliding_extreme(&col_in, &mut col_out, radius, mode);
        for (y, &v) in col_out.iter().enumerate() {
            out.set(x, y, v);
        }
    }
    out
}

/// Grayscale dilation: each pixel becomes the window maximum.
pub fn dilate(gray: &GrayImage, kernel: StructuringElement) -> Result<GrayImage, ImageProcError> {
    kernel.check_fits(gray)?;
    Ok(apply_separable(gray, kernel.radius(), Extreme::Max))
}

/// Grayscale erosion: each pixel becomes the window minimum.
pub fn erode(gray: &GrayImage, kernel: StructuringElement) -> Result<GrayImage, ImageProcError> {
    kernel.check_fits(gray)?;
    Ok(apply_separable(gray, kernel.radius(), Extreme::Min))
}

/// Morphological closing: dilation followed by erosion with the same
/// element. Pointwise `close(g) >= g`, and closing twice equals closing
/// once.
pub fn morph_close(
    gray: &GrayImage,
    kernel: StructuringElement,
) -> Result<GrayImage, ImageProcError> {
    erode(&dilate(gray, kernel)?, kernel)
}

/// Black-hat transform: `close(g) - g`, clamped at zero. Responds on thin
/// dark structures narrower than the structuring element and is zero on
/// flat regions.
pub fn black_hat(
    gray: &GrayImage,
    kernel: StructuringElement,
) -> Result<GrayImage, ImageProcError> {
    let closed = morph_close(gray, kernel)?;
    let mut out = closed;
    for (o, g) in out.data_mut().iter_mut().zip(gray.data()) {
        *o = o.saturating_sub(*g);
    }
    Ok(out)
}
