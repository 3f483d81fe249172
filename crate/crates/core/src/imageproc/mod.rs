//! Per-image skin tone estimation: hair masking via black-hat morphology,
//! border patch sampling, lightest-patch selection.
//!
//! Lesions and blemishes are darker than the surrounding skin in the large
//! majority of images, so the estimator samples eight patches around the
//! border (where healthy skin lives), masks hair pixels first, and takes
//! the patch with the highest ITA as the healthy-skin tone.

mod morphology;
mod patches;

pub use morphology::{black_hat, dilate, erode, morph_close, StructuringElement};
pub use patches::{edge_patch_layout, patch_ita, PatchSpec};

use crate::color::{fitzpatrick_from_ita, Fitzpatrick, ItaDegrees, Rgb8};
use crate::scalar::Real;

/// Errors from the image-processing pipeline.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ImageProcError {
    #[error("structuring element side must be odd and >= 1, got {side}")]
    InvalidKernel { side: usize },
    #[error("structuring element {side}x{side} exceeds image {width}x{height}")]
    KernelTooLarge { side: usize, width: usize, height: usize },
    #[error(
        "image {width}x{height} too small for the patch layout; needs at least {min_width}x{min_height}"
    )]
    ImageTooSmall { width: usize, height: usize, min_width: usize, min_height: usize },
    #[error("pixel buffer holds {actual} pixels, expected {expected}")]
    PixelCountMismatch { expected: usize, actual: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// A dense row-major RGB image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    pixels: Vec<Rgb8>,
}

impl RasterImage {
    /// Builds an image from a row-major pixel buffer.
    pub fn from_pixels(
        width: usize,
        height: usize,
        pixels: Vec<Rgb8>,
    ) -> Result<Self, ImageProcError> {
        let expected = width * height;
        if width == 0 || height == 0 || pixels.len() != expected {
            return Err(ImageProcError::PixelCountMismatch { expected, actual: pixels.len() });
        }
        Ok(Self { width, height, pixels })
    }

    /// A `width x height` image filled with one colour.
    pub fn filled(width: usize, height: usize, fill: Rgb8) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        Self { width, height, pixels: vec![fill; width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Rgb8 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, pixel: Rgb8) {
        self.pixels[y * self.width + x] = pixel;
    }

    pub fn pixels(&self) -> &[Rgb8] {
        &self.pixels
    }

    /// Paints an axis-aligned rectangle, clipped to the image.
    pub fn paint_rect(&mut self, x0: usize, y0: usize, w: usize, h: usize, colour: Rgb8) {
        for y in y0..(y0 + h).min(self.height) {
            for x in x0..(x0 + w).min(self.width) {
                self.set(x, y, colour);
            }
        }
    }
}

/// A dense row-major 8-bit grayscale image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, fill: u8) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        Self { width, height, data: vec![fill; width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub(crate) fn row(&self, y: usize) -> &[u8] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub(crate) fn row_mut(&mut self, y: usize) -> &mut [u8] {
        &mut self.data[y * self.width..(y + 1) * self.width]
    }
}

/// Per-pixel exclusion mask; `true` marks a pixel to be left out of tone
/// statistics (hair).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn all_clear(width: usize, height: usize) -> Self {
        Self { width, height, bits: vec![false; width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, masked: bool) {
        self.bits[y * self.width + x] = masked;
    }

    /// Number of masked pixels.
    pub fn masked_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// Rec. 601 luma, rounded to the nearest integer.
pub fn to_gray(image: &RasterImage) -> GrayImage {
    let mut out = GrayImage::new(image.width(), image.height(), 0);
    for y in 0..image.height() {
        for x in 0..image.width() {
            let p = image.get(x, y);
            let luma = 0.299 * p.r as f64 + 0.587 * p.g as f64 + 0.114 * p.b as f64;
            out.set(x, y, luma.round() as u8);
        }
    }
    out
}

/// Hair-mask parameters: black-hat structuring element side and the
/// response threshold above which a pixel counts as hair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct HairMaskParams {
    pub kernel_size: usize,
    pub threshold: u8,
}

impl Default for HairMaskParams {
    fn default() -> Self {
        Self { kernel_size: 17, threshold: 10 }
    }
}

/// Marks pixels whose black-hat response exceeds the threshold. The kernel
/// must be odd and at least 3 so thin dark hairs produce a response while
/// broad dark regions (lesions) mostly do not.
pub fn hair_mask(image: &RasterImage, params: &HairMaskParams) -> Result<BinaryMask, ImageProcError> {
    if params.kernel_size < 3 {
        return Err(ImageProcError::InvalidKernel { side: params.kernel_size });
    }
    let se = StructuringElement::square(params.kernel_size)?;
    let response = black_hat(&to_gray(image), se)?;
    let mut mask = BinaryMask::all_clear(image.width(), image.height());
    for y in 0..image.height() {
        for x in 0..image.width() {
            mask.set(x, y, response.get(x, y) > params.threshold);
        }
    }
    Ok(mask)
}

/// Configuration for the per-image estimator.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SkinToneConfig {
    /// Patch side length in pixels.
    pub patch_side: usize,
    /// Inset of every patch from its nearest border(s).
    pub margin: usize,
    /// Black-hat structuring element side (odd, >= 3).
    pub kernel_size: usize,
    /// Black-hat response threshold for the hair mask.
    pub hair_threshold: u8,
    /// Minimum unmasked fraction for a patch to count, in (0, 1].
    pub min_coverage: f64,
}

impl Default for SkinToneConfig {
    fn default() -> Self {
        Self { patch_side: 20, margin: 0, kernel_size: 17, hair_threshold: 10, min_coverage: 0.5 }
    }
}

/// Result of estimating one image's skin tone.
#[derive(Debug, Clone, PartialEq)]
pub struct SkinToneEstimate<T> {
    /// The winning patch (highest ITA, ties broken by layout order).
    pub chosen_patch: PatchSpec,
    /// ITA of the winning patch.
    pub ita: ItaDegrees<T>,
    /// Fitzpatrick type of `ita`.
    pub fitzpatrick: Fitzpatrick,
    /// Every patch in layout order with its ITA, absent where the hair
    /// mask left less than the configured coverage.
    pub per_patch_ita: Vec<(PatchSpec, Option<ItaDegrees<T>>)>,
    /// Fraction of the chosen patch that the hair mask excluded.
    pub masked_fraction: f64,
}

/// Estimates the healthy-skin tone of an image: hair pixels are masked,
/// the eight border patches are measured, and the lightest (highest-ITA)
/// patch wins. If the mask starves every patch below `min_coverage` the
/// patch with the highest unmasked fraction is used instead.
pub fn estimate_skin_tone<T: Real>(
    image: &RasterImage,
    config: &SkinToneConfig,
) -> Result<SkinToneEstimate<T>, ImageProcError> {
    if !(config.min_coverage > 0.0 && config.min_coverage <= 1.0) {
        return Err(ImageProcError::InvalidConfig(format!(
            "min_coverage must be in (0, 1], got {}",
            config.min_coverage
        )));
    }
    let layout = edge_patch_layout(image.width(), image.height(), config.patch_side, config.margin)?;
    let mask = hair_mask(
        image,
        &HairMaskParams { kernel_size: config.kernel_size, threshold: config.hair_threshold },
    )?;

    let mut per_patch = Vec::with_capacity(layout.len());
    let mut unmasked_fraction = Vec::with_capacity(layout.len());
    for patch in &layout {
        let (used, mean) = patches::patch_mean_lab::<T>(image, &mask, patch, false);
        let coverage = used as f64 / patch.area() as f64;
        let ita_opt = if coverage >= config.min_coverage {
            mean.map(crate::color::ita)
        } else {
            None
        };
        per_patch.push((*patch, ita_opt));
        unmasked_fraction.push(coverage);
    }

    let lightest = per_patch
        .iter()
        .enumerate()
        .filter_map(|(i, (_, ita))| ita.map(|v| (i, v)))
        .fold(None::<(usize, ItaDegrees<T>)>, |best, (i, v)| match best {
            Some((_, b)) if b.degrees() >= v.degrees() => best,
            _ => Some((i, v)),
        });

    let (index, chosen_ita) = match lightest {
        Some(found) => found,
        None => {
            // every patch fell below coverage: take the least-masked one
            let index = unmasked_fraction
                .iter()
                .enumerate()
                .fold(0usize, |best, (i, &f)| if f > unmasked_fraction[best] { i } else { best });
            let patch = &layout[index];
            let (used, mean) = patches::patch_mean_lab::<T>(image, &mask, patch, false);
            let mean = if used > 0 {
                mean
            } else {
                patches::patch_mean_lab::<T>(image, &mask, patch, true).1
            };
            let mean = mean.expect("patch has at least one pixel");
            (index, crate::color::ita(mean))
        }
    };

    Ok(SkinToneEstimate {
        chosen_patch: layout[index],
        ita: chosen_ita,
        fitzpatrick: fitzpatrick_from_ita(chosen_ita),
        per_patch_ita: per_patch,
        masked_fraction: 1.0 - unmasked_fraction[index],
    })
}
