//! Shared test support: independently written reference oracles and
//! synthetic image fixtures with recorded ground truth.
//!
//! The colour oracle is transcribed from the published sRGB/CIELAB
//! constants (7-digit matrix, D65 white point 0.95047/1.0/1.08883, legacy
//! segment constants 0.008856 and 903.3) and deliberately shares no code
//! with the library.

#![allow(dead_code)]

use fairtone_core::color::Rgb8;
use fairtone_core::imageproc::{GrayImage, RasterImage};

pub mod reference_color {
    use super::Rgb8;

    const MATRIX: [[f64; 3]; 3] = [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ];
    const WHITE: [f64; 3] = [0.95047, 1.0, 1.08883];

    pub fn srgb_decode(channel: u8) -> f64 {
        let c = channel as f64 / 255.0;
        if c <= 0.04045 {
            c / 12.92
        } else {
            ((c + 0.055) / 1.055).powf(2.4)
        }
    }

    fn segment(t: f64) -> f64 {
        if t > 0.008856 {
            t.cbrt()
        } else {
            (903.3 * t + 16.0) / 116.0
        }
    }

    /// Reference sRGB (D65) to CIELAB conversion.
    pub fn rgb_to_lab(pixel: Rgb8) -> (f64, f64, f64) {
        let rgb = [srgb_decode(pixel.r), srgb_decode(pixel.g), srgb_decode(pixel.b)];
        let mut xyz = [0.0f64; 3];
        for (i, row) in MATRIX.iter().enumerate() {
            xyz[i] = row[0] * rgb[0] + row[1] * rgb[1] + row[2] * rgb[2];
        }
        let f: Vec<f64> = xyz.iter().zip(&WHITE).map(|(v, w)| segment(v / w)).collect();
        (116.0 * f[1] - 16.0, 500.0 * (f[0] - f[1]), 200.0 * (f[1] - f[2]))
    }

    /// Reference ITA in degrees with the `b = 0` limit convention.
    pub fn ita_degrees(l: f64, b: f64) -> f64 {
        if b == 0.0 {
            if l > 50.0 {
                90.0
            } else if l < 50.0 {
                -90.0
            } else {
                0.0
            }
        } else {
            ((l - 50.0) / b).atan().to_degrees()
        }
    }

    pub fn ita_of(pixel: Rgb8) -> f64 {
        let (l, _, b) = rgb_to_lab(pixel);
        ita_degrees(l, b)
    }

    /// Direct transcription of the six-interval Fitzpatrick thresholding.
    pub fn fitzpatrick(ita: f64) -> u8 {
        if ita > 55.0 {
            1
        } else if 55.0 >= ita && ita > 41.0 {
            2
        } else if 41.0 >= ita && ita > 28.0 {
            3
        } else if 28.0 >= ita && ita > 19.0 {
            4
        } else if 19.0 >= ita && ita > 10.0 {
            5
        } else {
            6
        }
    }
}

pub mod reference_morphology {
    use super::GrayImage;

    /// Direct-definition grayscale dilation/erosion over the clipped
    /// square window; O(pixels x kernel-area).
    pub fn sweep(gray: &GrayImage, side: usize, take_max: bool) -> GrayImage {
        let r = (side / 2) as isize;
        let (w, h) = (gray.width() as isize, gray.height() as isize);
        let mut out = GrayImage::new(gray.width(), gray.height(), 0);
        for y in 0..h {
            for x in 0..w {
                let mut best: Option<u8> = None;
                for dy in -r..=r {
                    for dx in -r..=r {
                        let (nx, ny) = (x + dx, y + dy);
                        if nx < 0 || ny < 0 || nx >= w || ny >= h {
                            continue;
                        }
                        let v = gray.get(nx as usize, ny as usize);
                        best = Some(match best {
                            None => v,
                            Some(b) if take_max => b.max(v),
                            Some(b) => b.min(v),
                        });
                    }
                }
                out.set(x as usize, y as usize, best.unwrap());
            }
        }
        out
    }

    /// Brute-force black-hat: close(g) - g, clamped at zero.
    pub fn black_hat(gray: &GrayImage, side: usize) -> GrayImage {
        let closed = sweep(&sweep(gray, side, true), side, false);
        let mut out = GrayImage::new(gray.width(), gray.height(), 0);
        for y in 0..gray.height() {
            for x in 0..gray.width() {
                out.set(x, y, closed.get(x, y).saturating_sub(gray.get(x, y)));
            }
        }
        out
    }
}

/// Mann–Whitney AUC by O(n^2) pair enumeration, ties worth half.
pub fn brute_force_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut wins = 0.0f64;
    let mut pairs = 0.0f64;
    for (i, &si) in scores.iter().enumerate() {
        if !labels[i] {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] {
                continue;
            }
            pairs += 1.0;
            if si > sj {
                wins += 1.0;
            } else if si == sj {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// Small deterministic generator for fixture randomness; splitmix64.
pub struct TestRng(u64);

impl TestRng {
    pub fn new(seed: u64) -> Self {
        Self(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: usize, hi: usize) -> usize {
        lo + (self.next_u64() % (hi - lo) as u64) as usize
    }
}

/// Eight uniform-tone fixture colours with their reference-oracle ITA and
/// Fitzpatrick type, frozen from the oracle before the build.
pub fn tone_palette() -> Vec<(Rgb8, f64, u8)> {
    vec![
        (Rgb8::new(246, 240, 230), 82.9843, 1),
        (Rgb8::new(237, 214, 188), 66.8683, 1),
        (Rgb8::new(222, 188, 152), 51.2212, 2),
        (Rgb8::new(204, 164, 126), 38.4647, 3),
        (Rgb8::new(190, 140, 100), 22.9676, 4),
        (Rgb8::new(178, 128, 90), 15.2641, 5),
        (Rgb8::new(165, 120, 84), 8.7633, 6),
        (Rgb8::new(92, 62, 42), -49.9778, 6),
    ]
}

/// A hair-robustness fixture: uniform light surround, a centred dark
/// lesion blob, and several thin dark hairs crossing the border patches.
pub struct HairFixture {
    pub image: RasterImage,
    pub surround: Rgb8,
    /// Reference-oracle ITA of the surround colour.
    pub true_ita: f64,
    pub hair_count: usize,
}

pub fn hair_fixture(seed: u64) -> HairFixture {
    let mut rng = TestRng::new(seed.wrapping_mul(0x9e37).wrapping_add(17));
    let (w, h) = (160usize, 160usize);

    // light surround: blend between two light skin tones
    let t = rng.unit();
    let blend = |a: u8, b: u8| (a as f64 + t * (b as f64 - a as f64)).round() as u8;
    let surround = Rgb8::new(blend(246, 204), blend(240, 164), blend(230, 126));
    let mut image = RasterImage::filled(w, h, surround);

    // centred dark lesion blob (ellipse), clear of the 20px border band
    // plus the black-hat kernel reach
    let lesion = Rgb8::new(70, 40, 35);
    let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
    let (rx, ry) = (30.0 + rng.unit() * 10.0, 25.0 + rng.unit() * 10.0);
    for y in 0..h {
        for x in 0..w {
            let dx = (x as f64 - cx) / rx;
            let dy = (y as f64 - cy) / ry;
            if dx * dx + dy * dy <= 1.0 {
                image.set(x, y, lesion);
            }
        }
    }

    // thin dark hairs border to border; the first three run vertically
    // through the left, centre and right patch columns so every one of
    // the eight patches is crossed by hair
    let hair = Rgb8::new(32, 24, 18);
    let hair_count = rng.range(5, 16);
    let mut draw_line = |rng: &mut TestRng, x0: f64, y0: f64, x1: f64, y1: f64| {
        let steps = 2 * w.max(h);
        let width = 1 + rng.range(0, 2); // 1 or 2 px
        for s in 0..=steps {
            let t = s as f64 / steps as f64;
            let x = (x0 + t * (x1 - x0)).round() as isize;
            let y = (y0 + t * (y1 - y0)).round() as isize;
            for dy in 0..width as isize {
                for dx in 0..width as isize {
                    let (px, py) = (x + dx, y + dy);
                    if px >= 0 && py >= 0 && (px as usize) < w && (py as usize) < h {
                        image.set(px as usize, py as usize, hair);
                    }
                }
            }
        }
    };
    let patch_bands = [(2usize, 16usize), (72, 86), (142, 156)];
    for (lo, hi) in patch_bands {
        let x_top = rng.range(lo, hi) as f64;
        let x_bottom = rng.range(lo, hi) as f64;
        draw_line(&mut rng, x_top, 0.0, x_bottom, (h - 1) as f64);
    }
    for _ in patch_bands.len()..hair_count {
        if rng.unit() < 0.5 {
            let (x0, x1) = (rng.range(0, w) as f64, rng.range(0, w) as f64);
            draw_line(&mut rng, x0, 0.0, x1, (h - 1) as f64);
        } else {
            let (y0, y1) = (rng.range(0, h) as f64, rng.range(0, h) as f64);
            draw_line(&mut rng, 0.0, y0, (w - 1) as f64, y1);
        }
    }

    let true_ita = reference_color::ita_of(surround);
    HairFixture { image, surround, true_ita, hair_count }
}

/// A fixture with one corner patch painted distinctly lighter than the
/// rest of the image; records which of the four corners was planted.
pub struct PlantedCorner {
    pub image: RasterImage,
    /// Index into the eight-patch layout (corners are 0..4).
    pub corner_index: usize,
    pub planted: Rgb8,
}

pub fn planted_corner_fixture(seed: u64) -> PlantedCorner {
    let mut rng = TestRng::new(seed.wrapping_mul(0x51ed).wrapping_add(3));
    let (w, h, side) = (120usize, 120usize, 20usize);
    let dark_bases = [Rgb8::new(165, 120, 84), Rgb8::new(130, 88, 58), Rgb8::new(150, 105, 70)];
    let light_tones = [Rgb8::new(246, 240, 230), Rgb8::new(237, 214, 188), Rgb8::new(230, 200, 170)];
    let base = dark_bases[rng.range(0, dark_bases.len())];
    let planted = light_tones[rng.range(0, light_tones.len())];
    let corner_index = rng.range(0, 4);
    let (x0, y0) = match corner_index {
        0 => (0, 0),
        1 => (w - side, 0),
        2 => (0, h - side),
        _ => (w - side, h - side),
    };
    let mut image = RasterImage::filled(w, h, base);
    image.paint_rect(x0, y0, side, side, planted);
    PlantedCorner { image, corner_index, planted }
}
