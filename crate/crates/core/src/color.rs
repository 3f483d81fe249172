//! sRGB → CIELAB conversion, individual typology angle, Fitzpatrick mapping.
//!
//! All operations are pure functions. The conversion assumes the sRGB
//! working space with the D65 white point; ITA is `atan((L - 50) / b)` in
//! degrees with the exact `b = 0` limit, and the Fitzpatrick thresholds are
//! the six half-open ITA intervals commonly used for automated labelling.

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

/// An 8-bit sRGB pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rgb8 {
    pub r: u8,
    pub g: u8,
    pub b: u8,
}

impl Rgb8 {
    pub const fn new(r: u8, g: u8, b: u8) -> Self {
        Self { r, g, b }
    }

    /// Grey pixel with all channels equal.
    pub const fn grey(v: u8) -> Self {
        Self { r: v, g: v, b: v }
    }
}

/// A CIE 1976 L*a*b* colour. `l` is lightness in `[0, 100]`; `a` and `b`
/// are the green–red and blue–yellow opponent axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabColor<T> {
    pub l: T,
    pub a: T,
    pub b: T,
}

/// Individual typology angle in degrees, always in `[-90, +90]`.
/// Higher angles correspond to lighter skin.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct ItaDegrees<T>(T);

impl<T: Real> ItaDegrees<T> {
    /// Wraps a degree value; the angle must already be in `[-90, +90]`.
    pub fn new(degrees: T) -> Self {
        debug_assert!(
            degrees >= T::c(-90.0) && degrees <= T::c(90.0),
            "ITA out of range: {degrees}"
        );
        Self(degrees)
    }

    pub fn degrees(self) -> T {
        self.0
    }
}

/// Fitzpatrick skin type, 1 (lightest) through 6 (darkest).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Fitzpatrick {
    I = 1,
    II = 2,
    III = 3,
    IV = 4,
    V = 5,
    VI = 6,
}

impl Fitzpatrick {
    pub const ALL: [Fitzpatrick; 6] = [
        Fitzpatrick::I,
        Fitzpatrick::II,
        Fitzpatrick::III,
        Fitzpatrick::IV,
        Fitzpatrick::V,
        Fitzpatrick::VI,
    ];

    pub fn as_u8(self) -> u8 {
        self as u8
    }
}

impl TryFrom<u8> for Fitzpatrick {
    type Error = InvalidFitzpatrick;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        match value {
            1 => Ok(Fitzpatrick::I),
            2 => Ok(Fitzpatrick::II),
            3 => Ok(Fitzpatrick::III),
            4 => Ok(Fitzpatrick::IV),
            5 => Ok(Fitzpatrick::V),
            6 => Ok(Fitzpatrick::VI),
            other => Err(InvalidFitzpatrick(other)),
        }
    }
}

impl From<Fitzpatrick> for u8 {
    fn from(f: Fitzpatrick) -> u8 {
        f.as_u8()
    }
}

impl std::fmt::Display for Fitzpatrick {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.as_u8())
    }
}

/// A Fitzpatrick value outside `1..=6`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("fitzpatrick type must be in 1..=6, got {0}")]
pub struct InvalidFitzpatrick(pub u8);

// sRGB (D65) linear RGB → XYZ. The white point is taken as the exact row
// sums so that neutral inputs land on fx = fy = fz to machine precision.
const M: [[f64; 3]; 3] = [
    [0.412_456_439_089_692_1, 0.357_576_077_643_909, 0.180_437_483_266_398_94],
    [0.212_672_851_405_622_48, 0.715_152_155_287_818, 0.072_174_993_306_559_58],
    [0.019_333_895_582_329_317, 0.119_192_025_881_303, 0.950_304_078_536_367_7],
];
const WHITE_X: f64 = M[0][0] + M[0][1] + M[0][2];
const WHITE_Y: f64 = M[1][0] + M[1][1] + M[1][2];
const WHITE_Z: f64 = M[2][0] + M[2][1] + M[2][2];

// CIE 1976 segment constants, in the rational form that keeps the two
// branches continuous.
const LAB_EPSILON: f64 = 216.0 / 24389.0;
const LAB_KAPPA: f64 = 24389.0 / 27.0;

/// Decodes one 8-bit sRGB channel to linear intensity in `[0, 1]`.
///
/// Uses the standard piecewise transfer curve: linear below the 0.04045
/// normalized threshold, `((c + 0.055) / 1.055)^2.4` above it.
pub fn srgb_to_linear<T: Real>(channel: u8) -> T {
    let c = T::from_count(channel as usize) / T::c(255.0);
    if c <= T::c(0.04045) {
        c / T::c(12.92)
    } else {
        ((c + T::c(0.055)) / T::c(1.055)).powf(T::c(2.4))
    }
}

/// Converts an sRGB pixel to CIELAB under the D65 white point.
pub fn rgb_to_lab<T: Real>(pixel: Rgb8) -> LabColor<T> {
    let r = srgb_to_linear::<T>(pixel.r);
    let g = srgb_to_linear::<T>(pixel.g);
    let b = srgb_to_linear::<T>(pixel.b);

    let x = T::c(M[0][0]) * r + T::c(M[0][1]) * g + T::c(M[0][2]) * b;
    let y = T::c(M[1][0]) * r + T::c(M[1][1]) * g + T::c(M[1][2]) * b;
    let z = T::c(M[2][0]) * r + T::c(M[2][1]) * g + T::c(M[2][2]) * b;

    let fx = lab_f(x / T::c(WHITE_X));
    let fy = lab_f(y / T::c(WHITE_Y));
    let fz = lab_f(z / T::c(WHITE_Z));

    LabColor {
        l: T::c(116.0) * fy - T::c(16.0),
        a: T::c(500.0) * (fx - fy),
        b: T::c(200.0) * (fy - fz),
    }
}

fn lab_f<T: Real>(t: T) -> T {
    if t > T::c(LAB_EPSILON) {
        t.powf(T::c(1.0) / T::c(3.0))
    } else {
        (T::c(LAB_KAPPA) * t + T::c(16.0)) / T::c(116.0)
    }
}

/// Individual typology angle of a Lab colour:
/// `atan((L - 50) / b) * 180 / pi`.
///
/// The `b = 0` singularity resolves to the two-argument arctangent limit:
/// `+90` for `L > 50`, `-90` for `L < 50`, and `0` at `L = 50`.
pub fn ita<T: Real>(lab: LabColor<T>) -> ItaDegrees<T> {
    let num = lab.l - T::c(50.0);
    let deg = if lab.b == T::zero() {
        if num > T::zero() {
            T::c(90.0)
        } else if num < T::zero() {
            T::c(-90.0)
        } else {
            T::zero()
        }
    } else {
        (num / lab.b).atan().to_degrees()
    };
    ItaDegrees::new(deg)
}

/// Maps an ITA onto the Fitzpatrick scale through six half-open intervals:
/// type 1 above 55°, then (41, 55], (28, 41], (19, 28], (10, 19], and
/// type 6 at or below 10°. Boundary angles belong to the darker type.
pub fn fitzpatrick_from_ita<T: Real>(ita: ItaDegrees<T>) -> Fitzpatrick {
    let v = ita.degrees();
    if v > T::c(55.0) {
        Fitzpatrick::I
    } else if v > T::c(41.0) {
        Fitzpatrick::II
    } else if v > T::c(28.0) {
        Fitzpatrick::III
    } else if v > T::c(19.0) {
        Fitzpatrick::IV
    } else if v > T::c(10.0) {
        Fitzpatrick::V
    } else {
        Fitzpatrick::VI
    }
}

/// ITA and Fitzpatrick type of one sRGB pixel; convenience composition.
pub fn pixel_tone<T: Real>(pixel: Rgb8) -> (ItaDegrees<T>, Fitzpatrick) {
    let angle = ita(rgb_to_lab::<T>(pixel));
    (angle, fitzpatrick_from_ita(angle))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lab64(pixel: Rgb8) -> LabColor<f64> {
        rgb_to_lab(pixel)
    }

    #[test]
    fn srgb_endpoints() {
        assert_eq!(srgb_to_linear::<f64>(0), 0.0);
        assert!((srgb_to_linear::<f64>(255) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn srgb_midpoint_matches_reference_decode() {
        // Frozen from an independently written reference decoder.
        let expected = 0.215_860_500_113_899_26_f64;
        assert!((srgb_to_linear::<f64>(128) - expected).abs() < 1e-12);
    }

    #[test]
    fn srgb_is_monotone() {
        let mut prev = -1.0f64;
        for c in 0..=255u8 {
            let lin = srgb_to_linear::<f64>(c);
            assert!(lin > prev, "not monotone at channel {c}");
            prev = lin;
        }
    }

    #[test]
    fn white_and_black_are_exact() {
        let white = lab64(Rgb8::new(255, 255, 255));
        assert!((white.l - 100.0).abs() < 1e-6);
        assert!(white.a.abs() < 1e-6);
        assert!(white.b.abs() < 1e-6);

        let black = lab64(Rgb8::new(0, 0, 0));
        assert_eq!(black.l, 0.0);
        assert_eq!(black.a, 0.0);
        assert_eq!(black.b, 0.0);
    }

    #[test]
    fn rosy_brown_matches_reference_converter() {
        // Frozen from an independently written reference CIELAB converter.
        let lab = lab64(Rgb8::new(188, 143, 143));
        assert!((lab.l - 63.607_403_171_443).abs() < 1e-6);
        assert!((lab.a - 17.012_685_929_039).abs() < 1e-6);
        assert!((lab.b - 6.609_686_564_643).abs() < 1e-6);
    }

    #[test]
    fn greys_are_neutral() {
        for v in 0..=255u8 {
            let lab = lab64(Rgb8::grey(v));
            assert!(lab.a.abs() < 1e-6, "a residue {} at grey {v}", lab.a);
            assert!(lab.b.abs() < 1e-6, "b residue {} at grey {v}", lab.b);
        }
    }

    #[test]
    fn grey_lightness_is_monotone() {
        let mut prev = -1.0f64;
        for v in 0..=255u8 {
            let lab = lab64(Rgb8::grey(v));
            assert!(lab.l >= prev, "L not monotone at grey {v}");
            prev = lab.l;
        }
    }

    #[test]
    fn ita_basic_angles() {
        let angle = |l, b| ita(LabColor { l, a: 0.0f64, b }).degrees();
        assert!((angle(70.0, 20.0) - 45.0).abs() < 1e-12);
        assert_eq!(angle(50.0, 10.0), 0.0);
        assert_eq!(angle(100.0, 0.0), 90.0);
        assert_eq!(angle(20.0, 0.0), -90.0);
        assert_eq!(angle(50.0, 0.0), 0.0);
    }

    #[test]
    fn fitzpatrick_thresholds_and_boundaries() {
        let f = |deg: f64| fitzpatrick_from_ita(ItaDegrees::new(deg));
        assert_eq!(f(60.0), Fitzpatrick::I);
        assert_eq!(f(55.0), Fitzpatrick::II);
        assert_eq!(f(41.0), Fitzpatrick::III);
        assert_eq!(f(28.0), Fitzpatrick::IV);
        assert_eq!(f(19.0), Fitzpatrick::V);
        assert_eq!(f(10.0), Fitzpatrick::VI);
        assert_eq!(f(-90.0), Fitzpatrick::VI);
    }

    #[test]
    fn fitzpatrick_is_monotone_and_total_on_grid() {
        // 0.05° grid over the whole ITA range: every angle maps somewhere
        // and the type index never decreases as the angle drops.
        let mut prev = Fitzpatrick::I;
        let mut deg = 90.0f64;
        while deg >= -90.0 {
            let t = fitzpatrick_from_ita(ItaDegrees::new(deg));
            assert!(t >= prev, "type decreased at {deg}");
            prev = t;
            deg -= 0.05;
        }
        assert_eq!(prev, Fitzpatrick::VI);
    }

    #[test]
    fn fitzpatrick_rejects_out_of_range() {
        assert_eq!(Fitzpatrick::try_from(0), Err(InvalidFitzpatrick(0)));
        assert_eq!(Fitzpatrick::try_from(7), Err(InvalidFitzpatrick(7)));
        assert_eq!(Fitzpatrick::try_from(3), Ok(Fitzpatrick::III));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            // ita(L = 50 + d) = -ita(L = 50 - d) for any positive b.
            #[test]
            fn ita_antisymmetric_about_l50(d in 0.0f64..50.0, b in 0.01f64..120.0) {
                let plus = ita(LabColor { l: 50.0 + d, a: 0.0, b }).degrees();
                let minus = ita(LabColor { l: 50.0 - d, a: 0.0, b }).degrees();
                prop_assert!((plus + minus).abs() < 1e-9);
            }

            #[test]
            fn ita_always_in_range(l in 0.0f64..100.0, b in -120.0f64..120.0) {
                let angle = ita(LabColor { l, a: 0.0, b }).degrees();
                prop_assert!((-90.0..=90.0).contains(&angle));
            }
        }
    }
}
