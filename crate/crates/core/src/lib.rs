//! Skin tone estimation and bias unlearning at desk scale.
//!
//! The crate has two halves that meet in the middle:
//!
//! * **Labelling** — [`color`] converts sRGB pixels to CIELAB and maps the
//!   individual typology angle (ITA) onto the six-point Fitzpatrick scale;
//!   [`imageproc`] masks hair with black-hat morphology, samples patches
//!   around the image border and picks the lightest one as the healthy-skin
//!   estimate; [`annotate`] runs that estimator over a CSV manifest of
//!   images and scores the labels against human annotations.
//! * **Unlearning** — [`unlearn`] trains a small shared-extractor network
//!   with a primary head and an adversarial bias head (gradient reversal,
//!   confusion loss, entropy regularisation), all with hand-derived
//!   gradients; [`evalbias`] generates synthetic datasets with a
//!   controllable class/bias correlation and measures what a trained
//!   representation still leaks about the bias (per-group AUC, linear
//!   probes).
//!
//! Numeric code is generic over the scalar type via [`scalar::Real`]
//! (`f32` or `f64`); the aliases below fix the default used by the CLI and
//! the I/O layers.

pub mod annotate;
pub mod color;
pub mod evalbias;
pub mod imageproc;
pub mod scalar;
pub mod unlearn;

/// Default scalar for I/O-facing code paths. ITA thresholds sit one degree
/// apart, so the reference pipeline runs in double precision.
pub type Scalar = f64;

/// CIELAB colour at the default precision.
pub type Lab = color::LabColor<Scalar>;
/// Individual typology angle at the default precision.
pub type Ita = color::ItaDegrees<Scalar>;
/// Per-image skin tone estimate at the default precision.
pub type SkinTone = imageproc::SkinToneEstimate<Scalar>;
/// Extractor + two-head network at the default precision.
pub type Model = unlearn::Model<Scalar>;
/// Synthetic labelled example at the default precision.
pub type Example = evalbias::LabelledExample<Scalar>;
