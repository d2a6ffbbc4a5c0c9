//! Capture of ultrasound images from photographs of the scanner screen.
//!
//! The crate covers the full pipeline around a screen-corner detector:
//!
//! 1. **Synthesis** ([`compositing`], [`datagen`]) – blend reflections into
//!    echo frames, warp them into indoor scenes at random perspective and
//!    emit exact corner annotations, with matched screen-free negatives.
//! 2. **Model interface** ([`corner_model`]) – Gaussian target heatmaps,
//!    DSNT decoding, the detection losses and prediction-file ingestion.
//! 3. **Rectification** ([`geometry`], [`rectify`]) – homography from the
//!    detected corners to a canonical grid and intensity normalization.
//! 4. **Evaluation** ([`metrics`]) – corner error, detection rates,
//!    MSE / SSIM, uncertainty rejection and subsampled confidence
//!    intervals.
//!
//! The `echoscreen` binary wraps these as `synth`, `rectify` and `eval`
//! subcommands (see [`cli`]); the `examples/` directory shows each stage
//! used directly from Rust.

pub mod cli;
pub mod compositing;
pub mod corner_model;
pub mod datagen;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod phantom;
pub mod raster;
pub mod rectify;
pub mod seeds;

pub use error::{Error, Result};
pub use geometry::{Homography, Point2, Quad};
pub use raster::ImageBuffer;
