//! Interface math of the corner detection model.
//!
//! The network itself lives outside this crate. What is here is everything
//! on either side of it that can be checked exactly: Gaussian target
//! heatmaps, DSNT coordinate decoding, the localization and classification
//! losses with their uncertainty-weighted combination, and ingestion of
//! prediction files written by an external model.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use image::{ImageBuffer as RawImage, Luma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{mean_corner_distance, Point2, Quad};

/// Non-negative activation map for one corner, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl Heatmap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {width}x{height} heatmap",
                values.len()
            )));
        }
        if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParameter("heatmap values must be finite and >= 0".into()));
        }
        Ok(Self { width, height, values })
    }

    /// A heatmap that is zero except for one pixel.
    pub fn one_hot(width: usize, height: usize, x: usize, y: usize) -> Self {
        let mut values = vec![0.0; width * height];
        values[y * width + x] = 1.0;
        Self { width, height, values }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.width, self.height, self.values.iter().map(|v| v * factor).collect())
    }

    /// Writes a 16-bit grayscale PNG with `round(65535 v / max)`.
    pub fn save_png16(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let max = self.values.iter().copied().fold(0.0, f64::max);
        let scale = if max > 0.0 { 65535.0 / max } else { 0.0 };
        let raw: Vec<u16> = self.values.iter().map(|v| (v * scale).round() as u16).collect();
        let img: RawImage<Luma<u16>, Vec<u16>> =
            RawImage::from_raw(self.width as u32, self.height as u32, raw).expect("buffer size");
        crate::raster::save_png(&image::DynamicImage::ImageLuma16(img), path)
    }

    /// Reads any grayscale PNG; 16-bit values are scaled by `1 / 65535`.
    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = image::open(path).map_err(|e| Error::image(path, e))?.to_luma16();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let values = img.into_raw().into_iter().map(|v| f64::from(v) / 65535.0).collect();
        Ok(Self { width: w, height: h, values })
    }
}

/// Coordinates in `[-1, 1]`; pixel index `j` of `W` sits at `(2j + 1 - W) / W`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedCoord {
    pub x: f64,
    pub y: f64,
}

#[inline]
fn grid(j: usize, n: usize) -> f64 {
    (2.0 * j as f64 + 1.0 - n as f64) / n as f64
}

/// One Gaussian target per corner (TL, TR, BR, BL), scaled so the pixel
/// center nearest to the corner has value 1.
pub fn render_target_heatmaps(quad: &Quad, width: usize, height: usize, sigma_px: f64) -> Result<[Heatmap; 4]> {
    if !(sigma_px > 0.0) {
        return Err(Error::InvalidParameter(format!("sigma_px must be positive, got {sigma_px}")));
    }
    for (index, p) in quad.corners.iter().enumerate() {
        if !(p.x >= 0.0 && p.x < width as f64 && p.y >= 0.0 && p.y < height as f64) {
            return Err(Error::CornerOutOfBounds { index, x: p.x, y: p.y, width, height });
        }
    }
    let inv = 1.0 / (2.0 * sigma_px * sigma_px);
    Ok(quad.corners.map(|p| {
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let d2 = (x as f64 - p.x).powi(2) + (y as f64 - p.y).powi(2);
                values.push((-d2 * inv).exp());
            }
        }
        let peak = values.iter().copied().fold(0.0, f64::max);
        if peak > 0.0 {
            values.iter_mut().for_each(|v| *v /= peak);
        }
        Heatmap { width, height, values }
    }))
}

/// Expected coordinate under the sum-normalized heatmap.
pub fn dsnt_decode(hm: &Heatmap) -> Result<NormalizedCoord> {
    let total: f64 = hm.values.iter().sum();
    if !(total > 1e-12) {
        return Err(Error::EmptyHeatmap);
    }
    let (mut x, mut y) = (0.0, 0.0);
    for (i, row) in hm.values.chunks_exact(hm.width).enumerate() {
        let gy = grid(i, hm.height);
        for (j, &v) in row.iter().enumerate() {
            let z = v / total;
            x += z * grid(j, hm.width);
            y += z * gy;
        }
    }
    Ok(NormalizedCoord { x, y })
}

/// Inverse of the grid convention: `j = (x W - 1 + W) / 2`.
pub fn denormalize(c: NormalizedCoord, width: usize, height: usize) -> Point2 {
    let (w, h) = (width as f64, height as f64);
    Point2::new((c.x * w - 1.0 + w) / 2.0, (c.y * h - 1.0 + h) / 2.0)
}

/// Decodes the four corner channels into a pixel-frame quad.
pub fn decode_corners(heatmaps: &[Heatmap; 4]) -> Result<Quad> {
    let mut corners = [Point2::default(); 4];
    for (c, hm) in corners.iter_mut().zip(heatmaps) {
        *c = denormalize(dsnt_decode(hm)?, hm.width, hm.height);
    }
    Ok(Quad::new(corners))
}

/// Mean Euclidean distance over the four order-matched corners.
pub fn localization_loss(pred: &Quad, reference: &Quad) -> f64 {
    mean_corner_distance(pred, reference)
}

pub const PROB_EPS: f64 = 1e-7;

/// Binary cross entropy with the probability clamped to `[eps, 1 - eps]`.
pub fn classification_loss(screen_prob: f64, label: bool) -> f64 {
    let p = screen_prob.clamp(PROB_EPS, 1.0 - PROB_EPS);
    if label {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Learnable task uncertainties for the two losses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaParams {
    pub sigma_s: f64,
    pub sigma_c: f64,
}

impl SigmaParams {
    pub fn new(sigma_s: f64, sigma_c: f64) -> Result<Self> {
        let s = Self { sigma_s, sigma_c };
        s.check()?;
        Ok(s)
    }

    fn check(&self) -> Result<()> {
        if self.sigma_s > 0.0 && self.sigma_c > 0.0 && self.sigma_s.is_finite() && self.sigma_c.is_finite() {
            Ok(())
        } else {
            Err(Error::NonPositiveSigma { sigma_s: self.sigma_s, sigma_c: self.sigma_c })
        }
    }
}

/// `L = L_s / sigma_s^2 + L_c / sigma_c^2 + ln(sigma_s + 1) + ln(sigma_c + 1)`.
pub fn multitask_loss(loc_loss: f64, cls_loss: f64, sig: SigmaParams) -> Result<f64> {
    sig.check()?;
    Ok(loc_loss / (sig.sigma_s * sig.sigma_s)
        + cls_loss / (sig.sigma_c * sig.sigma_c)
        + sig.sigma_s.ln_1p()
        + sig.sigma_c.ln_1p())
}

/// Partial derivatives of [`multitask_loss`] with respect to both sigmas.
pub fn multitask_loss_grad_sigma(loc_loss: f64, cls_loss: f64, sig: SigmaParams) -> Result<(f64, f64)> {
    sig.check()?;
    let d = |l: f64, s: f64| -2.0 * l / (s * s * s) + 1.0 / (s + 1.0);
    Ok((d(loc_loss, sig.sigma_s), d(cls_loss, sig.sigma_c)))
}

/// Where a prediction's corners came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CornerSource {
    #[default]
    None,
    Explicit,
    Heatmaps,
}

/// One line of a predictions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub screen_prob: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corners: Option<Quad>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heatmaps: Option<Vec<PathBuf>>,
    #[serde(skip)]
    pub corner_source: CornerSource,
}

/// Ground-truth fields that must never appear in a predictions file.
const LABEL_FIELDS: [&str; 3] = ["screen_present", "label", "true_class"];

/// Reads and validates a predictions JSONL file.
///
/// Relative heatmap paths resolve against the file's directory. When a
/// record has heatmaps but no corners, the corners are decoded with DSNT
/// in the heatmaps' own pixel frame.
pub fn ingest_predictions(path: impl AsRef<Path>) -> Result<Vec<PredictionRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse { path: path.to_path_buf(), line: line_no, message };
        let violation = |field: &str, message: String| Error::InvariantViolation {
            path: path.to_path_buf(),
            line: line_no,
            field: field.to_string(),
            message,
        };
        let value: serde_json::Value = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        if let Some(key) = LABEL_FIELDS.iter().find(|k| value.get(**k).is_some()) {
            return Err(violation(key, "predictions must not carry ground truth".into()));
        }
        let mut rec: PredictionRecord = serde_json::from_value(value).map_err(|e| parse_err(e.to_string()))?;

        if !(0.0..=1.0).contains(&rec.screen_prob) {
            return Err(violation("screen_prob", format!("{} outside [0, 1]", rec.screen_prob)));
        }
        if let Some(q) = &rec.corners {
            if q.corners.iter().any(|p| !p.is_finite()) {
                return Err(violation("corners", "non-finite coordinate".into()));
            }
            rec.corner_source = CornerSource::Explicit;
        }
        if let Some(paths) = &mut rec.heatmaps {
            if paths.len() != 4 {
                return Err(violation("heatmaps", format!("expected 4 paths, got {}", paths.len())));
            }
            for p in paths.iter_mut() {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
            if rec.corners.is_none() {
                let mut maps = Vec::with_capacity(4);
                for (k, p) in paths.iter().enumerate() {
                    let hm = Heatmap::load_png(p)?;
                    if hm.values.iter().sum::<f64>() <= 1e-12 {
                        return Err(violation(&format!("heatmaps[{k}]"), "heatmap is empty".into()));
                    }
                    maps.push(hm);
                }
                let maps: [Heatmap; 4] = maps.try_into().expect("four heatmaps");
                rec.corners = Some(decode_corners(&maps)?);
                rec.corner_source = CornerSource::Heatmaps;
            }
        }
        out.push(rec);
    }
    Ok(out)
}
