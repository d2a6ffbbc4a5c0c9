//! Screen extraction onto a canonical grid and intensity normalization.

use image::GrayImage;

use crate::error::{Error, Result};
use crate::geometry::{Homography, Point2, Quad};
use crate::raster::{to_u8, ImageBuffer};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RectifyConfig {
    pub target_w: usize,
    pub target_h: usize,
    /// Intensity for target pixels whose source falls outside the photo.
    pub fill: f64,
}

impl Default for RectifyConfig {
    fn default() -> Self {
        Self { target_w: 640, target_h: 480, fill: 0.0 }
    }
}

pub const MIN_TARGET_DIM: usize = 16;

impl RectifyConfig {
    pub fn new(target_w: usize, target_h: usize) -> Result<Self> {
        let cfg = Self { target_w, target_h, ..Self::default() };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.target_w < MIN_TARGET_DIM || self.target_h < MIN_TARGET_DIM {
            return Err(Error::InvalidParameter(format!(
                "target {}x{} smaller than {MIN_TARGET_DIM}x{MIN_TARGET_DIM}",
                self.target_w, self.target_h
            )));
        }
        if !(0.0..=1.0).contains(&self.fill) {
            return Err(Error::InvalidParameter(format!("fill {} outside [0, 1]", self.fill)));
        }
        Ok(())
    }
}

/// Warps the photo region inside `quad` onto a `target_w x target_h` grid.
///
/// Target corner pixels map exactly onto the quad corners.
pub fn rectify(photo: &ImageBuffer, quad: &Quad, cfg: &RectifyConfig) -> Result<ImageBuffer> {
    cfg.validate()?;
    if photo.is_empty() {
        return Err(Error::InvalidParameter("empty photo".to_string()));
    }
    let (tw, th) = (cfg.target_w, cfg.target_h);
    let to_photo = Homography::from_points(&Quad::canonical(tw, th), quad)?;
    let channels = photo.channels();
    let mut out = ImageBuffer::new(tw, th, channels);
    let mut px = [0.0; 3];
    for y in 0..th {
        for x in 0..tw {
            let inside = match to_photo.apply(Point2::new(x as f64, y as f64)) {
                Ok(p) => photo.sample_bilinear(p.x, p.y, &mut px),
                Err(_) => false,
            };
            for c in 0..channels {
                out.set(x, y, c, if inside { px[c] } else { cfg.fill });
            }
        }
    }
    Ok(out)
}

/// Grayscale, 256-level quantization, background-to-black and contrast
/// stretch.
///
/// The background level is the most frequent quantized intensity (lowest
/// on ties). Levels at or below it become 0 and the image maximum becomes
/// 255; a uniform image maps to all zeros.
pub fn normalize(img: &ImageBuffer) -> GrayImage {
    let gray = img.to_gray();
    let levels: Vec<u8> = gray.data().iter().map(|&v| to_u8(v)).collect();
    let out = normalize_levels(&levels);
    GrayImage::from_raw(gray.width() as u32, gray.height() as u32, out).expect("buffer size")
}

fn normalize_levels(levels: &[u8]) -> Vec<u8> {
    let mut hist = [0usize; 256];
    for &v in levels {
        hist[v as usize] += 1;
    }
    // max_by_key keeps the last maximum; scan from the top so ties resolve low.
    let background = (0..256usize).rev().max_by_key(|&v| hist[v]).unwrap_or(0) as u8;
    let top = levels.iter().copied().max().unwrap_or(0);
    if top <= background {
        return vec![0; levels.len()];
    }
    let span = f64::from(top - background);
    levels
        .iter()
        .map(|&v| {
            if v > background {
                (255.0 * f64::from(v - background) / span).round() as u8
            } else {
                0
            }
        })
        .collect()
}
