//! Reflection synthesis by screen blending, and perspective insertion of a
//! screen image into a scene.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{Homography, Point2, Quad};
use crate::raster::ImageBuffer;

/// Reflection strength. `alpha = 1` leaves the screen untouched,
/// `alpha = 0` shows the full screen-blend result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlendParams {
    alpha: f64,
}

impl BlendParams {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidParameter(format!("alpha {alpha} outside [0, 1]")));
        }
        Ok(Self { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

/// `B = Y (1 - alpha) + S alpha` with the screen blend `Y = 1 - (1 - S)(1 - R)`.
///
/// Evaluated as `B = S + (1 - alpha) R (1 - S)`, which is the same
/// polynomial but keeps `alpha = 1`, `R = 0` and `S = 1` exact.
#[inline]
pub fn blend_value(s: f64, r: f64, alpha: f64) -> f64 {
    (s + (1.0 - alpha) * (r * (1.0 - s))).clamp(0.0, 1.0)
}

pub fn screen_blend(screen: &ImageBuffer, reflection: &ImageBuffer, params: BlendParams) -> Result<ImageBuffer> {
    if screen.dims() != reflection.dims() {
        return Err(Error::ShapeMismatch(format!(
            "screen {:?} vs reflection {:?}",
            screen.dims(),
            reflection.dims()
        )));
    }
    let (w, h, c) = screen.dims();
    let data = screen
        .data()
        .iter()
        .zip(reflection.data())
        .map(|(&s, &r)| blend_value(s, r, params.alpha))
        .collect();
    ImageBuffer::from_vec(w, h, c, data)
}

pub const MIN_REFLECTION_SOURCE: usize = 8;

/// Random crop of `bg` used as a reflection layer.
///
/// When the background covers the target the crop is taken at native
/// scale; otherwise the largest crop with the target's aspect ratio is
/// taken and rescaled bilinearly.
pub fn crop_reflection(bg: &ImageBuffer, target_w: usize, target_h: usize, seed: u64) -> Result<ImageBuffer> {
    let (bw, bh) = (bg.width(), bg.height());
    if bw < MIN_REFLECTION_SOURCE || bh < MIN_REFLECTION_SOURCE {
        return Err(Error::ImageTooSmall { width: bw, height: bh, min: MIN_REFLECTION_SOURCE });
    }
    if target_w == 0 || target_h == 0 {
        return Err(Error::InvalidParameter("empty reflection target".to_string()));
    }
    let (cw, ch) = if bw >= target_w && bh >= target_h {
        (target_w, target_h)
    } else {
        let aspect = target_w as f64 / target_h as f64;
        if bw as f64 / bh as f64 > aspect {
            (((bh as f64 * aspect).floor() as usize).clamp(1, bw), bh)
        } else {
            (bw, ((bw as f64 / aspect).floor() as usize).clamp(1, bh))
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x0 = rng.random_range(0..=bw - cw);
    let y0 = rng.random_range(0..=bh - ch);
    bg.crop_resize(x0, y0, cw, ch, target_w, target_h)
}

/// Warps `screen` into `bg` inside `quad`.
///
/// Every background pixel whose center lies in the (closed) quad is
/// replaced by a bilinear sample of the screen; everything else is copied
/// through untouched. The returned mask is 1 on replaced pixels.
pub fn insert_screen(bg: &ImageBuffer, screen: &ImageBuffer, quad: &Quad) -> Result<(ImageBuffer, ImageBuffer)> {
    if bg.channels() != screen.channels() {
        return Err(Error::ShapeMismatch(format!(
            "background has {} channels, screen has {}",
            bg.channels(),
            screen.channels()
        )));
    }
    let (w, h) = (bg.width(), bg.height());
    quad.validate()?;
    if !quad.within(0.0, 0.0, w as f64 - 1.0, h as f64 - 1.0) {
        return Err(Error::QuadOutOfBounds { width: w, height: h });
    }
    let to_screen = Homography::from_points(quad, &Quad::canonical(screen.width(), screen.height()))?;

    let mut out = bg.clone();
    let mut mask = ImageBuffer::new(w, h, 1);
    let xs = quad.corners.map(|p| p.x);
    let ys = quad.corners.map(|p| p.y);
    let x_lo = xs.iter().copied().fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
    let x_hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max).ceil() as usize;
    let y_lo = ys.iter().copied().fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
    let y_hi = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max).ceil() as usize;

    let mut px = [0.0; 3];
    for y in y_lo..=y_hi.min(h - 1) {
        for x in x_lo..=x_hi.min(w - 1) {
            let p = Point2::new(x as f64, y as f64);
            if !quad.contains(p) {
                continue;
            }
            let s = to_screen.apply(p)?;
            // Inside the quad the mapped point is inside the screen up to
            // rounding, so the edge clamp never substitutes real content.
            let sx = s.x.clamp(0.0, screen.width() as f64 - 1.0);
            let sy = s.y.clamp(0.0, screen.height() as f64 - 1.0);
            screen.sample_bilinear(sx, sy, &mut px);
            for c in 0..bg.channels() {
                out.set(x, y, c, px[c]);
            }
            mask.set(x, y, 0, 1.0);
        }
    }
    Ok((out, mask))
}
