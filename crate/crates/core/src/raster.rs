//! Floating-point raster used as the working image representation.

use std::path::Path;

use image::{DynamicImage, GrayImage, RgbImage};

use crate::error::{Error, Result};

/// Row-major interleaved image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self::filled(width, height, channels, 0.0)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        assert!(channels == 1 || channels == 3, "channels must be 1 or 3");
        Self { width, height, channels, data: vec![value.clamp(0.0, 1.0); width * height * channels] }
    }

    /// Wraps raw data, clamping every value into `[0, 1]`.
    pub fn from_vec(width: usize, height: usize, channels: usize, mut data: Vec<f64>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::ShapeMismatch(format!("unsupported channel count {channels}")));
        }
        if data.len() != width * height * channels {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {width}x{height}x{channels} image",
                data.len()
            )));
        }
        for v in &mut data {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
        Ok(Self { width, height, channels, data })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut img = Self::new(width, height, channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    img.set(x, y, c, f(x, y, c));
                }
            }
        }
        img
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.width, self.height, self.channels)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    fn index(&self, x: usize, y: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[self.index(x, y, c)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        let i = self.index(x, y, c);
        self.data[i] = v.clamp(0.0, 1.0);
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let i = self.index(x, y, 0);
        &self.data[i..i + self.channels]
    }

    /// Bilinear sample at a continuous position (integer = pixel center),
    /// clamping to the edge. `None` when the point falls outside the
    /// pixel footprint `[-0.5, w - 0.5] x [-0.5, h - 0.5]`.
    pub fn sample_bilinear(&self, x: f64, y: f64, out: &mut [f64]) -> bool {
        let (w, h) = (self.width as f64, self.height as f64);
        if !(x >= -0.5 && x <= w - 0.5 && y >= -0.5 && y <= h - 0.5) {
            return false;
        }
        let x = x.clamp(0.0, w - 1.0);
        let y = y.clamp(0.0, h - 1.0);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        for (c, o) in out.iter_mut().enumerate().take(self.channels) {
            let top = self.get(x0, y0, c) * (1.0 - fx) + self.get(x1, y0, c) * fx;
            let bottom = self.get(x0, y1, c) * (1.0 - fx) + self.get(x1, y1, c) * fx;
            *o = top * (1.0 - fy) + bottom * fy;
        }
        true
    }

    /// Center-aligned bilinear resize of the sub-rectangle
    /// `[x0, x0 + w) x [y0, y0 + h)` to `out_w x out_h`.
    pub fn crop_resize(
        &self,
        x0: usize,
        y0: usize,
        w: usize,
        h: usize,
        out_w: usize,
        out_h: usize,
    ) -> Result<Self> {
        if w == 0 || h == 0 || x0 + w > self.width || y0 + h > self.height {
            return Err(Error::ShapeMismatch(format!(
                "crop {w}x{h}+{x0}+{y0} outside {}x{} image",
                self.width, self.height
            )));
        }
        let mut out = Self::new(out_w, out_h, self.channels);
        let sx = w as f64 / out_w as f64;
        let sy = h as f64 / out_h as f64;
        let mut px = [0.0; 3];
        for y in 0..out_h {
            let src_y = y0 as f64 + ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, h as f64 - 1.0);
            for x in 0..out_w {
                let src_x = x0 as f64 + ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, w as f64 - 1.0);
                self.sample_bilinear(src_x, src_y, &mut px);
                for c in 0..self.channels {
                    out.set(x, y, c, px[c]);
                }
            }
        }
        Ok(out)
    }

    pub fn resize(&self, out_w: usize, out_h: usize) -> Result<Self> {
        if (out_w, out_h) == (self.width, self.height) {
            return Ok(self.clone());
        }
        self.crop_resize(0, 0, self.width, self.height, out_w, out_h)
    }

    pub fn to_rgb(&self) -> Self {
        if self.channels == 3 {
            return self.clone();
        }
        let data = self.data.iter().flat_map(|&v| [v, v, v]).collect();
        Self { width: self.width, height: self.height, channels: 3, data }
    }

    /// Luma with weights 0.299 / 0.587 / 0.114.
    pub fn to_gray(&self) -> Self {
        if self.channels == 1 {
            return self.clone();
        }
        let data = self
            .data
            .chunks_exact(3)
            .map(|p| (0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]).clamp(0.0, 1.0))
            .collect();
        Self { width: self.width, height: self.height, channels: 1, data }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        let data = self.data.iter().map(|&v| f(v).clamp(0.0, 1.0)).collect();
        Self { data, ..*self }
    }

    pub fn from_gray8(img: &GrayImage) -> Self {
        let data = img.as_raw().iter().map(|&v| f64::from(v) / 255.0).collect();
        Self { width: img.width() as usize, height: img.height() as usize, channels: 1, data }
    }

    pub fn from_rgb8(img: &RgbImage) -> Self {
        let data = img.as_raw().iter().map(|&v| f64::from(v) / 255.0).collect();
        Self { width: img.width() as usize, height: img.height() as usize, channels: 3, data }
    }

    /// Grayscale sources stay single-channel; everything else becomes RGB.
    pub fn from_dynamic(img: &DynamicImage) -> Self {
        match img {
            DynamicImage::ImageLuma8(g) => Self::from_gray8(g),
            DynamicImage::ImageLuma16(_) | DynamicImage::ImageLumaA8(_) | DynamicImage::ImageLumaA16(_) => {
                Self::from_gray8(&img.to_luma8())
            }
            _ => Self::from_rgb8(&img.to_rgb8()),
        }
    }

    /// Quantizes with `round(255 v)`.
    pub fn to_dynamic(&self) -> DynamicImage {
        let bytes: Vec<u8> = self.data.iter().map(|&v| to_u8(v)).collect();
        let (w, h) = (self.width as u32, self.height as u32);
        match self.channels {
            1 => DynamicImage::ImageLuma8(GrayImage::from_raw(w, h, bytes).expect("buffer size")),
            _ => DynamicImage::ImageRgb8(RgbImage::from_raw(w, h, bytes).expect("buffer size")),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = image::open(path).map_err(|e| Error::image(path, e))?;
        Ok(Self::from_dynamic(&img))
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        save_png(&self.to_dynamic(), path.as_ref())
    }
}

#[inline]
pub fn to_u8(v: f64) -> u8 {
    (255.0 * v.clamp(0.0, 1.0)).round() as u8
}

pub(crate) fn save_png(img: &DynamicImage, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    img.save_with_format(path, image::ImageFormat::Png).map_err(|e| Error::image(path, e))
}
