//! Procedural stand-ins for echo frames and indoor scenes.
//!
//! Real echo studies and scene photographs are not redistributable, so the
//! examples, tests and benchmarks run on these seeded images instead. Any
//! image files can replace them through the index files used by `datagen`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::raster::ImageBuffer;

/// Independent uniform noise in `[0, 1]`.
pub fn noise_image(seed: u64, width: usize, height: usize, channels: usize) -> ImageBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ImageBuffer::from_fn(width, height, channels, |_, _, _| rng.random::<f64>())
}

/// Smooth value noise: random lattice values every `cell` pixels,
/// interpolated with a smoothstep.
struct ValueNoise {
    cols: usize,
    cell: f64,
    lattice: Vec<f64>,
}

impl ValueNoise {
    fn new(rng: &mut ChaCha8Rng, width: usize, height: usize, cell: f64) -> Self {
        let cols = (width as f64 / cell).ceil() as usize + 2;
        let rows = (height as f64 / cell).ceil() as usize + 2;
        let lattice = (0..cols * rows).map(|_| rng.random::<f64>()).collect();
        Self { cols, cell, lattice }
    }

    fn at(&self, x: f64, y: f64) -> f64 {
        let gx = x / self.cell;
        let gy = y / self.cell;
        let (ix, iy) = (gx.floor() as usize, gy.floor() as usize);
        let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
        let (fx, fy) = (smooth(gx - ix as f64), smooth(gy - iy as f64));
        let v = |i: usize, j: usize| self.lattice[j * self.cols + i];
        let top = v(ix, iy) * (1.0 - fx) + v(ix + 1, iy) * fx;
        let bottom = v(ix, iy + 1) * (1.0 - fx) + v(ix + 1, iy + 1) * fx;
        top * (1.0 - fy) + bottom * fy
    }
}

struct Ellipse {
    cx: f64,
    cy: f64,
    rx: f64,
    ry: f64,
    level: f64,
}

impl Ellipse {
    fn weight(&self, x: f64, y: f64) -> f64 {
        let d = ((x - self.cx) / self.rx).powi(2) + ((y - self.cy) / self.ry).powi(2);
        (1.0 - d).clamp(0.0, 1.0).sqrt()
    }
}

/// A grayscale frame shaped like a cardiac ultrasound acquisition: a
/// speckled sector fan on black, with dark chambers, bright walls and a
/// small block of overlay text.
pub fn echo_frame(seed: u64, width: usize, height: usize) -> ImageBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (width as f64, height as f64);
    let apex = (w / 2.0 + rng.random_range(-0.03..0.03) * w, 0.06 * h);
    let radius = rng.random_range(0.82..0.92) * h;
    let half_angle = rng.random_range(0.62..0.78_f64);
    let speckle_cell = rng.random_range(9.0..14.0);
    let speckle = ValueNoise::new(&mut rng, width, height, speckle_cell);
    let texture = ValueNoise::new(&mut rng, width, height, 40.0);

    let depth = |f: f64| apex.1 + f * radius;
    let chambers: Vec<Ellipse> = (0..rng.random_range(2..=4))
        .map(|_| Ellipse {
            cx: apex.0 + rng.random_range(-0.22..0.22) * w,
            cy: depth(rng.random_range(0.35..0.8)),
            rx: rng.random_range(0.06..0.13) * w,
            ry: rng.random_range(0.08..0.16) * h,
            level: 0.0,
        })
        .collect();
    let walls: Vec<Ellipse> = chambers
        .iter()
        .map(|c| Ellipse { rx: c.rx * 1.35, ry: c.ry * 1.3, level: rng.random_range(0.7..0.95), ..*c })
        .collect();
    let text_rows = rng.random_range(2..=4);

    ImageBuffer::from_fn(width, height, 1, |x, y, _| {
        let (xf, yf) = (x as f64, y as f64);
        if x < width / 5 && y < height / 10 {
            // Overlay text block: short bright bars on black.
            let row = y * text_rows * 2 / (height / 10).max(1);
            let col = x / 6;
            let lit = row % 2 == 0 && (col * 7 + row * 3 + seed as usize) % 5 != 0;
            return if lit { 0.85 } else { 0.0 };
        }
        let (dx, dy) = (xf - apex.0, yf - apex.1);
        let r = dx.hypot(dy);
        let theta = dx.atan2(dy);
        if dy <= 0.0 || r > radius || theta.abs() > half_angle {
            return 0.0;
        }
        let attenuation = 1.0 - 0.55 * r / radius;
        let mut v = (0.15 + 0.45 * speckle.at(xf, yf) + 0.2 * texture.at(xf, yf)) * attenuation;
        for wall in &walls {
            let wgt = wall.weight(xf, yf);
            v = v * (1.0 - wgt) + wall.level * speckle.at(xf, yf).max(0.5) * wgt;
        }
        for ch in &chambers {
            let wgt = ch.weight(xf, yf).powf(0.5);
            v = v * (1.0 - wgt) + ch.level * wgt;
        }
        v.clamp(0.0, 1.0)
    })
}

/// An RGB scene with a tinted wall gradient and a few textured
/// furniture-like blocks.
pub fn indoor_scene(seed: u64, width: usize, height: usize) -> ImageBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (width as f64, height as f64);
    let wall: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.35..0.85));
    let floor_y = rng.random_range(0.55..0.8) * h;
    let floor: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.15..0.55));
    let blocks: Vec<([f64; 4], [f64; 3])> = (0..rng.random_range(3..8))
        .map(|_| {
            let bw = rng.random_range(0.08..0.35) * w;
            let bh = rng.random_range(0.08..0.45) * h;
            let x0 = rng.random_range(0.0..w - bw);
            let y0 = rng.random_range(0.0..h - bh);
            let color = std::array::from_fn(|_| rng.random_range(0.05..0.95));
            ([x0, y0, x0 + bw, y0 + bh], color)
        })
        .collect();
    let grain_cell = rng.random_range(6.0..18.0);
    let grain = ValueNoise::new(&mut rng, width, height, grain_cell);
    let light = ValueNoise::new(&mut rng, width, height, 0.5 * w.max(h));

    let mut img = ImageBuffer::new(width, height, 3);
    for y in 0..height {
        for x in 0..width {
            let (xf, yf) = (x as f64, y as f64);
            let mut color = if yf > floor_y { floor } else { wall };
            for (rect, c) in &blocks {
                if xf >= rect[0] && xf < rect[2] && yf >= rect[1] && yf < rect[3] {
                    color = *c;
                }
            }
            let shade = 0.7 + 0.5 * light.at(xf, yf) + 0.15 * (grain.at(xf, yf) - 0.5);
            for (c, v) in color.iter().enumerate() {
                img.set(x, y, c, v * shade);
            }
        }
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phantoms_are_deterministic() {
        assert_eq!(echo_frame(3, 64, 48), echo_frame(3, 64, 48));
        assert_eq!(indoor_scene(3, 64, 48), indoor_scene(3, 64, 48));
        assert_ne!(echo_frame(3, 64, 48), echo_frame(4, 64, 48));
    }

    #[test]
    fn echo_frame_has_black_background() {
        let img = echo_frame(1, 160, 120);
        assert_eq!(img.channels(), 1);
        assert_eq!(img.get(159, 0, 0), 0.0);
        let zeros = img.data().iter().filter(|&&v| v == 0.0).count();
        assert!(zeros > img.data().len() / 5);
    }
}
