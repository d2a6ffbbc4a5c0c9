//! Points, screen quadrilaterals and planar homographies.
//!
//! Pixel coordinates have their origin at the top-left corner with `x`
//! growing rightward and `y` downward. Integer coordinates are pixel
//! centers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Collinearity and determinant tolerance.
pub const DEGENERACY_TOL: f64 = 1e-9;

const W_EPS: f64 = 1e-12;
const DET_EPS: f64 = 1e-12;

/// A 2-D point in pixel coordinates. Serialized as `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl From<[f64; 2]> for Point2 {
    fn from([x, y]: [f64; 2]) -> Self {
        Self { x, y }
    }
}

impl From<Point2> for [f64; 2] {
    fn from(p: Point2) -> Self {
        [p.x, p.y]
    }
}

fn cross(o: Point2, a: Point2, b: Point2) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Four screen corners in TL, TR, BR, BL order.
///
/// Construction does not validate; operations that need a well-formed
/// quad call [`Quad::validate`]. Detector outputs can be arbitrary
/// point sets and still need to be representable for error metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Quad {
    pub corners: [Point2; 4],
}

impl Quad {
    pub const fn new(corners: [Point2; 4]) -> Self {
        Self { corners }
    }

    /// The axis-aligned rectangle with pixel-center extents `(0,0)..(w-1,h-1)`.
    pub fn canonical(width: usize, height: usize) -> Self {
        let (w, h) = (width as f64 - 1.0, height as f64 - 1.0);
        Self::rect(0.0, 0.0, w, h)
    }

    pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self::new([
            Point2::new(x0, y0),
            Point2::new(x1, y0),
            Point2::new(x1, y1),
            Point2::new(x0, y1),
        ])
    }

    /// Shoelace area; positive for the TL, TR, BR, BL order with `y` down.
    pub fn signed_area(&self) -> f64 {
        let c = &self.corners;
        (0..4)
            .map(|i| {
                let (a, b) = (c[i], c[(i + 1) % 4]);
                a.x * b.y - b.x * a.y
            })
            .sum::<f64>()
            * 0.5
    }

    /// Checks finiteness, distinct corners, strict convexity and orientation.
    pub fn validate(&self) -> Result<()> {
        let c = &self.corners;
        if let Some(i) = c.iter().position(|p| !p.is_finite()) {
            return Err(Error::InvalidQuad(format!("corner {i} is not finite")));
        }
        for i in 0..4 {
            for j in i + 1..4 {
                if c[i].distance(&c[j]) <= DEGENERACY_TOL {
                    return Err(Error::InvalidQuad(format!("corners {i} and {j} coincide")));
                }
            }
        }
        for i in 0..4 {
            let turn = cross(c[i], c[(i + 1) % 4], c[(i + 2) % 4]);
            if turn <= 0.0 {
                return Err(Error::InvalidQuad(format!(
                    "not convex in TL,TR,BR,BL order at corner {}",
                    (i + 1) % 4
                )));
            }
        }
        Ok(())
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_ok()
    }

    /// Closed containment test: points on an edge count as inside.
    /// Assumes a valid (convex, positively oriented) quad.
    pub fn contains(&self, p: Point2) -> bool {
        let c = &self.corners;
        (0..4).all(|i| cross(c[i], c[(i + 1) % 4], p) >= 0.0)
    }

    /// True when every corner lies in `[lo, hi]` on both axes.
    pub fn within(&self, x_lo: f64, y_lo: f64, x_hi: f64, y_hi: f64) -> bool {
        self.corners
            .iter()
            .all(|p| p.x >= x_lo && p.x <= x_hi && p.y >= y_lo && p.y <= y_hi)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self::new(self.corners.map(|p| Point2::new(p.x * s, p.y * s)))
    }
}

/// Mean Euclidean distance between order-matched corners, in pixels.
pub fn mean_corner_distance(pred: &Quad, reference: &Quad) -> f64 {
    pred.corners
        .iter()
        .zip(&reference.corners)
        .map(|(a, b)| a.distance(b))
        .sum::<f64>()
        / 4.0
}

/// A 3x3 projective transform, row-major, scaled so `m[2][2] == 1`
/// whenever that entry is not vanishingly small.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    m: [[f64; 3]; 3],
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// `a b - c d` with a single rounding error (Kahan's FMA algorithm).
fn diff_of_products(a: f64, b: f64, c: f64, d: f64) -> f64 {
    let w = c * d;
    let err = c.mul_add(-d, w);
    a.mul_add(b, -w) + err
}

/// Dot product accumulated in twice the working precision.
fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for (x, y) in a.into_iter().zip(b) {
        let p = x * y;
        let p_err = x.mul_add(y, -p);
        let t = sum + p;
        let z = t - sum;
        comp += (sum - (t - z)) + (p - z) + p_err;
        sum = t;
    }
    sum + comp
}

fn matmul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = dot3(a[i], [b[0][j], b[1][j], b[2][j]]);
        }
    }
    out
}

impl Homography {
    pub const IDENTITY: Homography = Homography {
        m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    /// Normalizes the scale and rejects singular matrices.
    pub fn from_matrix(mut m: [[f64; 3]; 3]) -> Result<Self> {
        if m.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::SingularMatrix(f64::NAN));
        }
        let s = m[2][2];
        if s.abs() > W_EPS {
            for v in m.iter_mut().flatten() {
                *v /= s;
            }
        }
        let det = det3(&m);
        if det.abs() <= DET_EPS {
            return Err(Error::SingularMatrix(det.abs()));
        }
        Ok(Self { m })
    }

    pub fn matrix(&self) -> &[[f64; 3]; 3] {
        &self.m
    }

    /// Solves the homography taking each `src` corner onto the matching
    /// `dst` corner with the normalized four-point DLT.
    pub fn from_points(src: &Quad, dst: &Quad) -> Result<Self> {
        src.validate()?;
        dst.validate()?;
        let (src_n, t_src) = hartley_normalize(&src.corners);
        let (dst_n, t_dst) = hartley_normalize(&dst.corners);
        check_collinear(&src_n, "source")?;
        check_collinear(&dst_n, "destination")?;

        // h33 is fixed to 1: the source centroid lies inside a convex quad
        // and must map to a finite point.
        let mut a = [[0.0; 9]; 8];
        for (i, (p, q)) in src_n.iter().zip(&dst_n).enumerate() {
            let (x, y, u, v) = (p.x, p.y, q.x, q.y);
            a[2 * i] = [x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y, u];
            a[2 * i + 1] = [0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y, v];
        }
        let h = solve8(a).ok_or_else(|| {
            Error::DegenerateConfiguration("DLT system is singular".to_string())
        })?;
        let hn = [[h[0], h[1], h[2]], [h[3], h[4], h[5]], [h[6], h[7], 1.0]];

        let s = t_dst.scale;
        let t_dst_inv = [
            [1.0 / s, 0.0, t_dst.cx],
            [0.0, 1.0 / s, t_dst.cy],
            [0.0, 0.0, 1.0],
        ];
        let m = matmul(&matmul(&t_dst_inv, &hn), &t_src.matrix());
        Self::from_matrix(m)
    }

    /// Maps a point; fails when it lands on the line at infinity.
    pub fn apply(&self, p: Point2) -> Result<Point2> {
        let m = &self.m;
        let w = m[2][0] * p.x + m[2][1] * p.y + m[2][2];
        if w.abs() <= W_EPS {
            return Err(Error::PointAtInfinity(w.abs()));
        }
        Ok(Point2::new(
            (m[0][0] * p.x + m[0][1] * p.y + m[0][2]) / w,
            (m[1][0] * p.x + m[1][1] * p.y + m[1][2]) / w,
        ))
    }

    pub fn invert(&self) -> Result<Self> {
        let m = &self.m;
        let det = det3(m);
        if det.abs() <= DET_EPS || !det.is_finite() {
            return Err(Error::SingularMatrix(det.abs()));
        }
        let c = |a: f64, b: f64, x: f64, y: f64| diff_of_products(a, b, x, y);
        let adj = [
            [
                c(m[1][1], m[2][2], m[1][2], m[2][1]),
                c(m[0][2], m[2][1], m[0][1], m[2][2]),
                c(m[0][1], m[1][2], m[0][2], m[1][1]),
            ],
            [
                c(m[1][2], m[2][0], m[1][0], m[2][2]),
                c(m[0][0], m[2][2], m[0][2], m[2][0]),
                c(m[0][2], m[1][0], m[0][0], m[1][2]),
            ],
            [
                c(m[1][0], m[2][1], m[1][1], m[2][0]),
                c(m[0][1], m[2][0], m[0][0], m[2][1]),
                c(m[0][0], m[1][1], m[0][1], m[1][0]),
            ],
        ];
        // The adjugate is the inverse up to scale; normalizing by its own
        // h33 skips a rounding through det.
        if adj[2][2].abs() > W_EPS {
            Self::from_matrix(adj)
        } else {
            Self::from_matrix(adj.map(|row| row.map(|v| v / det)))
        }
    }

    /// `self` applied after `first`.
    pub fn compose(&self, first: &Homography) -> Result<Self> {
        Self::from_matrix(matmul(&self.m, &first.m))
    }
}

/// Free-function form of [`Homography::from_points`].
pub fn homography_from_points(src: &Quad, dst: &Quad) -> Result<Homography> {
    Homography::from_points(src, dst)
}

#[derive(Debug, Clone, Copy)]
struct Similarity {
    cx: f64,
    cy: f64,
    scale: f64,
}

impl Similarity {
    fn matrix(&self) -> [[f64; 3]; 3] {
        let s = self.scale;
        [
            [s, 0.0, -s * self.cx],
            [0.0, s, -s * self.cy],
            [0.0, 0.0, 1.0],
        ]
    }
}

/// Translates the centroid to the origin and scales to mean distance sqrt(2).
fn hartley_normalize(pts: &[Point2; 4]) -> ([Point2; 4], Similarity) {
    let cx = pts.iter().map(|p| p.x).sum::<f64>() / 4.0;
    let cy = pts.iter().map(|p| p.y).sum::<f64>() / 4.0;
    let mean_dist = pts.iter().map(|p| (p.x - cx).hypot(p.y - cy)).sum::<f64>() / 4.0;
    let scale = std::f64::consts::SQRT_2 / mean_dist;
    let t = Similarity { cx, cy, scale };
    let out = pts.map(|p| Point2::new((p.x - cx) * scale, (p.y - cy) * scale));
    (out, t)
}

fn check_collinear(pts: &[Point2; 4], which: &str) -> Result<()> {
    for skip in 0..4 {
        let tri: Vec<Point2> = (0..4).filter(|&i| i != skip).map(|i| pts[i]).collect();
        if cross(tri[0], tri[1], tri[2]).abs() <= DEGENERACY_TOL {
            return Err(Error::DegenerateConfiguration(format!(
                "three {which} corners are collinear"
            )));
        }
    }
    Ok(())
}

/// Gaussian elimination with partial pivoting on an augmented 8x9 system.
fn solve8(mut a: [[f64; 9]; 8]) -> Option<[f64; 8]> {
    for col in 0..8 {
        let pivot = (col..8).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-14 {
            return None;
        }
        a.swap(col, pivot);
        for row in col + 1..8 {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for k in col..9 {
                    a[row][k] -= f * a[col][k];
                }
            }
        }
    }
    let mut x = [0.0; 8];
    for row in (0..8).rev() {
        let tail: f64 = (row + 1..8).map(|k| a[row][k] * x[k]).sum();
        x[row] = (a[row][8] - tail) / a[row][row];
    }
    Some(x)
}

/// Placement distribution for synthetic screens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadGenConfig {
    /// Base rectangle width as a fraction of the background width.
    pub base_w_frac: (f64, f64),
    /// Base rectangle height as a fraction of the sampled base width.
    pub base_h_frac: (f64, f64),
    /// Minimum distance of every corner from the image border.
    pub margin_px: f64,
    pub min_area_px2: f64,
}

impl Default for QuadGenConfig {
    fn default() -> Self {
        Self {
            base_w_frac: (0.25, 0.70),
            base_h_frac: (0.6, 0.9),
            margin_px: 4.0,
            min_area_px2: 1024.0,
        }
    }
}

impl QuadGenConfig {
    pub fn validate(&self) -> Result<()> {
        let frac_ok = |(lo, hi): (f64, f64)| 0.0 < lo && lo <= hi && hi < 1.0;
        if !frac_ok(self.base_w_frac) || !frac_ok(self.base_h_frac) {
            return Err(Error::InvalidParameter(
                "quad size fractions must lie in (0, 1)".to_string(),
            ));
        }
        if !(self.margin_px >= 0.0) || !(self.min_area_px2 >= 0.0) {
            return Err(Error::InvalidParameter(
                "margin and minimum area must be non-negative".to_string(),
            ));
        }
        Ok(())
    }
}

/// A generated quad together with the rectangle it was displaced from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadDraw {
    pub quad: Quad,
    pub base: Quad,
    pub base_w: f64,
    pub base_h: f64,
    /// Per-corner displacement applied to `base`.
    pub displacement: [Point2; 4],
    pub attempts: usize,
}

pub const MAX_QUAD_ATTEMPTS: usize = 1000;

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Random screen quad: an axis-aligned rectangle whose corners are each
/// jittered by up to half the rectangle's width and height.
pub fn random_quad(seed: u64, bg_w: usize, bg_h: usize, cfg: &QuadGenConfig) -> Result<Quad> {
    random_quad_draw(seed, bg_w, bg_h, cfg).map(|d| d.quad)
}

pub fn random_quad_draw(
    seed: u64,
    bg_w: usize,
    bg_h: usize,
    cfg: &QuadGenConfig,
) -> Result<QuadDraw> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lo = cfg.margin_px;
    let x_hi = bg_w as f64 - 1.0 - cfg.margin_px;
    let y_hi = bg_h as f64 - 1.0 - cfg.margin_px;

    for attempt in 1..=MAX_QUAD_ATTEMPTS {
        let w = uniform(&mut rng, cfg.base_w_frac) * bg_w as f64;
        let h = w * uniform(&mut rng, cfg.base_h_frac);
        if w > x_hi - lo || h > y_hi - lo {
            continue;
        }
        let x0 = uniform(&mut rng, (lo, x_hi - w));
        let y0 = uniform(&mut rng, (lo, y_hi - h));
        let base = Quad::rect(x0, y0, x0 + w, y0 + h);
        let displacement = std::array::from_fn(|_| {
            let dx = uniform(&mut rng, (-w / 2.0, w / 2.0));
            let dy = uniform(&mut rng, (-h / 2.0, h / 2.0));
            Point2::new(dx, dy)
        });
        let quad = Quad::new(std::array::from_fn(|i| {
            Point2::new(
                base.corners[i].x + displacement[i].x,
                base.corners[i].y + displacement[i].y,
            )
        }));
        if quad.within(lo, lo, x_hi, y_hi)
            && quad.is_valid()
            && quad.signed_area() >= cfg.min_area_px2
        {
            return Ok(QuadDraw { quad, base, base_w: w, base_h: h, displacement, attempts: attempt });
        }
    }
    Err(Error::GenerationExhausted(MAX_QUAD_ATTEMPTS))
}
