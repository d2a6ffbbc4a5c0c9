//! Solve a screen-to-rectangle homography and map points both ways.
//!
//! `cargo run --example homography`

use echoscreen::geometry::{random_quad, Homography, Point2, Quad, QuadGenConfig};

fn main() -> echoscreen::Result<()> {
    let photo_quad = Quad::new([
        Point2::new(112.0, 64.0),
        Point2::new(530.0, 98.0),
        Point2::new(508.0, 410.0),
        Point2::new(96.0, 372.0),
    ]);
    let canonical = Quad::canonical(640, 480);
    let h = Homography::from_points(&canonical, &photo_quad)?;
    println!("canonical -> photo:");
    for row in h.matrix() {
        println!("  [{:>12.6} {:>12.6} {:>12.6}]", row[0], row[1], row[2]);
    }

    let center = h.apply(Point2::new(319.5, 239.5))?;
    println!("screen center lands at ({:.2}, {:.2})", center.x, center.y);
    let back = h.invert()?.apply(center)?;
    println!("and maps back to ({:.6}, {:.6})", back.x, back.y);

    let cfg = QuadGenConfig::default();
    let mut worst = 0.0f64;
    for seed in 0..1000 {
        let src = random_quad(seed, 640, 480, &cfg)?;
        let dst = random_quad(seed + 1_000_000, 640, 480, &cfg)?;
        let h = Homography::from_points(&src, &dst)?;
        for (s, d) in src.corners.iter().zip(&dst.corners) {
            worst = worst.max(h.apply(*s)?.distance(d));
        }
    }
    println!("max corner reprojection over 1000 random pairs: {worst:.2e} px");
    Ok(())
}
