use echoscreen::compositing::{blend_value, crop_reflection, insert_screen, screen_blend, BlendParams};
use echoscreen::geometry::{random_quad, Point2, Quad, QuadGenConfig};
use echoscreen::phantom;
use echoscreen::ImageBuffer;
use proptest::prelude::*;

/// Even-odd ray casting, independent of the library's edge tests. Points
/// exactly on an edge are ambiguous, so callers skip them.
fn ray_cast_inside(q: &Quad, x: f64, y: f64) -> bool {
    let c = &q.corners;
    let mut inside = false;
    for i in 0..4 {
        let (a, b) = (c[i], c[(i + 3) % 4]);
        if (a.y > y) != (b.y > y) && x < (b.x - a.x) * (y - a.y) / (b.y - a.y) + a.x {
            inside = !inside;
        }
    }
    inside
}

fn distance_to_boundary(q: &Quad, x: f64, y: f64) -> f64 {
    (0..4)
        .map(|i| {
            let (a, b) = (q.corners[i], q.corners[(i + 1) % 4]);
            let (dx, dy) = (b.x - a.x, b.y - a.y);
            let t = (((x - a.x) * dx + (y - a.y) * dy) / (dx * dx + dy * dy)).clamp(0.0, 1.0);
            (x - a.x - t * dx).hypot(y - a.y - t * dy)
        })
        .fold(f64::INFINITY, f64::min)
}

proptest! {
    #[test]
    fn blend_is_monotone_in_reflection(s in 0.0f64..=1.0, r1 in 0.0f64..=1.0, r2 in 0.0f64..=1.0, alpha in 0.0f64..=1.0) {
        let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
        prop_assert!(blend_value(s, lo, alpha) <= blend_value(s, hi, alpha));
        let b = blend_value(s, hi, alpha);
        prop_assert!((0.0..=1.0).contains(&b) && b >= s);
    }

    #[test]
    fn blend_matches_the_two_step_formula(s in 0.0f64..=1.0, r in 0.0f64..=1.0, alpha in 0.0f64..=1.0) {
        let y = 1.0 - (1.0 - s) * (1.0 - r);
        prop_assert!((blend_value(s, r, alpha) - (y * (1.0 - alpha) + s * alpha)).abs() < 1e-15);
    }

    #[test]
    fn crop_has_the_requested_size(seed in any::<u64>(), bw in 8usize..300, bh in 8usize..300, tw in 1usize..200, th in 1usize..200) {
        let bg = phantom::noise_image(seed, bw, bh, 3);
        let out = crop_reflection(&bg, tw, th, seed).unwrap();
        prop_assert_eq!(out.dims(), (tw, th, 3));
    }

    #[test]
    fn mask_matches_point_in_polygon(seed in any::<u64>()) {
        let (w, h) = (120, 90);
        let quad = random_quad(seed, w, h, &QuadGenConfig::default()).unwrap();
        let bg = ImageBuffer::new(w, h, 1);
        let screen = ImageBuffer::filled(30, 20, 1, 1.0);
        let (out, mask) = insert_screen(&bg, &screen, &quad).unwrap();
        for y in 0..h {
            for x in 0..w {
                let (xf, yf) = (x as f64, y as f64);
                if distance_to_boundary(&quad, xf, yf) < 1e-6 {
                    continue;
                }
                let inside = ray_cast_inside(&quad, xf, yf);
                prop_assert_eq!(mask.get(x, y, 0) == 1.0, inside, "pixel ({}, {})", x, y);
                prop_assert_eq!(out.get(x, y, 0), if inside { 1.0 } else { 0.0 });
            }
        }
    }
}

#[test]
fn screen_blend_rejects_mismatched_shapes() {
    let a = ImageBuffer::new(4, 4, 3);
    let b = ImageBuffer::new(4, 5, 3);
    assert!(screen_blend(&a, &b, BlendParams::new(0.5).unwrap()).is_err());
    assert!(BlendParams::new(1.5).is_err());
    assert!(BlendParams::new(f64::NAN).is_err());
}

#[test]
fn inserted_screen_corners_carry_screen_corner_values() {
    let (w, h) = (100, 80);
    let screen = ImageBuffer::from_fn(40, 30, 1, |x, y, _| (x + 40 * y) as f64 / 1200.0);
    let quad = Quad::new([Point2::new(10.0, 12.0), Point2::new(80.0, 8.0), Point2::new(88.0, 70.0), Point2::new(14.0, 66.0)]);
    let (out, _) = insert_screen(&ImageBuffer::new(w, h, 1), &screen, &quad).unwrap();
    let expect = [screen.get(0, 0, 0), screen.get(39, 0, 0), screen.get(39, 29, 0), screen.get(0, 29, 0)];
    for (p, e) in quad.corners.iter().zip(expect) {
        assert!((out.get(p.x as usize, p.y as usize, 0) - e).abs() < 1e-9);
    }
}
