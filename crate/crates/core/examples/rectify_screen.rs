//! Recover the screen content from a photo given its four corners.
//!
//! `cargo run --example rectify_screen [out_dir]`

use std::path::PathBuf;

use echoscreen::compositing::{crop_reflection, insert_screen, screen_blend, BlendParams};
use echoscreen::geometry::{random_quad, QuadGenConfig};
use echoscreen::metrics::{mse, ssim};
use echoscreen::phantom;
use echoscreen::rectify::{normalize, rectify, RectifyConfig};
use echoscreen::ImageBuffer;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("echoscreen-rectify"));
    let echo = phantom::echo_frame(11, 640, 480);
    let room = phantom::indoor_scene(12, 800, 600);
    let reflection = crop_reflection(&room, 640, 480, 0)?;
    let screen = screen_blend(&echo.to_rgb(), &reflection, BlendParams::new(0.75)?)?;
    let quad = random_quad(5, 800, 600, &QuadGenConfig { base_w_frac: (0.55, 0.7), ..Default::default() })?;
    let (photo, _) = insert_screen(&room, &screen, &quad)?;
    photo.save_png(out.join("photo.png"))?;

    let rectified = rectify(&photo, &quad, &RectifyConfig::default())?;
    rectified.save_png(out.join("rectified.png"))?;
    let normalized = normalize(&rectified);
    normalized.save(out.join("normalized.png"))?;

    let reference = ImageBuffer::from_gray8(&normalize(&echo));
    let recovered = ImageBuffer::from_gray8(&normalized);
    println!("raw:        ssim {:.3}", ssim(&rectified.to_gray(), &echo)?);
    println!("normalized: ssim {:.3}  mse {:.4}", ssim(&recovered, &reference)?, mse(&recovered, &reference)?);
    println!("wrote {}", out.display());
    Ok(())
}
