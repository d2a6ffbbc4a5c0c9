//! Add a synthetic reflection to an echo frame and place it in a scene.
//!
//! `cargo run --example blend_reflection [out_dir]`

use std::path::PathBuf;

use echoscreen::compositing::{crop_reflection, insert_screen, screen_blend, BlendParams};
use echoscreen::geometry::{random_quad, QuadGenConfig};
use echoscreen::phantom;

fn main() -> echoscreen::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("echoscreen-blend"));
    let echo = phantom::echo_frame(7, 320, 240).to_rgb();
    let room = phantom::indoor_scene(8, 500, 380);

    let reflection = crop_reflection(&room, echo.width(), echo.height(), 1)?;
    for alpha in [1.0, 0.8, 0.5] {
        let blended = screen_blend(&echo, &reflection, BlendParams::new(alpha)?)?;
        blended.save_png(out.join(format!("blend_alpha{:.0}.png", alpha * 100.0)))?;
    }

    let blended = screen_blend(&echo, &reflection, BlendParams::new(0.7)?)?;
    let scene = phantom::indoor_scene(9, 640, 480);
    let quad = random_quad(3, 640, 480, &QuadGenConfig::default())?;
    let (photo, mask) = insert_screen(&scene, &blended, &quad)?;
    photo.save_png(out.join("scene.png"))?;
    mask.save_png(out.join("mask.png"))?;

    let covered = mask.data().iter().filter(|&&v| v > 0.0).count();
    println!("screen covers {covered} px; corners {:?}", quad.corners.map(|p| (p.x.round(), p.y.round())));
    println!("wrote {}", out.display());
    Ok(())
}
