//! Corner heatmaps: render training targets, decode them with DSNT and
//! evaluate the detector losses.
//!
//! `cargo run --example decode_heatmaps`

use echoscreen::corner_model::{
    classification_loss, decode_corners, dsnt_decode, localization_loss, multitask_loss, multitask_loss_grad_sigma,
    render_target_heatmaps, Heatmap, SigmaParams,
};
use echoscreen::geometry::{random_quad, QuadGenConfig};

fn main() -> echoscreen::Result<()> {
    let (w, h) = (160, 120);
    let truth = random_quad(9, w, h, &QuadGenConfig { margin_px: 8.0, ..Default::default() })?;
    let targets = render_target_heatmaps(&truth, w, h, 2.0)?;
    let decoded = decode_corners(&targets)?;
    for (t, d) in truth.corners.iter().zip(&decoded.corners) {
        println!("corner ({:>7.2}, {:>7.2})  decoded ({:>7.2}, {:>7.2})", t.x, t.y, d.x, d.y);
    }

    let flat = Heatmap::new(w, h, vec![1.0; w * h])?;
    let c = dsnt_decode(&flat)?;
    println!("uniform heatmap decodes to ({:.1e}, {:.1e})", c.x, c.y);

    let l_s = localization_loss(&decoded, &truth);
    let l_c = classification_loss(0.93, true);
    for (s_s, s_c) in [(1.0, 1.0), (0.5, 2.0), (2.0, 0.5)] {
        let sig = SigmaParams::new(s_s, s_c)?;
        let (g_s, g_c) = multitask_loss_grad_sigma(l_s, l_c, sig)?;
        println!(
            "sigma ({s_s}, {s_c}): loss {:.4}  dL/dsigma ({g_s:.4}, {g_c:.4})",
            multitask_loss(l_s, l_c, sig)?
        );
    }
    Ok(())
}
