//! Build a small self-annotated dataset from procedural inputs.
//!
//! `cargo run --release --example synthesize_dataset [out_dir]`
//!
//! Writes phantom echo frames and scenes plus their JSONL indices, then
//! runs the same builder as `echoscreen synth`.

use std::fs::File;
use std::io::Write;
use std::path::PathBuf;

use echoscreen::datagen::{build_dataset, BackgroundEntry, BuildOptions, EchoEntry, GenConfig};
use echoscreen::phantom;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("echoscreen-synth"));
    let inputs = root.join("inputs");
    let mut echo = Vec::new();
    for patient in 0..12 {
        for frame in 0..3 {
            let path = inputs.join(format!("echo/p{patient:02}_{frame}.png"));
            phantom::echo_frame(patient * 10 + frame, 320, 240).save_png(&path)?;
            echo.push(EchoEntry { path, patient_id: format!("p{patient:02}"), split: None });
        }
    }
    let mut backgrounds = Vec::new();
    for category in 0..9 {
        for k in 0..3 {
            let path = inputs.join(format!("bg/c{category}_{k}.png"));
            phantom::indoor_scene(1000 + category * 10 + k, 480, 360).save_png(&path)?;
            backgrounds.push(BackgroundEntry { path, category: format!("room{category}"), split: None });
        }
    }
    // The same inputs as index files, usable with `echoscreen synth`.
    let mut f = File::create(inputs.join("echo.jsonl"))?;
    for e in &echo {
        writeln!(f, "{}", serde_json::to_string(e)?)?;
    }
    let mut f = File::create(inputs.join("bg.jsonl"))?;
    for b in &backgrounds {
        writeln!(f, "{}", serde_json::to_string(b)?)?;
    }

    let cfg = GenConfig { scene_w: 320, scene_h: 240, master_seed: 2024, ..GenConfig::default() };
    let opts = BuildOptions { out_dir: root.join("dataset"), n_frames: None, jobs: 4 };
    let manifest = build_dataset(&echo, &backgrounds, &cfg, &opts)?;

    println!("{:<8}{:>15}{:>18}", "split", "with screen", "without screen");
    for (split, c) in manifest.counts() {
        println!("{:<8}{:>15}{:>18}", split.as_str(), c.with_screen, c.without_screen);
    }
    println!("manifest: {}", opts.out_dir.join("manifest.jsonl").display());
    Ok(())
}
