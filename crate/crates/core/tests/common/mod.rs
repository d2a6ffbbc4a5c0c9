#![allow(dead_code)]

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use echoscreen::phantom;

pub struct Fixture {
    pub echo_index: PathBuf,
    pub bg_index: PathBuf,
}

/// Writes phantom echo frames and scenes plus their JSONL indices.
///
/// Patients `p00..` each get `frames_per_patient` frames; categories
/// `c00..` each get `per_category` scenes.
pub fn write_fixture(
    dir: &Path,
    patients: usize,
    frames_per_patient: usize,
    categories: usize,
    per_category: usize,
    echo_size: (usize, usize),
) -> Fixture {
    std::fs::create_dir_all(dir.join("echo")).unwrap();
    std::fs::create_dir_all(dir.join("bg")).unwrap();
    let echo_index = dir.join("echo.jsonl");
    let mut f = File::create(&echo_index).unwrap();
    for p in 0..patients {
        for k in 0..frames_per_patient {
            let name = format!("echo/p{p:02}_{k}.png");
            let seed = (p * 100 + k) as u64;
            phantom::echo_frame(seed, echo_size.0, echo_size.1).save_png(dir.join(&name)).unwrap();
            writeln!(f, r#"{{"path":"{name}","patient_id":"p{p:02}"}}"#).unwrap();
        }
    }
    let bg_index = dir.join("bg.jsonl");
    let mut f = File::create(&bg_index).unwrap();
    for c in 0..categories {
        for k in 0..per_category {
            let name = format!("bg/c{c:02}_{k}.png");
            let seed = (10_000 + c * 100 + k) as u64;
            phantom::indoor_scene(seed, 200, 150).save_png(dir.join(&name)).unwrap();
            writeln!(f, r#"{{"path":"{name}","category":"c{c:02}"}}"#).unwrap();
        }
    }
    Fixture { echo_index, bg_index }
}

/// Byte contents of every file under `root`, keyed by relative path.
pub fn snapshot(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}
