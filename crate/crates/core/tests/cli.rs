mod common;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use echoscreen::corner_model::render_target_heatmaps;
use echoscreen::datagen::DatasetManifest;
use echoscreen::metrics::{read_classified, uncertainty_reject};
use serde_json::Value;

fn echoscreen(args: &[&dyn AsRef<std::ffi::OsStr>]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_echoscreen")).args(args).output().expect("run echoscreen")
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json summary")
}

/// Builds a small dataset under `dir/data` and returns the manifest path.
fn synth(dir: &Path, seed: &str) -> PathBuf {
    let fx = common::write_fixture(dir, 6, 1, 6, 2, (160, 120));
    let out = dir.join("data");
    let res = echoscreen(&[
        &"synth", &"--echo-index", &fx.echo_index, &"--bg-index", &fx.bg_index, &"--out", &out, &"--seed", &seed,
        &"--scene", &"128x96", &"--jobs", &"2",
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    out.join("manifest.jsonl")
}

#[test]
fn synth_prints_balanced_counts_and_is_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let fx = common::write_fixture(a.path(), 6, 1, 6, 2, (160, 120));
    let run = |out: &Path| {
        echoscreen(&[
            &"synth", &"--echo-index", &fx.echo_index, &"--bg-index", &fx.bg_index, &"--out", &out, &"--seed", &"3",
            &"--scene", &"128x96",
        ])
    };
    let first = run(&a.path().join("data"));
    let second = run(&b.path().join("data"));
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let text = String::from_utf8(first.stdout).unwrap();
    for split in ["train", "val", "test"] {
        let cols: Vec<&str> = text.lines().find(|l| l.starts_with(split)).unwrap().split_whitespace().collect();
        assert_eq!(cols[1], cols[2], "{text}");
    }
    let read = |d: &Path| std::fs::read(d.join("data/manifest.jsonl")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
    assert!(second.status.success());
}

#[test]
fn rectify_from_manifest_writes_every_positive_at_the_target_size() {
    let dir = tempfile::tempdir().unwrap();
    let manifest_path = synth(dir.path(), "5");
    let manifest = DatasetManifest::read(&manifest_path).unwrap();
    let out = dir.path().join("rect");
    let summary = json(&echoscreen(&[
        &"--json", &"rectify", &"--manifest", &manifest_path, &"--out", &out, &"--target", &"96x64", &"--normalize",
    ]));
    let positives: Vec<_> = manifest.records.iter().filter(|r| r.screen_present).collect();
    assert_eq!(summary["processed"], positives.len());
    for r in positives {
        let img = image::open(out.join(format!("{}.png", r.id))).unwrap();
        assert_eq!((img.width(), img.height()), (96, 64));
        assert!(matches!(img, image::DynamicImage::ImageLuma8(_)));
    }
}

#[test]
fn rectify_decodes_heatmap_only_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let manifest_path = synth(dir.path(), "6");
    let manifest = DatasetManifest::read(&manifest_path).unwrap();
    let preds = dir.path().join("pred.jsonl");
    let mut f = std::fs::File::create(&preds).unwrap();
    let positives: Vec<_> = manifest.records.iter().filter(|r| r.screen_present).take(3).collect();
    for r in &positives {
        let hms = render_target_heatmaps(&r.corners.unwrap(), manifest.scene_w, manifest.scene_h, 1.5).unwrap();
        let names: Vec<String> = (0..4).map(|i| format!("{}_{i}.png", r.id)).collect();
        for (hm, n) in hms.iter().zip(&names) {
            hm.save_png16(dir.path().join(n)).unwrap();
        }
        let line = serde_json::json!({"id": r.id, "screen_prob": 0.9, "heatmaps": names});
        writeln!(f, "{line}").unwrap();
    }
    drop(f);
    let out = dir.path().join("rect");
    let res = echoscreen(&[
        &"--json", &"rectify", &"--predictions", &preds, &"--photos", &dir.path().join("data"), &"--out", &out,
        &"--target", &"64x48",
    ]);
    let stderr = String::from_utf8_lossy(&res.stderr).to_string();
    let summary = json(&res);
    assert_eq!(summary["corners_from_heatmaps"], 3);
    assert!(stderr.contains("DSNT"), "{stderr}");
    for r in positives {
        assert!(out.join(format!("{}.png", r.id)).is_file());
    }
}

#[test]
fn eval_with_oracle_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let manifest_path = synth(dir.path(), "7");
    let manifest = DatasetManifest::read(&manifest_path).unwrap();
    let preds = dir.path().join("pred.jsonl");
    let mut f = std::fs::File::create(&preds).unwrap();
    for r in &manifest.records {
        let mut line = serde_json::json!({"id": r.id, "screen_prob": if r.screen_present { 0.97 } else { 0.02 }});
        if let Some(q) = r.corners {
            line["corners"] = serde_json::to_value(q).unwrap();
        }
        writeln!(f, "{line}").unwrap();
    }
    drop(f);

    let views = dir.path().join("views.jsonl");
    let mut f = std::fs::File::create(&views).unwrap();
    for i in 0..50 {
        let wrong = i % 5 == 0;
        writeln!(
            f,
            r#"{{"id":"v{i}","true_class":{},"pred_class":{},"max_prob":{}}}"#,
            i % 3,
            if wrong { (i + 1) % 3 } else { i % 3 },
            if wrong { 0.4 } else { 0.5 + i as f64 / 100.0 }
        )
        .unwrap();
    }
    drop(f);

    let rect = dir.path().join("rect");
    json(&echoscreen(&[&"--json", &"rectify", &"--manifest", &manifest_path, &"--out", &rect, &"--target", &"160x120"]));
    let report_dir = dir.path().join("report");
    let report = json(&echoscreen(&[
        &"--json", &"eval", &"--manifest", &manifest_path, &"--predictions", &preds, &"--views", &views, &"--rectified",
        &rect, &"--out", &report_dir, &"--resamples", &"200",
    ]));
    assert_eq!(report["localization_error_px"]["point"], 0.0);
    assert_eq!(report["localization_error_px"]["ci_high"], 0.0);
    assert_eq!(report["detection"]["sensitivity"]["point"], 1.0);
    assert_eq!(report["detection"]["specificity"]["point"], 1.0);
    assert_eq!(report["detection"]["specificity"]["subsample_frac"], 0.8);
    let ssim = report["ssim"]["point"].as_f64().unwrap();
    assert!(ssim > 0.0 && ssim <= 1.0, "{report}");
    assert!(report["mse"]["point"].as_f64().unwrap() > 0.0);

    let samples = read_classified(&views).unwrap();
    for (p, frac) in report["rejection_curve"].as_array().unwrap().iter().zip([0.0, 0.2, 0.4]) {
        let (kept, acc) = uncertainty_reject(&samples, frac).unwrap();
        assert_eq!(p["kept"], kept.len());
        assert_eq!(p["balanced_accuracy"].as_f64().unwrap(), acc);
    }
    assert_eq!(report["rejection_curve"][1]["balanced_accuracy"], 1.0);

    let saved: Value = serde_json::from_str(&std::fs::read_to_string(report_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(saved, report);
    let defaults = json(&echoscreen(&[&"--json", &"eval", &"--manifest", &manifest_path, &"--predictions", &preds]));
    assert_eq!((defaults["n_resamples"].as_u64(), defaults["frac"].as_f64()), (Some(1000), Some(0.8)));
}

#[test]
fn eval_rejects_unknown_prediction_ids() {
    let dir = tempfile::tempdir().unwrap();
    let manifest_path = synth(dir.path(), "8");
    let preds = dir.path().join("pred.jsonl");
    std::fs::write(&preds, "{\"id\":\"nope\",\"screen_prob\":0.5}\n").unwrap();
    let res = echoscreen(&[&"eval", &"--manifest", &manifest_path, &"--predictions", &preds]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("nope"));
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(echoscreen(&[&"synth"]).status.code(), Some(2));
    assert_eq!(echoscreen(&[&"rectify", &"--out", &"x", &"--target", &"0x5", &"--manifest", &"m"]).status.code(), Some(2));
    assert_eq!(echoscreen(&[&"--help"]).status.code(), Some(0));
}

#[test]
fn missing_inputs_exit_with_one_and_name_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.jsonl");
    let res = echoscreen(&[&"synth", &"--echo-index", &missing, &"--bg-index", &missing, &"--out", &dir.path()]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("absent.jsonl"));
}
