//! Command-line front end: `synth`, `rectify` and `eval`.
//!
//! Exit codes: 0 on success, 1 on an operational error, 2 on invalid
//! arguments. With `--json` the command summary is printed to stdout as a
//! single JSON document; otherwise a human-readable table is printed.

use std::collections::{BTreeMap, HashMap};
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use crate::corner_model::{ingest_predictions, CornerSource, PredictionRecord};
use crate::datagen::{
    build_dataset, read_index, BackgroundEntry, BuildOptions, DatasetManifest, EchoEntry, GenConfig, Split,
    SplitCounts,
};
use crate::error::{Error, Result};
use crate::geometry::{QuadGenConfig, Quad};
use crate::metrics::{
    bootstrap, confusion_from_predictions, corner_error_px, detection_rates, mse, read_classified, ssim,
    uncertainty_reject, BootstrapConfig, ConfusionMatrix, DetectionRates, EvalReport,
};
use crate::raster::ImageBuffer;
use crate::rectify::{normalize, rectify, RectifyConfig};

/// `WxH` pixel size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Size {
    pub width: usize,
    pub height: usize,
}

impl FromStr for Size {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let (w, h) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| format!("expected WxH, got `{s}`"))?;
        let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("`{v}`: {e}"));
        let size = Size { width: parse(w)?, height: parse(h)? };
        if size.width == 0 || size.height == 0 {
            return Err("size must be positive".to_string());
        }
        Ok(size)
    }
}

#[derive(Debug, Parser)]
#[command(name = "echoscreen", version, about = "Synthesize, rectify and evaluate photographs of ultrasound screens")]
pub struct Cli {
    /// Print a machine-readable JSON summary on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a self-annotated synthetic dataset.
    Synth(SynthArgs),
    /// Warp screens onto a canonical grid using manifest or predicted corners.
    Rectify(RectifyArgs),
    /// Score predictions against a manifest.
    Eval(EvalArgs),
}

fn parse_jobs(s: &str) -> std::result::Result<usize, String> {
    match s.parse::<usize>() {
        Ok(n) if n >= 1 => Ok(n),
        Ok(_) => Err("must be at least 1".to_string()),
        Err(e) => Err(e.to_string()),
    }
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// JSONL index of echo frames: {path, patient_id, split?}.
    #[arg(long)]
    pub echo_index: PathBuf,
    /// JSONL index of background images: {path, category, split?}.
    #[arg(long)]
    pub bg_index: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Number of echo frames to use (default: all).
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "1", value_parser = parse_jobs)]
    pub jobs: usize,
    #[arg(long, default_value_t = 0.5)]
    pub alpha_min: f64,
    #[arg(long, default_value_t = 0.95)]
    pub alpha_max: f64,
    /// Probability of a reflection-free screen.
    #[arg(long, default_value_t = 0.1)]
    pub p_no_reflection: f64,
    /// Scene size.
    #[arg(long, default_value = "640x480")]
    pub scene: Size,
}

#[derive(Debug, Clone, Args)]
pub struct RectifyArgs {
    /// Directory holding the photos (default: the manifest's directory).
    #[arg(long)]
    pub photos: Option<PathBuf>,
    /// Take corners from a dataset manifest.
    #[arg(long, conflicts_with = "predictions", required_unless_present = "predictions")]
    pub manifest: Option<PathBuf>,
    /// Take corners from a predictions file.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "640x480")]
    pub target: Size,
    /// Apply grayscale / background / stretch normalization to the output.
    #[arg(long)]
    pub normalize: bool,
    /// Skip ids without a photo or usable corners instead of failing.
    #[arg(long)]
    pub skip_missing: bool,
    #[arg(long, default_value = "1", value_parser = parse_jobs)]
    pub jobs: usize,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub predictions: PathBuf,
    /// Screen-present decision threshold on `screen_prob`.
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[arg(long, default_value_t = 1000)]
    pub resamples: usize,
    #[arg(long, default_value_t = 0.8)]
    pub frac: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Rejection fractions for the view-classifier curve.
    #[arg(long, value_delimiter = ',', default_value = "0,0.2,0.4")]
    pub reject: Vec<f64>,
    /// View-classifier outputs: JSONL {id, true_class, pred_class, max_prob}.
    #[arg(long)]
    pub views: Option<PathBuf>,
    /// Directory of rectified images (`<id>.png`) to compare with the echo sources.
    #[arg(long)]
    pub rectified: Option<PathBuf>,
    /// Directory to write `report.json` into.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value = "1", value_parser = parse_jobs)]
    pub jobs: usize,
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(text) => {
            println!("{text}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn execute(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::Synth(a) => {
            let s = cmd_synth(a)?;
            Ok(if cli.json { serde_json::to_string_pretty(&s)? } else { s.to_text() })
        }
        Command::Rectify(a) => {
            let s = cmd_rectify(a)?;
            Ok(if cli.json { serde_json::to_string_pretty(&s)? } else { s.to_text() })
        }
        Command::Eval(a) => {
            let r = cmd_eval(a)?;
            Ok(if cli.json { serde_json::to_string_pretty(&r)? } else { r.to_text() })
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SynthSummary {
    pub out: PathBuf,
    pub seed: u64,
    pub splits: BTreeMap<Split, SplitCounts>,
}

impl SynthSummary {
    pub fn to_text(&self) -> String {
        let mut s = format!("{:<12}{:>16}{:>20}{:>10}\n", "split", "# with screen", "# without screen", "total");
        for (split, c) in &self.splits {
            s += &format!("{:<12}{:>16}{:>20}{:>10}\n", split.as_str(), c.with_screen, c.without_screen, c.total());
        }
        s += &format!("wrote {} (seed {})", self.out.join(crate::datagen::MANIFEST_FILE).display(), self.seed);
        s
    }
}

pub fn cmd_synth(a: &SynthArgs) -> Result<SynthSummary> {
    let echo: Vec<EchoEntry> = read_index(&a.echo_index)?;
    let bgs: Vec<BackgroundEntry> = read_index(&a.bg_index)?;
    let cfg = GenConfig {
        scene_w: a.scene.width,
        scene_h: a.scene.height,
        alpha_range: (a.alpha_min, a.alpha_max),
        p_no_reflection: a.p_no_reflection,
        quad: QuadGenConfig::default(),
        master_seed: a.seed,
    };
    let opts = BuildOptions { out_dir: a.out.clone(), n_frames: a.n, jobs: a.jobs };
    let manifest = build_dataset(&echo, &bgs, &cfg, &opts)?;
    Ok(SynthSummary { out: a.out.clone(), seed: a.seed, splits: manifest.counts() })
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct RectifySummary {
    pub processed: usize,
    pub skipped: Vec<String>,
    pub corners_from_heatmaps: usize,
    pub target: [usize; 2],
    pub normalized: bool,
}

impl RectifySummary {
    pub fn to_text(&self) -> String {
        format!(
            "rectified {} image(s) to {}x{}{}; {} skipped; {} with corners decoded from heatmaps",
            self.processed,
            self.target[0],
            self.target[1],
            if self.normalized { " (normalized)" } else { "" },
            self.skipped.len(),
            self.corners_from_heatmaps
        )
    }
}

struct RectifyJob {
    id: String,
    photo: Option<PathBuf>,
    quad: Option<Quad>,
    from_heatmaps: bool,
}

/// Maps file stems to paths for every image below `root`.
fn index_photos(root: &Path) -> Result<HashMap<String, PathBuf>> {
    let mut out = HashMap::new();
    let mut stack = vec![root.to_path_buf()];
    let mut files = Vec::new();
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
            let path = entry.map_err(|e| Error::io(&dir, e))?.path();
            if path.is_dir() {
                stack.push(path);
            } else if matches!(
                path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
                Some("png" | "jpg" | "jpeg")
            ) {
                files.push(path);
            }
        }
    }
    files.sort();
    for path in files {
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            out.entry(stem.to_string()).or_insert(path);
        }
    }
    Ok(out)
}

pub fn cmd_rectify(a: &RectifyArgs) -> Result<RectifySummary> {
    let cfg = RectifyConfig::new(a.target.width, a.target.height)?;
    let jobs: Vec<RectifyJob> = if let Some(mpath) = &a.manifest {
        let manifest = DatasetManifest::read(mpath)?;
        let root = a.photos.clone().unwrap_or_else(|| mpath.parent().unwrap_or(Path::new(".")).to_path_buf());
        manifest
            .records
            .iter()
            .filter(|r| r.screen_present)
            .map(|r| {
                let nested = DatasetManifest::image_path(&root, r);
                let flat = root.join(format!("{}.png", r.id));
                let photo = [nested, flat].into_iter().find(|p| p.is_file());
                RectifyJob { id: r.id.clone(), photo, quad: r.corners, from_heatmaps: false }
            })
            .collect()
    } else {
        let ppath = a.predictions.as_ref().expect("clap enforces one corner source");
        let root = a
            .photos
            .clone()
            .ok_or_else(|| Error::InvalidParameter("--photos is required with --predictions".to_string()))?;
        let photos = index_photos(&root)?;
        ingest_predictions(ppath)?
            .into_iter()
            .map(|p| RectifyJob {
                photo: photos.get(&p.id).cloned(),
                quad: p.corners,
                from_heatmaps: p.corner_source == CornerSource::Heatmaps,
                id: p.id,
            })
            .collect()
    };

    let mut summary = RectifySummary {
        target: [cfg.target_w, cfg.target_h],
        normalized: a.normalize,
        ..Default::default()
    };
    let mut ready = Vec::new();
    for job in jobs {
        let problem = match (&job.photo, &job.quad) {
            (None, _) => Some("no photo found"),
            (_, None) => Some("no corners"),
            (_, Some(q)) if !q.is_valid() => Some("corners do not form a convex TL,TR,BR,BL quad"),
            _ => None,
        };
        match problem {
            Some(why) if a.skip_missing => {
                eprintln!("warning: skipping `{}`: {why}", job.id);
                summary.skipped.push(job.id);
            }
            Some(why) => return Err(Error::InvalidParameter(format!("cannot rectify `{}`: {why}", job.id))),
            None => {
                if job.from_heatmaps {
                    eprintln!("info: `{}`: corners derived from heatmaps via DSNT", job.id);
                    summary.corners_from_heatmaps += 1;
                }
                ready.push(job);
            }
        }
    }

    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let pool = thread_pool(a.jobs)?;
    pool.install(|| {
        ready.par_iter().try_for_each(|job| -> Result<()> {
            let photo = ImageBuffer::load(job.photo.as_ref().expect("checked"))?;
            let out = rectify(&photo, job.quad.as_ref().expect("checked"), &cfg)?;
            let path = a.out.join(format!("{}.png", job.id));
            if a.normalize {
                crate::raster::save_png(&image::DynamicImage::ImageLuma8(normalize(&out)), &path)
            } else {
                out.save_png(&path)
            }
        })
    })?;
    summary.processed = ready.len();
    Ok(summary)
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))
}

#[derive(Debug, Clone, Serialize)]
pub struct DetectionSummary {
    pub threshold: f64,
    pub confusion: ConfusionMatrix,
    pub rates: DetectionRates,
    pub sensitivity: EvalReport,
    pub specificity: EvalReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct RejectionPoint {
    pub reject_frac: f64,
    pub kept: usize,
    pub balanced_accuracy: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalOutput {
    pub n_resamples: usize,
    pub frac: f64,
    pub seed: u64,
    pub n_predictions: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub localization_error_px: Option<EvalReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detection: Option<DetectionSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mse: Option<EvalReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ssim: Option<EvalReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rejection_curve: Option<Vec<RejectionPoint>>,
    pub errors: BTreeMap<String, String>,
}

fn fmt_report(r: &EvalReport, digits: usize) -> String {
    format!("{:.d$} ({:.d$}, {:.d$})", r.point, r.ci_low, r.ci_high, d = digits)
}

impl EvalOutput {
    pub fn to_text(&self) -> String {
        let mut lines = vec![format!(
            "{} predictions; median (2.5%, 97.5%) over {} subsamples of {:.0}% (seed {})",
            self.n_predictions,
            self.n_resamples,
            100.0 * self.frac,
            self.seed
        )];
        if let Some(r) = &self.localization_error_px {
            lines.push(format!("loc. error (px)  {}", fmt_report(r, 2)));
        }
        if let Some(d) = &self.detection {
            lines.push(format!("sensitivity      {}", fmt_report(&d.sensitivity, 3)));
            lines.push(format!("specificity      {}", fmt_report(&d.specificity, 3)));
            let c = d.confusion.rows();
            lines.push(format!("confusion        [[{}, {}], [{}, {}]]", c[0][0], c[0][1], c[1][0], c[1][1]));
        }
        if let Some(r) = &self.mse {
            lines.push(format!("mse              {}", fmt_report(r, 4)));
        }
        if let Some(r) = &self.ssim {
            lines.push(format!("ssim             {}", fmt_report(r, 3)));
        }
        for p in self.rejection_curve.iter().flatten() {
            lines.push(format!(
                "reject {:>4.0}%      balanced accuracy {:.3} on {} samples",
                100.0 * p.reject_frac,
                p.balanced_accuracy,
                p.kept
            ));
        }
        for (metric, err) in &self.errors {
            lines.push(format!("{metric}: error: {err}"));
        }
        lines.join("\n")
    }
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    crate::metrics::percentile(&v, 0.5)
}

pub fn cmd_eval(a: &EvalArgs) -> Result<EvalOutput> {
    let manifest = DatasetManifest::read(&a.manifest)?;
    let predictions = ingest_predictions(&a.predictions)?;
    let by_id: HashMap<&str, &crate::datagen::SampleRecord> =
        manifest.records.iter().map(|r| (r.id.as_str(), r)).collect();
    if let Some(p) = predictions.iter().find(|p| !by_id.contains_key(p.id.as_str())) {
        return Err(Error::InvalidParameter(format!("prediction id `{}` not in manifest", p.id)));
    }
    let boot = BootstrapConfig { n_resamples: a.resamples, frac: a.frac, seed: a.seed };
    let pool = thread_pool(a.jobs)?;
    let mut errors = BTreeMap::new();

    let localization = pool.install(|| localization_report(&predictions, &by_id, &boot));
    let localization = keep(localization, "localization_error_px", &mut errors);

    let detection = pool.install(|| detection_report(&predictions, &by_id, a.threshold, &boot));
    let detection = keep(detection, "detection", &mut errors);

    let (mse_report, ssim_report) = match &a.rectified {
        Some(dir) => {
            let pairs = pool.install(|| quality_pairs(&manifest, dir));
            match pairs {
                Ok(q) => {
                    let m: Vec<f64> = q.iter().map(|v| v.0).collect();
                    let s: Vec<f64> = q.iter().map(|v| v.1).collect();
                    let mr = pool.install(|| bootstrap("mse", &m, median, &boot));
                    let sr = pool.install(|| bootstrap("ssim", &s, median, &boot));
                    (keep(mr, "mse", &mut errors), keep(sr, "ssim", &mut errors))
                }
                Err(e) => {
                    errors.insert("quality".to_string(), e.to_string());
                    (None, None)
                }
            }
        }
        None => (None, None),
    };

    let rejection_curve = match &a.views {
        Some(path) => keep(rejection_curve(path, &a.reject), "rejection_curve", &mut errors),
        None => None,
    };

    let report = EvalOutput {
        n_resamples: boot.n_resamples,
        frac: boot.frac,
        seed: boot.seed,
        n_predictions: predictions.len(),
        localization_error_px: localization,
        detection,
        mse: mse_report,
        ssim: ssim_report,
        rejection_curve,
        errors,
    };
    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("report.json");
        std::fs::write(&path, serde_json::to_string_pretty(&report)? + "\n").map_err(|e| Error::io(&path, e))?;
    }
    Ok(report)
}

fn keep<T>(r: Result<T>, name: &str, errors: &mut BTreeMap<String, String>) -> Option<T> {
    r.map_err(|e| errors.insert(name.to_string(), e.to_string())).ok()
}

fn localization_report(
    predictions: &[PredictionRecord],
    by_id: &HashMap<&str, &crate::datagen::SampleRecord>,
    boot: &BootstrapConfig,
) -> Result<EvalReport> {
    let errs: Vec<f64> = predictions
        .iter()
        .filter_map(|p| {
            let truth = by_id[p.id.as_str()].corners?;
            Some(corner_error_px(&p.corners?, &truth))
        })
        .collect();
    bootstrap("localization_error_px", &errs, |xs| xs.iter().sum::<f64>() / xs.len() as f64, boot)
}

fn detection_report(
    predictions: &[PredictionRecord],
    by_id: &HashMap<&str, &crate::datagen::SampleRecord>,
    threshold: f64,
    boot: &BootstrapConfig,
) -> Result<DetectionSummary> {
    let pairs: Vec<(f64, bool)> =
        predictions.iter().map(|p| (p.screen_prob, by_id[p.id.as_str()].screen_present)).collect();
    let confusion = confusion_from_predictions(&pairs, threshold);
    let rates = detection_rates(&confusion)?;
    let rate = |pick: fn(&DetectionRates) -> f64| {
        move |xs: &[(f64, bool)]| {
            detection_rates(&confusion_from_predictions(xs, threshold)).map_or(f64::NAN, |r| pick(&r))
        }
    };
    Ok(DetectionSummary {
        threshold,
        confusion,
        rates,
        sensitivity: bootstrap("sensitivity", &pairs, rate(|r| r.sensitivity), boot)?,
        specificity: bootstrap("specificity", &pairs, rate(|r| r.specificity), boot)?,
    })
}

/// Per-image (MSE, SSIM) of rectified outputs against their echo sources.
fn quality_pairs(manifest: &DatasetManifest, dir: &Path) -> Result<Vec<(f64, f64)>> {
    let todo: Vec<(PathBuf, &str)> = manifest
        .records
        .iter()
        .filter(|r| r.screen_present)
        .filter_map(|r| {
            let rect = dir.join(format!("{}.png", r.id));
            Some((rect, r.echo_source.as_deref()?)).filter(|(p, _)| p.is_file())
        })
        .collect();
    if todo.is_empty() {
        return Err(Error::InsufficientData(format!("no rectified images found in {}", dir.display())));
    }
    todo.par_iter()
        .map(|(rect_path, echo_path)| {
            let rect = ImageBuffer::load(rect_path)?.to_gray();
            let reference = ImageBuffer::load(echo_path)?.to_gray().resize(rect.width(), rect.height())?;
            Ok((mse(&rect, &reference)?, ssim(&rect, &reference)?))
        })
        .collect()
}

fn rejection_curve(path: &Path, fracs: &[f64]) -> Result<Vec<RejectionPoint>> {
    let samples = read_classified(path)?;
    fracs
        .iter()
        .map(|&f| {
            let (kept, acc) = uncertainty_reject(&samples, f)?;
            Ok(RejectionPoint { reject_frac: f, kept: kept.len(), balanced_accuracy: acc })
        })
        .collect()
}
