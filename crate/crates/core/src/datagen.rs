//! Self-annotated synthetic dataset generation.
//!
//! Each echo frame yields two positive scenes (the same reflection-blended
//! screen warped into two different backgrounds) and two negative scenes
//! (plain backgrounds), so every split is exactly class balanced.
//! Backgrounds and reflections are only ever drawn from the split that
//! the echo frame belongs to.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::compositing::{crop_reflection, insert_screen, screen_blend, BlendParams};
use crate::error::{Error, Result};
use crate::geometry::{random_quad, Quad, QuadGenConfig};
use crate::raster::ImageBuffer;
use crate::seeds::derive_seed;

pub const GENERATOR_VERSION: &str = concat!("echoscreen ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Annotation of one generated scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub split: Split,
    pub screen_present: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corners: Option<Quad>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub echo_source: Option<String>,
    pub background_source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reflection_source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    pub seed: u64,
}

impl SampleRecord {
    /// Positives carry corners, echo source and alpha; negatives none of them.
    pub fn validate(&self, scene_w: usize, scene_h: usize) -> Result<()> {
        let has = [self.corners.is_some(), self.echo_source.is_some(), self.alpha.is_some()];
        if has.iter().any(|&h| h != self.screen_present) {
            return Err(Error::InvalidParameter(format!(
                "record `{}`: screen_present={} inconsistent with annotation fields",
                self.id, self.screen_present
            )));
        }
        if let Some(q) = &self.corners {
            q.validate()?;
            if !q.within(0.0, 0.0, scene_w as f64 - 1.0, scene_h as f64 - 1.0) {
                return Err(Error::QuadOutOfBounds { width: scene_w, height: scene_h });
            }
        }
        if let Some(a) = self.alpha {
            BlendParams::new(a)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub scene_w: usize,
    pub scene_h: usize,
    pub alpha_range: (f64, f64),
    /// Probability of an unreflected screen (`alpha = 1`).
    pub p_no_reflection: f64,
    pub quad: QuadGenConfig,
    pub master_seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            scene_w: 640,
            scene_h: 480,
            alpha_range: (0.5, 0.95),
            p_no_reflection: 0.1,
            quad: QuadGenConfig::default(),
            master_seed: 0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.alpha_range;
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return Err(Error::InvalidParameter(format!("alpha range ({lo}, {hi}) not within [0, 1]")));
        }
        if !(0.0..=1.0).contains(&self.p_no_reflection) {
            return Err(Error::InvalidParameter(format!("p_no_reflection {} outside [0, 1]", self.p_no_reflection)));
        }
        if self.scene_w == 0 || self.scene_h == 0 {
            return Err(Error::InvalidParameter("empty scene size".to_string()));
        }
        self.quad.validate()
    }
}

/// Something that can produce an image and name its provenance.
pub trait ImageSource: Sync {
    fn source_id(&self) -> String;
    fn load(&self) -> Result<ImageBuffer>;
}

impl ImageSource for PathBuf {
    fn source_id(&self) -> String {
        self.to_string_lossy().into_owned()
    }

    fn load(&self) -> Result<ImageBuffer> {
        ImageBuffer::load(self)
    }
}

/// An in-memory image with a provenance label.
#[derive(Debug, Clone)]
pub struct NamedImage {
    pub name: String,
    pub image: ImageBuffer,
}

impl ImageSource for NamedImage {
    fn source_id(&self) -> String {
        self.name.clone()
    }

    fn load(&self) -> Result<ImageBuffer> {
        Ok(self.image.clone())
    }
}

/// Identity of the sample being generated.
#[derive(Debug, Clone)]
pub struct SampleMeta {
    pub id: String,
    pub split: Split,
    pub echo_source: Option<String>,
}

const STREAM_REFLECTION: u64 = 1;
const STREAM_QUAD: u64 = 2;

/// Blends a reflection into `echo` and warps the result into two
/// distinct backgrounds from `bg_pool`. Record ids get `-a` / `-b`.
pub fn synthesize_positive<S: ImageSource>(
    echo: &ImageBuffer,
    bg_pool: &[S],
    cfg: &GenConfig,
    meta: &SampleMeta,
    sample_seed: u64,
) -> Result<Vec<(ImageBuffer, SampleRecord)>> {
    cfg.validate()?;
    if bg_pool.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "split {} needs at least 2 backgrounds, has {}",
            meta.split,
            bg_pool.len()
        )));
    }
    if echo.is_empty() {
        return Err(Error::InvalidParameter("empty echo frame".to_string()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(sample_seed);
    let alpha = if rng.random::<f64>() < cfg.p_no_reflection {
        1.0
    } else {
        let (lo, hi) = cfg.alpha_range;
        if hi > lo { rng.random_range(lo..=hi) } else { lo }
    };
    let reflection_idx = rng.random_range(0..bg_pool.len());
    let scene_idx = rand::seq::index::sample(&mut rng, bg_pool.len(), 2).into_vec();

    let screen = echo.to_rgb();
    let (blended, reflection_source) = if alpha < 1.0 {
        let src = &bg_pool[reflection_idx];
        let reflection = crop_reflection(
            &src.load()?.to_rgb(),
            screen.width(),
            screen.height(),
            derive_seed(sample_seed, STREAM_REFLECTION, 0),
        )?;
        (screen_blend(&screen, &reflection, BlendParams::new(alpha)?)?, Some(src.source_id()))
    } else {
        (screen, None)
    };

    let mut out = Vec::with_capacity(2);
    for (k, &bg_idx) in scene_idx.iter().enumerate() {
        let bg_src = &bg_pool[bg_idx];
        let bg = bg_src.load()?.to_rgb().resize(cfg.scene_w, cfg.scene_h)?;
        let quad_seed = derive_seed(sample_seed, STREAM_QUAD, k as u64);
        let quad = random_quad(quad_seed, cfg.scene_w, cfg.scene_h, &cfg.quad)?;
        let (scene, _mask) = insert_screen(&bg, &blended, &quad)?;
        let record = SampleRecord {
            id: format!("{}-{}", meta.id, ['a', 'b'][k]),
            split: meta.split,
            screen_present: true,
            corners: Some(quad),
            echo_source: meta.echo_source.clone(),
            background_source: bg_src.source_id(),
            reflection_source: reflection_source.clone(),
            alpha: Some(alpha),
            seed: sample_seed,
        };
        out.push((scene, record));
    }
    Ok(out)
}

/// A background resized to the scene size, labelled as containing no screen.
pub fn synthesize_negative<S: ImageSource>(
    bg: &S,
    cfg: &GenConfig,
    meta: &SampleMeta,
    sample_seed: u64,
) -> Result<(ImageBuffer, SampleRecord)> {
    let img = bg.load()?;
    if img.is_empty() {
        return Err(Error::InvalidParameter("empty background".to_string()));
    }
    let scene = img.to_rgb().resize(cfg.scene_w, cfg.scene_h)?;
    let record = SampleRecord {
        id: meta.id.clone(),
        split: meta.split,
        screen_present: false,
        corners: None,
        echo_source: None,
        background_source: bg.source_id(),
        reflection_source: None,
        alpha: None,
        seed: sample_seed,
    };
    Ok((scene, record))
}

/// An echo frame entry of the input index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EchoEntry {
    pub path: PathBuf,
    pub patient_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

/// A background image entry of the input index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundEntry {
    pub path: PathBuf,
    pub category: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

/// Reads a JSONL index; relative paths resolve against the index's directory.
pub fn read_index<T: DeserializeOwned + IndexPath>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut entry: T = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        let p = entry.path_mut();
        if p.is_relative() {
            *p = base.join(&*p);
        }
        out.push(entry);
    }
    Ok(out)
}

pub trait IndexPath {
    fn path_mut(&mut self) -> &mut PathBuf;
}

impl IndexPath for EchoEntry {
    fn path_mut(&mut self) -> &mut PathBuf {
        &mut self.path
    }
}

impl IndexPath for BackgroundEntry {
    fn path_mut(&mut self) -> &mut PathBuf {
        &mut self.path
    }
}

/// Patient-level split proportions for echo frames (train / val / test).
pub const PATIENT_SPLIT: [f64; 3] = [0.75, 0.18, 0.07];
/// Category-level split proportions for backgrounds: 50 / 12 / 5 of 67.
pub const CATEGORY_SPLIT: [f64; 3] = [50.0 / 67.0, 12.0 / 67.0, 5.0 / 67.0];

/// Largest-remainder apportionment of `n` items, at least one per split.
fn apportion(n: usize, props: [f64; 3]) -> Option<[usize; 3]> {
    if n < 3 {
        return None;
    }
    let raw = props.map(|p| p * n as f64);
    let mut counts = raw.map(|r| r.floor() as usize);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| (raw[b] - raw[b].floor()).total_cmp(&(raw[a] - raw[a].floor())).then(a.cmp(&b)));
    let mut left = n - counts.iter().sum::<usize>();
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    for i in 0..3 {
        while counts[i] == 0 {
            let donor = (0..3).max_by_key(|&j| counts[j]).expect("three splits");
            counts[donor] -= 1;
            counts[i] += 1;
        }
    }
    Some(counts)
}

/// Assigns whole groups (patients or categories) to splits.
///
/// Groups with an explicit split in the index keep it. The remaining groups
/// are shuffled with `seed` and apportioned by `props`.
pub fn assign_groups(
    groups: &[(String, Option<Split>)],
    props: [f64; 3],
    seed: u64,
    what: &str,
) -> Result<BTreeMap<String, Split>> {
    let mut fixed: BTreeMap<String, Split> = BTreeMap::new();
    let mut free: Vec<String> = Vec::new();
    for (key, split) in groups {
        match split {
            Some(s) => {
                if let Some(prev) = fixed.insert(key.clone(), *s) {
                    if prev != *s {
                        return Err(Error::InvalidParameter(format!("{what} `{key}` listed in both {prev} and {s}")));
                    }
                }
            }
            None => free.push(key.clone()),
        }
    }
    free.sort();
    free.dedup();
    free.retain(|k| !fixed.contains_key(k));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    free.shuffle(&mut rng);
    let counts = if fixed.is_empty() {
        apportion(free.len(), props).ok_or_else(|| {
            Error::InsufficientData(format!("{} {what} groups cannot fill three splits", free.len()))
        })?
    } else {
        let n = free.len();
        let val = ((props[1] * n as f64).round() as usize).min(n);
        let test = ((props[2] * n as f64).round() as usize).min(n - val);
        [n - val - test, val, test]
    };
    let mut out = fixed;
    let mut it = free.into_iter();
    for (split, n) in Split::ALL.iter().zip(counts) {
        for key in it.by_ref().take(n) {
            out.insert(key, *split);
        }
    }
    for split in Split::ALL {
        if !out.values().any(|s| *s == split) {
            return Err(Error::InsufficientData(format!("no {what} assigned to the {split} split")));
        }
    }
    Ok(out)
}

/// Generated dataset description. Written as `manifest.jsonl` (records)
/// plus `manifest.meta.json` (everything else).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    #[serde(skip)]
    pub records: Vec<SampleRecord>,
    pub scene_w: usize,
    pub scene_h: usize,
    pub generator_version: String,
    pub master_seed: u64,
}

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const MANIFEST_META_FILE: &str = "manifest.meta.json";

/// Positive / negative counts for one split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct SplitCounts {
    pub with_screen: usize,
    pub without_screen: usize,
}

impl SplitCounts {
    pub fn total(&self) -> usize {
        self.with_screen + self.without_screen
    }
}

impl DatasetManifest {
    pub fn counts(&self) -> BTreeMap<Split, SplitCounts> {
        let mut out: BTreeMap<Split, SplitCounts> = Split::ALL.iter().map(|s| (*s, SplitCounts::default())).collect();
        for r in &self.records {
            let c = out.entry(r.split).or_default();
            if r.screen_present {
                c.with_screen += 1;
            } else {
                c.without_screen += 1;
            }
        }
        out
    }

    /// Unique ids, per-record consistency and exact per-split balance.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for r in &self.records {
            if !seen.insert(r.id.as_str()) {
                return Err(Error::InvalidParameter(format!("duplicate id `{}`", r.id)));
            }
            r.validate(self.scene_w, self.scene_h)?;
        }
        for (split, c) in self.counts() {
            if c.with_screen != c.without_screen {
                return Err(Error::InvalidParameter(format!(
                    "split {split} unbalanced: {} with screen, {} without",
                    c.with_screen, c.without_screen
                )));
            }
        }
        Ok(())
    }

    pub fn image_path(root: &Path, record: &SampleRecord) -> PathBuf {
        root.join(record.split.as_str()).join(format!("{}.png", record.id))
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(MANIFEST_FILE);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        let meta_path = dir.join(MANIFEST_META_FILE);
        let meta = serde_json::to_string_pretty(self)?;
        std::fs::write(&meta_path, meta + "\n").map_err(|e| Error::io(&meta_path, e))
    }

    /// Reads `manifest.jsonl`; the meta sidecar is optional.
    pub fn read(manifest_path: &Path) -> Result<Self> {
        let file = File::open(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
        let mut records = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(manifest_path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
                path: manifest_path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?);
        }
        let meta_path = manifest_path.with_file_name(MANIFEST_META_FILE);
        let mut manifest = match std::fs::read_to_string(&meta_path) {
            Ok(text) => serde_json::from_str::<DatasetManifest>(&text)?,
            Err(_) => DatasetManifest {
                records: Vec::new(),
                scene_w: 0,
                scene_h: 0,
                generator_version: String::new(),
                master_seed: 0,
            },
        };
        manifest.records = records;
        Ok(manifest)
    }
}

/// Knobs of a dataset build that do not affect its content.
#[derive(Debug, Clone)]
pub struct BuildOptions {
    pub out_dir: PathBuf,
    /// Use at most this many echo frames (seeded selection).
    pub n_frames: Option<usize>,
    pub jobs: usize,
}

const STREAM_PATIENTS: u64 = 10;
const STREAM_CATEGORIES: u64 = 11;
const STREAM_FRAMES: u64 = 12;
const STREAM_POSITIVE: u64 = 13;
const STREAM_NEGATIVE: u64 = 14;

/// Builds the dataset, writing `<out>/<split>/<id>.png` images and the
/// manifest. Output is identical for any `jobs` value.
pub fn build_dataset(
    echo_index: &[EchoEntry],
    bg_index: &[BackgroundEntry],
    cfg: &GenConfig,
    opts: &BuildOptions,
) -> Result<DatasetManifest> {
    cfg.validate()?;
    if echo_index.is_empty() || bg_index.is_empty() {
        return Err(Error::InsufficientData("empty echo or background index".to_string()));
    }
    let seed = cfg.master_seed;
    let patients: Vec<(String, Option<Split>)> =
        echo_index.iter().map(|e| (e.patient_id.clone(), e.split)).collect();
    let patient_split = assign_groups(&patients, PATIENT_SPLIT, derive_seed(seed, STREAM_PATIENTS, 0), "patient")?;
    let categories: Vec<(String, Option<Split>)> =
        bg_index.iter().map(|b| (b.category.clone(), b.split)).collect();
    let category_split =
        assign_groups(&categories, CATEGORY_SPLIT, derive_seed(seed, STREAM_CATEGORIES, 0), "category")?;

    let mut pools: BTreeMap<Split, Vec<PathBuf>> = BTreeMap::new();
    for b in bg_index {
        pools.entry(category_split[&b.category]).or_default().push(b.path.clone());
    }

    let mut frames: Vec<usize> = (0..echo_index.len()).collect();
    if let Some(n) = opts.n_frames {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_FRAMES, 0));
        frames.shuffle(&mut rng);
        frames.truncate(n);
        frames.sort_unstable();
    }
    for &f in &frames {
        let split = patient_split[&echo_index[f].patient_id];
        let n_bg = pools.get(&split).map_or(0, Vec::len);
        if n_bg < 2 {
            return Err(Error::InsufficientData(format!("split {split} has {n_bg} backgrounds, need 2")));
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    let out_dir = &opts.out_dir;
    let groups: Vec<Vec<SampleRecord>> = pool.install(|| {
        frames
            .par_iter()
            .enumerate()
            .map(|(k, &f)| {
                let entry = &echo_index[f];
                let split = patient_split[&entry.patient_id];
                let bgs = &pools[&split];
                let mut records = Vec::with_capacity(4);

                let echo = ImageBuffer::load(&entry.path)?;
                let meta = SampleMeta {
                    id: format!("pos-{k:06}"),
                    split,
                    echo_source: Some(entry.path.source_id()),
                };
                let pos_seed = derive_seed(seed, STREAM_POSITIVE, k as u64);
                for (img, rec) in synthesize_positive(&echo, bgs, cfg, &meta, pos_seed)? {
                    img.save_png(DatasetManifest::image_path(out_dir, &rec))?;
                    records.push(rec);
                }
                for j in 0..2u64 {
                    let neg_seed = derive_seed(seed, STREAM_NEGATIVE, 2 * k as u64 + j);
                    let pick = ChaCha8Rng::seed_from_u64(neg_seed).random_range(0..bgs.len());
                    let meta = SampleMeta {
                        id: format!("neg-{k:06}-{}", ['a', 'b'][j as usize]),
                        split,
                        echo_source: None,
                    };
                    let (img, rec) = synthesize_negative(&bgs[pick], cfg, &meta, neg_seed)?;
                    img.save_png(DatasetManifest::image_path(out_dir, &rec))?;
                    records.push(rec);
                }
                Ok(records)
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let manifest = DatasetManifest {
        records: groups.into_iter().flatten().collect(),
        scene_w: cfg.scene_w,
        scene_h: cfg.scene_h,
        generator_version: GENERATOR_VERSION.to_string(),
        master_seed: seed,
    };
    manifest.validate()?;
    manifest.write(out_dir)?;
    Ok(manifest)
}
