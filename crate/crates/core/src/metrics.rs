//! Evaluation metrics: corner error, detection rates, image similarity,
//! uncertainty-based rejection and subsampling confidence intervals.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{mean_corner_distance, Quad};
use crate::raster::ImageBuffer;
use crate::seeds::derive_seed;

/// Mean Euclidean distance of the four order-matched corners, in pixels.
pub fn corner_error_px(pred: &Quad, reference: &Quad) -> f64 {
    mean_corner_distance(pred, reference)
}

/// Screen detection counts, laid out as `[[TP, FN], [FP, TN]]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub fp: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn from_rows(rows: [[u64; 2]; 2]) -> Self {
        Self { tp: rows[0][0], fn_: rows[0][1], fp: rows[1][0], tn: rows[1][1] }
    }

    pub fn rows(&self) -> [[u64; 2]; 2] {
        [[self.tp, self.fn_], [self.fp, self.tn]]
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fn_ + self.fp + self.tn
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetectionRates {
    pub sensitivity: f64,
    pub specificity: f64,
    pub balanced_accuracy: f64,
}

pub fn detection_rates(cm: &ConfusionMatrix) -> Result<DetectionRates> {
    if cm.tp + cm.fn_ == 0 {
        return Err(Error::EmptyClass("positive".to_string()));
    }
    if cm.tn + cm.fp == 0 {
        return Err(Error::EmptyClass("negative".to_string()));
    }
    let sensitivity = cm.tp as f64 / (cm.tp + cm.fn_) as f64;
    let specificity = cm.tn as f64 / (cm.tn + cm.fp) as f64;
    Ok(DetectionRates { sensitivity, specificity, balanced_accuracy: 0.5 * (sensitivity + specificity) })
}

/// Predicted positive iff `screen_prob >= threshold`.
pub fn confusion_from_predictions(samples: &[(f64, bool)], threshold: f64) -> ConfusionMatrix {
    let mut cm = ConfusionMatrix::default();
    for &(prob, label) in samples {
        match (prob >= threshold, label) {
            (true, true) => cm.tp += 1,
            (false, true) => cm.fn_ += 1,
            (true, false) => cm.fp += 1,
            (false, false) => cm.tn += 1,
        }
    }
    cm
}

fn check_same_shape(a: &ImageBuffer, b: &ImageBuffer) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", a.dims(), b.dims())));
    }
    Ok(())
}

/// Mean squared error on `[0, 1]` intensities.
pub fn mse(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    check_same_shape(a, b)?;
    if a.is_empty() {
        return Err(Error::EmptyInput);
    }
    let sum: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum();
    Ok(sum / a.data().len() as f64)
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
pub const SSIM_RANGE: f64 = 255.0;

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
pub fn ssim_kernel() -> [f64; SSIM_WINDOW] {
    let r = (SSIM_WINDOW / 2) as f64;
    let mut k: [f64; SSIM_WINDOW] =
        std::array::from_fn(|i| (-(i as f64 - r).powi(2) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp());
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Per-window SSIM from local moments, on the 0..255 scale.
#[inline]
pub fn ssim_from_moments(mu_a: f64, mu_b: f64, var_a: f64, var_b: f64, cov: f64) -> f64 {
    let c1 = (SSIM_K1 * SSIM_RANGE).powi(2);
    let c2 = (SSIM_K2 * SSIM_RANGE).powi(2);
    ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2))
}

/// Mean SSIM over all fully contained 11x11 Gaussian windows.
///
/// Inputs are single-channel images with `[0, 1]` intensities; they are
/// compared on the 8-bit scale (`L = 255`).
pub fn ssim(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    check_same_shape(a, b)?;
    if a.channels() != 1 {
        return Err(Error::ShapeMismatch(format!("ssim needs grayscale input, got {} channels", a.channels())));
    }
    let (w, h) = (a.width(), a.height());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::ImageSmallerThanWindow { width: w, height: h, window: SSIM_WINDOW });
    }
    let k = ssim_kernel();
    let xa: Vec<f64> = a.data().iter().map(|v| v * SSIM_RANGE).collect();
    let xb: Vec<f64> = b.data().iter().map(|v| v * SSIM_RANGE).collect();
    let (ow, oh) = (w - SSIM_WINDOW + 1, h - SSIM_WINDOW + 1);

    // Horizontal pass for the five moment images, then vertical.
    let mut horiz = vec![[0.0f64; 5]; ow * h];
    for y in 0..h {
        let row = y * w;
        for x in 0..ow {
            let mut acc = [0.0; 5];
            for (t, kt) in k.iter().enumerate() {
                let (p, q) = (xa[row + x + t], xb[row + x + t]);
                acc[0] += kt * p;
                acc[1] += kt * q;
                acc[2] += kt * p * p;
                acc[3] += kt * q * q;
                acc[4] += kt * p * q;
            }
            horiz[y * ow + x] = acc;
        }
    }
    let total: f64 = (0..oh)
        .into_par_iter()
        .map(|y| {
            let mut row_sum = 0.0;
            for x in 0..ow {
                let mut m = [0.0; 5];
                for (t, kt) in k.iter().enumerate() {
                    let hv = &horiz[(y + t) * ow + x];
                    for (mi, hi) in m.iter_mut().zip(hv) {
                        *mi += kt * hi;
                    }
                }
                let var_a = m[2] - m[0] * m[0];
                let var_b = m[3] - m[1] * m[1];
                let cov = m[4] - m[0] * m[1];
                row_sum += ssim_from_moments(m[0], m[1], var_a, var_b, cov);
            }
            row_sum
        })
        .sum();
    Ok(total / (ow * oh) as f64)
}

/// Bootstrap protocol: how many subsamples, how large, and the seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub n_resamples: usize,
    pub frac: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self { n_resamples: 1000, frac: 0.8, seed: 0 }
    }
}

/// A statistic's median over subsamples with its 2.5 / 97.5 percentiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metric_name: String,
    pub point: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_resamples: usize,
    pub subsample_frac: f64,
    pub seed: u64,
}

/// Linear-interpolation percentile of sorted data, `q` in `[0, 1]`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = q * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (rank - lo as f64)
}

/// Repeatedly evaluates `statistic` on random subsets of `ceil(frac N)`
/// items drawn without replacement.
///
/// Resample `i` uses its own seed derived from `cfg.seed`, so the report
/// does not depend on how the work is scheduled.
pub fn bootstrap<T, F>(metric_name: &str, data: &[T], statistic: F, cfg: &BootstrapConfig) -> Result<EvalReport>
where
    T: Clone + Sync,
    F: Fn(&[T]) -> f64 + Sync,
{
    if data.is_empty() || cfg.n_resamples == 0 {
        return Err(Error::EmptyInput);
    }
    if !(cfg.frac > 0.0 && cfg.frac <= 1.0) {
        return Err(Error::InvalidParameter(format!("subsample fraction {} outside (0, 1]", cfg.frac)));
    }
    let n = data.len();
    let k = ((cfg.frac * n as f64).ceil() as usize).clamp(1, n);
    let mut stats: Vec<f64> = (0..cfg.n_resamples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0xB007, i as u64));
            let mut idx = rand::seq::index::sample(&mut rng, n, k).into_vec();
            idx.sort_unstable();
            let subset: Vec<T> = idx.into_iter().map(|j| data[j].clone()).collect();
            statistic(&subset)
        })
        .collect();
    if let Some(i) = stats.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFiniteStatistic(i));
    }
    stats.sort_by(f64::total_cmp);
    Ok(EvalReport {
        metric_name: metric_name.to_string(),
        point: percentile(&stats, 0.5),
        ci_low: percentile(&stats, 0.025),
        ci_high: percentile(&stats, 0.975),
        n_resamples: cfg.n_resamples,
        subsample_frac: cfg.frac,
        seed: cfg.seed,
    })
}

fn label<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<String, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Label {
        Text(String),
        Int(i64),
    }
    Ok(match Label::deserialize(d)? {
        Label::Text(s) => s,
        Label::Int(i) => i.to_string(),
    })
}

/// One view-classifier output. Labels may be strings or integers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifiedSample {
    pub id: String,
    #[serde(deserialize_with = "label")]
    pub true_class: String,
    #[serde(deserialize_with = "label")]
    pub pred_class: String,
    pub max_prob: f64,
}

/// Mean of per-class recalls over the classes present in `true_class`.
pub fn balanced_accuracy(samples: &[ClassifiedSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut per_class: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for s in samples {
        let e = per_class.entry(&s.true_class).or_default();
        e.1 += 1;
        if s.pred_class == s.true_class {
            e.0 += 1;
        }
    }
    let recalls: f64 = per_class.values().map(|&(hit, n)| hit as f64 / n as f64).sum();
    Ok(recalls / per_class.len() as f64)
}

/// Drops the `floor(reject_frac N)` samples with the lowest maximum class
/// probability (ties by id) and scores the rest.
pub fn uncertainty_reject(samples: &[ClassifiedSample], reject_frac: f64) -> Result<(Vec<ClassifiedSample>, f64)> {
    if samples.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(0.0..1.0).contains(&reject_frac) {
        return Err(Error::InvalidParameter(format!("reject fraction {reject_frac} outside [0, 1)")));
    }
    if let Some(s) = samples.iter().find(|s| !(0.0..=1.0).contains(&s.max_prob)) {
        return Err(Error::InvalidParameter(format!("max_prob {} of `{}` outside [0, 1]", s.max_prob, s.id)));
    }
    let n_drop = (reject_frac * samples.len() as f64).floor() as usize;
    let mut order: Vec<&ClassifiedSample> = samples.iter().collect();
    order.sort_by(|a, b| a.max_prob.total_cmp(&b.max_prob).then_with(|| a.id.cmp(&b.id)));
    let dropped: std::collections::HashSet<&str> = order[..n_drop].iter().map(|s| s.id.as_str()).collect();
    let kept: Vec<ClassifiedSample> = samples.iter().filter(|s| !dropped.contains(s.id.as_str())).cloned().collect();
    if kept.is_empty() {
        return Err(Error::AllRejected);
    }
    let acc = balanced_accuracy(&kept)?;
    Ok((kept, acc))
}

/// Reads `{id, true_class, pred_class, max_prob}` lines.
pub fn read_classified(path: impl AsRef<Path>) -> Result<Vec<ClassifiedSample>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let s: ClassifiedSample = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if !(0.0..=1.0).contains(&s.max_prob) {
            return Err(Error::InvariantViolation {
                path: path.to_path_buf(),
                line: i + 1,
                field: "max_prob".into(),
                message: format!("{} outside [0, 1]", s.max_prob),
            });
        }
        out.push(s);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point2;
    use crate::phantom;

    #[test]
    fn corner_error_cases() {
        let q = Quad::rect(5.0, 5.0, 50.0, 40.0);
        assert_eq!(corner_error_px(&q, &q), 0.0);
        let down = Quad::new(q.corners.map(|p| Point2::new(p.x, p.y + 2.0)));
        assert!((corner_error_px(&down, &q) - 2.0).abs() < 1e-12);
        let mut one = q;
        one.corners[3].x += 4.0;
        assert!((corner_error_px(&one, &q) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn synthetic_table_column() {
        let r = detection_rates(&ConfusionMatrix::from_rows([[2427, 21], [5, 2443]])).unwrap();
        assert_eq!(format!("{:.3}", r.sensitivity), "0.991");
        assert_eq!(format!("{:.3}", r.specificity), "0.998");
        assert!((r.sensitivity - 2427.0 / 2448.0).abs() < 1e-15);
    }

    #[test]
    fn real_table_column() {
        let r = detection_rates(&ConfusionMatrix::from_rows([[96, 4], [0, 100]])).unwrap();
        assert!((r.sensitivity - 0.96).abs() < 1e-15);
        assert_eq!(r.specificity, 1.0);
        assert!((r.balanced_accuracy - 0.98).abs() < 1e-15);
    }

    #[test]
    fn perfect_and_empty() {
        let r = detection_rates(&ConfusionMatrix::from_rows([[9, 0], [0, 9]])).unwrap();
        assert_eq!((r.sensitivity, r.specificity, r.balanced_accuracy), (1.0, 1.0, 1.0));
        assert!(matches!(detection_rates(&ConfusionMatrix::from_rows([[0, 0], [1, 1]])), Err(Error::EmptyClass(_))));
        assert!(matches!(detection_rates(&ConfusionMatrix::from_rows([[1, 1], [0, 0]])), Err(Error::EmptyClass(_))));
    }

    #[test]
    fn confusion_threshold_boundary() {
        let all = vec![(1.0, true); 5];
        assert_eq!(confusion_from_predictions(&all, 0.5).rows(), [[5, 0], [0, 0]]);
        let cm = confusion_from_predictions(&[(0.5, false), (0.4999, true)], 0.5);
        assert_eq!(cm.rows(), [[0, 1], [1, 0]]);
    }

    #[test]
    fn confusion_json_uses_fn() {
        let s = serde_json::to_string(&ConfusionMatrix::from_rows([[1, 2], [3, 4]])).unwrap();
        assert_eq!(s, r#"{"tp":1,"fn":2,"fp":3,"tn":4}"#);
    }

    #[test]
    fn mse_cases() {
        let a = phantom::noise_image(1, 20, 10, 1);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        let lo = ImageBuffer::filled(8, 8, 1, 0.3);
        let hi = ImageBuffer::filled(8, 8, 1, 0.4);
        assert!((mse(&lo, &hi).unwrap() - 0.01).abs() < 1e-12);
        let b = phantom::noise_image(2, 20, 10, 1);
        assert_eq!(mse(&a, &b).unwrap(), mse(&b, &a).unwrap());
        assert!(matches!(mse(&a, &lo), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn ssim_identity_and_symmetry() {
        let a = phantom::echo_frame(1, 64, 48);
        let b = phantom::echo_frame(2, 64, 48);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-9);
        assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn ssim_errors() {
        let small = ImageBuffer::new(10, 20, 1);
        assert!(matches!(ssim(&small, &small), Err(Error::ImageSmallerThanWindow { .. })));
        let rgb = ImageBuffer::new(20, 20, 3);
        assert!(ssim(&rgb, &rgb).is_err());
        assert!(ssim(&ImageBuffer::new(20, 20, 1), &ImageBuffer::new(21, 20, 1)).is_err());
    }

    #[test]
    fn kernel_is_normalized() {
        let k = ssim_kernel();
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(k[0], k[10]);
    }

    #[test]
    fn bootstrap_constant_and_deterministic() {
        let data = vec![3.25; 50];
        let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
        let r = bootstrap("mean", &data, mean, &BootstrapConfig::default()).unwrap();
        assert_eq!((r.point, r.ci_low, r.ci_high), (3.25, 3.25, 3.25));
        assert_eq!((r.n_resamples, r.subsample_frac), (1000, 0.8));

        let ramp: Vec<f64> = (0..100).map(f64::from).collect();
        let cfg = BootstrapConfig { seed: 11, ..Default::default() };
        let a = bootstrap("mean", &ramp, mean, &cfg).unwrap();
        let b = bootstrap("mean", &ramp, mean, &cfg).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert!(a.ci_low <= a.point && a.point <= a.ci_high);
    }

    #[test]
    fn bootstrap_full_fraction_has_zero_width() {
        let ramp: Vec<f64> = (0..37).map(f64::from).collect();
        let cfg = BootstrapConfig { frac: 1.0, n_resamples: 50, seed: 3 };
        let r = bootstrap("sum", &ramp, |xs| xs.iter().sum(), &cfg).unwrap();
        assert_eq!(r.ci_low, r.ci_high);
    }

    #[test]
    fn bootstrap_errors() {
        let empty: Vec<f64> = vec![];
        assert!(matches!(bootstrap("m", &empty, |_| 0.0, &BootstrapConfig::default()), Err(Error::EmptyInput)));
        let cfg = BootstrapConfig { frac: 0.0, ..Default::default() };
        assert!(bootstrap("m", &[1.0], |_| 0.0, &cfg).is_err());
        assert!(matches!(
            bootstrap("m", &[1.0], |_| f64::NAN, &BootstrapConfig::default()),
            Err(Error::NonFiniteStatistic(0))
        ));
    }

    #[test]
    fn percentile_interpolates() {
        let xs = [0.0, 10.0, 20.0, 30.0, 40.0];
        assert_eq!(percentile(&xs, 0.5), 20.0);
        assert_eq!(percentile(&xs, 0.025), 1.0);
        assert_eq!(percentile(&xs, 0.975), 39.0);
    }

    fn sample(id: &str, t: &str, p: &str, prob: f64) -> ClassifiedSample {
        ClassifiedSample { id: id.into(), true_class: t.into(), pred_class: p.into(), max_prob: prob }
    }

    #[test]
    fn rejection_zero_is_identity() {
        let s = vec![sample("a", "A4C", "A4C", 0.9), sample("b", "PLAX", "A4C", 0.6), sample("c", "PLAX", "PLAX", 0.7)];
        let (kept, acc) = uncertainty_reject(&s, 0.0).unwrap();
        assert_eq!(kept, s);
        assert!((acc - 0.75).abs() < 1e-15);
    }

    #[test]
    fn rejection_ties_break_by_id() {
        let s = vec![sample("b", "x", "y", 0.5), sample("a", "x", "x", 0.5), sample("c", "x", "x", 0.9)];
        let (kept, _) = uncertainty_reject(&s, 0.34).unwrap();
        let ids: Vec<&str> = kept.iter().map(|k| k.id.as_str()).collect();
        assert_eq!(ids, ["b", "c"]);
    }

    #[test]
    fn rejection_errors() {
        assert!(matches!(uncertainty_reject(&[], 0.2), Err(Error::EmptyInput)));
        let s = vec![sample("a", "x", "x", 0.5)];
        assert!(uncertainty_reject(&s, 1.0).is_err());
        assert!(uncertainty_reject(&s, 0.99).is_ok());
    }

    #[test]
    fn integer_labels_parse() {
        let s: ClassifiedSample = serde_json::from_str(r#"{"id":"f1","true_class":3,"pred_class":"3","max_prob":0.4}"#).unwrap();
        assert_eq!(s.true_class, s.pred_class);
    }
}
