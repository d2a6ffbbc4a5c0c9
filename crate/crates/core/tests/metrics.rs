use echoscreen::metrics::{
    balanced_accuracy, bootstrap, confusion_from_predictions, detection_rates, mse, ssim, ssim_from_moments,
    ssim_kernel, uncertainty_reject, BootstrapConfig, ClassifiedSample, SSIM_WINDOW,
};
use echoscreen::phantom;
use echoscreen::ImageBuffer;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// SSIM by direct summation over every fully contained window, with the
/// 2-D Gaussian weights built from scratch.
fn brute_force_ssim(a: &ImageBuffer, b: &ImageBuffer) -> f64 {
    let n = SSIM_WINDOW;
    let half = (n / 2) as f64;
    let g: Vec<f64> = (0..n).map(|i| (-((i as f64 - half).powi(2)) / (2.0 * 1.5 * 1.5)).exp()).collect();
    let norm: f64 = g.iter().sum::<f64>().powi(2);
    let (w, h) = (a.width(), a.height());
    let mut total = 0.0;
    let mut count = 0usize;
    for y0 in 0..=h - n {
        for x0 in 0..=w - n {
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for dy in 0..n {
                for dx in 0..n {
                    let wt = g[dx] * g[dy] / norm;
                    let va = 255.0 * a.get(x0 + dx, y0 + dy, 0);
                    let vb = 255.0 * b.get(x0 + dx, y0 + dy, 0);
                    ma += wt * va;
                    mb += wt * vb;
                    saa += wt * va * va;
                    sbb += wt * vb * vb;
                    sab += wt * va * vb;
                }
            }
            total += ssim_from_moments(ma, mb, saa - ma * ma, sbb - mb * mb, sab - ma * mb);
            count += 1;
        }
    }
    total / count as f64
}

fn samples_strategy() -> impl Strategy<Value = Vec<(f64, bool)>> {
    proptest::collection::vec((0.0f64..=1.0, any::<bool>()), 1..200)
}

proptest! {
    #[test]
    fn confusion_matches_a_recount(samples in samples_strategy(), threshold in 0.0f64..=1.0) {
        let cm = confusion_from_predictions(&samples, threshold);
        let count = |truth: bool, said: bool| samples.iter().filter(|(p, t)| *t == truth && (*p >= threshold) == said).count() as u64;
        prop_assert_eq!(cm.rows(), [[count(true, true), count(true, false)], [count(false, true), count(false, false)]]);
        prop_assert_eq!(cm.total(), samples.len() as u64);
    }

    #[test]
    fn rates_are_row_fractions(tp in 0u64..500, fn_ in 0u64..500, fp in 0u64..500, tn in 0u64..500) {
        prop_assume!(tp + fn_ > 0 && fp + tn > 0);
        let r = detection_rates(&echoscreen::metrics::ConfusionMatrix::from_rows([[tp, fn_], [fp, tn]])).unwrap();
        prop_assert_eq!(r.sensitivity, tp as f64 / (tp + fn_) as f64);
        prop_assert_eq!(r.specificity, tn as f64 / (fp + tn) as f64);
    }

    #[test]
    fn rejecting_more_never_keeps_more(fracs in (0.0f64..0.9, 0.0f64..0.9), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s: Vec<ClassifiedSample> = (0..60)
            .map(|i| ClassifiedSample {
                id: format!("{i:02}"),
                true_class: (i % 3).to_string(),
                pred_class: rng.random_range(0..3).to_string(),
                max_prob: rng.random(),
            })
            .collect();
        let (lo, hi) = if fracs.0 <= fracs.1 { fracs } else { (fracs.1, fracs.0) };
        let (kept_lo, _) = uncertainty_reject(&s, lo).unwrap();
        let (kept_hi, _) = uncertainty_reject(&s, hi).unwrap();
        prop_assert!(kept_hi.len() <= kept_lo.len());
        prop_assert_eq!(kept_lo.len(), 60 - (lo * 60.0).floor() as usize);
        prop_assert!(kept_hi.iter().all(|k| kept_lo.contains(k)));
    }
}

#[test]
fn ssim_agrees_with_brute_force_windows() {
    let k = ssim_kernel();
    assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    for seed in 0..3 {
        let a = phantom::echo_frame(seed, 40, 31);
        let b = phantom::noise_image(seed + 10, 40, 31, 1).map(|v| 0.5 * v);
        let b = ImageBuffer::from_fn(40, 31, 1, |x, y, _| 0.5 * a.get(x, y, 0) + b.get(x, y, 0));
        let fast = ssim(&a, &b).unwrap();
        let slow = brute_force_ssim(&a, &b);
        assert!((fast - slow).abs() < 1e-9, "{fast} vs {slow}");
    }
}

#[test]
fn ssim_of_an_image_with_itself_and_its_inverse() {
    let a = phantom::echo_frame(5, 64, 48);
    assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    assert!(ssim(&a, &a.map(|v| 1.0 - v)).unwrap() < 0.1);
    assert!(ssim(&ImageBuffer::new(8, 8, 1), &ImageBuffer::new(8, 8, 1)).is_err());
}

#[test]
fn mse_of_a_constant_offset() {
    let a = ImageBuffer::filled(10, 10, 1, 0.2);
    let b = ImageBuffer::filled(10, 10, 1, 0.5);
    assert!((mse(&a, &b).unwrap() - 0.09).abs() < 1e-15);
}

#[test]
fn bootstrap_of_a_ramp_centres_on_its_mean() {
    let data: Vec<f64> = (0..100).map(f64::from).collect();
    let r = bootstrap("mean", &data, |x| x.iter().sum::<f64>() / x.len() as f64, &BootstrapConfig::default()).unwrap();
    assert!((45.0..=55.0).contains(&r.point), "{r:?}");
    assert!(r.ci_low < r.point && r.point < r.ci_high);
    assert_eq!((r.n_resamples, r.subsample_frac), (1000, 0.8));
}

#[test]
fn bootstrap_depends_on_the_seed_only() {
    let data: Vec<f64> = (0..50).map(|i| ((i * 7919) % 97) as f64).collect();
    let f = |x: &[f64]| x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let run = |seed| bootstrap("max", &data, f, &BootstrapConfig { seed, ..Default::default() }).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    assert_eq!(run(3), pool.install(|| run(3)));
}

#[test]
fn random_two_class_guessing_scores_one_half() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let samples: Vec<ClassifiedSample> = (0..20_000)
        .map(|i| ClassifiedSample {
            id: i.to_string(),
            // Imbalanced classes: balanced accuracy should not care.
            true_class: if rng.random::<f64>() < 0.8 { "a".into() } else { "b".into() },
            pred_class: if rng.random::<bool>() { "a".into() } else { "b".into() },
            max_prob: 0.5,
        })
        .collect();
    let acc = balanced_accuracy(&samples).unwrap();
    assert!((acc - 0.5).abs() < 0.05, "{acc}");
}
