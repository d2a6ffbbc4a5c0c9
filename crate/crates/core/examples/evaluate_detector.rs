//! Detection rates, bootstrap confidence intervals and uncertainty
//! rejection on simulated detector outputs.
//!
//! `cargo run --release --example evaluate_detector`

use echoscreen::metrics::{
    bootstrap, confusion_from_predictions, detection_rates, uncertainty_reject, BootstrapConfig, ClassifiedSample,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> echoscreen::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);

    // A detector that is right about 98% of the time.
    let outputs: Vec<(f64, bool)> = (0..2000)
        .map(|i| {
            let present = i % 2 == 0;
            let correct = rng.random::<f64>() < 0.98;
            let p = rng.random_range(0.55..1.0);
            (if present == correct { p } else { 1.0 - p }, present)
        })
        .collect();
    let cm = confusion_from_predictions(&outputs, 0.5);
    let rates = detection_rates(&cm)?;
    println!("confusion [[TP, FN], [FP, TN]] = {:?}", cm.rows());
    println!("sensitivity {:.3}  specificity {:.3}", rates.sensitivity, rates.specificity);

    let cfg = BootstrapConfig::default();
    let sens = bootstrap(
        "sensitivity",
        &outputs,
        |xs| detection_rates(&confusion_from_predictions(xs, 0.5)).map_or(f64::NAN, |r| r.sensitivity),
        &cfg,
    )?;
    println!(
        "bootstrap sensitivity {:.3} ({:.3}, {:.3}) over {} subsamples of {:.0}%",
        sens.point,
        sens.ci_low,
        sens.ci_high,
        sens.n_resamples,
        100.0 * sens.subsample_frac
    );

    // A view classifier whose errors concentrate at low confidence.
    let views = ["a2c", "a4c", "plax", "psax"];
    let samples: Vec<ClassifiedSample> = (0..400)
        .map(|i| {
            let conf: f64 = rng.random_range(0.3..1.0);
            let truth = views[i % 4];
            let wrong = rng.random::<f64>() > conf;
            ClassifiedSample {
                id: format!("clip{i:03}"),
                true_class: truth.to_string(),
                pred_class: if wrong { views[(i + 1) % 4] } else { truth }.to_string(),
                max_prob: conf,
            }
        })
        .collect();
    for frac in [0.0, 0.2, 0.4] {
        let (kept, acc) = uncertainty_reject(&samples, frac)?;
        println!("reject {:>3.0}%: balanced accuracy {acc:.3} on {} clips", 100.0 * frac, kept.len());
    }
    Ok(())
}
