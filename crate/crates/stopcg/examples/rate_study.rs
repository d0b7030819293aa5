//! How the errors at the data-driven stop scale with the dimension.
//!
//! The study doubles D from 100 upward while shrinking the noise level like
//! delta ~ R D^(-2 mu p - p - 1/2), the calibration under which a source
//! condition of order mu is the right benchmark. On a log-log plot both the
//! prediction and the reconstruction error at tau should then follow power
//! laws; this fits the slopes over the asymptotic half of the steps and
//! compares them to the reference rates.
//!
//!     cargo run --release --example rate_study

use stopcg::{
    fit_loglog_slope, rate_study, ExperimentConfig, KappaRule, NoiseModel, ProblemSpec,
    SignalKind,
};

fn main() {
    let (mu, p) = (0.25, 0.5);
    let base = ExperimentConfig {
        problem: ProblemSpec::PolynomialDecay { d: 100, p, scale: 1.0, signal: SignalKind::Rough },
        noise_model: NoiseModel::Gaussian,
        delta: 1.0,
        kappa_rule: KappaRule::DeltaSqD,
        n_runs: 30,
        master_seed: 7,
        extra_iterations: 15,
        emergency_threshold: 1e-8,
        include_emergency_runs: true,
        workers: 0,
    };
    let rows = rate_study(&base, 0..=6, 1000.0, mu, p).unwrap();

    println!(
        "{:>2} {:>7} {:>12} {:>14} {:>14} {:>14}",
        "m", "D", "delta", "pred@tau", "rec@tau", "theory pred"
    );
    for r in &rows {
        println!(
            "{:>2} {:>7} {:>12.5} {:>14.5} {:>14.5} {:>14.5}",
            r.m, r.d, r.delta, r.mean_pred_tau, r.mean_rec_tau, r.theory_pred
        );
    }

    // The first steps sit in a preasymptotic bend; fit where scaling has set in.
    let tail: Vec<&_> = rows.iter().filter(|r| r.m >= 3).collect();
    let ds: Vec<f64> = tail.iter().map(|r| r.d as f64).collect();
    let pred: Vec<f64> = tail.iter().map(|r| r.mean_pred_tau).collect();
    let rec: Vec<f64> = tail.iter().map(|r| r.mean_rec_tau).collect();
    let slope_pred = -fit_loglog_slope(&ds, &pred).unwrap();
    let slope_rec = -fit_loglog_slope(&ds, &rec).unwrap();

    let theory_pred = (8.0 * mu * p + 4.0 * p) / (4.0 * mu * p + 2.0 * p + 1.0);
    let theory_rec = 8.0 * mu * p / (4.0 * mu * p + 2.0 * p + 1.0);
    println!();
    println!("prediction decay exponent:     {slope_pred:.3}  (theory {theory_pred:.3})");
    println!("reconstruction decay exponent: {slope_rec:.3}  (theory {theory_rec:.3})");
}
