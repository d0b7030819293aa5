//! A small Monte-Carlo comparison of the data-driven stop against oracles.
//!
//! For each of the three test signals this runs repeated noisy observations,
//! stops at the discrepancy time tau, and reports the median stopping index,
//! root errors at tau, and the relative efficiency against the oracle that
//! knows the truth. Dimension and run count are kept small here; the full
//! study uses D = 10000 with hundreds of runs.
//!
//!     cargo run --release --example monte_carlo_table

use stopcg::{
    run_monte_carlo, ExperimentConfig, KappaRule, NoiseModel, ProblemSpec, SignalKind,
};

fn main() {
    let delta = 0.01;
    println!(
        "{:<12} {:>8} {:>12} {:>12} {:>10} {:>10}",
        "signal", "tau", "pred@tau", "rec@tau", "eff pred", "eff rec"
    );
    for signal in [SignalKind::Supersmooth, SignalKind::Smooth, SignalKind::Rough] {
        let cfg = ExperimentConfig {
            problem: ProblemSpec::PolynomialDecay { d: 2000, p: 0.5, scale: 1.0, signal },
            noise_model: NoiseModel::Gaussian,
            delta,
            kappa_rule: KappaRule::DeltaSqD,
            n_runs: 50,
            master_seed: 7,
            extra_iterations: 15,
            emergency_threshold: 1e-8,
            include_emergency_runs: true,
            workers: 0,
        };
        let summary = run_monte_carlo(&cfg).unwrap();
        let name = match signal {
            SignalKind::Supersmooth => "supersmooth",
            SignalKind::Smooth => "smooth",
            SignalKind::Rough => "rough",
        };
        println!(
            "{name:<12} {:>8.3} {:>12.5} {:>12.4} {:>10.3} {:>10.3}",
            summary.tau.median,
            summary.pred_err_tau.median,
            summary.rec_err_tau.median,
            summary.releff_pred.median,
            summary.releff_rec.median,
        );
    }
    println!();
    println!("eff columns: oracle error divided by error at tau (1 = no loss)");
}
