//! The bounded-noise guarantee: prediction error at most (1 + c) delta.
//!
//! When the noise is only known through a norm bound ||xi|| <= delta, the
//! discrepancy rule with threshold (c delta)^2 for c > 1 still controls the
//! prediction error at the stop: ||A f_tau - g|| <= (1 + c) delta on every
//! realization, not just on average. This checks the bound with c = 2
//! across many draws of worst-case-scaled noise.
//!
//!     cargo run --example deterministic_noise

use stopcg::{
    draw_observation, make_polynomial_decay_problem, make_test_signal, prediction_error,
    run_cgne, stop_tau_dn, NoiseSpec, SignalKind, StoppingConfig,
};

fn main() {
    let d = 300;
    let delta = 0.05;
    let c = 2.0;
    let coeffs = make_test_signal(SignalKind::Rough, d);
    let problem = make_polynomial_decay_problem(d, 0.5, 1.0, &coeffs).unwrap();

    let mut worst_ratio: f64 = 0.0;
    let n_runs = 40;
    println!("c = {c}, delta = {delta}, bound (1+c) delta = {}", (1.0 + c) * delta);
    println!();
    println!("{:>4} {:>10} {:>14} {:>10}", "run", "tau", "pred err", "err/bound");
    for run_index in 0..n_runs {
        let spec = NoiseSpec::deterministic(delta, 21, run_index).unwrap();
        let run = draw_observation(&problem, &spec).unwrap();
        let traj = run_cgne(
            &problem,
            &run,
            &StoppingConfig::new(c * c * delta * delta, problem.rank()).with_extra(5),
        );
        let stop = stop_tau_dn(&traj, c, delta);
        let err = prediction_error(&problem, &run, &traj, stop.t).sqrt();
        let ratio = err / ((1.0 + c) * delta);
        worst_ratio = worst_ratio.max(ratio);
        if run_index < 10 {
            println!("{run_index:>4} {:>10.4} {err:>14.6} {ratio:>10.4}", stop.t);
        }
    }
    println!("  ... ({n_runs} runs total)");
    println!();
    println!("worst err/bound ratio: {worst_ratio:.4} (must stay below 1)");
    assert!(worst_ratio <= 1.0);
}
