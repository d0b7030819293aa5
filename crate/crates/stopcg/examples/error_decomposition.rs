//! Splitting the prediction error into approximation and stochastic parts.
//!
//! Along the path the squared prediction error decomposes as
//! A_t + S_t - 2 <xi, r_t Y>_{high} with A_t falling from ||g||^2 and S_t
//! climbing toward ||xi||^2. The balanced oracle stops where the two curves
//! cross; the discrepancy rule at kappa = delta^2 D lands nearby without
//! seeing either curve. The polynomial route is trustworthy up to the depth
//! reported by the consistency check, so the table stops there.
//!
//!     cargo run --example error_decomposition

use stopcg::{
    balanced_oracle, build_diagnostics, draw_observation, error_terms_at,
    make_polynomial_decay_problem, make_test_signal, poly_consistency_horizon, prediction_error,
    run_cgne, stop_tau, NoiseSpec, SignalKind, StoppingConfig,
};

fn main() {
    let d = 500;
    let delta = 0.05;
    let coeffs = make_test_signal(SignalKind::Smooth, d);
    let problem = make_polynomial_decay_problem(d, 0.5, 1.0, &coeffs).unwrap();
    let run = draw_observation(&problem, &NoiseSpec::gaussian(delta, 13, 0).unwrap()).unwrap();
    let kappa = delta * delta * d as f64;
    let traj = run_cgne(&problem, &run, &StoppingConfig::new(kappa, problem.rank()).with_extra(8));
    let diag = build_diagnostics(&traj).unwrap();

    let t_hi = poly_consistency_horizon(&problem, &run, &traj, &diag, 1e-11);
    let stop = stop_tau(&traj, kappa);
    let oracle = balanced_oracle(&problem, &run, &traj, &diag);

    let g_sq: f64 = problem.g_coeffs().iter().map(|v| v * v).sum();
    let xi_sq: f64 = run.xi_svd.iter().map(|v| v * v).sum();
    println!("||g||^2 = {g_sq:.4}   ||xi||^2 = {xi_sq:.4}");
    println!("faithful polynomial depth: {t_hi}");
    println!();
    println!("{:>6} {:>12} {:>12} {:>12}", "t", "A_t", "S_t", "pred err^2");
    let steps = 16;
    for i in 0..=steps {
        let t = t_hi * i as f64 / steps as f64;
        let (s, a) = error_terms_at(&problem, &run, &traj, &diag, t);
        let pred = prediction_error(&problem, &run, &traj, t);
        println!("{t:>6.2} {a:>12.5} {s:>12.5} {pred:>12.5}");
    }
    println!();
    println!(
        "balanced oracle: t = {:.4} (balanced: {})",
        oracle.t, oracle.balanced
    );
    println!("discrepancy stop: tau = {:.4} (crossed: {})", stop.t, stop.crossed);
}
