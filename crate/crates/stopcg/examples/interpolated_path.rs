//! The continuous iterate path between integer steps.
//!
//! Linear interpolation of iterates makes the squared residual a quadratic
//! in the fraction alpha, so the discrepancy rule can stop exactly at the
//! threshold instead of overshooting by a whole step. This prints both the
//! interpolated residual curve and the exact crossing.
//!
//!     cargo run --example interpolated_path

use stopcg::{
    draw_observation, interpolated_estimate, make_polynomial_decay_problem, make_test_signal,
    residual_sq_at, run_cgne, stop_tau, NoiseSpec, SignalKind, StoppingConfig,
};

fn main() {
    let d = 400;
    let delta = 0.05;
    let coeffs = make_test_signal(SignalKind::Rough, d);
    let problem = make_polynomial_decay_problem(d, 0.5, 1.0, &coeffs).unwrap();
    let run = draw_observation(&problem, &NoiseSpec::gaussian(delta, 3, 0).unwrap()).unwrap();
    let kappa = delta * delta * d as f64;
    let traj = run_cgne(&problem, &run, &StoppingConfig::new(kappa, problem.rank()).with_extra(4));
    let stop = stop_tau(&traj, kappa);

    println!("residual^2 along the path (kappa = {kappa}):");
    println!("{:>8} {:>16}", "t", "R_t^2");
    let t_end = traj.terminal_index() as f64;
    let mut t = 0.0;
    while t <= t_end {
        let marker = if (t - stop.t).abs() < 0.25 { "  <- tau nearby" } else { "" };
        println!("{t:>8.2} {:>16.8}{marker}", residual_sq_at(&traj, t));
        t += 0.5;
    }
    println!();
    println!("tau = {:.10}", stop.t);
    println!("R^2 at tau  = {:.12}", residual_sq_at(&traj, stop.t));
    println!("target      = {kappa:.12}");

    // The interpolated estimate is the same convex combination coordinatewise.
    let k = stop.t.floor() as usize;
    let alpha = stop.t - k as f64;
    let est = interpolated_estimate(&traj, stop.t);
    let manual = (1.0 - alpha) * traj.iterates[k][0] + alpha * traj.iterates[k + 1][0];
    println!();
    println!("first coordinate at tau: {:.10} (by hand: {manual:.10})", est[0]);
}
