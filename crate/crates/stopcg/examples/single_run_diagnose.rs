//! One observation end to end: build a problem, add noise, iterate, stop.
//!
//!     cargo run --example single_run_diagnose

use stopcg::{
    draw_observation, make_polynomial_decay_problem, make_test_signal, prediction_error,
    reconstruction_error, run_cgne, stop_tau, NoiseSpec, SignalKind, StoppingConfig,
};

fn main() {
    let d = 1000;
    let delta = 0.01;
    let coeffs = make_test_signal(SignalKind::Smooth, d);
    let problem = make_polynomial_decay_problem(d, 0.5, 1.0, &coeffs).unwrap();
    let run = draw_observation(&problem, &NoiseSpec::gaussian(delta, 7, 0).unwrap()).unwrap();

    // Discrepancy threshold at the expected noise energy delta^2 D.
    let kappa = delta * delta * d as f64;
    let stopping = StoppingConfig::new(kappa, problem.rank()).with_extra(10);
    let traj = run_cgne(&problem, &run, &stopping);
    let stop = stop_tau(&traj, kappa);

    println!("dimension        {d}");
    println!("noise level      {delta}");
    println!("kappa            {kappa:.6}");
    println!("steps recorded   {}", traj.terminal_index());
    println!("termination      {}", traj.termination);
    println!("tau              {:.4} (crossed: {})", stop.t, stop.crossed);
    println!();
    println!("{:>6} {:>14} {:>14}", "k", "residual^2", "normal res^2");
    for k in 0..=traj.terminal_index().min(12) {
        println!(
            "{k:>6} {:>14.6e} {:>14.6e}",
            traj.residual_sq[k], traj.normal_residual_sq[k]
        );
    }
    println!();
    println!(
        "prediction error at tau      {:.6}",
        prediction_error(&problem, &run, &traj, stop.t).sqrt()
    );
    println!(
        "reconstruction error at tau  {:.6}",
        reconstruction_error(&problem, &run, &traj, stop.t).sqrt()
    );
}
