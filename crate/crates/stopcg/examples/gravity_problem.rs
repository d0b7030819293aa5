//! The discretized gravity operator: a dense, severely ill-posed test case.
//!
//! Unlike the diagonal families, this operator comes as a full matrix whose
//! singular values decay exponentially, so only a handful of spectral
//! components rise above the noise and the emergency stop matters: once the
//! normal residual is at rounding level, further steps only amplify noise.
//!
//!     cargo run --example gravity_problem

use stopcg::{
    draw_observation, make_gravity_problem, prediction_error, reconstruction_error, run_cgne,
    stop_tau, NoiseSpec, StoppingConfig,
};

fn main() {
    let d = 256;
    let delta = 0.01;
    let problem = make_gravity_problem(d, 0.25).unwrap();
    println!("dimension {d}, retained rank {}", problem.rank());
    let lam = problem.singular_values();
    println!(
        "singular values: {:.3e} down to {:.3e} (ratio {:.1e})",
        lam[0],
        lam[lam.len() - 1],
        lam[0] / lam[lam.len() - 1]
    );

    let kappa = delta * delta * (d as f64 + (d as f64).sqrt());
    println!("kappa = {kappa:.6}");
    println!();
    println!(
        "{:>4} {:>10} {:>12} {:>12} {:>12}",
        "run", "tau", "termination", "pred@tau", "rec@tau"
    );
    for run_index in 0..8 {
        let spec = NoiseSpec::gaussian(delta, 7, run_index).unwrap();
        let run = draw_observation(&problem, &spec).unwrap();
        let traj = run_cgne(
            &problem,
            &run,
            &StoppingConfig::new(kappa, problem.rank())
                .with_extra(15)
                .with_emergency_threshold(1e-8),
        );
        let stop = stop_tau(&traj, kappa);
        let term = if stop.crossed { "crossed" } else { "emergency" };
        println!(
            "{run_index:>4} {:>10.4} {:>12} {:>12.5} {:>12.5}",
            stop.t,
            term,
            prediction_error(&problem, &run, &traj, stop.t).sqrt(),
            reconstruction_error(&problem, &run, &traj, stop.t).sqrt(),
        );
    }
}
