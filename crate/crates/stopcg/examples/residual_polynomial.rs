//! Residual polynomial diagnostics: zeros, derivative at zero, and a brute
//! force cross-check.
//!
//! Each CG step k has a residual polynomial r_k with r_k(0) = 1 whose zeros
//! are the Ritz values of the normal operator. The recurrence coefficients
//! determine them through a small tridiagonal eigenproblem; on an instance
//! with few distinct singular values the same polynomial can be found by
//! directly minimizing ||p(A A^T) Y||^2 over monic-at-zero polynomials, and
//! the two must agree.
//!
//!     cargo run --example residual_polynomial

use stopcg::{
    brute_force_residual_poly, build_diagnostics, deriv0, draw_observation, eval_rt,
    make_polynomial_decay_problem, make_test_signal, run_cgne, NoiseSpec, SignalKind,
    StoppingConfig,
};

fn main() {
    let d = 9;
    let delta = 0.05;
    let coeffs = make_test_signal(SignalKind::Rough, d);
    let problem = make_polynomial_decay_problem(d, 0.4, 1.0, &coeffs).unwrap();
    let run = draw_observation(&problem, &NoiseSpec::gaussian(delta, 5, 0).unwrap()).unwrap();
    let traj = run_cgne(&problem, &run, &StoppingConfig::new(0.0, problem.rank()));
    let diag = build_diagnostics(&traj).unwrap();

    println!("squared singular values:");
    for l in problem.singular_values() {
        print!(" {:.5}", l * l);
    }
    println!("\n");

    for k in 1..=traj.terminal_index() {
        println!("step {k}: zeros of r_{k} (Ritz values)");
        print!("  recurrence: ");
        for z in &diag.zeros_per_k[k] {
            print!(" {z:.8}");
        }
        println!();
        match brute_force_residual_poly(&problem, &run, k) {
            Ok(brute) => {
                print!("  brute force:");
                for z in &brute.roots {
                    print!(" {z:.8}");
                }
                println!();
                println!(
                    "  min value {:.10e} vs residual^2 {:.10e}",
                    brute.min_value, traj.residual_sq[k]
                );
            }
            Err(e) => println!("  brute force unavailable: {e}"),
        }
        println!("  |r_{k}'(0)| = {:.6}", deriv0(&diag, k as f64));
    }

    // r_t interpolates between the integer polynomials and keeps r_t(0) = 1.
    let t = 2.5;
    println!();
    println!("r_t at t = {t}: r_t(0) = {}", eval_rt(&diag, t, 0.0));
    for x in [0.1, 0.3, 0.6] {
        println!("  r_t({x}) = {:.8}", eval_rt(&diag, t, x));
    }
}
