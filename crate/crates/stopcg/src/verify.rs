//! Self-checks for the `verify` subcommand.
//!
//! Each check re-derives one library invariant on a small instance built from
//! the given seed and reports a plain pass/fail line. The point is a fast
//! smoke test of the installed binary (changed compiler, changed BLAS, bad
//! port), not a replacement for the test suite; everything here finishes in
//! well under a second.
//!
//! Checks return `Err(String)` with a description instead of panicking, so a
//! violation prints `FAIL <name>: <detail>` and counts toward the exit code
//! while the remaining checks still run.

use std::io::Write;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::cgne::{
    interpolated_estimate, residual_sq_at, run_cgne, stop_tau, CgTrajectory, StoppingConfig,
};
use crate::errors::{
    balanced_oracle, balanced_oracle_residual_identity, error_terms_at, poly_consistency_horizon,
    prediction_error,
};
use crate::experiments::{median_mad, run_monte_carlo, ExperimentConfig, KappaRule, ProblemSpec};
use crate::noise::{draw_observation, sample_noise, NoiseModel, NoiseSpec, ObservationRun};
use crate::problem::{
    make_gravity_problem, make_polynomial_decay_problem, make_test_signal, ForwardProblem,
    SignalKind,
};
use crate::respoly::{
    brute_force_residual_poly, build_diagnostics, eval_rt, smallest_zero, ResidualPolyDiag,
};
use crate::Result;

type Check = fn(u64) -> std::result::Result<(), String>;

const CHECKS: &[(&str, Check)] = &[
    ("problem_svd_roundtrip", problem_svd_roundtrip),
    ("problem_minimum_norm_solution", problem_minimum_norm_solution),
    ("noise_deterministic_norm", noise_deterministic_norm),
    ("noise_gaussian_reproducible", noise_gaussian_reproducible),
    ("cgne_residuals_decrease", cgne_residuals_decrease),
    ("cgne_interpolation_identity", cgne_interpolation_identity),
    ("cgne_stop_exactness", cgne_stop_exactness),
    ("respoly_zero_structure", respoly_zero_structure),
    ("respoly_matches_brute_force", respoly_matches_brute_force),
    ("errors_decomposition_identity", errors_decomposition_identity),
    ("errors_term_shape", errors_term_shape),
    ("errors_balanced_oracle", errors_balanced_oracle),
    ("experiments_worker_determinism", experiments_worker_determinism),
    ("experiments_median_mad", experiments_median_mad),
];

/// Runs every check, printing one line each, and returns the failure count.
pub fn run_suite<W: Write>(seed: u64, out: &mut W) -> Result<usize> {
    let mut failures = 0usize;
    for (name, check) in CHECKS {
        match check(seed) {
            Ok(()) => writeln!(out, "ok {name}")?,
            Err(msg) => {
                failures += 1;
                writeln!(out, "FAIL {name}: {msg}")?;
            }
        }
    }
    writeln!(out, "{} checks, {failures} failure(s)", CHECKS.len())?;
    Ok(failures)
}

fn uniform(rng: &mut ChaCha12Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

fn fail(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn decay_instance(
    seed: u64,
    d: usize,
    p: f64,
    delta: f64,
) -> std::result::Result<(ForwardProblem, ObservationRun, CgTrajectory, ResidualPolyDiag), String>
{
    let coeffs = make_test_signal(SignalKind::Rough, d);
    let problem =
        make_polynomial_decay_problem(d, p, 1.0, &coeffs).map_err(|e| e.to_string())?;
    let spec = NoiseSpec::gaussian(delta, seed, 0).map_err(|e| e.to_string())?;
    let run = draw_observation(&problem, &spec).map_err(|e| e.to_string())?;
    let kappa = delta * delta * d as f64;
    let stopping = StoppingConfig::new(kappa, problem.rank()).with_extra(6);
    let traj = run_cgne(&problem, &run, &stopping);
    let diag = build_diagnostics(&traj).map_err(|e| e.to_string())?;
    Ok((problem, run, traj, diag))
}

fn problem_svd_roundtrip(seed: u64) -> std::result::Result<(), String> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x51);
    let coeffs = make_test_signal(SignalKind::Smooth, 40);
    let decay = make_polynomial_decay_problem(40, 0.6, 1.0, &coeffs).map_err(|e| e.to_string())?;
    let gravity = make_gravity_problem(32, 0.25).map_err(|e| e.to_string())?;
    for problem in [&decay, &gravity] {
        let lam = problem.singular_values();
        for w in lam.windows(2) {
            fail(w[0] >= w[1], || format!("singular values out of order: {} < {}", w[0], w[1]))?;
        }
        fail(*lam.last().unwrap() > 0.0, || "nonpositive singular value retained".into())?;
        let c: Vec<f64> = (0..problem.rank()).map(|_| uniform(&mut rng) - 0.5).collect();
        let back = problem.sig_to_svd(&problem.sig_from_svd(&c));
        let err: f64 =
            c.iter().zip(&back).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        fail(err <= 1e-12, || format!("signal coefficient roundtrip off by {err:.3e}"))?;
        let back = problem.obs_to_svd(&problem.obs_from_svd(&c));
        let err: f64 =
            c.iter().zip(&back).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        fail(err <= 1e-12, || format!("observation coefficient roundtrip off by {err:.3e}"))?;
    }
    Ok(())
}

fn problem_minimum_norm_solution(_seed: u64) -> std::result::Result<(), String> {
    let gravity = make_gravity_problem(48, 0.3).map_err(|e| e.to_string())?;
    let g = gravity.g();
    let image = gravity.apply_forward(&gravity.minimum_norm_solution());
    // A fdag reproduces g up to the energy outside the retained rank.
    let g_svd = gravity.g_coeffs();
    let retained_sq: f64 = g_svd.iter().map(|v| v * v).sum();
    let total_sq: f64 = g.iter().map(|v| v * v).sum();
    let gap: f64 = image
        .iter()
        .zip(g)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>();
    let floor = (total_sq - retained_sq).max(0.0);
    fail(gap <= floor + 1e-9 * total_sq, || {
        format!("A fdag misses g by {gap:.3e} (floor {floor:.3e})")
    })
}

fn noise_deterministic_norm(seed: u64) -> std::result::Result<(), String> {
    for (i, delta) in [0.01, 0.37, 2.5].iter().enumerate() {
        let spec = NoiseSpec::deterministic(*delta, seed, i as u64).map_err(|e| e.to_string())?;
        let xi = sample_noise(&spec, 64);
        let norm: f64 = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
        fail((norm - delta).abs() <= 1e-14 * delta, || {
            format!("bounded noise has norm {norm}, wanted exactly {delta}")
        })?;
    }
    Ok(())
}

fn noise_gaussian_reproducible(seed: u64) -> std::result::Result<(), String> {
    let spec = NoiseSpec::gaussian(0.1, seed, 3).map_err(|e| e.to_string())?;
    let a = sample_noise(&spec, 128);
    let b = sample_noise(&spec, 128);
    fail(a == b, || "same (seed, run) gave different noise".into())?;
    let other = NoiseSpec::gaussian(0.1, seed, 4).map_err(|e| e.to_string())?;
    let c = sample_noise(&other, 128);
    fail(a != c, || "different run index gave identical noise".into())
}

fn cgne_residuals_decrease(seed: u64) -> std::result::Result<(), String> {
    let (_, _, traj, _) = decay_instance(seed, 50, 0.5, 0.05)?;
    fail(traj.terminal_index() >= 2, || "trajectory too short to check".into())?;
    for k in 0..traj.terminal_index() {
        fail(traj.residual_sq[k + 1] < traj.residual_sq[k], || {
            format!(
                "residual rose from step {k}: {} -> {}",
                traj.residual_sq[k],
                traj.residual_sq[k + 1]
            )
        })?;
    }
    Ok(())
}

fn cgne_interpolation_identity(seed: u64) -> std::result::Result<(), String> {
    let (_, _, traj, _) = decay_instance(seed, 50, 0.5, 0.05)?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0xC6);
    for _ in 0..20 {
        let t = uniform(&mut rng) * traj.terminal_index() as f64;
        let (k, alpha) = (t.floor() as usize, t.fract());
        let w = (1.0 - alpha) * (1.0 - alpha);
        let direct = w * traj.residual_sq[k]
            + (1.0 - w) * traj.residual_sq[(k + 1).min(traj.terminal_index())];
        let got = residual_sq_at(&traj, t);
        fail((got - direct).abs() <= 1e-12 * traj.residual_sq[0], || {
            format!("residual interpolation at t = {t} off: {got} vs {direct}")
        })?;
        let est = interpolated_estimate(&traj, t);
        let by_hand: Vec<f64> = traj.iterates[k]
            .iter()
            .zip(&traj.iterates[(k + 1).min(traj.terminal_index())])
            .map(|(a, b)| (1.0 - alpha) * a + alpha * b)
            .collect();
        fail(est == by_hand, || format!("iterate interpolation at t = {t} mismatched"))?;
    }
    Ok(())
}

fn cgne_stop_exactness(seed: u64) -> std::result::Result<(), String> {
    let (problem, run, traj, _) = decay_instance(seed, 50, 0.5, 0.05)?;
    let _ = (problem, run);
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x7A);
    let (hi, lo) = (traj.residual_sq[0], traj.residual_sq[traj.terminal_index()]);
    for _ in 0..20 {
        let kappa = lo + uniform(&mut rng) * (hi - lo);
        let stop = stop_tau(&traj, kappa);
        fail(stop.crossed, || format!("kappa = {kappa} inside the range was not crossed"))?;
        let at = residual_sq_at(&traj, stop.t);
        fail((at - kappa).abs() <= 1e-9 * kappa.max(1e-300), || {
            format!("R^2 at tau is {at}, wanted {kappa}")
        })?;
    }
    Ok(())
}

fn respoly_zero_structure(seed: u64) -> std::result::Result<(), String> {
    let (problem, _, traj, diag) = decay_instance(seed, 40, 0.7, 0.05)?;
    let lam1_sq = problem.singular_values()[0].powi(2);
    for (k, zeros) in diag.zeros_per_k.iter().enumerate() {
        fail(zeros.len() == k, || format!("r_{k} has {} zeros", zeros.len()))?;
        for w in zeros.windows(2) {
            fail(w[0] < w[1], || format!("zeros of r_{k} not increasing"))?;
        }
        if let (Some(first), Some(last)) = (zeros.first(), zeros.last()) {
            fail(*first > 0.0, || format!("nonpositive zero {first} at step {k}"))?;
            fail(*last < lam1_sq * (1.0 + 1e-12), || {
                format!("zero {last} beyond lambda_1^2 = {lam1_sq} at step {k}")
            })?;
        }
        if k > 0 {
            // Strict interlacing holds in exact arithmetic; computed zeros
            // that have converged to the same spectral point can land a few
            // ulps out of order, hence the slack.
            let slack = 1e-9 * lam1_sq;
            let prev = &diag.zeros_per_k[k - 1];
            for i in 0..prev.len() {
                fail(zeros[i] <= prev[i] + slack && prev[i] <= zeros[i + 1] + slack, || {
                    format!("zeros of r_{} do not interlace r_{k}", k - 1)
                })?;
            }
        }
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x3E);
    for _ in 0..10 {
        let t = uniform(&mut rng) * traj.terminal_index() as f64;
        let at0 = eval_rt(&diag, t, 0.0);
        fail((at0 - 1.0).abs() <= 1e-14, || format!("r_t(0) = {at0} at t = {t}"))?;
    }
    Ok(())
}

fn respoly_matches_brute_force(seed: u64) -> std::result::Result<(), String> {
    let (problem, run, traj, diag) = decay_instance(seed, 8, 0.4, 0.05)?;
    for k in 1..=traj.terminal_index().min(4) {
        let brute = brute_force_residual_poly(&problem, &run, k).map_err(|e| e.to_string())?;
        for (a, b) in diag.zeros_per_k[k].iter().zip(&brute.roots) {
            fail((a - b).abs() <= 1e-7 * b.abs(), || {
                format!("zero mismatch at step {k}: {a} vs {b}")
            })?;
        }
        let rk = traj.residual_sq[k] - traj.residual_floor;
        fail((brute.min_value - rk).abs() <= 1e-9 * traj.residual_sq[0], || {
            format!("optimal value {} differs from residual {rk} at step {k}", brute.min_value)
        })?;
    }
    Ok(())
}

fn errors_decomposition_identity(seed: u64) -> std::result::Result<(), String> {
    let (problem, run, traj, diag) = decay_instance(seed, 50, 0.5, 0.05)?;
    let t_hi = poly_consistency_horizon(&problem, &run, &traj, &diag, 1e-11);
    fail(t_hi >= 1.0, || format!("no usable polynomial depth (horizon {t_hi})"))?;
    let y_sq: f64 = run.y_svd.iter().map(|v| v * v).sum();
    let g_sq: f64 = problem.g_coeffs().iter().map(|v| v * v).sum();
    let lam = problem.singular_values();
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0xD3);
    for _ in 0..20 {
        let t = 0.05 + uniform(&mut rng) * (t_hi - 0.05);
        let (s, a) = error_terms_at(&problem, &run, &traj, &diag, t);
        // High-frequency remainder <xi, r_t Y 1(lambda^2 >= x_1)>.
        let x1 = smallest_zero(&diag, t);
        let cross: f64 = lam
            .iter()
            .enumerate()
            .filter(|(_, l)| *l * *l >= x1)
            .map(|(i, l)| run.xi_svd[i] * eval_rt(&diag, t, l * l) * run.y_svd[i])
            .sum();
        let pred = prediction_error(&problem, &run, &traj, t);
        let diff = (pred - (a + s - 2.0 * cross)).abs();
        fail(diff <= 1e-9 * (y_sq + g_sq), || {
            format!("decomposition off by {diff:.3e} at t = {t}")
        })?;
    }
    Ok(())
}

fn errors_term_shape(seed: u64) -> std::result::Result<(), String> {
    let (problem, run, traj, diag) = decay_instance(seed, 50, 0.5, 0.05)?;
    let g_sq: f64 = problem.g_coeffs().iter().map(|v| v * v).sum();
    let xi_sq: f64 = run.xi_svd.iter().map(|v| v * v).sum();
    let (s0, a0) = error_terms_at(&problem, &run, &traj, &diag, 0.0);
    fail(s0 == 0.0, || format!("S(0) = {s0}, wanted 0"))?;
    fail((a0 - g_sq).abs() <= 1e-12 * g_sq, || format!("A(0) = {a0}, wanted ||g||^2 = {g_sq}"))?;
    let t_end = traj.terminal_index() as f64;
    let mut prev_s = s0;
    let steps = 24usize;
    for i in 1..=steps {
        let t = t_end * i as f64 / steps as f64;
        let (s, _) = error_terms_at(&problem, &run, &traj, &diag, t);
        fail(s >= prev_s - 1e-12 * xi_sq.max(1.0), || {
            format!("S decreased near t = {t}: {prev_s} -> {s}")
        })?;
        fail(s <= xi_sq * (1.0 + 1e-12), || {
            format!("S(t) = {s} exceeds ||xi||^2 = {xi_sq} at t = {t}")
        })?;
        prev_s = s;
    }
    Ok(())
}

fn errors_balanced_oracle(seed: u64) -> std::result::Result<(), String> {
    let (problem, run, traj, diag) = decay_instance(seed, 50, 0.5, 0.1)?;
    let oracle = balanced_oracle(&problem, &run, &traj, &diag);
    fail(oracle.balanced, || "trajectory ended before the balance point".into())?;
    let (s, a) = error_terms_at(&problem, &run, &traj, &diag, oracle.t);
    fail((a - s).abs() <= 1e-7 * (a + s).max(1e-300), || {
        format!("A - S = {} at the reported balance point", a - s)
    })?;
    let grid: Vec<f64> = (0..=(4 * traj.terminal_index()))
        .map(|i| i as f64 / 4.0)
        .collect();
    let worst = balanced_oracle_residual_identity(&problem, &run, &traj, &diag, &grid);
    let y_sq: f64 = run.y_svd.iter().map(|v| v * v).sum();
    fail(worst <= 1e-9 * y_sq, || {
        format!("residual-form balance identity off by {worst:.3e}")
    })
}

fn experiments_worker_determinism(seed: u64) -> std::result::Result<(), String> {
    let base = ExperimentConfig {
        problem: ProblemSpec::PolynomialDecay {
            d: 60,
            p: 0.5,
            scale: 1.0,
            signal: SignalKind::Rough,
        },
        noise_model: NoiseModel::Gaussian,
        delta: 0.05,
        kappa_rule: KappaRule::DeltaSqD,
        n_runs: 6,
        master_seed: seed,
        extra_iterations: 5,
        emergency_threshold: 1e-8,
        include_emergency_runs: true,
        workers: 1,
    };
    let one = run_monte_carlo(&base).map_err(|e| e.to_string())?;
    let two = run_monte_carlo(&ExperimentConfig { workers: 2, ..base }).map_err(|e| e.to_string())?;
    for (a, b) in one.records.iter().zip(&two.records) {
        let same = a.tau.to_bits() == b.tau.to_bits()
            && a.pred_err_tau.to_bits() == b.pred_err_tau.to_bits()
            && a.rec_err_tau.to_bits() == b.rec_err_tau.to_bits();
        fail(same, || format!("run {} differs between 1 and 2 workers", a.run_index))?;
    }
    Ok(())
}

fn experiments_median_mad(_seed: u64) -> std::result::Result<(), String> {
    let (m, d) = median_mad(&[1.0, 2.0, 3.0]).map_err(|e| e.to_string())?;
    fail(m == 2.0 && (d - 2.0 / 3.0).abs() <= 1e-15, || {
        format!("median_mad([1,2,3]) = ({m}, {d})")
    })?;
    let (m, d) = median_mad(&[4.0, 1.0, 3.0, 2.0]).map_err(|e| e.to_string())?;
    fail(m == 2.5 && d == 1.0, || format!("median_mad([4,1,3,2]) = ({m}, {d})"))?;
    fail(median_mad(&[]).is_err(), || "median of nothing did not error".into())
}
