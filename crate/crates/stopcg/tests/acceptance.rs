//! Acceptance suite: nine end-to-end criteria, one pass/fail line each.
//!
//! Run with `cargo test --test acceptance` (or `--release` to shave a few
//! seconds off the Monte-Carlo criteria). Every tolerance is pinned next to
//! the criterion it belongs to; the process exits nonzero if any line fails.
//!
//! Identities that compare the reconstructed residual polynomial against the
//! recorded iterates are only meaningful while the two routes agree in
//! floating point, so those draws are confined to the depth certified by
//! `poly_consistency_horizon`; see that function's documentation for why the
//! routes separate.

use std::panic::{catch_unwind, AssertUnwindSafe};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use stopcg::{
    balanced_oracle, balanced_oracle_residual_identity, brute_force_residual_poly,
    build_diagnostics, deriv0, draw_observation, error_terms_at, eval_rt, fit_loglog_slope,
    low_freq_weights, make_polynomial_decay_problem, make_test_signal, poly_consistency_horizon,
    prediction_error, residual_sq_at, run_cgne, run_monte_carlo, rate_study, smallest_zero,
    stop_tau, CgTrajectory, ExperimentConfig, ForwardProblem, KappaRule, McSummary, NoiseModel,
    NoiseSpec, ObservationRun, ProblemSpec, ResidualPolyDiag, SignalKind, StoppingConfig,
};

type CriterionResult = Result<String, String>;

struct Inst {
    problem: ForwardProblem,
    run: ObservationRun,
    traj: CgTrajectory,
    diag: ResidualPolyDiag,
    /// Depth up to which polynomial-route identities are certified (1e-11).
    horizon: f64,
}

impl Inst {
    fn y_sq(&self) -> f64 {
        self.run.y_svd.iter().map(|v| v * v).sum()
    }

    fn g_sq(&self) -> f64 {
        self.problem.g_coeffs().iter().map(|v| v * v).sum()
    }
}

fn build_inst(problem: ForwardProblem, delta: f64, seed: u64, cfg: &StoppingConfig) -> Inst {
    let run = draw_observation(&problem, &NoiseSpec::gaussian(delta, seed, 0).unwrap()).unwrap();
    let traj = run_cgne(&problem, &run, cfg);
    let diag = build_diagnostics(&traj).unwrap();
    let horizon = poly_consistency_horizon(&problem, &run, &traj, &diag, 1e-11);
    Inst { problem, run, traj, diag, horizon }
}

fn rough_inst(d: usize, p: f64, delta: f64, seed: u64, cfg: &StoppingConfig) -> Inst {
    let signal = make_test_signal(SignalKind::Rough, d);
    let problem = make_polynomial_decay_problem(d, p, 1.0, &signal).unwrap();
    build_inst(problem, delta, seed, cfg)
}

/// Random nonzero coefficients bounded away from zero so every spectral
/// block of the noiseless observation carries energy.
fn random_signal(d: usize, rng: &mut StdRng) -> Vec<f64> {
    (0..d)
        .map(|_| {
            let mag = 0.1 + 0.9 * rng.gen::<f64>();
            if rng.gen::<bool>() {
                mag
            } else {
                -mag
            }
        })
        .collect()
}

/// High-frequency remainder `<xi, r_t Y 1(lambda^2 >= x_{1,t})>`; zero at the
/// start of the path where no zero exists yet.
fn high_freq_cross(inst: &Inst, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let x1 = smallest_zero(&inst.diag, t);
    inst.problem
        .singular_values()
        .iter()
        .enumerate()
        .filter(|(_, l)| *l * *l >= x1)
        .map(|(i, l)| inst.run.xi_svd[i] * eval_rt(&inst.diag, t, l * l) * inst.run.y_svd[i])
        .sum()
}

// ---------------------------------------------------------------------------
// 1. Exact prediction-error decomposition along the path

const C1_REL_TOL: f64 = 1e-9;

fn criterion_1() -> CriterionResult {
    let mut worst: f64 = 0.0;
    for i in 0..20u64 {
        let p = [0.3, 0.5, 1.0][(i % 3) as usize];
        let delta = [0.01, 0.1][(i % 2) as usize];
        let mut rng = StdRng::seed_from_u64(1000 + i);
        let coeffs = random_signal(50, &mut rng);
        let problem = make_polynomial_decay_problem(50, p, 1.0, &coeffs)
            .map_err(|e| format!("instance {i}: {e}"))?;
        let kappa = delta * delta * 50.0;
        let cfg = StoppingConfig::new(kappa, 50).with_extra(8);
        let inst = build_inst(problem, delta, 1000 + i, &cfg);
        if inst.horizon < 1.0 {
            return Err(format!("instance {i}: no certified depth (horizon {})", inst.horizon));
        }
        let scale = inst.y_sq() + inst.g_sq();
        for _ in 0..50 {
            let t = rng.gen_range(0.0..=inst.horizon);
            let (s, a) = error_terms_at(&inst.problem, &inst.run, &inst.traj, &inst.diag, t);
            let cross = high_freq_cross(&inst, t);
            let pred = prediction_error(&inst.problem, &inst.run, &inst.traj, t);
            let diff = (pred - (a + s - 2.0 * cross)).abs();
            worst = worst.max(diff / scale);
            if diff > C1_REL_TOL * scale {
                return Err(format!(
                    "instance {i} (p = {p}, delta = {delta}): |pred - (A+S-2cross)| = {diff:.3e} \
                     at t = {t:.3}, above {C1_REL_TOL:.0e} * scale"
                ));
            }
        }
    }
    Ok(format!("20 problems x 50 indices, worst relative gap {worst:.2e}"))
}

// ---------------------------------------------------------------------------
// 2. Recurrence zeros and optimum against a brute-force polynomial solve

const C2_ROOT_REL_TOL: f64 = 1e-7;
const C2_VALUE_REL_TOL: f64 = 1e-9;
// The Hankel moment systems behind the brute-force solve lose roughly a digit
// of root accuracy per degree; degree 5 still resolves roots to 3e-8 on this
// family while degree 6 is already near 1e-6, so deeper comparisons say
// nothing at the tolerance above.
const C2_MAX_DEGREE: usize = 5;

fn criterion_2() -> CriterionResult {
    let mut depths = 0usize;
    for d in [6usize, 8, 10] {
        for p in [0.3, 0.5] {
            for seed in [1u64, 2] {
                let cfg = StoppingConfig::new(0.0, d);
                let inst = rough_inst(d, p, 0.05, seed, &cfg);
                for k in 1..=inst.traj.terminal_index().min(C2_MAX_DEGREE) {
                    let rk = inst.traj.residual_sq[k];
                    let brute = brute_force_residual_poly(&inst.problem, &inst.run, k)
                        .map_err(|e| format!("d = {d}, k = {k}: {e}"))?;
                    for (z, root) in inst.diag.zeros_per_k[k].iter().zip(&brute.roots) {
                        if (z - root).abs() > C2_ROOT_REL_TOL * root {
                            return Err(format!(
                                "d = {d}, p = {p}, seed {seed}, step {k}: zero {z} vs root {root}"
                            ));
                        }
                    }
                    if (brute.min_value - rk).abs() > C2_VALUE_REL_TOL * rk {
                        return Err(format!(
                            "d = {d}, p = {p}, seed {seed}, step {k}: optimum {} vs residual {rk}",
                            brute.min_value
                        ));
                    }
                    depths += 1;
                }
            }
        }
    }
    Ok(format!("12 instances, {depths} depths matched to {C2_ROOT_REL_TOL:.0e}/{C2_VALUE_REL_TOL:.0e}"))
}

// ---------------------------------------------------------------------------
// 3. Invariant suite: ten path and polynomial properties, each over at least
//    one hundred randomized draws

const C3_MIN_DRAWS: usize = 100;

fn deep_pool() -> Vec<Inst> {
    (0..10u64)
        .map(|i| {
            let p = [0.3, 0.5][(i % 2) as usize];
            let delta = [0.05, 0.1][((i / 2) % 2) as usize];
            let kappa = delta * delta * 50.0;
            rough_inst(50, p, delta, 301 + i, &StoppingConfig::new(kappa, 50).with_extra(8))
        })
        .collect()
}

fn shallow_pool() -> Vec<Inst> {
    (0..6u64)
        .map(|i| rough_inst(20, 0.3, 0.05, 401 + i, &StoppingConfig::new(0.0, 10)))
        .collect()
}

fn residual_monotonicity(pool: &[Inst]) -> Result<usize, String> {
    let mut draws = 0;
    for (n, inst) in pool.iter().enumerate() {
        for k in 0..inst.traj.terminal_index() {
            if inst.traj.residual_sq[k + 1] >= inst.traj.residual_sq[k] {
                return Err(format!("instance {n}: residual rose at step {k}"));
            }
            if inst.traj.normal_residual_sq[k] <= 0.0 {
                return Err(format!("instance {n}: nonpositive normal residual at {k}"));
            }
            draws += 1;
        }
    }
    Ok(draws)
}

fn orthogonality_and_conjugacy(pool: &[Inst]) -> Result<usize, String> {
    let mut draws = 0;
    for (n, inst) in pool.iter().enumerate() {
        let lam = inst.problem.singular_values();
        let y_sq = inst.y_sq();
        let lam1_sq = lam[0] * lam[0];
        let k_max = (inst.horizon as usize).min(inst.traj.terminal_index());
        for k in 1..=k_max {
            let rk: Vec<f64> = lam
                .iter()
                .zip(&inst.run.y_svd)
                .map(|(l, y)| eval_rt(&inst.diag, k as f64, l * l) * y)
                .collect();
            // r_k(AA^T)Y _|_ (AA^T)^j Y for 1 <= j <= k.
            for j in 1..=k {
                let dot: f64 = rk
                    .iter()
                    .zip(lam.iter().zip(&inst.run.y_svd))
                    .map(|(r, (l, y))| r * (l * l).powi(j as i32) * y)
                    .sum();
                if dot.abs() > 1e-8 * y_sq * lam1_sq.powi(j as i32) {
                    return Err(format!("instance {n}: orthogonality broke at k = {k}, j = {j}"));
                }
                draws += 1;
            }
            // Residual vectors of different depths are AA^T-conjugate.
            for l_idx in 0..k {
                let dot: f64 = lam
                    .iter()
                    .zip(&inst.run.y_svd)
                    .map(|(l, y)| {
                        eval_rt(&inst.diag, k as f64, l * l)
                            * eval_rt(&inst.diag, l_idx as f64, l * l)
                            * l
                            * l
                            * y
                            * y
                    })
                    .sum();
                if dot.abs() > 1e-8 * y_sq * lam1_sq {
                    return Err(format!("instance {n}: conjugacy broke at k = {k}, l = {l_idx}"));
                }
                draws += 1;
            }
        }
    }
    Ok(draws)
}

fn interlacing_and_dominance(pools: &[&[Inst]]) -> Result<(usize, usize), String> {
    let (mut interlace_draws, mut dominance_draws) = (0, 0);
    for pool in pools {
        for (n, inst) in pool.iter().enumerate() {
            let lam = inst.problem.singular_values();
            let k_max = (inst.horizon as usize).min(inst.traj.terminal_index());
            for k in 1..=k_max {
                let zeros = &inst.diag.zeros_per_k[k];
                // Sorted ascending: x_{k+1-i,k} is the i-th largest zero and
                // must sit below the i-th largest squared singular value.
                for i in 1..=k {
                    let li_sq = lam[i - 1] * lam[i - 1];
                    if zeros[k - i] > li_sq * (1.0 + 1e-10) {
                        return Err(format!(
                            "instance {n}: zero {} above lambda_{i}^2 at k = {k}",
                            zeros[k - i]
                        ));
                    }
                }
                dominance_draws += 1;
                if k < k_max {
                    // Strict interlacing holds in exact arithmetic; computed
                    // zeros that have converged to the same spectral point can
                    // land a few ulps out of order, hence the slack.
                    let slack = 1e-9 * lam[0] * lam[0];
                    let next = &inst.diag.zeros_per_k[k + 1];
                    for i in 0..k {
                        if next[i] > zeros[i] + slack || zeros[i] > next[i + 1] + slack {
                            return Err(format!("instance {n}: interlacing broke at k = {k}"));
                        }
                    }
                    interlace_draws += 1;
                }
            }
        }
    }
    Ok((interlace_draws, dominance_draws))
}

fn pointwise_bounds(pool: &[Inst], rng: &mut StdRng) -> Result<usize, String> {
    let mut draws = 0;
    for (n, inst) in pool.iter().enumerate() {
        for _ in 0..12 {
            let t = rng.gen_range(0.01..=inst.horizon.max(0.02));
            let x1 = smallest_zero(&inst.diag, t);
            let x = rng.gen_range(0.0..=x1);
            let val = eval_rt(&inst.diag, t, x);
            let slope = deriv0(&inst.diag, t);
            if val < (1.0 - slope * x).max(0.0) - 1e-10 {
                return Err(format!("instance {n}: lower bound broke at t = {t:.3}, x = {x:.4}"));
            }
            if val > (-slope * x).exp() + 1e-10 {
                return Err(format!("instance {n}: upper bound broke at t = {t:.3}, x = {x:.4}"));
            }
            draws += 1;
        }
    }
    Ok(draws)
}

fn low_frequency_domination(pool: &[Inst], rng: &mut StdRng) -> Result<usize, String> {
    let mut draws = 0;
    for (n, inst) in pool.iter().enumerate() {
        let lam = inst.problem.singular_values();
        let y_sq = inst.y_sq();
        for _ in 0..12 {
            let t = rng.gen_range(0.01..=inst.horizon.max(0.02));
            let x1 = smallest_zero(&inst.diag, t);
            let mut squared = 0.0;
            let mut low_linear = 0.0;
            for (l, y) in lam.iter().zip(&inst.run.y_svd) {
                let x = l * l;
                let r = eval_rt(&inst.diag, t, x);
                squared += r * r * y * y;
                if x < x1 {
                    low_linear += r * y * y;
                }
            }
            if squared > low_linear + 1e-10 * y_sq {
                return Err(format!(
                    "instance {n}: ||r_t Y||^2 = {squared} above low-frequency mass {low_linear} \
                     at t = {t:.3}"
                ));
            }
            draws += 1;
        }
    }
    Ok(draws)
}

fn sharpened_chain(pools: &[&[Inst]]) -> Result<usize, String> {
    let mut draws = 0;
    for pool in pools {
        for (n, inst) in pool.iter().enumerate() {
            let lam = inst.problem.singular_values();
            let y_sq = inst.y_sq();
            let k_max = (inst.horizon as usize).min(inst.traj.terminal_index());
            for k in 1..=k_max {
                let x1 = inst.diag.zeros_per_k[k][0];
                let (mut squared, mut phi, mut low_linear) = (0.0, 0.0, 0.0);
                for (l, y) in lam.iter().zip(&inst.run.y_svd) {
                    let x = l * l;
                    let r = eval_rt(&inst.diag, k as f64, x);
                    squared += r * r * y * y;
                    if x < x1 {
                        phi += x1 / (x1 - x) * r * r * y * y;
                        low_linear += r * y * y;
                    }
                }
                if squared > phi + 1e-12 * y_sq || phi > low_linear + 1e-10 * y_sq {
                    return Err(format!("instance {n}: sharpened chain broke at k = {k}"));
                }
                draws += 1;
            }
        }
    }
    Ok(draws)
}

fn error_term_shape(pool: &[Inst]) -> Result<usize, String> {
    let mut draws = 0;
    for (n, inst) in pool.iter().enumerate() {
        let g_sq = inst.g_sq();
        let xi_sq: f64 = inst.run.xi_svd.iter().map(|v| v * v).sum();
        let (s0, a0) = error_terms_at(&inst.problem, &inst.run, &inst.traj, &inst.diag, 0.0);
        if s0 != 0.0 || (a0 - g_sq).abs() > 1e-12 * g_sq {
            return Err(format!("instance {n}: endpoint values S(0) = {s0}, A(0) = {a0}"));
        }
        draws += 1;
        let mut prev = 0.0;
        for i in 1..=40 {
            let t = inst.horizon * i as f64 / 40.0;
            let (s, _) = error_terms_at(&inst.problem, &inst.run, &inst.traj, &inst.diag, t);
            if s < prev - 1e-10 {
                return Err(format!("instance {n}: S decreased near t = {t:.3}"));
            }
            if s > xi_sq * (1.0 + 1e-10) {
                return Err(format!("instance {n}: S = {s} above ||xi||^2 = {xi_sq}"));
            }
            prev = s;
            draws += 1;
        }
    }
    // Full-depth endpoints: S climbs to the noise energy and A drains to zero.
    for seed in [3u64, 4, 5] {
        let cfg = StoppingConfig::new(0.0, 12).with_emergency_threshold(0.0);
        let inst = rough_inst(12, 0.5, 0.05, seed, &cfg);
        let xi_sq: f64 = inst.run.xi_svd.iter().map(|v| v * v).sum();
        let t_end = inst.traj.terminal_index() as f64;
        let (sd, ad) = error_terms_at(&inst.problem, &inst.run, &inst.traj, &inst.diag, t_end);
        if (sd - xi_sq).abs() > 1e-10 * xi_sq || ad.abs() > 1e-10 * (inst.g_sq() + xi_sq) {
            return Err(format!("seed {seed}: depth endpoints S = {sd}, A = {ad}"));
        }
        draws += 1;
    }
    Ok(draws)
}

fn low_frequency_signal_bound(pool: &[Inst]) -> Result<usize, String> {
    let mut draws = 0;
    for (n, inst) in pool.iter().enumerate() {
        let g = inst.problem.g_coeffs();
        let g_sq = inst.g_sq();
        for i in 0..=15 {
            let t = inst.horizon * i as f64 / 15.0;
            let rho = low_freq_weights(&inst.problem, &inst.diag, t);
            let full: f64 = rho.iter().zip(g).map(|(r, gi)| (r * gi) * (r * gi)).sum();
            let (s, a) = error_terms_at(&inst.problem, &inst.run, &inst.traj, &inst.diag, t);
            if full > 6.0 * s + 2.0 * a + 1e-10 * g_sq {
                return Err(format!(
                    "instance {n}: ||r_(t,<) g||^2 = {full} above 6S + 2A = {} at t = {t:.3}",
                    6.0 * s + 2.0 * a
                ));
            }
            draws += 1;
        }
    }
    Ok(draws)
}

fn balance_identity(pool: &[Inst]) -> Result<usize, String> {
    let mut draws = 0;
    for (n, inst) in pool.iter().enumerate() {
        let grid: Vec<f64> = (0..=20).map(|i| inst.horizon * i as f64 / 20.0).collect();
        let worst = balanced_oracle_residual_identity(
            &inst.problem,
            &inst.run,
            &inst.traj,
            &inst.diag,
            &grid,
        );
        let scale = inst.y_sq() + inst.g_sq();
        if worst > 1e-9 * scale {
            return Err(format!("instance {n}: balance identity off by {worst:.3e}"));
        }
        draws += grid.len();
        // The oracle lands where the two error terms actually meet.
        let oracle = balanced_oracle(&inst.problem, &inst.run, &inst.traj, &inst.diag);
        if oracle.balanced {
            let (s, a) =
                error_terms_at(&inst.problem, &inst.run, &inst.traj, &inst.diag, oracle.t);
            if (a - s).abs() > 1e-8 * (a + s + 1e-300) {
                return Err(format!("instance {n}: A != S at the balance point"));
            }
            draws += 1;
        }
    }
    Ok(draws)
}

fn criterion_3() -> CriterionResult {
    let deep = deep_pool();
    let shallow = shallow_pool();
    let mut rng = StdRng::seed_from_u64(0x3333);

    let mono = residual_monotonicity(&deep)?;
    let ortho = orthogonality_and_conjugacy(&shallow)?;
    let (interlace, dominance) = interlacing_and_dominance(&[&deep, &shallow])?;
    let pointwise = pointwise_bounds(&deep, &mut rng)?;
    let low_freq = low_frequency_domination(&deep, &mut rng)?;
    let chain = sharpened_chain(&[&deep, &shallow])?;
    let shape = error_term_shape(&deep)?;
    let signal_bound = low_frequency_signal_bound(&deep)?;
    let balance = balance_identity(&deep)?;

    let counts = [
        ("monotonicity", mono),
        ("orthogonality", ortho),
        ("interlacing", interlace),
        ("dominance", dominance),
        ("pointwise", pointwise),
        ("low-freq", low_freq),
        ("chain", chain),
        ("S/A shape", shape),
        ("6S+2A", signal_bound),
        ("balance", balance),
    ];
    for (name, n) in counts {
        if n < C3_MIN_DRAWS {
            return Err(format!("only {n} draws for {name} (need {C3_MIN_DRAWS})"));
        }
    }
    let detail: Vec<String> = counts.iter().map(|(n, c)| format!("{n} {c}")).collect();
    Ok(format!("draws: {}", detail.join(", ")))
}

// ---------------------------------------------------------------------------
// 4. The stopped residual hits the threshold exactly

const C4_REL_TOL: f64 = 1e-9;

fn criterion_4() -> CriterionResult {
    let mut draws = 0;
    let mut worst: f64 = 0.0;
    for i in 0..10u64 {
        let p = [0.3, 0.5, 1.0][(i % 3) as usize];
        let inst = rough_inst(60, p, 0.05, 500 + i, &StoppingConfig::new(0.0, 60));
        let hi = inst.traj.residual_sq[0];
        let lo = inst.traj.residual_sq[inst.traj.terminal_index()].max(1e-300);
        let mut rng = StdRng::seed_from_u64(600 + i);
        for _ in 0..20 {
            // Log-uniform over the whole recorded residual range.
            let u = rng.gen::<f64>();
            let kappa = lo.powf(1.0 - u) * hi.powf(u);
            let stop = stop_tau(&inst.traj, kappa);
            if !stop.crossed {
                return Err(format!("kappa = {kappa:.3e} within range was not crossed"));
            }
            let at = residual_sq_at(&inst.traj, stop.t);
            let rel = (at - kappa).abs() / kappa;
            worst = worst.max(rel);
            if rel > C4_REL_TOL {
                return Err(format!(
                    "R^2 at tau = {at:.12e} vs kappa = {kappa:.12e} (relative {rel:.2e})"
                ));
            }
            draws += 1;
        }
    }
    Ok(format!("{draws} thresholds, worst relative gap {worst:.2e}"))
}

// ---------------------------------------------------------------------------
// 5./6. Monte-Carlo study on the three reference signals

const TABLE_DIM: usize = 10_000;
const TABLE_DELTA: f64 = 0.01;
const TABLE_RUNS: usize = 200;
const TABLE_SEED: u64 = 7;

// Reference medians at D = 10000, delta = 0.01, kappa = delta^2 D for the
// supersmooth, smooth and rough signals, with the acceptance bands.
const C5_TAU_REF: [f64; 3] = [5.07, 11.45, 14.15];
const C5_TAU_BAND: f64 = 0.20;
const C5_PRED_REF: [f64; 3] = [0.18, 0.41, 0.67];
const C5_PRED_BAND: f64 = 0.25;
const C5_REC_REF: [f64; 3] = [0.87, 6.01, 22.69];
const C5_REC_BAND: f64 = 0.15;
const C6_EFFICIENCY_FLOOR: f64 = 0.5;

fn table_study() -> Result<Vec<(SignalKind, McSummary)>, String> {
    [SignalKind::Supersmooth, SignalKind::Smooth, SignalKind::Rough]
        .into_iter()
        .map(|signal| {
            let cfg = ExperimentConfig {
                problem: ProblemSpec::PolynomialDecay {
                    d: TABLE_DIM,
                    p: 0.5,
                    scale: 1.0,
                    signal,
                },
                noise_model: NoiseModel::Gaussian,
                delta: TABLE_DELTA,
                kappa_rule: KappaRule::DeltaSqD,
                n_runs: TABLE_RUNS,
                master_seed: TABLE_SEED,
                extra_iterations: 15,
                emergency_threshold: 1e-8,
                include_emergency_runs: true,
                workers: 0,
            };
            run_monte_carlo(&cfg)
                .map(|s| (signal, s))
                .map_err(|e| format!("{signal:?}: {e}"))
        })
        .collect()
}

fn within(value: f64, reference: f64, band: f64) -> bool {
    (value - reference).abs() <= band * reference
}

fn criterion_5(table: &[(SignalKind, McSummary)]) -> CriterionResult {
    let mut shown = Vec::new();
    for (i, (signal, summary)) in table.iter().enumerate() {
        let tau = summary.tau.median;
        let pred = summary.pred_err_tau.median;
        let rec = summary.rec_err_tau.median;
        if !within(tau, C5_TAU_REF[i], C5_TAU_BAND) {
            return Err(format!(
                "{signal:?}: median tau {tau:.3} outside {:.2} +- {:.0}%",
                C5_TAU_REF[i],
                100.0 * C5_TAU_BAND
            ));
        }
        if !within(pred, C5_PRED_REF[i], C5_PRED_BAND) {
            return Err(format!(
                "{signal:?}: median prediction error {pred:.4} outside {:.2} +- {:.0}%",
                C5_PRED_REF[i],
                100.0 * C5_PRED_BAND
            ));
        }
        if !within(rec, C5_REC_REF[i], C5_REC_BAND) {
            return Err(format!(
                "{signal:?}: median reconstruction error {rec:.3} outside {:.2} +- {:.0}%",
                C5_REC_REF[i],
                100.0 * C5_REC_BAND
            ));
        }
        shown.push(format!("{tau:.2}/{pred:.3}/{rec:.2}"));
    }
    Ok(format!("tau/pred/rec medians: {}", shown.join("  ")))
}

fn criterion_6(table: &[(SignalKind, McSummary)]) -> CriterionResult {
    let mut shown = Vec::new();
    for (signal, summary) in &table[1..] {
        let (ep, er) = (summary.releff_pred.median, summary.releff_rec.median);
        if ep < C6_EFFICIENCY_FLOOR || er < C6_EFFICIENCY_FLOOR {
            return Err(format!(
                "{signal:?}: median efficiencies {ep:.3}/{er:.3} below {C6_EFFICIENCY_FLOOR}"
            ));
        }
        shown.push(format!("{ep:.2}/{er:.2}"));
    }
    Ok(format!("pred/rec efficiency medians: {}", shown.join("  ")))
}

// ---------------------------------------------------------------------------
// 7. Error-at-the-stop scaling along the dimension/noise schedule

const C7_RUNS: usize = 100;
const C7_SEED: u64 = 99;
// Reference exponents of the mean squared errors as powers of delta, from the
// rate formulas (8 mu p + 4p)/(4 mu p + 2p + 1) and 8 mu p/(4 mu p + 2p + 1)
// at mu = 1/4, p = 1/2.
const C7_PRED_SLOPE: f64 = 1.2;
const C7_PRED_TOL: f64 = 0.15;
const C7_REC_SLOPE: f64 = 0.4;
const C7_REC_TOL: f64 = 0.2;
// The first dimension steps sit in a preasymptotic bend (the path is only a
// few iterations long); the slope is fitted on the asymptotic tail.
const C7_FIT_FROM: usize = 4;

fn criterion_7() -> CriterionResult {
    let (mu, p) = (0.25, 0.5);
    let base = ExperimentConfig {
        problem: ProblemSpec::PolynomialDecay { d: 100, p, scale: 1.0, signal: SignalKind::Rough },
        noise_model: NoiseModel::Gaussian,
        delta: 1.0,
        kappa_rule: KappaRule::DeltaSqD,
        n_runs: C7_RUNS,
        master_seed: C7_SEED,
        extra_iterations: 15,
        emergency_threshold: 1e-8,
        include_emergency_runs: true,
        workers: 0,
    };
    let rows = rate_study(&base, 2..=8, 1000.0, mu, p).map_err(|e| e.to_string())?;
    let tail: Vec<_> = rows.iter().filter(|r| r.m >= C7_FIT_FROM).collect();
    let deltas: Vec<f64> = tail.iter().map(|r| r.delta).collect();
    let pred: Vec<f64> = tail.iter().map(|r| r.mean_pred_tau).collect();
    let rec: Vec<f64> = tail.iter().map(|r| r.mean_rec_tau).collect();
    let slope_pred = fit_loglog_slope(&deltas, &pred).map_err(|e| e.to_string())?;
    let slope_rec = fit_loglog_slope(&deltas, &rec).map_err(|e| e.to_string())?;
    if (slope_pred - C7_PRED_SLOPE).abs() > C7_PRED_TOL {
        return Err(format!(
            "prediction slope {slope_pred:.3} outside {C7_PRED_SLOPE} +- {C7_PRED_TOL}"
        ));
    }
    if (slope_rec - C7_REC_SLOPE).abs() > C7_REC_TOL {
        return Err(format!(
            "reconstruction slope {slope_rec:.3} outside {C7_REC_SLOPE} +- {C7_REC_TOL}"
        ));
    }
    Ok(format!(
        "slopes vs delta: prediction {slope_pred:.3} (ref {C7_PRED_SLOPE}), \
         reconstruction {slope_rec:.3} (ref {C7_REC_SLOPE})"
    ))
}

// ---------------------------------------------------------------------------
// 8. Bounded-noise guarantee at the discrepancy stop

const C8_C: f64 = 2.0;

fn criterion_8() -> CriterionResult {
    let mut checked = 0usize;
    let mut worst: f64 = 0.0;
    for (d, delta, signal) in [
        (200usize, 0.01, SignalKind::Rough),
        (200, 0.05, SignalKind::Smooth),
        (400, 0.02, SignalKind::Supersmooth),
    ] {
        let cfg = ExperimentConfig {
            problem: ProblemSpec::PolynomialDecay { d, p: 0.5, scale: 1.0, signal },
            noise_model: NoiseModel::Deterministic,
            delta,
            kappa_rule: KappaRule::DnCSquared(C8_C),
            n_runs: 25,
            master_seed: 7,
            extra_iterations: 5,
            emergency_threshold: 1e-8,
            include_emergency_runs: true,
            workers: 0,
        };
        let summary = run_monte_carlo(&cfg).map_err(|e| e.to_string())?;
        let bound = (1.0 + C8_C) * delta;
        for record in &summary.records {
            let ratio = record.pred_err_tau / bound;
            worst = worst.max(ratio);
            if record.pred_err_tau > bound * (1.0 + 1e-12) {
                return Err(format!(
                    "run {} (D = {d}, delta = {delta}): prediction error {} above (1+c) delta = {bound}",
                    record.run_index, record.pred_err_tau
                ));
            }
            checked += 1;
        }
    }
    Ok(format!("{checked} runs, worst error/bound ratio {worst:.3}"))
}

// ---------------------------------------------------------------------------
// 9. Dense gravity operator smoke test

const C9_DIM: usize = 1024;
const C9_RUNS: usize = 50;

fn criterion_9() -> CriterionResult {
    let cfg = ExperimentConfig {
        problem: ProblemSpec::Gravity { d: C9_DIM, depth: 0.25 },
        noise_model: NoiseModel::Gaussian,
        delta: 0.01,
        kappa_rule: KappaRule::DeltaSqDPlusSqrtD,
        n_runs: C9_RUNS,
        master_seed: 7,
        extra_iterations: 15,
        emergency_threshold: 1e-8,
        include_emergency_runs: true,
        workers: 0,
    };
    let summary = run_monte_carlo(&cfg).map_err(|e| e.to_string())?;
    for record in &summary.records {
        for (name, eff) in [("prediction", record.releff_pred), ("reconstruction", record.releff_rec)] {
            if !(0.0..=1.0).contains(&eff) {
                return Err(format!(
                    "run {}: {name} efficiency {eff} outside [0, 1]",
                    record.run_index
                ));
            }
        }
    }
    if !summary.tau.median.is_finite() {
        return Err(format!("median stopping index is {}", summary.tau.median));
    }
    Ok(format!(
        "{C9_RUNS} runs, median tau {:.2}, emergency-stop fraction {:.2}",
        summary.tau.median, summary.emergency_fraction
    ))
}

// ---------------------------------------------------------------------------

fn main() {
    let mut failures = 0usize;
    let mut report = |number: usize, name: &str, result: CriterionResult| match result {
        Ok(detail) => println!("pass criterion {number} ({name}): {detail}"),
        Err(detail) => {
            failures += 1;
            println!("FAIL criterion {number} ({name}): {detail}");
        }
    };
    let guarded = |f: fn() -> CriterionResult| {
        catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .map(String::as_str)
                .or_else(|| e.downcast_ref::<&str>().copied())
                .unwrap_or("panicked");
            Err(format!("panicked: {msg}"))
        })
    };

    report(1, "error decomposition", guarded(criterion_1));
    report(2, "zeros match brute force", guarded(criterion_2));
    report(3, "invariant suite", guarded(criterion_3));
    report(4, "stop exactness", guarded(criterion_4));

    let table = catch_unwind(table_study).unwrap_or_else(|_| Err("table study panicked".into()));
    match &table {
        Ok(table) => {
            report(5, "reference medians", criterion_5(table));
            report(6, "efficiency floor", criterion_6(table));
        }
        Err(e) => {
            report(5, "reference medians", Err(e.clone()));
            report(6, "efficiency floor", Err(e.clone()));
        }
    }

    report(7, "rate slopes", guarded(criterion_7));
    report(8, "bounded-noise guarantee", guarded(criterion_8));
    report(9, "gravity smoke test", guarded(criterion_9));

    println!("{} of 9 criteria passed", 9 - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
