//! Early-stopped conjugate gradients for statistical inverse problems.
//!
//! The crate runs CGNE (conjugate gradients on the normal equation
//! `A^T A f = A^T Y`) on noisy linear observations `Y = A f + xi`, records the
//! full iterate path, and exposes everything needed to study *when to stop*:
//!
//! - continuous-time iterates `f_t` obtained by linear interpolation between
//!   CG steps, together with the nonlinear interpolation of the squared
//!   residual `R_t^2`,
//! - residual-polynomial diagnostics (Ritz values, smallest zero `x_{1,t}`,
//!   modulus of convergence `|r_t'(0)|`, leading coefficients),
//! - the decomposition of the prediction error into a stochastic term `S_t`
//!   and an approximation term `A_t`, with the balanced oracle `t_b`,
//! - the discrepancy stopping rule `tau` (first `t` with `R_t^2 <= kappa`)
//!   and its deterministic-noise variant,
//! - a reproducible Monte-Carlo harness with oracle stopping indices,
//!   relative efficiencies and convergence-rate studies.
//!
//! Quick start on a synthetic problem with polynomial singular value decay:
//!
//! ```
//! use stopcg::{make_polynomial_decay_problem, make_test_signal, SignalKind};
//! use stopcg::{sample_noise, observe, NoiseSpec};
//! use stopcg::{run_cgne, stop_tau, StoppingConfig};
//!
//! let d = 200;
//! let signal = make_test_signal(SignalKind::Rough, d);
//! let problem = make_polynomial_decay_problem(d, 0.5, 1.0, &signal).unwrap();
//! let spec = NoiseSpec::gaussian(0.05, 7, 0).unwrap();
//! let run = observe(&problem, &sample_noise(&spec, d)).unwrap();
//!
//! let kappa = 0.05 * 0.05 * d as f64;
//! let traj = run_cgne(&problem, &run, &StoppingConfig::new(kappa, d));
//! let tau = stop_tau(&traj, kappa);
//! assert!(tau.crossed && tau.t > 0.0);
//! ```
//!
//! The `examples/` directory walks through each capability; the `stopcg`
//! binary wraps them behind a config-file driven CLI (`diagnose`, `simulate`,
//! `rates`, `verify`).

pub mod cgne;
pub mod cli;
pub mod errors;
pub mod experiments;
pub mod noise;
pub mod problem;
pub mod respoly;
pub mod verify;

pub(crate) mod fmtnum;

pub use cgne::{
    interpolated_estimate, residual_sq_at, run_cgne, stop_tau, stop_tau_dn, CgTrajectory,
    StopTau, StoppingConfig, Termination,
};
pub use errors::{
    balanced_oracle, balanced_oracle_residual_identity, decomposition_check, error_terms_at,
    low_freq_weights, oracle_indices, poly_consistency_horizon, prediction_error,
    reconstruction_error, showalter_estimate, signal_error, BalancedOracle, DecompositionCheck,
    ErrorCurves, OracleIndices,
};
pub use experiments::{
    fit_loglog_slope, median_mad, rate_study, run_monte_carlo, summarize, write_rate_csv,
    write_runs_csv, ExperimentConfig, KappaRule, McSummary, ProblemSpec, RateRow, RunRecord,
    SummaryStat, MAX_STUDY_DIMENSION,
};
pub use noise::{
    draw_observation, observe, sample_noise, scale_to_norm, NoiseModel, NoiseSpec,
    ObservationRun,
};
pub use problem::{
    dense_problem_from_matrix, make_gravity_problem, make_polynomial_decay_problem,
    make_test_signal, ForwardProblem, SignalKind, SourceCondition,
};
pub use respoly::{
    brute_force_residual_poly, build_diagnostics, deriv0, eval_rt, penalised_alpha,
    smallest_zero, BruteForcePoly, ResidualPolyDiag,
};

/// Errors surfaced by constructors, observation checks and file handling.
///
/// Precondition violations on pure numeric helpers (out-of-range `t`,
/// mismatched vector lengths in hot loops) panic instead; those are caller
/// bugs, not data conditions.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{0}")]
    InvalidInput(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("observation energy vanishes on the singular value block at lambda = {lambda:e}")]
    AssumptionYViolated { lambda: f64 },
    #[error("singular value decomposition did not converge")]
    SvdFailed,
    #[error("eigendecomposition did not converge for the {k}x{k} tridiagonal block")]
    EigFailed { k: usize },
    #[error("{file}:{line}: {msg}")]
    Config {
        file: String,
        line: usize,
        msg: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
