//! The CGNE iteration engine: runs conjugate gradients on the normal equation
//! `A^T A f = A^T Y`, records the full trajectory, and exposes the
//! continuous-time interpolation together with the discrepancy stopping rule.
//!
//! The recurrence is carried out in the spectral coordinates of the operator
//! (the problem hands us its singular system anyway), where every matrix
//! application is diagonal. For dense problems the observation component
//! orthogonal to the retained singular directions can never be fitted; its
//! energy enters `residual_sq` as a constant floor so that the recorded
//! values equal the ambient `||Y - A f_k||^2`.

use std::fmt;
use std::io::{self, Write};

use crate::fmtnum::g17;
use crate::noise::ObservationRun;
use crate::problem::ForwardProblem;

/// Stopping protocol for one CGNE run.
///
/// `kappa` is the squared-residual threshold of the discrepancy rule.
/// `emergency_threshold` guards against the division-by-zero breakdown once
/// the normal residual `||A^T(Y - A f_k)||^2` collapses. `max_index` caps the
/// number of steps; it is clamped to the operator rank internally since CG
/// cannot usefully continue past it. `extra_after_crossing` keeps the
/// iteration alive past the first residual crossing of `kappa` so that error
/// curves and oracle indices can be evaluated beyond the stopping time; with
/// `None` the run halts at the crossing like the plain estimator would.
#[derive(Debug, Clone, Copy)]
pub struct StoppingConfig {
    pub kappa: f64,
    pub emergency_threshold: f64,
    pub max_index: usize,
    pub extra_after_crossing: Option<usize>,
}

impl StoppingConfig {
    pub fn new(kappa: f64, max_index: usize) -> Self {
        assert!(kappa >= 0.0, "need kappa >= 0, got {kappa}");
        Self { kappa, emergency_threshold: 1e-8, max_index, extra_after_crossing: None }
    }

    pub fn with_extra(mut self, extra: usize) -> Self {
        self.extra_after_crossing = Some(extra);
        self
    }

    pub fn with_emergency_threshold(mut self, threshold: f64) -> Self {
        assert!(threshold >= 0.0, "need threshold >= 0, got {threshold}");
        self.emergency_threshold = threshold;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// The step budget (or the post-crossing horizon) was exhausted.
    MaxIndexReached,
    /// The normal residual fell below the emergency threshold, or the step
    /// size computation broke down; the trajectory ends at the last sound
    /// iterate.
    EmergencyStop,
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Termination::MaxIndexReached => write!(f, "max_index_reached"),
            Termination::EmergencyStop => write!(f, "emergency_stop"),
        }
    }
}

/// Everything one CGNE run produces.
///
/// All lists are indexed by the step number `k = 0..=T` where
/// `T = terminal_index()`; `cg_alphas[k]` and `cg_betas[k]` belong to the
/// step from `f_k` to `f_{k+1}` and have length `T`. Iterates are stored in
/// the signal space (length `dim_sig` of the problem), `residual_sq[k]` is
/// the ambient `||Y - A f_k||^2`, and `normal_residual_sq[k]` is
/// `||A^T (Y - A f_k)||^2`.
#[derive(Debug, Clone)]
pub struct CgTrajectory {
    pub iterates: Vec<Vec<f64>>,
    pub residual_sq: Vec<f64>,
    pub cg_alphas: Vec<f64>,
    pub cg_betas: Vec<f64>,
    pub normal_residual_sq: Vec<f64>,
    pub termination: Termination,
    /// Number of distinct singular values: the largest index at which the
    /// residual polynomial family is well defined (CG converges there).
    pub d_distinct: usize,
    /// Observation energy outside the range of the retained operator,
    /// `||Y||^2 - ||Y_range||^2`. Zero for diagonal problems; for dense ones
    /// it is the part of `residual_sq` no iterate can remove.
    pub residual_floor: f64,
}

impl CgTrajectory {
    /// Index `T` of the last recorded iterate.
    pub fn terminal_index(&self) -> usize {
        self.iterates.len() - 1
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Runs CGNE from `f_0 = 0` on one observation.
///
/// The iteration stops at the first of: the post-crossing horizon (first
/// `R_k^2 <= kappa` plus `extra_after_crossing` more steps), the step budget
/// `min(max_index, rank)`, the emergency threshold on the normal residual,
/// or a step-size breakdown (converted to an emergency stop at the previous
/// iterate). Panics if the observation does not belong to the problem.
pub fn run_cgne(
    problem: &ForwardProblem,
    run: &ObservationRun,
    cfg: &StoppingConfig,
) -> CgTrajectory {
    let lam = problem.singular_values();
    let n = lam.len();
    assert_eq!(
        run.y_svd.len(),
        n,
        "observation has {} spectral coordinates, problem has rank {}",
        run.y_svd.len(),
        n
    );

    let floor = run.residual_floor();
    let max_index = cfg.max_index.min(n);

    let mut x = vec![0.0; n];
    let mut r = run.y_svd.clone();
    let mut s: Vec<f64> = lam.iter().zip(&r).map(|(l, ri)| l * ri).collect();
    let mut p = s.clone();
    let mut gamma = dot(&s, &s);

    let mut iterates = vec![problem.sig_from_svd(&x)];
    let mut residual_sq = vec![dot(&r, &r) + floor];
    let mut normal_residual_sq = vec![gamma];
    let mut cg_alphas: Vec<f64> = Vec::new();
    let mut cg_betas: Vec<f64> = Vec::new();

    let extra = cfg.extra_after_crossing.unwrap_or(0);
    let mut budget = max_index;
    let mut crossed = residual_sq[0] <= cfg.kappa;
    if crossed {
        budget = budget.min(extra);
    }

    let mut termination = Termination::MaxIndexReached;
    let mut k = 0;
    while k < budget {
        if gamma < cfg.emergency_threshold {
            termination = Termination::EmergencyStop;
            break;
        }
        // q = A p is diagonal in spectral coordinates; only its norm and the
        // residual update need it
        let qq: f64 = lam.iter().zip(&p).map(|(l, pi)| (l * pi) * (l * pi)).sum();
        let alpha = gamma / qq;
        if !(qq > 0.0) || !alpha.is_finite() {
            termination = Termination::EmergencyStop;
            break;
        }
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * lam[i] * p[i];
            s[i] = lam[i] * r[i];
        }
        let gamma_next = dot(&s, &s);
        let beta = gamma_next / gamma;
        for i in 0..n {
            p[i] = s[i] + beta * p[i];
        }
        gamma = gamma_next;
        k += 1;

        cg_alphas.push(alpha);
        cg_betas.push(beta);
        iterates.push(problem.sig_from_svd(&x));
        let rk2 = dot(&r, &r) + floor;
        residual_sq.push(rk2);
        normal_residual_sq.push(gamma);

        if !crossed && rk2 <= cfg.kappa {
            crossed = true;
            budget = budget.min(k + extra);
        }
    }

    CgTrajectory {
        iterates,
        residual_sq,
        cg_alphas,
        cg_betas,
        normal_residual_sq,
        termination,
        d_distinct: problem.distinct_count(),
        residual_floor: floor,
    }
}

fn split_index(traj: &CgTrajectory, t: f64) -> (usize, f64) {
    let tt = traj.terminal_index() as f64;
    assert!(
        t.is_finite() && t >= 0.0 && t <= tt,
        "interpolation time {t} outside the recorded range [0, {tt}]"
    );
    let k = (t.floor() as usize).min(traj.terminal_index());
    (k, t - k as f64)
}

/// The interpolated estimator `f_t = (1-alpha) f_k + alpha f_{k+1}` for
/// `t = k + alpha`, in signal space. Integer `t` returns the stored iterate.
pub fn interpolated_estimate(traj: &CgTrajectory, t: f64) -> Vec<f64> {
    let (k, alpha) = split_index(traj, t);
    if alpha == 0.0 {
        return traj.iterates[k].clone();
    }
    traj.iterates[k]
        .iter()
        .zip(&traj.iterates[k + 1])
        .map(|(a, b)| (1.0 - alpha) * a + alpha * b)
        .collect()
}

/// Squared residual of the interpolated estimator.
///
/// The linear blend of iterates has exactly
/// `R_t^2 = (1-alpha)^2 R_k^2 + (1-(1-alpha)^2) R_{k+1}^2`: successive CG
/// residuals satisfy `<r_k, r_{k+1}> = R_{k+1}^2`, which removes the cross
/// term of the naive quadratic expansion.
pub fn residual_sq_at(traj: &CgTrajectory, t: f64) -> f64 {
    let (k, alpha) = split_index(traj, t);
    if alpha == 0.0 {
        return traj.residual_sq[k];
    }
    let w = (1.0 - alpha) * (1.0 - alpha);
    w * traj.residual_sq[k] + (1.0 - w) * traj.residual_sq[k + 1]
}

/// Result of the discrepancy rule: the continuous stopping time and whether
/// the residual actually crossed the threshold. When the trajectory ended
/// (emergency stop, exhausted budget) with all residuals above `kappa`, the
/// rule falls back to the terminal index and reports `crossed = false`.
#[derive(Debug, Clone, Copy)]
pub struct StopTau {
    pub t: f64,
    pub crossed: bool,
}

/// First `t` with `R_t^2 <= kappa`, interpolated between steps.
///
/// On the interval `(m-1, m]` containing the crossing, inverting the residual
/// interpolation gives `alpha = 1 - sqrt((kappa - R_m^2)/(R_{m-1}^2 - R_m^2))`
/// and thus `residual_sq_at(tau) == kappa` up to rounding. `kappa >= R_0^2`
/// yields `tau = 0`.
pub fn stop_tau(traj: &CgTrajectory, kappa: f64) -> StopTau {
    let rs = &traj.residual_sq;
    match rs.iter().position(|&v| v <= kappa) {
        None => StopTau { t: traj.terminal_index() as f64, crossed: false },
        Some(0) => StopTau { t: 0.0, crossed: true },
        Some(m) => {
            let (rk, rm) = (rs[m - 1], rs[m]);
            // rk > kappa >= rm, so the ratio lies in [0, 1); the clamp only
            // absorbs rounding at the boundaries
            let u = ((kappa - rm) / (rk - rm)).clamp(0.0, 1.0);
            StopTau { t: (m - 1) as f64 + 1.0 - u.sqrt(), crossed: true }
        }
    }
}

/// Discrepancy principle in the bounded-noise scaling: `stop_tau` with
/// `kappa = (c * delta)^2`. The usual guarantee asks for `c > 1`, but any
/// `c >= 0` is accepted.
pub fn stop_tau_dn(traj: &CgTrajectory, c: f64, delta: f64) -> StopTau {
    assert!(c >= 0.0, "need c >= 0, got {c}");
    assert!(delta >= 0.0, "need delta >= 0, got {delta}");
    stop_tau(traj, c * c * delta * delta)
}

/// Writes one trajectory as CSV rows
/// `run_index,k,residual_sq,normal_residual_sq,termination_reason`
/// (header included; the termination reason is a run-level value repeated on
/// every row to keep the schema flat).
pub fn write_trajectory_csv<W: Write>(
    w: &mut W,
    run_index: u64,
    traj: &CgTrajectory,
) -> io::Result<()> {
    writeln!(w, "run_index,k,residual_sq,normal_residual_sq,termination_reason")?;
    for k in 0..=traj.terminal_index() {
        writeln!(
            w,
            "{run_index},{k},{},{},{}",
            g17(traj.residual_sq[k]),
            g17(traj.normal_residual_sq[k]),
            traj.termination
        )?;
    }
    Ok(())
}
