//! Monte-Carlo harness: seeded independent runs, summary statistics in the
//! median/MAD convention, relative efficiencies against the path oracles, and
//! the asymptotic rate study over growing dimension.

use std::io::Write;
use std::ops::RangeInclusive;

use rayon::prelude::*;

use crate::cgne::{run_cgne, stop_tau, StoppingConfig};
use crate::errors::{oracle_indices, prediction_error, reconstruction_error};
use crate::fmtnum::g17;
use crate::noise::{draw_observation, NoiseModel, NoiseSpec};
use crate::problem::{
    make_gravity_problem, make_polynomial_decay_problem, make_test_signal, ForwardProblem,
    SignalKind,
};
use crate::{Error, Result};

/// Refuse rate-study dimensions past this point; a single run at 2^20 already
/// stores on the order of a gigabyte of iterates.
pub const MAX_STUDY_DIMENSION: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProblemSpec {
    PolynomialDecay { d: usize, p: f64, scale: f64, signal: SignalKind },
    Gravity { d: usize, depth: f64 },
}

impl ProblemSpec {
    pub fn build(&self) -> Result<ForwardProblem> {
        match *self {
            ProblemSpec::PolynomialDecay { d, p, scale, signal } => {
                let coeffs = make_test_signal(signal, d);
                make_polynomial_decay_problem(d, p, scale, &coeffs)
            }
            ProblemSpec::Gravity { d, depth } => make_gravity_problem(d, depth),
        }
    }

    pub fn dimension(&self) -> usize {
        match *self {
            ProblemSpec::PolynomialDecay { d, .. } | ProblemSpec::Gravity { d, .. } => d,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KappaRule {
    DeltaSqD,
    DeltaSqDPlusSqrtD,
    Explicit(f64),
    DnCSquared(f64),
}

impl KappaRule {
    pub fn resolve(&self, delta: f64, dim_obs: usize) -> f64 {
        let d = dim_obs as f64;
        match self {
            KappaRule::DeltaSqD => delta * delta * d,
            KappaRule::DeltaSqDPlusSqrtD => delta * delta * d + delta * delta * d.sqrt(),
            KappaRule::Explicit(kappa) => *kappa,
            KappaRule::DnCSquared(c) => c * c * delta * delta,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub noise_model: NoiseModel,
    pub delta: f64,
    pub kappa_rule: KappaRule,
    pub n_runs: usize,
    pub master_seed: u64,
    pub extra_iterations: usize,
    pub emergency_threshold: f64,
    pub include_emergency_runs: bool,
    pub workers: usize,
}

impl ExperimentConfig {
    /// Config with the defaults used throughout: 15 iterations past the
    /// crossing, emergency threshold 1e-8, emergency runs kept in summaries,
    /// worker count picked by the pool.
    pub fn new(
        problem: ProblemSpec,
        noise_model: NoiseModel,
        delta: f64,
        kappa_rule: KappaRule,
        n_runs: usize,
        master_seed: u64,
    ) -> ExperimentConfig {
        ExperimentConfig {
            problem,
            noise_model,
            delta,
            kappa_rule,
            n_runs,
            master_seed,
            extra_iterations: 15,
            emergency_threshold: 1e-8,
            include_emergency_runs: true,
            workers: 0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RunRecord {
    pub run_index: u64,
    pub tau: f64,
    pub t_w: f64,
    pub t_s: f64,
    pub pred_err_tau: f64,
    pub pred_err_oracle: f64,
    pub rec_err_tau: f64,
    pub rec_err_oracle: f64,
    pub releff_pred: f64,
    pub releff_rec: f64,
    pub emergency_stop: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct SummaryStat {
    pub median: f64,
    pub mad: f64,
}

#[derive(Debug, Clone)]
pub struct McSummary {
    pub records: Vec<RunRecord>,
    pub tau: SummaryStat,
    pub t_w: SummaryStat,
    pub t_s: SummaryStat,
    pub pred_err_tau: SummaryStat,
    pub pred_err_oracle: SummaryStat,
    pub rec_err_tau: SummaryStat,
    pub rec_err_oracle: SummaryStat,
    pub releff_pred: SummaryStat,
    pub releff_rec: SummaryStat,
    pub emergency_fraction: f64,
    pub kappa: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct RateRow {
    pub m: usize,
    pub d: usize,
    pub delta: f64,
    pub mean_pred_tau: f64,
    pub mean_pred_oracle: f64,
    pub mean_rec_tau: f64,
    pub mean_rec_oracle: f64,
    pub theory_pred: f64,
    pub theory_rec: f64,
}

/// Median (midpoint of the two middle values for even counts) and the mean
/// absolute deviation around it.
pub fn median_mad(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::InvalidInput("median of an empty list".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    let mad = sorted.iter().map(|v| (v - median).abs()).sum::<f64>() / n as f64;
    Ok((median, mad))
}

fn single_run(
    cfg: &ExperimentConfig,
    problem: &ForwardProblem,
    kappa: f64,
    run_index: u64,
) -> Result<RunRecord> {
    let spec = NoiseSpec::new(cfg.noise_model, cfg.delta, cfg.master_seed, run_index)?;
    let run = draw_observation(problem, &spec)?;
    let stopping = StoppingConfig::new(kappa, problem.rank())
        .with_extra(cfg.extra_iterations)
        .with_emergency_threshold(cfg.emergency_threshold);
    let traj = run_cgne(problem, &run, &stopping);

    let stop = stop_tau(&traj, kappa);
    let emergency_stop = !stop.crossed;
    // Without a crossing the terminal iterate is the only sensible stop.
    let tau = if stop.crossed { stop.t } else { traj.terminal_index() as f64 };

    let oracles = oracle_indices(problem, &run, &traj);
    let pred_err_tau = prediction_error(problem, &run, &traj, tau).sqrt();
    let pred_err_oracle = prediction_error(problem, &run, &traj, oracles.t_w).sqrt();
    let rec_err_tau = reconstruction_error(problem, &run, &traj, tau).sqrt();
    let rec_err_oracle = reconstruction_error(problem, &run, &traj, oracles.t_s).sqrt();

    // The oracle minimizes the same path functional, so the ratio can exceed
    // one only by rounding; a zero error at tau means the oracle hit it too.
    let releff = |best: f64, at_tau: f64| if at_tau == 0.0 { 1.0 } else { (best / at_tau).min(1.0) };

    Ok(RunRecord {
        run_index,
        tau,
        t_w: oracles.t_w,
        t_s: oracles.t_s,
        pred_err_tau,
        pred_err_oracle,
        rec_err_tau,
        rec_err_oracle,
        releff_pred: releff(pred_err_oracle, pred_err_tau),
        releff_rec: releff(rec_err_oracle, rec_err_tau),
        emergency_stop,
    })
}

fn collect_runs(
    cfg: &ExperimentConfig,
    problem: &ForwardProblem,
    kappa: f64,
) -> Result<Vec<RunRecord>> {
    (0..cfg.n_runs as u64)
        .into_par_iter()
        .map(|i| single_run(cfg, problem, kappa, i))
        .collect()
}

/// Runs `n_runs` independent seeded draws and aggregates them.
///
/// Every run is a pure function of `(master_seed, run_index)`, and the
/// ordered collect keeps records in index order, so the result is identical
/// for any worker count.
pub fn run_monte_carlo(cfg: &ExperimentConfig) -> Result<McSummary> {
    if cfg.n_runs == 0 {
        return Err(Error::InvalidInput("n_runs must be at least 1".into()));
    }
    let problem = cfg.problem.build()?;
    let kappa = cfg.kappa_rule.resolve(cfg.delta, problem.dim_obs());
    if !kappa.is_finite() || kappa < 0.0 {
        return Err(Error::InvalidInput(format!(
            "stopping threshold resolved to {kappa}"
        )));
    }
    let records = if cfg.workers == 0 {
        collect_runs(cfg, &problem, kappa)?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::InvalidInput(format!("worker pool: {e}")))?;
        pool.install(|| collect_runs(cfg, &problem, kappa))?
    };
    summarize(records, cfg.include_emergency_runs, kappa)
}

/// Aggregates per-run records into median/MAD columns.
///
/// With `include_emergency_runs` off, runs that never crossed the threshold
/// are dropped from the statistics; the emergency fraction always counts all
/// of them.
pub fn summarize(
    records: Vec<RunRecord>,
    include_emergency_runs: bool,
    kappa: f64,
) -> Result<McSummary> {
    if records.is_empty() {
        return Err(Error::InvalidInput("no runs to summarize".into()));
    }
    let emergencies = records.iter().filter(|r| r.emergency_stop).count();
    let kept: Vec<&RunRecord> = records
        .iter()
        .filter(|r| include_emergency_runs || !r.emergency_stop)
        .collect();
    if kept.is_empty() {
        return Err(Error::InvalidInput(
            "every run ended in an emergency stop; nothing to summarize with those runs excluded"
                .into(),
        ));
    }
    let stat = |get: &dyn Fn(&RunRecord) -> f64| -> Result<SummaryStat> {
        let column: Vec<f64> = kept.iter().map(|r| get(r)).collect();
        let (median, mad) = median_mad(&column)?;
        Ok(SummaryStat { median, mad })
    };
    Ok(McSummary {
        tau: stat(&|r| r.tau)?,
        t_w: stat(&|r| r.t_w)?,
        t_s: stat(&|r| r.t_s)?,
        pred_err_tau: stat(&|r| r.pred_err_tau)?,
        pred_err_oracle: stat(&|r| r.pred_err_oracle)?,
        rec_err_tau: stat(&|r| r.rec_err_tau)?,
        rec_err_oracle: stat(&|r| r.rec_err_oracle)?,
        releff_pred: stat(&|r| r.releff_pred)?,
        releff_rec: stat(&|r| r.releff_rec)?,
        emergency_fraction: emergencies as f64 / records.len() as f64,
        kappa,
        records,
    })
}

/// Monte-Carlo means of squared errors while the dimension doubles and the
/// noise level shrinks in lockstep.
///
/// For step `m` the dimension is `100 * 2^m` and the noise level
/// `radius * D^(-2 mu p - p - 1/2)`, which couples the two so that minimax
/// theory predicts squared-error decay `radius^2 D^(-4 mu p - 2p)` for
/// prediction and `radius^2 D^(-4 mu p)` for reconstruction; both reference
/// curves are included in the rows.
pub fn rate_study(
    base: &ExperimentConfig,
    m_range: RangeInclusive<usize>,
    radius: f64,
    mu: f64,
    p: f64,
) -> Result<Vec<RateRow>> {
    let (scale, signal) = match base.problem {
        ProblemSpec::PolynomialDecay { scale, signal, .. } => (scale, signal),
        ProblemSpec::Gravity { .. } => {
            return Err(Error::InvalidInput(
                "the rate study runs on the polynomial decay family".into(),
            ))
        }
    };
    if !(radius > 0.0) || !(mu > 0.0) || !(p > 0.0) {
        return Err(Error::InvalidInput(format!(
            "rate study needs positive radius, mu, p; got {radius}, {mu}, {p}"
        )));
    }
    let mut rows = Vec::new();
    for m in m_range {
        if m >= usize::BITS as usize - 8 || (100usize << m) > MAX_STUDY_DIMENSION {
            return Err(Error::InvalidInput(format!(
                "rate step m = {m} needs dimension 100*2^{m} past the cap {MAX_STUDY_DIMENSION}"
            )));
        }
        let d = 100usize << m;
        let df = d as f64;
        let delta = radius * df.powf(-2.0 * mu * p - p - 0.5);
        let mut cfg = base.clone();
        cfg.problem = ProblemSpec::PolynomialDecay { d, p, scale, signal };
        cfg.delta = delta;
        // Decorrelate the streams of different steps without changing the
        // per-run seeding scheme inside each step.
        cfg.master_seed = base
            .master_seed
            .wrapping_add((m as u64).wrapping_mul(0x9E3779B97F4A7C15));
        let summary = run_monte_carlo(&cfg)?;
        let kept: Vec<&RunRecord> = summary
            .records
            .iter()
            .filter(|r| cfg.include_emergency_runs || !r.emergency_stop)
            .collect();
        let mean_sq = |get: &dyn Fn(&RunRecord) -> f64| {
            kept.iter().map(|r| get(r) * get(r)).sum::<f64>() / kept.len() as f64
        };
        rows.push(RateRow {
            m,
            d,
            delta,
            mean_pred_tau: mean_sq(&|r| r.pred_err_tau),
            mean_pred_oracle: mean_sq(&|r| r.pred_err_oracle),
            mean_rec_tau: mean_sq(&|r| r.rec_err_tau),
            mean_rec_oracle: mean_sq(&|r| r.rec_err_oracle),
            theory_pred: radius * radius * df.powf(-4.0 * mu * p - 2.0 * p),
            theory_rec: radius * radius * df.powf(-4.0 * mu * p),
        });
    }
    Ok(rows)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn fit_loglog_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "slope fit needs two matched samples at least, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidInput("slope fit needs positive data".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidInput("slope fit needs varying x".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(sxy / sxx)
}

/// Writes one CSV row per run.
pub fn write_runs_csv<W: Write>(w: &mut W, records: &[RunRecord]) -> std::io::Result<()> {
    writeln!(
        w,
        "run_index,tau,t_w,t_s,pred_err_tau,pred_err_oracle,rec_err_tau,rec_err_oracle,releff_pred,releff_rec,emergency_stop"
    )?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.run_index,
            g17(r.tau),
            g17(r.t_w),
            g17(r.t_s),
            g17(r.pred_err_tau),
            g17(r.pred_err_oracle),
            g17(r.rec_err_tau),
            g17(r.rec_err_oracle),
            g17(r.releff_pred),
            g17(r.releff_rec),
            u8::from(r.emergency_stop),
        )?;
    }
    Ok(())
}

/// Writes one CSV row per rate-study step.
pub fn write_rate_csv<W: Write>(w: &mut W, rows: &[RateRow]) -> std::io::Result<()> {
    writeln!(
        w,
        "m,D,delta,mean_pred_tau,mean_pred_oracle,mean_rec_tau,mean_rec_oracle,theory_pred,theory_rec"
    )?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            r.m,
            r.d,
            g17(r.delta),
            g17(r.mean_pred_tau),
            g17(r.mean_pred_oracle),
            g17(r.mean_rec_tau),
            g17(r.mean_rec_oracle),
            g17(r.theory_pred),
            g17(r.theory_rec),
        )?;
    }
    Ok(())
}

impl McSummary {
    /// One-line JSON record with every median/MAD column.
    pub fn write_summary<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        let col = |name: &str, s: &SummaryStat| {
            format!(
                "\"{name}\": {{\"median\": {}, \"mad\": {}}}",
                g17(s.median),
                g17(s.mad)
            )
        };
        let fields = [
            format!("\"n_runs\": {}", self.records.len()),
            format!("\"kappa\": {}", g17(self.kappa)),
            format!("\"emergency_fraction\": {}", g17(self.emergency_fraction)),
            col("tau", &self.tau),
            col("t_w", &self.t_w),
            col("t_s", &self.t_s),
            col("pred_err_tau", &self.pred_err_tau),
            col("pred_err_oracle", &self.pred_err_oracle),
            col("rec_err_tau", &self.rec_err_tau),
            col("rec_err_oracle", &self.rec_err_oracle),
            col("releff_pred", &self.releff_pred),
            col("releff_rec", &self.releff_rec),
        ];
        writeln!(w, "{{{}}}", fields.join(", "))
    }
}
