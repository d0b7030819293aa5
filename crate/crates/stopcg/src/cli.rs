//! Config-file driven command line interface.
//!
//! Four subcommands wrap the library: `diagnose` runs one observation end to
//! end (trajectory, polynomial diagnostics, error curves), `simulate` runs a
//! Monte-Carlo experiment, `rates` runs the dimension/noise scaling study,
//! and `verify` re-executes the library invariant suite on small instances.
//!
//! Configuration is plain `key = value` text. A `[section]` header prefixes
//! the keys after it; a key written with a dot (`problem.D = 50`) is fully
//! qualified wherever it appears. `#` starts a comment line. Unknown and
//! duplicate keys are rejected with their line numbers, as are type errors.
//!
//! Outputs are CSV files with 17-significant-digit numbers plus a one-line
//! JSON summary, all under `--out` (default `$STOPCG_OUT`, then the working
//! directory). Every file starts with a timestamped comment line unless
//! `--deterministic` is given; apart from that line, reruns of the same
//! config and seed are byte-identical. The resolved configuration is echoed
//! to `effective_config.txt`, which can itself be fed back to `--config`.

use std::cell::Cell;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::cgne::{run_cgne, stop_tau, write_trajectory_csv, StoppingConfig};
use crate::errors::ErrorCurves;
use crate::experiments::{
    rate_study, run_monte_carlo, write_rate_csv, write_runs_csv, ExperimentConfig, KappaRule,
    ProblemSpec,
};
use crate::fmtnum::g17;
use crate::noise::{draw_observation, NoiseModel, NoiseSpec};
use crate::problem::SignalKind;
use crate::respoly::{build_diagnostics, write_diagnostics_csv};
use crate::verify;
use crate::{Error, Result};

#[derive(Parser, Debug)]
#[command(
    name = "stopcg",
    version,
    about = "Early-stopped conjugate gradients: diagnostics, Monte-Carlo studies, rate studies, self-verification"
)]
pub struct CliArgs {
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Subcommand, Debug)]
pub enum Cmd {
    /// Run one observation and write trajectory, diagnostics and error curves
    Diagnose(RunArgs),
    /// Run a Monte-Carlo experiment and write per-run records plus a summary
    Simulate(RunArgs),
    /// Run the rate study over doubling dimensions and shrinking noise
    Rates(RunArgs),
    /// Re-run the library invariant suite on small instances
    Verify(VerifyArgs),
}

#[derive(Args, Debug)]
pub struct RunArgs {
    /// Plain-text `key = value` configuration file
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (default: $STOPCG_OUT, then the working directory)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for Monte-Carlo runs (0 lets the pool decide)
    #[arg(long)]
    pub workers: Option<usize>,
    /// Suppress the timestamped header line for byte-identical reruns
    #[arg(long)]
    pub deterministic: bool,
    /// Master seed, overriding the one in the config file
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// Seed for the randomized draws inside the suite
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Failure classes mapped to exit codes: configuration problems exit 2,
/// numerical or I/O failures during a run exit 3, and property violations
/// found by `verify` exit 4.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
    Violations(usize),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Violations(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "configuration error: {msg}"),
            CliError::Numerical(msg) => write!(f, "run failed: {msg}"),
            CliError::Violations(n) => write!(f, "{n} property violation(s)"),
        }
    }
}

pub fn run(args: CliArgs) -> std::result::Result<(), CliError> {
    match args.cmd {
        Cmd::Diagnose(a) => dispatch(a, cmd_diagnose),
        Cmd::Simulate(a) => dispatch(a, cmd_simulate),
        Cmd::Rates(a) => dispatch(a, cmd_rates),
        Cmd::Verify(v) => {
            let failures = verify::run_suite(v.seed.unwrap_or(0xC0FFEE), &mut std::io::stdout())
                .map_err(|e| CliError::Numerical(e.to_string()))?;
            if failures > 0 {
                Err(CliError::Violations(failures))
            } else {
                Ok(())
            }
        }
    }
}

fn dispatch(
    args: RunArgs,
    cmd: fn(&RawConfig, &RunArgs, &Path) -> Result<()>,
) -> std::result::Result<(), CliError> {
    // Everything up to a fully resolved configuration is a config error.
    let text = fs::read_to_string(&args.config)
        .map_err(|e| CliError::Config(format!("{}: {e}", args.config.display())))?;
    let label = args.config.display().to_string();
    let cfg = RawConfig::parse(&label, &text).map_err(|e| CliError::Config(e.to_string()))?;
    let out_dir = resolve_out_dir(args.out.as_deref()).map_err(|e| CliError::Config(e.to_string()))?;
    cmd(&cfg, &args, &out_dir).map_err(|e| match e {
        Error::Config { .. } => CliError::Config(e.to_string()),
        other => CliError::Numerical(other.to_string()),
    })
}

fn resolve_out_dir(flag: Option<&Path>) -> Result<PathBuf> {
    let dir = match flag {
        Some(p) => p.to_path_buf(),
        None => match std::env::var_os("STOPCG_OUT") {
            Some(v) => PathBuf::from(v),
            None => PathBuf::from("."),
        },
    };
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

// ---------------------------------------------------------------------------
// Raw key-value configuration

#[derive(Debug)]
struct Entry {
    key: String,
    value: String,
    line: usize,
    used: Cell<bool>,
}

/// Parsed configuration text: qualified keys with their line numbers, plus
/// bookkeeping to reject keys nothing consumed.
#[derive(Debug)]
pub struct RawConfig {
    file: String,
    entries: Vec<Entry>,
}

impl RawConfig {
    pub fn parse(file_label: &str, text: &str) -> Result<RawConfig> {
        let err = |line: usize, msg: String| Error::Config {
            file: file_label.to_string(),
            line,
            msg,
        };
        let mut entries: Vec<Entry> = Vec::new();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let Some(name) = rest.strip_suffix(']') else {
                    return Err(err(line_no, format!("unclosed section header `{line}`")));
                };
                let name = name.trim();
                if name.is_empty() {
                    return Err(err(line_no, "empty section name".into()));
                }
                section = name.to_string();
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(err(line_no, format!("expected `key = value` or `[section]`, got `{line}`")));
            };
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(err(line_no, "empty key".into()));
            }
            let full = if k.contains('.') {
                k.to_string()
            } else if section.is_empty() {
                return Err(err(
                    line_no,
                    format!("key `{k}` appears before any [section]; use a header or a dotted key"),
                ));
            } else {
                format!("{section}.{k}")
            };
            if let Some(prev) = entries.iter().find(|e| e.key == full) {
                return Err(err(
                    line_no,
                    format!("duplicate key `{full}` (first set on line {})", prev.line),
                ));
            }
            entries.push(Entry {
                key: full,
                value: v.to_string(),
                line: line_no,
                used: Cell::new(false),
            });
        }
        Ok(RawConfig {
            file: file_label.to_string(),
            entries,
        })
    }

    fn err(&self, line: usize, msg: String) -> Error {
        Error::Config {
            file: self.file.clone(),
            line,
            msg,
        }
    }

    fn find(&self, key: &str) -> Option<&Entry> {
        let entry = self.entries.iter().find(|e| e.key == key)?;
        entry.used.set(true);
        Some(entry)
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.find(key).map(|e| e.value.as_str())
    }

    fn typed<T>(
        &self,
        key: &str,
        kind: &str,
        parse: impl Fn(&str) -> Option<T>,
    ) -> Result<Option<T>> {
        match self.find(key) {
            None => Ok(None),
            Some(e) => match parse(&e.value) {
                Some(v) => Ok(Some(v)),
                None => Err(self.err(e.line, format!("`{key}` needs {kind}, got `{}`", e.value))),
            },
        }
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>> {
        self.typed(key, "a number", |v| v.parse().ok())
    }

    pub fn get_u64(&self, key: &str) -> Result<Option<u64>> {
        self.typed(key, "a nonnegative integer", |v| v.parse().ok())
    }

    pub fn get_usize(&self, key: &str) -> Result<Option<usize>> {
        self.typed(key, "a nonnegative integer", |v| v.parse().ok())
    }

    pub fn get_bool(&self, key: &str) -> Result<Option<bool>> {
        self.typed(key, "true or false", |v| v.parse().ok())
    }

    /// Line a key was set on; 0 when it never appeared (the convention for
    /// whole-file complaints such as missing keys).
    pub fn line_of(&self, key: &str) -> usize {
        self.entries.iter().find(|e| e.key == key).map_or(0, |e| e.line)
    }

    fn missing(&self, key: &str) -> Error {
        self.err(0, format!("missing required key `{key}`"))
    }

    pub fn require_f64(&self, key: &str) -> Result<f64> {
        self.get_f64(key)?.ok_or_else(|| self.missing(key))
    }

    pub fn require_usize(&self, key: &str) -> Result<usize> {
        self.get_usize(key)?.ok_or_else(|| self.missing(key))
    }

    pub fn require_str(&self, key: &str) -> Result<&str> {
        self.get_str(key).ok_or_else(|| self.missing(key))
    }

    /// Errors on any key no reader consumed, listing them with line numbers.
    pub fn reject_unknown(&self) -> Result<()> {
        let unused: Vec<String> = self
            .entries
            .iter()
            .filter(|e| !e.used.get())
            .map(|e| format!("`{}` (line {})", e.key, e.line))
            .collect();
        if unused.is_empty() {
            Ok(())
        } else {
            Err(self.err(
                self.entries.iter().find(|e| !e.used.get()).unwrap().line,
                format!("unknown key(s): {}", unused.join(", ")),
            ))
        }
    }
}

// ---------------------------------------------------------------------------
// Config -> domain structures

fn parse_signal(cfg: &RawConfig) -> Result<SignalKind> {
    match cfg.require_str("problem.signal")? {
        "supersmooth" => Ok(SignalKind::Supersmooth),
        "smooth" => Ok(SignalKind::Smooth),
        "rough" => Ok(SignalKind::Rough),
        other => Err(cfg.err(
            cfg.line_of("problem.signal"),
            format!("`problem.signal` must be supersmooth, smooth or rough, got `{other}`"),
        )),
    }
}

fn positive(cfg: &RawConfig, key: &str, value: f64) -> Result<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(cfg.err(cfg.line_of(key), format!("`{key}` must be positive, got {value}")))
    }
}

fn parse_problem(cfg: &RawConfig) -> Result<ProblemSpec> {
    let dim = || -> Result<usize> {
        let d = cfg.require_usize("problem.D")?;
        if d == 0 {
            return Err(cfg.err(cfg.line_of("problem.D"), "`problem.D` must be at least 1".into()));
        }
        Ok(d)
    };
    match cfg.require_str("problem.kind")? {
        "decay" => Ok(ProblemSpec::PolynomialDecay {
            d: dim()?,
            p: positive(cfg, "problem.p", cfg.require_f64("problem.p")?)?,
            scale: positive(cfg, "problem.scale", cfg.get_f64("problem.scale")?.unwrap_or(1.0))?,
            signal: parse_signal(cfg)?,
        }),
        "gravity" => Ok(ProblemSpec::Gravity {
            d: dim()?,
            depth: positive(cfg, "problem.depth", cfg.get_f64("problem.depth")?.unwrap_or(0.25))?,
        }),
        other => Err(cfg.err(
            cfg.line_of("problem.kind"),
            format!("`problem.kind` must be decay or gravity, got `{other}`"),
        )),
    }
}

fn parse_noise_model(cfg: &RawConfig) -> Result<NoiseModel> {
    match cfg.get_str("noise.model").unwrap_or("gaussian") {
        "gaussian" => Ok(NoiseModel::Gaussian),
        "deterministic" => Ok(NoiseModel::Deterministic),
        other => Err(cfg.err(
            cfg.line_of("noise.model"),
            format!("`noise.model` must be gaussian or deterministic, got `{other}`"),
        )),
    }
}

fn parse_kappa_rule(cfg: &RawConfig) -> Result<KappaRule> {
    match cfg.get_str("stop.kappa_rule").unwrap_or("delta_sq_d") {
        "delta_sq_d" => Ok(KappaRule::DeltaSqD),
        "delta_sq_d_plus_sqrt_d" => Ok(KappaRule::DeltaSqDPlusSqrtD),
        "explicit" => Ok(KappaRule::Explicit(cfg.require_f64("stop.kappa")?)),
        "dn_c_squared" => Ok(KappaRule::DnCSquared(cfg.require_f64("stop.c")?)),
        other => Err(cfg.err(
            cfg.line_of("stop.kappa_rule"),
            format!(
                "`stop.kappa_rule` must be delta_sq_d, delta_sq_d_plus_sqrt_d, explicit or dn_c_squared, got `{other}`"
            ),
        )),
    }
}

fn kappa_rule_name(rule: KappaRule) -> (&'static str, Option<(&'static str, f64)>) {
    match rule {
        KappaRule::DeltaSqD => ("delta_sq_d", None),
        KappaRule::DeltaSqDPlusSqrtD => ("delta_sq_d_plus_sqrt_d", None),
        KappaRule::Explicit(k) => ("explicit", Some(("stop.kappa", k))),
        KappaRule::DnCSquared(c) => ("dn_c_squared", Some(("stop.c", c))),
    }
}

fn experiment_from_config(cfg: &RawConfig, args: &RunArgs) -> Result<ExperimentConfig> {
    let delta = positive(cfg, "noise.delta", cfg.require_f64("noise.delta")?)?;
    let n_runs = cfg.get_usize("mc.runs")?.unwrap_or(200);
    if n_runs == 0 {
        return Err(cfg.err(cfg.line_of("mc.runs"), "`mc.runs` must be at least 1".into()));
    }
    let emergency_threshold = cfg.get_f64("stop.emergency_threshold")?.unwrap_or(1e-8);
    if emergency_threshold < 0.0 {
        return Err(cfg.err(
            cfg.line_of("stop.emergency_threshold"),
            "`stop.emergency_threshold` must be nonnegative".into(),
        ));
    }
    Ok(ExperimentConfig {
        problem: parse_problem(cfg)?,
        noise_model: parse_noise_model(cfg)?,
        delta,
        kappa_rule: parse_kappa_rule(cfg)?,
        n_runs,
        master_seed: args.seed.or(cfg.get_u64("mc.seed")?).unwrap_or(0),
        extra_iterations: cfg.get_usize("stop.extra_iterations")?.unwrap_or(15),
        emergency_threshold,
        include_emergency_runs: cfg.get_bool("mc.include_emergency")?.unwrap_or(true),
        workers: args.workers.or(cfg.get_usize("mc.workers")?).unwrap_or(0),
    })
}

// ---------------------------------------------------------------------------
// Output plumbing

fn write_output(
    out_dir: &Path,
    name: &str,
    deterministic: bool,
    body: impl FnOnce(&mut Vec<u8>) -> Result<()>,
) -> Result<()> {
    let mut buf = Vec::new();
    if !deterministic {
        let now = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        writeln!(buf, "# generated at unix {now}").map_err(Error::from)?;
    }
    body(&mut buf)?;
    fs::write(out_dir.join(name), buf)?;
    Ok(())
}

fn echo_problem(buf: &mut Vec<u8>, spec: ProblemSpec) -> Result<()> {
    match spec {
        ProblemSpec::PolynomialDecay { d, p, scale, signal } => {
            let signal = match signal {
                SignalKind::Supersmooth => "supersmooth",
                SignalKind::Smooth => "smooth",
                SignalKind::Rough => "rough",
            };
            writeln!(
                buf,
                "problem.kind = decay\nproblem.D = {d}\nproblem.p = {}\nproblem.scale = {}\nproblem.signal = {signal}",
                g17(p),
                g17(scale)
            )?;
        }
        ProblemSpec::Gravity { d, depth } => {
            writeln!(buf, "problem.kind = gravity\nproblem.D = {d}\nproblem.depth = {}", g17(depth))?;
        }
    }
    Ok(())
}

fn echo_experiment(buf: &mut Vec<u8>, cfg: &ExperimentConfig) -> Result<()> {
    echo_problem(buf, cfg.problem)?;
    let model = match cfg.noise_model {
        NoiseModel::Gaussian => "gaussian",
        NoiseModel::Deterministic => "deterministic",
    };
    writeln!(buf, "noise.model = {model}\nnoise.delta = {}", g17(cfg.delta))?;
    let (rule, extra_key) = kappa_rule_name(cfg.kappa_rule);
    writeln!(buf, "stop.kappa_rule = {rule}")?;
    if let Some((key, value)) = extra_key {
        writeln!(buf, "{key} = {}", g17(value))?;
    }
    writeln!(
        buf,
        "stop.extra_iterations = {}\nstop.emergency_threshold = {}",
        cfg.extra_iterations,
        g17(cfg.emergency_threshold)
    )?;
    writeln!(
        buf,
        "mc.runs = {}\nmc.seed = {}\nmc.include_emergency = {}\nmc.workers = {}",
        cfg.n_runs, cfg.master_seed, cfg.include_emergency_runs, cfg.workers
    )?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Subcommands

fn cmd_diagnose(cfg: &RawConfig, args: &RunArgs, out_dir: &Path) -> Result<()> {
    let spec = parse_problem(cfg)?;
    let noise_model = parse_noise_model(cfg)?;
    let delta = positive(cfg, "noise.delta", cfg.require_f64("noise.delta")?)?;
    let kappa_rule = parse_kappa_rule(cfg)?;
    let extra = cfg.get_usize("stop.extra_iterations")?.unwrap_or(15);
    let emergency = cfg.get_f64("stop.emergency_threshold")?.unwrap_or(1e-8);
    let seed = args.seed.or(cfg.get_u64("run.seed")?).unwrap_or(0);
    let run_index = cfg.get_u64("run.index")?.unwrap_or(0);
    let interior = cfg.get_usize("curves.interior_points")?.unwrap_or(9);
    cfg.reject_unknown()?;

    let problem = spec.build()?;
    let kappa = kappa_rule.resolve(delta, problem.dim_obs());
    let noise = NoiseSpec::new(noise_model, delta, seed, run_index)?;
    let run = draw_observation(&problem, &noise)?;
    let stopping = StoppingConfig::new(kappa, problem.rank())
        .with_extra(extra)
        .with_emergency_threshold(emergency);
    let traj = run_cgne(&problem, &run, &stopping);
    let diag = build_diagnostics(&traj)?;
    let curves = ErrorCurves::compute(&problem, &run, &traj, &diag, kappa, interior);
    let stop = stop_tau(&traj, kappa);

    write_output(out_dir, "trajectory.csv", args.deterministic, |buf| {
        write_trajectory_csv(buf, run_index, &traj).map_err(Error::from)
    })?;
    write_output(out_dir, "diagnostics.csv", args.deterministic, |buf| {
        write_diagnostics_csv(buf, &diag).map_err(Error::from)
    })?;
    write_output(out_dir, "curves.csv", args.deterministic, |buf| {
        curves.write_csv(buf).map_err(Error::from)
    })?;
    write_output(out_dir, "summary.json", args.deterministic, |buf| {
        let (pred_tau, rec_tau) = curves.errs_near(curves.tau);
        let (pred_b, rec_b) = curves.errs_near(curves.t_balanced);
        let (pred_w, _) = curves.errs_near(curves.t_w);
        let (_, rec_s) = curves.errs_near(curves.t_s);
        let termination = traj.termination;
        writeln!(
            buf,
            "{{\"kappa\": {}, \"tau\": {}, \"crossed\": {}, \"residual_sq_at_tau\": {}, \
             \"termination\": \"{termination}\", \"t_balanced\": {}, \"t_pred_oracle\": {}, \
             \"t_rec_oracle\": {}, \"pred_err_at_tau\": {}, \"rec_err_at_tau\": {}, \
             \"pred_err_at_t_balanced\": {}, \"rec_err_at_t_balanced\": {}, \
             \"pred_err_at_t_pred_oracle\": {}, \"rec_err_at_t_rec_oracle\": {}}}",
            g17(kappa),
            g17(curves.tau),
            stop.crossed,
            g17(crate::cgne::residual_sq_at(&traj, curves.tau)),
            g17(curves.t_balanced),
            g17(curves.t_w),
            g17(curves.t_s),
            g17(pred_tau),
            g17(rec_tau),
            g17(pred_b),
            g17(rec_b),
            g17(pred_w),
            g17(rec_s),
        )
        .map_err(Error::from)
    })?;
    write_output(out_dir, "effective_config.txt", args.deterministic, |buf| {
        echo_problem(buf, spec)?;
        let model = match noise_model {
            NoiseModel::Gaussian => "gaussian",
            NoiseModel::Deterministic => "deterministic",
        };
        writeln!(buf, "noise.model = {model}\nnoise.delta = {}", g17(delta))?;
        let (rule, extra_key) = kappa_rule_name(kappa_rule);
        writeln!(buf, "stop.kappa_rule = {rule}")?;
        if let Some((key, value)) = extra_key {
            writeln!(buf, "{key} = {}", g17(value))?;
        }
        writeln!(
            buf,
            "stop.extra_iterations = {extra}\nstop.emergency_threshold = {}",
            g17(emergency)
        )?;
        writeln!(buf, "run.seed = {seed}\nrun.index = {run_index}")?;
        writeln!(buf, "curves.interior_points = {interior}")?;
        Ok(())
    })
}

fn cmd_simulate(cfg: &RawConfig, args: &RunArgs, out_dir: &Path) -> Result<()> {
    let experiment = experiment_from_config(cfg, args)?;
    cfg.reject_unknown()?;
    let summary = run_monte_carlo(&experiment)?;
    write_output(out_dir, "runs.csv", args.deterministic, |buf| {
        write_runs_csv(buf, &summary.records).map_err(Error::from)
    })?;
    write_output(out_dir, "summary.json", args.deterministic, |buf| {
        summary.write_summary(buf).map_err(Error::from)
    })?;
    write_output(out_dir, "effective_config.txt", args.deterministic, |buf| {
        echo_experiment(buf, &experiment)
    })
}

fn cmd_rates(cfg: &RawConfig, args: &RunArgs, out_dir: &Path) -> Result<()> {
    // The study sets dimension and noise level per step, so a fixed
    // problem.D or noise.delta would be misleading; reject them outright.
    for key in ["problem.D", "problem.p", "noise.delta"] {
        if cfg.get_str(key).is_some() {
            return Err(cfg.err(
                cfg.line_of(key),
                format!("`{key}` has no effect on a rate study; the study sets it per step"),
            ));
        }
    }
    match cfg.require_str("problem.kind")? {
        "decay" => {}
        other => {
            return Err(cfg.err(
                cfg.line_of("problem.kind"),
                format!("the rate study runs on `problem.kind = decay`, got `{other}`"),
            ))
        }
    }
    let signal = parse_signal(cfg)?;
    let scale = cfg.get_f64("problem.scale")?.unwrap_or(1.0);
    let noise_model = parse_noise_model(cfg)?;
    let kappa_rule = parse_kappa_rule(cfg)?;
    let m_min = cfg.get_usize("rates.m_min")?.unwrap_or(0);
    let m_max = cfg.get_usize("rates.m_max")?.unwrap_or(10);
    if m_max < m_min {
        return Err(cfg.err(
            cfg.line_of("rates.m_max"),
            format!("`rates.m_max` = {m_max} is below `rates.m_min` = {m_min}"),
        ));
    }
    if m_max >= usize::BITS as usize
        || 100usize << m_max > crate::experiments::MAX_STUDY_DIMENSION
    {
        return Err(cfg.err(
            cfg.line_of("rates.m_max"),
            format!(
                "`rates.m_max` = {m_max} puts the dimension 100 * 2^m past the cap {}",
                crate::experiments::MAX_STUDY_DIMENSION
            ),
        ));
    }
    let radius = positive(cfg, "rates.R", cfg.get_f64("rates.R")?.unwrap_or(1000.0))?;
    let mu = positive(cfg, "rates.mu", cfg.get_f64("rates.mu")?.unwrap_or(0.25))?;
    let p = positive(cfg, "rates.p", cfg.get_f64("rates.p")?.unwrap_or(0.5))?;
    let n_runs = cfg.get_usize("rates.runs")?.unwrap_or(200);
    if n_runs == 0 {
        return Err(cfg.err(cfg.line_of("rates.runs"), "`rates.runs` must be at least 1".into()));
    }
    let master_seed = args.seed.or(cfg.get_u64("mc.seed")?).unwrap_or(0);
    let extra_iterations = cfg.get_usize("stop.extra_iterations")?.unwrap_or(15);
    let emergency_threshold = cfg.get_f64("stop.emergency_threshold")?.unwrap_or(1e-8);
    let include_emergency_runs = cfg.get_bool("mc.include_emergency")?.unwrap_or(true);
    let workers = args.workers.or(cfg.get_usize("mc.workers")?).unwrap_or(0);
    cfg.reject_unknown()?;

    let base = ExperimentConfig {
        // Placeholder dimension and noise level; every step overrides them.
        problem: ProblemSpec::PolynomialDecay { d: 100, p, scale, signal },
        noise_model,
        delta: 1.0,
        kappa_rule,
        n_runs,
        master_seed,
        extra_iterations,
        emergency_threshold,
        include_emergency_runs,
        workers,
    };
    let rows = rate_study(&base, m_min..=m_max, radius, mu, p)?;
    write_output(out_dir, "rates.csv", args.deterministic, |buf| {
        write_rate_csv(buf, &rows).map_err(Error::from)
    })?;
    write_output(out_dir, "effective_config.txt", args.deterministic, |buf| {
        writeln!(
            buf,
            "problem.kind = decay\nproblem.scale = {}\nproblem.signal = {}",
            g17(scale),
            match signal {
                SignalKind::Supersmooth => "supersmooth",
                SignalKind::Smooth => "smooth",
                SignalKind::Rough => "rough",
            }
        )?;
        let model = match noise_model {
            NoiseModel::Gaussian => "gaussian",
            NoiseModel::Deterministic => "deterministic",
        };
        writeln!(buf, "noise.model = {model}")?;
        let (rule, extra_key) = kappa_rule_name(kappa_rule);
        writeln!(buf, "stop.kappa_rule = {rule}")?;
        if let Some((key, value)) = extra_key {
            writeln!(buf, "{key} = {}", g17(value))?;
        }
        writeln!(
            buf,
            "stop.extra_iterations = {extra_iterations}\nstop.emergency_threshold = {}",
            g17(emergency_threshold)
        )?;
        writeln!(
            buf,
            "rates.m_min = {m_min}\nrates.m_max = {m_max}\nrates.R = {}\nrates.mu = {}\nrates.p = {}\nrates.runs = {n_runs}",
            g17(radius),
            g17(mu),
            g17(p)
        )?;
        writeln!(
            buf,
            "mc.seed = {master_seed}\nmc.include_emergency = {include_emergency_runs}\nmc.workers = {workers}"
        )?;
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RawConfig> {
        RawConfig::parse("test.cfg", text)
    }

    #[test]
    fn sections_and_dotted_keys_resolve_to_the_same_name() {
        let cfg = parse("[problem]\nkind = decay\nD = 50\n\nnoise.delta = 0.1\n").unwrap();
        assert_eq!(cfg.get_str("problem.kind"), Some("decay"));
        assert_eq!(cfg.get_usize("problem.D").unwrap(), Some(50));
        assert_eq!(cfg.get_f64("noise.delta").unwrap(), Some(0.1));
        cfg.reject_unknown().unwrap();
    }

    #[test]
    fn comments_and_blank_lines_are_skipped() {
        let cfg = parse("# a comment\n\n[mc]\n# another\nruns = 7\n").unwrap();
        assert_eq!(cfg.get_usize("mc.runs").unwrap(), Some(7));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let e = parse("[problem]\nkind decay\n").unwrap_err().to_string();
        assert!(e.contains("test.cfg:2"), "{e}");

        let e = parse("kind = decay\n").unwrap_err().to_string();
        assert!(e.contains(":1") && e.contains("before any [section]"), "{e}");

        let e = parse("[problem]\nD = 1\nD = 2\n").unwrap_err().to_string();
        assert!(e.contains(":3") && e.contains("first set on line 2"), "{e}");

        let e = parse("[oops\n").unwrap_err().to_string();
        assert!(e.contains("unclosed"), "{e}");
    }

    #[test]
    fn type_errors_name_the_key_and_line() {
        let cfg = parse("[mc]\nruns = seven\n").unwrap();
        let e = cfg.get_usize("mc.runs").unwrap_err().to_string();
        assert!(e.contains("test.cfg:2") && e.contains("mc.runs"), "{e}");
    }

    #[test]
    fn unknown_keys_are_rejected_with_their_lines() {
        let cfg = parse("[problem]\nkind = decay\nmisspelled = 1\n").unwrap();
        let _ = cfg.get_str("problem.kind");
        let e = cfg.reject_unknown().unwrap_err().to_string();
        assert!(e.contains("problem.misspelled") && e.contains("line 3"), "{e}");
    }

    #[test]
    fn kappa_rules_resolve_their_companions() {
        let cfg = parse("[stop]\nkappa_rule = explicit\nkappa = 2.5\n").unwrap();
        assert_eq!(parse_kappa_rule(&cfg).unwrap(), KappaRule::Explicit(2.5));

        let cfg = parse("[stop]\nkappa_rule = dn_c_squared\nc = 2\n").unwrap();
        assert_eq!(parse_kappa_rule(&cfg).unwrap(), KappaRule::DnCSquared(2.0));

        let cfg = parse("[stop]\nkappa_rule = explicit\n").unwrap();
        assert!(parse_kappa_rule(&cfg).unwrap_err().to_string().contains("stop.kappa"));

        let cfg = parse("").unwrap();
        assert_eq!(parse_kappa_rule(&cfg).unwrap(), KappaRule::DeltaSqD);
    }

    #[test]
    fn problem_spec_requires_the_family_fields() {
        let cfg = parse("[problem]\nkind = decay\nD = 40\np = 0.5\nsignal = rough\n").unwrap();
        assert_eq!(
            parse_problem(&cfg).unwrap(),
            ProblemSpec::PolynomialDecay { d: 40, p: 0.5, scale: 1.0, signal: SignalKind::Rough }
        );

        let cfg = parse("[problem]\nkind = gravity\nD = 64\n").unwrap();
        assert_eq!(parse_problem(&cfg).unwrap(), ProblemSpec::Gravity { d: 64, depth: 0.25 });

        let cfg = parse("[problem]\nkind = decay\nD = 40\np = 0.5\n").unwrap();
        let e = parse_problem(&cfg).unwrap_err().to_string();
        assert!(e.contains("problem.signal"), "{e}");

        let cfg = parse("[problem]\nkind = banana\n").unwrap();
        let e = parse_problem(&cfg).unwrap_err().to_string();
        assert!(e.contains(":2") && e.contains("banana"), "{e}");
    }
}
