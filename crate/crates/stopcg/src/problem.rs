//! Forward problems: synthetic diagonal operators with polynomial singular
//! value decay and the dense gravity integral equation.
//!
//! A problem bundles the operator `A: R^P -> R^D` in SVD form
//! `A = sum_i lambda_i u_i v_i^T`, the true signal `f`, its image `g = A f`
//! and the spectral coordinates `f_i = <f, v_i>`, `g_i = lambda_i f_i` that
//! the error decomposition works in. Diagonal problems keep the canonical
//! basis; the gravity problem stores the dense matrix next to its (truncated)
//! SVD factors. CG always runs on the plain matrix action, diagnostics read
//! the spectral data.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use crate::fmtnum::g17;
use crate::{Error, Result};

/// Relative floor under which computed gravity singular values are dropped.
/// The kernel is analytic, so the numerical tail of the SVD is rounding noise
/// rather than spectrum; keeping it would fake a rank the data cannot see.
const SINGULAR_VALUE_FLOOR: f64 = 1e-14;

/// The three synthetic test signals, indexed from i = 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignalKind {
    /// f_i = 5 exp(-0.1 i)
    Supersmooth,
    /// f_i = 5000 |sin(0.01 i)| i^{-1.6}
    Smooth,
    /// f_i = 250 |sin(0.002 i)| i^{-0.8}
    Rough,
}

/// Smoothness class `sum_i lambda_i^{-4 mu} f_i^2 <= R^2` together with the
/// polynomial decay window `c_lower i^{-p} <= lambda_i <= c_upper i^{-p}`.
#[derive(Debug, Clone, Copy)]
pub struct SourceCondition {
    pub mu: f64,
    pub radius: f64,
    pub decay_p: f64,
    pub c_lower: f64,
    pub c_upper: f64,
}

impl SourceCondition {
    pub fn new(mu: f64, radius: f64, decay_p: f64, c_lower: f64, c_upper: f64) -> Result<Self> {
        if !(mu > 0.0) {
            return Err(Error::InvalidInput(format!("mu must be positive, got {mu}")));
        }
        if !(radius >= 1.0) {
            return Err(Error::InvalidInput(format!("radius must be >= 1, got {radius}")));
        }
        if !(decay_p >= 0.0) || !(c_lower <= c_upper) || !(c_lower > 0.0) {
            return Err(Error::InvalidInput(
                "need decay_p >= 0 and 0 < c_lower <= c_upper".into(),
            ));
        }
        Ok(Self { mu, radius, decay_p, c_lower, c_upper })
    }
}

#[derive(Debug, Clone)]
enum Kind {
    Diagonal,
    Dense(Box<DenseSvd>),
}

#[derive(Debug, Clone)]
struct DenseSvd {
    a: DMatrix<f64>,
    /// dim_obs x rank, orthonormal columns u_i
    u: DMatrix<f64>,
    /// dim_sig x rank, orthonormal columns v_i
    v: DMatrix<f64>,
    /// kernel depth for gravity problems; absent for generic matrices
    depth: Option<f64>,
}

/// An inverse problem in SVD form with its true signal.
#[derive(Debug, Clone)]
pub struct ForwardProblem {
    kind: Kind,
    /// lambda_1 >= ... >= lambda_r > 0 (r = rank, r <= dim_obs)
    singular_values: Vec<f64>,
    /// true signal in ambient coordinates, length dim_sig
    signal: Vec<f64>,
    /// <f, v_i> for i < rank
    signal_coeffs: Vec<f64>,
    /// g = A f in ambient observation coordinates, length dim_obs
    g: Vec<f64>,
    /// lambda_i * signal_coeffs[i]
    g_coeffs: Vec<f64>,
    dim_obs: usize,
    dim_sig: usize,
}

impl ForwardProblem {
    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    /// Number of retained positive singular values (= dim_obs for diagonal
    /// problems, possibly smaller for the gravity operator).
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    pub fn dim_obs(&self) -> usize {
        self.dim_obs
    }

    pub fn dim_sig(&self) -> usize {
        self.dim_sig
    }

    pub fn signal(&self) -> &[f64] {
        &self.signal
    }

    pub fn signal_coeffs(&self) -> &[f64] {
        &self.signal_coeffs
    }

    pub fn g(&self) -> &[f64] {
        &self.g
    }

    pub fn g_coeffs(&self) -> &[f64] {
        &self.g_coeffs
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.kind, Kind::Dense(_))
    }

    pub fn dense_matrix(&self) -> Option<&DMatrix<f64>> {
        match &self.kind {
            Kind::Dense(d) => Some(&d.a),
            Kind::Diagonal => None,
        }
    }

    pub fn depth(&self) -> Option<f64> {
        match &self.kind {
            Kind::Dense(d) => d.depth,
            Kind::Diagonal => None,
        }
    }

    /// Index ranges of equal singular values, in descending-lambda order.
    /// Equality is exact: the synthetic constructions either produce exactly
    /// repeated values (p = 0) or strictly distinct ones.
    pub fn distinct_groups(&self) -> Vec<std::ops::Range<usize>> {
        let mut groups = Vec::new();
        let mut start = 0;
        for i in 1..=self.singular_values.len() {
            if i == self.singular_values.len() || self.singular_values[i] != self.singular_values[start] {
                groups.push(start..i);
                start = i;
            }
        }
        groups
    }

    /// d = number of distinct singular values, the maximal meaningful CG index.
    pub fn distinct_count(&self) -> usize {
        self.distinct_groups().len()
    }

    /// y = A x
    pub fn apply_forward(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim_sig, "apply_forward: signal length mismatch");
        match &self.kind {
            Kind::Diagonal => self
                .singular_values
                .iter()
                .zip(x)
                .map(|(l, xi)| l * xi)
                .collect(),
            Kind::Dense(d) => {
                let xv = nalgebra::DVector::from_column_slice(x);
                (&d.a * xv).data.into()
            }
        }
    }

    /// x = A^T y
    pub fn apply_adjoint(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.dim_obs, "apply_adjoint: observation length mismatch");
        match &self.kind {
            Kind::Diagonal => {
                let mut x = vec![0.0; self.dim_sig];
                for (i, l) in self.singular_values.iter().enumerate() {
                    x[i] = l * y[i];
                }
                x
            }
            Kind::Dense(d) => {
                let yv = nalgebra::DVector::from_column_slice(y);
                (d.a.tr_mul(&yv)).data.into()
            }
        }
    }

    /// Spectral observation coordinates <y, u_i>, i < rank.
    pub fn obs_to_svd(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.dim_obs, "obs_to_svd: observation length mismatch");
        match &self.kind {
            Kind::Diagonal => y.to_vec(),
            Kind::Dense(d) => {
                let yv = nalgebra::DVector::from_column_slice(y);
                (d.u.tr_mul(&yv)).data.into()
            }
        }
    }

    /// Spectral signal coordinates <x, v_i>, i < rank.
    pub fn sig_to_svd(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim_sig, "sig_to_svd: signal length mismatch");
        match &self.kind {
            Kind::Diagonal => x[..self.rank()].to_vec(),
            Kind::Dense(d) => {
                let xv = nalgebra::DVector::from_column_slice(x);
                (d.v.tr_mul(&xv)).data.into()
            }
        }
    }

    /// Ambient signal vector sum_i c_i v_i from spectral coordinates.
    pub fn sig_from_svd(&self, coeffs: &[f64]) -> Vec<f64> {
        assert_eq!(coeffs.len(), self.rank(), "sig_from_svd: coefficient length mismatch");
        match &self.kind {
            Kind::Diagonal => {
                let mut x = vec![0.0; self.dim_sig];
                x[..coeffs.len()].copy_from_slice(coeffs);
                x
            }
            Kind::Dense(d) => {
                let cv = nalgebra::DVector::from_column_slice(coeffs);
                (&d.v * cv).data.into()
            }
        }
    }

    /// Ambient observation vector sum_i c_i u_i from spectral coordinates.
    pub fn obs_from_svd(&self, coeffs: &[f64]) -> Vec<f64> {
        assert_eq!(coeffs.len(), self.rank(), "obs_from_svd: coefficient length mismatch");
        match &self.kind {
            Kind::Diagonal => coeffs.to_vec(),
            Kind::Dense(d) => {
                let cv = nalgebra::DVector::from_column_slice(coeffs);
                (&d.u * cv).data.into()
            }
        }
    }

    /// Minimum-norm least-squares solution: the signal coordinates on
    /// v_1..v_rank with the non-identifiable tail zeroed.
    pub fn minimum_norm_solution(&self) -> Vec<f64> {
        self.sig_from_svd(&self.signal_coeffs)
    }

    /// Smoothness norm ||f||_mu = (sum_i lambda_i^{-4 mu} f_i^2)^{1/2} over
    /// the identifiable coordinates.
    pub fn source_norm(&self, mu: f64) -> f64 {
        assert!(mu > 0.0, "source_norm: mu must be positive");
        self.singular_values
            .iter()
            .zip(&self.signal_coeffs)
            .map(|(l, f)| l.powf(-4.0 * mu) * f * f)
            .sum::<f64>()
            .sqrt()
    }
}

/// Builds the diagonal problem with lambda_i = scale * i^{-p}, i = 1..D.
pub fn make_polynomial_decay_problem(
    d: usize,
    p: f64,
    scale: f64,
    signal: &[f64],
) -> Result<ForwardProblem> {
    if d < 3 {
        return Err(Error::InvalidInput(format!("need D >= 3, got {d}")));
    }
    if !(scale > 0.0) {
        return Err(Error::InvalidInput(format!("need scale > 0, got {scale}")));
    }
    if !(p >= 0.0) || !p.is_finite() {
        return Err(Error::InvalidInput(format!("need finite p >= 0, got {p}")));
    }
    if signal.len() < d {
        return Err(Error::DimensionMismatch { expected: d, got: signal.len() });
    }
    let singular_values: Vec<f64> = (1..=d).map(|i| scale * (i as f64).powf(-p)).collect();
    let signal_coeffs = signal[..d].to_vec();
    let g_coeffs: Vec<f64> = singular_values
        .iter()
        .zip(&signal_coeffs)
        .map(|(l, f)| l * f)
        .collect();
    Ok(ForwardProblem {
        kind: Kind::Diagonal,
        g: g_coeffs.clone(),
        singular_values,
        signal: signal.to_vec(),
        signal_coeffs,
        g_coeffs,
        dim_obs: d,
        dim_sig: signal.len(),
    })
}

/// The benchmark signal coefficients f_1..f_D.
pub fn make_test_signal(kind: SignalKind, d: usize) -> Vec<f64> {
    assert!(d >= 1, "make_test_signal: need D >= 1");
    (1..=d)
        .map(|i| {
            let i = i as f64;
            match kind {
                SignalKind::Supersmooth => 5.0 * (-0.1 * i).exp(),
                SignalKind::Smooth => 5000.0 * (0.01 * i).sin().abs() * i.powf(-1.6),
                SignalKind::Rough => 250.0 * (0.002 * i).sin().abs() * i.powf(-0.8),
            }
        })
        .collect()
}

fn gravity_kernel(depth: f64, s: f64, t: f64) -> f64 {
    let q = depth * depth + (s - t) * (s - t);
    depth / (q * q.sqrt())
}

fn gravity_signal_at(t: f64) -> f64 {
    use std::f64::consts::PI;
    (PI * t).sin() + 0.5 * (2.0 * PI * t).sin()
}

/// Midpoint-quadrature discretisation of the gravity surveying equation on
/// [0,1]: A[j][i] = k(s_j, t_i)/D with k(s,t) = depth (depth^2 + (s-t)^2)^{-3/2}
/// and grid points s_j = (j - 1/2)/D. The true signal is
/// f(t) = sin(pi t) + 0.5 sin(2 pi t) sampled on the same grid.
pub fn make_gravity_problem(d: usize, depth: f64) -> Result<ForwardProblem> {
    if d < 3 {
        return Err(Error::InvalidInput(format!("need D >= 3, got {d}")));
    }
    if !(depth > 0.0) || !depth.is_finite() {
        return Err(Error::InvalidInput(format!("need depth > 0, got {depth}")));
    }
    let n = d as f64;
    let grid: Vec<f64> = (1..=d).map(|j| (j as f64 - 0.5) / n).collect();
    let a = DMatrix::from_fn(d, d, |j, i| gravity_kernel(depth, grid[j], grid[i]) / n);
    let signal: Vec<f64> = grid.iter().map(|&t| gravity_signal_at(t)).collect();
    dense_problem(a, signal, Some(depth))
}

/// Builds a problem from an explicit dense matrix and true signal. The SVD
/// is computed once at construction; singular values below the relative
/// floor are dropped. Intended for small crafted operators; the gravity
/// constructor wraps the same machinery.
pub fn dense_problem_from_matrix(a: DMatrix<f64>, signal: &[f64]) -> Result<ForwardProblem> {
    dense_problem(a, signal.to_vec(), None)
}

/// Shared dense construction: SVD, descending sort, truncation below
/// `SINGULAR_VALUE_FLOOR * lambda_1`, spectral coordinates of the signal.
fn dense_problem(
    a: DMatrix<f64>,
    signal: Vec<f64>,
    depth: Option<f64>,
) -> Result<ForwardProblem> {
    let dim_obs = a.nrows();
    let dim_sig = a.ncols();
    assert_eq!(signal.len(), dim_sig, "signal length must match matrix columns");

    let svd = a
        .clone()
        .try_svd(true, true, f64::EPSILON, 0)
        .ok_or(Error::SvdFailed)?;
    let u_full = svd.u.ok_or(Error::SvdFailed)?;
    let v_t_full = svd.v_t.ok_or(Error::SvdFailed)?;
    let sigma = svd.singular_values;

    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&i, &j| sigma[j].partial_cmp(&sigma[i]).unwrap());
    let smax = sigma[order[0]];
    if !(smax > 0.0) {
        return Err(Error::InvalidInput("matrix is numerically zero".into()));
    }
    let kept: Vec<usize> = order
        .into_iter()
        .filter(|&i| sigma[i] > SINGULAR_VALUE_FLOOR * smax)
        .collect();
    let rank = kept.len();

    let mut u = DMatrix::zeros(dim_obs, rank);
    let mut v = DMatrix::zeros(dim_sig, rank);
    let mut singular_values = Vec::with_capacity(rank);
    for (col, &i) in kept.iter().enumerate() {
        singular_values.push(sigma[i]);
        u.set_column(col, &u_full.column(i));
        v.set_column(col, &v_t_full.row(i).transpose());
    }

    let fv = nalgebra::DVector::from_column_slice(&signal);
    let g: Vec<f64> = (&a * &fv).data.into();
    let signal_coeffs: Vec<f64> = (v.tr_mul(&fv)).data.into();
    let g_coeffs: Vec<f64> = singular_values
        .iter()
        .zip(&signal_coeffs)
        .map(|(l, f)| l * f)
        .collect();

    Ok(ForwardProblem {
        kind: Kind::Dense(Box::new(DenseSvd { a, u, v, depth })),
        singular_values,
        signal,
        signal_coeffs,
        g,
        g_coeffs,
        dim_obs,
        dim_sig,
    })
}

/// Dumps a dense matrix problem as text: one header line `D depth`, then D
/// rows of D entries. Mostly useful to cache or inspect moderate sizes.
pub fn save_gravity_matrix(problem: &ForwardProblem, path: &Path) -> Result<()> {
    let dense = match &problem.kind {
        Kind::Dense(d) => d,
        Kind::Diagonal => {
            return Err(Error::InvalidInput(
                "only dense problems can be saved as matrix files".into(),
            ))
        }
    };
    let depth = dense.depth.ok_or_else(|| {
        Error::InvalidInput("the matrix file format carries a kernel depth; this problem has none".into())
    })?;
    let mut out = String::new();
    out.push_str(&format!("{} {}\n", problem.dim_obs, g17(depth)));
    for j in 0..problem.dim_obs {
        let row: Vec<String> = (0..problem.dim_sig).map(|i| g17(dense.a[(j, i)])).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    let mut file = fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}

/// Reads a matrix file produced by [`save_gravity_matrix`] and rebuilds the
/// gravity problem (signal from the grid formula, SVD recomputed).
pub fn load_gravity_problem(path: &Path) -> Result<ForwardProblem> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::InvalidInput("empty matrix file".into()))?;
    let mut parts = header.split_whitespace();
    let d: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::InvalidInput("bad matrix header: expected `D depth`".into()))?;
    let depth: f64 = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::InvalidInput("bad matrix header: expected `D depth`".into()))?;
    let mut entries = Vec::with_capacity(d * d);
    for line in lines {
        for tok in line.split_whitespace() {
            let x: f64 = tok
                .parse()
                .map_err(|_| Error::InvalidInput(format!("bad matrix entry {tok:?}")))?;
            entries.push(x);
        }
    }
    if entries.len() != d * d {
        return Err(Error::InvalidInput(format!(
            "matrix file holds {} entries, expected {}",
            entries.len(),
            d * d
        )));
    }
    let a = DMatrix::from_row_slice(d, d, &entries);
    let grid: Vec<f64> = (1..=d).map(|j| (j as f64 - 0.5) / d as f64).collect();
    let signal: Vec<f64> = grid.iter().map(|&t| gravity_signal_at(t)).collect();
    dense_problem(a, signal, Some(depth))
}
