//! Residual-polynomial diagnostics for a CG trajectory.
//!
//! Every CG iterate can be written as `f_k = q(A^T A) A^T Y` for some
//! polynomial `q`, and the observation-side residual as `Y - A f_k =
//! r_k(A A^T) Y` with `r_k(0) = 1`. The zeros of `r_k` are the Ritz values
//! of the Lanczos tridiagonal matrix assembled from the CG step sizes, so we
//! recover them with a symmetric eigensolve instead of root-finding. All
//! quantities extend to fractional indices `t = k + alpha` through the linear
//! interpolation `r_t = (1 - alpha) r_k + alpha r_{k+1}`.

use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::cgne::CgTrajectory;
use crate::fmtnum::g17;
use crate::noise::ObservationRun;
use crate::problem::ForwardProblem;
use crate::{Error, Result};

/// Zeros and derived scalars of the residual polynomials `r_1, ..., r_T`.
///
/// Index 0 is padded with the data for `r_0 = 1` (no zeros, zero slope,
/// leading coefficient 1) so that `zeros_per_k[k]` always belongs to `r_k`.
#[derive(Debug, Clone)]
pub struct ResidualPolyDiag {
    /// Zeros of `r_k`, sorted ascending; `k` of them, all strictly positive.
    pub zeros_per_k: Vec<Vec<f64>>,
    /// `|r_k'(0)| = sum_i 1/x_{i,k}`.
    pub deriv0_per_k: Vec<f64>,
    /// Leading coefficient `prod_i (-1/x_{i,k})` of `r_k`.
    pub leading_coeff_per_k: Vec<f64>,
}

impl ResidualPolyDiag {
    /// Largest recorded index `T`.
    pub fn max_index(&self) -> usize {
        self.zeros_per_k.len() - 1
    }

    fn check_t(&self, t: f64) -> (usize, f64) {
        let t_max = self.max_index() as f64;
        assert!(
            t >= 0.0 && t <= t_max,
            "index {t} outside the recorded range 0..={t_max}"
        );
        let k = t.floor() as usize;
        (k, t - k as f64)
    }
}

/// Computes the zeros of every recorded residual polynomial.
///
/// For each `k` the zeros are the eigenvalues of the `k x k` Jacobi matrix
/// built from the CG coefficients: diagonal `1/alpha_j + beta_{j-1}/alpha_{j-1}`
/// (first entry `1/alpha_0`), off-diagonal `sqrt(beta_j)/alpha_j`.
pub fn build_diagnostics(traj: &CgTrajectory) -> Result<ResidualPolyDiag> {
    let t_max = traj.cg_alphas.len();
    let alphas = &traj.cg_alphas;
    let betas = &traj.cg_betas;

    let mut zeros_per_k: Vec<Vec<f64>> = Vec::with_capacity(t_max + 1);
    let mut deriv0_per_k = Vec::with_capacity(t_max + 1);
    let mut leading_coeff_per_k = Vec::with_capacity(t_max + 1);
    zeros_per_k.push(Vec::new());
    deriv0_per_k.push(0.0);
    leading_coeff_per_k.push(1.0);

    for k in 1..=t_max {
        let mut m = DMatrix::zeros(k, k);
        m[(0, 0)] = 1.0 / alphas[0];
        for j in 1..k {
            m[(j, j)] = 1.0 / alphas[j] + betas[j - 1] / alphas[j - 1];
            let off = betas[j - 1].sqrt() / alphas[j - 1];
            m[(j, j - 1)] = off;
            m[(j - 1, j)] = off;
        }
        let eig = SymmetricEigen::try_new(m, f64::EPSILON, 0).ok_or(Error::EigFailed { k })?;
        let mut zeros: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        zeros.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(
            zeros[0] > 0.0,
            "nonpositive Ritz value {} at depth {k}",
            zeros[0]
        );
        deriv0_per_k.push(zeros.iter().map(|z| 1.0 / z).sum());
        leading_coeff_per_k.push(zeros.iter().map(|z| -1.0 / z).product());
        zeros_per_k.push(zeros);
    }

    Ok(ResidualPolyDiag {
        zeros_per_k,
        deriv0_per_k,
        leading_coeff_per_k,
    })
}

fn eval_rk(zeros: &[f64], x: f64) -> f64 {
    zeros.iter().map(|z| 1.0 - x / z).product()
}

/// Evaluates the interpolated residual polynomial `r_t` at `x >= 0`.
///
/// Integer polynomials are evaluated in product form over their zeros; a
/// fractional `t = k + alpha` blends `r_k` and `r_{k+1}` linearly.
pub fn eval_rt(diag: &ResidualPolyDiag, t: f64, x: f64) -> f64 {
    assert!(x >= 0.0, "negative spectral point {x}");
    let (k, alpha) = diag.check_t(t);
    let lower = eval_rk(&diag.zeros_per_k[k], x);
    if alpha == 0.0 {
        return lower;
    }
    let upper = eval_rk(&diag.zeros_per_k[k + 1], x);
    (1.0 - alpha) * lower + alpha * upper
}

/// Smallest zero `x_{1,t}` of the interpolated residual polynomial, `t > 0`.
///
/// Integer indices read the stored Ritz value. On `(0, 1]` the polynomial is
/// affine and the zero is `x_{1,1}/alpha` in closed form. Otherwise the zero
/// is bracketed by `(x_{1,k+1}, x_{1,k})`, where `r_t` changes sign, and
/// bisected to an absolute tolerance of `1e-13` times the spectral scale.
pub fn smallest_zero(diag: &ResidualPolyDiag, t: f64) -> f64 {
    assert!(t > 0.0, "r_0 = 1 has no zero");
    let (k, alpha) = diag.check_t(t);
    if alpha == 0.0 {
        return diag.zeros_per_k[k][0];
    }
    if k == 0 {
        return diag.zeros_per_k[1][0] / alpha;
    }

    let mut lo = diag.zeros_per_k[k + 1][0];
    let mut hi = diag.zeros_per_k[k][0];
    // The largest recorded zero approximates the spectral radius of AA^T.
    let scale = diag.zeros_per_k[diag.max_index()]
        .last()
        .copied()
        .unwrap_or(hi);
    let tol = 1e-13 * scale;
    let f_lo = eval_rt(diag, t, lo);
    let f_hi = eval_rt(diag, t, hi);
    assert!(
        f_lo >= 0.0 && f_hi <= 0.0,
        "zero bracket ({lo}, {hi}) failed at t = {t}: r = ({f_lo}, {f_hi})"
    );
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if eval_rt(diag, t, mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Slope magnitude `|r_t'(0)|`, linear in `t` between integer indices.
pub fn deriv0(diag: &ResidualPolyDiag, t: f64) -> f64 {
    let (k, alpha) = diag.check_t(t);
    let lower = diag.deriv0_per_k[k];
    if alpha == 0.0 {
        return lower;
    }
    (1.0 - alpha) * lower + alpha * diag.deriv0_per_k[k + 1]
}

/// Penalised interpolation weight
/// `(R_k^2 - R_{k+1}^2) / (R_k^2 - R_{k+1}^2 + lambda_pen * leading^2)`.
///
/// `leading` is the leading coefficient of `r_{k+1}`; the result lies in
/// `(0, 1]` and reduces to the unpenalised weight 1 at `lambda_pen = 0`.
pub fn penalised_alpha(lambda_pen: f64, r_k_sq: f64, r_k1_sq: f64, leading: f64) -> f64 {
    assert!(lambda_pen >= 0.0, "negative penalty {lambda_pen}");
    assert!(
        r_k_sq > r_k1_sq,
        "residual drop must be positive, got {r_k_sq} <= {r_k1_sq}"
    );
    let drop = r_k_sq - r_k1_sq;
    drop / (drop + lambda_pen * leading * leading)
}

/// Residual polynomial computed by explicit least squares, for cross-checks.
#[derive(Debug, Clone)]
pub struct BruteForcePoly {
    /// Monomial coefficients `[1, c_1, ..., c_k]` of `p(x) = 1 + sum c_j x^j`.
    pub coeffs: Vec<f64>,
    /// Roots of `p`, sorted ascending.
    pub roots: Vec<f64>,
    /// Attained minimum `sum_i p(lambda_i^2)^2 Y_i^2`.
    pub min_value: f64,
}

/// Solves `min sum_i p(lambda_i^2)^2 Y_i^2` over polynomials with `p(0) = 1`
/// by forming the normal equations in a scaled monomial basis.
///
/// This is a slow independent reference for [`build_diagnostics`]: its roots
/// must match the Ritz values and its minimum the squared residual norm. The
/// monomial basis is hopeless beyond small degrees, so the problem must have
/// at most 12 distinct singular values and `k` may not exceed that count.
/// Even below that cap the solve can fail with an error for `k` close to the
/// number of distinct values on slowly decaying spectra; the comparison is
/// meaningful while the squared residual sits well above the machine floor.
pub fn brute_force_residual_poly(
    problem: &ForwardProblem,
    run: &ObservationRun,
    k: usize,
) -> Result<BruteForcePoly> {
    let d = problem.distinct_count();
    if d > 12 {
        return Err(Error::InvalidInput(format!(
            "brute-force solve supports at most 12 distinct singular values, got {d}"
        )));
    }
    if k > d {
        return Err(Error::InvalidInput(format!(
            "degree {k} exceeds the {d} distinct singular values"
        )));
    }

    let weights: Vec<f64> = run.y_svd.iter().map(|v| v * v).collect();
    if k == 0 {
        return Ok(BruteForcePoly {
            coeffs: vec![1.0],
            roots: Vec::new(),
            min_value: weights.iter().sum(),
        });
    }

    // Work in z = x / lambda_1^2 so all powers stay of order one.
    let lam = problem.singular_values();
    let s = lam[0] * lam[0];
    let z: Vec<f64> = lam.iter().map(|l| l * l / s).collect();

    // Moments mu_q = sum_i z_i^q Y_i^2 feed the normal equations
    // sum_l b_l mu_{j+l} = -mu_j for the coefficients of z, ..., z^k.
    let mut mu = vec![0.0; 2 * k + 1];
    for (zi, wi) in z.iter().zip(&weights) {
        let mut pow = 1.0;
        for m in mu.iter_mut() {
            *m += pow * wi;
            pow *= zi;
        }
    }
    let m = DMatrix::from_fn(k, k, |j, l| mu[j + l + 2]);
    let rhs = DVector::from_fn(k, |j, _| -mu[j + 1]);
    let singular =
        || Error::InvalidInput("singular normal equations in brute-force polynomial solve".into());
    let lu = m.clone().lu();
    let mut b = lu.solve(&rhs).ok_or_else(singular)?;
    // The moment matrix is Hankel and badly conditioned already at moderate
    // degree; a plain solve loses several digits and the roots drift with it.
    // Iterative refinement with a compensated residual restores near full
    // working precision as long as the condition number stays below 1/eps.
    for _ in 0..4 {
        let r = compensated_residual(&mu, &rhs, &b);
        let corr = lu.solve(&r).ok_or_else(singular)?;
        b += &corr;
        if corr.amax() <= 1e-16 * b.amax() {
            break;
        }
    }

    let qz = |x: f64| {
        let mut acc = 0.0;
        for j in (0..k).rev() {
            acc = (acc + b[j]) * x;
        }
        acc + 1.0
    };

    // All k roots lie in (0, 1] (scaled spectrum); scan for sign changes and
    // bisect each bracket. A miss means the grid straddled two roots, so
    // retry once with a much denser grid before giving up.
    let mut roots_z = scan_roots(&qz, k, 200_000);
    if roots_z.len() < k {
        roots_z = scan_roots(&qz, k, 2_000_000);
    }
    if roots_z.len() < k {
        // The normal equations were solvable, but the coefficients came out
        // too perturbed to keep all k roots real and separated. This happens
        // for k close to d on slowly decaying spectra, where the moment
        // matrix condition number approaches 1/eps.
        return Err(Error::InvalidInput(format!(
            "recovered only {} of {k} roots; the degree-{k} normal equations \
             exceed double precision on this spectrum",
            roots_z.len()
        )));
    }

    let mut coeffs = Vec::with_capacity(k + 1);
    coeffs.push(1.0);
    let mut unscale = 1.0;
    for j in 0..k {
        unscale /= s;
        coeffs.push(b[j] * unscale);
    }
    let min_value = z
        .iter()
        .zip(&weights)
        .map(|(zi, wi)| {
            let p = qz(*zi);
            p * p * wi
        })
        .sum();

    Ok(BruteForcePoly {
        coeffs,
        roots: roots_z.iter().map(|r| r * s).collect(),
        min_value,
    })
}

/// Residual `rhs - M b` of the normal equations with error-free products and
/// Neumaier summation, so refinement sees digits the plain solve lost.
fn compensated_residual(mu: &[f64], rhs: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    let k = b.len();
    DVector::from_fn(k, |j, _| {
        let mut sum = rhs[j];
        let mut comp = 0.0;
        for l in 0..k {
            let prod = mu[j + l + 2] * b[l];
            let tail = f64::mul_add(mu[j + l + 2], b[l], -prod);
            for term in [-prod, -tail] {
                let t = sum + term;
                if sum.abs() >= term.abs() {
                    comp += (sum - t) + term;
                } else {
                    comp += (term - t) + sum;
                }
                sum = t;
            }
        }
        sum + comp
    })
}

fn scan_roots(q: &dyn Fn(f64) -> f64, want: usize, grid: usize) -> Vec<f64> {
    // Margin past z = 1 catches a root sitting exactly on the largest
    // singular value (the full-depth case).
    let hi_bound = 1.0 + 1e-3;
    let mut roots = Vec::with_capacity(want);
    let mut prev_x = 0.0;
    let mut prev_q = q(0.0);
    for i in 1..=grid {
        let x = hi_bound * i as f64 / grid as f64;
        let qx = q(x);
        if prev_q == 0.0 {
            roots.push(prev_x);
        } else if prev_q * qx < 0.0 {
            let (mut lo, mut hi) = (prev_x, x);
            let mut q_lo = prev_q;
            while hi - lo > 1e-15 {
                let mid = 0.5 * (lo + hi);
                let q_mid = q(mid);
                if q_mid == 0.0 || q_mid * q_lo > 0.0 {
                    lo = mid;
                    q_lo = q_mid;
                } else {
                    hi = mid;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        prev_x = x;
        prev_q = qx;
        if roots.len() == want {
            break;
        }
    }
    roots
}

/// Writes the per-step diagnostics table: smallest zero, slope at zero, and
/// leading coefficient of `r_k` for `k = 1..T`.
pub fn write_diagnostics_csv<W: Write>(w: &mut W, diag: &ResidualPolyDiag) -> std::io::Result<()> {
    writeln!(w, "k,smallest_zero,deriv0,leading_coeff")?;
    for k in 1..=diag.max_index() {
        writeln!(
            w,
            "{},{},{},{}",
            k,
            g17(diag.zeros_per_k[k][0]),
            g17(diag.deriv0_per_k[k]),
            g17(diag.leading_coeff_per_k[k]),
        )?;
    }
    Ok(())
}
