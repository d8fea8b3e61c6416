//! ℓ1-regularization coefficient paths for linear and logistic models.
//!
//! The solver is cyclic coordinate descent with warm starts along a
//! log-spaced, decreasing penalty grid. The linear model minimizes
//! `(1/2n)·‖y − Xα‖² + λ‖α‖₁`; the logistic model minimizes
//! `(1/n)·Σ −(y_i η_i − ln(1+e^{η_i})) + λ‖α‖₁` with `η = b0 + Xα` and an
//! unpenalized intercept, solved by iteratively reweighted least squares with
//! a coordinate-descent inner loop.
//!
//! Columns enter the penalty as given — no internal standardization.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coefficients smaller than this (in absolute value) count as zero when
/// extracting entry statistics.
pub const COEF_ZERO_TOL: f64 = 1e-9;

/// IRLS weights are floored at this value; the fixed point is unaffected
/// because the floor cancels out of the working response.
const WEIGHT_FLOOR: f64 = 1e-5;

/// Which smooth loss the path is fit under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Linear,
    Logistic,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelKind::Linear => write!(f, "linear"),
            ModelKind::Logistic => write!(f, "logistic"),
        }
    }
}

/// Grid and solver settings for one path fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathConfig {
    /// Number of grid points (default 100).
    pub grid_size: usize,
    /// Ratio of the smallest to the largest grid value (default 1e-3).
    pub lambda_min_ratio: f64,
    /// Iteration budget per grid point, counted in coordinate sweeps (default 10000).
    pub max_iter: usize,
    /// KKT tolerance on the 1/n-scaled gradient (default 1e-7).
    pub tol: f64,
    pub model: ModelKind,
}

impl PathConfig {
    pub fn linear() -> Self {
        Self {
            grid_size: 100,
            lambda_min_ratio: 1e-3,
            max_iter: 10_000,
            tol: 1e-7,
            model: ModelKind::Linear,
        }
    }

    pub fn logistic() -> Self {
        Self {
            model: ModelKind::Logistic,
            ..Self::linear()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.grid_size == 0 || self.max_iter == 0 {
            return Err(Error::InvalidInput(
                "grid_size and max_iter must be positive".into(),
            ));
        }
        if !(self.lambda_min_ratio > 0.0 && self.lambda_min_ratio < 1.0) {
            return Err(Error::InvalidInput(format!(
                "lambda_min_ratio must lie in (0, 1), got {}",
                self.lambda_min_ratio
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidInput("tol must be positive".into()));
        }
        Ok(())
    }
}

/// Per-feature coefficients over a decreasing penalty grid.
#[derive(Debug, Clone)]
pub struct CoefficientPath {
    /// Strictly decreasing grid (all zeros in the degenerate λ_max = 0 case).
    pub lambdas: Vec<f64>,
    /// grid_size × d coefficient matrix, one row per grid point.
    pub coefs: DMatrix<f64>,
    /// Unpenalized intercepts, one per grid point; empty for the linear model.
    pub intercepts: Vec<f64>,
    /// Per-grid-point convergence flags (KKT satisfied within tol).
    pub converged: Vec<bool>,
}

/// Plain sequential dot product. The solver and [`lambda_max`] share this
/// accumulation so that the grid head reproduces the all-zero solution
/// bit-exactly.
#[inline]
fn plain_dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        acc += x * y;
    }
    acc
}

/// Smallest penalty at which the all-zero solution (plus intercept for the
/// logistic model) is optimal.
///
/// Linear: `max_j |x_jᵀ y| / n`. Logistic: `max_j |x_jᵀ (y − ȳ·1)| / n`.
pub fn lambda_max(x_ext: &DMatrix<f64>, y: &DVector<f64>, model: ModelKind) -> Result<f64> {
    validate_inputs(x_ext, y, model)?;
    let n = x_ext.nrows();
    let inv_n = 1.0 / n as f64;
    let resid: Vec<f64> = match model {
        ModelKind::Linear => y.iter().copied().collect(),
        ModelKind::Logistic => {
            let mean = y.mean();
            y.iter().map(|v| v - mean).collect()
        }
    };
    let data = x_ext.as_slice();
    let mut best = 0.0f64;
    for j in 0..x_ext.ncols() {
        let col = &data[j * n..(j + 1) * n];
        best = best.max((plain_dot(col, &resid) * inv_n).abs());
    }
    Ok(best)
}

fn validate_inputs(x_ext: &DMatrix<f64>, y: &DVector<f64>, model: ModelKind) -> Result<()> {
    if x_ext.nrows() != y.len() {
        return Err(Error::InvalidInput(format!(
            "design has {} rows but outcome has length {}",
            x_ext.nrows(),
            y.len()
        )));
    }
    if x_ext.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "design or outcome contains a non-finite entry".into(),
        ));
    }
    if model == ModelKind::Logistic {
        if y.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidInput(
                "logistic outcome must take values in {0, 1}".into(),
            ));
        }
        let ones = y.iter().filter(|&&v| v == 1.0).count();
        if ones == 0 || ones == y.len() {
            return Err(Error::DegenerateOutcome(
                "logistic outcome is constant; both classes are required".into(),
            ));
        }
    }
    Ok(())
}

/// Log-spaced decreasing grid from λ_max down to λ_max × lambda_min_ratio.
fn make_grid(lambda_max: f64, cfg: &PathConfig) -> Vec<f64> {
    let m = cfg.grid_size;
    if lambda_max <= 0.0 {
        return vec![0.0; m];
    }
    if m == 1 {
        return vec![lambda_max];
    }
    let log_max = lambda_max.ln();
    let log_min = (lambda_max * cfg.lambda_min_ratio).ln();
    let mut grid: Vec<f64> = (0..m)
        .map(|i| (log_max + (log_min - log_max) * i as f64 / (m - 1) as f64).exp())
        .collect();
    // pin the endpoints so the head is λ_max exactly
    grid[0] = lambda_max;
    grid[m - 1] = lambda_max * cfg.lambda_min_ratio;
    grid
}

#[inline]
fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

/// Numerically stable logistic function.
#[inline]
pub(crate) fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^eta)` without overflow.
#[inline]
fn log1p_exp(eta: f64) -> f64 {
    eta.max(0.0) + (-eta.abs()).exp().ln_1p()
}

/// The 1/n-scaled smooth logistic loss `(1/n)·Σ −(y_i η_i − ln(1+e^{η_i}))`
/// on the extended design, at a given intercept and coefficient vector.
pub fn logistic_smooth_loss(
    x_ext: &DMatrix<f64>,
    y: &DVector<f64>,
    intercept: f64,
    coefs: &DVector<f64>,
) -> f64 {
    let n = x_ext.nrows();
    let eta = x_ext * coefs;
    let mut total = 0.0;
    for i in 0..n {
        let e = intercept + eta[i];
        total -= y[i] * e - log1p_exp(e);
    }
    total / n as f64
}

/// Gradient of [`logistic_smooth_loss`] in `(intercept, coefficients)`.
pub fn logistic_smooth_gradient(
    x_ext: &DMatrix<f64>,
    y: &DVector<f64>,
    intercept: f64,
    coefs: &DVector<f64>,
) -> (f64, DVector<f64>) {
    let n = x_ext.nrows();
    let eta = x_ext * coefs;
    let p_minus_y = DVector::from_fn(n, |i, _| sigmoid(intercept + eta[i]) - y[i]);
    let grad = x_ext.transpose() * &p_minus_y / n as f64;
    (p_minus_y.mean(), grad)
}

/// KKT violation of coordinate `j` given the smooth gradient component.
#[inline]
fn kkt_violation(alpha_j: f64, grad_j: f64, lambda: f64) -> f64 {
    if alpha_j == 0.0 {
        (grad_j.abs() - lambda).max(0.0)
    } else {
        (grad_j + lambda * alpha_j.signum()).abs()
    }
}

/// Shared per-fit data: columns extracted once for contiguous access.
struct Columns {
    cols: Vec<Vec<f64>>,
    n: usize,
}

impl Columns {
    fn new(x_ext: &DMatrix<f64>) -> Self {
        let n = x_ext.nrows();
        let cols = (0..x_ext.ncols())
            .map(|j| x_ext.column(j).iter().copied().collect())
            .collect();
        Self { cols, n }
    }

    fn d(&self) -> usize {
        self.cols.len()
    }
}

/// Fit the full coefficient path on the (extended) design.
///
/// Warm-started along the grid; each grid point is polished until the exact
/// KKT conditions hold within `cfg.tol` or the sweep budget runs out, in
/// which case the point is flagged in `converged` and the fit continues.
/// Only if every grid point fails does the call return `SolverFailure`.
pub fn fit_path(x_ext: &DMatrix<f64>, y: &DVector<f64>, cfg: &PathConfig) -> Result<CoefficientPath> {
    cfg.validate()?;
    validate_inputs(x_ext, y, cfg.model)?;
    let lmax = lambda_max(x_ext, y, cfg.model)?;
    let lambdas = make_grid(lmax, cfg);
    let cols = Columns::new(x_ext);

    match cfg.model {
        ModelKind::Linear => fit_linear(x_ext, &cols, y.as_slice(), &lambdas, cfg),
        ModelKind::Logistic => fit_logistic(&cols, y.as_slice(), &lambdas, cfg),
    }
}

/// Linear-model coordinate descent over the Gram matrix.
///
/// The smooth gradient `gvec = (XᵀXα − Xᵀy)/n` is maintained incrementally:
/// a sweep reads each coordinate's gradient for free and pays O(d) only when
/// a coefficient actually moves, which keeps the dense bottom of the grid
/// tractable. The gradient is rebuilt from scratch before any grid point is
/// declared converged, so drift cannot fake a pass.
fn fit_linear(
    x_ext: &DMatrix<f64>,
    cols: &Columns,
    y: &[f64],
    lambdas: &[f64],
    cfg: &PathConfig,
) -> Result<CoefficientPath> {
    let n = cols.n;
    let d = cols.d();
    let inv_n = 1.0 / n as f64;

    // b = Xᵀy/n with the same accumulation as lambda_max
    let b: Vec<f64> = cols.cols.iter().map(|c| plain_dot(c, y) * inv_n).collect();
    // Gram matrix XᵀX/n, read column-wise (symmetric, so the layout is moot)
    let gram_m = x_ext.transpose() * x_ext * inv_n;
    let gram = gram_m.as_slice();
    let col_scale: Vec<f64> = (0..d).map(|j| gram[j * d + j]).collect();

    let mut alpha = vec![0.0f64; d];
    let mut gvec: Vec<f64> = b.iter().map(|v| -v).collect();
    let mut coefs = DMatrix::zeros(lambdas.len(), d);
    let mut converged = vec![false; lambdas.len()];
    let mut any_ok = false;

    let refresh = |alpha: &[f64], gvec: &mut Vec<f64>| {
        for (g, bv) in gvec.iter_mut().zip(b.iter()) {
            *g = -bv;
        }
        for (j, &aj) in alpha.iter().enumerate() {
            if aj != 0.0 {
                let col = &gram[j * d..(j + 1) * d];
                for (g, cv) in gvec.iter_mut().zip(col.iter()) {
                    *g += aj * cv;
                }
            }
        }
    };

    for (gi, &lambda) in lambdas.iter().enumerate() {
        let mut sweeps = 0usize;
        let mut ok = false;
        let mut refreshed_stall = false;
        while sweeps < cfg.max_iter {
            let mut changes = 0usize;
            let mut max_viol = 0.0f64;
            for j in 0..d {
                let s = col_scale[j];
                let g = gvec[j];
                max_viol = max_viol.max(kkt_violation(alpha[j], g, lambda));
                if s == 0.0 {
                    continue;
                }
                let rho = s * alpha[j] - g;
                let new = soft_threshold(rho, lambda) / s;
                let delta = new - alpha[j];
                if delta != 0.0 {
                    let col = &gram[j * d..(j + 1) * d];
                    for (gv, cv) in gvec.iter_mut().zip(col.iter()) {
                        *gv += delta * cv;
                    }
                    alpha[j] = new;
                    changes += 1;
                }
            }
            sweeps += 1;
            if changes == 0 {
                if max_viol <= cfg.tol {
                    // candidate fixed point; verify against accumulated drift
                    refresh(&alpha, &mut gvec);
                    let worst = (0..d)
                        .map(|j| kkt_violation(alpha[j], gvec[j], lambda))
                        .fold(0.0f64, f64::max);
                    if worst <= cfg.tol {
                        ok = true;
                        break;
                    }
                } else if refreshed_stall {
                    // stationary for the solver but out of tolerance: numerical limit
                    break;
                } else {
                    refresh(&alpha, &mut gvec);
                    refreshed_stall = true;
                }
            }
        }
        converged[gi] = ok;
        any_ok |= ok;
        for j in 0..d {
            coefs[(gi, j)] = alpha[j];
        }
    }

    if !any_ok {
        return Err(Error::SolverFailure(
            "coordinate descent failed at every grid point".into(),
        ));
    }
    Ok(CoefficientPath {
        lambdas: lambdas.to_vec(),
        coefs,
        intercepts: Vec::new(),
        converged,
    })
}

/// Logistic path by IRLS with a coordinate-descent inner loop.
///
/// Each outer iteration checks the exact KKT conditions of the true logistic
/// problem over all coordinates (admitting violators into the active set) and
/// then solves the local weighted least-squares subproblem over the active
/// coordinates only. The weight floor changes the Newton metric, never the
/// fixed point, because it cancels out of the working residual.
fn fit_logistic(cols: &Columns, y: &[f64], lambdas: &[f64], cfg: &PathConfig) -> Result<CoefficientPath> {
    let n = cols.n;
    let d = cols.d();
    let inv_n = 1.0 / n as f64;
    let y_mean = y.iter().sum::<f64>() * inv_n;

    let mut alpha = vec![0.0f64; d];
    // null-model intercept: logit of the outcome mean
    let mut b0 = (y_mean / (1.0 - y_mean)).ln();
    let mut eta: Vec<f64> = vec![0.0; n];

    let mut active: Vec<usize> = Vec::new();
    let mut in_active = vec![false; d];

    let mut coefs = DMatrix::zeros(lambdas.len(), d);
    let mut intercepts = vec![0.0f64; lambdas.len()];
    let mut converged = vec![false; lambdas.len()];
    let mut any_ok = false;

    let mut weights = vec![0.0f64; n];
    let mut work_resid = vec![0.0f64; n];
    let mut working_z = vec![0.0f64; n];
    let mut p_minus_y = vec![0.0f64; n];

    for (gi, &lambda) in lambdas.iter().enumerate() {
        // rebuild eta from scratch so drift cannot accumulate along the grid
        for e in eta.iter_mut() {
            *e = b0;
        }
        for (j, &aj) in alpha.iter().enumerate() {
            if aj != 0.0 {
                for (e, xv) in eta.iter_mut().zip(cols.cols[j].iter()) {
                    *e += aj * xv;
                }
            }
        }

        let mut sweeps = 0usize;
        let mut ok = false;
        'outer: for _outer in 0..200 {
            // exact KKT pass on the true logistic problem; admits violators
            for i in 0..n {
                p_minus_y[i] = sigmoid(eta[i]) - y[i];
            }
            let grad0: f64 = p_minus_y.iter().sum::<f64>() * inv_n;
            let mut worst = grad0.abs();
            for j in 0..d {
                let g = plain_dot(&cols.cols[j], &p_minus_y) * inv_n;
                let viol = kkt_violation(alpha[j], g, lambda);
                if viol > worst {
                    worst = viol;
                }
                if viol > cfg.tol && !in_active[j] {
                    in_active[j] = true;
                    active.push(j);
                }
            }
            if worst <= cfg.tol {
                ok = true;
                break 'outer;
            }
            if sweeps >= cfg.max_iter {
                break 'outer;
            }

            // quadratic approximation at the current eta
            for i in 0..n {
                let p = sigmoid(eta[i]);
                let w = (p * (1.0 - p)).max(WEIGHT_FLOOR);
                weights[i] = w;
                work_resid[i] = (y[i] - p) / w;
                working_z[i] = eta[i] + work_resid[i];
            }
            let sum_w: f64 = weights.iter().sum();

            // inner: weighted least squares over the active set
            for _inner in 0..50 {
                let mut max_delta = 0.0f64;
                let num: f64 = weights.iter().zip(work_resid.iter()).map(|(w, u)| w * u).sum();
                let db0 = num / sum_w;
                if db0 != 0.0 {
                    b0 += db0;
                    for u in work_resid.iter_mut() {
                        *u -= db0;
                    }
                    max_delta = max_delta.max(db0.abs());
                }
                for &j in &active {
                    let xj = &cols.cols[j];
                    let mut c = 0.0;
                    let mut s = 0.0;
                    for ((xv, uv), wv) in xj.iter().zip(work_resid.iter()).zip(weights.iter()) {
                        c += wv * xv * uv;
                        s += wv * xv * xv;
                    }
                    c *= inv_n;
                    s *= inv_n;
                    if s == 0.0 {
                        continue;
                    }
                    let rho = c + s * alpha[j];
                    let new = soft_threshold(rho, lambda) / s;
                    let delta = new - alpha[j];
                    if delta != 0.0 {
                        for (uv, xv) in work_resid.iter_mut().zip(xj.iter()) {
                            *uv -= delta * xv;
                        }
                        alpha[j] = new;
                        max_delta = max_delta.max(delta.abs() * s);
                    }
                }
                sweeps += 1;
                if max_delta <= 0.1 * cfg.tol || sweeps >= cfg.max_iter {
                    break;
                }
            }
            // eta = z − u for the updated (b0, α)
            for i in 0..n {
                eta[i] = working_z[i] - work_resid[i];
            }
        }
        converged[gi] = ok;
        any_ok |= ok;
        for j in 0..d {
            coefs[(gi, j)] = alpha[j];
        }
        intercepts[gi] = b0;

        // keep only genuinely active coordinates for the next grid point
        active.retain(|&j| {
            if alpha[j] != 0.0 {
                true
            } else {
                in_active[j] = false;
                false
            }
        });
    }

    if !any_ok {
        return Err(Error::SolverFailure(
            "IRLS coordinate descent failed at every grid point".into(),
        ));
    }
    Ok(CoefficientPath {
        lambdas: lambdas.to_vec(),
        coefs,
        intercepts,
        converged,
    })
}

/// Entry statistics: `Z_j` is the largest grid penalty at which feature `j`
/// has a coefficient of magnitude above [`COEF_ZERO_TOL`], and zero if the
/// coefficient never activates on the grid. The first p columns of the path
/// are the original features, the last p their knockoffs.
pub fn entry_statistics(path: &CoefficientPath) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = path.coefs.ncols();
    if d % 2 != 0 {
        return Err(Error::InvalidInput(format!(
            "extended design must have an even number of columns, got {d}"
        )));
    }
    let p = d / 2;
    let entry = |j: usize| -> f64 {
        for (gi, &lambda) in path.lambdas.iter().enumerate() {
            if path.coefs[(gi, j)].abs() > COEF_ZERO_TOL {
                return lambda;
            }
        }
        0.0
    };
    let z = (0..p).map(entry).collect();
    let z_tilde = (p..d).map(entry).collect();
    Ok((z, z_tilde))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use crate::seed::rng_from_seed;

    fn random_matrix(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = rng_from_seed(seed);
        DMatrix::from_fn(n, d, |_, _| rng.gen_range(-1.0..1.0))
    }

    /// Gram–Schmidt orthogonalization, then rescale so that ‖x_j‖² = n.
    fn orthonormal_design(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
        let mut m = random_matrix(n, d, seed);
        for j in 0..d {
            for k in 0..j {
                let proj = m.column(j).dot(&m.column(k)) / m.column(k).norm_squared();
                let col_k = m.column(k).clone_owned();
                m.column_mut(j).axpy(-proj, &col_k, 1.0);
            }
            let norm = m.column(j).norm();
            m.column_mut(j).scale_mut((n as f64).sqrt() / norm);
        }
        m
    }

    #[test]
    fn lambda_max_unit_column() {
        let n = 8;
        let x = DMatrix::from_element(n, 1, 1.0);
        let y = DVector::from_element(n, 1.0);
        assert_relative_eq!(
            lambda_max(&x, &y, ModelKind::Linear).unwrap(),
            1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn zero_outcome_gives_degenerate_path() {
        let x = random_matrix(15, 4, 3);
        let y = DVector::zeros(15);
        assert_eq!(lambda_max(&x, &y, ModelKind::Linear).unwrap(), 0.0);
        let path = fit_path(&x, &y, &PathConfig::linear()).unwrap();
        assert!(path.lambdas.iter().all(|&l| l == 0.0));
        assert!(path.coefs.iter().all(|&c| c == 0.0));
        let (z, zt) = entry_statistics(&path).unwrap();
        assert!(z.iter().chain(zt.iter()).all(|&v| v == 0.0));
    }

    #[test]
    fn constant_logistic_outcome_is_degenerate() {
        let x = random_matrix(10, 2, 4);
        let y = DVector::from_element(10, 1.0);
        assert!(matches!(
            lambda_max(&x, &y, ModelKind::Logistic),
            Err(Error::DegenerateOutcome(_))
        ));
    }

    #[test]
    fn first_entry_is_next_to_lambda_max() {
        let x = random_matrix(20, 6, 77);
        let mut rng = rng_from_seed(78);
        let y = DVector::from_fn(20, |_, _| rng.gen_range(-1.0..1.0));
        let lmax = lambda_max(&x, &y, ModelKind::Linear).unwrap();
        let cfg = PathConfig {
            grid_size: 400,
            lambda_min_ratio: 0.95,
            ..PathConfig::linear()
        };
        let path = fit_path(&x, &y, &cfg).unwrap();
        // first grid point with any active coefficient
        let first = path
            .lambdas
            .iter()
            .enumerate()
            .find(|(gi, _)| (0..6).any(|j| path.coefs[(*gi, j)].abs() > COEF_ZERO_TOL))
            .map(|(_, &l)| l)
            .expect("something must enter");
        assert!(first <= lmax && first > 0.99 * lmax, "first entry {first} vs lambda_max {lmax}");
        // and nothing is active at the grid head
        for j in 0..6 {
            assert_eq!(path.coefs[(0, j)], 0.0);
        }
    }

    #[test]
    fn orthonormal_design_matches_soft_threshold() {
        let n = 50;
        let d = 8;
        let x = orthonormal_design(n, d, 1234);
        let mut rng = rng_from_seed(4321);
        let y = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
        let path = fit_path(&x, &y, &PathConfig::linear()).unwrap();
        let inner: Vec<f64> = (0..d).map(|j| x.column(j).dot(&y) / n as f64).collect();
        for (gi, &lambda) in path.lambdas.iter().enumerate() {
            assert!(path.converged[gi]);
            for j in 0..d {
                let expect = soft_threshold(inner[j], lambda);
                assert!(
                    (path.coefs[(gi, j)] - expect).abs() < 1e-6,
                    "grid {gi} coord {j}: {} vs {}",
                    path.coefs[(gi, j)],
                    expect
                );
            }
        }
    }

    #[test]
    fn kkt_holds_on_random_linear_instance() {
        let x = random_matrix(40, 12, 9);
        let mut rng = rng_from_seed(10);
        let y = DVector::from_fn(40, |_, _| rng.gen_range(-1.5..1.5));
        let cfg = PathConfig::linear();
        let path = fit_path(&x, &y, &cfg).unwrap();
        let n = 40.0;
        for (gi, &lambda) in path.lambdas.iter().enumerate() {
            assert!(path.converged[gi], "grid point {gi} did not converge");
            let alpha = path.coefs.row(gi).transpose();
            let resid = &y - &x * &alpha;
            for j in 0..12 {
                let grad = -x.column(j).dot(&resid) / n;
                let viol = kkt_violation(alpha[j], grad, lambda);
                assert!(viol <= cfg.tol * 1.001, "viol {viol} at grid {gi}, coord {j}");
            }
        }
    }

    #[test]
    fn kkt_holds_on_random_logistic_instance() {
        let x = random_matrix(60, 8, 21);
        let mut rng = rng_from_seed(22);
        let y = DVector::from_fn(60, |i, _| {
            let noise: f64 = rng.gen_range(-1.0..1.0);
            if x[(i, 0)] - 0.5 * x[(i, 3)] + 0.7 * noise > 0.0 {
                1.0
            } else {
                0.0
            }
        });
        let cfg = PathConfig::logistic();
        let path = fit_path(&x, &y, &cfg).unwrap();
        for (gi, &lambda) in path.lambdas.iter().enumerate() {
            if !path.converged[gi] {
                continue;
            }
            let alpha = path.coefs.row(gi).transpose();
            let (g0, grad) = logistic_smooth_gradient(&x, &y, path.intercepts[gi], &alpha);
            assert!(g0.abs() <= cfg.tol * 1.001, "intercept grad {g0} at {gi}");
            for j in 0..8 {
                let viol = kkt_violation(alpha[j], grad[j], lambda);
                assert!(viol <= cfg.tol * 1.001, "viol {viol} at grid {gi}, coord {j}");
            }
        }
        assert!(path.converged.iter().filter(|&&c| c).count() >= 95);
    }

    #[test]
    fn logistic_gradient_matches_finite_differences() {
        let x = random_matrix(30, 6, 99);
        let mut rng = rng_from_seed(100);
        let y = DVector::from_fn(30, |_, _| if rng.gen_bool(0.5) { 1.0 } else { 0.0 });
        let alpha = DVector::from_fn(6, |_, _| rng.gen_range(-1.0..1.0));
        let b0 = 0.3;
        let (g0, grad) = logistic_smooth_gradient(&x, &y, b0, &alpha);
        let h = 1e-6;
        // intercept
        let num0 = (logistic_smooth_loss(&x, &y, b0 + h, &alpha)
            - logistic_smooth_loss(&x, &y, b0 - h, &alpha))
            / (2.0 * h);
        assert!((num0 - g0).abs() / g0.abs().max(1e-8) < 1e-5);
        for j in 0..6 {
            let mut up = alpha.clone();
            up[j] += h;
            let mut dn = alpha.clone();
            dn[j] -= h;
            let num = (logistic_smooth_loss(&x, &y, b0, &up) - logistic_smooth_loss(&x, &y, b0, &dn))
                / (2.0 * h);
            let rel = (num - grad[j]).abs() / grad[j].abs().max(1e-8);
            assert!(rel < 1e-5, "coord {j}: fd {num} vs grad {}", grad[j]);
        }
    }

    #[test]
    fn single_feature_logistic_symmetry() {
        let x = DMatrix::from_column_slice(6, 1, &[-2.0, -1.0, -0.5, 0.5, 1.0, 2.0]);
        let y = DVector::from_column_slice(&[0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let y_flip = y.map(|v| 1.0 - v);
        let cfg = PathConfig::logistic();
        let path = fit_path(&x, &y, &cfg).unwrap();
        let flipped = fit_path(&x, &y_flip, &cfg).unwrap();
        for gi in 0..cfg.grid_size {
            assert_relative_eq!(
                path.coefs[(gi, 0)],
                -flipped.coefs[(gi, 0)],
                epsilon = 1e-5
            );
            assert_relative_eq!(path.intercepts[gi], -flipped.intercepts[gi], epsilon = 1e-5);
        }
    }

    #[test]
    fn path_head_is_zero_for_linear() {
        let x = random_matrix(25, 5, 51);
        let mut rng = rng_from_seed(52);
        let y = DVector::from_fn(25, |_, _| rng.gen_range(-1.0..1.0));
        let path = fit_path(&x, &y, &PathConfig::linear()).unwrap();
        for j in 0..5 {
            assert_eq!(path.coefs[(0, j)], 0.0);
        }
    }

    #[test]
    fn entry_statistics_single_feature_soft_threshold() {
        // orthonormal single column: entry happens at λ = |x₁ᵀy|/n = 0.8
        let n = 10;
        let mut x = orthonormal_design(n, 2, 66);
        // overwrite second column: entry stats need an even split (p = 1)
        let c0 = x.column(0).clone_owned();
        let target = 0.8;
        let y = c0.scale(target); // x₁ᵀ y / n = 0.8·‖x₁‖²/n = 0.8
        x.column_mut(1).copy_from(&DVector::zeros(n));
        let path = fit_path(&x, &y, &PathConfig::linear()).unwrap();
        let (z, zt) = entry_statistics(&path).unwrap();
        // λ_max = 0.8, so the head of the grid is exactly 0.8 with a zero
        // coefficient; the entry is the next grid point down
        let expect = path.lambdas[1];
        assert_relative_eq!(z[0], expect, epsilon = 1e-12);
        assert_eq!(zt[0], 0.0);
        assert!(z[0] < target);
    }

    #[test]
    fn grid_refinement_consistency() {
        let n = 40;
        let p = 5;
        let x = random_matrix(n, 2 * p, 888);
        let mut rng = rng_from_seed(889);
        let y = DVector::from_fn(n, |i, _| x[(i, 0)] - 0.8 * x[(i, 2)] + 0.3 * rng.gen_range(-1.0..1.0));
        let coarse_cfg = PathConfig::linear();
        let fine_cfg = PathConfig {
            grid_size: 1000,
            ..PathConfig::linear()
        };
        let coarse = fit_path(&x, &y, &coarse_cfg).unwrap();
        let fine = fit_path(&x, &y, &fine_cfg).unwrap();
        let (zc, ztc) = entry_statistics(&coarse).unwrap();
        let (zf, ztf) = entry_statistics(&fine).unwrap();
        // one coarse-grid spacing in log scale
        let spacing = (coarse.lambdas[0] / coarse.lambdas[1]).ln() * 1.0001;
        for (c, f) in zc.iter().chain(ztc.iter()).zip(zf.iter().chain(ztf.iter())) {
            match (*c > 0.0, *f > 0.0) {
                (true, true) => {
                    assert!(
                        (c.ln() - f.ln()).abs() <= spacing,
                        "coarse {c} vs fine {f} differ by more than one spacing"
                    );
                }
                (false, false) => {}
                _ => {
                    // an entry right at the bottom of the grid may straddle it
                    let v = c.max(*f);
                    let bottom = coarse.lambdas[coarse.lambdas.len() - 1];
                    assert!(
                        (v.ln() - bottom.ln()).abs() <= spacing,
                        "entry {v} appears on one grid only and is not at the boundary"
                    );
                }
            }
        }
    }

    #[test]
    fn permutation_equivariance_of_entry_statistics() {
        let n = 30;
        let p = 4;
        let x = random_matrix(n, 2 * p, 777);
        let mut rng = rng_from_seed(778);
        let y = DVector::from_fn(n, |i, _| x[(i, 1)] + 0.5 * rng.gen_range(-1.0..1.0));
        let cfg = PathConfig::linear();
        let (z, zt) = entry_statistics(&fit_path(&x, &y, &cfg).unwrap()).unwrap();

        // apply the same permutation to features and knockoffs
        let perm = [2usize, 0, 3, 1];
        let mut xp = DMatrix::zeros(n, 2 * p);
        for (new_j, &old_j) in perm.iter().enumerate() {
            xp.column_mut(new_j).copy_from(&x.column(old_j));
            xp.column_mut(p + new_j).copy_from(&x.column(p + old_j));
        }
        let (zp, ztp) = entry_statistics(&fit_path(&xp, &y, &cfg).unwrap()).unwrap();
        for (new_j, &old_j) in perm.iter().enumerate() {
            assert_relative_eq!(zp[new_j], z[old_j], epsilon = 1e-10);
            assert_relative_eq!(ztp[new_j], zt[old_j], epsilon = 1e-10);
        }
    }

    #[test]
    fn outcome_scaling_preserves_entry_order() {
        let n = 35;
        let p = 3;
        let x = random_matrix(n, 2 * p, 4141);
        let mut rng = rng_from_seed(4242);
        let y = DVector::from_fn(n, |i, _| {
            1.3 * x[(i, 0)] - 0.9 * x[(i, 2)] + 0.4 * rng.gen_range(-1.0..1.0)
        });
        let cfg = PathConfig::linear();
        let order = |y: &DVector<f64>| -> Vec<usize> {
            let (z, zt) = entry_statistics(&fit_path(&x, y, &cfg).unwrap()).unwrap();
            let all: Vec<f64> = z.into_iter().chain(zt).collect();
            let mut idx: Vec<usize> = (0..all.len()).collect();
            idx.sort_by(|&a, &b| all[b].partial_cmp(&all[a]).unwrap().then(a.cmp(&b)));
            idx
        };
        let base = order(&y);
        let scaled = order(&y.scale(7.5));
        assert_eq!(base, scaled);
    }
}
