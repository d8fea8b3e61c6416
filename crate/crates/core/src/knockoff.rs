//! Gaussian knockoff construction.
//!
//! Rows of the design are treated as draws from N(0, Σ). A knockoff copy is
//! sampled conditionally on the design, row by row:
//!
//! ```text
//! x̃_i | x_i ~ N(x_i − x_i Σ⁻¹ diag{a},  V),   V = 2 diag{a} − diag{a} Σ⁻¹ diag{a}
//! ```
//!
//! with `a` chosen so that V stays positive (semi)definite. The row-vector
//! convention above is used everywhere: design matrices hold one observation
//! per row.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

/// Relative eigenvalue tolerance below which V is rejected as indefinite.
const TOL_PSD: f64 = 1e-8;

/// An n×p design matrix, one observation per row.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    values: DMatrix<f64>,
}

impl DesignMatrix {
    /// Validates n ≥ 2, p ≥ 1 and that every entry is finite.
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() < 2 || values.ncols() < 1 {
            return Err(Error::InvalidInput(format!(
                "design must have n >= 2 rows and p >= 1 columns, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "design contains a non-finite entry".into(),
            ));
        }
        Ok(Self { values })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.values
    }
}

/// Everything needed to sample knockoff copies: Σ, the diagonal perturbation
/// `a`, the conditional covariance V and a root R with R·Rᵀ = V.
#[derive(Debug, Clone)]
pub struct KnockoffModel {
    sigma: DMatrix<f64>,
    a: DVector<f64>,
    v: DMatrix<f64>,
    v_root: DMatrix<f64>,
    /// Σ⁻¹ diag{a}, cached for the conditional mean.
    shift: DMatrix<f64>,
}

impl KnockoffModel {
    /// Builds the model from a positive-definite Σ and a positive vector `a`.
    ///
    /// V is formed explicitly, symmetrized, and eigendecomposed; eigenvalues in
    /// `[-tol, 0)` (tol = 1e-8 × the largest magnitude) are clipped to zero so
    /// that boundary choices of `a` still yield a usable root. Anything below
    /// `-tol` is rejected.
    pub fn new(sigma: DMatrix<f64>, a: DVector<f64>) -> Result<Self> {
        let p = sigma.nrows();
        if sigma.ncols() != p || a.len() != p {
            return Err(Error::InvalidInput(format!(
                "covariance {}x{} and perturbation of length {} are inconsistent",
                sigma.nrows(),
                sigma.ncols(),
                a.len()
            )));
        }
        check_symmetric(&sigma, "sigma")?;
        if a.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidInput(
                "perturbation vector a must be strictly positive and finite".into(),
            ));
        }

        let chol = sigma
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite("sigma has a non-positive pivot".into()))?;

        // shift = Σ⁻¹ diag{a}
        let mut shift = DMatrix::from_fn(p, p, |i, j| if i == j { a[i] } else { 0.0 });
        chol.solve_mut(&mut shift);

        // V = 2 diag{a} − diag{a} Σ⁻¹ diag{a}
        let mut v = DMatrix::zeros(p, p);
        for i in 0..p {
            for j in 0..p {
                v[(i, j)] = -a[i] * shift[(i, j)];
            }
            v[(i, i)] += 2.0 * a[i];
        }
        // symmetrize against roundoff
        for i in 0..p {
            for j in (i + 1)..p {
                let m = 0.5 * (v[(i, j)] + v[(j, i)]);
                v[(i, j)] = m;
                v[(j, i)] = m;
            }
        }

        let eig = v.clone().symmetric_eigen();
        let max_abs = eig.eigenvalues.iter().fold(0.0f64, |m, &l| m.max(l.abs()));
        let tol = TOL_PSD * max_abs;
        if eig.eigenvalues.iter().any(|&l| l < -tol) {
            return Err(Error::NotPositiveDefinite(format!(
                "conditional covariance V has eigenvalue {:.3e} below -{:.3e}",
                eig.eigenvalues.min(),
                tol
            )));
        }
        // R = U diag(sqrt(λ⁺)); R Rᵀ reproduces V with negatives clipped.
        let mut v_root = eig.eigenvectors.clone();
        for (j, &l) in eig.eigenvalues.iter().enumerate() {
            let s = l.max(0.0).sqrt();
            v_root.column_mut(j).scale_mut(s);
        }

        let recon = &v_root * v_root.transpose();
        let v_norm = v.norm();
        let err = (&recon - &v).norm();
        if err > 1e-8 * v_norm.max(f64::MIN_POSITIVE) && err > 1e-300 {
            return Err(Error::NotPositiveDefinite(format!(
                "root reconstruction error {:.3e} exceeds tolerance for ||V|| = {:.3e}",
                err, v_norm
            )));
        }

        Ok(Self {
            sigma,
            a,
            v,
            v_root,
            shift,
        })
    }

    /// Estimate Σ from the design and build the model with the equicorrelated
    /// perturbation at the given safety factor.
    pub fn from_design(x: &DesignMatrix, shrinkage: f64, safety: f64) -> Result<Self> {
        let sigma = estimate_covariance(x, shrinkage)?;
        let perturbation = equi_perturbation(&sigma, safety)?;
        Self::new(sigma, perturbation.a)
    }

    pub fn p(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn a(&self) -> &DVector<f64> {
        &self.a
    }

    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn v_root(&self) -> &DMatrix<f64> {
        &self.v_root
    }
}

fn check_symmetric(m: &DMatrix<f64>, name: &str) -> Result<()> {
    let scale = m.iter().fold(0.0f64, |acc, &v| acc.max(v.abs()));
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-10 * scale.max(1.0) {
                return Err(Error::InvalidInput(format!("{name} is not symmetric")));
            }
        }
    }
    Ok(())
}

/// Centered empirical covariance (divisor n−1) with optional ridge shrinkage
/// toward the average variance: `(1−s)·S + s·mean(diag S)·I`.
///
/// The result must be usable as a knockoff Σ, so singularity is an error
/// rather than a silent pass-through.
pub fn estimate_covariance(x: &DesignMatrix, shrinkage: f64) -> Result<DMatrix<f64>> {
    if !(0.0..=1.0).contains(&shrinkage) {
        return Err(Error::InvalidInput(format!(
            "shrinkage must lie in [0, 1], got {shrinkage}"
        )));
    }
    let n = x.n();
    let p = x.p();
    let mut centered = x.values().clone();
    for j in 0..p {
        let mean = centered.column(j).mean();
        centered.column_mut(j).add_scalar_mut(-mean);
    }
    let mut s = centered.transpose() * &centered;
    s /= (n - 1) as f64;

    let mean_diag = s.diagonal().mean();
    if shrinkage > 0.0 {
        s *= 1.0 - shrinkage;
        for i in 0..p {
            s[(i, i)] += shrinkage * mean_diag;
        }
    }

    // singularity check: smallest eigenvalue relative to the largest
    let eig = s.clone().symmetric_eigen();
    let max_eig = eig.eigenvalues.max();
    let min_eig = eig.eigenvalues.min();
    if !(max_eig > 0.0) || min_eig <= 1e-10 * max_eig {
        return Err(Error::SingularCovariance(format!(
            "estimated covariance is singular (lambda_min = {:.3e}, lambda_max = {:.3e}); \
             a zero-variance or duplicated column with shrinkage = {shrinkage} cannot be inverted",
            min_eig, max_eig
        )));
    }
    Ok(s)
}

/// Equicorrelated diagonal perturbation for a covariance Σ.
#[derive(Debug, Clone)]
pub struct EquiPerturbation {
    /// a_j = s · σ_jj
    pub a: DVector<f64>,
    /// The common correlation-scale factor s = safety × min(1, 2 λ_min(C)).
    pub scale: f64,
    /// Smallest eigenvalue of the correlation matrix.
    pub min_corr_eigenvalue: f64,
    /// Set when s is so small that the knockoffs collapse onto the originals
    /// (V ≈ 0) and selections lose all power.
    pub degenerate: bool,
}

/// Scale below which the knockoffs are flagged as degenerate.
const DEGENERATE_SCALE: f64 = 1e-8;

/// Compute the equicorrelated perturbation `a` with a safety factor in (0, 1].
///
/// Working on the correlation matrix C of Σ, the construction takes
/// `s = safety × min(1, 2 λ_min(C))` and `a_j = s σ_jj`, which keeps
/// `V = 2 diag{a} − diag{a} Σ⁻¹ diag{a}` positive definite whenever
/// safety < 1 (and positive semidefinite at safety = 1).
pub fn equi_perturbation(sigma: &DMatrix<f64>, safety: f64) -> Result<EquiPerturbation> {
    if !(safety > 0.0 && safety <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "safety factor must lie in (0, 1], got {safety}"
        )));
    }
    check_symmetric(sigma, "sigma")?;
    let p = sigma.nrows();
    let diag = sigma.diagonal();
    if diag.iter().any(|&d| !(d > 0.0)) {
        return Err(Error::NotPositiveDefinite(
            "sigma has a non-positive diagonal entry".into(),
        ));
    }
    let inv_sd: Vec<f64> = diag.iter().map(|&d| 1.0 / d.sqrt()).collect();
    let corr = DMatrix::from_fn(p, p, |i, j| sigma[(i, j)] * inv_sd[i] * inv_sd[j]);
    let min_eig = corr.symmetric_eigen().eigenvalues.min();
    if min_eig <= 0.0 {
        return Err(Error::NotPositiveDefinite(format!(
            "correlation matrix has lambda_min = {:.3e}",
            min_eig
        )));
    }
    let scale = safety * (2.0 * min_eig).min(1.0);
    let a = DVector::from_fn(p, |j, _| scale * diag[j]);
    Ok(EquiPerturbation {
        a,
        scale,
        min_corr_eigenvalue: min_eig,
        degenerate: scale < DEGENERATE_SCALE,
    })
}

/// Sample a knockoff copy X̃ of the design.
///
/// `X̃ = X − X Σ⁻¹ diag{a} + G Rᵀ` with G an n×p matrix of standard normals
/// drawn row-major from the seeded generator, so the output is bit-identical
/// for identical `(X, model, seed)`.
pub fn sample_knockoffs(
    x: &DesignMatrix,
    model: &KnockoffModel,
    seed: u64,
) -> Result<DMatrix<f64>> {
    if x.p() != model.p() {
        return Err(Error::InvalidInput(format!(
            "design has p = {} but model has p = {}",
            x.p(),
            model.p()
        )));
    }
    let n = x.n();
    let p = x.p();
    let mut rng = rng_from_seed(seed);
    let mut noise = Vec::with_capacity(n * p);
    for _ in 0..n * p {
        noise.push(rng.sample::<f64, _>(StandardNormal));
    }
    let g = DMatrix::from_row_slice(n, p, &noise);
    let mean = x.values() - x.values() * &model.shift;
    Ok(mean + g * model.v_root.transpose())
}
