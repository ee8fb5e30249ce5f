//! Dual-form ridge estimator and exact conditional risk.
//!
//! Everything is computed through the `n × n` system `A = λI_n + XXᵀ`, which
//! stays positive definite for moderately negative `λ` when `p ≫ n`. The
//! primal `p × p` solve exists only as a test oracle for `λ > 0`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectrum::Spectrum;

/// Law of the isotropic coordinates `z_ij` before colouring by `Σ^{1/2}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DesignFamily {
    #[default]
    Gaussian,
    /// `±1` with equal probability.
    Rademacher,
    /// Uniform on `[−√3, √3]`.
    Uniform,
}

/// Law of the label noise, scaled to variance `σ_ε²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseFamily {
    #[default]
    Gaussian,
    Rademacher,
}

fn draw_unit(family: DesignFamily, rng: &mut ChaCha8Rng, uniform: &Uniform<f64>) -> f64 {
    match family {
        DesignFamily::Gaussian => StandardNormal.sample(rng),
        DesignFamily::Rademacher => {
            if rng.random::<bool>() {
                1.0
            } else {
                -1.0
            }
        }
        DesignFamily::Uniform => uniform.sample(rng),
    }
}

fn unit_uniform() -> Uniform<f64> {
    let h = 3f64.sqrt();
    Uniform::new_inclusive(-h, h).expect("finite bounds")
}

/// Samples `X = Z Σ^{1/2}` (`n × p`) with i.i.d. unit-variance entries in `Z`.
///
/// Deterministic in `(family, spec, n, seed)`. Entries are drawn column by
/// column, so the first `k` columns do not depend on `p`.
pub fn sample_design(family: DesignFamily, spec: &Spectrum, n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let uniform = unit_uniform();
    let p = spec.p();
    let mut data = Vec::with_capacity(n * p);
    for &l in spec.eigenvalues() {
        let s = l.sqrt();
        for _ in 0..n {
            data.push(s * draw_unit(family, &mut rng, &uniform));
        }
    }
    DMatrix::from_vec(n, p, data)
}

/// Samples an `n`-vector of noise with standard deviation `sigma`.
pub fn sample_noise(family: NoiseFamily, n: usize, sigma: f64, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let design = match family {
        NoiseFamily::Gaussian => DesignFamily::Gaussian,
        NoiseFamily::Rademacher => DesignFamily::Rademacher,
    };
    let uniform = unit_uniform();
    DVector::from_fn(n, |_, _| sigma * draw_unit(design, &mut rng, &uniform))
}

/// `XXᵀ`.
pub fn gram(x: &DMatrix<f64>) -> DMatrix<f64> {
    x * x.transpose()
}

/// `X_{k:∞} X_{k:∞}ᵀ`, the Gram matrix of the last `p − k` columns.
pub fn tail_gram(x: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let p = x.ncols();
    let k = k.min(p);
    if k == 0 {
        return gram(x);
    }
    let t = x.columns(k, p - k);
    t * t.transpose()
}

fn add_diag(mut a: DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    for i in 0..a.nrows() {
        a[(i, i)] += lambda;
    }
    a
}

fn extremes(a: &DMatrix<f64>) -> (f64, f64) {
    let ev = a.clone().symmetric_eigenvalues();
    let lo = ev.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ev.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Default PD tolerance: `1e−10` times the largest eigenvalue.
pub fn default_pd_tolerance(mu_max: f64) -> f64 {
    1e-10 * mu_max.abs()
}

/// A factored positive-definite system `A = λI_n + X_{k:∞}X_{k:∞}ᵀ`.
#[derive(Debug, Clone)]
pub struct DualSystem {
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    lambda: f64,
    mu_min: f64,
    mu_max: f64,
}

impl DualSystem {
    /// Factors `λI_n + X_{k:∞}X_{k:∞}ᵀ`; `k = 0` gives the full system.
    pub fn new(x: &DMatrix<f64>, lambda: f64, k: usize, pd_tolerance: Option<f64>) -> Result<Self> {
        if !lambda.is_finite() {
            return Err(Error::domain(
                "ridge system",
                format!("λ = {lambda} is not finite"),
            ));
        }
        let a = add_diag(tail_gram(x, k), lambda);
        let (mu_min, mu_max) = extremes(&a);
        let tolerance = pd_tolerance.unwrap_or_else(|| default_pd_tolerance(mu_max));
        if mu_min.is_nan() || mu_min <= tolerance {
            return Err(Error::NotPositiveDefinite {
                min_eigenvalue: mu_min,
                tolerance,
            });
        }
        let chol = a.cholesky().ok_or(Error::NotPositiveDefinite {
            min_eigenvalue: mu_min,
            tolerance,
        })?;
        Ok(DualSystem {
            chol,
            lambda,
            mu_min,
            mu_max,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Smallest eigenvalue of the system matrix.
    pub fn pd_margin(&self) -> f64 {
        self.mu_min
    }

    pub fn mu_max(&self) -> f64 {
        self.mu_max
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }
}

/// Output of [`ridge_fit_dual`].
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeSolution {
    pub theta_hat: DVector<f64>,
    /// `(λI_n + XXᵀ)⁻¹ y`.
    pub dual_weights: DVector<f64>,
    pub lambda: f64,
    pub pd_margin: f64,
}

fn check_xy(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::Dimension(format!(
            "X has {} rows but y has length {}",
            x.nrows(),
            y.len()
        )));
    }
    Ok(())
}

fn check_spec(x: &DMatrix<f64>, spec: &Spectrum) -> Result<()> {
    if x.ncols() != spec.p() {
        return Err(Error::Dimension(format!(
            "X has {} columns but the spectrum has p = {}",
            x.ncols(),
            spec.p()
        )));
    }
    Ok(())
}

/// `θ̂ = Xᵀ(λI_n + XXᵀ)⁻¹y`, solved by Cholesky.
///
/// `pd_tolerance` defaults to `1e−10 · μ_max(λI_n + XXᵀ)`.
pub fn ridge_fit_dual(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    pd_tolerance: Option<f64>,
) -> Result<RidgeSolution> {
    check_xy(x, y)?;
    let sys = DualSystem::new(x, lambda, 0, pd_tolerance)?;
    let dual_weights = sys.solve(y);
    Ok(RidgeSolution {
        theta_hat: x.tr_mul(&dual_weights),
        dual_weights,
        lambda,
        pd_margin: sys.pd_margin(),
    })
}

/// `(λI_p + XᵀX)⁻¹Xᵀy`; only defined for `λ > 0`.
pub fn ridge_fit_primal_oracle(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
) -> Result<DVector<f64>> {
    check_xy(x, y)?;
    if lambda.is_nan() || lambda <= 0.0 {
        return Err(Error::domain(
            "primal oracle",
            format!("requires λ > 0, got {lambda}"),
        ));
    }
    let a = add_diag(x.transpose() * x, lambda);
    let rhs = x.tr_mul(y);
    let chol = a.cholesky().ok_or(Error::NotPositiveDefinite {
        min_eigenvalue: f64::NAN,
        tolerance: 0.0,
    })?;
    Ok(chol.solve(&rhs))
}

fn sigma_weighted_sq(spec: &Spectrum, v: &DVector<f64>) -> f64 {
    spec.eigenvalues()
        .iter()
        .zip(v.iter())
        .map(|(l, r)| l * r * r)
        .sum()
}

/// `X` with column `j` multiplied by `√λ_j`, so that `X_Σ X_Σᵀ = XΣXᵀ`.
fn sigma_half_columns(x: &DMatrix<f64>, spec: &Spectrum) -> DMatrix<f64> {
    let mut xs = x.clone();
    for (j, &l) in spec.eigenvalues().iter().enumerate() {
        xs.column_mut(j).scale_mut(l.sqrt());
    }
    xs
}

/// `B = ‖(I − XᵀA⁻¹X)θ*‖²_Σ`.
pub fn exact_bias(
    x: &DMatrix<f64>,
    spec: &Spectrum,
    theta_star: &[f64],
    lambda: f64,
) -> Result<f64> {
    check_spec(x, spec)?;
    if theta_star.len() != spec.p() {
        return Err(Error::Dimension(format!(
            "θ* has length {}, expected {}",
            theta_star.len(),
            spec.p()
        )));
    }
    let sys = DualSystem::new(x, lambda, 0, None)?;
    Ok(bias_with(&sys, x, spec, theta_star))
}

fn bias_with(sys: &DualSystem, x: &DMatrix<f64>, spec: &Spectrum, theta_star: &[f64]) -> f64 {
    let theta = DVector::from_column_slice(theta_star);
    let alpha = sys.solve(&(x * &theta));
    let r = theta - x.tr_mul(&alpha);
    sigma_weighted_sq(spec, &r)
}

/// `E_ε V = σ_ε² tr(Σ XᵀA⁻²X)`.
pub fn exact_variance(
    x: &DMatrix<f64>,
    spec: &Spectrum,
    lambda: f64,
    sigma_eps: f64,
) -> Result<f64> {
    check_spec(x, spec)?;
    let sys = DualSystem::new(x, lambda, 0, None)?;
    Ok(variance_with(&sys, x, spec, sigma_eps))
}

fn variance_with(sys: &DualSystem, x: &DMatrix<f64>, spec: &Spectrum, sigma_eps: f64) -> f64 {
    let xs = sigma_half_columns(x, spec);
    let m = gram(&xs);
    let ainv = sys.inverse();
    // tr(A⁻¹ M A⁻¹) = ⟨A⁻¹M, A⁻¹⟩_F for symmetric A⁻¹
    let am = &ainv * m;
    sigma_eps * sigma_eps * am.component_mul(&ainv).sum()
}

/// `V = ‖XᵀA⁻¹ε‖²_Σ` for one noise draw.
pub fn realized_variance(
    x: &DMatrix<f64>,
    spec: &Spectrum,
    lambda: f64,
    eps: &DVector<f64>,
) -> Result<f64> {
    check_spec(x, spec)?;
    check_xy(x, eps)?;
    let sys = DualSystem::new(x, lambda, 0, None)?;
    Ok(sigma_weighted_sq(spec, &x.tr_mul(&sys.solve(eps))))
}

/// Bias, expected variance and their sum at one `λ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskDecomposition {
    pub bias: f64,
    pub variance_expected: f64,
    pub variance_realized: Option<f64>,
    pub mse: f64,
}

/// Computes the full decomposition with a single factorization.
pub fn risk_decomposition(
    x: &DMatrix<f64>,
    spec: &Spectrum,
    theta_star: &[f64],
    lambda: f64,
    sigma_eps: f64,
    eps: Option<&DVector<f64>>,
) -> Result<RiskDecomposition> {
    check_spec(x, spec)?;
    let sys = DualSystem::new(x, lambda, 0, None)?;
    let bias = bias_with(&sys, x, spec, theta_star);
    let variance_expected = variance_with(&sys, x, spec, sigma_eps);
    let variance_realized = match eps {
        Some(e) => {
            check_xy(x, e)?;
            Some(sigma_weighted_sq(spec, &x.tr_mul(&sys.solve(e))))
        }
        None => None,
    };
    Ok(RiskDecomposition {
        bias,
        variance_expected,
        variance_realized,
        mse: bias + variance_expected,
    })
}

/// Norm of `θ̂_{0:k} + X_{0:k}ᵀA_k⁻¹X_{0:k}θ̂_{0:k} − X_{0:k}ᵀA_k⁻¹y` together
/// with the norm of `X_{0:k}ᵀA_k⁻¹y`, which sets its scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityResidual {
    pub absolute: f64,
    pub scale: f64,
}

impl IdentityResidual {
    /// `absolute / (1 + scale)`.
    pub fn relative(&self) -> f64 {
        self.absolute / (1.0 + self.scale)
    }
}

/// Evaluates the leading-block identity satisfied by the dual-form fit.
/// Analytically zero; the value measures numerical error.
pub fn identity_residual(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    k: usize,
) -> Result<IdentityResidual> {
    check_xy(x, y)?;
    let p = x.ncols();
    if k > p {
        return Err(Error::KOutOfRange { k, limit: p + 1 });
    }
    let fit = ridge_fit_dual(x, y, lambda, None)?;
    if k == 0 {
        return Ok(IdentityResidual {
            absolute: 0.0,
            scale: 0.0,
        });
    }
    let ak = DualSystem::new(x, lambda, k, None)?;
    let head = x.columns(0, k);
    let th = fit.theta_hat.rows(0, k).into_owned();
    let ak_y = ak.solve(y);
    let rhs = head.tr_mul(&ak_y);
    let lhs = &th + head.tr_mul(&ak.solve(&(head * &th)));
    Ok(IdentityResidual {
        absolute: (lhs - &rhs).norm(),
        scale: rhs.norm(),
    })
}

/// Extreme eigenvalues of `A_k = λI_n + X_{k:∞}X_{k:∞}ᵀ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigDiagnostics {
    #[serde(rename = "mu_max_Ak")]
    pub mu_max: f64,
    #[serde(rename = "mu_min_Ak")]
    pub mu_min: f64,
    /// `μ_max / μ_min` when positive definite, `+∞` otherwise.
    #[serde(rename = "cond_Ak")]
    pub cond: f64,
    pub pd: bool,
    pub k: usize,
}

impl EigDiagnostics {
    fn from_extremes(mu_min: f64, mu_max: f64, k: usize) -> Self {
        let pd = mu_min > 0.0;
        EigDiagnostics {
            mu_max,
            mu_min,
            cond: if pd { mu_max / mu_min } else { f64::INFINITY },
            pd,
            k,
        }
    }
}

/// Diagnostics for `A_k`; `k = p` gives `λI_n`. Non-PD systems are reported, not rejected.
pub fn eig_diagnostics(x: &DMatrix<f64>, lambda: f64, k: usize) -> Result<EigDiagnostics> {
    if k > x.ncols() {
        return Err(Error::KOutOfRange {
            k,
            limit: x.ncols() + 1,
        });
    }
    let (lo, hi) = extremes(&add_diag(tail_gram(x, k), lambda));
    Ok(EigDiagnostics::from_extremes(lo, hi, k))
}

/// `μ_n(A_{−j})` where `A_{−j} = λI_n + Σ_{i≠j} x_i x_iᵀ` drops column `j` (1-based).
pub fn eig_min_loo(x: &DMatrix<f64>, lambda: f64, j: usize) -> Result<f64> {
    let p = x.ncols();
    if j == 0 || j > p {
        return Err(Error::Validation {
            what: "leave-one-out column",
            index: j,
            reason: format!("must lie in 1..={p}"),
        });
    }
    let xj = x.column(j - 1);
    let a = add_diag(gram(x) - xj * xj.transpose(), lambda);
    Ok(extremes(&a).0)
}

/// `E_s B` for `θ* = s ⊙ θ̄` with i.i.d. uniform signs `s`.
///
/// Cross terms vanish in expectation, leaving
/// `Σ_j θ̄_j² [(I−H)Σ(I−H)]_jj` with `H = XᵀA⁻¹X`.
pub fn expected_bias_sign_prior(
    x: &DMatrix<f64>,
    spec: &Spectrum,
    theta_bar: &[f64],
    lambda: f64,
) -> Result<f64> {
    check_spec(x, spec)?;
    if theta_bar.len() != spec.p() {
        return Err(Error::Dimension(format!(
            "θ̄ has length {}, expected {}",
            theta_bar.len(),
            spec.p()
        )));
    }
    let sys = DualSystem::new(x, lambda, 0, None)?;
    let support: Vec<usize> = (0..spec.p()).filter(|&j| theta_bar[j] != 0.0).collect();
    if support.is_empty() {
        return Ok(0.0);
    }
    let xsup = x.select_columns(support.iter());
    let w = sys.solve_matrix(&xsup);
    let m = gram(&sigma_half_columns(x, spec));
    let mw = &m * &w;
    let eig = spec.eigenvalues();
    let mut total = 0.0;
    for (c, &j) in support.iter().enumerate() {
        let h_jj = xsup.column(c).dot(&w.column(c));
        let quad = w.column(c).dot(&mw.column(c));
        let diag = eig[j] - 2.0 * eig[j] * h_jj + quad;
        total += theta_bar[j] * theta_bar[j] * diag;
    }
    Ok(total)
}

/// Eigendecomposition `XXᵀ = U diag(g) Uᵀ` reused across a grid of `λ` values.
///
/// With `A = U diag(g + λ) Uᵀ`, each `λ` costs `O(n² + np)` instead of a new
/// factorization, and the PD margin is exactly `min g + λ`.
#[derive(Debug, Clone)]
pub struct SpectralPath<'a> {
    x: &'a DMatrix<f64>,
    spec: &'a Spectrum,
    u: DMatrix<f64>,
    g: DVector<f64>,
    /// `diag(Uᵀ XΣXᵀ U)`.
    d: DVector<f64>,
    theta: DVector<f64>,
    /// `Uᵀ X θ*`.
    c: DVector<f64>,
}

impl<'a> SpectralPath<'a> {
    pub fn new(x: &'a DMatrix<f64>, spec: &'a Spectrum, theta_star: &[f64]) -> Result<Self> {
        check_spec(x, spec)?;
        if theta_star.len() != spec.p() {
            return Err(Error::Dimension(format!(
                "θ* has length {}, expected {}",
                theta_star.len(),
                spec.p()
            )));
        }
        let SymmetricEigen {
            eigenvectors: u,
            eigenvalues: g,
        } = gram(x).symmetric_eigen();
        let xs_t_u = sigma_half_columns(x, spec).tr_mul(&u);
        let d = DVector::from_iterator(
            u.ncols(),
            xs_t_u.column_iter().map(|col| col.norm_squared()),
        );
        let theta = DVector::from_column_slice(theta_star);
        let c = u.tr_mul(&(x * &theta));
        Ok(SpectralPath {
            x,
            spec,
            u,
            g,
            d,
            theta,
            c,
        })
    }

    /// Eigenvalues of `XXᵀ`, unordered.
    pub fn gram_eigenvalues(&self) -> &DVector<f64> {
        &self.g
    }

    /// `μ_n(λI_n + XXᵀ)`.
    pub fn pd_margin(&self, lambda: f64) -> f64 {
        self.g.min() + lambda
    }

    /// `μ_1(λI_n + XXᵀ)`.
    pub fn mu_max(&self, lambda: f64) -> f64 {
        self.g.max() + lambda
    }

    fn check_pd(&self, lambda: f64) -> Result<()> {
        let mu_min = self.pd_margin(lambda);
        let tolerance = default_pd_tolerance(self.mu_max(lambda));
        if mu_min > tolerance {
            Ok(())
        } else {
            Err(Error::NotPositiveDefinite {
                min_eigenvalue: mu_min,
                tolerance,
            })
        }
    }

    pub fn bias(&self, lambda: f64) -> Result<f64> {
        self.check_pd(lambda)?;
        let scaled = self.c.zip_map(&self.g, |c, g| c / (g + lambda));
        let alpha = &self.u * scaled;
        let r = &self.theta - self.x.tr_mul(&alpha);
        Ok(sigma_weighted_sq(self.spec, &r))
    }

    pub fn variance(&self, lambda: f64, sigma_eps: f64) -> Result<f64> {
        self.check_pd(lambda)?;
        let s: f64 = self
            .d
            .iter()
            .zip(self.g.iter())
            .map(|(d, g)| d / ((g + lambda) * (g + lambda)))
            .sum();
        Ok(sigma_eps * sigma_eps * s)
    }

    pub fn risk(&self, lambda: f64, sigma_eps: f64) -> Result<RiskDecomposition> {
        let bias = self.bias(lambda)?;
        let variance_expected = self.variance(lambda, sigma_eps)?;
        Ok(RiskDecomposition {
            bias,
            variance_expected,
            variance_realized: None,
            mse: bias + variance_expected,
        })
    }
}

/// Eigenvalues of `X_{k:∞}X_{k:∞}ᵀ`; shift by `λ` to get those of `A_k`.
pub fn tail_gram_eigenvalues(x: &DMatrix<f64>, k: usize) -> DVector<f64> {
    tail_gram(x, k).symmetric_eigenvalues()
}

/// Diagnostics for `A_k` from precomputed tail-Gram eigenvalues.
pub fn diagnostics_from_eigenvalues(eigs: &DVector<f64>, lambda: f64, k: usize) -> EigDiagnostics {
    EigDiagnostics::from_extremes(eigs.min() + lambda, eigs.max() + lambda, k)
}
