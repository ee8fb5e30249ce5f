//! Closed-form bias and variance bounds.
//!
//! Every evaluator here is constant-free: the unnamed absolute constants of
//! the theory (`c`, `c_x`, `C_x`, `≲_{σ_x}`) are collapsed into a single
//! `calibration_c` that multiplies upper bounds and divides lower bounds.
//! With `calibration_c = 1` the functions return the bare right-hand sides.
//!
//! The quantities are organised around a split index `k`:
//!
//! * `‖θ*_{k:∞}‖²_{Σ_{k:∞}} = Σ_{i>k} λ_i θ_i²` is the signal energy in the tail,
//!   which is never estimated and goes straight into the bias;
//! * `‖θ*_{0:k}‖²_{Σ_{0:k}⁻¹} = Σ_{i≤k} θ_i² / λ_i` is the spiked-part signal,
//!   whose error shrinks as its variance grows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectrum::{effective_ranks, select_k_star, EffectiveRanks, Spectrum};

/// True parameter `θ*` expressed in the covariance eigenbasis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    pub theta_star: Vec<f64>,
}

impl SignalSpec {
    pub fn new(theta_star: Vec<f64>) -> Self {
        SignalSpec { theta_star }
    }

    pub fn zeros(p: usize) -> Self {
        SignalSpec::new(vec![0.0; p])
    }

    /// Standard basis vector `e_i` (0-based).
    pub fn basis(p: usize, i: usize) -> Self {
        let mut v = vec![0.0; p];
        v[i] = 1.0;
        SignalSpec::new(v)
    }

    pub fn check_against(&self, spec: &Spectrum) -> Result<()> {
        if self.theta_star.len() != spec.p() {
            return Err(Error::Dimension(format!(
                "θ* has length {} but the spectrum has p = {}",
                self.theta_star.len(),
                spec.p()
            )));
        }
        if let Some(i) = self.theta_star.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation {
                what: "θ* coordinate",
                index: i,
                reason: "not finite".into(),
            });
        }
        Ok(())
    }

    /// `‖θ*‖²_Σ`.
    pub fn energy(&self, spec: &Spectrum) -> f64 {
        weighted_sq(spec.eigenvalues(), &self.theta_star)
    }

    /// `‖θ*_{k:∞}‖²_{Σ_{k:∞}}`.
    pub fn tail_energy(&self, spec: &Spectrum, k: usize) -> f64 {
        let k = k.min(spec.p());
        weighted_sq(spec.tail(k), &self.theta_star[k..])
    }

    /// `‖θ*_{0:k}‖²_{Σ_{0:k}⁻¹}`.
    pub fn head_inverse_energy(&self, spec: &Spectrum, k: usize) -> f64 {
        spec.head(k)
            .iter()
            .zip(&self.theta_star)
            .map(|(l, t)| t * t / l)
            .sum()
    }

    /// Unweighted `‖θ*_{0:k}‖²`.
    pub fn head_norm_sq(&self, k: usize) -> f64 {
        self.theta_star[..k.min(self.theta_star.len())]
            .iter()
            .map(|t| t * t)
            .sum()
    }

    /// Unweighted `‖θ*_{k:∞}‖²`.
    pub fn tail_norm_sq(&self, k: usize) -> f64 {
        self.theta_star[k.min(self.theta_star.len())..]
            .iter()
            .map(|t| t * t)
            .sum()
    }
}

fn weighted_sq(weights: &[f64], v: &[f64]) -> f64 {
    weights.iter().zip(v).map(|(l, t)| l * t * t).sum()
}

/// A fixed problem instance: spectrum, signal, sample size and regularization.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    pub spectrum: &'a Spectrum,
    pub signal: &'a SignalSpec,
    pub n: usize,
    pub lambda: f64,
}

impl<'a> Problem<'a> {
    pub fn new(
        spectrum: &'a Spectrum,
        signal: &'a SignalSpec,
        n: usize,
        lambda: f64,
    ) -> Result<Self> {
        signal.check_against(spectrum)?;
        if n == 0 {
            return Err(Error::domain("problem", "sample size n must be ≥ 1"));
        }
        Ok(Problem {
            spectrum,
            signal,
            n,
            lambda,
        })
    }

    pub fn ranks(&self, k: usize) -> Result<EffectiveRanks> {
        effective_ranks(self.spectrum, self.lambda, self.n, k)
    }
}

/// Constants entering the bound values. All default to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoundConstants {
    /// Condition-number bound on `A_k`.
    #[serde(rename = "L")]
    pub l: f64,
    /// Probability parameter; enters variance bounds as `σ_ε² t`.
    pub t: f64,
    pub sigma_x: f64,
    pub sigma_eps: f64,
    pub calibration_c: f64,
}

impl Default for BoundConstants {
    fn default() -> Self {
        BoundConstants {
            l: 1.0,
            t: 1.0,
            sigma_x: 1.0,
            sigma_eps: 1.0,
            calibration_c: 1.0,
        }
    }
}

impl BoundConstants {
    fn check(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !(self.l.is_finite() && self.l >= 1.0) {
            return Err(Error::domain(
                "bound constants",
                format!("L = {} must be ≥ 1", self.l),
            ));
        }
        if !ok(self.t) || !ok(self.sigma_x) || !ok(self.calibration_c) {
            return Err(Error::domain(
                "bound constants",
                "t, σ_x and calibration_c must be positive",
            ));
        }
        if !(self.sigma_eps.is_finite() && self.sigma_eps >= 0.0) {
            return Err(Error::domain("bound constants", "σ_ε must be non-negative"));
        }
        Ok(())
    }
}

/// A pair of upper bounds on bias and variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpperBounds {
    pub bias: f64,
    pub variance: f64,
}

/// Bounds that hold when the condition number of `A_k` is at most `L`:
///
/// ```text
/// B ≤ c L⁴ (‖θ*_{k:∞}‖²_{Σ_{k:∞}} + ‖θ*_{0:k}‖²_{Σ_{0:k}⁻¹} ((λ + Σ_{i>k} λ_i)/n)²)
/// V ≤ c σ_ε² t L² (k/n + n Σ_{i>k} λ_i² / (λ + Σ_{i>k} λ_i)²)
/// ```
pub fn upper_bounds_conditioned(
    problem: &Problem,
    k: usize,
    constants: &BoundConstants,
) -> Result<UpperBounds> {
    constants.check()?;
    let r = problem.ranks(k)?;
    let c = constants.calibration_c;
    let l2 = constants.l * constants.l;
    let over = matched_over(problem, &r);
    Ok(UpperBounds {
        bias: c * l2 * l2 * over.0,
        variance: c * constants.sigma_eps.powi(2) * constants.t * l2 * over.1,
    })
}

/// `(B̄, V̄)` at the given ranks.
fn matched_over(problem: &Problem, r: &EffectiveRanks) -> (f64, f64) {
    let spec = problem.spectrum;
    let n = problem.n as f64;
    let reg = r.regularized_tail();
    let b = problem.signal.tail_energy(spec, r.k)
        + problem.signal.head_inverse_energy(spec, r.k) * (reg / n).powi(2);
    let v = r.k as f64 / n + n * r.tail_sq_sum / (reg * reg);
    (b, v)
}

/// The general bound, valid for any `λ` with `A_k` positive definite, in
/// terms of `μ_1(A_k⁻¹) ≥ μ_n(A_k⁻¹) > 0`.
#[allow(clippy::too_many_arguments)]
pub fn upper_bounds_general(
    problem: &Problem,
    k: usize,
    mu1_ainv: f64,
    mun_ainv: f64,
    t: f64,
    sigma_eps: f64,
    calibration_c: f64,
) -> Result<UpperBounds> {
    let spec = problem.spectrum;
    if k >= spec.p() || k > problem.n {
        return Err(Error::KOutOfRange {
            k,
            limit: spec.p().min(problem.n + 1),
        });
    }
    if !(mun_ainv.is_finite() && mun_ainv > 0.0 && mu1_ainv.is_finite() && mu1_ainv >= mun_ainv) {
        return Err(Error::domain(
            "general upper bound",
            format!(
                "need μ_1(A_k⁻¹) ≥ μ_n(A_k⁻¹) > 0, got {mu1_ainv} and {mun_ainv} (A_k must be PD)"
            ),
        ));
    }
    let n = problem.n as f64;
    let lk1 = spec.eigenvalues()[k];
    let tail_sq = spec.tail_sq_sum(k);
    let cond_sq = (mu1_ainv / mun_ainv).powi(2);
    let mu1_sq = mu1_ainv * mu1_ainv;

    let tail_factor = 1.0 + cond_sq + mu1_sq * (n * n * lk1 * lk1 + n * tail_sq);
    let head_factor = 1.0 / (n * n * mun_ainv * mun_ainv) + cond_sq * (lk1 * lk1 + tail_sq / n);
    let bias = problem.signal.tail_energy(spec, k) * tail_factor
        + problem.signal.head_inverse_energy(spec, k) * head_factor;
    let variance = sigma_eps * sigma_eps * t * (cond_sq * k as f64 / n + n * mu1_sq * tail_sq);
    Ok(UpperBounds {
        bias: calibration_c * bias,
        variance: calibration_c * variance,
    })
}

/// Variance lower bound for independent-coordinate designs and unit-variance
/// noise:
///
/// ```text
/// V ≥ (1/(c n)) Σ_i min{1, λ_i² / (σ_x⁴ λ_{k+1}² (ρ_k + 2)²)}
/// ```
///
/// Refuses `λ < 0`, where the bound is not established.
pub fn lower_bound_variance(
    spec: &Spectrum,
    n: usize,
    lambda: f64,
    k: usize,
    sigma_x: f64,
    calibration_c: f64,
) -> Result<f64> {
    if lambda < 0.0 {
        return Err(Error::domain(
            "variance lower bound",
            format!("requires λ ≥ 0, got {lambda}"),
        ));
    }
    let r = effective_ranks(spec, lambda, n, k)?;
    let lk1 = spec.eigenvalues()[k];
    let denom = sigma_x.powi(4) * (lk1 * (r.rho_k + 2.0)).powi(2);
    let sum: f64 = spec
        .eigenvalues()
        .iter()
        .map(|l| (l * l / denom).min(1.0))
        .sum();
    Ok(sum / (n as f64 * calibration_c))
}

/// Bias lower bound under a random sign-flip prior on `θ̄`:
///
/// ```text
/// E B ≥ (1/(2c)) Σ_i λ_i θ̄_i² / (1 + λ_i / (2 L λ_{k+1} ρ_k))²
/// ```
pub fn lower_bound_bias(
    spec: &Spectrum,
    theta_bar: &[f64],
    lambda: f64,
    n: usize,
    k: usize,
    l: f64,
    calibration_c: f64,
) -> Result<f64> {
    if lambda < 0.0 {
        return Err(Error::domain(
            "bias lower bound",
            format!("requires λ ≥ 0, got {lambda}"),
        ));
    }
    if l < 1.0 {
        return Err(Error::domain(
            "bias lower bound",
            format!("L = {l} must be ≥ 1"),
        ));
    }
    if theta_bar.len() != spec.p() {
        return Err(Error::Dimension(format!(
            "θ̄ has length {} but p = {}",
            theta_bar.len(),
            spec.p()
        )));
    }
    let r = effective_ranks(spec, lambda, n, k)?;
    let scale = 2.0 * l * spec.eigenvalues()[k] * r.rho_k;
    let sum: f64 = spec
        .eigenvalues()
        .iter()
        .zip(theta_bar)
        .map(|(li, t)| li * t * t / (1.0 + li / scale).powi(2))
        .sum();
    Ok(0.5 * sum / calibration_c)
}

/// The four matched quantities `B̲, B̄, V̲, V̄` at split index `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedBounds {
    pub rho_k: f64,
    pub b_under: f64,
    pub b_over: f64,
    pub v_under: f64,
    pub v_over: f64,
}

impl MatchedBounds {
    /// `B̄ / B̲`, with `0/0 = 1`.
    pub fn bias_ratio(&self) -> f64 {
        safe_ratio(self.b_over, self.b_under)
    }

    /// `V̄ / V̲`.
    pub fn variance_ratio(&self) -> f64 {
        safe_ratio(self.v_over, self.v_under)
    }
}

/// `num / den` with the convention `0/0 = 1`.
pub fn safe_ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 && den == 0.0 {
        1.0
    } else {
        num / den
    }
}

/// Evaluates
///
/// ```text
/// B̲ = Σ_i λ_i θ_i² / (1 + λ_i/(λ_{k+1} ρ_k))²
/// B̄ = ‖θ*_{k:∞}‖²_{Σ_{k:∞}} + ‖θ*_{0:k}‖²_{Σ_{0:k}⁻¹} ((λ + Σ_{i>k} λ_i)/n)²
/// V̲ = (1/n) Σ_i min{1, λ_i² / (λ_{k+1}² (ρ_k + 2)²)}
/// V̄ = k/n + n Σ_{i>k} λ_i² / (λ + Σ_{i>k} λ_i)²
/// ```
pub fn matched_bounds(problem: &Problem, k: usize) -> Result<MatchedBounds> {
    let r = problem.ranks(k)?;
    let spec = problem.spectrum;
    let n = problem.n as f64;
    let lk1 = spec.eigenvalues()[k];
    // λ_{k+1} ρ_k = (λ + Σ_{i>k} λ_i)/n
    let scale = r.regularized_tail() / n;
    let b_under = spec
        .eigenvalues()
        .iter()
        .zip(&problem.signal.theta_star)
        .map(|(l, t)| l * t * t / (1.0 + l / scale).powi(2))
        .sum();
    let vd = (lk1 * (r.rho_k + 2.0)).powi(2);
    let v_under = spec
        .eigenvalues()
        .iter()
        .map(|l| (l * l / vd).min(1.0))
        .sum::<f64>()
        / n;
    let (b_over, v_over) = matched_over(problem, &r);
    Ok(MatchedBounds {
        rho_k: r.rho_k,
        b_under,
        b_over,
        v_under,
        v_over,
    })
}

/// How the effective rank was bracketed when computing ratio caps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum RatioCapMode {
    /// `ρ_k ∈ (a, b)` for a fixed `k`.
    Interval { a: f64, b: f64 },
    /// `k = min{l : ρ_l > b}` with `b > 1/n`.
    Kstar { b: f64, n: usize },
}

/// Caps on `B̄/B̲` and `V̄/V̲`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioCaps {
    pub bias: f64,
    pub variance: f64,
}

fn caps_from(a: f64, b: f64) -> RatioCaps {
    RatioCaps {
        bias: (1.0 + b).powi(2).max((1.0 + 1.0 / a).powi(2)),
        variance: (2.0 + b).powi(2).max((1.0 + 2.0 / a).powi(2)),
    }
}

/// `max{(1+b)², (1+a⁻¹)²}` and `max{(2+b)², (1+2a⁻¹)²}`; in k* mode `a = b`.
pub fn ratio_caps(rho_k: f64, mode: RatioCapMode) -> Result<RatioCaps> {
    match mode {
        RatioCapMode::Interval { a, b } => {
            if !(a > 0.0 && a < rho_k && rho_k < b && b.is_finite()) {
                return Err(Error::domain(
                    "ratio caps",
                    format!(
                        "interval mode needs 0 < a < ρ_k < b, got a = {a}, ρ_k = {rho_k}, b = {b}"
                    ),
                ));
            }
            Ok(caps_from(a, b))
        }
        RatioCapMode::Kstar { b, n } => {
            if !(n > 0 && b > 1.0 / n as f64 && rho_k > b && b.is_finite()) {
                return Err(Error::domain(
                    "ratio caps",
                    format!(
                        "k* mode needs b > 1/n and ρ_k > b, got b = {b}, n = {n}, ρ_k = {rho_k}"
                    ),
                ));
            }
            Ok(caps_from(b, b))
        }
    }
}

/// Interval-mode caps in the limit `a ↑ ρ_k`, `b ↓ ρ_k`: the smallest caps the
/// interval statement certifies at a fixed `k`.
pub fn tight_ratio_caps(rho_k: f64) -> RatioCaps {
    caps_from(rho_k, rho_k)
}

/// Per-component weights of the mixture form of the bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentWeights {
    /// `λ_i θ_i² ρ_k²λ_{k+1}² / (ρ_k²λ_{k+1}² + λ_i²)`
    pub bias: Vec<f64>,
    /// `(1/n) λ_i² / (ρ_k²λ_{k+1}² + λ_i²)`
    pub variance: Vec<f64>,
}

impl ComponentWeights {
    pub fn bias_total(&self) -> f64 {
        self.bias.iter().sum()
    }

    pub fn variance_total(&self) -> f64 {
        self.variance.iter().sum()
    }
}

pub fn componentwise_bounds(problem: &Problem, k: usize) -> Result<ComponentWeights> {
    let r = problem.ranks(k)?;
    let n = problem.n as f64;
    let s2 = (r.regularized_tail() / n).powi(2);
    let eig = problem.spectrum.eigenvalues();
    let bias = eig
        .iter()
        .zip(&problem.signal.theta_star)
        .map(|(l, t)| l * t * t * s2 / (s2 + l * l))
        .collect();
    let variance = eig.iter().map(|l| l * l / (s2 + l * l) / n).collect();
    Ok(ComponentWeights { bias, variance })
}

/// The `min`-form of the mixture bounds:
/// `(Σ_i λ_iθ_i² min{ρ_k²λ_{k+1}²/λ_i², 1}, (1/n) Σ_i min{1, λ_i²/(ρ_k²λ_{k+1}²)})`.
pub fn min_form_bounds(problem: &Problem, k: usize) -> Result<(f64, f64)> {
    let r = problem.ranks(k)?;
    let n = problem.n as f64;
    let s2 = (r.regularized_tail() / n).powi(2);
    let eig = problem.spectrum.eigenvalues();
    let b = eig
        .iter()
        .zip(&problem.signal.theta_star)
        .map(|(l, t)| l * t * t * (s2 / (l * l)).min(1.0))
        .sum();
    let v = eig.iter().map(|l| (l * l / s2).min(1.0)).sum::<f64>() / n;
    Ok((b, v))
}

/// Which statement produced an eigenvalue envelope.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeContext {
    /// Top/bottom eigenvalue of `A_k`, the bottom edge under a small-ball condition.
    AkEnvelope,
    /// Two-sided control of `A_0` transferred from a well-conditioned `A_k`.
    A0Envelope,
    /// Floor on `ρ_k` implied by a condition-number bound.
    RhoLowerBound,
}

/// Predicted range for the extreme eigenvalues of a regularized Gram matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigEnvelope {
    pub mu_min_pred: f64,
    pub mu_max_pred: f64,
    pub context: EnvelopeContext,
}

impl EigEnvelope {
    pub fn contains(&self, mu_min: f64, mu_max: f64) -> bool {
        mu_min >= self.mu_min_pred && mu_max <= self.mu_max_pred
    }
}

/// Envelope for `μ_max(A_k)` and, given a small-ball constant `L`, `μ_min(A_k)`:
///
/// ```text
/// μ_max ≤ λ + c σ_x² (λ_{k+1}(t + n) + Σ_{i>k} λ_i)
/// μ_min ≥ λ + Σ_{i>k} λ_i / L − c σ_x² √((t + n)(λ_{k+1}²(t + n) + Σ_{i>k} λ_i²))
/// ```
///
/// Without `L` the lower edge is the trivial `μ_min ≥ λ`. `k = p` (empty tail) is allowed.
#[allow(clippy::too_many_arguments)]
pub fn eigenvalue_envelope_ak(
    spec: &Spectrum,
    lambda: f64,
    k: usize,
    n: usize,
    t: f64,
    sigma_x: f64,
    small_ball_l: Option<f64>,
    calibration_c: f64,
) -> Result<EigEnvelope> {
    if k > spec.p() {
        return Err(Error::KOutOfRange {
            k,
            limit: spec.p() + 1,
        });
    }
    if t < 0.0 {
        return Err(Error::domain(
            "A_k envelope",
            format!("t = {t} must be non-negative"),
        ));
    }
    let lk1 = spec.lambda(k + 1).unwrap_or(0.0);
    let tail = spec.tail_sum(k);
    let tail_sq = spec.tail_sq_sum(k);
    let tn = t + n as f64;
    let s2 = calibration_c * sigma_x * sigma_x;
    let mu_max_pred = lambda + s2 * (lk1 * tn + tail);
    let mu_min_pred = match small_ball_l {
        Some(l) => {
            if l <= 0.0 {
                return Err(Error::domain(
                    "A_k envelope",
                    "small-ball L must be positive",
                ));
            }
            lambda + tail / l - s2 * (tn * (lk1 * lk1 * tn + tail_sq)).sqrt()
        }
        None => lambda,
    };
    Ok(EigEnvelope {
        mu_min_pred,
        mu_max_pred,
        context: EnvelopeContext::AkEnvelope,
    })
}

/// Envelope on `μ_n(A_0), μ_1(A_0)` when `λ + Σ_i λ_i ≥ K n λ_1` for `K > 1`
/// and some `A_k` has condition number at most `L`:
///
/// ```text
/// (1 − tσ_x²/n)(K−1)/(LK) (λ + Σλ_i) ≤ μ_n(A_0) ≤ μ_1(A_0) ≤ c σ_x² (K+2)/K (λ + Σλ_i)
/// ```
#[allow(clippy::too_many_arguments)]
pub fn envelope_a0_from_ak(
    spec: &Spectrum,
    lambda: f64,
    n: usize,
    t: f64,
    sigma_x: f64,
    l: f64,
    big_k: f64,
    calibration_c: f64,
) -> Result<EigEnvelope> {
    let nf = n as f64;
    if big_k <= 1.0 {
        return Err(Error::domain(
            "A_0 envelope",
            format!("K = {big_k} must exceed 1"),
        ));
    }
    if !(0.0..nf).contains(&t) {
        return Err(Error::domain(
            "A_0 envelope",
            format!("t = {t} must lie in [0, n)"),
        ));
    }
    if l <= 0.0 {
        return Err(Error::domain("A_0 envelope", "L must be positive"));
    }
    let total = lambda + spec.total_sum();
    let need = big_k * nf * spec.eigenvalues()[0];
    if total < need {
        return Err(Error::domain(
            "A_0 envelope",
            format!("condition λ + Σλ_i ≥ K n λ_1 fails: {total} < {need}"),
        ));
    }
    let s2 = sigma_x * sigma_x;
    Ok(EigEnvelope {
        mu_min_pred: (1.0 - t * s2 / nf) * (big_k - 1.0) / (l * big_k) * total,
        mu_max_pred: calibration_c * s2 * (big_k + 2.0) / big_k * total,
        context: EnvelopeContext::A0Envelope,
    })
}

/// Floor `ρ_k ≥ 1/(c L)` implied by a condition-number bound `L` on `A_k`.
pub fn rho_floor(l: f64, calibration_c: f64) -> EigEnvelope {
    EigEnvelope {
        mu_min_pred: 1.0 / (calibration_c * l),
        mu_max_pred: f64::INFINITY,
        context: EnvelopeContext::RhoLowerBound,
    }
}

/// One of the three regularization regimes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "regime", rename_all = "snake_case")]
pub enum Regime {
    /// `λ = n λ_{k+1}`; suited to spectra with `n λ_{k+1} ≳ Σ_{i>k} λ_i`.
    LargeLambda { k: usize },
    /// Caller-chosen `λ ∈ [0, Σ_{i>k} λ_i)` on spectra with a heavy tail.
    ZeroLambda { k: usize, lambda: f64 },
    /// Negative `λ` parametrized by `ξ`.
    NegativeLambda { k: usize, xi: f64 },
}

/// Which display a regime bound was evaluated with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeForm {
    /// The general display in terms of tail sums.
    General,
    /// The spiked-plateau display (`λ_i = λ_1` for `i ≤ k`, `λ_{k+1}` after).
    SpikedPlateau,
}

/// Constant-free comparison behind a regime's hypothesis. Reported, not enforced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeHypothesis {
    pub statement: String,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeBounds {
    pub lambda_used: f64,
    pub bias: f64,
    pub variance: f64,
    pub form: RegimeForm,
    pub hypothesis: RegimeHypothesis,
}

/// `λ(ξ)` for the negative regime.
///
/// On a spiked plateau: `−Σ_{i>k} λ_i + ξ λ_{k+1} √(n p)`; otherwise
/// `−Σ_{i>k} λ_i + ξ (n λ_1 + √(n Σ_{i>k} λ_i²))`.
pub fn negative_lambda(spec: &Spectrum, n: usize, k: usize, xi: f64) -> (f64, RegimeForm) {
    let nf = n as f64;
    let tail = spec.tail_sum(k);
    if spec.is_spiked_plateau(k) {
        let lk1 = spec.eigenvalues()[k];
        (
            -tail + xi * lk1 * (nf * spec.p() as f64).sqrt(),
            RegimeForm::SpikedPlateau,
        )
    } else {
        (
            -tail + xi * (nf * spec.eigenvalues()[0] + (nf * spec.tail_sq_sum(k)).sqrt()),
            RegimeForm::General,
        )
    }
}

/// Bounds for the three regimes, with `λ` chosen by the regime.
pub fn regime_bounds(
    spec: &Spectrum,
    signal: &SignalSpec,
    n: usize,
    regime: Regime,
    t: f64,
    sigma_eps: f64,
    calibration_c: f64,
) -> Result<RegimeBounds> {
    signal.check_against(spec)?;
    let k = match regime {
        Regime::LargeLambda { k }
        | Regime::ZeroLambda { k, .. }
        | Regime::NegativeLambda { k, .. } => k,
    };
    let limit = n.min(spec.p());
    if k >= limit {
        return Err(Error::KOutOfRange { k, limit });
    }
    let nf = n as f64;
    let pf = spec.p() as f64;
    let kf = k as f64;
    let eig = spec.eigenvalues();
    let lk1 = eig[k];
    let l1 = eig[0];
    let tail = spec.tail_sum(k);
    let tail_sq = spec.tail_sq_sum(k);
    let tail_energy = signal.tail_energy(spec, k);
    let head_inv = signal.head_inverse_energy(spec, k);
    let noise = calibration_c * sigma_eps * sigma_eps * t;
    let heavy_tail = RegimeHypothesis {
        statement: "Σ_{i>k} λ_i ≥ n λ_{k+1}".into(),
        lhs: tail,
        rhs: nf * lk1,
        holds: tail >= nf * lk1,
    };

    let out = match regime {
        Regime::LargeLambda { .. } => {
            // λ_k for k ≥ 1; with an empty spiked part fall back to λ_1.
            let lk = if k == 0 { l1 } else { eig[k - 1] };
            RegimeBounds {
                lambda_used: nf * lk1,
                bias: calibration_c * (tail_energy + lk * lk * head_inv),
                variance: noise * (kf / nf + tail_sq / (nf * lk * lk)),
                form: RegimeForm::General,
                hypothesis: RegimeHypothesis {
                    statement: "n λ_{k+1} ≥ Σ_{i>k} λ_i".into(),
                    lhs: nf * lk1,
                    rhs: tail,
                    holds: nf * lk1 >= tail,
                },
            }
        }
        Regime::ZeroLambda { lambda, .. } => {
            if !(lambda >= 0.0 && lambda < tail) {
                return Err(Error::domain(
                    "zero-regularization regime",
                    format!("needs 0 ≤ λ < Σ_{{i>k}} λ_i = {tail}, got {lambda}"),
                ));
            }
            if spec.is_spiked_plateau(k) {
                RegimeBounds {
                    lambda_used: lambda,
                    bias: calibration_c
                        * (signal.tail_norm_sq(k) * lk1
                            + signal.head_norm_sq(k) * lk1 * lk1 * pf * pf / (l1 * nf * nf)),
                    variance: noise * (kf / nf + nf / pf),
                    form: RegimeForm::SpikedPlateau,
                    hypothesis: heavy_tail,
                }
            } else {
                RegimeBounds {
                    lambda_used: lambda,
                    bias: calibration_c * (tail_energy + head_inv * (tail / nf).powi(2)),
                    variance: noise * (kf / nf + nf * tail_sq / (tail * tail)),
                    form: RegimeForm::General,
                    hypothesis: heavy_tail,
                }
            }
        }
        Regime::NegativeLambda { xi, .. } => {
            if !(xi.is_finite() && xi > 0.0) {
                return Err(Error::domain(
                    "negative-regularization regime",
                    format!("ξ = {xi} leaves λ + Σ_{{i>k}} λ_i ≤ 0"),
                ));
            }
            let (lambda_used, form) = negative_lambda(spec, n, k, xi);
            let hypothesis = RegimeHypothesis {
                statement: "Σ_{i>k} λ_i ≥ n λ_{k+1} and ξ > 1".into(),
                holds: heavy_tail.holds && xi > 1.0,
                ..heavy_tail
            };
            let xi2 = xi * xi;
            match form {
                RegimeForm::SpikedPlateau => RegimeBounds {
                    lambda_used,
                    bias: calibration_c
                        * (signal.tail_norm_sq(k) * lk1
                            + signal.head_norm_sq(k) * xi2 * lk1 * lk1 * pf / (l1 * nf)),
                    variance: noise * (kf / nf + 1.0 / xi2),
                    form,
                    hypothesis,
                },
                RegimeForm::General => {
                    let spread = nf * lk1 * lk1 + tail_sq;
                    RegimeBounds {
                        lambda_used,
                        bias: calibration_c * (tail_energy + head_inv * xi2 / nf * spread),
                        variance: noise * (kf / nf + tail_sq / (xi2 * spread)),
                        form,
                        hypothesis,
                    }
                }
            }
        }
    };
    Ok(out)
}

/// How the split index of a report was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KPolicy {
    Fixed { k: usize },
    Kstar { b: f64 },
}

impl Default for KPolicy {
    fn default() -> Self {
        KPolicy::Kstar {
            b: crate::spectrum::DEFAULT_KSTAR_THRESHOLD,
        }
    }
}

impl KPolicy {
    pub fn resolve(&self, spec: &Spectrum, lambda: f64, n: usize) -> Option<usize> {
        match *self {
            KPolicy::Fixed { k } => Some(k),
            KPolicy::Kstar { b } => select_k_star(spec, lambda, n, b),
        }
    }
}

/// Every bound evaluated at one `(λ, k)`.
///
/// `B_upper`/`V_upper` are the conditioned upper bounds (`c L⁴ B̄`,
/// `c σ_ε² t L² V̄`); `B_lower`/`V_lower` are `B̲/c` and `σ_ε² V̲/c`, so the
/// upper values dominate the lower ones whenever `L, t ≥ 1` and `c = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    #[serde(flatten)]
    pub effective: EffectiveRanks,
    #[serde(rename = "B_upper")]
    pub b_upper: f64,
    #[serde(rename = "V_upper")]
    pub v_upper: f64,
    #[serde(rename = "B_lower")]
    pub b_lower: f64,
    #[serde(rename = "V_lower")]
    pub v_lower: f64,
    #[serde(rename = "B_ratio_cap")]
    pub b_ratio_cap: f64,
    #[serde(rename = "V_ratio_cap")]
    pub v_ratio_cap: f64,
    #[serde(flatten)]
    pub constants: BoundConstants,
    pub k_policy: KPolicy,
}

impl BoundReport {
    pub fn k(&self) -> usize {
        self.effective.k
    }
}

pub const BOUND_CSV_HEADER: [&str; 10] = [
    "k",
    "lambda",
    "rho_k",
    "R_k",
    "B_upper",
    "V_upper",
    "B_lower",
    "V_lower",
    "B_ratio_cap",
    "V_ratio_cap",
];

impl BoundReport {
    pub fn csv_row(&self) -> [String; 10] {
        use crate::fmt_f64 as f;
        [
            self.effective.k.to_string(),
            f(self.effective.lambda),
            f(self.effective.rho_k),
            f(self.effective.big_r_k),
            f(self.b_upper),
            f(self.v_upper),
            f(self.b_lower),
            f(self.v_lower),
            f(self.b_ratio_cap),
            f(self.v_ratio_cap),
        ]
    }
}

/// Builds a [`BoundReport`] with `k` chosen by `policy`.
pub fn bound_report(
    problem: &Problem,
    policy: KPolicy,
    constants: &BoundConstants,
) -> Result<BoundReport> {
    let k = policy
        .resolve(problem.spectrum, problem.lambda, problem.n)
        .ok_or_else(|| {
            Error::domain(
                "k* selection",
                format!(
                    "no admissible l has ρ_l above the threshold at λ = {}",
                    problem.lambda
                ),
            )
        })?;
    let effective = problem.ranks(k)?;
    let up = upper_bounds_conditioned(problem, k, constants)?;
    let m = matched_bounds(problem, k)?;
    let caps = match policy {
        KPolicy::Fixed { .. } => tight_ratio_caps(m.rho_k),
        KPolicy::Kstar { b } => ratio_caps(m.rho_k, RatioCapMode::Kstar { b, n: problem.n })?,
    };
    let c = constants.calibration_c;
    Ok(BoundReport {
        effective,
        b_upper: up.bias,
        v_upper: up.variance,
        b_lower: m.b_under / c,
        v_lower: constants.sigma_eps.powi(2) * m.v_under / c,
        b_ratio_cap: caps.bias,
        v_ratio_cap: caps.variance,
        constants: *constants,
        k_policy: policy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ones(p: usize) -> Spectrum {
        Spectrum::from_values(vec![1.0; p]).unwrap()
    }

    #[test]
    fn conditioned_upper_bound_flat_spectrum() {
        let s = ones(100);
        let sig = SignalSpec::basis(100, 0);
        let pb = Problem::new(&s, &sig, 10, 0.0).unwrap();
        let up = upper_bounds_conditioned(&pb, 0, &BoundConstants::default()).unwrap();
        assert_relative_eq!(up.bias, 1.0, max_relative = 1e-15);
        assert_relative_eq!(up.variance, 0.1, max_relative = 1e-15);

        let zero = SignalSpec::zeros(100);
        let pb = Problem::new(&s, &zero, 10, 0.0).unwrap();
        assert_eq!(
            upper_bounds_conditioned(&pb, 0, &BoundConstants::default())
                .unwrap()
                .bias,
            0.0
        );
    }

    #[test]
    fn conditioned_variance_tends_to_k_over_n() {
        let s = Spectrum::from_values(vec![5.0, 3.0, 1.0, 1.0, 1.0, 1.0]).unwrap();
        let sig = SignalSpec::zeros(6);
        let pb = Problem::new(&s, &sig, 4, 1e12).unwrap();
        let up = upper_bounds_conditioned(&pb, 2, &BoundConstants::default()).unwrap();
        assert_relative_eq!(up.variance, 0.5, max_relative = 1e-9);
    }

    #[test]
    fn conditioned_rejects_bad_inputs() {
        let s = ones(10);
        let sig = SignalSpec::zeros(10);
        let pb = Problem::new(&s, &sig, 5, -10.0).unwrap();
        assert!(upper_bounds_conditioned(&pb, 0, &BoundConstants::default()).is_err());
        let pb = Problem::new(&s, &sig, 5, 0.0).unwrap();
        let bad = BoundConstants {
            l: 0.5,
            ..Default::default()
        };
        assert!(upper_bounds_conditioned(&pb, 0, &bad).is_err());
        assert!(Problem::new(&s, &SignalSpec::zeros(3), 5, 0.0).is_err());
    }

    #[test]
    fn general_bound_with_perfect_conditioning() {
        let s = ones(100);
        let sig = SignalSpec::basis(100, 0);
        let pb = Problem::new(&s, &sig, 10, 0.0).unwrap();
        let mu = 1.0 / 100.0;
        let g = upper_bounds_general(&pb, 0, mu, mu, 1.0, 1.0, 1.0).unwrap();
        // tail energy 1 × (1 + 1 + 1e-4·(10²·1 + 10·100)) = 2.11
        assert_relative_eq!(g.bias, 2.11, max_relative = 1e-14);
        let cond = upper_bounds_conditioned(&pb, 0, &BoundConstants::default()).unwrap();
        assert_relative_eq!(g.variance, cond.variance, max_relative = 1e-14);
        assert!(g.bias >= cond.bias);

        let zero = SignalSpec::zeros(100);
        let pb = Problem::new(&s, &zero, 10, 0.0).unwrap();
        assert_eq!(
            upper_bounds_general(&pb, 0, 0.02, 0.01, 1.0, 1.0, 1.0)
                .unwrap()
                .bias,
            0.0
        );
    }

    #[test]
    fn general_bound_rejects_non_pd() {
        let s = ones(10);
        let sig = SignalSpec::zeros(10);
        let pb = Problem::new(&s, &sig, 5, 0.0).unwrap();
        assert!(upper_bounds_general(&pb, 0, 1.0, 0.0, 1.0, 1.0, 1.0).is_err());
        assert!(upper_bounds_general(&pb, 0, 1.0, 2.0, 1.0, 1.0, 1.0).is_err());
        assert!(upper_bounds_general(&pb, 0, -1.0, -2.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn variance_lower_bound_flat() {
        let v = lower_bound_variance(&ones(100), 10, 0.0, 0, 1.0, 1.0).unwrap();
        assert_relative_eq!(v, 10.0 / 144.0, max_relative = 1e-14);
        // equal eigenvalues never saturate the min at 1
        let v = lower_bound_variance(&ones(30), 10, 2.0, 1, 1.5, 1.0).unwrap();
        let r = effective_ranks(&ones(30), 2.0, 10, 1).unwrap();
        assert_relative_eq!(
            v,
            3.0 / (1.5f64.powi(4) * (r.rho_k + 2.0).powi(2)),
            max_relative = 1e-14
        );
    }

    #[test]
    fn variance_lower_bound_errors() {
        assert!(matches!(
            lower_bound_variance(&ones(10), 5, -0.1, 0, 1.0, 1.0),
            Err(Error::Domain { .. })
        ));
        assert!(lower_bound_variance(&ones(1), 10, 0.0, 1, 1.0, 1.0).is_err());
        assert!(lower_bound_variance(&ones(1), 10, 0.0, 0, 1.0, 1.0).is_ok());
    }

    #[test]
    fn bias_lower_bound_examples() {
        let mut bar = vec![0.0; 100];
        bar[0] = 1.0;
        let b = lower_bound_bias(&ones(100), &bar, 0.0, 10, 0, 1.0, 1.0).unwrap();
        assert_relative_eq!(b, 0.5 / 1.05f64.powi(2), max_relative = 1e-14);
        assert_relative_eq!(b, 0.453_514, max_relative = 1e-5);
        assert_eq!(
            lower_bound_bias(&ones(100), &[0.0; 100], 0.0, 10, 0, 1.0, 1.0).unwrap(),
            0.0
        );
        // huge λ_{k+1}ρ_k sends the denominator to 1
        let s = Spectrum::from_values(vec![2.0, 1.0, 0.5]).unwrap();
        let b = lower_bound_bias(&s, &[1.0, 1.0, 1.0], 1e15, 2, 0, 1.0, 1.0).unwrap();
        assert_relative_eq!(b, 0.5 * 3.5, max_relative = 1e-9);
        assert!(lower_bound_bias(&s, &[1.0, 1.0, 1.0], -1.0, 2, 0, 1.0, 1.0).is_err());
    }

    #[test]
    fn matched_bounds_worked_instance() {
        let s = ones(100);
        let sig = SignalSpec::basis(100, 0);
        let pb = Problem::new(&s, &sig, 10, 0.0).unwrap();
        let m = matched_bounds(&pb, 0).unwrap();
        assert_relative_eq!(m.b_under, 100.0 / 121.0, max_relative = 1e-14);
        assert_relative_eq!(m.b_over, 1.0, max_relative = 1e-14);
        assert_relative_eq!(m.v_under, 10.0 / 144.0, max_relative = 1e-14);
        assert_relative_eq!(m.v_over, 0.1, max_relative = 1e-14);
        assert_relative_eq!(m.bias_ratio(), 1.21, max_relative = 1e-14);
        assert_relative_eq!(m.variance_ratio(), 1.44, max_relative = 1e-14);
        // V̄/V̲ = ((ρ+2)/ρ)² on a flat spectrum with k = 0
        assert_relative_eq!(
            m.variance_ratio(),
            ((m.rho_k + 2.0) / m.rho_k).powi(2),
            max_relative = 1e-14
        );
    }

    #[test]
    fn matched_tail_only_signal() {
        let s = Spectrum::from_values(vec![3.0, 2.0, 1.0, 0.5]).unwrap();
        let sig = SignalSpec::new(vec![0.3, -1.0, 2.0, 0.1]);
        let pb = Problem::new(&s, &sig, 3, 0.7).unwrap();
        let m = matched_bounds(&pb, 0).unwrap();
        assert_relative_eq!(m.b_over, sig.energy(&s), max_relative = 1e-14);
    }

    #[test]
    fn ratio_cap_arithmetic() {
        let c = ratio_caps(10.0, RatioCapMode::Interval { a: 9.0, b: 11.0 }).unwrap();
        assert_eq!(c.bias, 144.0);
        assert_eq!(c.variance, 169.0);
        let c = ratio_caps(1.5, RatioCapMode::Kstar { b: 1.0, n: 10 }).unwrap();
        assert_eq!(c.bias, 4.0);
        assert_eq!(c.variance, 9.0);
        assert!(ratio_caps(3.0, RatioCapMode::Interval { a: 3.0, b: 3.0 }).is_err());
        assert!(ratio_caps(3.0, RatioCapMode::Interval { a: 1.0, b: 2.0 }).is_err());
        assert!(ratio_caps(3.0, RatioCapMode::Kstar { b: 0.05, n: 10 }).is_err());
        assert!(ratio_caps(0.5, RatioCapMode::Kstar { b: 1.0, n: 10 }).is_err());
    }

    #[test]
    fn component_weights() {
        // λ_2 = ρ_k λ_{k+1}: equal mixture weights
        let s = Spectrum::from_values(vec![4.0, 2.0, 1.0, 1.0]).unwrap();
        let sig = SignalSpec::new(vec![1.0, 1.0, 1.0, 1.0]);
        // k = 1, tail = 4, n = 2: ρ_1 λ_2 = 4/2 = 2 = λ_2
        let pb = Problem::new(&s, &sig, 2, 0.0).unwrap();
        let w = componentwise_bounds(&pb, 1).unwrap();
        assert_relative_eq!(w.bias[1], 2.0 / 2.0, max_relative = 1e-14);
        assert_relative_eq!(w.variance[1], 1.0 / 4.0, max_relative = 1e-14);

        // huge λ_i relative to ρ_kλ_{k+1}
        let s = Spectrum::from_values(vec![1e9, 1.0, 1.0]).unwrap();
        let sig = SignalSpec::new(vec![1.0, 0.0, 0.0]);
        let pb = Problem::new(&s, &sig, 2, 0.0).unwrap();
        let w = componentwise_bounds(&pb, 1).unwrap();
        assert!(w.bias[0] / 1e9 < 1e-17);
        assert_relative_eq!(w.variance[0], 0.5, max_relative = 1e-12);
    }

    #[test]
    fn ak_envelope_examples() {
        let s = Spectrum::from_values(vec![2.0, 1.0]).unwrap();
        let e = eigenvalue_envelope_ak(&s, 0.0, 2, 10, 1.0, 1.0, Some(1.0), 1.0).unwrap();
        assert_eq!((e.mu_min_pred, e.mu_max_pred), (0.0, 0.0));

        let s = SpectrumModel::Spiked {
            k_spikes: 3,
            lambda_top: 50.0,
            lambda_tail: 1.0,
            p: 1003,
        }
        .build()
        .unwrap();
        let e = eigenvalue_envelope_ak(&s, 0.0, 3, 100, 0.0, 1.0, Some(1.0), 1.0).unwrap();
        assert_relative_eq!(e.mu_max_pred, 1100.0, max_relative = 1e-14);
        assert_relative_eq!(
            e.mu_min_pred,
            1000.0 - (100.0f64 * 1100.0).sqrt(),
            max_relative = 1e-14
        );
        assert_relative_eq!(e.mu_min_pred, 668.338, max_relative = 1e-5);
        assert!(e.mu_min_pred <= e.mu_max_pred);

        let e = eigenvalue_envelope_ak(&s, 1e9, 3, 100, 0.0, 1.0, None, 1.0).unwrap();
        assert_eq!(e.mu_min_pred, 1e9);
        assert_relative_eq!(e.mu_max_pred, 1e9, max_relative = 1e-5);
    }

    use crate::spectrum::SpectrumModel;

    #[test]
    fn a0_envelope_examples() {
        let e = envelope_a0_from_ak(&ones(100), 0.0, 10, 0.0, 1.0, 1.0, 10.0, 1.0).unwrap();
        assert_relative_eq!(e.mu_min_pred, 90.0, max_relative = 1e-14);
        assert_relative_eq!(e.mu_max_pred, 120.0, max_relative = 1e-14);
        assert_eq!(e.context, EnvelopeContext::A0Envelope);

        let t_half = envelope_a0_from_ak(&ones(100), 0.0, 10, 5.0, 1.0, 1.0, 10.0, 1.0).unwrap();
        assert_relative_eq!(t_half.mu_min_pred, 45.0, max_relative = 1e-14);
        assert!(envelope_a0_from_ak(&ones(100), 0.0, 10, 10.0, 1.0, 1.0, 10.0, 1.0).is_err());

        let spiky = Spectrum::from_values(vec![1e6, 1.0, 1.0]).unwrap();
        assert!(envelope_a0_from_ak(&spiky, 0.0, 10, 0.0, 1.0, 1.0, 2.0, 1.0).is_err());
        assert!(envelope_a0_from_ak(&ones(100), 0.0, 10, 0.0, 1.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn negative_regime_plateau_lambda() {
        let s = SpectrumModel::Spiked {
            k_spikes: 1,
            lambda_top: 100.0,
            lambda_tail: 1.0,
            p: 10_000,
        }
        .build()
        .unwrap();
        let sig = SignalSpec::basis(10_000, 0);
        let r = regime_bounds(
            &s,
            &sig,
            100,
            Regime::NegativeLambda { k: 1, xi: 10.0 },
            1.0,
            1.0,
            1.0,
        )
        .unwrap();
        // −λ_tail (p − k) + ξ λ_tail √(n p) = −9999 + 10·1000
        let brute = -(1..10_000).map(|_| 1.0).sum::<f64>() + 10.0 * (100.0f64 * 10_000.0).sqrt();
        assert_eq!(r.lambda_used, brute);
        assert_eq!(r.lambda_used, 1.0);
        assert_eq!(r.form, RegimeForm::SpikedPlateau);
    }

    #[test]
    fn negative_plateau_matches_zero_at_xi_sq_p_over_n() {
        let s = SpectrumModel::Spiked {
            k_spikes: 2,
            lambda_top: 40.0,
            lambda_tail: 0.5,
            p: 4000,
        }
        .build()
        .unwrap();
        let mut theta = vec![0.01; 4000];
        theta[0] = 1.0;
        theta[1] = -0.5;
        let sig = SignalSpec::new(theta);
        let n = 100;
        let xi = (4000.0f64 / n as f64).sqrt();
        let neg = regime_bounds(
            &s,
            &sig,
            n,
            Regime::NegativeLambda { k: 2, xi },
            1.0,
            1.0,
            1.0,
        )
        .unwrap();
        let zero = regime_bounds(
            &s,
            &sig,
            n,
            Regime::ZeroLambda { k: 2, lambda: 0.0 },
            1.0,
            1.0,
            1.0,
        )
        .unwrap();
        assert_relative_eq!(neg.bias, zero.bias, max_relative = 1e-12);
        assert_relative_eq!(neg.variance, zero.variance, max_relative = 1e-12);
    }

    #[test]
    fn regime_edge_cases() {
        let s = Spectrum::from_values(vec![3.0, 2.0, 1.0, 0.5, 0.25]).unwrap();
        let zero = SignalSpec::zeros(5);
        let r = regime_bounds(
            &s,
            &zero,
            4,
            Regime::ZeroLambda { k: 1, lambda: 0.5 },
            1.0,
            1.0,
            1.0,
        )
        .unwrap();
        assert_eq!(r.bias, 0.0);
        assert!(regime_bounds(
            &s,
            &zero,
            4,
            Regime::ZeroLambda { k: 1, lambda: 10.0 },
            1.0,
            1.0,
            1.0
        )
        .is_err());
        assert!(regime_bounds(
            &s,
            &zero,
            4,
            Regime::NegativeLambda { k: 1, xi: 0.0 },
            1.0,
            1.0,
            1.0
        )
        .is_err());

        let r = regime_bounds(&s, &zero, 4, Regime::LargeLambda { k: 2 }, 2.0, 1.5, 1.0).unwrap();
        assert_eq!(r.lambda_used, 4.0);
        // σ²t (k/n + Σ_{i>k}λ_i² / (n λ_k²)) with λ_k = λ_2 = 2
        let expect = 1.5f64.powi(2) * 2.0 * (0.5 + (1.0 + 0.25 + 0.0625) / (4.0 * 4.0));
        assert_relative_eq!(r.variance, expect, max_relative = 1e-14);
        assert_eq!(r.form, RegimeForm::General);
    }

    #[test]
    fn general_negative_form() {
        let s = Spectrum::from_values(vec![3.0, 2.0, 1.0, 0.5, 0.25]).unwrap();
        let (lam, form) = negative_lambda(&s, 4, 1, 0.5);
        assert_eq!(form, RegimeForm::General);
        let tail: f64 = 2.0 + 1.0 + 0.5 + 0.25;
        let tsq: f64 = 4.0 + 1.0 + 0.25 + 0.0625;
        assert_relative_eq!(
            lam,
            -tail + 0.5 * (4.0 * 3.0 + (4.0 * tsq).sqrt()),
            max_relative = 1e-14
        );
    }

    #[test]
    fn report_dominance_and_json() {
        let s = Spectrum::from_values(vec![8.0, 4.0, 2.0, 1.0, 1.0, 1.0, 1.0, 1.0]).unwrap();
        let sig = SignalSpec::new(vec![1.0, -1.0, 0.5, 0.0, 0.2, 0.0, 0.0, 0.1]);
        let pb = Problem::new(&s, &sig, 3, 0.5).unwrap();
        let rep = bound_report(&pb, KPolicy::Kstar { b: 1.0 }, &BoundConstants::default()).unwrap();
        assert!(rep.b_upper >= rep.b_lower);
        assert!(rep.v_upper >= rep.v_lower);
        assert!(rep.b_upper / rep.b_lower <= rep.b_ratio_cap + 1e-9);
        let json = serde_json::to_value(&rep).unwrap();
        for key in [
            "k",
            "lambda",
            "rho_k",
            "R_k",
            "B_upper",
            "V_upper",
            "B_lower",
            "V_lower",
            "B_ratio_cap",
            "V_ratio_cap",
            "L",
            "t",
            "sigma_x",
            "sigma_eps",
            "calibration_c",
            "k_policy",
            "n",
        ] {
            assert!(json.get(key).is_some(), "missing {key} in {json}");
        }
        let back: BoundReport = serde_json::from_value(json).unwrap();
        assert_eq!(back, rep);

        let none = Problem::new(&s, &sig, 3, 0.5).unwrap();
        assert!(
            bound_report(&none, KPolicy::Kstar { b: 1e9 }, &BoundConstants::default()).is_err()
        );
    }
}
