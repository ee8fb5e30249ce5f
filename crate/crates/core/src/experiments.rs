//! Seeded Monte Carlo sweeps over `λ`, regime presets and concentration audits.
//!
//! A sweep draws one design per replicate and evaluates every grid value of
//! `λ` on it, so differences between grid points are paired. Replicates run
//! in parallel; each owns an RNG stream derived from
//! `(base_seed, replicate, purpose)` and results are reduced in replicate
//! order, so the output does not depend on the thread count.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{
    bound_report, eigenvalue_envelope_ak, envelope_a0_from_ak, safe_ratio, BoundConstants,
    BoundReport, KPolicy, Problem, SignalSpec,
};
use crate::error::{Error, Result};
use crate::estimator::{
    diagnostics_from_eigenvalues, sample_design, sample_noise, tail_gram, tail_gram_eigenvalues,
    DesignFamily, NoiseFamily, SpectralPath,
};
use crate::spectrum::{k_limit, Spectrum, SpectrumModel};

/// Stream purposes mixed into every derived seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedPurpose {
    Design = 1,
    Noise = 2,
    Audit = 3,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for one `(replicate, purpose)` stream.
pub fn derive_seed(base_seed: u64, index: u64, purpose: SeedPurpose) -> u64 {
    splitmix64(splitmix64(splitmix64(base_seed) ^ index) ^ purpose as u64)
}

/// How `θ*` is generated from the spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SignalModel {
    Explicit {
        values: Vec<f64>,
    },
    /// `θ*_i = 1/√k` for `i ≤ k`, zero afterwards.
    UnitEnergyOnSpikes {
        k: usize,
    },
    /// `θ*_i = 1` for every `i`, so coordinate `i` carries energy `λ_i`.
    AlignedDecay,
}

impl SignalModel {
    pub fn build(&self, spec: &Spectrum) -> Result<SignalSpec> {
        let p = spec.p();
        let sig = match self {
            SignalModel::Explicit { values } => SignalSpec::new(values.clone()),
            SignalModel::UnitEnergyOnSpikes { k } => {
                if *k == 0 || *k > p {
                    return Err(Error::Config(format!(
                        "unit_energy_on_spikes needs 1 ≤ k ≤ p = {p}, got {k}"
                    )));
                }
                let v = 1.0 / (*k as f64).sqrt();
                SignalSpec::new((0..p).map(|i| if i < *k { v } else { 0.0 }).collect())
            }
            SignalModel::AlignedDecay => SignalSpec::new(vec![1.0; p]),
        };
        sig.check_against(spec)?;
        Ok(sig)
    }
}

fn default_replicates() -> usize {
    100
}

fn default_sigma_eps() -> f64 {
    1.0
}

/// A complete, self-describing sweep configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub spectrum: SpectrumModel,
    pub n: usize,
    #[serde(default)]
    pub design: DesignFamily,
    pub signal: SignalModel,
    #[serde(default = "default_sigma_eps")]
    pub sigma_eps: f64,
    pub lambda_grid: Vec<f64>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub k_policy: KPolicy,
    /// Constants for the bound overlay; `sigma_eps` is taken from the config itself.
    #[serde(default)]
    pub constants: BoundConstants,
}

/// A validated configuration with the spectrum, signal and per-`λ` split index resolved.
#[derive(Debug, Clone)]
pub struct PreparedExperiment {
    pub config: ExperimentConfig,
    pub spectrum: Spectrum,
    pub signal: SignalSpec,
    /// Split index per grid point; `None` where the policy has no admissible `k`.
    pub ks: Vec<Option<usize>>,
}

impl ExperimentConfig {
    pub fn prepare(&self) -> Result<PreparedExperiment> {
        if self.n == 0 {
            return Err(Error::Config("n must be ≥ 1".into()));
        }
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be ≥ 1".into()));
        }
        if self.lambda_grid.is_empty() {
            return Err(Error::Config("lambda_grid must be non-empty".into()));
        }
        if let Some(i) = self.lambda_grid.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation {
                what: "lambda_grid entry",
                index: i,
                reason: "not finite".into(),
            });
        }
        if !(self.sigma_eps.is_finite() && self.sigma_eps >= 0.0) {
            return Err(Error::Config(format!(
                "sigma_eps = {} must be ≥ 0",
                self.sigma_eps
            )));
        }
        let spectrum = self.spectrum.build()?;
        let signal = self.signal.build(&spectrum)?;
        match self.k_policy {
            KPolicy::Fixed { k } if k >= k_limit(&spectrum, self.n) => {
                return Err(Error::KOutOfRange {
                    k,
                    limit: k_limit(&spectrum, self.n),
                })
            }
            KPolicy::Kstar { b } if b.is_nan() || b <= 0.0 => {
                return Err(Error::Config(format!(
                    "k* threshold b = {b} must be positive"
                )))
            }
            _ => {}
        }
        let ks = self
            .lambda_grid
            .iter()
            .map(|&l| self.k_policy.resolve(&spectrum, l, self.n))
            .collect();
        Ok(PreparedExperiment {
            config: self.clone(),
            spectrum,
            signal,
            ks,
        })
    }

    fn overlay_constants(&self) -> BoundConstants {
        BoundConstants {
            sigma_eps: self.sigma_eps,
            ..self.constants
        }
    }
}

/// One `(λ, replicate)` evaluation. Non-PD rows carry `NaN` risk values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRow {
    pub lambda: f64,
    pub replicate: usize,
    pub bias: f64,
    pub variance_expected: f64,
    pub mse: f64,
    pub pd_margin: f64,
    #[serde(rename = "cond_Ak")]
    pub cond_ak: f64,
    #[serde(rename = "mu_max_Ak")]
    pub mu_max_ak: f64,
    #[serde(rename = "mu_min_Ak")]
    pub mu_min_ak: f64,
    pub k: usize,
    pub pd: bool,
}

pub const SWEEP_CSV_HEADER: [&str; 11] = [
    "lambda",
    "replicate",
    "bias",
    "variance_expected",
    "mse",
    "pd_margin",
    "cond_Ak",
    "mu_max_Ak",
    "mu_min_Ak",
    "k",
    "pd",
];

impl ReplicateRow {
    pub fn csv_row(&self) -> [String; 11] {
        use crate::fmt_f64 as f;
        [
            f(self.lambda),
            self.replicate.to_string(),
            f(self.bias),
            f(self.variance_expected),
            f(self.mse),
            f(self.pd_margin),
            f(self.cond_ak),
            f(self.mu_max_ak),
            f(self.mu_min_ak),
            self.k.to_string(),
            self.pd.to_string(),
        ]
    }
}

/// Evaluates every grid `λ` on the design of one replicate.
pub fn run_replicate(prep: &PreparedExperiment, replicate: usize) -> Result<Vec<ReplicateRow>> {
    let cfg = &prep.config;
    let seed = derive_seed(cfg.base_seed, replicate as u64, SeedPurpose::Design);
    let x = sample_design(cfg.design, &prep.spectrum, cfg.n, seed);
    let path = SpectralPath::new(&x, &prep.spectrum, &prep.signal.theta_star)?;
    let mut tail_eigs: BTreeMap<usize, DVector<f64>> = BTreeMap::new();
    let mut rows = Vec::with_capacity(cfg.lambda_grid.len());
    for (&lambda, k) in cfg.lambda_grid.iter().zip(&prep.ks) {
        let k = k.unwrap_or(0);
        let eigs = match k {
            0 => path.gram_eigenvalues(),
            _ => &*tail_eigs
                .entry(k)
                .or_insert_with(|| tail_gram_eigenvalues(&x, k)),
        };
        let diag = diagnostics_from_eigenvalues(eigs, lambda, k);
        let (bias, variance_expected, pd) = match path.risk(lambda, cfg.sigma_eps) {
            Ok(r) => (r.bias, r.variance_expected, true),
            Err(Error::NotPositiveDefinite { .. }) => (f64::NAN, f64::NAN, false),
            Err(e) => return Err(e),
        };
        rows.push(ReplicateRow {
            lambda,
            replicate,
            bias,
            variance_expected,
            mse: bias + variance_expected,
            pd_margin: path.pd_margin(lambda),
            cond_ak: diag.cond,
            mu_max_ak: diag.mu_max,
            mu_min_ak: diag.mu_min,
            k,
            pd,
        });
    }
    Ok(rows)
}

/// Location and spread of one quantity across replicates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub median: f64,
    pub q10: f64,
    pub q90: f64,
    pub std_err: f64,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        len => {
            let h = q.clamp(0.0, 1.0) * (len - 1) as f64;
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(len - 1);
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

/// Mean and standard error of the mean (0 for a single value).
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

impl Aggregate {
    /// `None` for an empty sample.
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let (mean, std_err) = mean_and_se(values);
        Some(Aggregate {
            mean,
            median: quantile_sorted(&sorted, 0.5),
            q10: quantile_sorted(&sorted, 0.1),
            q90: quantile_sorted(&sorted, 0.9),
            std_err,
        })
    }
}

/// Aggregates over the PD replicates at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaSummary {
    pub lambda: f64,
    pub k: Option<usize>,
    /// Replicates with a positive-definite system.
    pub count: usize,
    /// `None` when no replicate was PD.
    pub mse: Option<Aggregate>,
    pub bias: Option<Aggregate>,
    pub variance: Option<Aggregate>,
}

impl LambdaSummary {
    pub fn available(&self) -> bool {
        self.mse.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub lambda_grid: Vec<f64>,
    /// Grid-major, replicate-minor.
    #[serde(skip)]
    pub rows: Vec<ReplicateRow>,
    pub per_lambda: Vec<LambdaSummary>,
    /// Grid argmin of mean MSE over available points.
    pub lambda_opt: Option<f64>,
    /// `None` where the bound is undefined at that grid point.
    pub bound_overlay: Vec<Option<BoundReport>>,
}

impl SweepResult {
    pub fn summary_at(&self, lambda: f64) -> Option<&LambdaSummary> {
        self.per_lambda.iter().find(|s| s.lambda == lambda)
    }

    pub fn optimum(&self) -> Option<&LambdaSummary> {
        self.lambda_opt.and_then(|l| self.summary_at(l))
    }
}

fn summarize(lambda: f64, k: Option<usize>, rows: &[ReplicateRow]) -> LambdaSummary {
    let ok: Vec<&ReplicateRow> = rows.iter().filter(|r| r.pd).collect();
    let pick = |f: fn(&ReplicateRow) -> f64| {
        Aggregate::from_values(&ok.iter().map(|r| f(r)).collect::<Vec<_>>())
    };
    LambdaSummary {
        lambda,
        k,
        count: ok.len(),
        mse: pick(|r| r.mse),
        bias: pick(|r| r.bias),
        variance: pick(|r| r.variance_expected),
    }
}

/// Runs every replicate (in parallel on the current rayon pool) and aggregates.
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepResult> {
    let prep = config.prepare()?;
    let per_rep: Vec<Vec<ReplicateRow>> = (0..config.replicates)
        .into_par_iter()
        .map(|r| run_replicate(&prep, r))
        .collect::<Result<_>>()?;
    let g = config.lambda_grid.len();
    let mut rows = Vec::with_capacity(g * config.replicates);
    for i in 0..g {
        rows.extend(per_rep.iter().map(|rep| rep[i]));
    }
    let per_lambda: Vec<LambdaSummary> = (0..g)
        .map(|i| {
            let chunk = &rows[i * config.replicates..(i + 1) * config.replicates];
            summarize(config.lambda_grid[i], prep.ks[i], chunk)
        })
        .collect();
    let lambda_opt = per_lambda
        .iter()
        .filter_map(|s| s.mse.map(|m| (s.lambda, m.mean)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(l, _)| l);
    let constants = config.overlay_constants();
    let bound_overlay = config
        .lambda_grid
        .iter()
        .map(|&lambda| {
            let problem = Problem::new(&prep.spectrum, &prep.signal, config.n, lambda).ok()?;
            bound_report(&problem, config.k_policy, &constants).ok()
        })
        .collect();
    Ok(SweepResult {
        lambda_grid: config.lambda_grid.clone(),
        rows,
        per_lambda,
        lambda_opt,
        bound_overlay,
    })
}

/// Empirical-versus-bound ratios at one grid point (`0/0 = 1`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundComparison {
    pub lambda: f64,
    pub bias_over_upper: f64,
    pub variance_over_upper: f64,
    pub lower_over_bias: f64,
    pub lower_over_variance: f64,
}

/// Compares replicate means with the overlay; skips grid points lacking either.
pub fn compare_bounds(sweep: &SweepResult) -> Vec<BoundComparison> {
    sweep
        .per_lambda
        .iter()
        .zip(&sweep.bound_overlay)
        .filter_map(|(s, b)| {
            let b = b.as_ref()?;
            let bias = s.bias?.mean;
            let var = s.variance?.mean;
            Some(BoundComparison {
                lambda: s.lambda,
                bias_over_upper: safe_ratio(bias, b.b_upper),
                variance_over_upper: safe_ratio(var, b.v_upper),
                lower_over_bias: safe_ratio(b.b_lower, bias),
                lower_over_variance: safe_ratio(b.v_lower, var),
            })
        })
        .collect()
}

/// Number of points in a preset `λ` grid.
pub const PRESET_GRID_POINTS: usize = 17;

/// `λ_i = e^{−γi}` truncated where `λ_i < 1e−16 λ_1`, `k = round(n^{2/3})`,
/// and a log grid spanning two decades either side of `n e^{−γ(k+1)}`.
pub fn preset_exponential_decay(gamma: f64, n: usize) -> Result<ExperimentConfig> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::Config(format!("γ = {gamma} must be positive")));
    }
    if n == 0 {
        return Err(Error::Config("n must be ≥ 1".into()));
    }
    let p = (16.0 * std::f64::consts::LN_10 / gamma).floor() as usize + 1;
    let k = ((n as f64).powf(2.0 / 3.0).round() as usize).min(p - 1);
    let center = exponential_lambda(gamma, n, k);
    let half = (PRESET_GRID_POINTS / 2) as f64;
    let lambda_grid = (0..PRESET_GRID_POINTS)
        .map(|i| {
            if i == PRESET_GRID_POINTS / 2 {
                center
            } else {
                center * 10f64.powf(2.0 * (i as f64 - half) / half)
            }
        })
        .collect();
    Ok(ExperimentConfig {
        spectrum: SpectrumModel::Exponential { gamma, p },
        n,
        design: DesignFamily::Gaussian,
        signal: SignalModel::AlignedDecay,
        sigma_eps: 1.0,
        lambda_grid,
        replicates: default_replicates(),
        base_seed: 0,
        k_policy: KPolicy::Fixed { k },
        constants: BoundConstants::default(),
    })
}

/// `n e^{−γ(k+1)}`.
pub fn exponential_lambda(gamma: f64, n: usize, k: usize) -> f64 {
    n as f64 * (-gamma * (k as f64 + 1.0)).exp()
}

/// `ξ` grid of the spiked preset: geometric on `[1, 32]` plus `√(n/k)` and `√(p/n)`.
pub fn spiked_xi_grid(k_spikes: usize, p: usize, n: usize) -> Vec<f64> {
    const POINTS: usize = 25;
    let mut xi: Vec<f64> = (0..POINTS)
        .map(|i| 32f64.powf(i as f64 / (POINTS - 1) as f64))
        .collect();
    xi.push((n as f64 / k_spikes as f64).sqrt());
    xi.push((p as f64 / n as f64).sqrt());
    xi
}

/// Spiked plateau with `θ*` of unit norm on the spikes and
/// `σ_ε² = ‖θ*‖²_Σ / snr = λ_top / snr`.
///
/// The grid holds `0` and `λ(ξ) = −λ_tail(p − k) + ξλ_tail√(np)` over
/// [`spiked_xi_grid`]; small `ξ` lands below the PD edge on purpose.
pub fn preset_spiked_plateau(
    k_spikes: usize,
    p: usize,
    lambda_top: f64,
    lambda_tail: f64,
    n: usize,
    snr: f64,
) -> Result<ExperimentConfig> {
    if k_spikes == 0 || k_spikes >= n {
        return Err(Error::Config(format!(
            "need 1 ≤ k_spikes < n, got k_spikes = {k_spikes}, n = {n}"
        )));
    }
    if p <= n {
        return Err(Error::Config(format!("need p > n, got p = {p}, n = {n}")));
    }
    if !(snr > 0.0 && snr.is_finite()) {
        return Err(Error::Config(format!("snr = {snr} must be positive")));
    }
    let spectrum = SpectrumModel::Spiked {
        k_spikes,
        lambda_top,
        lambda_tail,
        p,
    };
    let spec = spectrum.build()?;
    let mut lambda_grid: Vec<f64> = spiked_xi_grid(k_spikes, p, n)
        .into_iter()
        .map(|xi| crate::bounds::negative_lambda(&spec, n, k_spikes, xi).0)
        .collect();
    lambda_grid.push(0.0);
    lambda_grid.sort_by(f64::total_cmp);
    lambda_grid.dedup();
    Ok(ExperimentConfig {
        spectrum,
        n,
        design: DesignFamily::Gaussian,
        signal: SignalModel::UnitEnergyOnSpikes { k: k_spikes },
        sigma_eps: (lambda_top / snr).sqrt(),
        lambda_grid,
        replicates: default_replicates(),
        base_seed: 0,
        k_policy: KPolicy::Fixed { k: k_spikes },
        constants: BoundConstants::default(),
    })
}

/// Outcome of comparing the optimal grid point with `λ = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub lambda_opt: f64,
    pub lambda_opt_negative: bool,
    pub mean_mse_opt: f64,
    pub mean_mse_zero: f64,
    /// `√(se_opt² + se_zero²)`.
    pub combined_std_err: f64,
    /// `(mse_zero − mse_opt) / combined_std_err`.
    pub margin_in_std_err: f64,
}

/// `None` when the sweep has no optimum or no available `λ = 0` point.
pub fn verdict(sweep: &SweepResult) -> Option<Verdict> {
    let opt = sweep.optimum()?.mse?;
    let zero = sweep.summary_at(0.0)?.mse?;
    let lambda_opt = sweep.lambda_opt?;
    let combined = opt.std_err.hypot(zero.std_err);
    Some(Verdict {
        lambda_opt,
        lambda_opt_negative: lambda_opt < 0.0,
        mean_mse_opt: opt.mean,
        mean_mse_zero: zero.mean,
        combined_std_err: combined,
        margin_in_std_err: (zero.mean - opt.mean) / combined,
    })
}

/// Empirical distribution of a ratio `LHS / scale` over audit samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileSummary {
    pub q50: f64,
    pub q90: f64,
    pub q99: f64,
    pub mean: f64,
    pub std_err: f64,
    pub samples: usize,
    pub seed: u64,
}

impl QuantileSummary {
    fn from_values(values: &[f64], seed: u64) -> Self {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let (mean, std_err) = mean_and_se(values);
        QuantileSummary {
            q50: quantile_sorted(&sorted, 0.5),
            q90: quantile_sorted(&sorted, 0.9),
            q99: quantile_sorted(&sorted, 0.99),
            mean,
            std_err,
            samples: values.len(),
            seed,
        }
    }
}

/// Envelope audit: empirical constants on each edge plus the hit rate of the
/// constant-free prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeAudit {
    /// Top edge: `(μ_max − λ) / (nλ_{k+1} + Σ_{i>k}λ_i)`.
    pub upper_constant: QuantileSummary,
    /// Bottom edge: `(λ + Σ_{i>k}λ_i − μ_min) / √(n Σ_{i>k}λ_i²)`.
    pub lower_constant: QuantileSummary,
    /// Fraction of samples inside the predicted envelope.
    pub hit_fraction: f64,
}

/// Constant-free concentration statistics on the tail block `k:∞`, each as
/// the ratio of the sampled quantity to its scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub n: usize,
    pub k: usize,
    pub lambda: f64,
    pub family: DesignFamily,
    pub seed: u64,
    /// `Σ_i ‖x_{i,k:∞}‖² / (n Σ_{i>k}λ_i)`.
    pub sum_of_norms: QuantileSummary,
    /// `‖x_{i,k:∞}‖² / Σ_{i>k}λ_i`, pooled over rows.
    pub weighted_norm: QuantileSummary,
    /// `εᵀε / (σ² n)` for gaussian `ε`.
    pub hanson_wright_identity: QuantileSummary,
    /// `εᵀGε / (σ² tr G)` with `G = X_{k:∞}X_{k:∞}ᵀ`.
    pub hanson_wright_gram: QuantileSummary,
    /// `‖G − diag G‖ / √(n(nλ_{k+1}² + Σ_{i>k}λ_i²))`.
    pub offdiag_norm: QuantileSummary,
    pub ak_envelope: EnvelopeAudit,
    /// Present when `λ + Σλ_i > nλ_1`, the hypothesis of the `A_0` transfer.
    pub a0_envelope: Option<EnvelopeAudit>,
}

struct AuditSample {
    sum_ratio: f64,
    row_ratios: Vec<f64>,
    hw_identity: f64,
    hw_gram: f64,
    offdiag: f64,
    ak: (f64, f64, bool),
    a0: Option<(f64, f64, bool)>,
}

fn spectral_norm_sym(a: &DMatrix<f64>) -> f64 {
    a.clone().symmetric_eigenvalues().amax()
}

/// Samples `samples` designs and measures each concentration statistic.
///
/// Scales use `t = 0` and unit constants, so every ratio is an empirical constant.
#[allow(clippy::too_many_arguments)]
pub fn concentration_audit(
    spec: &Spectrum,
    family: DesignFamily,
    n: usize,
    k: usize,
    lambda: f64,
    samples: usize,
    seed: u64,
) -> Result<AuditReport> {
    if samples < 100 {
        return Err(Error::Config(format!(
            "audit needs ≥ 100 samples, got {samples}"
        )));
    }
    if n == 0 || k >= spec.p() {
        return Err(Error::KOutOfRange { k, limit: spec.p() });
    }
    let nf = n as f64;
    let tail = spec.tail_sum(k);
    let tail_sq = spec.tail_sq_sum(k);
    let lk1 = spec.eigenvalues()[k];
    let reg = lambda + tail;
    let ak_env = eigenvalue_envelope_ak(spec, lambda, k, n, 0.0, 1.0, None, 1.0)?;
    let total = lambda + spec.total_sum();
    let big_k = total / (nf * spec.eigenvalues()[0]);
    let upper_scale = nf * lk1 + tail;
    let lower_scale = (nf * tail_sq).sqrt();
    let a0_upper_scale = nf * spec.eigenvalues()[0] + spec.total_sum();
    let a0_lower_scale = (nf * spec.tail_sq_sum(0)).sqrt();

    let results: Vec<AuditSample> = (0..samples)
        .into_par_iter()
        .map(|s| {
            let x = sample_design(
                family,
                spec,
                n,
                derive_seed(seed, s as u64, SeedPurpose::Design),
            );
            let eps = sample_noise(
                NoiseFamily::Gaussian,
                n,
                1.0,
                derive_seed(seed, s as u64, SeedPurpose::Noise),
            );
            let g = tail_gram(&x, k);
            let row_ratios: Vec<f64> = g.diagonal().iter().map(|d| d / tail).collect();
            let trace = g.trace();
            let hw_gram = eps.dot(&(&g * &eps)) / trace;
            let mut off = g.clone();
            off.fill_diagonal(0.0);
            let offdiag = spectral_norm_sym(&off) / (nf * (nf * lk1 * lk1 + tail_sq)).sqrt();
            let ev = g.symmetric_eigenvalues();
            let (mu_min, mu_max) = (ev.min() + lambda, ev.max() + lambda);
            let ak = (
                (mu_max - lambda) / upper_scale,
                (reg - mu_min) / lower_scale,
                ak_env.contains(mu_min, mu_max),
            );
            let a0 = (big_k > 1.0 && mu_min > 0.0).then(|| {
                let ev0 = if k == 0 {
                    ev.clone()
                } else {
                    tail_gram_eigenvalues(&x, 0)
                };
                let (m0, m1) = (ev0.min() + lambda, ev0.max() + lambda);
                let hit =
                    envelope_a0_from_ak(spec, lambda, n, 0.0, 1.0, mu_max / mu_min, big_k, 1.0)
                        .map(|e| e.contains(m0, m1))
                        .unwrap_or(false);
                (
                    (m1 - lambda) / a0_upper_scale,
                    (total - m0) / a0_lower_scale,
                    hit,
                )
            });
            AuditSample {
                sum_ratio: trace / (nf * tail),
                row_ratios,
                hw_identity: eps.norm_squared() / nf,
                hw_gram,
                offdiag,
                ak,
                a0,
            }
        })
        .collect();

    let col = |f: &dyn Fn(&AuditSample) -> f64| {
        QuantileSummary::from_values(&results.iter().map(f).collect::<Vec<_>>(), seed)
    };
    let rows: Vec<f64> = results
        .iter()
        .flat_map(|r| r.row_ratios.iter().copied())
        .collect();
    let envelope = |vals: Vec<(f64, f64, bool)>| EnvelopeAudit {
        upper_constant: QuantileSummary::from_values(
            &vals.iter().map(|v| v.0).collect::<Vec<_>>(),
            seed,
        ),
        lower_constant: QuantileSummary::from_values(
            &vals.iter().map(|v| v.1).collect::<Vec<_>>(),
            seed,
        ),
        hit_fraction: vals.iter().filter(|v| v.2).count() as f64 / vals.len() as f64,
    };
    let a0: Vec<(f64, f64, bool)> = results.iter().filter_map(|r| r.a0).collect();
    Ok(AuditReport {
        n,
        k,
        lambda,
        family,
        seed,
        sum_of_norms: col(&|r| r.sum_ratio),
        weighted_norm: QuantileSummary::from_values(&rows, seed),
        hanson_wright_identity: col(&|r| r.hw_identity),
        hanson_wright_gram: col(&|r| r.hw_gram),
        offdiag_norm: col(&|r| r.offdiag),
        ak_envelope: envelope(results.iter().map(|r| r.ak).collect()),
        a0_envelope: (!a0.is_empty()).then(|| envelope(a0)),
    })
}
