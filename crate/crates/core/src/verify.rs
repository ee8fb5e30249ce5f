//! Self-checks run by `ridgebound verify`.
//!
//! Each suite draws seeded random instances, measures a residual or ratio per
//! instance and reports the worst case against a fixed threshold.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::{matched_bounds, ratio_caps, Problem, RatioCapMode, SignalSpec};
use crate::error::Result;
use crate::estimator::{
    gram, identity_residual, ridge_fit_dual, ridge_fit_primal_oracle, sample_design,
    tail_gram_eigenvalues, DesignFamily, DualSystem,
};
use crate::experiments::{concentration_audit, derive_seed, mean_and_se, SeedPurpose};
use crate::spectrum::{k_limit, select_k_star, Spectrum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Suite {
    DualPrimal,
    Identity,
    VarianceMc,
    RatioCaps,
    Concentration,
}

impl Suite {
    /// Instance (or draw) count used when the caller gives none.
    pub fn default_samples(self) -> usize {
        match self {
            Suite::DualPrimal => 200,
            Suite::Identity => 100,
            Suite::VarianceMc => 100_000,
            Suite::RatioCaps => 500,
            Suite::Concentration => 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    fn at_most(name: impl Into<String>, measured: f64, threshold: f64) -> Self {
        Check {
            name: name.into(),
            measured,
            threshold,
            passed: measured <= threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub seed: u64,
    pub samples: usize,
    pub checks: Vec<Check>,
    pub passed: bool,
}

pub const DUAL_PRIMAL_TOL: f64 = 1e-8;
pub const IDENTITY_TOL: f64 = 1e-8;
pub const MC_STD_ERRS: f64 = 3.0;
pub const RATIO_TOL: f64 = 1e-9;

pub fn run_suite(suite: Suite, seed: u64, samples: Option<usize>) -> Result<SuiteReport> {
    let samples = samples.unwrap_or(suite.default_samples());
    let checks = match suite {
        Suite::DualPrimal => dual_primal(seed, samples)?,
        Suite::Identity => identity(seed, samples)?,
        Suite::VarianceMc => variance_mc(seed, samples)?,
        Suite::RatioCaps => ratio_cap_checks(seed, samples)?,
        Suite::Concentration => concentration(seed, samples)?,
    };
    Ok(SuiteReport {
        suite,
        seed,
        samples,
        passed: checks.iter().all(|c| c.passed),
        checks,
    })
}

/// Random decreasing spectrum of length `p` with entries in `(0, 1]`.
pub fn random_spectrum(rng: &mut impl Rng, p: usize) -> Spectrum {
    let mut v: Vec<f64> = (0..p).map(|_| rng.random_range(0.01..1.0)).collect();
    if rng.random_bool(0.5) {
        // plateau-like: a few large values on a flat tail
        let spikes = rng.random_range(0..=p.min(4));
        for (i, x) in v.iter_mut().enumerate() {
            *x = if i < spikes {
                rng.random_range(5.0..50.0)
            } else {
                1.0
            };
        }
    }
    v.sort_by(|a, b| b.total_cmp(a));
    Spectrum::from_values(v).expect("positive and sorted")
}

fn instance_rng(seed: u64, i: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64, SeedPurpose::Audit))
}

fn dual_primal(seed: u64, samples: usize) -> Result<Vec<Check>> {
    const LAMBDAS: [f64; 4] = [0.01, 0.1, 1.0, 10.0];
    let mut worst: f64 = 0.0;
    for i in 0..samples {
        let mut rng = instance_rng(seed, i);
        let n = rng.random_range(5..=40);
        let p = rng.random_range(1..=80);
        let spec = random_spectrum(&mut rng, p);
        let x = sample_design(DesignFamily::Gaussian, &spec, n, rng.random());
        let y = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let lambda = LAMBDAS[i % LAMBDAS.len()];
        let dual = ridge_fit_dual(&x, &y, lambda, None)?.theta_hat;
        let primal = ridge_fit_primal_oracle(&x, &y, lambda)?;
        worst = worst.max((dual - &primal).amax() / (1.0 + primal.amax()));
    }
    Ok(vec![Check::at_most(
        "max ‖θ̂_dual − θ̂_primal‖∞ / (1 + ‖θ̂_primal‖∞)",
        worst,
        DUAL_PRIMAL_TOL,
    )])
}

fn identity(seed: u64, samples: usize) -> Result<Vec<Check>> {
    let mut worst: f64 = 0.0;
    let mut negatives = 0usize;
    for i in 0..samples {
        let mut rng = instance_rng(seed, i);
        let n = rng.random_range(5..=30);
        let k = rng.random_range(0..=n.min(10));
        let p = k + n + rng.random_range(5..=50);
        let spec = random_spectrum(&mut rng, p);
        let x = sample_design(DesignFamily::Gaussian, &spec, n, rng.random());
        let y = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let lambda = if i % 2 == 0 {
            // A_k ⪯ A, so this keeps both systems PD
            negatives += 1;
            -rng.random_range(0.1..0.9) * tail_gram_eigenvalues(&x, k).min()
        } else {
            10f64.powf(rng.random_range(-2.0..1.0))
        };
        worst = worst.max(identity_residual(&x, &y, lambda, k)?.relative());
    }
    Ok(vec![
        Check::at_most("max relative identity residual", worst, IDENTITY_TOL),
        Check {
            name: "instances with negative λ".into(),
            measured: negatives as f64,
            threshold: 1.0,
            passed: negatives >= 1 || samples < 2,
        },
    ])
}

/// Number of `20 × 40` instances in the variance suite.
pub const VARIANCE_INSTANCES: usize = 10;

fn variance_mc(seed: u64, draws: usize) -> Result<Vec<Check>> {
    let (n, p) = (20, 40);
    let mut checks = Vec::new();
    for i in 0..VARIANCE_INSTANCES {
        let mut rng = instance_rng(seed, i);
        let spec = random_spectrum(&mut rng, p);
        let x = sample_design(DesignFamily::Gaussian, &spec, n, rng.random());
        let floor = gram(&x).symmetric_eigenvalues().min();
        let lambda = match i % 3 {
            0 => 0.0,
            1 => -0.5 * floor,
            _ => rng.random_range(0.1..2.0),
        };
        let sigma = rng.random_range(0.5..2.0);
        let exact = crate::estimator::exact_variance(&x, &spec, lambda, sigma)?;
        let realized = mc_realized_variance(&x, &spec, lambda, sigma, draws, rng.random())?;
        let (mean, se) = mean_and_se(&realized);
        checks.push(Check::at_most(
            format!("instance {i}: |mean V − E V| / se"),
            (mean - exact).abs() / se,
            MC_STD_ERRS,
        ));
    }
    Ok(checks)
}

/// `draws` realizations of `V = ‖XᵀA⁻¹ε‖²_Σ` for gaussian `ε` with standard deviation `sigma`.
pub fn mc_realized_variance(
    x: &nalgebra::DMatrix<f64>,
    spec: &Spectrum,
    lambda: f64,
    sigma: f64,
    draws: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    use rand_distr::{Distribution, StandardNormal};
    let sys = DualSystem::new(x, lambda, 0, None)?;
    // rows of Σ^{1/2}XᵀA⁻¹, so that V = ‖Wε‖²
    let mut w = sys.solve_matrix(x).transpose();
    for (j, &l) in spec.eigenvalues().iter().enumerate() {
        w.row_mut(j).scale_mut(l.sqrt());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = x.nrows();
    let mut eps = DVector::zeros(n);
    Ok((0..draws)
        .map(|_| {
            for e in eps.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *e = sigma * z;
            }
            (&w * &eps).norm_squared()
        })
        .collect())
}

/// Worst observed `(min ratio, max ratio − cap)` over both modes.
fn ratio_cap_checks(seed: u64, samples: usize) -> Result<Vec<Check>> {
    let mut min_ratio = f64::INFINITY;
    let mut excess = f64::NEG_INFINITY;
    let mut evaluated = 0usize;
    let mut record = |b: f64, v: f64, cap: crate::bounds::RatioCaps| {
        min_ratio = min_ratio.min(b).min(v);
        excess = excess.max(b - cap.bias).max(v - cap.variance);
        evaluated += 1;
    };
    for i in 0..samples {
        let mut rng = instance_rng(seed, i);
        let p = rng.random_range(1..=60);
        let n = rng.random_range(1..=40);
        let spec = random_spectrum(&mut rng, p);
        let theta: Vec<f64> = (0..p)
            .map(|_| {
                if rng.random_bool(0.3) {
                    0.0
                } else {
                    rng.random_range(-2.0..2.0)
                }
            })
            .collect();
        let signal = SignalSpec::new(theta);
        let kmax = k_limit(&spec, n);
        let lambda = if rng.random_bool(0.2) {
            -rng.random_range(0.0..0.9) * spec.tail_sum(kmax - 1)
        } else {
            10f64.powf(rng.random_range(-3.0..2.0)) * spec.total_sum() * rng.random_range(0.0..1.0)
        };
        let problem = Problem::new(&spec, &signal, n, lambda)?;
        for k in 0..kmax {
            let m = matched_bounds(&problem, k)?;
            let a = m.rho_k * rng.random_range(0.05..1.0);
            let b = m.rho_k * rng.random_range(1.0..20.0);
            if let Ok(cap) = ratio_caps(m.rho_k, RatioCapMode::Interval { a, b }) {
                record(m.bias_ratio(), m.variance_ratio(), cap);
            }
        }
        let b = 1.0 / n as f64 + rng.random_range(0.0..5.0);
        if let Some(k) = select_k_star(&spec, lambda, n, b) {
            let m = matched_bounds(&problem, k)?;
            let cap = ratio_caps(m.rho_k, RatioCapMode::Kstar { b, n })?;
            record(m.bias_ratio(), m.variance_ratio(), cap);
        }
    }
    Ok(vec![
        Check {
            name: "min ratio ≥ 1 − tol".into(),
            measured: min_ratio,
            threshold: 1.0 - RATIO_TOL,
            passed: min_ratio >= 1.0 - RATIO_TOL,
        },
        Check::at_most("max (ratio − cap)", excess, RATIO_TOL),
        Check {
            name: "evaluated (k, a, b) triples".into(),
            measured: evaluated as f64,
            threshold: samples as f64,
            passed: evaluated >= samples,
        },
    ])
}

fn concentration(seed: u64, samples: usize) -> Result<Vec<Check>> {
    let samples = samples.max(100);
    let mut checks = Vec::new();
    let mut offdiag = Vec::new();
    for n in [50usize, 100, 200] {
        let spec = Spectrum::from_values(vec![1.0; 20 * n])?;
        let audit = concentration_audit(&spec, DesignFamily::Gaussian, n, 0, 0.0, samples, seed)?;
        let s = audit.sum_of_norms;
        checks.push(Check::at_most(
            format!("n={n}: |mean Σ‖x_i‖² / (n tr Σ) − 1| / se"),
            (s.mean - 1.0).abs() / s.std_err,
            MC_STD_ERRS,
        ));
        checks.push(Check::at_most(
            format!("n={n}: q99 of εᵀε/(σ²n) − 1, in units of 4/√n"),
            (audit.hanson_wright_identity.q99 - 1.0) * (n as f64).sqrt() / 4.0,
            1.0,
        ));
        offdiag.push(audit.offdiag_norm.q90);
    }
    let spread = offdiag.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        / offdiag.iter().cloned().fold(f64::INFINITY, f64::min);
    checks.push(Check::at_most(
        "off-diagonal Gram constant spread across n (q90)",
        spread,
        2.0,
    ));
    Ok(checks)
}
