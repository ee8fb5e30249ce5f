//! Covariance spectra, effective ranks and the choice of the split index.
//!
//! A [`Spectrum`] holds the eigenvalues `λ_1 ≥ … ≥ λ_p > 0` of a diagonal
//! covariance. Everything downstream looks at it through a split index `k`:
//! the first `k` coordinates form the *spiked part*, the rest form the *tail*.
//! Two effective ranks of the tail drive every bound in this crate:
//!
//! ```text
//! ρ_k = (λ + Σ_{i>k} λ_i) / (n · λ_{k+1})
//! R_k = (λ + Σ_{i>k} λ_i)² / Σ_{i>k} λ_i²
//! ```
//!
//! The regularization `λ` may be negative as long as `λ + Σ_{i>k} λ_i > 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Threshold used by [`select_k_star`] when the caller does not pick one.
pub const DEFAULT_KSTAR_THRESHOLD: f64 = 2.0;

/// Generator descriptor for a covariance spectrum.
///
/// Serialized as `{"model": "exponential", "gamma": .., "p": ..}`,
/// `{"model": "spiked", "k_spikes": .., "lambda_top": .., "lambda_tail": .., "p": ..}`
/// or `{"model": "explicit", "values": [..]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase", deny_unknown_fields)]
pub enum SpectrumModel {
    /// `λ_i = e^{-γ i}` for `i = 1..p` (an infinite sequence truncated at `p`).
    Exponential { gamma: f64, p: usize },
    /// `k_spikes` copies of `lambda_top` followed by a plateau of `lambda_tail`.
    Spiked {
        k_spikes: usize,
        lambda_top: f64,
        lambda_tail: f64,
        p: usize,
    },
    /// Caller-supplied eigenvalues, already sorted in non-increasing order.
    Explicit { values: Vec<f64> },
}

impl SpectrumModel {
    pub fn build(&self) -> Result<Spectrum> {
        Spectrum::from_model(self.clone())
    }
}

/// Ordered covariance eigenvalues with cached tail sums.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    eigenvalues: Vec<f64>,
    model: SpectrumModel,
    // tail[k] = Σ_{i>k} λ_i (1-based i), tail[p] = 0.
    tail: Vec<f64>,
    tail_sq: Vec<f64>,
}

impl Spectrum {
    /// Validates explicit eigenvalues: every entry finite, strictly positive
    /// and no larger than its predecessor.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        Self::from_model(SpectrumModel::Explicit { values })
    }

    pub fn from_model(model: SpectrumModel) -> Result<Self> {
        let eigenvalues = match &model {
            SpectrumModel::Exponential { gamma, p } => {
                if *p == 0 {
                    return Err(Error::domain("exponential spectrum", "p must be ≥ 1"));
                }
                if !(gamma.is_finite() && *gamma > 0.0) {
                    return Err(Error::domain(
                        "exponential spectrum",
                        format!("decay rate γ = {gamma} must be positive"),
                    ));
                }
                (1..=*p).map(|i| (-gamma * i as f64).exp()).collect()
            }
            SpectrumModel::Spiked {
                k_spikes,
                lambda_top,
                lambda_tail,
                p,
            } => {
                if *p == 0 || k_spikes >= p {
                    return Err(Error::domain(
                        "spiked spectrum",
                        format!("need 0 ≤ k_spikes < p, got k_spikes = {k_spikes}, p = {p}"),
                    ));
                }
                if !(lambda_tail.is_finite() && *lambda_tail > 0.0 && lambda_top >= lambda_tail)
                    || !lambda_top.is_finite()
                {
                    return Err(Error::domain(
                        "spiked spectrum",
                        format!(
                            "need λ_top ≥ λ_tail > 0, got λ_top = {lambda_top}, λ_tail = {lambda_tail}"
                        ),
                    ));
                }
                let mut v = vec![*lambda_top; *k_spikes];
                v.resize(*p, *lambda_tail);
                v
            }
            SpectrumModel::Explicit { values } => values.clone(),
        };
        Self::validate(&eigenvalues)?;

        let p = eigenvalues.len();
        let mut tail = vec![0.0; p + 1];
        let mut tail_sq = vec![0.0; p + 1];
        // Accumulate from the smallest eigenvalue upwards.
        for i in (0..p).rev() {
            tail[i] = tail[i + 1] + eigenvalues[i];
            tail_sq[i] = tail_sq[i + 1] + eigenvalues[i] * eigenvalues[i];
        }
        Ok(Spectrum {
            eigenvalues,
            model,
            tail,
            tail_sq,
        })
    }

    fn validate(values: &[f64]) -> Result<()> {
        if values.is_empty() {
            return Err(Error::Validation {
                what: "spectrum",
                index: 0,
                reason: "at least one eigenvalue is required".into(),
            });
        }
        for (i, &v) in values.iter().enumerate() {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Validation {
                    what: "eigenvalue",
                    index: i,
                    reason: format!("{v} is not a positive finite number"),
                });
            }
            if i > 0 && v > values[i - 1] {
                return Err(Error::Validation {
                    what: "eigenvalue",
                    index: i,
                    reason: format!(
                        "{v} exceeds its predecessor {} (spectrum must be non-increasing)",
                        values[i - 1]
                    ),
                });
            }
        }
        Ok(())
    }

    /// Ambient dimension.
    pub fn p(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn model(&self) -> &SpectrumModel {
        &self.model
    }

    /// `λ_{i}` with the usual 1-based index; `None` past the end.
    pub fn lambda(&self, i: usize) -> Option<f64> {
        i.checked_sub(1)
            .and_then(|j| self.eigenvalues.get(j).copied())
    }

    /// `Σ_{i>k} λ_i`, zero when `k ≥ p`.
    pub fn tail_sum(&self, k: usize) -> f64 {
        self.tail[k.min(self.p())]
    }

    /// `Σ_{i>k} λ_i²`, zero when `k ≥ p`.
    pub fn tail_sq_sum(&self, k: usize) -> f64 {
        self.tail_sq[k.min(self.p())]
    }

    pub fn total_sum(&self) -> f64 {
        self.tail[0]
    }

    /// Leading block `λ_1..λ_k`.
    pub fn head(&self, k: usize) -> &[f64] {
        &self.eigenvalues[..k.min(self.p())]
    }

    /// Tail block `λ_{k+1}..λ_p`.
    pub fn tail(&self, k: usize) -> &[f64] {
        &self.eigenvalues[k.min(self.p())..]
    }

    /// True when the first `k` eigenvalues are all equal to `λ_1` and the
    /// remaining ones are all equal to `λ_{k+1}`.
    pub fn is_spiked_plateau(&self, k: usize) -> bool {
        if k >= self.p() {
            return false;
        }
        let head = self.head(k);
        let tail = self.tail(k);
        head.iter()
            .all(|&v| v == head.first().copied().unwrap_or(v))
            && tail.iter().all(|&v| v == tail[0])
    }
}

/// Effective ranks of the tail at split index `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveRanks {
    pub k: usize,
    pub n: usize,
    pub lambda: f64,
    pub rho_k: f64,
    #[serde(rename = "R_k")]
    pub big_r_k: f64,
    pub tail_sum: f64,
    pub tail_sq_sum: f64,
}

impl EffectiveRanks {
    /// `λ + Σ_{i>k} λ_i`, the effective regularization seen by the tail.
    pub fn regularized_tail(&self) -> f64 {
        self.lambda + self.tail_sum
    }

    /// `λ_{k+1}`, recovered from `ρ_k`.
    pub fn lambda_next(&self) -> f64 {
        self.regularized_tail() / (self.n as f64 * self.rho_k)
    }
}

/// Computes `ρ_k` and `R_k`.
///
/// Requires `k ≤ n`, `k < p` (so that `λ_{k+1}` exists) and `λ + Σ_{i>k} λ_i > 0`.
pub fn effective_ranks(spec: &Spectrum, lambda: f64, n: usize, k: usize) -> Result<EffectiveRanks> {
    if n == 0 {
        return Err(Error::domain("effective rank", "sample size n must be ≥ 1"));
    }
    let limit = k_limit(spec, n);
    if k >= limit {
        return Err(Error::KOutOfRange { k, limit });
    }
    if !lambda.is_finite() {
        return Err(Error::domain(
            "effective rank",
            format!("λ = {lambda} is not finite"),
        ));
    }
    let tail_sum = spec.tail_sum(k);
    let tail_sq_sum = spec.tail_sq_sum(k);
    let reg = lambda + tail_sum;
    if reg <= 0.0 {
        return Err(Error::domain(
            "effective rank",
            format!(
                "ρ_k is undefined: λ + Σ_{{i>k}} λ_i = {lambda} + {tail_sum} = {reg} is not positive (k = {k})"
            ),
        ));
    }
    let lambda_next = spec.eigenvalues[k];
    Ok(EffectiveRanks {
        k,
        n,
        lambda,
        rho_k: reg / (n as f64 * lambda_next),
        big_r_k: reg * reg / tail_sq_sum,
        tail_sum,
        tail_sq_sum,
    })
}

/// Exclusive upper end of the admissible split indices: `min(n + 1, p)`.
pub fn k_limit(spec: &Spectrum, n: usize) -> usize {
    (n + 1).min(spec.p())
}

/// Smallest admissible `l` (see [`k_limit`]) with `ρ_l > b`; `None` if there is none.
///
/// Indices where `ρ_l` is undefined (`λ + Σ_{i>l} λ_i ≤ 0`) are skipped.
pub fn select_k_star(spec: &Spectrum, lambda: f64, n: usize, b: f64) -> Option<usize> {
    (0..k_limit(spec, n)).find(|&l| match effective_ranks(spec, lambda, n, l) {
        Ok(r) => r.rho_k > b,
        Err(_) => false,
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
    fn exponential_model_substitutes_directly() {
        let s = SpectrumModel::Exponential { gamma: 1.0, p: 3 }
            .build()
            .unwrap();
        let e = s.eigenvalues();
        assert_eq!(e.len(), 3);
        assert_relative_eq!(e[0], (-1.0f64).exp());
        assert_relative_eq!(e[1], (-2.0f64).exp());
        assert_relative_eq!(e[2], (-3.0f64).exp());
    }

    #[test]
    fn spiked_model_layout() {
        let s = SpectrumModel::Spiked {
            k_spikes: 1,
            lambda_top: 4.0,
            lambda_tail: 1.0,
            p: 4,
        }
        .build()
        .unwrap();
        assert_eq!(s.eigenvalues(), &[4.0, 1.0, 1.0, 1.0]);
        assert!(s.is_spiked_plateau(1));
        assert!(!s.is_spiked_plateau(0));
    }

    #[test]
    fn explicit_increasing_is_rejected_with_index() {
        let err = Spectrum::from_values(vec![1.0, 2.0, 3.0]).unwrap_err();
        assert!(matches!(err, Error::Validation { index: 1, .. }), "{err}");
        let err = Spectrum::from_values(vec![3.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::Validation { index: 1, .. }));
        assert!(Spectrum::from_values(vec![]).is_err());
    }

    #[test]
    fn bad_generator_parameters() {
        assert!(SpectrumModel::Exponential { gamma: 0.0, p: 3 }
            .build()
            .is_err());
        assert!(SpectrumModel::Exponential { gamma: 1.0, p: 0 }
            .build()
            .is_err());
        let spiked = |k, top, tail, p| SpectrumModel::Spiked {
            k_spikes: k,
            lambda_top: top,
            lambda_tail: tail,
            p,
        };
        assert!(spiked(4, 1.0, 1.0, 4).build().is_err());
        assert!(spiked(1, 0.5, 1.0, 4).build().is_err());
        assert!(spiked(1, 1.0, 0.0, 4).build().is_err());
        assert!(spiked(0, 1.0, 1.0, 4).build().is_ok());
    }

    #[test]
    fn model_json_schema() {
        let m: SpectrumModel = serde_json::from_str(
            r#"{"model":"spiked","k_spikes":2,"lambda_top":5,"lambda_tail":1,"p":10}"#,
        )
        .unwrap();
        assert_eq!(
            m,
            SpectrumModel::Spiked {
                k_spikes: 2,
                lambda_top: 5.0,
                lambda_tail: 1.0,
                p: 10
            }
        );
        let m: SpectrumModel =
            serde_json::from_str(r#"{"model":"explicit","values":[2,1]}"#).unwrap();
        assert_eq!(m.build().unwrap().p(), 2);
        let back = serde_json::to_string(&SpectrumModel::Exponential { gamma: 0.5, p: 7 }).unwrap();
        assert_eq!(back, r#"{"model":"exponential","gamma":0.5,"p":7}"#);
    }

    #[test]
    fn effective_ranks_on_flat_spectrum() {
        let s = ones(100);
        let r = effective_ranks(&s, 0.0, 10, 0).unwrap();
        assert_eq!(r.rho_k, 10.0);
        assert_eq!(r.big_r_k, 100.0);
        let r = effective_ranks(&s, 100.0, 10, 0).unwrap();
        assert_eq!(r.rho_k, 20.0);
    }

    #[test]
    fn effective_ranks_hand_example() {
        let s = Spectrum::from_values(vec![4.0, 2.0, 1.0, 1.0, 1.0, 1.0]).unwrap();
        let rho: Vec<f64> = (0..3)
            .map(|k| effective_ranks(&s, 0.0, 2, k).unwrap().rho_k)
            .collect();
        // Σ_{i>k} includes λ_{k+1}: (10/8, 6/4, 4/2)
        assert_eq!(rho, vec![1.25, 1.5, 2.0]);
        let r = effective_ranks(&s, 0.0, 2, 2).unwrap();
        assert_eq!(r.tail_sum, 4.0);
        assert_eq!(r.lambda_next(), 1.0);
    }

    #[test]
    fn effective_ranks_errors() {
        let s = ones(5);
        assert!(matches!(
            effective_ranks(&s, 0.0, 3, 4),
            Err(Error::KOutOfRange { k: 4, limit: 4 })
        ));
        assert!(matches!(
            effective_ranks(&s, 0.0, 10, 5),
            Err(Error::KOutOfRange { k: 5, limit: 5 })
        ));
        assert!(matches!(
            effective_ranks(&s, -5.0, 10, 0),
            Err(Error::Domain { .. })
        ));
        // negative λ is fine while λ + tail stays positive
        let r = effective_ranks(&s, -4.0, 10, 0).unwrap();
        assert_relative_eq!(r.rho_k, 0.1);
    }

    #[test]
    fn k_star_examples() {
        let s = Spectrum::from_values(vec![4.0, 2.0, 1.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(select_k_star(&s, 0.0, 2, 1.0), Some(0));
        assert_eq!(select_k_star(&s, 0.0, 2, 1.5), Some(2));
        assert_eq!(select_k_star(&s, 0.0, 2, 2.0), None);
        assert_eq!(select_k_star(&ones(100), 0.0, 10, 5.0), Some(0));
        assert_eq!(select_k_star(&ones(1), 0.0, 10, 5.0), None);
    }

    #[test]
    fn tail_sums_and_views() {
        let s = Spectrum::from_values(vec![3.0, 2.0, 1.0]).unwrap();
        assert_eq!(s.tail_sum(0), 6.0);
        assert_eq!(s.tail_sum(2), 1.0);
        assert_eq!(s.tail_sum(3), 0.0);
        assert_eq!(s.tail_sq_sum(1), 5.0);
        assert_eq!(s.head(1), &[3.0]);
        assert_eq!(s.tail(1), &[2.0, 1.0]);
        assert_eq!(s.lambda(1), Some(3.0));
        assert_eq!(s.lambda(4), None);
        assert_eq!(s.lambda(0), None);
    }
}
