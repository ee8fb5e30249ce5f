//! Ridge regression in the overparametrized regime, including negative
//! regularization: closed-form bias/variance bounds, an exact dual-form
//! estimator, and a reproducible Monte Carlo harness that checks one
//! against the other.
//!
//! ```
//! use ridgebound::bounds::{matched_bounds, Problem, SignalSpec};
//! use ridgebound::spectrum::Spectrum;
//!
//! let spec = Spectrum::from_values(vec![1.0; 100]).unwrap();
//! let signal = SignalSpec::basis(100, 0);
//! let problem = Problem::new(&spec, &signal, 10, 0.0).unwrap();
//! let m = matched_bounds(&problem, 0).unwrap();
//! assert!((m.b_under - 100.0 / 121.0).abs() < 1e-12);
//! assert!((m.v_over - 0.1).abs() < 1e-12);
//! ```

pub mod bounds;
pub mod cli;
pub mod error;
pub mod estimator;
pub mod experiments;
pub mod spectrum;
pub mod verify;

pub use error::{Error, Result};

/// Shortest round-trip decimal representation, used for every float written to CSV.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/spectra.md")]
    mod spectra {}
    #[doc = include_str!("../../../book/src/dual-ridge.md")]
    mod dual_ridge {}
    #[doc = include_str!("../../../book/src/bias-variance.md")]
    mod bias_variance {}
    #[doc = include_str!("../../../book/src/bounds.md")]
    mod bounds {}
    #[doc = include_str!("../../../book/src/regimes.md")]
    mod regimes {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
