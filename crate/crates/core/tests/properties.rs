use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use ridgebound::bounds::{
    matched_bounds, ratio_caps, tight_ratio_caps, Problem, RatioCapMode, SignalSpec,
};
use ridgebound::estimator::{
    exact_variance, ridge_fit_dual, ridge_fit_primal_oracle, risk_decomposition, sample_design,
    DesignFamily,
};
use ridgebound::spectrum::{effective_ranks, k_limit, select_k_star, Spectrum};

fn spectrum() -> impl Strategy<Value = Spectrum> {
    prop::collection::vec(1e-2f64..50.0, 1..30).prop_map(|mut v| {
        v.sort_by(|a, b| b.total_cmp(a));
        Spectrum::from_values(v).unwrap()
    })
}

fn spectrum_and_signal() -> impl Strategy<Value = (Spectrum, Vec<f64>)> {
    spectrum().prop_flat_map(|s| {
        let p = s.p();
        (Just(s), prop::collection::vec(-3.0f64..3.0, p))
    })
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rho_increases_with_lambda(s in spectrum(), n in 1usize..40, lam in 0.0f64..10.0, step in 1e-3f64..5.0) {
        for k in 0..k_limit(&s, n) {
            let a = effective_ranks(&s, lam, n, k).unwrap().rho_k;
            let b = effective_ranks(&s, lam + step, n, k).unwrap().rho_k;
            prop_assert!(b > a);
        }
    }

    #[test]
    fn ranks_are_scale_covariant(s in spectrum(), n in 1usize..40, lam in 0.0f64..10.0, c in 0.1f64..10.0) {
        let scaled = Spectrum::from_values(s.eigenvalues().iter().map(|v| v * c).collect()).unwrap();
        for k in 0..k_limit(&s, n) {
            let a = effective_ranks(&s, lam, n, k).unwrap();
            let b = effective_ranks(&scaled, lam * c, n, k).unwrap();
            prop_assert!(rel_close(a.rho_k, b.rho_k, 1e-12));
            prop_assert!(rel_close(a.big_r_k, b.big_r_k, 1e-12));
        }
    }

    #[test]
    fn k_star_is_first_index_above_threshold(s in spectrum(), n in 1usize..40, lam in 0.0f64..10.0, b in 0.0f64..5.0) {
        let brute = (0..k_limit(&s, n)).find(|&k| effective_ranks(&s, lam, n, k).unwrap().rho_k > b);
        prop_assert_eq!(select_k_star(&s, lam, n, b), brute);
    }

    #[test]
    fn matched_ratios_respect_caps((s, theta) in spectrum_and_signal(), n in 1usize..40, lam in 0.0f64..20.0) {
        let signal = SignalSpec::new(theta);
        let problem = Problem::new(&s, &signal, n, lam).unwrap();
        for k in 0..k_limit(&s, n) {
            let m = matched_bounds(&problem, k).unwrap();
            let caps = tight_ratio_caps(m.rho_k);
            prop_assert!(m.bias_ratio() >= 1.0 - 1e-9 && m.bias_ratio() <= caps.bias + 1e-9);
            prop_assert!(m.variance_ratio() >= 1.0 - 1e-9 && m.variance_ratio() <= caps.variance + 1e-9);
            let wide = ratio_caps(m.rho_k, RatioCapMode::Interval { a: m.rho_k / 2.0, b: m.rho_k * 2.0 }).unwrap();
            prop_assert!(wide.bias >= caps.bias - 1e-12 && wide.variance >= caps.variance - 1e-12);
        }
    }

    #[test]
    fn upper_variance_invariant_under_joint_scaling(s in spectrum(), n in 1usize..40, lam in 0.0f64..10.0, c in 0.1f64..10.0) {
        let scaled = Spectrum::from_values(s.eigenvalues().iter().map(|v| v * c).collect()).unwrap();
        let zero = SignalSpec::zeros(s.p());
        for k in 0..k_limit(&s, n) {
            let a = matched_bounds(&Problem::new(&s, &zero, n, lam).unwrap(), k).unwrap();
            let b = matched_bounds(&Problem::new(&scaled, &zero, n, lam * c).unwrap(), k).unwrap();
            prop_assert!(rel_close(a.v_over, b.v_over, 1e-12));
        }
    }

    #[test]
    fn dual_matches_primal(s in spectrum(), n in 2usize..20, lam in 1e-2f64..10.0, seed in any::<u64>()) {
        let x = sample_design(DesignFamily::Gaussian, &s, n, seed);
        let y = DVector::from_fn(n, |i, _| (i as f64).sin());
        let dual = ridge_fit_dual(&x, &y, lam, None).unwrap().theta_hat;
        let primal = ridge_fit_primal_oracle(&x, &y, lam).unwrap();
        prop_assert!((dual - &primal).amax() <= 1e-8 * (1.0 + primal.amax()));
    }

    #[test]
    fn more_regularization_shrinks(s in spectrum(), n in 2usize..20, lam in 1e-2f64..10.0, seed in any::<u64>()) {
        let x = sample_design(DesignFamily::Rademacher, &s, n, seed);
        let y = DVector::from_fn(n, |i, _| 1.0 + (i as f64).cos());
        let small = ridge_fit_dual(&x, &y, lam, None).unwrap().theta_hat.norm();
        let large = ridge_fit_dual(&x, &y, lam * 3.0, None).unwrap().theta_hat.norm();
        prop_assert!(large <= small * (1.0 + 1e-12));
    }

    #[test]
    fn fit_ignores_row_order(s in spectrum(), n in 2usize..20, lam in 1e-2f64..10.0, seed in any::<u64>(), shift in 0usize..20) {
        let x = sample_design(DesignFamily::Uniform, &s, n, seed);
        let y = DVector::from_fn(n, |i, _| (i as f64 * 0.7).sin());
        let perm: Vec<usize> = (0..n).map(|i| (i + shift) % n).collect();
        let xp = DMatrix::from_fn(n, s.p(), |i, j| x[(perm[i], j)]);
        let yp = DVector::from_fn(n, |i, _| y[perm[i]]);
        let a = ridge_fit_dual(&x, &y, lam, None).unwrap().theta_hat;
        let b = ridge_fit_dual(&xp, &yp, lam, None).unwrap().theta_hat;
        prop_assert!((a - &b).amax() <= 1e-9 * (1.0 + b.amax()));
    }

    #[test]
    fn mse_is_bias_plus_variance((s, theta) in spectrum_and_signal(), n in 2usize..20, lam in 1e-2f64..10.0, seed in any::<u64>()) {
        let x = sample_design(DesignFamily::Gaussian, &s, n, seed);
        let r = risk_decomposition(&x, &s, &theta, lam, 0.7, None).unwrap();
        prop_assert!(r.bias >= 0.0 && r.variance_expected >= 0.0);
        prop_assert!(rel_close(r.mse, r.bias + r.variance_expected, 1e-12));
        prop_assert!(rel_close(r.variance_expected, exact_variance(&x, &s, lam, 0.7).unwrap(), 1e-10));
    }

    #[test]
    fn dropping_head_lowers_gram_spectrum(s in spectrum(), n in 2usize..15, seed in any::<u64>()) {
        let x = sample_design(DesignFamily::Gaussian, &s, n, seed);
        let full = ridgebound::estimator::tail_gram_eigenvalues(&x, 0);
        let k = 1.min(s.p() - 1);
        let tail = ridgebound::estimator::tail_gram_eigenvalues(&x, k);
        let mut a: Vec<f64> = full.iter().copied().collect();
        let mut b: Vec<f64> = tail.iter().copied().collect();
        a.sort_by(|p, q| q.total_cmp(p));
        b.sort_by(|p, q| q.total_cmp(p));
        for (f, t) in a.iter().zip(&b) {
            prop_assert!(*t <= f + 1e-9 * (1.0 + f.abs()));
        }
    }
}
