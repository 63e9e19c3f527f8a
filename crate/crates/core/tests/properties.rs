use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use gauss_lasso_core::conditions::{
    gic_margin, gic_norm, irrepresentability_margin, restricted_eigenvalue, ReOptions,
};
use gauss_lasso_core::data_pipeline::{full_ols, preprocess, read_csv, LoadOptions, PruneMode};
use gauss_lasso_core::designs::{confounder_active_formulas, synth_instance_seeded, ConfounderDesign};
use gauss_lasso_core::experiments::{run_trials, ExperimentConfig, PreparedExperiment};
use gauss_lasso_core::gauss_lasso::{select, stage_two_residual_correlation};
use gauss_lasso_core::lasso::{self, geometric_grid, LassoSettings};
use gauss_lasso_core::model::empirical_covariance;
use gauss_lasso_core::population::{extended_support, fit_zero_noise, support_size_bound};
use gauss_lasso_core::{CovarianceModel, RegressionInstance, SignedSupport};

fn gaussian_matrix(r: &mut ChaCha20Rng, n: usize, p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |_, _| r.sample(StandardNormal))
}

/// Unit-diagonal `Σ ≻ 0` with sizeable correlations, plus a sparse signed `theta0`.
fn spd_case(seed: u64, p: usize, ridge: f64) -> (CovarianceModel, DVector<f64>) {
    let mut r = ChaCha20Rng::seed_from_u64(seed);
    let a = gaussian_matrix(&mut r, p, p);
    let m = a.tr_mul(&a) / p as f64 + DMatrix::identity(p, p) * ridge;
    let d: Vec<f64> = (0..p).map(|i| 1.0 / m[(i, i)].sqrt()).collect();
    let m = DMatrix::from_fn(p, p, |i, j| m[(i, j)] * d[i] * d[j]);
    let m = (&m + m.transpose()) * 0.5;
    let s0 = r.random_range(1..p);
    let theta0 = DVector::from_fn(p, |i, _| {
        if i < s0 {
            let mag: f64 = r.random_range(0.5..2.0);
            if r.random_bool(0.5) { mag } else { -mag }
        } else {
            0.0
        }
    });
    (CovarianceModel::population(m).unwrap(), theta0)
}

fn regression(seed: u64, n: usize, p: usize, sigma: f64) -> RegressionInstance {
    let mut r = ChaCha20Rng::seed_from_u64(seed);
    let x = gaussian_matrix(&mut r, n, p);
    let theta0 = DVector::from_fn(p, |i, _| if i < 3.min(p) { 1.0 - i as f64 } else { 0.0 });
    let y = &x * &theta0 + DVector::from_fn(n, |_, _| sigma * r.sample::<f64, _>(StandardNormal));
    RegressionInstance::new(x, y).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn orthogonal_columns_give_identity(n in 4usize..30, p in 1usize..4, seed in any::<u64>()) {
        prop_assume!(p <= n);
        let mut r = ChaCha20Rng::seed_from_u64(seed);
        let q = gaussian_matrix(&mut r, n, p).qr().q();
        let x = q * (n as f64).sqrt();
        let emp = empirical_covariance(&x).unwrap();
        prop_assert!((emp.matrix() - DMatrix::identity(p, p)).amax() <= 1e-10);
    }

    #[test]
    fn lasso_objective_monotone_and_kkt(seed in any::<u64>(), n in 10usize..40, p in 2usize..30, frac in 0.01f64..0.9) {
        let inst = regression(seed, n, p, 0.5);
        let lambda = frac * lasso::lambda_max(&inst);
        prop_assume!(lambda > 0.0);
        let fit = lasso::solve_lasso(&inst, lambda, &LassoSettings::default()).unwrap();
        for w in fit.objective_trace.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0));
        }
        prop_assert!(lasso::verify_kkt(&inst, lambda, &fit.coef, 1e-8).unwrap().ok);
    }

    #[test]
    fn orthogonal_design_supports_grow(xty in proptest::collection::vec(-3.0f64..3.0, 1..12)) {
        let inst = lasso::identity_instance(&xty);
        let hi = xty.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        prop_assume!(hi > 1e-3);
        let grid = geometric_grid(hi * 1.1, hi * 1e-3, 25).unwrap();
        let path = lasso::lasso_path(&inst, &grid, &LassoSettings::default()).unwrap();
        for w in path.supports.windows(2) {
            prop_assert!(w[1].contains(w[0].support()));
        }
    }

    #[test]
    fn warm_starts_agree_when_gram_is_definite(seed in any::<u64>(), p in 2usize..10, frac in 0.01f64..0.5) {
        let inst = regression(seed, 4 * p, p, 1.0);
        let lambda = frac * lasso::lambda_max(&inst);
        let cold = lasso::fit_lasso(&inst, lambda, &LassoSettings::default()).unwrap();
        let warm = LassoSettings {
            warm_start: Some(DVector::from_element(p, 5.0)),
            ..LassoSettings::default()
        };
        let other = lasso::fit_lasso(&inst, lambda, &warm).unwrap();
        prop_assert!((cold - other).amax() <= 1e-6);
    }

    #[test]
    fn zero_noise_constant_below_threshold(seed in any::<u64>(), p in 3usize..13, t1 in 0.05f64..0.95, t2 in 0.05f64..0.95) {
        let (cov, theta0) = spd_case(seed, p, 0.05);
        let ext = match extended_support(&cov, &theta0) {
            Ok(e) => e,
            Err(_) => return Ok(()),
        };
        let base = if ext.xi0.is_finite() { ext.xi0 } else { 1.0 };
        let settings = LassoSettings { kkt_tol: 1e-13, max_sweeps: 1_000_000, ..LassoSettings::default() };
        let t = ext.t_star().to_vec();
        let m = cov.matrix();
        let inv = DMatrix::from_fn(t.len(), t.len(), |i, j| m[(t[i], t[j])]).try_inverse().unwrap();
        let v = DVector::from_iterator(t.len(), t.iter().map(|&i| ext.v0()[i] as f64));
        let dir = inv * v;
        for xi in [t1 * base, t2 * base] {
            let sol = fit_zero_noise(&cov, &theta0, xi, &settings).unwrap();
            prop_assert_eq!(&SignedSupport::of(sol.as_slice(), 1e-9), &ext.support);
            for (k, &i) in t.iter().enumerate() {
                prop_assert!((sol[i] - (theta0[i] - xi * dir[k])).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn extended_support_size_and_dual_feasibility(seed in any::<u64>(), p in 3usize..10) {
        let (cov, theta0) = spd_case(seed, p, 0.05);
        let ext = match extended_support(&cov, &theta0) {
            Ok(e) => e,
            Err(_) => return Ok(()),
        };
        let s0 = theta0.iter().filter(|v| **v != 0.0).count();
        let kappa = restricted_eigenvalue(&cov, s0, 0.0, &ReOptions::default()).unwrap().value;
        prop_assert!(ext.t0() as f64 <= support_size_bound(&cov, s0, kappa).unwrap());
        prop_assert!(gic_norm(&cov, &theta0).unwrap() <= 1.0 + 1e-8);
        prop_assert!(gic_margin(&cov, &theta0).unwrap() >= -1e-8);
        if ext.t0() == s0 {
            let irr = irrepresentability_margin(&cov, &theta0).unwrap();
            prop_assert!((irr - gic_margin(&cov, &theta0).unwrap()).abs() <= 1e-10);
        }
    }

    #[test]
    fn restricted_eigenvalue_monotone_and_floored(seed in any::<u64>(), p in 3usize..9, s in 1usize..4) {
        let (cov, _) = spd_case(seed, p, 0.1);
        let s = s.min(p - 1);
        let opts = ReOptions { restarts: 8, iterations: 200, seed };
        let lmin = cov.min_eigenvalue();
        let k_s = restricted_eigenvalue(&cov, s, 0.0, &opts).unwrap().value;
        let k_s1 = restricted_eigenvalue(&cov, s + 1, 0.0, &opts).unwrap().value;
        let k_c = restricted_eigenvalue(&cov, s, 1.0, &opts).unwrap().value;
        prop_assert!(k_s1 <= k_s + 1e-12);
        prop_assert!(k_c <= k_s + 1e-12);
        for k in [k_s, k_s1, k_c] {
            prop_assert!(k >= lmin - 1e-10);
        }
    }

    #[test]
    fn stage_two_residual_orthogonal(seed in any::<u64>(), frac in 0.05f64..0.8) {
        let inst = regression(seed, 30, 12, 0.5);
        let lambda = frac * lasso::lambda_max(&inst);
        if let Ok(sel) = select(&inst, lambda, 3, &LassoSettings::default()) {
            prop_assert!(stage_two_residual_correlation(&inst, &sel) <= 1e-8 * inst.y().norm());
        }
    }

    #[test]
    fn noiseless_gauss_lasso_is_exact(seed in any::<u64>(), p in 4usize..15) {
        let cov = CovarianceModel::identity(p);
        let theta0 = DVector::from_fn(p, |i, _| if i < 2 { 1.0 + i as f64 } else { 0.0 });
        let inst = synth_instance_seeded(&cov, &theta0, 40, 0.0, seed).unwrap();
        let lambda = 0.05 * lasso::lambda_max(&inst);
        let sel = select(&inst, lambda, 2, &LassoSettings::default()).unwrap();
        if sel.lasso_support.contains(&0) && sel.lasso_support.contains(&1) {
            prop_assert!((&sel.theta_gl - &theta0).amax() <= 1e-10);
            prop_assert_eq!(sel.selected, vec![0, 1]);
        }
    }

    #[test]
    fn confounder_formulas_continuous_at_boundary(s0 in 2usize..8) {
        let a = 1.0 / s0 as f64;
        let design = ConfounderDesign::new(s0 + 2, s0, a).unwrap();
        let (slope, inv_s, ratio) = confounder_active_formulas(&design);
        prop_assert!(slope.abs() <= 1e-12);
        prop_assert!((inv_s - 1.0).abs() <= 1e-12);
        prop_assert!((ratio - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn pipeline_is_deterministic_and_orthogonal(seed in any::<u64>(), n in 12usize..40, p in 2usize..6) {
        let mut r = ChaCha20Rng::seed_from_u64(seed);
        let mut text = (0..p).map(|j| format!("c{j}")).collect::<Vec<_>>().join(",") + ",y\n";
        for _ in 0..n {
            let row: Vec<String> = (0..p)
                .map(|_| if r.random_bool(0.05) { "?".to_string() } else { (r.sample::<f64, _>(StandardNormal) * 3.0 + 1.0).to_string() })
                .collect();
            text += &format!("{},{}\n", row.join(","), r.sample::<f64, _>(StandardNormal));
        }
        let ds = read_csv(text.as_bytes(), "y", &LoadOptions::default()).unwrap();
        let (a, b) = match (preprocess(&ds, &PruneMode::RankGreedy), preprocess(&ds, &PruneMode::RankGreedy)) {
            (Ok(a), Ok(b)) => (a, b),
            _ => return Ok(()),
        };
        prop_assert_eq!(&a, &b);
        let theta = full_ols(&a).unwrap();
        let x = a.design();
        let y = a.response_vector();
        let resid = &y - &x * theta;
        for j in 0..x.ncols() {
            let col = x.column(j);
            prop_assert!(col.dot(&resid).abs() <= 1e-8 * y.norm() * col.norm() + 1e-300);
        }
    }
}

#[test]
fn simulation_tables_are_bit_identical_and_implication_holds() {
    let cfg = ExperimentConfig {
        p: 20,
        n: 300,
        replicates: 40,
        ..ExperimentConfig::confounder_default(0.6, 21)
    };
    let prep = PreparedExperiment::new(&cfg).unwrap();
    let a = run_trials(&prep);
    let b = run_trials(&prep);
    assert_eq!(a, b);
    for t in &a {
        if t.lasso_sign_ok && t.gl_sup_err.is_some() {
            assert!(t.gl_support_ok, "replicate {}: lasso recovered v0 but selection missed S", t.replicate);
        }
    }
}
