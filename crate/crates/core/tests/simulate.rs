use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rfhmm::observables::theory_point;
use rfhmm::simulate::*;
use rfhmm::*;

fn random_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |_, _| rng.sample(StandardNormal))
}

fn features(kind: FeatureKind, d: usize, p: usize, master: u64) -> Arc<DMatrix<f64>> {
    Arc::new(generate_features(&FeatureEnsemble::new(kind, d, p).unwrap(), Seed::new(master)))
}

fn classification_loss(loss: Loss) -> LossModel {
    LossModel::new(loss, Task::Classification)
}

#[test]
fn haar_features_have_flat_spectrum() {
    for (d, p) in [(50, 120), (80, 80), (120, 50)] {
        let f = features(FeatureKind::HaarOrthogonal, d, p, 3);
        let gamma = d as f64 / p as f64;
        // d ≤ p: FFᵀ/p = I_d. d > p: FᵀF/p = γ I_p.
        let (gram, scale) = if d <= p {
            (&*f * f.transpose() / p as f64, 1.0)
        } else {
            (f.transpose() * &*f / p as f64, gamma)
        };
        let err = (gram - DMatrix::identity(d.min(p), d.min(p)) * scale).amax();
        assert!(err < 1e-10, "d={d} p={p}: {err}");
    }
}

#[test]
fn features_are_deterministic_per_seed() {
    for kind in [FeatureKind::GaussianIid, FeatureKind::HaarOrthogonal] {
        let a = features(kind, 30, 40, 11);
        let b = features(kind, 30, 40, 11);
        let c = features(kind, 30, 40, 12);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}

#[test]
fn sampled_spectra_match_their_laws() {
    // Trace of the resolvent of FFᵀ/p against the closed-form laws. The
    // orthogonal law is exact at any size.
    for (kind, gamma, tol) in [
        (FeatureKind::GaussianIid, 0.5, 5e-2),
        (FeatureKind::GaussianIid, 2.0, 5e-2),
        (FeatureKind::HaarOrthogonal, 0.5, 1e-10),
        (FeatureKind::HaarOrthogonal, 2.0, 1e-10),
    ] {
        let p = 200;
        let d = (gamma * p as f64) as usize;
        let f = features(kind, d, p, 7);
        let eig = SymmetricEigen::new(&*f * f.transpose() / p as f64).eigenvalues;
        let law = kind.spectrum().law(gamma).unwrap();
        for z in [0.5, 1.0, 2.0] {
            let empirical = eig.iter().map(|&t| 1.0 / (t + z)).sum::<f64>() / d as f64;
            let exact = law.stieltjes(z).unwrap();
            assert!(
                (empirical - exact).abs() < tol * exact,
                "{kind:?} gamma={gamma} z={z}: {empirical} vs {exact}"
            );
        }
    }
}

#[test]
fn sign_data_is_binary_and_balanced() {
    let (d, p, n) = (60, 90, 4000);
    let f = features(FeatureKind::GaussianIid, d, p, 1);
    let theta = Arc::new(sample_teacher(d, 1.0, Seed::new(1)));
    let data = generate_dataset(f, theta, Activation::Sign, TeacherChannel::Sign, n, Seed::new(2)).unwrap();
    assert!(data.x.iter().all(|&v| v == 1.0 || v == -1.0));
    assert!(data.y.iter().all(|&v| v == 1.0 || v == -1.0));
    assert!(data.y.mean().abs() < 4.0 / (n as f64).sqrt());
    for j in 0..p {
        assert_eq!(data.x.column(j).norm_squared(), n as f64);
    }
}

#[test]
fn erf_columns_have_kappa_second_moment() {
    // Haar features with d ≥ p have ‖F_j‖² = d, so every preactivation has
    // unit variance and E σ² = κ1² + κ★².
    let (d, p, n) = (100, 20, 20000);
    let f = features(FeatureKind::HaarOrthogonal, d, p, 4);
    let theta = Arc::new(sample_teacher(d, 1.0, Seed::new(4)));
    let data = generate_dataset(f, theta, Activation::Erf, TeacherChannel::Sign, n, Seed::new(5)).unwrap();
    let k = Activation::Erf.kappas().unwrap();
    let exact = k.kappa1 * k.kappa1 + k.kappa_star * k.kappa_star;
    // 2/π · arcsin(2/3), the closed form for erf.
    assert!((exact - 2.0 / std::f64::consts::PI * (2.0f64 / 3.0).asin()).abs() < 1e-3);
    for j in 0..p {
        let m2 = data.x.column(j).norm_squared() / n as f64;
        assert!((m2 - exact).abs() < 5.0 / (n as f64).sqrt(), "column {j}: {m2} vs {exact}");
    }
}

#[test]
fn equivalent_model_without_noise_is_linear_projection() {
    let (d, p, n) = (30, 40, 50);
    let f = features(FeatureKind::GaussianIid, d, p, 8);
    let theta = Arc::new(sample_teacher(d, 1.0, Seed::new(8)));
    let kappas = Kappas {
        kappa0: 0.0,
        kappa1: 1.0,
        kappa_star: 0.0,
    };
    let seed = Seed::new(9);
    let eq = generate_equivalent_dataset(f.clone(), theta.clone(), kappas, TeacherChannel::Sign, n, seed).unwrap();
    let orig = generate_dataset(f.clone(), theta.clone(), Activation::Sign, TeacherChannel::Sign, n, seed).unwrap();
    let c = {
        use rand_chacha::ChaCha20Rng;
        let mut rng: ChaCha20Rng = seed.rng(Purpose::Inputs);
        DMatrix::from_iterator(n, d, (0..n * d).map(|_| rng.sample::<f64, _>(StandardNormal)))
    };
    assert_eq!(eq.x, &c * &*f / (d as f64).sqrt());
    // Paired draws share the latent inputs and labels.
    assert_eq!(eq.y, orig.y);
    assert_eq!(orig.x, eq.x.map(f64::signum));
}

#[test]
fn equivalent_columns_are_centred_on_kappa0() {
    let (d, p, n) = (40, 10, 20000);
    let f = features(FeatureKind::GaussianIid, d, p, 2);
    let theta = Arc::new(sample_teacher(d, 1.0, Seed::new(2)));
    let kappas = Kappas {
        kappa0: 0.3,
        kappa1: 0.8,
        kappa_star: 0.6,
    };
    let data = generate_equivalent_dataset(f, theta, kappas, TeacherChannel::Sign, n, Seed::new(3)).unwrap();
    for j in 0..p {
        let mean = data.x.column(j).mean();
        assert!((mean - 0.3).abs() < 5.0 / (n as f64).sqrt(), "column {j}: {mean}");
    }
}

#[test]
fn ridge_branches_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (n, p) in [(40, 60), (60, 40)] {
        let x = random_matrix(&mut rng, n, p);
        let y = DVector::from_fn(n, |_, _| rng.sample(StandardNormal));
        let lambda = 0.7;
        let w = fit_ridge(&x, &y, lambda).unwrap();
        // Primal normal equations, solved by LU as an independent route.
        let mut a = x.tr_mul(&x);
        for i in 0..p {
            a[(i, i)] += lambda;
        }
        let primal = a.lu().solve(&x.tr_mul(&y)).unwrap();
        let dual = {
            let mut k = &x * x.transpose();
            for i in 0..n {
                k[(i, i)] += lambda;
            }
            x.tr_mul(&k.lu().solve(&y).unwrap())
        };
        assert!((&w - &primal).amax() < 1e-8, "n={n} p={p}");
        assert!((&primal - &dual).amax() < 1e-8, "n={n} p={p}");
    }
}

#[test]
fn ridge_edge_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let y = DVector::from_fn(25, |_, _| rng.sample(StandardNormal));
    let w = fit_ridge(&DMatrix::identity(25, 25), &y, 0.0).unwrap();
    assert!((&w - &y).amax() < 1e-14);
    let x = random_matrix(&mut rng, 25, 30);
    assert!(fit_ridge(&x, &y, 1e12).unwrap().norm() < 1e-6);
    // Rank-deficient Gram matrix without a ridge.
    let singular = DMatrix::zeros(25, 10);
    assert!(matches!(fit_ridge(&singular, &y, 0.0), Err(Error::Numerical { .. })));
    assert!(fit_ridge(&x, &DVector::zeros(3), 1.0).is_err());
}

#[test]
fn logistic_separable_toy_descends() {
    let x = DMatrix::from_row_slice(4, 2, &[1.0, 1.0, 2.0, 0.5, -1.0, -1.0, -0.5, -2.0]);
    let y = DVector::from_vec(vec![1.0, 1.0, -1.0, -1.0]);
    let lambda = 1e-2;
    let fit = fit_logistic(&x, &y, lambda, &FitOptions::default()).unwrap();
    assert!(fit.converged);
    let obj = |w: &DVector<f64>| {
        let z = &x * w;
        z.iter().zip(y.iter()).map(|(&z, &y)| (1.0 + (-y * z).exp()).ln()).sum::<f64>() + 0.5 * lambda * w.norm_squared()
    };
    assert!(obj(&fit.w) < 4.0 * std::f64::consts::LN_2);
}

#[test]
fn logistic_rejects_non_binary_labels() {
    let x = DMatrix::identity(3, 3);
    let y = DVector::from_vec(vec![1.0, 0.0, -1.0]);
    assert!(matches!(fit_logistic(&x, &y, 1.0, &FitOptions::default()), Err(Error::Usage(_))));
}

#[test]
fn logistic_flags_iteration_budget() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random_matrix(&mut rng, 50, 20);
    let y = DVector::from_fn(50, |i, _| if x[(i, 0)] > 0.0 { 1.0 } else { -1.0 });
    let opts = FitOptions { tol: 1e-12, max_iter: 1 };
    let fit = fit_logistic(&x, &y, 1e-3, &opts).unwrap();
    assert!(!fit.converged);
    assert_eq!(fit.iterations, 1);
}

#[test]
fn empirical_error_limits() {
    let (d, p, n_test) = (40, 60, 40000);
    let f = features(FeatureKind::GaussianIid, d, p, 5);
    let theta = Arc::new(sample_teacher(d, 1.0, Seed::new(5)));
    let sign = Generator::new(f.clone(), theta.clone(), DataModel::Original { activation: Activation::Sign }, TeacherChannel::Sign).unwrap();
    let zero = DVector::zeros(p);
    let eg = empirical_errors(&zero, &sign, classification_loss(Loss::Logistic), n_test, Seed::new(6)).unwrap();
    // f̂ = sign(0) = +1: half the labels are wrong, each costing 4/4.
    assert!((eg - 0.5).abs() < 3.0 / (n_test as f64).sqrt(), "{eg}");

    // Linear features with d = p and F invertible: w = √p F⁻¹θ⁰ reproduces
    // the teacher preactivation exactly.
    let f_sq = features(FeatureKind::HaarOrthogonal, d, d, 6);
    let lin = Kappas {
        kappa0: 0.0,
        kappa1: 1.0,
        kappa_star: 0.0,
    };
    let gen = Generator::new(f_sq.clone(), theta.clone(), DataModel::Equivalent { kappas: lin }, TeacherChannel::Sign).unwrap();
    let w = (*f_sq).clone().lu().solve(&*theta).unwrap() * (d as f64).sqrt();
    let eg = empirical_errors(&w, &gen, classification_loss(Loss::Logistic), 5000, Seed::new(7)).unwrap();
    assert_eq!(eg, 0.0);

    let reg = Generator::new(f, theta, DataModel::Original { activation: Activation::Sign }, TeacherChannel::linear(0.0).unwrap()).unwrap();
    let eg = empirical_errors(&zero, &reg, LossModel::new(Loss::Square, Task::Regression), n_test, Seed::new(8)).unwrap();
    // ρ is only 1 on average over the teacher draw; use its realised norm.
    let rho = sample_teacher(d, 1.0, Seed::new(5)).norm_squared() / d as f64;
    assert!((eg - rho).abs() < 5.0 / (n_test as f64).sqrt() * rho, "{eg} vs {rho}");
    assert!((eg - 1.0).abs() < 5.0 / (d as f64).sqrt());
}

fn square_config(d: usize, n_seeds: usize) -> ExperimentConfig {
    ExperimentConfig {
        d,
        n: 3 * d,
        p: 3 * d / 5,
        features: FeatureKind::GaussianIid,
        activation: Activation::Sign,
        model: ModelKind::Original,
        channel: TeacherChannel::Sign,
        loss: classification_loss(Loss::Square),
        lambda: 1e-4,
        rho: 1.0,
        n_seeds,
        n_test: None,
        fit: FitOptions::default(),
        master_seed: 2024,
    }
}

#[test]
fn single_seed_has_no_stderr() {
    let stats = averaged_experiment(&square_config(20, 1)).unwrap();
    assert_eq!(stats.n_seeds, 1);
    assert!(stats.stderr_eps_g.is_none() && stats.stderr_eps_t.is_none());
}

#[test]
fn experiments_are_deterministic() {
    let cfg = ExperimentConfig {
        loss: classification_loss(Loss::Logistic),
        lambda: 1e-2,
        ..square_config(20, 4)
    };
    assert_eq!(averaged_experiment(&cfg).unwrap(), averaged_experiment(&cfg).unwrap());
    let other = ExperimentConfig { master_seed: 7, ..cfg.clone() };
    assert_ne!(averaged_experiment(&cfg).unwrap().mean_eps_g, averaged_experiment(&other).unwrap().mean_eps_g);
    // A run's record does not depend on how many runs surround it.
    let one = run_seed(&cfg, 2).unwrap();
    assert_eq!(averaged_experiment(&cfg).unwrap().records[2], one);
}

#[test]
fn stderr_scales_as_inverse_root_seeds() {
    let small = averaged_experiment(&square_config(20, 40)).unwrap();
    let large = averaged_experiment(&ExperimentConfig {
        master_seed: 99,
        ..square_config(20, 160)
    })
    .unwrap();
    let ratio = small.stderr_eps_g.unwrap() / large.stderr_eps_g.unwrap();
    assert!((ratio - 2.0).abs() < 0.3 * 2.0, "ratio {ratio}");
}

#[test]
fn invalid_experiments_are_rejected() {
    assert!(averaged_experiment(&square_config(20, 0)).is_err());
    assert!(averaged_experiment(&ExperimentConfig { d: 0, ..square_config(20, 1) }).is_err());
    // Every run failing surfaces the error.
    let cfg = ExperimentConfig {
        loss: classification_loss(Loss::Logistic),
        lambda: 0.0,
        ..square_config(20, 2)
    };
    assert!(averaged_experiment(&cfg).is_err());
}

#[test]
fn square_loss_simulation_matches_theory() {
    let cfg = square_config(300, 30);
    let stats = averaged_experiment(&cfg).unwrap();
    assert!(stats.failures.is_empty());
    let alpha = cfg.n as f64 / cfg.p as f64;
    let gamma = cfg.d as f64 / cfg.p as f64;
    let params = ModelParams::new(
        alpha,
        gamma,
        cfg.lambda,
        1.0,
        Activation::Sign.kappas().unwrap(),
        TeacherChannel::Sign,
        cfg.loss,
        SpectralLaw::marchenko_pastur(gamma).unwrap(),
    )
    .unwrap();
    let th = theory_point(&params, None, &SolverOptions::default()).unwrap();
    let se_g = stats.stderr_eps_g.unwrap();
    let se_t = stats.stderr_eps_t.unwrap();
    assert!((stats.mean_eps_g - th.eps_g).abs() < 2.0 * se_g, "eps_g {} ± {se_g} vs {}", stats.mean_eps_g, th.eps_g);
    assert!((stats.mean_eps_t - th.eps_t).abs() < 2.0 * se_t, "eps_t {} ± {se_t} vs {}", stats.mean_eps_t, th.eps_t);
}

#[test]
fn dataset_dump_round_trips() {
    let (d, p, n) = (5, 7, 4);
    let f = features(FeatureKind::GaussianIid, d, p, 1);
    let theta = Arc::new(sample_teacher(d, 1.0, Seed::new(1)));
    let data = generate_dataset(f, theta, Activation::Erf, TeacherChannel::Sign, n, Seed::new(1).for_run(3)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("seed3.txt");
    let header = vec!["activation = erf".to_string(), "n = 4".to_string()];
    write_dataset(&path, &data, &header).unwrap();
    let back = read_dataset(&path).unwrap();
    assert_eq!(back.header, header);
    assert_eq!(back.seed, data.seed);
    assert_eq!(back.features, *data.features);
    assert_eq!(back.theta0, *data.theta0);
    assert_eq!(back.x, data.x);
    assert_eq!(back.y, data.y);
    assert!(read_dataset(&dir.path().join("missing.txt")).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn ridge_solution_is_stationary(n in 2usize..30, p in 2usize..30, seed in any::<u64>(), log_lambda in -4.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_matrix(&mut rng, n, p);
        let y = DVector::from_fn(n, |_, _| rng.sample(StandardNormal));
        let lambda = 10f64.powf(log_lambda);
        let w = fit_ridge(&x, &y, lambda).unwrap();
        let resid = x.tr_mul(&(&x * &w - &y)) + &w * lambda;
        let scale = x.norm_squared().max(1.0) * y.norm().max(1.0);
        prop_assert!(resid.amax() <= 1e-8 * scale);
    }

    #[test]
    fn logistic_meets_gradient_contract(n in 5usize..60, p in 2usize..40, seed in any::<u64>(), log_lambda in -3.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_matrix(&mut rng, n, p) / (p as f64).sqrt();
        let y = DVector::from_fn(n, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 });
        let lambda = 10f64.powf(log_lambda);
        let fit = fit_logistic(&x, &y, lambda, &FitOptions::default()).unwrap();
        prop_assert!(fit.converged);
        let z = &x * &fit.w;
        let dl = z.zip_map(&y, |z, y| -y / (1.0 + (y * z).exp()));
        let grad = x.tr_mul(&dl) + &fit.w * lambda;
        prop_assert!(grad.amax() <= 1e-4);
        prop_assert!((grad.amax() - fit.grad_norm).abs() < 1e-12);
    }

    #[test]
    fn seeds_give_distinct_streams(master in any::<u64>(), a in 0u64..1000, b in 0u64..1000) {
        prop_assume!(a != b);
        let sa = Seed::new(master).for_run(a);
        let sb = Seed::new(master).for_run(b);
        let draw = |s: Seed, p: Purpose| s.rng(p).random::<u64>();
        for p in [Purpose::Features, Purpose::Teacher, Purpose::Inputs] {
            prop_assert_ne!(draw(sa, p), draw(sb, p));
            prop_assert_ne!(draw(sa, p), draw(sa.test_split(), p));
        }
        prop_assert_ne!(draw(sa, Purpose::Features), draw(sa, Purpose::Inputs));
    }
}
