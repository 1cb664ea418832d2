use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rfhmm::observables::*;
use rfhmm::saddle::ChannelIntegrator;
use rfhmm::*;

fn sign_kappas() -> Kappas {
    Activation::Sign.kappas().unwrap()
}

fn classification(alpha: f64, n_over_d: f64, lambda: f64, loss: Loss, kind: SpectrumKind) -> ModelParams {
    let gamma = alpha / n_over_d;
    ModelParams::new(
        alpha,
        gamma,
        lambda,
        1.0,
        sign_kappas(),
        TeacherChannel::Sign,
        LossModel::new(loss, Task::Classification),
        kind.law(gamma).unwrap(),
    )
    .unwrap()
}

#[test]
fn quadrature_error_matches_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let loss = LossModel::new(Loss::Logistic, Task::Classification);
    for _ in 0..50 {
        let rho: f64 = rng.random_range(0.3..3.0);
        let q: f64 = rng.random_range(0.05..5.0);
        let m: f64 = rng.random_range(-0.99..0.99) * (rho * q).sqrt();
        let exact = (m / (rho * q).sqrt()).acos() / std::f64::consts::PI;
        let quad = generalisation_error_quadrature(TeacherChannel::Sign, loss, rho, m, q).unwrap();
        assert!((quad - exact).abs() < 1e-6, "rho={rho} m={m} q={q}: {quad} vs {exact}");
    }
}

#[test]
fn regression_quadrature_matches_closed_form() {
    let loss = LossModel::new(Loss::Square, Task::Regression);
    let (rho, m, q, delta) = (1.3, 0.4, 0.9, 0.2);
    let quad = generalisation_error_quadrature(TeacherChannel::linear(delta).unwrap(), loss, rho, m, q).unwrap();
    assert!((quad - (rho + delta + q - 2.0 * m)).abs() < 1e-6);
}

#[test]
fn optimal_lambda_is_grid_minimum() {
    let p = classification(1.0 / 3.0, 3.0, 1e-2, Loss::Square, SpectrumKind::Gaussian);
    let grid = log_grid(1e-4, 1e1, 11);
    let opt = optimize_lambda(&p, &grid, true, &SolverOptions::default()).unwrap();
    assert!(opt.skipped.is_empty());
    for &(lambda, eg) in &opt.evaluations {
        assert!(opt.point.eps_g <= eg, "eps_g({}) = {} > eps_g({lambda}) = {eg}", opt.lambda, opt.point.eps_g);
    }
    assert!(opt.lambda >= 1e-4 && opt.lambda <= 1e1);
}

#[test]
fn single_point_grid_returns_that_lambda() {
    let p = classification(0.5, 3.0, 1e-2, Loss::Square, SpectrumKind::Gaussian);
    let opt = optimize_lambda(&p, &[0.37], true, &SolverOptions::default()).unwrap();
    assert_eq!(opt.lambda, 0.37);
}

#[test]
fn lambda_grid_below_floor_is_rejected() {
    let p = classification(0.5, 3.0, 1e-2, Loss::Square, SpectrumKind::Gaussian);
    assert!(optimize_lambda(&p, &[1e-7, 1e-2], false, &SolverOptions::default()).is_err());
    assert!(optimize_lambda(&p, &[], false, &SolverOptions::default()).is_err());
}

#[test]
fn training_loss_with_few_samples_decouples() {
    // With n ≪ p the rows of X/√p are orthonormal (E σ² = 1 for sign), so each
    // sample is fitted on its own: ε_t → min_z ℓ(1, z) + λz²/2, with the
    // penalty carrying λz★²/2.
    let lambda = 1.0;
    let p = ModelParams::new(
        1e-8,
        1.0,
        lambda,
        1.0,
        sign_kappas(),
        TeacherChannel::Sign,
        LossModel::new(Loss::Logistic, Task::Classification),
        SpectralLaw::marchenko_pastur(1.0).unwrap(),
    )
    .unwrap();
    let tp = theory_point(&p, None, &SolverOptions::default()).unwrap();
    // Stationarity e^{-z}/(1+e^{-z}) = λz, by bisection.
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if 1.0 / (1.0 + mid.exp()) > lambda * mid {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let z = 0.5 * (lo + hi);
    let envelope = (1.0 + (-z).exp()).ln() + 0.5 * lambda * z * z;
    let penalty = p.lambda * tp.overlaps.q_w / (2.0 * p.alpha);
    assert!((tp.eps_t - envelope).abs() < 1e-6, "eps_t = {} vs {envelope}", tp.eps_t);
    assert!((penalty - 0.5 * lambda * z * z).abs() < 1e-6, "penalty = {penalty}");
    // The teacher correlation of the fitted weights scales as √α.
    let gap = 0.5 - tp.eps_g;
    assert!(gap > 0.0 && gap < p.alpha.sqrt(), "eps_g = {}", tp.eps_g);
}

#[test]
fn logistic_data_loss_vanishes_past_separability() {
    // n/d = 3 separates below p/n ≈ 0.37; far beyond it only the penalty survives.
    let opts = SolverOptions::default();
    let mut last = f64::INFINITY;
    for p_over_n in [2.0, 5.0, 20.0] {
        let p = classification(1.0 / p_over_n, 3.0, 1e-4, Loss::Logistic, SpectrumKind::Gaussian);
        let tp = theory_point(&p, None, &opts).unwrap();
        assert!(tp.report.converged);
        let integ = ChannelIntegrator::new(p.channel, opts.xi_rule, opts.label_nodes);
        let data = integ.loss_term(&tp.overlaps, &p).unwrap();
        let penalty = p.lambda * tp.overlaps.q_w / (2.0 * p.alpha);
        assert!(data >= 0.0 && data < 1e-3, "p/n={p_over_n}: data term {data}");
        assert!((tp.eps_t - penalty - data).abs() < 1e-12);
        assert!(tp.eps_t < last);
        last = tp.eps_t;
    }
}

#[test]
fn square_loss_double_descent_peaks_at_interpolation() {
    let opts = SolverOptions::default();
    let grid = log_grid(0.1, 10.0, 21);
    let mut best = (0.0, f64::NEG_INFINITY);
    let mut init = None;
    for &pn in &grid {
        let p = classification(1.0 / pn, 3.0, 1e-4, Loss::Square, SpectrumKind::Gaussian);
        let tp = theory_point(&p, init, &opts).unwrap();
        init = Some(tp.overlaps);
        if tp.eps_g > best.1 {
            best = (pn, tp.eps_g);
        }
    }
    let nearest = grid.iter().copied().min_by(|a, b| (a - 1.0).abs().total_cmp(&(b - 1.0).abs())).unwrap();
    assert_eq!(best.0, nearest);
}

#[test]
fn cover_threshold_in_vanishing_sample_limit() {
    let a = separability_threshold(0.01, SpectrumKind::Gaussian, sign_kappas(), &SeparabilityOptions::default()).unwrap();
    assert!((a - 2.0).abs() < 0.05 * 2.0, "alpha* = {a}");
}

#[test]
fn threshold_grows_with_samples_and_orthogonal_lies_below() {
    let k = sign_kappas();
    let sep = SeparabilityOptions::default();
    let mut last_mp = f64::INFINITY;
    let mut last_or = f64::INFINITY;
    for nd in [0.25, 0.5, 1.0, 2.0, 4.0] {
        let mp = 1.0 / separability_threshold(nd, SpectrumKind::Gaussian, k, &sep).unwrap();
        let or = 1.0 / separability_threshold(nd, SpectrumKind::Orthogonal, k, &sep).unwrap();
        assert!(mp < last_mp && or < last_or, "n/d={nd}");
        assert!(or < mp, "n/d={nd}: orthogonal {or} vs gaussian {mp}");
        last_mp = mp;
        last_or = or;
    }
}

#[test]
fn threshold_agrees_with_squared_hinge_saddle() {
    // The squared-hinge training loss vanishes exactly on separable data as
    // λ → 0, giving an independent fixed-point oracle for the transition.
    let nd = 3.0;
    let k = sign_kappas();
    let star = separability_threshold(nd, SpectrumKind::Gaussian, k, &SeparabilityOptions::default()).unwrap();
    let opts = SolverOptions::default();
    let data_loss = |alpha: f64| {
        let p = classification(alpha, nd, 1e-6, Loss::SquaredHinge, SpectrumKind::Gaussian);
        let fp = solve_fixed_point(&p, None, &opts).unwrap();
        assert!(fp.report.converged, "alpha={alpha}: {:?}", fp.report);
        ChannelIntegrator::new(p.channel, opts.xi_rule, opts.label_nodes).loss_term(&fp.overlaps, &p).unwrap()
    };
    let below = data_loss(0.95 * star);
    let above = data_loss(1.05 * star);
    assert!(below < 1e-3, "separable side: {below}");
    assert!(above > 1e-2, "non-separable side: {above}");
}

#[test]
fn unbracketed_threshold_is_an_error() {
    let sep = SeparabilityOptions {
        alpha_hi: 1.0,
        ..SeparabilityOptions::default()
    };
    let r = separability_threshold(3.0, SpectrumKind::Gaussian, sign_kappas(), &sep);
    assert!(matches!(r, Err(Error::Usage(_))));
}

#[test]
fn capacity_recovers_gardner_limit() {
    // Independent labels: min_t E[(tYV − Z)₊²] at t = 0 is E[Z₊²] = 1/2.
    assert!((separability_capacity(0.0) - 0.5).abs() < 1e-12);
    // Fully explained labels are always separable.
    assert_eq!(separability_capacity(1.0), 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn classification_error_depends_on_angle_only(
        q in 0.01f64..10.0,
        corr in -1.0f64..1.0,
        scale in 0.01f64..100.0,
    ) {
        let p = classification(1.0, 1.0, 1e-2, Loss::Logistic, SpectrumKind::Gaussian);
        let k = p.kappas;
        // Build two states with the same angle and Q scaled by scale².
        let make = |s: f64| {
            let q_s = s * s * q / (k.kappa1 * k.kappa1 + k.kappa_star * k.kappa_star);
            let big_q = (k.kappa1 * k.kappa1 + k.kappa_star * k.kappa_star) * q_s;
            Overlaps { v_s: 1.0, q_s, m_s: corr * big_q.sqrt() / k.kappa1, v_w: 1.0, q_w: q_s }
        };
        let a = generalisation_error(&make(1.0), &p).unwrap();
        let b = generalisation_error(&make(scale), &p).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&a));
    }
}

#[test]
fn sweep_is_warm_start_invariant() {
    let opts = SolverOptions::default();
    let grid: Vec<_> = log_grid(0.2, 5.0, 9)
        .into_iter()
        .map(|pn| classification(1.0 / pn, 3.0, 1e-3, Loss::Logistic, SpectrumKind::Gaussian))
        .collect();
    let cold = theory_sweep(&grid, false, &opts);
    let warm = theory_sweep(&grid, true, &opts);
    assert_eq!(cold.len(), grid.len());
    for (c, w) in cold.iter().zip(&warm) {
        let (c, w) = (c.as_ref().unwrap(), w.as_ref().unwrap());
        assert!(c.report.converged && w.report.converged);
        assert!(c.overlaps.distance(&w.overlaps) <= 10.0 * opts.tol, "{:?} vs {:?}", c.overlaps, w.overlaps);
        assert_eq!(c.params, w.params);
    }
}
