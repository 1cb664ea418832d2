//! Observables at the fixed point: generalisation error, training loss,
//! optimal ridge strength and the linear-separability threshold.

use serde::{Deserialize, Serialize};

use crate::activation::Kappas;
use crate::channels::{Loss, LossModel, Task, TeacherChannel};
use crate::error::{state, Error, Result};
use crate::par::*;
use crate::quadrature::{gaussian_expect_adaptive, gaussian_expect_split};
use crate::saddle::{solve_fixed_point, ChannelIntegrator, Hats, ModelParams, Overlaps, SolverOptions, SolverReport};
use crate::spectral::{SpectralLaw, SpectrumKind};

/// A solved problem instance together with its observables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryPoint {
    pub params: ModelParams,
    pub overlaps: Overlaps,
    pub hats: Hats,
    pub eps_g: f64,
    pub eps_t: f64,
    pub report: SolverReport,
}

impl TheoryPoint {
    /// `Q★ = κ1² q_s + κ★² q_w`.
    pub fn big_q(&self) -> f64 {
        self.overlaps.big_q(&self.params.kappas)
    }

    /// `M★ = κ1 m_s`.
    pub fn big_m(&self) -> f64 {
        self.overlaps.big_m(&self.params.kappas)
    }
}

fn clamp_correlation(m: f64, rho: f64, q: f64) -> Result<f64> {
    let c = m / (rho * q).sqrt();
    if c.abs() > 1.0 + 1e-10 {
        return Err(state(format!("|M|/sqrt(rho Q) = {} exceeds 1", c.abs())));
    }
    Ok(c.clamp(-1.0, 1.0))
}

/// Asymptotic generalisation error.
///
/// Regression: `ρ + Δ + Q★ − 2M★` (the test label carries the teacher noise).
/// Classification: `arccos(M★/√(ρQ★))/π`.
pub fn generalisation_error(ov: &Overlaps, p: &ModelParams) -> Result<f64> {
    let q = ov.big_q(&p.kappas);
    let m = ov.big_m(&p.kappas);
    if !(q > 0.0) {
        return Err(state(format!("Q must be positive, got {q}")));
    }
    match (p.channel, p.loss.task) {
        (TeacherChannel::LinearGaussian { delta }, Task::Regression) => Ok((p.rho + delta + q - 2.0 * m).max(0.0)),
        (TeacherChannel::Sign, Task::Classification) => {
            Ok(clamp_correlation(m, p.rho, q)?.acos() / std::f64::consts::PI)
        }
        _ => generalisation_error_quadrature(p.channel, p.loss, p.rho, m, q),
    }
}

/// `E[(f⁰(ν) − f̂(λ))²] / 4^k` by nested adaptive quadrature, with `(ν, λ)`
/// centred Gaussian of covariance `[[ρ, M], [M, Q]]`.
///
/// Works for any channel/readout pairing; used as a cross-check of the
/// closed forms.
pub fn generalisation_error_quadrature(channel: TeacherChannel, loss: LossModel, rho: f64, m: f64, q: f64) -> Result<f64> {
    if !(q > 0.0) || !(rho > 0.0) {
        return Err(state(format!("need rho > 0 and Q > 0, got rho={rho}, Q={q}")));
    }
    let c = clamp_correlation(m, rho, q)?;
    let sr = rho.sqrt();
    let a = c * q.sqrt();
    let b = (q * (1.0 - c * c)).max(0.0).sqrt();
    let noise = match channel {
        TeacherChannel::LinearGaussian { delta } => delta,
        TeacherChannel::Sign => 0.0,
    };
    let scale = 0.25f64.powi(loss.k());
    let value = gaussian_expect_adaptive(
        |u| {
            let teacher = channel.apply(sr * u);
            // The sign readout jumps where a·u + b·v = 0.
            let brk = if b > 0.0 { -a * u / b } else { f64::INFINITY };
            gaussian_expect_split(
                |v| {
                    let diff = teacher - loss.readout(a * u + b * v);
                    diff * diff
                },
                brk,
                1e-11,
            )
        },
        1e-10,
    );
    Ok(scale * (value + noise))
}

/// Asymptotic training loss `λ q_w/(2α) + E_ξ ∫dy Z⁰ ℓ(y, η(y, ω₁))`.
pub fn training_loss(ov: &Overlaps, _h: &Hats, p: &ModelParams) -> Result<f64> {
    training_loss_with(&ChannelIntegrator::with_defaults(p.channel), ov, p)
}

pub fn training_loss_with(integrator: &ChannelIntegrator, ov: &Overlaps, p: &ModelParams) -> Result<f64> {
    let data = integrator.loss_term(ov, p)?;
    Ok(p.lambda * ov.q_w / (2.0 * p.alpha) + data)
}

/// Solves the fixed point and evaluates both observables.
pub fn theory_point(p: &ModelParams, init: Option<Overlaps>, opts: &SolverOptions) -> Result<TheoryPoint> {
    let fp = solve_fixed_point(p, init, opts)?;
    let integrator = ChannelIntegrator::new(p.channel, opts.xi_rule, opts.label_nodes);
    Ok(TheoryPoint {
        params: p.clone(),
        overlaps: fp.overlaps,
        hats: fp.hats,
        eps_g: generalisation_error(&fp.overlaps, p)?,
        eps_t: training_loss_with(&integrator, &fp.overlaps, p)?,
        report: fp.report,
    })
}

/// Theory points along a grid, in grid order.
///
/// With `warm_start` each point starts from the previous converged solution,
/// which forces a sequential pass; otherwise points are solved independently
/// (in parallel with the `parallel` feature).
pub fn theory_sweep(grid: &[ModelParams], warm_start: bool, opts: &SolverOptions) -> Vec<Result<TheoryPoint>> {
    if !warm_start {
        return grid.par_iter().map(|p| theory_point(p, None, opts)).collect();
    }
    let mut init = None;
    grid.iter()
        .map(|p| {
            let tp = theory_point(p, init, opts);
            init = match &tp {
                Ok(t) if t.report.converged => Some(t.overlaps),
                _ => None,
            };
            tp
        })
        .collect()
}

/// `count` log-spaced values on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..count)
                .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
                .collect()
        }
    }
}

/// Default λ search grid: 25 log-spaced points on `[1e-6, 1e2]`.
pub fn default_lambda_grid() -> Vec<f64> {
    log_grid(1e-6, 1e2, 25)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaOptimum {
    pub lambda: f64,
    pub point: TheoryPoint,
    /// Grid values whose fixed point did not converge (or failed) and were skipped.
    pub skipped: Vec<f64>,
    /// Every converged grid evaluation, `(λ, ε_g)`.
    pub evaluations: Vec<(f64, f64)>,
}

/// Minimises ε_g over λ: a warm-started grid scan, then (optionally)
/// golden-section search in `log λ` over the cells adjacent to the best grid
/// point, to a relative λ-tolerance of 1e-2.
pub fn optimize_lambda(p: &ModelParams, grid: &[f64], refine: bool, opts: &SolverOptions) -> Result<LambdaOptimum> {
    if grid.is_empty() {
        return Err(Error::InvalidParams("lambda grid is empty".into()));
    }
    if let Some(bad) = grid.iter().find(|&&l| !(l >= 1e-6) || !l.is_finite()) {
        return Err(Error::InvalidParams(format!("lambda grid values must be >= 1e-6, got {bad}")));
    }
    let mut sorted = grid.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    sorted.dedup();
    let mut skipped = Vec::new();
    let mut evaluations = Vec::new();
    let mut best: Option<(usize, TheoryPoint)> = None;
    let mut warm: Option<Overlaps> = None;
    for (i, &lambda) in sorted.iter().enumerate() {
        match theory_point(&p.with_lambda(lambda), warm, opts) {
            Ok(tp) if tp.report.converged => {
                warm = Some(tp.overlaps);
                evaluations.push((lambda, tp.eps_g));
                if best.as_ref().is_none_or(|(_, b)| tp.eps_g < b.eps_g) {
                    best = Some((i, tp));
                }
            }
            Ok(_) | Err(_) => {
                log::warn!("lambda = {lambda:e}: fixed point not converged, skipped");
                skipped.push(lambda);
            }
        }
    }
    let (idx, mut point) =
        best.ok_or_else(|| Error::Usage("no lambda on the grid produced a converged fixed point".into()))?;
    if refine && sorted.len() > 1 {
        let lo = sorted[idx.saturating_sub(1)].ln();
        let hi = sorted[(idx + 1).min(sorted.len() - 1)].ln();
        let mut warm = point.overlaps;
        let mut eval = |log_l: f64| -> Option<TheoryPoint> {
            let tp = theory_point(&p.with_lambda(log_l.exp()), Some(warm), opts).ok()?;
            if !tp.report.converged {
                return None;
            }
            warm = tp.overlaps;
            Some(tp)
        };
        let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
        let (mut a, mut b) = (lo, hi);
        let mut x1 = b - inv_phi * (b - a);
        let mut x2 = a + inv_phi * (b - a);
        let mut f1 = eval(x1);
        let mut f2 = eval(x2);
        let val = |t: &Option<TheoryPoint>| t.as_ref().map_or(f64::INFINITY, |t| t.eps_g);
        while b - a > 1e-2 {
            if val(&f1) <= val(&f2) {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - inv_phi * (b - a);
                f1 = eval(x1);
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + inv_phi * (b - a);
                f2 = eval(x2);
            }
        }
        for cand in [f1, f2].into_iter().flatten() {
            evaluations.push((cand.params.lambda, cand.eps_g));
            if cand.eps_g < point.eps_g {
                point = cand;
            }
        }
    }
    Ok(LambdaOptimum {
        lambda: point.params.lambda,
        point,
        skipped,
        evaluations,
    })
}

/// How the separability threshold is located.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SeparabilityMethod {
    /// Exact zero-regularisation criterion of the Gaussian-equivalent model
    /// (see [`separability_capacity`]).
    Exact,
    /// Predicate "logistic training loss at `lambda` is below `threshold`".
    ///
    /// At finite λ the penalty term `λ q_w/(2α)` keeps ε_t of order
    /// `λ log²(1/λ)` even on separable data, so `threshold` has to sit above
    /// that floor; the located α★ is biased low by the smoothing of the
    /// transition.
    TrainingLoss { lambda: f64, threshold: f64 },
}

/// Settings of the separability search.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparabilityOptions {
    pub method: SeparabilityMethod,
    pub alpha_lo: f64,
    pub alpha_hi: f64,
    /// Relative tolerance on α★.
    pub rel_tol: f64,
}

impl Default for SeparabilityOptions {
    fn default() -> Self {
        Self {
            method: SeparabilityMethod::Exact,
            alpha_lo: 0.1,
            alpha_hi: 50.0,
            rel_tol: 1e-8,
        }
    }
}

/// Problem instance of the separability search at sample ratio α and fixed `n/d`.
pub fn separability_params(alpha: f64, n_over_d: f64, kind: SpectrumKind, kappas: Kappas, lambda: f64) -> Result<ModelParams> {
    let gamma = alpha / n_over_d;
    ModelParams::new(
        alpha,
        gamma,
        lambda,
        1.0,
        kappas,
        TeacherChannel::Sign,
        LossModel::new(Loss::Logistic, Task::Classification),
        kind.law(gamma)?,
    )
}

/// Fraction `r²/ρ` of the teacher field `ν` explained linearly by the
/// Gaussian-equivalent features at aspect ratio `γ = d/p`:
/// `1 − c g_μ(−c)` with `c = γ κ★²/κ1²`.
pub fn explained_fraction(law: &SpectralLaw, kappas: &Kappas) -> Result<f64> {
    let gamma = law.gamma();
    let c = gamma * kappas.kappa_star.powi(2) / kappas.kappa1.powi(2);
    // c → 0 leaves the mass of μ at zero; a tiny shift resolves the limit.
    let c = c.max(1e-12);
    Ok((1.0 - c * law.stieltjes(c)?).clamp(0.0, 1.0))
}

/// `E_Z[(a − Z)₊²]` and `E_Z[(a − Z)₊]` for standard normal `Z`.
fn hinge_moments(a: f64) -> (f64, f64) {
    let cdf = 0.5 * libm::erfc(-a / std::f64::consts::SQRT_2);
    let pdf = crate::quadrature::normal_pdf(a);
    ((a * a + 1.0) * cdf + a * pdf, a * cdf + pdf)
}

/// Critical feature-to-sample ratio `p/n` for a single-index probit label
/// `y = sign(√f V + √(1−f) ε)` on isotropic Gaussian covariates:
/// `min_t E[(t y V − Z)₊²]`, `V, ε, Z` independent standard normals.
///
/// This is the high-dimensional existence threshold of the logistic MLE
/// (data are separable iff `p/n` exceeds it); with `f = 0` it is Cover's 1/2.
pub fn separability_capacity(explained: f64) -> f64 {
    let f = explained.clamp(0.0, 1.0);
    if f >= 1.0 {
        return 0.0;
    }
    let ratio = (f / (1.0 - f)).sqrt();
    let p_plus = |v: f64| 0.5 * libm::erfc(-ratio * v / std::f64::consts::SQRT_2);
    // G(t) = E_V[P(+|V) F(tV) + P(−|V) F(−tV)], convex in t.
    let dgdt = |t: f64| {
        gaussian_expect_adaptive(
            |v| {
                let pp = p_plus(v);
                let (_, up) = hinge_moments(t * v);
                let (_, um) = hinge_moments(-t * v);
                2.0 * v * (pp * up - (1.0 - pp) * um)
            },
            1e-14,
        )
    };
    let g = |t: f64| {
        gaussian_expect_adaptive(
            |v| {
                let pp = p_plus(v);
                pp * hinge_moments(t * v).0 + (1.0 - pp) * hinge_moments(-t * v).0
            },
            1e-14,
        )
    };
    // The minimiser is t ≤ 0 (labels correlate positively with V); expand a bracket.
    let mut lo = -1.0;
    while dgdt(lo) > 0.0 && lo > -1e6 {
        lo *= 2.0;
    }
    let mut hi = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if dgdt(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-13 * lo.abs().max(1.0) {
            break;
        }
    }
    g(0.5 * (lo + hi))
}

/// Sample ratio `α★ = n/p` at which training data stop being linearly
/// separable, at fixed `n/d`.
pub fn separability_threshold(n_over_d: f64, kind: SpectrumKind, kappas: Kappas, sep: &SeparabilityOptions) -> Result<f64> {
    separability_threshold_with(n_over_d, kind, kappas, sep, &SolverOptions::default())
}

pub fn separability_threshold_with(
    n_over_d: f64,
    kind: SpectrumKind,
    kappas: Kappas,
    sep: &SeparabilityOptions,
    opts: &SolverOptions,
) -> Result<f64> {
    if !(n_over_d > 0.0) || !n_over_d.is_finite() {
        return Err(Error::InvalidParams(format!("n/d must be positive, got {n_over_d}")));
    }
    if !(sep.alpha_lo > 0.0 && sep.alpha_hi > sep.alpha_lo) {
        return Err(Error::InvalidParams(format!(
            "need 0 < alpha_lo < alpha_hi, got [{}, {}]",
            sep.alpha_lo, sep.alpha_hi
        )));
    }
    let separable = |alpha: f64| -> Result<bool> {
        match sep.method {
            SeparabilityMethod::Exact => {
                let law = kind.law(alpha / n_over_d)?;
                let f = explained_fraction(&law, &kappas)?;
                Ok(1.0 / alpha > separability_capacity(f))
            }
            SeparabilityMethod::TrainingLoss { lambda, threshold } => {
                let p = separability_params(alpha, n_over_d, kind, kappas, lambda)?;
                Ok(theory_point(&p, None, opts)?.eps_t < threshold)
            }
        }
    };
    let lo_sep = separable(sep.alpha_lo)?;
    let hi_sep = separable(sep.alpha_hi)?;
    if !lo_sep || hi_sep {
        return Err(Error::Usage(format!(
            "separability not bracketed on alpha in [{}, {}] (separable at ends: {lo_sep}, {hi_sep}); widen the bracket",
            sep.alpha_lo, sep.alpha_hi
        )));
    }
    let (mut lo, mut hi) = (sep.alpha_lo.ln(), sep.alpha_hi.ln());
    while hi - lo > sep.rel_tol {
        let mid = 0.5 * (lo + hi);
        if separable(mid.exp())? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}
