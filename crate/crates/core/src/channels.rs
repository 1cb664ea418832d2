//! Teacher output channels and trained-loss proximal maps.
//!
//! These are the scalar building blocks of the saddle-point integrands:
//! the teacher partition function `Z⁰(y; ω, V)` (the density of the label
//! given a Gaussian field with mean `ω` and variance `V`), its `ω`-derivative,
//! and the proximal map `η(y; ω, V) = argmin_x (x - ω)² / 2V + ℓ(y, x)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::quadrature::GaussHermite;

/// Default number of Gauss–Hermite nodes used to integrate real-valued labels.
pub const DEFAULT_LABEL_NODES: usize = 51;

/// Label-generating rule `y = f⁰(ν)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TeacherChannel {
    /// `y = ν + √Δ ξ`, `ξ ~ N(0, 1)`.
    LinearGaussian { delta: f64 },
    /// `y = sign(ν)`.
    Sign,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    Square,
    Logistic,
    /// `½ max(0, 1 − y x)²`; its zero-loss set is the set of margin-1 separators.
    SquaredHinge,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// Identity readout, error normalisation `1/4⁰`.
    Regression,
    /// Sign readout, error normalisation `1/4¹`.
    Classification,
}

/// Trained loss together with the task that fixes the readout `f̂`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LossModel {
    pub loss: Loss,
    pub task: Task,
}

impl TeacherChannel {
    pub fn linear(delta: f64) -> Result<Self> {
        if !(delta.is_finite() && delta >= 0.0) {
            return Err(Error::InvalidParams(format!("noise variance must be >= 0, got {delta}")));
        }
        Ok(TeacherChannel::LinearGaussian { delta })
    }

    /// Noiseless teacher output `f⁰(ν)`; noise is added by the caller.
    pub fn apply(&self, nu: f64) -> f64 {
        match self {
            TeacherChannel::LinearGaussian { .. } => nu,
            TeacherChannel::Sign => sign(nu),
        }
    }

    fn check(&self, y: f64, v: f64) -> Result<()> {
        if !(v > 0.0) {
            return Err(domain(format!("channel variance must be positive, got {v}")));
        }
        if let TeacherChannel::Sign = self {
            if y != 1.0 && y != -1.0 {
                return Err(domain(format!("sign channel labels are +-1, got {y}")));
            }
        }
        Ok(())
    }

    /// `Z⁰(y; ω, V) = ∫ dx N(x; ω, V) P⁰(y | x)`.
    pub fn partition(&self, y: f64, omega: f64, v: f64) -> Result<f64> {
        self.check(y, v)?;
        Ok(match *self {
            TeacherChannel::LinearGaussian { delta } => {
                let s2 = v + delta;
                (-(y - omega).powi(2) / (2.0 * s2)).exp() / (2.0 * PI * s2).sqrt()
            }
            TeacherChannel::Sign => 0.5 * (1.0 + y * libm::erf(omega / (2.0 * v).sqrt())),
        })
    }

    /// `∂_ω Z⁰(y; ω, V)`.
    pub fn partition_domega(&self, y: f64, omega: f64, v: f64) -> Result<f64> {
        self.check(y, v)?;
        Ok(match *self {
            TeacherChannel::LinearGaussian { delta } => {
                let s2 = v + delta;
                (y - omega) / s2 * (-(y - omega).powi(2) / (2.0 * s2)).exp() / (2.0 * PI * s2).sqrt()
            }
            TeacherChannel::Sign => y * (-omega * omega / (2.0 * v)).exp() / (2.0 * PI * v).sqrt(),
        })
    }

    /// Integration scheme for `∫ dy` against this channel.
    pub fn label_measure(&self, nodes: usize) -> LabelMeasure {
        match self {
            TeacherChannel::Sign => LabelMeasure::TwoPoint,
            TeacherChannel::LinearGaussian { delta } => LabelMeasure::Hermite {
                delta: *delta,
                rule: GaussHermite::new(nodes),
            },
        }
    }
}

/// One quadrature point of `∫ dy Z⁰(y; ω, V) (·)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LabelNode {
    pub y: f64,
    /// Weight of `∫ dy Z⁰(y) f(y)`.
    pub z: f64,
    /// Weight of `∫ dy ∂_ω Z⁰(y) f(y)`.
    pub dz: f64,
}

/// Realises `∫ dy` for a given channel.
///
/// The sign channel is an exact two-point sum whose weights carry `Z⁰`. Real
/// labels use a Gauss–Hermite rule in `y` centred on the conditional mean, so
/// the Gaussian density of `Z⁰` is absorbed in the rule.
#[derive(Clone, Debug)]
pub enum LabelMeasure {
    TwoPoint,
    Hermite { delta: f64, rule: GaussHermite },
}

impl LabelMeasure {
    /// Raw label support: `[-1, +1]` with unit weights for the sign channel,
    /// Hermite nodes around `omega` for the Gaussian one.
    pub fn support(&self, omega: f64, v: f64) -> Vec<(f64, f64)> {
        match self {
            LabelMeasure::TwoPoint => vec![(-1.0, 1.0), (1.0, 1.0)],
            LabelMeasure::Hermite { delta, rule } => {
                let s = (v + delta).sqrt();
                rule.iter().map(|(t, w)| (omega + s * t, w)).collect()
            }
        }
    }

    /// Quadrature nodes with `Z⁰` and `∂_ω Z⁰` folded into the weights.
    pub fn nodes(&self, omega: f64, v: f64, out: &mut Vec<LabelNode>) {
        out.clear();
        match self {
            LabelMeasure::TwoPoint => {
                let arg = omega / (2.0 * v).sqrt();
                let e = libm::erf(arg);
                let dens = (-arg * arg).exp() / (2.0 * PI * v).sqrt();
                for y in [-1.0, 1.0] {
                    out.push(LabelNode {
                        y,
                        z: 0.5 * (1.0 + y * e),
                        dz: y * dens,
                    });
                }
            }
            LabelMeasure::Hermite { delta, rule } => {
                let s = (v + delta).sqrt();
                for (t, w) in rule.iter() {
                    out.push(LabelNode {
                        y: omega + s * t,
                        z: w,
                        dz: w * t / s,
                    });
                }
            }
        }
    }
}

#[inline]
pub fn sign(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// `1 / (1 + e^{-t})` without overflow.
#[inline]
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^{t})` without overflow.
#[inline]
pub fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

impl LossModel {
    pub fn new(loss: Loss, task: Task) -> Self {
        Self { loss, task }
    }

    /// Error normalisation exponent `k` in `1/4^k`.
    pub fn k(&self) -> i32 {
        match self.task {
            Task::Regression => 0,
            Task::Classification => 1,
        }
    }

    /// Readout `f̂`.
    pub fn readout(&self, x: f64) -> f64 {
        match self.task {
            Task::Regression => x,
            Task::Classification => sign(x),
        }
    }

    /// `ℓ(y, x)`.
    pub fn value(&self, y: f64, x: f64) -> f64 {
        match self.loss {
            Loss::Square => 0.5 * (y - x) * (y - x),
            Loss::Logistic => softplus(-y * x),
            Loss::SquaredHinge => {
                let gap = (1.0 - y * x).max(0.0);
                0.5 * gap * gap
            }
        }
    }

    /// `∂ℓ/∂x`.
    pub fn derivative(&self, y: f64, x: f64) -> f64 {
        match self.loss {
            Loss::Square => x - y,
            Loss::Logistic => -y * sigmoid(-y * x),
            Loss::SquaredHinge => -y * (1.0 - y * x).max(0.0),
        }
    }

    /// `∂²ℓ/∂x²`.
    pub fn curvature(&self, y: f64, x: f64) -> f64 {
        match self.loss {
            Loss::Square => 1.0,
            Loss::Logistic => {
                let s = sigmoid(-y * x);
                s * (1.0 - s)
            }
            Loss::SquaredHinge => {
                if y * x < 1.0 {
                    y * y
                } else {
                    0.0
                }
            }
        }
    }

    /// `η(y; ω, V) = argmin_x (x - ω)² / 2V + ℓ(y, x)`.
    pub fn proximal(&self, y: f64, omega: f64, v: f64) -> Result<f64> {
        if !(v > 0.0) {
            return Err(domain(format!("proximal variance must be positive, got {v}")));
        }
        match self.loss {
            Loss::Square => Ok((omega + y * v) / (1.0 + v)),
            Loss::Logistic => logistic_prox(y, omega, v),
            Loss::SquaredHinge => {
                // In the margin u = y x: u = yω if yω ≥ 1, else (yω + V)/(1 + V).
                let a = y * omega;
                Ok(if a >= 1.0 { omega } else { y * (a + v) / (1.0 + v) })
            }
        }
    }

    /// `∂_ω η = 1 / (1 + V ℓ''(y, η))`.
    pub fn proximal_domega(&self, y: f64, omega: f64, v: f64) -> Result<f64> {
        match self.loss {
            Loss::Square => {
                if !(v > 0.0) {
                    return Err(domain(format!("proximal variance must be positive, got {v}")));
                }
                Ok(1.0 / (1.0 + v))
            }
            Loss::Logistic | Loss::SquaredHinge => {
                let eta = self.proximal(y, omega, v)?;
                Ok(1.0 / (1.0 + v * self.curvature(y, eta)))
            }
        }
    }

    /// `η` and `∂_ω η` in one pass.
    pub fn proximal_with_slope(&self, y: f64, omega: f64, v: f64) -> Result<(f64, f64)> {
        let eta = self.proximal(y, omega, v)?;
        Ok((eta, 1.0 / (1.0 + v * self.curvature(y, eta))))
    }
}

/// Stationarity residual `(x - ω)/V + ∂ℓ/∂x` of the logistic proximal problem.
pub fn logistic_stationarity(y: f64, omega: f64, v: f64, x: f64) -> f64 {
    (x - omega) / v - y * sigmoid(-y * x)
}

/// Logistic proximal map by safeguarded Newton.
///
/// In the margin variable `u = y x` the stationarity condition reads
/// `h(u) = u - yω - V σ(-u) = 0` with `h' = 1 + V σ(u) σ(-u) ≥ 1`, so the root
/// is unique and bracketed by `[yω, yω + V]`. Newton steps that leave the
/// bracket, and every step after the 50th, fall back to bisection.
fn logistic_prox(y: f64, omega: f64, v: f64) -> Result<f64> {
    let a = y * omega;
    let mut lo = a;
    let mut hi = a + v;
    let h = |u: f64| u - a - v * sigmoid(-u);
    let mut u = a + v * sigmoid(-a);
    u = u.clamp(lo, hi);
    let mut hu = h(u);
    for iter in 0..200 {
        let scale = u.abs().max(1.0);
        if hu == 0.0 || hu.abs() <= 4.0 * f64::EPSILON * scale {
            return Ok(y * u);
        }
        if hu > 0.0 {
            hi = u;
        } else {
            lo = u;
        }
        let s = sigmoid(u);
        let dh = 1.0 + v * s * (1.0 - s);
        let newton = u - hu / dh;
        let next = if iter < 50 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - u).abs() <= f64::EPSILON * scale {
            return Ok(y * next);
        }
        u = next;
        hu = h(u);
    }
    let residual = logistic_stationarity(y, omega, v, y * u);
    if residual.abs() <= 1e-12 {
        return Ok(y * u);
    }
    Err(Error::Numerical {
        context: "logistic proximal".into(),
        last: y * u,
        residual,
    })
}

/// `√(2/π)` helper shared by closed forms.
pub const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate_adaptive;
    use proptest::prelude::*;

    const SQ: LossModel = LossModel {
        loss: Loss::Square,
        task: Task::Classification,
    };
    const LOGI: LossModel = LossModel {
        loss: Loss::Logistic,
        task: Task::Classification,
    };

    #[test]
    fn partition_values() {
        let s = TeacherChannel::Sign;
        assert!((s.partition(1.0, 0.0, 1.0).unwrap() - 0.5).abs() < 1e-15);
        let lin = TeacherChannel::linear(0.0).unwrap();
        let inv = 1.0 / (2.0 * PI).sqrt();
        assert!((lin.partition(0.0, 0.0, 1.0).unwrap() - inv).abs() < 1e-15);
        // Oracle: ∫_0^∞ N(x; 1, 1) dx by adaptive quadrature.
        let oracle = integrate_adaptive(|x| (-(x - 1.0f64).powi(2) / 2.0).exp() * inv, 0.0, 40.0, 1e-14);
        assert!((s.partition(1.0, 1.0, 1.0).unwrap() - oracle).abs() < 1e-12);
        assert!((oracle - 0.841_344_746).abs() < 1e-8);
    }

    #[test]
    fn partition_derivative() {
        let s = TeacherChannel::Sign;
        let inv = 1.0 / (2.0 * PI).sqrt();
        assert!((s.partition_domega(1.0, 0.0, 1.0).unwrap() - inv).abs() < 1e-15);
        let lin = TeacherChannel::linear(0.0).unwrap();
        assert_eq!(lin.partition_domega(1.0, 1.0, 2.0).unwrap(), 0.0);
        let h = 1e-6;
        let fd = (s.partition(-1.0, 0.5 + h, 2.0).unwrap() - s.partition(-1.0, 0.5 - h, 2.0).unwrap()) / (2.0 * h);
        assert!((s.partition_domega(-1.0, 0.5, 2.0).unwrap() - fd).abs() < 1e-7);
        let lin = TeacherChannel::linear(0.3).unwrap();
        let fd = (lin.partition(0.2, 0.7 + h, 1.5).unwrap() - lin.partition(0.2, 0.7 - h, 1.5).unwrap()) / (2.0 * h);
        assert!((lin.partition_domega(0.2, 0.7, 1.5).unwrap() - fd).abs() < 1e-7);
    }

    #[test]
    fn partition_domain_errors() {
        let s = TeacherChannel::Sign;
        assert!(matches!(s.partition(1.0, 0.0, 0.0), Err(Error::Domain(_))));
        assert!(matches!(s.partition(0.5, 0.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(s.partition_domega(2.0, 0.0, 1.0), Err(Error::Domain(_))));
        assert!(TeacherChannel::linear(-0.1).is_err());
    }

    #[test]
    fn label_measure_shapes() {
        let mut out = Vec::new();
        TeacherChannel::Sign.label_measure(51).nodes(0.3, 0.8, &mut out);
        assert_eq!(out.iter().map(|n| n.y).collect::<Vec<_>>(), vec![-1.0, 1.0]);
        assert_eq!(
            TeacherChannel::Sign.label_measure(51).support(0.0, 1.0),
            vec![(-1.0, 1.0), (1.0, 1.0)]
        );
        let one = TeacherChannel::linear(0.0).unwrap().label_measure(1);
        let sup = one.support(0.7, 2.0);
        assert_eq!(sup, vec![(0.7, 1.0)]);
    }

    #[test]
    fn label_measure_normalised() {
        let lin = TeacherChannel::linear(1.0).unwrap();
        let lm = lin.label_measure(DEFAULT_LABEL_NODES);
        let mut out = Vec::new();
        lm.nodes(0.0, 1.0, &mut out);
        let total: f64 = out.iter().map(|n| n.z).sum();
        assert!((total - 1.0).abs() < 1e-10);
        for omega in [-5.0, -1.3, 0.0, 2.2, 5.0] {
            for v in [0.1, 1.0, 10.0] {
                for ch in [TeacherChannel::Sign, lin] {
                    ch.label_measure(DEFAULT_LABEL_NODES).nodes(omega, v, &mut out);
                    let total: f64 = out.iter().map(|n| n.z).sum();
                    let dtotal: f64 = out.iter().map(|n| n.dz).sum();
                    assert!((total - 1.0).abs() < 1e-8);
                    assert!(dtotal.abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn proximal_examples() {
        assert!((SQ.proximal(1.0, 0.0, 1.0).unwrap() - 0.5).abs() < 1e-15);
        // Oracle: bisection on x (1 + e^x) = 1 over [0, 1].
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid * (1.0 + mid.exp()) > 1.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let eta = LOGI.proximal(1.0, 0.0, 1.0).unwrap();
        assert!((eta - lo).abs() < 1e-13);
        assert!((eta - 0.401_058).abs() < 1e-6);
        let far = LOGI.proximal(1.0, 10.0, 1.0).unwrap();
        assert!((far - 10.0).abs() < 1e-3 && far > 10.0);
        // Brute-force minimiser agrees.
        let obj = |x: f64| (x - 10.0f64).powi(2) / 2.0 + softplus(-x);
        let grid_best = (0..=20000)
            .map(|i| 9.9 + 0.2 * i as f64 / 20000.0)
            .min_by(|a, b| obj(*a).total_cmp(&obj(*b)))
            .unwrap();
        assert!((far - grid_best).abs() < 2e-5);
    }

    #[test]
    fn proximal_slope_examples() {
        for (y, w) in [(1.0, 0.0), (-1.0, 3.0), (0.4, -2.0)] {
            assert!((SQ.proximal_domega(y, w, 1.0).unwrap() - 0.5).abs() < 1e-15);
        }
        let h = 1e-6;
        let fd = (LOGI.proximal(1.0, h, 1.0).unwrap() - LOGI.proximal(1.0, -h, 1.0).unwrap()) / (2.0 * h);
        assert!((LOGI.proximal_domega(1.0, 0.0, 1.0).unwrap() - fd).abs() < 1e-7);
        assert!((LOGI.proximal_domega(1.0, 0.3, 1e-8).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn proximal_errors() {
        assert!(matches!(SQ.proximal(1.0, 0.0, 0.0), Err(Error::Domain(_))));
        assert!(matches!(LOGI.proximal(1.0, 0.0, -1.0), Err(Error::Domain(_))));
        assert!(matches!(LOGI.proximal_domega(1.0, 0.0, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn extreme_margins_are_stable() {
        for omega in [-800.0, -40.0, 40.0, 800.0] {
            for y in [-1.0, 1.0] {
                let eta = LOGI.proximal(y, omega, 5.0).unwrap();
                assert!(eta.is_finite());
                let d = LOGI.proximal_domega(y, omega, 5.0).unwrap();
                assert!(d > 0.0 && d <= 1.0);
            }
        }
    }

    /// Generic convex 1-D minimiser: bisection on the sign of the derivative.
    fn bisect_min<F: Fn(f64) -> f64>(grad: F, mut a: f64, mut b: f64) -> f64 {
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if grad(m) > 0.0 {
                b = m;
            } else {
                a = m;
            }
        }
        0.5 * (a + b)
    }

    proptest! {
        #[test]
        fn prox_is_one_lipschitz(y in prop_oneof![Just(-1.0), Just(1.0)], w1 in -8.0f64..8.0, w2 in -8.0f64..8.0, v in 0.05f64..10.0) {
            let a = LOGI.proximal(y, w1, v).unwrap();
            let b = LOGI.proximal(y, w2, v).unwrap();
            prop_assert!((a - b).abs() <= (w1 - w2).abs() * (1.0 + 1e-12) + 1e-14);
        }

        #[test]
        fn prox_minimises_objective(y in prop_oneof![Just(-1.0), Just(1.0)], w in -6.0f64..6.0, v in 0.1f64..10.0,
                                    perturb in proptest::collection::vec(-3.0f64..3.0, 50)) {
            let eta = LOGI.proximal(y, w, v).unwrap();
            let obj = |x: f64| (x - w).powi(2) / (2.0 * v) + LOGI.value(y, x);
            for dx in perturb {
                prop_assert!(obj(eta) <= obj(eta + dx) + 1e-10);
            }
        }

        #[test]
        fn slope_in_unit_interval(y in prop_oneof![Just(-1.0), Just(1.0)], w in -20.0f64..20.0, v in 1e-3f64..50.0) {
            for lm in [SQ, LOGI] {
                let d = lm.proximal_domega(y, w, v).unwrap();
                prop_assert!(d > 0.0 && d <= 1.0);
            }
        }

        #[test]
        fn square_closed_form_matches_numeric(y in -3.0f64..3.0, w in -5.0f64..5.0, v in 0.1f64..10.0) {
            let grad = |x: f64| (x - w) / v + SQ.derivative(y, x);
            let numeric = bisect_min(grad, -20.0, 20.0);
            prop_assert!((SQ.proximal(y, w, v).unwrap() - numeric).abs() < 1e-10);
        }
    }
}
