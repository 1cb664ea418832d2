//! Conjugate (hat) updates: the channel side of the saddle point.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::channels::{LabelMeasure, LabelNode, Loss, TeacherChannel, DEFAULT_LABEL_NODES, SQRT_2_OVER_PI};
use crate::error::{state, Error, Result};
use crate::quadrature::{integrate_adaptive_vec, normal_pdf, GaussHermite};

use super::params::{Hats, ModelParams, Overlaps};

/// Default node count when a Gauss–Hermite rule in ξ is requested.
pub const DEFAULT_XI_NODES: usize = 101;

/// Order parameters entering the channel integrals.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelState {
    pub q: f64,
    pub m: f64,
    pub v: f64,
    /// Teacher conditional variance `ρ − M²/Q`.
    pub v0: f64,
}

impl ChannelState {
    pub fn new(ov: &Overlaps, p: &ModelParams) -> Result<Self> {
        let k = &p.kappas;
        let q = ov.big_q(k);
        let m = ov.big_m(k);
        let v = ov.big_v(k);
        if !(q > 0.0) || !q.is_finite() {
            return Err(state(format!("Q must be positive, got {q}")));
        }
        if !(v > 0.0) || !v.is_finite() {
            return Err(state(format!("V must be positive, got {v}")));
        }
        let mut v0 = p.rho - m * m / q;
        if v0 < 1e-14 {
            if v0 < -1e-12 {
                return Err(state(format!("teacher variance rho - M^2/Q = {v0} is negative")));
            }
            v0 = 1e-14;
        }
        Ok(Self { q, m, v, v0 })
    }
}

/// Integration rule over the Gaussian field ξ.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum XiRule {
    /// Fixed Gauss–Hermite rule.
    Hermite { nodes: usize },
    /// Adaptive Gauss–Kronrod on `[-10, 10]`, split where the proximal map
    /// changes regime (`ω₁ ∈ {0, ±1, ±V}`).
    Adaptive { rel_tol: f64 },
}

impl Default for XiRule {
    fn default() -> Self {
        XiRule::Adaptive { rel_tol: 1e-11 }
    }
}

const XI_RANGE: f64 = 10.0;
const ABS_TOL: f64 = 1e-14;

/// Quadrature machinery for the channel integrals, reused across iterations.
#[derive(Clone, Debug)]
pub struct ChannelIntegrator {
    rule: XiRule,
    xi: GaussHermite,
    labels: LabelMeasure,
    channel: TeacherChannel,
}

/// Raw channel integrals before prefactors.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Accumulators {
    v: f64,
    q: f64,
    m: f64,
}

/// Breakpoints in a variable `t` with field `ω₁ = scale · t`.
fn feature_points(scale: f64, v: f64) -> Vec<f64> {
    let mut out = vec![0.0];
    if scale > 0.0 && scale.is_finite() {
        for w in [1.0, v, v + 1.0] {
            let t = w / scale;
            if t < XI_RANGE {
                out.push(t);
                out.push(-t);
            }
        }
    }
    out
}

impl ChannelIntegrator {
    pub fn new(channel: TeacherChannel, rule: XiRule, label_nodes: usize) -> Self {
        let nodes = match rule {
            XiRule::Hermite { nodes } => nodes.max(1),
            XiRule::Adaptive { .. } => 1,
        };
        Self {
            rule,
            xi: GaussHermite::new(nodes),
            labels: channel.label_measure(label_nodes.max(1)),
            channel,
        }
    }

    pub fn with_defaults(channel: TeacherChannel) -> Self {
        Self::new(channel, XiRule::default(), DEFAULT_LABEL_NODES)
    }

    pub fn channel(&self) -> TeacherChannel {
        self.channel
    }

    pub fn rule(&self) -> XiRule {
        self.rule
    }

    fn check(&self, p: &ModelParams) -> Result<()> {
        if p.channel != self.channel {
            return Err(Error::Usage(format!(
                "integrator built for {:?}, parameters use {:?}",
                self.channel, p.channel
            )));
        }
        Ok(())
    }

    /// `E_t[h(t)]` for standard normal `t`, with `h` varying on the scale
    /// `1/scale` around the feature points.
    fn expect<const N: usize, H>(&self, scale: f64, v: f64, mut h: H) -> Result<[f64; N]>
    where
        H: FnMut(f64) -> Result<[f64; N]>,
    {
        match self.rule {
            XiRule::Hermite { .. } => {
                let mut total = [0.0; N];
                for (t, w) in self.xi.iter() {
                    let val = h(t)?;
                    for i in 0..N {
                        total[i] += w * val[i];
                    }
                }
                Ok(total)
            }
            XiRule::Adaptive { rel_tol } => integrate_adaptive_vec(
                |t| {
                    let d = normal_pdf(t);
                    let mut val = h(t)?;
                    for x in &mut val {
                        *x *= d;
                    }
                    Ok(val)
                },
                -XI_RANGE,
                XI_RANGE,
                &feature_points(scale, v),
                rel_tol,
                ABS_TOL,
            ),
        }
    }

    /// `E_ξ ∫dy Z⁰(y, ω₀) f(y, ω₁)`, `ω₀ = (M/√Q) ξ`, `ω₁ = √Q ξ`.
    fn z_weighted<const N: usize, F>(&self, cs: &ChannelState, mut f: F) -> Result<[f64; N]>
    where
        F: FnMut(f64, f64) -> Result<[f64; N]>,
    {
        let sq = cs.q.sqrt();
        let ratio = cs.m / sq;
        let mut buf: Vec<LabelNode> = Vec::new();
        self.expect(sq, cs.v, |xi| {
            let omega1 = sq * xi;
            self.labels.nodes(ratio * xi, cs.v0, &mut buf);
            let mut acc = [0.0; N];
            for node in &buf {
                if node.z != 0.0 {
                    let val = f(node.y, omega1)?;
                    for i in 0..N {
                        acc[i] += node.z * val[i];
                    }
                }
            }
            Ok(acc)
        })
    }

    /// `E_ξ ∫dy ∂_ω Z⁰(y, ω₀) g(y, ω₁)`.
    ///
    /// For the sign teacher the Gaussian factor of `∂_ω Z⁰` combines with the
    /// ξ density into a narrower Gaussian, integrated exactly in a rescaled
    /// variable; this stays accurate when `V⁰ → 0`.
    fn dz_weighted<F>(&self, cs: &ChannelState, rho: f64, mut g: F) -> Result<f64>
    where
        F: FnMut(f64, f64) -> Result<f64>,
    {
        let sq = cs.q.sqrt();
        match self.labels {
            LabelMeasure::TwoPoint => {
                let scale = sq * (cs.v0 / rho).sqrt();
                let [total] = self.expect(scale, cs.v, |u| {
                    let omega1 = scale * u;
                    Ok([g(1.0, omega1)? - g(-1.0, omega1)?])
                })?;
                Ok(total / (2.0 * PI * rho).sqrt())
            }
            LabelMeasure::Hermite { .. } => {
                let ratio = cs.m / sq;
                let mut buf: Vec<LabelNode> = Vec::new();
                let [total] = self.expect(sq, cs.v, |xi| {
                    self.labels.nodes(ratio * xi, cs.v0, &mut buf);
                    let omega1 = sq * xi;
                    let mut inner = 0.0;
                    for node in &buf {
                        inner += node.dz * g(node.y, omega1)?;
                    }
                    Ok([inner])
                })?;
                Ok(total)
            }
        }
    }

    fn accumulate(&self, cs: &ChannelState, p: &ModelParams) -> Result<Accumulators> {
        let loss = p.loss;
        let v = cs.v;
        let [acc_v, acc_q] = self.z_weighted(cs, |y, omega1| {
            let (eta, slope) = loss.proximal_with_slope(y, omega1, v)?;
            let r = eta - omega1;
            Ok([1.0 - slope, r * r])
        })?;
        let acc_m = self.dz_weighted(cs, p.rho, |y, omega1| Ok(loss.proximal(y, omega1, v)? - omega1))?;
        Ok(Accumulators {
            v: acc_v,
            q: acc_q,
            m: acc_m,
        })
    }

    /// The five conjugate updates by quadrature.
    pub fn hat_update(&self, ov: &Overlaps, p: &ModelParams) -> Result<Hats> {
        self.check(p)?;
        let cs = ChannelState::new(ov, p)?;
        let acc = self.accumulate(&cs, p)?;
        Ok(assemble(&acc, &cs, p))
    }

    /// `E_ξ ∫dy Z⁰(y, ω₀) ℓ(y, η(y, ω₁))`, the data term of the training loss.
    pub fn loss_term(&self, ov: &Overlaps, p: &ModelParams) -> Result<f64> {
        self.check(p)?;
        let cs = ChannelState::new(ov, p)?;
        let loss = p.loss;
        let [total] = self.z_weighted(&cs, |y, omega1| {
            let eta = loss.proximal(y, omega1, cs.v)?;
            Ok([loss.value(y, eta)])
        })?;
        Ok(total)
    }
}

fn assemble(acc: &Accumulators, cs: &ChannelState, p: &ModelParams) -> Hats {
    let k1 = p.kappas.kappa1;
    let ks2 = p.kappas.kappa_star * p.kappas.kappa_star;
    let a = p.alpha;
    let g = p.gamma;
    let v = cs.v;
    Hats {
        vhat_s: a * k1 * k1 / (g * v) * acc.v,
        qhat_s: a * k1 * k1 / (g * v * v) * acc.q,
        mhat_s: a * k1 / (g * v) * acc.m,
        vhat_w: a * ks2 / v * acc.v,
        qhat_w: a * ks2 / (v * v) * acc.q,
    }
}

/// Quadrature hat update with default node counts.
pub fn hat_update(ov: &Overlaps, p: &ModelParams) -> Result<Hats> {
    ChannelIntegrator::with_defaults(p.channel).hat_update(ov, p)
}

/// Closed-form hats for the square loss.
///
/// Linear teacher: exact for any `ρ`. Sign teacher: only `ρ = 1` is supported.
pub fn analytic_hat_update_square(ov: &Overlaps, p: &ModelParams) -> Result<Hats> {
    if p.loss.loss != Loss::Square {
        return Err(Error::Usage(format!("closed-form hats need square loss, got {:?}", p.loss.loss)));
    }
    let k = &p.kappas;
    let q = ov.big_q(k);
    let m = ov.big_m(k);
    let v = ov.big_v(k);
    if !(v > 0.0) {
        return Err(state(format!("V must be positive, got {v}")));
    }
    let (residual, overlap) = match p.channel {
        // E[(y - ω₁)²] and E[y ν]-type cross term per unit α κ1/γ.
        TeacherChannel::LinearGaussian { delta } => (p.rho + delta + q - 2.0 * m, 1.0),
        TeacherChannel::Sign => {
            if (p.rho - 1.0).abs() > 1e-12 {
                return Err(Error::Usage(format!(
                    "sign-teacher closed form assumes rho = 1, got {}",
                    p.rho
                )));
            }
            (1.0 + q - 2.0 * SQRT_2_OVER_PI * m, SQRT_2_OVER_PI)
        }
    };
    let k1 = k.kappa1;
    let ks2 = k.kappa_star * k.kappa_star;
    let a = p.alpha;
    let g = p.gamma;
    let d = 1.0 + v;
    Ok(Hats {
        vhat_s: a * k1 * k1 / (g * d),
        qhat_s: a * k1 * k1 / g * residual / (d * d),
        mhat_s: a * k1 / g * overlap / d,
        vhat_w: a * ks2 / d,
        qhat_w: a * ks2 * residual / (d * d),
    })
}

/// Whether [`analytic_hat_update_square`] applies to these parameters.
pub fn has_closed_form(p: &ModelParams) -> bool {
    p.loss.loss == Loss::Square
        && match p.channel {
            TeacherChannel::LinearGaussian { .. } => true,
            TeacherChannel::Sign => (p.rho - 1.0).abs() <= 1e-12,
        }
}
