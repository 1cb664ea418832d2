use serde::{Deserialize, Serialize};

use crate::activation::Kappas;
use crate::channels::{Loss, LossModel, Task, TeacherChannel};
use crate::error::{Error, Result};
use crate::spectral::SpectralLaw;

/// One asymptotic problem instance.
///
/// `alpha = n/p`, `gamma = d/p`, `lambda` the ridge strength and `rho` the
/// teacher norm `‖θ⁰‖²/d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub alpha: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub rho: f64,
    pub kappas: Kappas,
    pub channel: TeacherChannel,
    pub loss: LossModel,
    pub spectral: SpectralLaw,
}

impl ModelParams {
    /// Validating constructor. The spectral law's aspect ratio must match `gamma`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        alpha: f64,
        gamma: f64,
        lambda: f64,
        rho: f64,
        kappas: Kappas,
        channel: TeacherChannel,
        loss: LossModel,
        spectral: SpectralLaw,
    ) -> Result<Self> {
        let p = Self {
            alpha,
            gamma,
            lambda,
            rho,
            kappas,
            channel,
            loss,
            spectral,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return bad(format!("gamma must be positive, got {}", self.gamma));
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return bad(format!(
                "lambda must be positive (use a floor such as 1e-4), got {}",
                self.lambda
            ));
        }
        if !(self.rho.is_finite() && self.rho > 0.0) {
            return bad(format!("rho must be positive, got {}", self.rho));
        }
        let k = &self.kappas;
        if k.kappa0.abs() > 1e-8 {
            return bad(format!("kappa0 must vanish, got {}", k.kappa0));
        }
        if !(k.kappa_star >= 0.0) {
            return bad(format!("kappa_star must be >= 0, got {}", k.kappa_star));
        }
        if !(k.kappa1.is_finite() && k.kappa1 != 0.0) {
            return bad(format!("kappa1 must be nonzero, got {}", k.kappa1));
        }
        let sg = self.spectral.gamma();
        if (sg - self.gamma).abs() > 1e-12 * self.gamma.max(1.0) {
            return bad(format!("spectral law has gamma {sg}, parameters have {}", self.gamma));
        }
        if let TeacherChannel::LinearGaussian { delta } = self.channel {
            if !(delta.is_finite() && delta >= 0.0) {
                return bad(format!("noise variance must be >= 0, got {delta}"));
            }
        }
        match (self.channel, self.loss.task) {
            (TeacherChannel::Sign, Task::Classification) | (TeacherChannel::LinearGaussian { .. }, Task::Regression) => {}
            (ch, task) => return bad(format!("channel {ch:?} is incompatible with task {task:?}")),
        }
        if matches!(self.loss.loss, Loss::Logistic | Loss::SquaredHinge) && self.channel != TeacherChannel::Sign {
            return bad(format!("{:?} loss needs +-1 labels (sign teacher)", self.loss.loss));
        }
        Ok(())
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        Self {
            lambda,
            ..self.clone()
        }
    }
}

/// The five β-rescaled overlaps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Overlaps {
    pub v_s: f64,
    pub q_s: f64,
    pub m_s: f64,
    pub v_w: f64,
    pub q_w: f64,
}

impl Default for Overlaps {
    /// Initial state `V = 1, q = 0.5, m = 0.01`; the small `m` breaks the `m = 0`
    /// symmetric fixed point.
    fn default() -> Self {
        Self {
            v_s: 1.0,
            q_s: 0.5,
            m_s: 0.01,
            v_w: 1.0,
            q_w: 0.5,
        }
    }
}

impl Overlaps {
    pub fn to_array(&self) -> [f64; 5] {
        [self.v_s, self.q_s, self.m_s, self.v_w, self.q_w]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        Self {
            v_s: a[0],
            q_s: a[1],
            m_s: a[2],
            v_w: a[3],
            q_w: a[4],
        }
    }

    /// `Q = κ1² q_s + κ★² q_w`.
    pub fn big_q(&self, k: &Kappas) -> f64 {
        k.kappa1 * k.kappa1 * self.q_s + k.kappa_star * k.kappa_star * self.q_w
    }

    /// `M = κ1 m_s`.
    pub fn big_m(&self, k: &Kappas) -> f64 {
        k.kappa1 * self.m_s
    }

    /// `V = κ1² V_s + κ★² V_w`.
    pub fn big_v(&self, k: &Kappas) -> f64 {
        k.kappa1 * k.kappa1 * self.v_s + k.kappa_star * k.kappa_star * self.v_w
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|x| x.is_finite())
    }

    /// Convex combination `(1 − θ) self + θ other`.
    pub fn mix(&self, other: &Overlaps, theta: f64) -> Overlaps {
        let a = self.to_array();
        let b = other.to_array();
        let mut out = [0.0; 5];
        for i in 0..5 {
            out[i] = (1.0 - theta) * a[i] + theta * b[i];
        }
        Overlaps::from_array(out)
    }

    /// Largest componentwise relative change. Variances and second moments
    /// are measured against themselves, `m_s` against `√q_s` (it is bounded
    /// by `√(ρ q_s)` and may sit near zero), so tiny overlaps are resolved as
    /// accurately as large ones.
    pub fn distance(&self, other: &Overlaps) -> f64 {
        let a = self.to_array();
        let b = other.to_array();
        let m_scale = self.q_s.abs().max(other.q_s.abs()).sqrt();
        (0..5)
            .map(|i| {
                let mut scale = a[i].abs().max(b[i].abs());
                if i == 2 {
                    scale = scale.max(m_scale);
                }
                if scale > 0.0 {
                    (a[i] - b[i]).abs() / scale
                } else {
                    0.0
                }
            })
            .fold(0.0, f64::max)
    }
}

/// The five β-rescaled conjugates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hats {
    pub vhat_s: f64,
    pub qhat_s: f64,
    pub mhat_s: f64,
    pub vhat_w: f64,
    pub qhat_w: f64,
}

impl Hats {
    pub fn to_array(&self) -> [f64; 5] {
        [self.vhat_s, self.qhat_s, self.mhat_s, self.vhat_w, self.qhat_w]
    }

    pub fn max_abs_diff(&self, other: &Hats) -> f64 {
        self.to_array()
            .iter()
            .zip(other.to_array())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}
