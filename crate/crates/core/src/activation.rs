//! Feature nonlinearities σ and their Gaussian moments.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::gaussian_expect_adaptive;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Sign,
    Erf,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sign => crate::channels::sign(x),
            Activation::Erf => libm::erf(x),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Sign => "sign",
            Activation::Erf => "erf",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }

    pub fn kappas(self) -> Result<Kappas> {
        kappa_coefficients(|z| self.apply(z))
    }
}

/// Gaussian moments `(κ0, κ1, κ★)` of a nonlinearity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Kappas {
    pub kappa0: f64,
    pub kappa1: f64,
    pub kappa_star: f64,
}

impl Kappas {
    pub fn new(kappa0: f64, kappa1: f64, kappa_star: f64) -> Self {
        Self {
            kappa0,
            kappa1,
            kappa_star,
        }
    }

    /// Second moment `E[σ(z)²] = κ0² + κ1² + κ★²`.
    pub fn second_moment(&self) -> f64 {
        self.kappa0 * self.kappa0 + self.kappa1 * self.kappa1 + self.kappa_star * self.kappa_star
    }
}

/// `κ0 = E[σ(z)]`, `κ1 = E[z σ(z)]`, `κ★ = √(E[σ(z)²] − κ0² − κ1²)`, `z ~ N(0, 1)`.
///
/// Uses adaptive Gauss–Kronrod rather than Gauss–Hermite: σ = sign has a jump
/// at the origin, where a fixed Hermite rule only converges at first order.
pub fn kappa_coefficients<F: Fn(f64) -> f64>(sigma: F) -> Result<Kappas> {
    const TOL: f64 = 1e-13;
    let k0 = gaussian_expect_adaptive(&sigma, TOL);
    let k1 = gaussian_expect_adaptive(|z| z * sigma(z), TOL);
    let m2 = gaussian_expect_adaptive(|z| sigma(z).powi(2), TOL);
    kappas_from_moments(k0, k1, m2)
}

/// Assembles `(κ0, κ1, κ★)` from the raw moments, clamping a radicand within
/// `-1e-12` of zero.
pub fn kappas_from_moments(k0: f64, k1: f64, m2: f64) -> Result<Kappas> {
    let mut radicand = m2 - k0 * k0 - k1 * k1;
    if radicand < 0.0 {
        if radicand < -1e-12 {
            return Err(Error::Numerical {
                context: "kappa_star radicand".into(),
                last: radicand,
                residual: radicand.abs(),
            });
        }
        radicand = 0.0;
    }
    Ok(Kappas::new(k0, k1, radicand.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn sign_moments() {
        let k = Activation::Sign.kappas().unwrap();
        assert!(k.kappa0.abs() < 1e-12);
        assert!((k.kappa1 - (2.0 / PI).sqrt()).abs() < 1e-12);
        assert!((k.kappa_star - (1.0 - 2.0 / PI).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn erf_moments() {
        let k = Activation::Erf.kappas().unwrap();
        assert!(k.kappa0.abs() < 1e-12);
        assert!((k.kappa1 - 2.0 / (3.0 * PI).sqrt()).abs() < 1e-12);
        // E[erf(z)²] = (2/π) asin(2/3)
        let m2 = 2.0 / PI * (2.0f64 / 3.0).asin();
        assert!((k.second_moment() - m2).abs() < 1e-12);
        assert!((k.kappa_star - 0.2003).abs() < 1e-3);
    }

    #[test]
    fn identity_moments() {
        let k = Activation::Identity.kappas().unwrap();
        assert!(k.kappa0.abs() < 1e-12);
        assert!((k.kappa1 - 1.0).abs() < 1e-12);
        assert!(k.kappa_star.abs() < 1e-5);
    }

    #[test]
    fn radicand_guard() {
        let clamped = kappas_from_moments(0.0, 1.0, 1.0 - 5e-13).unwrap();
        assert_eq!(clamped.kappa_star, 0.0);
        assert!(matches!(kappas_from_moments(0.0, 1.0, 0.9), Err(Error::Numerical { .. })));
    }
}
