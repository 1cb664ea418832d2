//! Limiting spectral laws of `F Fᵀ / p` and their Stieltjes transforms.
//!
//! The feature matrix enters the asymptotic theory only through
//! `g(-m) = ∫ dμ(t) / (t + m)` and its derivative `g'(-m) = ∫ dμ(t) / (t + m)²`,
//! both evaluated at a positive shift `m`. Every evaluator here takes that
//! positive shift (`minus_z`) rather than the negative argument itself.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::quadrature::integrate_adaptive_vec;

/// Resolvent averages at shift `m > 0` that the overlap equations need.
///
/// `e1 = 1 − m g`, `e2 = g − m g'` and `e3 = 1 − 2 m g + m² g'` are evaluated
/// directly as the nonnegative integrals `∫ t/(t+m)`, `∫ t/(t+m)²`,
/// `∫ t²/(t+m)²`, since the differences lose every significant digit when
/// `m` is large.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResolventMoments {
    pub g: f64,
    pub dg: f64,
    pub e1: f64,
    pub e2: f64,
    pub e3: f64,
}

/// Spectral law of `F Fᵀ / p` for a `d × p` feature matrix, `γ = d / p`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SpectralLaw {
    /// i.i.d. standard Gaussian `F`.
    MarchenkoPastur { gamma: f64 },
    /// `F = √p · Uᵀ D V` with Haar `U`, `V` and diagonal entries `max(√γ, 1)`.
    /// Point mass `1 - 1/γ` at zero when `γ > 1`.
    OrthogonalProjection { gamma: f64 },
    /// A finite mixture of point masses, e.g. a measured spectrum.
    EmpiricalAtoms { gamma: f64, atoms: Vec<(f64, f64)> },
}

/// Selector for the two analytic laws, used by sweeps and simulations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumKind {
    Gaussian,
    Orthogonal,
}

impl SpectrumKind {
    pub fn law(self, gamma: f64) -> Result<SpectralLaw> {
        match self {
            SpectrumKind::Gaussian => SpectralLaw::marchenko_pastur(gamma),
            SpectrumKind::Orthogonal => SpectralLaw::orthogonal(gamma),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SpectrumKind::Gaussian => "gaussian",
            SpectrumKind::Orthogonal => "orthogonal",
        }
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma.is_finite() && gamma > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!(
            "aspect ratio gamma must be positive and finite, got {gamma}"
        )))
    }
}

impl SpectralLaw {
    pub fn marchenko_pastur(gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        Ok(SpectralLaw::MarchenkoPastur { gamma })
    }

    pub fn orthogonal(gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        Ok(SpectralLaw::OrthogonalProjection { gamma })
    }

    /// Builds an atomic law; weights must be nonnegative and sum to one within 1e-12.
    pub fn empirical(gamma: f64, atoms: Vec<(f64, f64)>) -> Result<Self> {
        check_gamma(gamma)?;
        if atoms.is_empty() {
            return Err(Error::InvalidParams("empirical law needs at least one atom".into()));
        }
        for &(t, w) in &atoms {
            if !(t.is_finite() && t >= 0.0) {
                return Err(Error::InvalidParams(format!("atom location {t} must be a nonnegative real")));
            }
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::InvalidParams(format!("atom weight {w} must be nonnegative")));
            }
        }
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParams(format!("atom weights sum to {total}, expected 1")));
        }
        Ok(SpectralLaw::EmpiricalAtoms { gamma, atoms })
    }

    /// Equal-weight law over a list of eigenvalues (negative round-off clipped to 0).
    pub fn from_eigenvalues(gamma: f64, eigenvalues: &[f64]) -> Result<Self> {
        let w = 1.0 / eigenvalues.len() as f64;
        let mut atoms: Vec<(f64, f64)> = eigenvalues.iter().map(|&t| (t.max(0.0), w)).collect();
        // Force the exact normalisation so the 1e-12 check holds for any length.
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        for a in &mut atoms {
            a.1 /= total;
        }
        Self::empirical(gamma, atoms)
    }

    pub fn gamma(&self) -> f64 {
        match self {
            SpectralLaw::MarchenkoPastur { gamma }
            | SpectralLaw::OrthogonalProjection { gamma }
            | SpectralLaw::EmpiricalAtoms { gamma, .. } => *gamma,
        }
    }

    /// `g_μ(-m) = ∫ dμ(t) / (t + m)` for `m > 0`.
    pub fn stieltjes(&self, minus_z: f64) -> Result<f64> {
        let m = check_shift(minus_z)?;
        Ok(match self {
            SpectralLaw::MarchenkoPastur { gamma } => {
                // Rationalised form of (1 - z - γ - √((z-1-γ)² - 4γ)) / (2zγ) at z = -m;
                // positive for every m > 0 and free of cancellation at large m.
                let g = *gamma;
                2.0 / ((1.0 - g + m) + mp_root(g, m))
            }
            SpectralLaw::OrthogonalProjection { gamma } => {
                let g = *gamma;
                if g > 1.0 {
                    (1.0 - 1.0 / g) / m + 1.0 / (g * (g + m))
                } else {
                    1.0 / (1.0 + m)
                }
            }
            SpectralLaw::EmpiricalAtoms { atoms, .. } => atoms.iter().map(|&(t, w)| w / (t + m)).sum(),
        })
    }

    /// `g'_μ(-m) = ∫ dμ(t) / (t + m)²` for `m > 0`.
    pub fn stieltjes_derivative(&self, minus_z: f64) -> Result<f64> {
        let m = check_shift(minus_z)?;
        Ok(match self {
            SpectralLaw::MarchenkoPastur { gamma } => {
                let g = *gamma;
                let root = mp_root(g, m);
                let denom = (1.0 - g + m) + root;
                2.0 * (1.0 + (m + 1.0 + g) / root) / (denom * denom)
            }
            SpectralLaw::OrthogonalProjection { gamma } => {
                let g = *gamma;
                if g > 1.0 {
                    (1.0 - 1.0 / g) / (m * m) + 1.0 / (g * (g + m) * (g + m))
                } else {
                    1.0 / ((1.0 + m) * (1.0 + m))
                }
            }
            SpectralLaw::EmpiricalAtoms { atoms, .. } => {
                atoms.iter().map(|&(t, w)| w / ((t + m) * (t + m))).sum()
            }
        })
    }
}

impl SpectralLaw {
    pub fn resolvent_moments(&self, minus_z: f64) -> Result<ResolventMoments> {
        let m = check_shift(minus_z)?;
        let g = self.stieltjes(m)?;
        let dg = self.stieltjes_derivative(m)?;
        let atom = |t: f64, w: f64| [w * t / (t + m), w * t / ((t + m) * (t + m)), w * t * t / ((t + m) * (t + m))];
        let [e1, e2, e3] = match self {
            SpectralLaw::MarchenkoPastur { gamma } => mp_moments(*gamma, m),
            SpectralLaw::OrthogonalProjection { gamma } => {
                if *gamma > 1.0 {
                    atom(*gamma, 1.0 / gamma)
                } else {
                    atom(1.0, 1.0)
                }
            }
            SpectralLaw::EmpiricalAtoms { atoms, .. } => atoms.iter().fold([0.0; 3], |acc, &(t, w)| {
                let a = atom(t, w);
                [acc[0] + a[0], acc[1] + a[1], acc[2] + a[2]]
            }),
        };
        Ok(ResolventMoments { g, dg, e1, e2, e3 })
    }
}

/// Bulk integrals of `t/(t+m)`, `t/(t+m)²`, `t²/(t+m)²` against the
/// Marchenko–Pastur density `√((b−t)(t−a))/(2πγt)`, in the variable
/// `t = 1 + γ + 2√γ cos θ` that removes the square-root edges.
fn mp_moments(gamma: f64, m: f64) -> [f64; 3] {
    let r = 2.0 * gamma.sqrt();
    let c = 1.0 + gamma;
    let pref = r * r / (2.0 * std::f64::consts::PI * gamma);
    let res: std::result::Result<[f64; 3], std::convert::Infallible> = integrate_adaptive_vec(
        |theta| {
            let (sin, cos) = theta.sin_cos();
            let t = (c + r * cos).max(0.0);
            // density × dt / t, times t from each moment: sin² carries the edges.
            let w = pref * sin * sin;
            let u = 1.0 / (t + m);
            Ok([w * u, w * u * u, w * t * u * u])
        },
        0.0,
        std::f64::consts::PI,
        &[],
        1e-13,
        1e-300,
    );
    res.unwrap_or_else(|e| match e {})
}

/// `√((m + 1 + γ)² − 4γ)`, written as a product so it never goes negative.
#[inline]
fn mp_root(gamma: f64, m: f64) -> f64 {
    let s = gamma.sqrt();
    ((m + (1.0 + s) * (1.0 + s)) * (m + (1.0 - s) * (1.0 - s))).sqrt()
}

fn check_shift(minus_z: f64) -> Result<f64> {
    if minus_z.is_finite() && minus_z > 0.0 {
        Ok(minus_z)
    } else {
        Err(domain(format!(
            "Stieltjes transform is only evaluated at negative arguments; got shift {minus_z}"
        )))
    }
}
