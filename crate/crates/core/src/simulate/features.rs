use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::SpectrumKind;

use super::{gaussian_matrix, Purpose, Seed};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    /// i.i.d. standard normal entries.
    GaussianIid,
    /// `√p · max(√γ, 1) · U Vᵀ` with Haar-distributed frames `U`, `V`.
    HaarOrthogonal,
}

impl FeatureKind {
    /// Limiting spectral law of `FFᵀ/p` for this ensemble.
    pub fn spectrum(self) -> SpectrumKind {
        match self {
            FeatureKind::GaussianIid => SpectrumKind::Gaussian,
            FeatureKind::HaarOrthogonal => SpectrumKind::Orthogonal,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::GaussianIid => "gaussian_iid",
            FeatureKind::HaarOrthogonal => "haar_orthogonal",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureEnsemble {
    pub kind: FeatureKind,
    pub d: usize,
    pub p: usize,
}

impl FeatureEnsemble {
    pub fn new(kind: FeatureKind, d: usize, p: usize) -> Result<Self> {
        if d == 0 || p == 0 {
            return Err(Error::InvalidParams(format!("feature dimensions must be positive, got d={d}, p={p}")));
        }
        Ok(Self { kind, d, p })
    }

    pub fn gamma(&self) -> f64 {
        self.d as f64 / self.p as f64
    }
}

/// Draws the d×p feature matrix of `ens` from the features stream of `seed`.
///
/// For the orthogonal ensemble the nonzero singular values of `F/√p` all equal
/// `max(√γ, 1)`, so `FFᵀ/p = I_d` when `d ≤ p` and `FᵀF/p = γ I_p` otherwise.
pub fn generate_features(ens: &FeatureEnsemble, seed: Seed) -> DMatrix<f64> {
    let mut rng = seed.rng(Purpose::Features);
    let (d, p) = (ens.d, ens.p);
    match ens.kind {
        FeatureKind::GaussianIid => gaussian_matrix(&mut rng, d, p),
        FeatureKind::HaarOrthogonal => {
            let r = d.min(p);
            let u = haar_frame(gaussian_matrix(&mut rng, d, r));
            let v = haar_frame(gaussian_matrix(&mut rng, p, r));
            let scale = (p as f64).sqrt() * ens.gamma().sqrt().max(1.0);
            (u * v.transpose()) * scale
        }
    }
}

/// Orthonormal frame from the thin QR of a Gaussian matrix, with the sign of
/// each column fixed by the diagonal of `R` so that the frame is Haar.
fn haar_frame(g: DMatrix<f64>) -> DMatrix<f64> {
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..q.ncols() {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}
