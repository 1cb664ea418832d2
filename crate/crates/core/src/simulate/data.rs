use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::activation::{Activation, Kappas};
use crate::channels::{LossModel, TeacherChannel};
use crate::error::{Error, Result};

use super::{gaussian_matrix, Purpose, Seed};

/// How inputs are built from the latent Gaussian vectors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataModel {
    /// `x = σ(Fᵀc/√d)`.
    Original { activation: Activation },
    /// `x̃ = κ0 1 + κ1 Fᵀc/√d + κ★ z`, `z ~ N(0, I_p)`.
    Equivalent { kappas: Kappas },
}

#[derive(Clone, Debug)]
pub struct Dataset {
    /// Raw inputs, n×p (estimators see `x/√p`).
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub theta0: Arc<DVector<f64>>,
    pub features: Arc<DMatrix<f64>>,
    pub model: DataModel,
    pub seed: Seed,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// `x/√p`, the design matrix the estimators are fitted on.
    pub fn design(&self) -> DMatrix<f64> {
        &self.x / (self.p() as f64).sqrt()
    }
}

/// Fixed teacher and features from which any number of splits can be drawn.
#[derive(Clone, Debug)]
pub struct Generator {
    pub features: Arc<DMatrix<f64>>,
    pub theta0: Arc<DVector<f64>>,
    pub model: DataModel,
    pub channel: TeacherChannel,
}

/// `θ⁰ ~ N(0, ρ I_d)` from the teacher stream of `seed`.
pub fn sample_teacher(d: usize, rho: f64, seed: Seed) -> DVector<f64> {
    let mut rng = seed.rng(Purpose::Teacher);
    let s = rho.sqrt();
    DVector::from_iterator(d, (0..d).map(|_| s * Distribution::<f64>::sample(&StandardNormal, &mut rng)))
}

impl Generator {
    pub fn new(features: Arc<DMatrix<f64>>, theta0: Arc<DVector<f64>>, model: DataModel, channel: TeacherChannel) -> Result<Self> {
        if features.nrows() != theta0.len() {
            return Err(Error::InvalidParams(format!(
                "teacher has dimension {} but F has {} rows",
                theta0.len(),
                features.nrows()
            )));
        }
        Ok(Self {
            features,
            theta0,
            model,
            channel,
        })
    }

    pub fn d(&self) -> usize {
        self.features.nrows()
    }

    pub fn p(&self) -> usize {
        self.features.ncols()
    }

    /// Draws `n` samples from the streams of `seed`.
    ///
    /// Latent inputs and label noise come from streams that do not depend on
    /// the data model, so the original and equivalent models drawn with the
    /// same seed share `C` and `y` exactly.
    pub fn generate(&self, n: usize, seed: Seed) -> Dataset {
        let d = self.d();
        let p = self.p();
        let sqrt_d = (d as f64).sqrt();
        let c = gaussian_matrix(&mut seed.rng(Purpose::Inputs), n, d);
        let nu = (&c * &*self.theta0) / sqrt_d;
        let mut y = nu.map(|v| self.channel.apply(v));
        if let TeacherChannel::LinearGaussian { delta } = self.channel {
            if delta > 0.0 {
                let mut rng = seed.rng(Purpose::LabelNoise);
                let s = delta.sqrt();
                for yi in y.iter_mut() {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    *yi += s * e;
                }
            }
        }
        let pre = (&c * &*self.features) / sqrt_d;
        let x = match self.model {
            DataModel::Original { activation } => pre.map(|v| activation.apply(v)),
            DataModel::Equivalent { kappas } => {
                let z = gaussian_matrix(&mut seed.rng(Purpose::EquivalentNoise), n, p);
                pre.zip_map(&z, |h, z| kappas.kappa0 + kappas.kappa1 * h + kappas.kappa_star * z)
            }
        };
        Dataset {
            x,
            y,
            theta0: self.theta0.clone(),
            features: self.features.clone(),
            model: self.model,
            seed,
        }
    }
}

/// Original-model dataset `X = σ(CF/√d)`, `y = f⁰(Cθ⁰/√d)`.
pub fn generate_dataset(
    features: Arc<DMatrix<f64>>,
    theta0: Arc<DVector<f64>>,
    activation: Activation,
    channel: TeacherChannel,
    n: usize,
    seed: Seed,
) -> Result<Dataset> {
    Ok(Generator::new(features, theta0, DataModel::Original { activation }, channel)?.generate(n, seed))
}

/// Gaussian-equivalent dataset sharing `C` and `y` with [`generate_dataset`]
/// under the same seed.
pub fn generate_equivalent_dataset(
    features: Arc<DMatrix<f64>>,
    theta0: Arc<DVector<f64>>,
    kappas: Kappas,
    channel: TeacherChannel,
    n: usize,
    seed: Seed,
) -> Result<Dataset> {
    Ok(Generator::new(features, theta0, DataModel::Equivalent { kappas }, channel)?.generate(n, seed))
}

/// Test error `‖y − f̂(Xw/√p)‖² / (4^k n_test)` on a fresh split drawn from `seed`.
pub fn empirical_errors(w: &DVector<f64>, generator: &Generator, loss: LossModel, n_test: usize, seed: Seed) -> Result<f64> {
    if w.len() != generator.p() {
        return Err(Error::InvalidParams(format!(
            "weights have length {} but there are {} features",
            w.len(),
            generator.p()
        )));
    }
    if n_test == 0 {
        return Err(Error::InvalidParams("test set must be nonempty".into()));
    }
    let test = generator.generate(n_test, seed);
    let pred = test.design() * w;
    let norm = 4f64.powi(loss.k());
    let sq: f64 = pred
        .iter()
        .zip(test.y.iter())
        .map(|(&x, &y)| (y - loss.readout(x)).powi(2))
        .sum();
    Ok(sq / (norm * n_test as f64))
}

/// Training loss `(Σ ℓ(y, x·w/√p) + λ‖w‖²/2) / n`.
pub fn training_objective(w: &DVector<f64>, data: &Dataset, loss: LossModel, lambda: f64) -> f64 {
    let pred = data.design() * w;
    let total: f64 = pred.iter().zip(data.y.iter()).map(|(&x, &y)| loss.value(y, x)).sum();
    (total + 0.5 * lambda * w.norm_squared()) / data.n() as f64
}
