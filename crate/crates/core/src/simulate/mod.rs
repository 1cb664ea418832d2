//! Finite-size Monte-Carlo counterpart of the asymptotic theory.
//!
//! A run draws a feature matrix `F` (d×p), a teacher `θ⁰ ~ N(0, ρ I_d)`,
//! latent inputs `C` (n×d) and labels `y = f⁰(Cθ⁰/√d)`, then features either
//! `X = σ(CF/√d)` (the original model) or `X̃ = κ0 + κ1 CF/√d + κ★ Z` (its
//! Gaussian equivalent). Estimators are fitted on `X/√p`, so the learned `w`
//! has the same normalisation as the overlaps of the theory.
//!
//! All randomness comes from ChaCha20 streams keyed by a master seed; see
//! [`Seed`].

mod data;
mod dump;
mod experiment;
mod features;
mod fit;

pub use data::{
    empirical_errors, generate_dataset, generate_equivalent_dataset, sample_teacher, training_objective, DataModel,
    Dataset, Generator,
};
pub use dump::{read_dataset, write_dataset, DatasetDump};
pub use experiment::{averaged_experiment, run_seed, ExperimentConfig, ExperimentStats, ModelKind, SeedFailure, SeedRecord};
pub use features::{generate_features, FeatureEnsemble, FeatureKind};
pub use fit::{fit_convex, fit_logistic, fit_ridge, FitOptions, FitResult};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

/// Streams reserved per run; a run's test split starts at half of them.
const STREAMS_PER_RUN: u64 = 16;
const TEST_OFFSET: u64 = 8;

/// What a stream is used for, within one block of a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Features = 0,
    Teacher = 1,
    Inputs = 2,
    LabelNoise = 3,
    EquivalentNoise = 4,
}

/// Position in the counter-based stream space: every `(master, stream + purpose)`
/// pair is a distinct ChaCha20 stream, so runs and splits never share random
/// numbers and results do not depend on evaluation order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Seed {
    pub master: u64,
    pub stream: u64,
}

impl Seed {
    pub fn new(master: u64) -> Self {
        Self { master, stream: 0 }
    }

    /// Block of the `run`-th repetition.
    pub fn for_run(self, run: u64) -> Self {
        Self {
            master: self.master,
            stream: run * STREAMS_PER_RUN,
        }
    }

    /// Streams of the held-out split of the same run.
    pub fn test_split(self) -> Self {
        Self {
            master: self.master,
            stream: self.stream + TEST_OFFSET,
        }
    }

    pub fn rng(self, purpose: Purpose) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.master);
        rng.set_stream(self.stream + purpose as u64);
        rng
    }
}

impl From<u64> for Seed {
    fn from(master: u64) -> Self {
        Seed::new(master)
    }
}

/// Column-major matrix of i.i.d. standard normals.
pub(crate) fn gaussian_matrix(rng: &mut ChaCha20Rng, rows: usize, cols: usize) -> nalgebra::DMatrix<f64> {
    use rand_distr::{Distribution, StandardNormal};
    nalgebra::DMatrix::from_iterator(rows, cols, (0..rows * cols).map(|_| StandardNormal.sample(rng)))
}
