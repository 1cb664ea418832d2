//! Asymptotic learning curves for generalised linear models on random
//! features and hidden-manifold data, with a Monte-Carlo simulator to check
//! them against.

pub mod activation;
pub mod channels;
pub mod error;
pub mod observables;
pub mod par;
pub mod quadrature;
pub mod saddle;
pub mod simulate;
pub mod spectral;

pub use activation::{Activation, Kappas};
pub use channels::{Loss, LossModel, Task, TeacherChannel};
pub use error::{Error, Result};
pub use saddle::{solve_fixed_point, FixedPoint, Hats, ModelParams, Overlaps, SolverOptions, SolverReport};
pub use spectral::{ResolventMoments, SpectralLaw, SpectrumKind};
pub use observables::{generalisation_error, optimize_lambda, separability_threshold, theory_point, training_loss, TheoryPoint};
