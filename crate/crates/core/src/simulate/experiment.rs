use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::activation::Activation;
use crate::channels::{LossModel, TeacherChannel};
use crate::error::{Error, Result};
use crate::par::*;

use super::data::{empirical_errors, sample_teacher, training_objective, DataModel, Generator};
use super::features::{generate_features, FeatureEnsemble, FeatureKind};
use super::fit::{fit_convex, FitOptions};
use super::Seed;

/// Which data model an experiment samples from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Original,
    Equivalent,
}

/// One finite-size experiment, repeated over `n_seeds` independent runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub d: usize,
    pub n: usize,
    pub p: usize,
    pub features: FeatureKind,
    pub activation: Activation,
    pub model: ModelKind,
    pub channel: TeacherChannel,
    pub loss: LossModel,
    pub lambda: f64,
    pub rho: f64,
    pub n_seeds: usize,
    /// Defaults to `max(n, 10 d)`.
    pub n_test: Option<usize>,
    pub fit: FitOptions,
    pub master_seed: u64,
}

impl ExperimentConfig {
    pub fn n_test(&self) -> usize {
        self.n_test.unwrap_or(self.n.max(10 * self.d))
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.n == 0 || self.p == 0 {
            return Err(Error::InvalidParams(format!(
                "d, n, p must be positive, got {}, {}, {}",
                self.d, self.n, self.p
            )));
        }
        if self.n_seeds == 0 {
            return Err(Error::InvalidParams("n_seeds must be at least 1".into()));
        }
        if !(self.rho > 0.0) {
            return Err(Error::InvalidParams(format!("rho must be positive, got {}", self.rho)));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::InvalidParams(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        Ok(())
    }

    fn data_model(&self) -> Result<DataModel> {
        Ok(match self.model {
            ModelKind::Original => DataModel::Original {
                activation: self.activation,
            },
            ModelKind::Equivalent => DataModel::Equivalent {
                kappas: self.activation.kappas()?,
            },
        })
    }
}

/// Outcome of one run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub run: u64,
    pub eps_g: f64,
    pub eps_t: f64,
    /// Empirical overlaps `‖Fw/√p‖²/d`, `(Fw/√p)·θ⁰/d`, `‖w‖²/p`.
    pub q_s: f64,
    pub m_s: f64,
    pub q_w: f64,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedFailure {
    pub run: u64,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentStats {
    pub mean_eps_g: f64,
    /// Sample standard deviation over `√n_seeds`; `None` with a single run.
    pub stderr_eps_g: Option<f64>,
    pub mean_eps_t: f64,
    pub stderr_eps_t: Option<f64>,
    /// Runs that produced a record.
    pub n_seeds: usize,
    /// Runs whose fit stopped before reaching its tolerance (kept in the averages).
    pub n_nonconverged: usize,
    pub records: Vec<SeedRecord>,
    pub failures: Vec<SeedFailure>,
}

/// The full pipeline for run `run`: fresh `F`, `θ⁰`, training set, fit and
/// test set, each from its own stream.
pub fn run_seed(cfg: &ExperimentConfig, run: u64) -> Result<SeedRecord> {
    cfg.validate()?;
    let seed = Seed::new(cfg.master_seed).for_run(run);
    let ens = FeatureEnsemble::new(cfg.features, cfg.d, cfg.p)?;
    let features = Arc::new(generate_features(&ens, seed));
    let theta0 = Arc::new(sample_teacher(cfg.d, cfg.rho, seed));
    let gen = Generator::new(features.clone(), theta0.clone(), cfg.data_model()?, cfg.channel)?;
    let train = gen.generate(cfg.n, seed);
    let fit = fit_convex(&train.design(), &train.y, cfg.lambda, cfg.loss, &cfg.fit)?;
    let eps_t = training_objective(&fit.w, &train, cfg.loss, cfg.lambda);
    drop(train);
    let eps_g = empirical_errors(&fit.w, &gen, cfg.loss, cfg.n_test(), seed.test_split())?;
    let s = (&*features * &fit.w) / (cfg.p as f64).sqrt();
    let d = cfg.d as f64;
    Ok(SeedRecord {
        run,
        eps_g,
        eps_t,
        q_s: s.norm_squared() / d,
        m_s: s.dot(&theta0) / d,
        q_w: fit.w.norm_squared() / cfg.p as f64,
        converged: fit.converged,
        iterations: fit.iterations,
    })
}

fn mean_stderr(xs: impl Iterator<Item = f64> + Clone) -> (f64, Option<f64>) {
    let n = xs.clone().count();
    let mean = xs.clone().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, None);
    }
    let var = xs.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, Some((var / n as f64).sqrt()))
}

/// Runs `cfg.n_seeds` independent repetitions (in parallel with the `parallel`
/// feature) and averages them. Results are reduced in run order, so the
/// output does not depend on the number of threads.
///
/// Runs that fail are listed in `failures` and left out of the averages;
/// if every run fails the first error is returned.
pub fn averaged_experiment(cfg: &ExperimentConfig) -> Result<ExperimentStats> {
    cfg.validate()?;
    let runs: Vec<u64> = (0..cfg.n_seeds as u64).collect();
    let outcomes: Vec<Result<SeedRecord>> = runs.par_iter().map(|&r| run_seed(cfg, r)).collect();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut first_err = None;
    for (run, out) in runs.iter().zip(outcomes) {
        match out {
            Ok(rec) => records.push(rec),
            Err(e) => {
                log::warn!("run {run} failed: {e}");
                failures.push(SeedFailure {
                    run: *run,
                    message: e.to_string(),
                });
                first_err.get_or_insert(e);
            }
        }
    }
    if records.is_empty() {
        return Err(first_err.expect("at least one run"));
    }
    let (mean_eps_g, stderr_eps_g) = mean_stderr(records.iter().map(|r| r.eps_g));
    let (mean_eps_t, stderr_eps_t) = mean_stderr(records.iter().map(|r| r.eps_t));
    Ok(ExperimentStats {
        mean_eps_g,
        stderr_eps_g,
        mean_eps_t,
        stderr_eps_t,
        n_seeds: records.len(),
        n_nonconverged: records.iter().filter(|r| !r.converged).count(),
        records,
        failures,
    })
}
