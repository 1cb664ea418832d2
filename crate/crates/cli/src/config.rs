//! Run configuration: one TOML file per run.
//!
//! ```toml
//! mode = "theory"            # theory | simulate | compare | lambda_opt | separability
//! output = "curve.csv"       # optional; --out takes precedence
//!
//! [model]
//! loss = "logistic"          # square | logistic | squared_hinge (required)
//! channel = "sign"           # sign | linear
//! delta = 0.0                # label noise of the linear channel
//! activation = "sign"        # sign | erf | tanh | identity
//! # kappas = [0.0, 0.8, 0.6] # instead of activation, theory modes only
//! spectrum = "gaussian"      # gaussian | orthogonal
//! rho = 1.0
//! n_over_d = 3.0             # two of n_over_d, p_over_n (or alpha = n/p), d_over_p,
//! lambda = 1e-3              #   counting the swept axis
//! # lambda_policy = "optimal"  (instead of lambda)
//!
//! [sweep]
//! axis = "p_over_n"          # p_over_n | n_over_d | alpha | lambda
//! min = 0.1
//! max = 10.0
//! count = 21
//! scale = "log"              # log | linear
//! # values = [0.5, 1.0, 2.0] (instead of min/max/count/scale)
//!
//! [solver]                   # all optional
//! damping = 0.5
//! tol = 1e-8
//! max_iter = 10000
//! quad_rel_tol = 1e-11       # adaptive ξ-integration...
//! # quad_nodes = 101         # ...or a fixed Gauss–Hermite rule
//! label_nodes = 40
//! closed_form = true
//! warm_start = true
//!
//! [lambda_opt]               # optimal-λ search
//! min = 1e-6
//! max = 100.0
//! count = 25
//! refine = true
//!
//! [simulation]               # simulate / compare
//! d = 200
//! n_seeds = 30
//! seed = 0
//! models = ["original", "equivalent"]
//! tol = 1e-4
//! max_iter = 10000
//! # n_test = 2000            # default max(n, 10 d)
//!
//! [separability]
//! n_over_d = { min = 0.1, max = 5.0, count = 20, scale = "log" }
//! spectra = ["gaussian", "orthogonal"]
//! method = "exact"           # exact | training_loss (with lambda, threshold)
//! ```
//!
//! Every key is checked: unknown keys, wrong types, missing required values
//! and conflicting settings are all reported with the offending key path.

use std::path::{Path, PathBuf};

use rfhmm::observables::{log_grid, SeparabilityMethod, SeparabilityOptions};
use rfhmm::saddle::XiRule;
use rfhmm::simulate::{FeatureKind, FitOptions, ModelKind};
use rfhmm::{Activation, Kappas, Loss, LossModel, SolverOptions, SpectrumKind, Task, TeacherChannel};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Theory,
    Simulate,
    Compare,
    LambdaOpt,
    Separability,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Theory => "theory",
            Mode::Simulate => "simulate",
            Mode::Compare => "compare",
            Mode::LambdaOpt => "lambda_opt",
            Mode::Separability => "separability",
        }
    }

    fn has_theory(self) -> bool {
        matches!(self, Mode::Theory | Mode::Compare | Mode::LambdaOpt)
    }

    fn has_simulation(self) -> bool {
        matches!(self, Mode::Simulate | Mode::Compare)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelName {
    Sign,
    Linear,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaPolicy {
    Fixed,
    Optimal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    POverN,
    NOverD,
    Alpha,
    Lambda,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::POverN => "p_over_n",
            Axis::NOverD => "n_over_d",
            Axis::Alpha => "alpha",
            Axis::Lambda => "lambda",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Linear,
    #[default]
    Log,
}

/// Either explicit `values` or `min`/`max`/`count`/`scale`.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scale: Option<Scale>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
}

impl GridSpec {
    pub fn values(values: Vec<f64>) -> Self {
        Self {
            values: Some(values),
            ..Self::default()
        }
    }

    /// The grid points, or the problems with the specification.
    pub fn resolve(&self, key: &str, errors: &mut Vec<String>) -> Vec<f64> {
        let grid = match (&self.values, self.min, self.max, self.count) {
            (Some(v), None, None, None) if self.scale.is_none() => v.clone(),
            (Some(_), ..) => {
                errors.push(format!("{key}: give either `values` or `min`/`max`/`count`, not both"));
                return Vec::new();
            }
            (None, Some(lo), Some(hi), Some(count)) => match self.scale.unwrap_or_default() {
                Scale::Log => {
                    if !(lo > 0.0) {
                        errors.push(format!("{key}.min: a log grid needs a positive minimum, got {lo}"));
                        return Vec::new();
                    }
                    log_grid(lo, hi, count)
                }
                Scale::Linear => match count {
                    0 => Vec::new(),
                    1 => vec![lo],
                    _ => (0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect(),
                },
            },
            (None, ..) => {
                let missing: Vec<_> = [("min", self.min.is_none()), ("max", self.max.is_none()), ("count", self.count.is_none())]
                    .iter()
                    .filter(|(_, m)| *m)
                    .map(|(k, _)| format!("{key}.{k}"))
                    .collect();
                errors.push(format!("{}: missing (or give {key}.values)", missing.join(", ")));
                return Vec::new();
            }
        };
        if grid.is_empty() {
            errors.push(format!("{key}: grid is empty"));
        } else if grid.iter().any(|v| !v.is_finite()) {
            errors.push(format!("{key}: grid values must be finite"));
        } else if grid.windows(2).any(|w| !(w[1] > w[0])) {
            errors.push(format!("{key}: grid must be strictly increasing, got {grid:?}"));
        }
        grid
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub axis: Axis,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scale: Option<Scale>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
}

impl SweepSection {
    pub fn grid(&self) -> GridSpec {
        GridSpec {
            min: self.min,
            max: self.max,
            count: self.count,
            scale: self.scale,
            values: self.values.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss: Option<Loss>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub channel: Option<ChannelName>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub activation: Option<Activation>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappas: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<SpectrumKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_over_d: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_over_n: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_over_p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_policy: Option<LambdaPolicy>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub quad_rel_tol: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quad_nodes: Option<usize>,
    pub label_nodes: usize,
    pub closed_form: bool,
    pub warm_start: bool,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverOptions::default();
        let quad_rel_tol = match d.xi_rule {
            XiRule::Adaptive { rel_tol } => rel_tol,
            XiRule::Hermite { .. } => 1e-11,
        };
        Self {
            damping: d.damping,
            tol: d.tol,
            max_iter: d.max_iter,
            quad_rel_tol,
            quad_nodes: None,
            label_nodes: d.label_nodes,
            closed_form: d.closed_form,
            warm_start: true,
        }
    }
}

impl SolverSection {
    pub fn options(&self) -> SolverOptions {
        SolverOptions {
            damping: self.damping,
            tol: self.tol,
            max_iter: self.max_iter,
            xi_rule: match self.quad_nodes {
                Some(nodes) => XiRule::Hermite { nodes },
                None => XiRule::Adaptive {
                    rel_tol: self.quad_rel_tol,
                },
            },
            label_nodes: self.label_nodes,
            closed_form: self.closed_form,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LambdaOptSection {
    pub min: f64,
    pub max: f64,
    pub count: usize,
    pub refine: bool,
}

impl Default for LambdaOptSection {
    fn default() -> Self {
        Self {
            min: 1e-6,
            max: 1e2,
            count: 25,
            refine: true,
        }
    }
}

impl LambdaOptSection {
    pub fn grid(&self) -> Vec<f64> {
        log_grid(self.min, self.max, self.count)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSection {
    pub d: usize,
    pub n_seeds: usize,
    pub seed: u64,
    pub models: Vec<ModelKind>,
    pub tol: f64,
    pub max_iter: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_test: Option<usize>,
}

impl Default for SimulationSection {
    fn default() -> Self {
        let fit = FitOptions::default();
        Self {
            d: 200,
            n_seeds: 30,
            seed: 0,
            models: vec![ModelKind::Original, ModelKind::Equivalent],
            tol: fit.tol,
            max_iter: fit.max_iter,
            n_test: None,
        }
    }
}

impl SimulationSection {
    pub fn fit(&self) -> FitOptions {
        FitOptions {
            tol: self.tol,
            max_iter: self.max_iter,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeparabilityMethodName {
    #[default]
    Exact,
    TrainingLoss,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeparabilitySection {
    pub n_over_d: GridSpec,
    #[serde(default = "default_spectra")]
    pub spectra: Vec<SpectrumKind>,
    #[serde(default)]
    pub method: SeparabilityMethodName,
    #[serde(default = "default_sep_lambda")]
    pub lambda: f64,
    #[serde(default = "default_sep_lambda")]
    pub threshold: f64,
    #[serde(default = "default_alpha_lo")]
    pub alpha_lo: f64,
    #[serde(default = "default_alpha_hi")]
    pub alpha_hi: f64,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
}

fn default_spectra() -> Vec<SpectrumKind> {
    vec![SpectrumKind::Gaussian, SpectrumKind::Orthogonal]
}
fn default_sep_lambda() -> f64 {
    1e-4
}
fn default_alpha_lo() -> f64 {
    SeparabilityOptions::default().alpha_lo
}
fn default_alpha_hi() -> f64 {
    SeparabilityOptions::default().alpha_hi
}
fn default_rel_tol() -> f64 {
    SeparabilityOptions::default().rel_tol
}

impl SeparabilitySection {
    pub fn options(&self) -> SeparabilityOptions {
        SeparabilityOptions {
            method: match self.method {
                SeparabilityMethodName::Exact => SeparabilityMethod::Exact,
                SeparabilityMethodName::TrainingLoss => SeparabilityMethod::TrainingLoss {
                    lambda: self.lambda,
                    threshold: self.threshold,
                },
            },
            alpha_lo: self.alpha_lo,
            alpha_hi: self.alpha_hi,
            rel_tol: self.rel_tol,
        }
    }
}

/// The file as written, with defaults filled in by [`Config::normalise`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub lambda_opt: LambdaOptSection,
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub separability: Option<SeparabilitySection>,
}

/// Fixed physical parameters of one grid point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub n_over_d: f64,
    pub p_over_n: f64,
    pub lambda: Option<f64>,
}

impl Point {
    /// `α = n/p`.
    pub fn alpha(&self) -> f64 {
        1.0 / self.p_over_n
    }

    /// `γ = d/p`.
    pub fn gamma(&self) -> f64 {
        self.alpha() / self.n_over_d
    }
}

/// A validated configuration ready to run.
#[derive(Clone, Debug, PartialEq)]
pub struct Plan {
    pub mode: Mode,
    pub config: Config,
    pub axis: Option<Axis>,
    pub grid: Vec<f64>,
    pub loss: Option<LossModel>,
    pub channel: TeacherChannel,
    pub activation: Option<Activation>,
    pub kappas: Kappas,
    pub spectrum: SpectrumKind,
    pub rho: f64,
    pub lambda_policy: LambdaPolicy,
    pub solver: SolverOptions,
}

impl Plan {
    pub fn features(&self) -> FeatureKind {
        match self.spectrum {
            SpectrumKind::Gaussian => FeatureKind::GaussianIid,
            SpectrumKind::Orthogonal => FeatureKind::HaarOrthogonal,
        }
    }

    /// Parameters at swept value `v`.
    pub fn point(&self, v: f64) -> Point {
        let m = &self.config.model;
        let (mut nd, mut pn, dp) = (m.n_over_d, m.p_over_n.or(m.alpha.map(|a| 1.0 / a)), m.d_over_p);
        let mut lambda = m.lambda;
        match self.axis {
            Some(Axis::POverN) => pn = Some(v),
            Some(Axis::Alpha) => pn = Some(1.0 / v),
            Some(Axis::NOverD) => nd = Some(v),
            Some(Axis::Lambda) => lambda = Some(v),
            None => {}
        }
        // Validation guarantees exactly two of the three ratios; d/p = (n/p)/(n/d).
        match (nd, pn, dp) {
            (Some(nd), Some(pn), _) => Point {
                n_over_d: nd,
                p_over_n: pn,
                lambda,
            },
            (Some(nd), None, Some(dp)) => Point {
                n_over_d: nd,
                p_over_n: 1.0 / (dp * nd),
                lambda,
            },
            (None, Some(pn), Some(dp)) => Point {
                n_over_d: 1.0 / (pn * dp),
                p_over_n: pn,
                lambda,
            },
            _ => unreachable!("validated ratios"),
        }
    }
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(vec![e.to_string().trim_end().to_string()]))
    }

    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            CliError::Config(msgs) => CliError::Config(msgs.into_iter().map(|m| format!("{}: {m}", path.display())).collect()),
            other => other,
        })
    }

    /// Checks the configuration for `mode` (the file's own mode when `None`)
    /// and fills in every default. All problems are reported together.
    pub fn plan(&self, mode: Option<Mode>) -> Result<Plan, CliError> {
        let mut errors = Vec::new();
        let mode = match (mode, self.mode) {
            (Some(cli), Some(file)) if cli != file => {
                errors.push(format!(
                    "mode: the file says \"{}\" but the command is `{}`",
                    file.name(),
                    cli.name().replace('_', "-")
                ));
                cli
            }
            (Some(m), _) | (None, Some(m)) => m,
            (None, None) => Mode::Theory,
        };
        let m = &self.model;

        let channel = match (m.channel.unwrap_or(ChannelName::Sign), m.delta) {
            (ChannelName::Sign, Some(_)) => {
                errors.push("model.delta: only the linear channel has label noise".into());
                TeacherChannel::Sign
            }
            (ChannelName::Sign, None) => TeacherChannel::Sign,
            (ChannelName::Linear, delta) => TeacherChannel::linear(delta.unwrap_or(0.0)).unwrap_or_else(|e| {
                errors.push(format!("model.delta: {e}"));
                TeacherChannel::Sign
            }),
        };
        let task = match channel {
            TeacherChannel::Sign => Task::Classification,
            TeacherChannel::LinearGaussian { .. } => Task::Regression,
        };

        let needs_loss = mode != Mode::Separability;
        let loss = match m.loss {
            Some(loss) => {
                if matches!(loss, Loss::Logistic | Loss::SquaredHinge) && task == Task::Regression {
                    errors.push(format!("model.loss: {loss:?} needs the sign channel"));
                }
                Some(LossModel::new(loss, task))
            }
            None if needs_loss => {
                errors.push("model.loss: missing (one of \"square\", \"logistic\", \"squared_hinge\")".into());
                None
            }
            None => None,
        };

        let (activation, kappas) = match (m.activation, m.kappas) {
            (Some(_), Some(_)) => {
                errors.push("model.kappas: conflicts with model.activation; give one of them".into());
                (None, Activation::Sign.kappas().expect("sign kappas"))
            }
            (None, Some([k0, k1, ks])) => {
                if mode.has_simulation() {
                    errors.push("model.kappas: simulations need model.activation".into());
                }
                if k0.abs() > 1e-8 || !(ks >= 0.0) || !(k1.is_finite() && k1 != 0.0) {
                    errors.push(format!("model.kappas: need kappa0 = 0, kappa1 != 0, kappa_star >= 0, got {:?}", [k0, k1, ks]));
                }
                (
                    None,
                    Kappas {
                        kappa0: k0,
                        kappa1: k1,
                        kappa_star: ks,
                    },
                )
            }
            (a, None) => {
                let a = a.unwrap_or(Activation::Sign);
                let k = a.kappas().unwrap_or_else(|e| {
                    errors.push(format!("model.activation: {e}"));
                    Activation::Sign.kappas().expect("sign kappas")
                });
                if k.kappa0.abs() > 1e-8 {
                    errors.push(format!("model.activation: {a:?} has kappa0 = {} but the theory needs an odd activation", k.kappa0));
                }
                (Some(a), k)
            }
        };

        let rho = m.rho.unwrap_or(1.0);
        if !(rho > 0.0 && rho.is_finite()) {
            errors.push(format!("model.rho: must be positive, got {rho}"));
        }

        let axis = self.sweep.as_ref().map(|s| s.axis);
        let grid = match (&self.sweep, mode) {
            (Some(_), Mode::Separability) => {
                errors.push("sweep: not used in separability mode (use separability.n_over_d)".into());
                Vec::new()
            }
            (Some(s), _) => s.grid().resolve("sweep", &mut errors),
            (None, Mode::Separability) => Vec::new(),
            (None, _) => {
                errors.push("sweep: missing section (axis and grid)".into());
                Vec::new()
            }
        };

        let lambda_policy = match (m.lambda, m.lambda_policy, axis, mode) {
            (Some(_), Some(_), ..) => {
                errors.push("model.lambda: conflicts with model.lambda_policy; give one of them".into());
                LambdaPolicy::Fixed
            }
            (Some(_), None, Some(Axis::Lambda), _) | (None, Some(_), Some(Axis::Lambda), _) => {
                errors.push("model.lambda: not allowed when sweeping over lambda".into());
                LambdaPolicy::Fixed
            }
            (Some(_), None, _, Mode::LambdaOpt) => {
                errors.push("model.lambda: lambda-opt chooses lambda itself".into());
                LambdaPolicy::Optimal
            }
            (_, _, Some(Axis::Lambda), Mode::LambdaOpt) => {
                errors.push("sweep.axis: lambda-opt cannot sweep over lambda".into());
                LambdaPolicy::Optimal
            }
            (_, _, _, Mode::LambdaOpt) => LambdaPolicy::Optimal,
            (None, None, Some(Axis::Lambda), _) => LambdaPolicy::Fixed,
            (Some(l), None, ..) => {
                if !(l > 0.0 && l.is_finite()) {
                    errors.push(format!("model.lambda: must be positive, got {l}"));
                }
                LambdaPolicy::Fixed
            }
            (None, Some(LambdaPolicy::Optimal), ..) => LambdaPolicy::Optimal,
            (None, Some(LambdaPolicy::Fixed), ..) => {
                errors.push("model.lambda: missing (lambda_policy = \"fixed\" needs a value)".into());
                LambdaPolicy::Fixed
            }
            (None, None, _, Mode::Separability) => LambdaPolicy::Fixed,
            (None, None, ..) => {
                errors.push("model.lambda: missing (or set lambda_policy = \"optimal\")".into());
                LambdaPolicy::Fixed
            }
        };
        if lambda_policy == LambdaPolicy::Optimal && mode == Mode::Simulate {
            errors.push("model.lambda_policy: \"optimal\" needs the theory (theory, compare or lambda-opt mode)".into());
        }
        if axis == Some(Axis::Lambda) && grid.first().is_some_and(|&l| !(l > 0.0)) {
            errors.push("sweep: lambda values must be positive".into());
        }

        if mode != Mode::Separability {
            check_ratios(m, axis, &mut errors);
            if let (Some(axis), Some(&lo)) = (axis, grid.first()) {
                if axis != Axis::Lambda && !(lo > 0.0) {
                    errors.push(format!("sweep: {} values must be positive, got {lo}", axis.name()));
                }
            }
        }

        let s = &self.solver;
        if !(s.damping > 0.0 && s.damping <= 1.0) {
            errors.push(format!("solver.damping: must lie in (0, 1], got {}", s.damping));
        }
        if !(s.tol > 0.0) {
            errors.push(format!("solver.tol: must be positive, got {}", s.tol));
        }
        if s.max_iter == 0 {
            errors.push("solver.max_iter: must be at least 1".into());
        }
        if !(s.quad_rel_tol > 0.0) {
            errors.push(format!("solver.quad_rel_tol: must be positive, got {}", s.quad_rel_tol));
        }
        if s.quad_nodes == Some(0) {
            errors.push("solver.quad_nodes: must be at least 1".into());
        }
        if s.label_nodes == 0 {
            errors.push("solver.label_nodes: must be at least 1".into());
        }

        if lambda_policy == LambdaPolicy::Optimal {
            let l = &self.lambda_opt;
            if !(l.min >= 1e-6 && l.max >= l.min && l.count >= 1) {
                errors.push(format!(
                    "lambda_opt: need 1e-6 <= min <= max and count >= 1, got min = {}, max = {}, count = {}",
                    l.min, l.max, l.count
                ));
            }
        }

        if mode.has_simulation() {
            let sim = &self.simulation;
            if sim.d == 0 {
                errors.push("simulation.d: must be at least 1".into());
            }
            if sim.n_seeds == 0 {
                errors.push("simulation.n_seeds: must be at least 1".into());
            }
            if sim.models.is_empty() {
                errors.push("simulation.models: give at least one of \"original\", \"equivalent\"".into());
            }
            if sim.models.len() == 2 && sim.models[0] == sim.models[1] {
                errors.push("simulation.models: repeated entry".into());
            }
            if !(sim.tol > 0.0) {
                errors.push(format!("simulation.tol: must be positive, got {}", sim.tol));
            }
            if sim.n_test == Some(0) {
                errors.push("simulation.n_test: must be at least 1".into());
            }
        }

        match (mode, &self.separability) {
            (Mode::Separability, None) => errors.push("separability: missing section".into()),
            (Mode::Separability, Some(sep)) => {
                let grid = sep.n_over_d.resolve("separability.n_over_d", &mut errors);
                if grid.first().is_some_and(|&v| !(v > 0.0)) {
                    errors.push("separability.n_over_d: values must be positive".into());
                }
                if sep.spectra.is_empty() {
                    errors.push("separability.spectra: give at least one of \"gaussian\", \"orthogonal\"".into());
                }
                if !(sep.alpha_lo > 0.0 && sep.alpha_hi > sep.alpha_lo) {
                    errors.push(format!(
                        "separability: need 0 < alpha_lo < alpha_hi, got {} and {}",
                        sep.alpha_lo, sep.alpha_hi
                    ));
                }
                if channel != TeacherChannel::Sign {
                    errors.push("model.channel: separability needs the sign channel".into());
                }
            }
            (_, Some(_)) => errors.push(format!("separability: section not used in {} mode", mode.name())),
            (_, None) => {}
        }

        if !errors.is_empty() {
            return Err(CliError::Config(errors));
        }
        let mut config = self.clone();
        config.mode = Some(mode);
        config.model.channel = Some(m.channel.unwrap_or(ChannelName::Sign));
        if let TeacherChannel::LinearGaussian { delta } = channel {
            config.model.delta = Some(delta);
        }
        config.model.activation = activation;
        config.model.spectrum = Some(m.spectrum.unwrap_or(SpectrumKind::Gaussian));
        config.model.rho = Some(rho);
        if let Some(sw) = config.sweep.as_mut() {
            if sw.values.is_none() && sw.scale.is_none() {
                sw.scale = Some(Scale::Log);
            }
        }
        if let Some(sep) = config.separability.as_mut() {
            if sep.n_over_d.values.is_none() && sep.n_over_d.scale.is_none() {
                sep.n_over_d.scale = Some(Scale::Log);
            }
        }
        if mode == Mode::LambdaOpt {
            config.model.lambda_policy = Some(LambdaPolicy::Optimal);
        }
        if lambda_policy == LambdaPolicy::Fixed {
            config.model.lambda_policy = None;
        }
        if !mode.has_simulation() {
            config.simulation = SimulationSection::default();
        }
        if lambda_policy != LambdaPolicy::Optimal {
            config.lambda_opt = LambdaOptSection::default();
        }
        Ok(Plan {
            mode,
            axis,
            grid,
            loss,
            channel,
            activation,
            kappas,
            spectrum: m.spectrum.unwrap_or(SpectrumKind::Gaussian),
            rho,
            lambda_policy,
            solver: self.solver.options(),
            config,
        })
    }

    /// Normalised TOML of the configuration for `mode`, sections that the
    /// mode does not use omitted.
    pub fn normalised_toml(plan: &Plan) -> String {
        #[derive(Serialize)]
        struct Echo<'a> {
            mode: Mode,
            #[serde(skip_serializing_if = "Option::is_none")]
            output: Option<&'a PathBuf>,
            model: &'a ModelSection,
            #[serde(skip_serializing_if = "Option::is_none")]
            sweep: Option<&'a SweepSection>,
            #[serde(skip_serializing_if = "Option::is_none")]
            solver: Option<&'a SolverSection>,
            #[serde(skip_serializing_if = "Option::is_none")]
            lambda_opt: Option<&'a LambdaOptSection>,
            #[serde(skip_serializing_if = "Option::is_none")]
            simulation: Option<&'a SimulationSection>,
            #[serde(skip_serializing_if = "Option::is_none")]
            separability: Option<&'a SeparabilitySection>,
        }
        let c = &plan.config;
        let echo = Echo {
            mode: plan.mode,
            output: c.output.as_ref(),
            model: &c.model,
            sweep: c.sweep.as_ref(),
            solver: (plan.mode.has_theory() || plan.mode == Mode::Separability).then_some(&c.solver),
            lambda_opt: (plan.lambda_policy == LambdaPolicy::Optimal).then_some(&c.lambda_opt),
            simulation: plan.mode.has_simulation().then_some(&c.simulation),
            separability: c.separability.as_ref(),
        };
        toml::to_string(&echo).expect("configuration serialises")
    }
}

fn check_ratios(m: &ModelSection, axis: Option<Axis>, errors: &mut Vec<String>) {
    let swept = |a: Axis| axis == Some(a);
    for (key, v) in [("n_over_d", m.n_over_d), ("p_over_n", m.p_over_n), ("alpha", m.alpha), ("d_over_p", m.d_over_p)] {
        if let Some(v) = v {
            if !(v > 0.0 && v.is_finite()) {
                errors.push(format!("model.{key}: must be positive, got {v}"));
            }
        }
    }
    if m.p_over_n.is_some() && m.alpha.is_some() {
        errors.push("model.alpha: conflicts with model.p_over_n (alpha = n/p)".into());
    }
    for (a, key, set) in [
        (Axis::NOverD, "n_over_d", m.n_over_d.is_some()),
        (Axis::POverN, "p_over_n", m.p_over_n.is_some() || m.alpha.is_some()),
        (Axis::Alpha, "alpha", m.p_over_n.is_some() || m.alpha.is_some()),
    ] {
        if swept(a) && set {
            errors.push(format!("model.{key}: fixed value conflicts with the swept axis {}", a.name()));
        }
    }
    let count = [
        m.n_over_d.is_some() || swept(Axis::NOverD),
        m.p_over_n.is_some() || m.alpha.is_some() || swept(Axis::POverN) || swept(Axis::Alpha),
        m.d_over_p.is_some(),
    ]
    .iter()
    .filter(|&&b| b)
    .count();
    if count != 2 {
        errors.push(format!(
            "model: need exactly two of n_over_d, p_over_n (or alpha), d_over_p, counting the swept axis; got {count}"
        ));
    }
}

pub fn model_name(kind: ModelKind) -> &'static str {
    match kind {
        ModelKind::Original => "original",
        ModelKind::Equivalent => "equivalent",
    }
}
