//! Command-line front end: declarative TOML configurations, parameter
//! sweeps of the theory and the simulator, λ optimisation, separability
//! thresholds, and CSV output.

pub mod config;
pub mod output;
pub mod sweep;

use std::path::{Path, PathBuf};

use config::{Config, Mode, Plan};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error("numerical failure: {0}")]
    Nonconvergence(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    /// 1 configuration, 2 fatal nonconvergence, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Nonconvergence(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

/// Command-line settings that take precedence over the file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub quad_nodes: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut Config) {
        if let Some(out) = &self.out {
            cfg.output = Some(out.clone());
        }
        if let Some(seed) = self.seed {
            cfg.simulation.seed = seed;
        }
        if let Some(nodes) = self.quad_nodes {
            cfg.solver.quad_nodes = Some(nodes);
        }
    }
}

/// Validated plan for `mode` from the file at `path`.
pub fn load(path: &Path, mode: Option<Mode>, overrides: &Overrides) -> Result<Plan, CliError> {
    let mut cfg = Config::from_path(path)?;
    overrides.apply(&mut cfg);
    cfg.plan(mode)
}

/// Runs a validated plan and renders its CSV.
pub fn render(plan: &Plan) -> Result<Vec<u8>, CliError> {
    let header = output::header_lines(&Config::normalised_toml(plan));
    match plan.mode {
        Mode::Separability => output::render_separability(&header, &sweep::run_separability(plan)?),
        _ => output::render_sweep(&header, &sweep::run_sweep(plan)?),
    }
}

/// Runs a plan and writes its CSV to the configured output (stdout if none).
pub fn execute(plan: &Plan) -> Result<(), CliError> {
    let bytes = render(plan)?;
    output::write_output(plan.config.output.as_deref(), &bytes)
}
