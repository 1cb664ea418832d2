use rfhmm::observables::{optimize_lambda, separability_threshold, theory_point, theory_sweep, TheoryPoint};
use rfhmm::par::*;
use rfhmm::simulate::{averaged_experiment, ExperimentConfig, ExperimentStats, ModelKind};
use rfhmm::{Loss, ModelParams, SpectrumKind, TeacherChannel};

use crate::config::{LambdaPolicy, Mode, Plan, Point};
use crate::CliError;

/// Averages of one simulated data model at a grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct SimSummary {
    pub n_seeds: usize,
    pub n_failed: usize,
    pub n_nonconverged: usize,
    pub eps_g: f64,
    pub eps_g_stderr: Option<f64>,
    pub eps_t: f64,
    pub eps_t_stderr: Option<f64>,
    pub error: Option<String>,
}

impl SimSummary {
    fn from_stats(s: &ExperimentStats) -> Self {
        Self {
            n_seeds: s.n_seeds,
            n_failed: s.failures.len(),
            n_nonconverged: s.n_nonconverged,
            eps_g: s.mean_eps_g,
            eps_g_stderr: s.stderr_eps_g,
            eps_t: s.mean_eps_t,
            eps_t_stderr: s.stderr_eps_t,
            error: None,
        }
    }

    fn failed(n_seeds: usize, message: String) -> Self {
        Self {
            n_seeds: 0,
            n_failed: n_seeds,
            n_nonconverged: 0,
            eps_g: f64::NAN,
            eps_g_stderr: None,
            eps_t: f64::NAN,
            eps_t_stderr: None,
            error: Some(message),
        }
    }
}

/// Theory columns of a row.
#[derive(Clone, Debug, PartialEq)]
pub struct TheorySummary {
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
    pub eps_g: f64,
    pub eps_t: f64,
    pub m_s: f64,
    pub q_s: f64,
    pub q_w: f64,
    pub v_s: f64,
    pub v_w: f64,
}

impl TheorySummary {
    fn from_point(tp: &TheoryPoint) -> Self {
        let o = &tp.overlaps;
        Self {
            converged: tp.report.converged,
            iterations: tp.report.iterations,
            residual: tp.report.residual,
            eps_g: tp.eps_g,
            eps_t: tp.eps_t,
            m_s: o.m_s,
            q_s: o.q_s,
            q_w: o.q_w,
            v_s: o.v_s,
            v_w: o.v_w,
        }
    }
}

/// Simulation sizes actually used at a grid point.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Sizes {
    pub d: usize,
    pub n: usize,
    pub p: usize,
}

/// One grid point, self-describing.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub axis: String,
    pub value: f64,
    pub loss: String,
    pub task: String,
    pub channel: String,
    pub delta: f64,
    pub activation: String,
    pub kappa0: f64,
    pub kappa1: f64,
    pub kappa_star: f64,
    pub spectrum: String,
    pub rho: f64,
    pub n_over_d: f64,
    pub p_over_n: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub lambda_policy: String,
    /// λ used by the theory (the optimum under the optimal policy).
    pub lambda: f64,
    pub theory: Option<TheorySummary>,
    /// Why the theory columns are empty or suspect.
    pub theory_error: Option<String>,
    pub sizes: Option<Sizes>,
    /// λ used by the simulations (the theory's λ, floored for iterative fits).
    pub sim_lambda: Option<f64>,
    pub original: Option<SimSummary>,
    pub equivalent: Option<SimSummary>,
}

/// Simulation λ floors: ridge solves directly, iterative fits need curvature.
pub const RIDGE_LAMBDA_FLOOR: f64 = 1e-8;
pub const ITERATIVE_LAMBDA_FLOOR: f64 = 1e-4;

fn sim_lambda(loss: Loss, lambda: f64) -> f64 {
    let floor = match loss {
        Loss::Square => RIDGE_LAMBDA_FLOOR,
        _ => ITERATIVE_LAMBDA_FLOOR,
    };
    if lambda < floor {
        log::warn!("simulation lambda {lambda:e} raised to the floor {floor:e}");
    }
    lambda.max(floor)
}

impl Plan {
    fn params(&self, pt: &Point, lambda: f64) -> rfhmm::Result<ModelParams> {
        let gamma = pt.gamma();
        ModelParams::new(
            pt.alpha(),
            gamma,
            lambda,
            self.rho,
            self.kappas,
            self.channel,
            self.loss.expect("sweeps have a loss"),
            self.spectrum.law(gamma)?,
        )
    }

    /// `(d, n, p)` at a grid point: `n = round(d·n/d)`, `p = round(n·p/n)`.
    pub fn sizes(&self, pt: &Point) -> Sizes {
        let d = self.config.simulation.d;
        let n = ((d as f64 * pt.n_over_d).round() as usize).max(1);
        let p = ((n as f64 * pt.p_over_n).round() as usize).max(1);
        Sizes { d, n, p }
    }

    fn experiment(&self, sizes: Sizes, lambda: f64, model: ModelKind) -> ExperimentConfig {
        let sim = &self.config.simulation;
        ExperimentConfig {
            d: sizes.d,
            n: sizes.n,
            p: sizes.p,
            features: self.features(),
            activation: self.activation.expect("simulations have an activation"),
            model,
            channel: self.channel,
            loss: self.loss.expect("sweeps have a loss"),
            lambda,
            rho: self.rho,
            n_seeds: sim.n_seeds,
            n_test: sim.n_test,
            fit: sim.fit(),
            master_seed: sim.seed,
        }
    }

    fn base_row(&self, v: f64, pt: &Point, lambda: f64) -> ResultRow {
        let loss = self.loss.expect("sweeps have a loss");
        ResultRow {
            axis: self.axis.map(|a| a.name()).unwrap_or("none").into(),
            value: v,
            loss: name_of(&loss.loss),
            task: name_of(&loss.task),
            channel: match self.channel {
                TeacherChannel::Sign => "sign".into(),
                TeacherChannel::LinearGaussian { .. } => "linear".into(),
            },
            delta: match self.channel {
                TeacherChannel::LinearGaussian { delta } => delta,
                TeacherChannel::Sign => 0.0,
            },
            activation: self.activation.map(|a| name_of(&a)).unwrap_or_else(|| "custom".into()),
            kappa0: self.kappas.kappa0,
            kappa1: self.kappas.kappa1,
            kappa_star: self.kappas.kappa_star,
            spectrum: self.spectrum.name().into(),
            rho: self.rho,
            n_over_d: pt.n_over_d,
            p_over_n: pt.p_over_n,
            alpha: pt.alpha(),
            gamma: pt.gamma(),
            lambda_policy: name_of(&self.lambda_policy),
            lambda,
            theory: None,
            theory_error: None,
            sizes: None,
            sim_lambda: None,
            original: None,
            equivalent: None,
        }
    }
}

fn name_of<T: serde::Serialize>(v: &T) -> String {
    match toml::Value::try_from(v) {
        Ok(toml::Value::String(s)) => s,
        other => panic!("unit enum serialises to a string, got {other:?}"),
    }
}

/// Theory result at every grid point, in grid order.
fn theory_points(plan: &Plan, points: &[Point]) -> Vec<(f64, rfhmm::Result<TheoryPoint>)> {
    let opts = &plan.solver;
    match plan.lambda_policy {
        LambdaPolicy::Optimal => {
            let grid = plan.config.lambda_opt.grid();
            let refine = plan.config.lambda_opt.refine;
            points
                .par_iter()
                .map(|pt| {
                    let out = plan.params(pt, grid[0]).and_then(|p| optimize_lambda(&p, &grid, refine, opts));
                    match out {
                        Ok(o) => (o.lambda, Ok(o.point)),
                        Err(e) => (f64::NAN, Err(e)),
                    }
                })
                .collect()
        }
        LambdaPolicy::Fixed => {
            let lambdas: Vec<f64> = points.iter().map(|pt| pt.lambda.expect("validated lambda")).collect();
            let params: Vec<rfhmm::Result<ModelParams>> =
                points.iter().zip(&lambdas).map(|(pt, &l)| plan.params(pt, l)).collect();
            if params.iter().all(|p| p.is_ok()) {
                let ok: Vec<ModelParams> = params.into_iter().map(|p| p.expect("checked")).collect();
                lambdas.into_iter().zip(theory_sweep(&ok, plan.config.solver.warm_start, opts)).collect()
            } else {
                points
                    .par_iter()
                    .zip(lambdas.par_iter())
                    .map(|(pt, &l)| (l, plan.params(pt, l).and_then(|p| theory_point(&p, None, opts))))
                    .collect()
            }
        }
    }
}

/// Runs a theory / simulate / compare / lambda-opt sweep.
///
/// Points that fail or do not converge are kept, with `converged = false`
/// and the reason in the error columns. Only lambda-opt treats failure as
/// fatal, and only when no grid point produced a converged optimum.
pub fn run_sweep(plan: &Plan) -> Result<Vec<ResultRow>, CliError> {
    if plan.mode == Mode::Separability {
        return Err(CliError::Config(vec!["mode: separability runs through run_separability".into()]));
    }
    let points: Vec<Point> = plan.grid.iter().map(|&v| plan.point(v)).collect();
    let theory = matches!(plan.mode, Mode::Theory | Mode::Compare | Mode::LambdaOpt).then(|| theory_points(plan, &points));
    let mut rows = Vec::with_capacity(points.len());
    for (i, (&v, pt)) in plan.grid.iter().zip(&points).enumerate() {
        let lambda = match (&theory, pt.lambda) {
            (Some(t), _) if plan.lambda_policy == LambdaPolicy::Optimal => t[i].0,
            (_, Some(l)) => l,
            _ => f64::NAN,
        };
        let mut row = plan.base_row(v, pt, lambda);
        if let Some(t) = &theory {
            match &t[i].1 {
                Ok(tp) => {
                    row.theory = Some(TheorySummary::from_point(tp));
                    if !tp.report.converged {
                        row.theory_error = Some(format!(
                            "fixed point not converged after {} iterations (residual {:e})",
                            tp.report.iterations, tp.report.residual
                        ));
                    }
                }
                Err(e) => row.theory_error = Some(e.to_string()),
            }
        }
        if matches!(plan.mode, Mode::Simulate | Mode::Compare) {
            let sizes = plan.sizes(pt);
            row.sizes = Some(sizes);
            if lambda.is_finite() {
                let sl = sim_lambda(plan.loss.expect("sweeps have a loss").loss, lambda);
                row.sim_lambda = Some(sl);
                for &model in &plan.config.simulation.models {
                    log::info!("simulating {} at {} = {v}", crate::config::model_name(model), row.axis);
                    let cfg = plan.experiment(sizes, sl, model);
                    let summary = match averaged_experiment(&cfg) {
                        Ok(s) => SimSummary::from_stats(&s),
                        Err(e) => SimSummary::failed(cfg.n_seeds, e.to_string()),
                    };
                    match model {
                        ModelKind::Original => row.original = Some(summary),
                        ModelKind::Equivalent => row.equivalent = Some(summary),
                    }
                }
            }
        }
        rows.push(row);
    }
    if plan.mode == Mode::LambdaOpt && !rows.iter().any(|r| r.theory.as_ref().is_some_and(|t| t.converged)) {
        let first = rows.iter().find_map(|r| r.theory_error.clone()).unwrap_or_default();
        return Err(CliError::Nonconvergence(format!("no grid point produced a converged optimum ({first})")));
    }
    Ok(rows)
}

/// One `(spectrum, n/d)` threshold.
#[derive(Clone, Debug, PartialEq)]
pub struct SeparabilityRow {
    pub spectrum: String,
    pub n_over_d: f64,
    pub alpha_star: f64,
    pub inv_alpha_star: f64,
    pub error: Option<String>,
}

/// Interpolation thresholds for every configured spectrum and `n/d`.
/// Bracketing failures are reported in the row rather than aborting.
pub fn run_separability(plan: &Plan) -> Result<Vec<SeparabilityRow>, CliError> {
    let sep = plan
        .config
        .separability
        .as_ref()
        .ok_or_else(|| CliError::Config(vec!["separability: missing section".into()]))?;
    let mut errors = Vec::new();
    let grid = sep.n_over_d.resolve("separability.n_over_d", &mut errors);
    if !errors.is_empty() {
        return Err(CliError::Config(errors));
    }
    let opts = sep.options();
    let jobs: Vec<(SpectrumKind, f64)> = sep.spectra.iter().flat_map(|&k| grid.iter().map(move |&nd| (k, nd))).collect();
    Ok(jobs
        .par_iter()
        .map(|&(kind, nd)| match separability_threshold(nd, kind, plan.kappas, &opts) {
            Ok(a) => SeparabilityRow {
                spectrum: kind.name().into(),
                n_over_d: nd,
                alpha_star: a,
                inv_alpha_star: 1.0 / a,
                error: None,
            },
            Err(e) => SeparabilityRow {
                spectrum: kind.name().into(),
                n_over_d: nd,
                alpha_star: f64::NAN,
                inv_alpha_star: f64::NAN,
                error: Some(e.to_string()),
            },
        })
        .collect())
}
