//! Damped fixed-point iteration of the saddle-point equations.

use serde::{Deserialize, Serialize};

use crate::channels::DEFAULT_LABEL_NODES;
use crate::error::{Error, Result};

use super::hats::{analytic_hat_update_square, has_closed_form, ChannelIntegrator, XiRule};
use super::overlaps::overlap_update;
use super::params::{Hats, ModelParams, Overlaps};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Initial damping θ in `ov ← (1 − θ) ov + θ F(ov)`.
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub xi_rule: XiRule,
    pub label_nodes: usize,
    /// Use closed-form hats when available (square loss).
    pub closed_form: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            damping: 0.5,
            tol: 1e-8,
            max_iter: 10_000,
            xi_rule: XiRule::default(),
            label_nodes: DEFAULT_LABEL_NODES,
            closed_form: true,
        }
    }
}

/// Smallest damping reached by halving on infeasible proposals.
pub const MIN_DAMPING: f64 = 1.0 / 32.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub converged: bool,
    pub iterations: usize,
    /// Largest overlap change of one undamped update at the returned state.
    pub residual: f64,
    pub damping_used: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FixedPoint {
    pub overlaps: Overlaps,
    pub hats: Hats,
    pub report: SolverReport,
}

/// One full saddle-point map `ov → overlap_update(hat_update(ov))`.
#[derive(Clone, Debug)]
pub struct SaddleMap {
    integrator: ChannelIntegrator,
    closed_form: bool,
}

impl SaddleMap {
    pub fn new(p: &ModelParams, opts: &SolverOptions) -> Self {
        Self {
            integrator: ChannelIntegrator::new(p.channel, opts.xi_rule, opts.label_nodes),
            closed_form: opts.closed_form && has_closed_form(p),
        }
    }

    pub fn integrator(&self) -> &ChannelIntegrator {
        &self.integrator
    }

    pub fn hats(&self, ov: &Overlaps, p: &ModelParams) -> Result<Hats> {
        if self.closed_form {
            analytic_hat_update_square(ov, p)
        } else {
            self.integrator.hat_update(ov, p)
        }
    }

    pub fn apply(&self, ov: &Overlaps, p: &ModelParams) -> Result<(Hats, Overlaps)> {
        let h = self.hats(ov, p)?;
        let next = overlap_update(&h, p)?;
        if !next.is_finite() || !feasible(&next) {
            return Err(Error::State(format!("update left the feasible region: {next:?}")));
        }
        Ok((h, next))
    }
}

fn feasible(ov: &Overlaps) -> bool {
    ov.v_s > 0.0 && ov.v_w >= 0.0 && ov.q_s >= 0.0 && ov.q_w >= 0.0
}

/// Solves the saddle-point equations by damped iteration from `init`
/// (default [`Overlaps::default`]).
///
/// Convergence is declared when one undamped update moves every overlap by at
/// most `tol`, measured relative to `max(1, |x|)`. Reaching `max_iter` is not
/// an error: the report carries `converged = false`. A proposal that leaves
/// the feasible region halves the damping, down to [`MIN_DAMPING`]; past that
/// the solver gives up with a numerical error.
pub fn solve_fixed_point(p: &ModelParams, init: Option<Overlaps>, opts: &SolverOptions) -> Result<FixedPoint> {
    p.validate()?;
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidParams(format!("tolerance must be positive, got {}", opts.tol)));
    }
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(Error::InvalidParams(format!("damping must lie in (0, 1], got {}", opts.damping)));
    }
    let map = SaddleMap::new(p, opts);
    let mut ov = init.unwrap_or_default();
    let mut theta = opts.damping;
    // An infeasible start falls back to the default initialisation once.
    let (mut hats, mut next) = match map.apply(&ov, p) {
        Ok(r) => r,
        Err(Error::State(_)) if init.is_some() => {
            ov = Overlaps::default();
            map.apply(&ov, p)?
        }
        Err(e) => return Err(e),
    };
    let mut iter = 0;
    loop {
        let residual = ov.distance(&next);
        if residual <= opts.tol || iter == opts.max_iter {
            if residual > opts.tol {
                log::debug!("saddle-point iteration hit max_iter with residual {residual:e}");
            }
            return Ok(FixedPoint {
                overlaps: ov,
                hats,
                report: SolverReport {
                    converged: residual <= opts.tol,
                    iterations: iter,
                    residual,
                    damping_used: theta,
                },
            });
        }
        let mut step = theta;
        loop {
            let candidate = ov.mix(&next, step);
            match map.apply(&candidate, p) {
                Ok((h, n)) => {
                    ov = candidate;
                    hats = h;
                    next = n;
                    theta = step;
                    break;
                }
                Err(Error::State(msg)) => {
                    if step <= MIN_DAMPING {
                        return Err(Error::Numerical {
                            context: format!("saddle-point iteration ({msg})"),
                            last: step,
                            residual,
                        });
                    }
                    step = (0.5 * step).max(MIN_DAMPING);
                }
                Err(e) => return Err(e),
            }
        }
        iter += 1;
    }
}
