use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::channels::{Loss, LossModel, Task};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Stop when the gradient max-norm is at most this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            tol: 1e-4,
            max_iter: 10_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub w: DVector<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Gradient max-norm at `w`.
    pub grad_norm: f64,
}

fn check_shapes(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::InvalidParams(format!("X has {} rows but y has length {}", x.nrows(), y.len())));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParams(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    Ok(())
}

/// Ridge estimator `argmin ½‖y − Xw‖² + ½λ‖w‖²`.
///
/// Solved by Cholesky on the smaller of the two Gram matrices:
/// `(XᵀX + λI)⁻¹Xᵀy` when `n ≥ p`, `Xᵀ(XXᵀ + λI)⁻¹y` otherwise.
pub fn fit_ridge(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    check_shapes(x, y, lambda)?;
    let (n, p) = x.shape();
    let singular = || Error::Numerical {
        context: "ridge Cholesky factorisation (singular Gram matrix; use a positive lambda floor such as 1e-8)".into(),
        last: lambda,
        residual: f64::NAN,
    };
    if n >= p {
        let mut gram = x.tr_mul(x);
        gram.fill_diagonal_add(lambda);
        let chol = gram.cholesky().ok_or_else(singular)?;
        Ok(chol.solve(&x.tr_mul(y)))
    } else {
        let mut gram = x * x.transpose();
        gram.fill_diagonal_add(lambda);
        let chol = gram.cholesky().ok_or_else(singular)?;
        Ok(x.tr_mul(&chol.solve(y)))
    }
}

trait FillDiagonalAdd {
    fn fill_diagonal_add(&mut self, v: f64);
}

impl FillDiagonalAdd for DMatrix<f64> {
    fn fill_diagonal_add(&mut self, v: f64) {
        for i in 0..self.nrows().min(self.ncols()) {
            self[(i, i)] += v;
        }
    }
}

/// L2-regularised logistic regression, `argmin Σ log(1 + e^{−y x·w}) + ½λ‖w‖²`.
pub fn fit_logistic(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64, opts: &FitOptions) -> Result<FitResult> {
    if let Some(bad) = y.iter().find(|&&v| v != 1.0 && v != -1.0) {
        return Err(Error::Usage(format!("logistic regression needs labels in {{-1, +1}}, found {bad}")));
    }
    fit_convex(x, y, lambda, LossModel::new(Loss::Logistic, Task::Classification), opts)
}

fn objective(z: &DVector<f64>, y: &DVector<f64>, w: &DVector<f64>, lambda: f64, loss: LossModel) -> f64 {
    let data: f64 = z.iter().zip(y.iter()).map(|(&zi, &yi)| loss.value(yi, zi)).sum();
    data + 0.5 * lambda * w.norm_squared()
}

/// Minimises `Σ ℓ(y_μ, x_μ·w) + ½λ‖w‖²` for any of the supported losses.
///
/// Square loss goes through [`fit_ridge`]. Otherwise damped Newton with an
/// Armijo backtracking line search; when `p ≥ n` the Newton system is solved
/// in sample space through the Woodbury identity with a cached `XXᵀ`.
/// Stops when the gradient max-norm drops to `opts.tol`; running out of
/// iterations, or a line search that can no longer decrease the objective,
/// returns the last iterate with `converged = false`.
pub fn fit_convex(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64, loss: LossModel, opts: &FitOptions) -> Result<FitResult> {
    check_shapes(x, y, lambda)?;
    if loss.loss == Loss::Square {
        let w = fit_ridge(x, y, lambda)?;
        let resid = x * &w - y;
        let grad = x.tr_mul(&resid) + &w * lambda;
        let grad_norm = grad.amax();
        return Ok(FitResult {
            w,
            converged: true,
            iterations: 1,
            grad_norm,
        });
    }
    if !(lambda > 0.0) {
        return Err(Error::InvalidParams(format!("iterative fits need lambda > 0, got {lambda}")));
    }
    let (n, p) = x.shape();
    let kernel = (p >= n).then(|| x * x.transpose());
    let mut w = DVector::zeros(p);
    let mut z = DVector::zeros(n);
    let mut f = objective(&z, y, &w, lambda, loss);
    let mut iterations = 0;
    loop {
        let dl = z.zip_map(y, |zi, yi| loss.derivative(yi, zi));
        let grad = x.tr_mul(&dl) + &w * lambda;
        let grad_norm = grad.amax();
        if grad_norm <= opts.tol || iterations >= opts.max_iter {
            return Ok(FitResult {
                w,
                converged: grad_norm <= opts.tol,
                iterations,
                grad_norm,
            });
        }
        let curv = z.zip_map(y, |zi, yi| loss.curvature(yi, zi));
        let step = newton_direction(x, kernel.as_ref(), &curv, &grad, lambda).unwrap_or_else(|| -&grad);
        let slope = grad.dot(&step);
        let (step, slope) = if slope < 0.0 { (step, slope) } else { (-&grad, -grad.norm_squared()) };
        let dz = x * &step;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let w_new = &w + &step * t;
            let z_new = &z + &dz * t;
            let f_new = objective(&z_new, y, &w_new, lambda, loss);
            if f_new <= f + 1e-4 * t * slope {
                w = w_new;
                z = z_new;
                f = f_new;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        iterations += 1;
        if !accepted {
            log::debug!("line search stalled at gradient norm {grad_norm:e}");
            return Ok(FitResult {
                w,
                converged: false,
                iterations,
                grad_norm,
            });
        }
    }
}

/// Solves `(XᵀDX + λI) s = −g`.
fn newton_direction(
    x: &DMatrix<f64>,
    kernel: Option<&DMatrix<f64>>,
    curv: &DVector<f64>,
    grad: &DVector<f64>,
    lambda: f64,
) -> Option<DVector<f64>> {
    let (n, p) = x.shape();
    match kernel {
        None => {
            let sd = curv.map(f64::sqrt);
            let mut xs = x.clone();
            for j in 0..p {
                for i in 0..n {
                    xs[(i, j)] *= sd[i];
                }
            }
            let mut h = xs.tr_mul(&xs);
            h.fill_diagonal_add(lambda);
            Some(-h.cholesky()?.solve(grad))
        }
        Some(k) => {
            // (λI + XᵀDX)⁻¹ g = (g − Xᵀ S (λI + S K S)⁻¹ S X g)/λ with S = D^½.
            let sd = curv.map(f64::sqrt);
            let mut b = k.clone();
            for j in 0..n {
                for i in 0..n {
                    b[(i, j)] *= sd[i] * sd[j];
                }
            }
            b.fill_diagonal_add(lambda);
            let u = (x * grad).component_mul(&sd);
            let t = b.cholesky()?.solve(&u).component_mul(&sd);
            Some(-(grad - x.tr_mul(&t)) / lambda)
        }
    }
}
