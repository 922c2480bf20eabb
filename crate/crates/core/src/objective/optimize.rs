//! Quasi-Newton (BFGS, limited-memory for large problems) with Armijo
//! backtracking, plus the change-of-variables check.

use std::collections::VecDeque;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{empirical_loss, loss_and_gradient, row_losses, Exact, LossConfig, Trainable};
use crate::densities::Density;
use crate::error::{Error, Result};
use crate::kr_exact::{invert_triangular_map, TriangularMap};
use crate::metrics::mean_and_stderr;
use crate::param_maps::{DerivativeCapReport, MonotoneMapSpec};
use crate::seed::SeedSpec;

/// Iterations over which `recent_decrease` is measured.
const RECENT_WINDOW: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerOptions {
    pub max_iters: usize,
    /// Stop once the largest gradient entry is below this.
    pub grad_tol: f64,
    /// Stop (unconverged) once a step lowers the loss by no more than
    /// `loss_tol * max(1, |loss|)`.
    pub loss_tol: f64,
    /// L-BFGS history length.
    pub memory: usize,
    pub armijo_c1: f64,
    pub max_halvings: usize,
    /// Keep a full inverse-Hessian estimate (BFGS) when there are at most
    /// this many coefficients; larger problems use the limited-memory form.
    pub dense_limit: usize,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            max_iters: 500,
            grad_tol: 1e-6,
            loss_tol: 0.0,
            memory: 10,
            armijo_c1: 1e-4,
            max_halvings: 60,
            dense_limit: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub theta_hat: Vec<f64>,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub iterations: usize,
    /// Largest absolute gradient entry at `theta_hat`.
    pub grad_norm: f64,
    pub converged: bool,
    pub loss_history: Vec<f64>,
    /// Loss decrease over the last few iterations; near zero when stalled.
    pub recent_decrease: f64,
    pub line_search_failed: bool,
    /// Realized derivative bounds of the fitted map, when available.
    #[serde(default)]
    pub diagnostics: Option<DerivativeCapReport>,
}

/// A trained map with its optimizer record.
#[derive(Debug, Clone)]
pub struct Fit<T> {
    pub map: T,
    pub result: OptimizationResult,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Inverse-Hessian estimate for the quasi-Newton direction.
enum Curvature {
    /// `(s, y, 1 / s.y)` pairs for the two-loop recursion.
    Limited {
        pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)>,
        memory: usize,
    },
    /// Row-major `p x p` matrix; `None` until the first accepted pair.
    Dense { h: Option<Vec<f64>>, p: usize },
}

impl Curvature {
    fn new(p: usize, opts: &OptimizerOptions) -> Self {
        if p <= opts.dense_limit {
            Curvature::Dense { h: None, p }
        } else {
            Curvature::Limited {
                pairs: VecDeque::new(),
                memory: opts.memory.max(1),
            }
        }
    }

    fn is_empty(&self) -> bool {
        match self {
            Curvature::Limited { pairs, .. } => pairs.is_empty(),
            Curvature::Dense { h, .. } => h.is_none(),
        }
    }

    fn clear(&mut self) {
        match self {
            Curvature::Limited { pairs, .. } => pairs.clear(),
            Curvature::Dense { h, .. } => *h = None,
        }
    }

    /// `-H g`.
    fn direction(&self, grad: &[f64]) -> Vec<f64> {
        match self {
            Curvature::Limited { pairs, .. } => lbfgs_direction(grad, pairs),
            Curvature::Dense { h: None, .. } => grad.iter().map(|v| -v).collect(),
            Curvature::Dense { h: Some(h), p } => h.chunks(*p).map(|row| -dot(row, grad)).collect(),
        }
    }

    fn update(&mut self, s: Vec<f64>, y: Vec<f64>) {
        let sy = dot(&s, &y);
        if !(sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt()) {
            return;
        }
        match self {
            Curvature::Limited { pairs, memory } => {
                if pairs.len() == *memory {
                    pairs.pop_front();
                }
                pairs.push_back((s, y, 1.0 / sy));
            }
            Curvature::Dense { h, p } => {
                let p = *p;
                let h = h.get_or_insert_with(|| {
                    let gamma = sy / dot(&y, &y);
                    let mut m = vec![0.0; p * p];
                    m.iter_mut().step_by(p + 1).for_each(|v| *v = gamma);
                    m
                });
                // H <- (I - r s y') H (I - r y s') + r s s'
                let hy: Vec<f64> = h.chunks(p).map(|row| dot(row, &y)).collect();
                let r = 1.0 / sy;
                let c = r * r * dot(&y, &hy) + r;
                for i in 0..p {
                    for j in 0..p {
                        h[i * p + j] += c * s[i] * s[j] - r * (hy[i] * s[j] + s[i] * hy[j]);
                    }
                }
            }
        }
    }
}

/// Two-loop recursion: `-H g`.
fn lbfgs_direction(grad: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = grad.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    if let Some((s, y, _)) = history.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

/// Minimizes a smooth function given its value and gradient.
///
/// `loss` may return `+inf` for infeasible points; the line search backs off
/// from them. With `max_iters == 0` the initial point is returned unconverged.
pub fn minimize<L, G>(
    theta0: &[f64],
    mut loss: L,
    mut loss_grad: G,
    opts: &OptimizerOptions,
) -> Result<OptimizationResult>
where
    L: FnMut(&[f64]) -> Result<f64>,
    G: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let mut x = theta0.to_vec();
    let (mut fx, mut gx) = loss_grad(&x)?;
    if !fx.is_finite() {
        return Err(Error::InvalidParameter(
            "initial loss is not finite; choose a starting map that keeps the data inside the reference support".into(),
        ));
    }
    let initial_loss = fx;
    let mut curvature = Curvature::new(x.len(), opts);
    let mut loss_history = vec![fx];
    let mut iterations = 0;
    let mut converged = false;
    let mut line_search_failed = false;

    while iterations < opts.max_iters {
        if inf_norm(&gx) <= opts.grad_tol {
            converged = true;
            break;
        }
        let mut dir = curvature.direction(&gx);
        let mut slope = dot(&gx, &dir);
        if !(slope < 0.0) {
            curvature.clear();
            dir = gx.iter().map(|v| -v).collect();
            slope = dot(&gx, &dir);
        }
        // first step: unit length in the largest coordinate
        let mut t = if curvature.is_empty() {
            (1.0 / inf_norm(&dir)).min(1.0)
        } else {
            1.0
        };
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(a, b)| a + t * b).collect();
            let ft = loss(&trial)?;
            if ft.is_finite() && ft <= fx + opts.armijo_c1 * t * slope {
                accepted = Some((trial, ft));
                break;
            }
            t *= 0.5;
        }
        let Some((x_new, _)) = accepted else {
            if !curvature.is_empty() {
                curvature.clear();
                continue;
            }
            line_search_failed = true;
            break;
        };
        let (f_new, g_new) = loss_grad(&x_new)?;
        iterations += 1;
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&gx).map(|(a, b)| a - b).collect();
        curvature.update(s, y);
        let decrease = fx - f_new;
        x = x_new;
        fx = f_new;
        gx = g_new;
        loss_history.push(fx);
        if decrease <= opts.loss_tol * fx.abs().max(1.0) {
            break;
        }
    }
    if opts.max_iters > 0 && inf_norm(&gx) <= opts.grad_tol {
        converged = true;
    }
    let recent_decrease = {
        let h = &loss_history;
        let back = h.len().saturating_sub(RECENT_WINDOW + 1);
        h[back] - h[h.len() - 1]
    };
    Ok(OptimizationResult {
        theta_hat: x,
        initial_loss,
        final_loss: fx,
        iterations,
        grad_norm: inf_norm(&gx),
        converged,
        loss_history,
        recent_decrease,
        line_search_failed,
        diagnostics: None,
    })
}

/// Fits all coefficients of `init` jointly.
pub fn optimize<T: Trainable>(
    init: &T,
    data: &Array2<f64>,
    cfg: &LossConfig,
    opts: &OptimizerOptions,
) -> Result<Fit<T>> {
    let result = minimize(
        &init.params(),
        |th| empirical_loss(&init.with_params(th)?, data, cfg),
        |th| loss_and_gradient(&init.with_params(th)?, data, cfg),
        opts,
    )?;
    let map = init.with_params(&result.theta_hat)?;
    let result = OptimizationResult {
        diagnostics: map.derivative_caps(),
        ..result
    };
    Ok(Fit { map, result })
}

/// Fits one component at a time.
///
/// With a product reference the loss splits into one term per component, so
/// this reaches the same minimizer as [`optimize`] on smaller problems.
pub fn optimize_blockwise(
    init: &MonotoneMapSpec,
    data: &Array2<f64>,
    cfg: &LossConfig,
    opts: &OptimizerOptions,
) -> Result<Fit<MonotoneMapSpec>> {
    if !cfg.reference.is_product() {
        return Err(Error::Unsupported(
            "blockwise fitting needs a product reference density".into(),
        ));
    }
    let mut theta = init.theta().to_vec();
    let initial_loss = empirical_loss(init, data, cfg)?;
    let mut iterations = 0;
    let mut converged = true;
    let mut line_search_failed = false;
    let mut loss_history = vec![initial_loss];
    let mut recent_decrease = 0.0;
    for k in 0..init.dim() {
        let range = init.component_range(k);
        let with_block = |block: &[f64], base: &[f64]| {
            let mut full = base.to_vec();
            full[range.clone()].copy_from_slice(block);
            init.with_theta(&full)
        };
        let base = theta.clone();
        let r = minimize(
            &theta[range.clone()],
            |b| empirical_loss(&with_block(b, &base)?, data, cfg),
            |b| {
                let (l, g) = loss_and_gradient(&with_block(b, &base)?, data, cfg)?;
                Ok((l, g[range.clone()].to_vec()))
            },
            opts,
        )?;
        theta[range.clone()].copy_from_slice(&r.theta_hat);
        iterations += r.iterations;
        converged &= r.converged;
        line_search_failed |= r.line_search_failed;
        recent_decrease = f64::max(recent_decrease, r.recent_decrease);
        loss_history.extend_from_slice(&r.loss_history[1..]);
    }
    let map = init.with_theta(&theta)?;
    let (final_loss, grad) = loss_and_gradient(&map, data, cfg)?;
    Ok(Fit {
        map: map.clone(),
        result: OptimizationResult {
            theta_hat: theta,
            initial_loss,
            final_loss,
            iterations,
            grad_norm: inf_norm(&grad),
            converged,
            loss_history,
            recent_decrease,
            line_search_failed,
            diagnostics: map.derivative_caps(),
        },
    })
}

/// Two Monte Carlo estimates of the same divergence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeOfVariablesReport {
    /// `E_{Y ~ S#f}[ln (S#f)(Y) - ln g(Y)]`, using `S^{-1}` on each `Y`.
    pub forward: f64,
    pub forward_stderr: f64,
    /// `E_{X ~ f}[ln f(X) - ln (S^# g)(X)]`.
    pub backward: f64,
    pub backward_stderr: f64,
}

impl ChangeOfVariablesReport {
    /// True when the estimates differ by less than `z` combined standard errors.
    pub fn agrees(&self, z: f64) -> bool {
        let se = self.forward_stderr.hypot(self.backward_stderr);
        (self.forward - self.backward).abs() <= z * se
    }
}

/// Estimates `KL(S#f || g)` and `KL(f || S^# g)` from independent samples.
/// The two are equal for any invertible `S`.
pub fn kl_change_of_variables_check(
    map: &dyn TriangularMap,
    f: &Density,
    g: &Density,
    n: usize,
    seed: SeedSpec,
) -> Result<ChangeOfVariablesReport> {
    let cfg = LossConfig::with_target(g.clone(), f.clone());
    let xb = f.sample(n, seed.derive(0))?;
    let back = row_losses(&Exact(map), &xb, &cfg)?;

    let xf = f.sample(n, seed.derive(1))?;
    let mut fwd = Vec::with_capacity(n);
    for row in xf.rows() {
        let y = map.eval(&row.to_vec())?;
        let x = invert_triangular_map(map, &y, 1e-12)?;
        let log_push = f.log_density_or_neg_inf(&x) - map.log_det_jacobian(&x)?;
        fwd.push(log_push - g.log_density_extended(&y));
    }
    let (forward, forward_stderr) = mean_and_stderr(&fwd);
    let (backward, backward_stderr) = mean_and_stderr(&back);
    Ok(ChangeOfVariablesReport {
        forward,
        forward_stderr,
        backward,
        backward_stderr,
    })
}
