//! Empirical KL objective for triangular maps and its minimization.
//!
//! The per-sample loss is
//! `psi(x) = [ln f(x)] - ln g(S(x)) - sum_k ln D_k S_k(x)`,
//! whose sample mean estimates `KL(f || S^# g)` up to the optional constant
//! `E[ln f]`. `g` is the reference density, `f` the target.

mod optimize;

pub use optimize::{
    kl_change_of_variables_check, minimize, optimize, optimize_blockwise, ChangeOfVariablesReport,
    Fit, OptimizationResult, OptimizerOptions,
};

use ndarray::Array2;
use rayon::prelude::*;

use crate::densities::{Density, SupportBox};
use crate::error::{Error, Result};
use crate::kr_exact::TriangularMap;
use crate::param_maps::{DerivativeCapReport, JacobianFlowSpec, MonotoneMapSpec, Scratch};

/// Rows per work unit. Partial sums are combined in chunk order, so results
/// do not depend on the thread count.
pub const CHUNK_ROWS: usize = 256;

/// Relative distance by which boundary rows are moved inside the box.
pub const BOUNDARY_NUDGE: f64 = 1e-12;

/// Anything with a forward pass `x -> (S(x), ln det JS(x))`.
pub trait Transport: Sync {
    fn dim(&self) -> usize;
    fn input_support(&self) -> &SupportBox;
    fn forward(&self, x: &[f64], scr: &mut Scratch) -> Result<(Vec<f64>, f64)>;
}

/// A transport with trainable coefficients.
pub trait Trainable: Transport + Clone + Send {
    fn n_params(&self) -> usize;
    fn params(&self) -> Vec<f64>;
    fn with_params(&self, theta: &[f64]) -> Result<Self>;
    /// Adds the gradient of `ybar . S(x) + w * ln det JS(x)` into `grad`.
    fn backprop(&self, x: &[f64], ybar: &[f64], w: f64, grad: &mut [f64], scr: &mut Scratch);
    /// Derivative bounds over a grid on the input support.
    fn derivative_caps(&self) -> Option<DerivativeCapReport> {
        None
    }
}

/// Grid points per axis for the post-fit derivative report (about 4096 points).
fn diagnostic_grid(dim: usize) -> usize {
    ((4096f64).powf(1.0 / dim as f64).floor() as usize).clamp(2, 50)
}

impl Transport for MonotoneMapSpec {
    fn dim(&self) -> usize {
        MonotoneMapSpec::dim(self)
    }
    fn input_support(&self) -> &SupportBox {
        self.support_in()
    }
    fn forward(&self, x: &[f64], scr: &mut Scratch) -> Result<(Vec<f64>, f64)> {
        let (y, ld) = self.eval_unchecked(x, scr);
        Ok((y, ld.iter().sum()))
    }
}

impl Trainable for MonotoneMapSpec {
    fn n_params(&self) -> usize {
        MonotoneMapSpec::n_params(self)
    }
    fn params(&self) -> Vec<f64> {
        self.theta().to_vec()
    }
    fn with_params(&self, theta: &[f64]) -> Result<Self> {
        self.with_theta(theta)
    }
    fn backprop(&self, x: &[f64], ybar: &[f64], w: f64, grad: &mut [f64], scr: &mut Scratch) {
        self.backprop_row(x, ybar, w, grad, None, scr)
    }
    fn derivative_caps(&self) -> Option<DerivativeCapReport> {
        self.derivative_cap_diagnostic(diagnostic_grid(MonotoneMapSpec::dim(self)))
            .ok()
    }
}

impl Transport for JacobianFlowSpec {
    fn dim(&self) -> usize {
        JacobianFlowSpec::dim(self)
    }
    fn input_support(&self) -> &SupportBox {
        self.support()
    }
    fn forward(&self, x: &[f64], scr: &mut Scratch) -> Result<(Vec<f64>, f64)> {
        let e = self.eval_unchecked(x, scr);
        Ok((e.y, e.logdet))
    }
}

impl Trainable for JacobianFlowSpec {
    fn n_params(&self) -> usize {
        JacobianFlowSpec::n_params(self)
    }
    fn params(&self) -> Vec<f64> {
        self.theta()
    }
    fn with_params(&self, theta: &[f64]) -> Result<Self> {
        self.with_theta(theta)
    }
    fn backprop(&self, x: &[f64], ybar: &[f64], w: f64, grad: &mut [f64], scr: &mut Scratch) {
        self.backprop_row(x, ybar, w, grad, scr)
    }
}

/// Adapter that lets any [`TriangularMap`] be scored by the objective.
pub struct Exact<'a, M: ?Sized>(pub &'a M);

impl<M: TriangularMap + ?Sized> Transport for Exact<'_, M> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn input_support(&self) -> &SupportBox {
        self.0.domain()
    }
    fn forward(&self, x: &[f64], _scr: &mut Scratch) -> Result<(Vec<f64>, f64)> {
        Ok((self.0.eval(x)?, self.0.log_det_jacobian(x)?))
    }
}

/// Which terms enter the loss.
#[derive(Debug, Clone)]
pub struct LossConfig {
    /// `g`, the density the map pushes data onto.
    pub reference: Density,
    /// `f`, needed only when its log density is added.
    pub target: Option<Density>,
    pub include_target_term: bool,
}

impl LossConfig {
    /// Loss without the `ln f` term.
    pub fn new(reference: Density) -> Self {
        Self {
            reference,
            target: None,
            include_target_term: false,
        }
    }

    /// Loss including `ln f`, so its mean is a KL divergence.
    pub fn with_target(reference: Density, target: Density) -> Self {
        Self {
            reference,
            target: Some(target),
            include_target_term: true,
        }
    }

    fn target_term(&self) -> Result<Option<&Density>> {
        match (self.include_target_term, &self.target) {
            (false, _) => Ok(None),
            (true, Some(f)) => Ok(Some(f)),
            (true, None) => Err(Error::InvalidParameter(
                "include_target_term is set but no target density was given".into(),
            )),
        }
    }
}

fn check_data(dim: usize, data: &Array2<f64>, reference: &Density) -> Result<()> {
    if data.nrows() == 0 {
        return Err(Error::EmptyData);
    }
    if data.ncols() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: data.ncols(),
        });
    }
    if reference.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: reference.dim(),
        });
    }
    Ok(())
}

/// Copies row `i` into `buf`, moving boundary values just inside the box.
fn load_row(support: &SupportBox, data: &Array2<f64>, i: usize, buf: &mut Vec<f64>) -> Result<()> {
    buf.clear();
    for (k, &v) in data.row(i).iter().enumerate() {
        let (lo, hi) = (support.lower()[k], support.upper()[k]);
        if !(v >= lo && v <= hi) {
            return Err(Error::RowOutOfSupport { row: i });
        }
        let eps = BOUNDARY_NUDGE * (hi - lo);
        buf.push(v.clamp(lo + eps, hi - eps));
    }
    Ok(())
}

fn chunk_starts(n: usize) -> Vec<usize> {
    (0..n).step_by(CHUNK_ROWS).collect()
}

fn row_value<T: Transport + ?Sized>(
    map: &T,
    reference: &Density,
    target: Option<&Density>,
    x: &[f64],
    scr: &mut Scratch,
) -> Result<f64> {
    let (y, logdet) = map.forward(x, scr)?;
    let lg = reference.log_density_extended(&y);
    if !lg.is_finite() {
        return Ok(f64::INFINITY);
    }
    let mut v = -lg - logdet;
    if let Some(f) = target {
        v += f.log_density_or_neg_inf(x);
    }
    Ok(v)
}

/// Per-row losses `psi(x_i)`, in row order.
pub fn row_losses<T: Transport + ?Sized>(
    map: &T,
    data: &Array2<f64>,
    cfg: &LossConfig,
) -> Result<Vec<f64>> {
    check_data(map.dim(), data, &cfg.reference)?;
    let target = cfg.target_term()?;
    let n = data.nrows();
    let chunks: Vec<Vec<f64>> = chunk_starts(n)
        .into_par_iter()
        .map(|start| {
            let mut scr = Scratch::default();
            let mut buf = Vec::with_capacity(map.dim());
            (start..(start + CHUNK_ROWS).min(n))
                .map(|i| {
                    load_row(map.input_support(), data, i, &mut buf)?;
                    row_value(map, &cfg.reference, target, &buf, &mut scr)
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(chunks.concat())
}

/// Mean of `psi` over the rows of `data`.
///
/// Returns `+inf` when some row is sent where `g` vanishes.
pub fn empirical_loss<T: Transport + ?Sized>(
    map: &T,
    data: &Array2<f64>,
    cfg: &LossConfig,
) -> Result<f64> {
    check_data(map.dim(), data, &cfg.reference)?;
    let target = cfg.target_term()?;
    let n = data.nrows();
    let partial: Vec<f64> = chunk_starts(n)
        .into_par_iter()
        .map(|start| {
            let mut scr = Scratch::default();
            let mut buf = Vec::with_capacity(map.dim());
            let mut s = 0.0;
            for i in start..(start + CHUNK_ROWS).min(n) {
                load_row(map.input_support(), data, i, &mut buf)?;
                s += row_value(map, &cfg.reference, target, &buf, &mut scr)?;
            }
            Ok(s)
        })
        .collect::<Result<_>>()?;
    Ok(partial.iter().sum::<f64>() / n as f64)
}

/// Loss and its gradient with respect to the map coefficients.
///
/// When the loss is infinite the gradient is returned as zeros.
pub fn loss_and_gradient<T: Trainable>(
    map: &T,
    data: &Array2<f64>,
    cfg: &LossConfig,
) -> Result<(f64, Vec<f64>)> {
    check_data(map.dim(), data, &cfg.reference)?;
    let target = cfg.target_term()?;
    let n = data.nrows();
    let np = map.n_params();
    let partial: Vec<(f64, Vec<f64>)> = chunk_starts(n)
        .into_par_iter()
        .map(|start| {
            let mut scr = Scratch::default();
            let mut buf = Vec::with_capacity(map.dim());
            let mut s = 0.0;
            let mut grad = vec![0.0; np];
            for i in start..(start + CHUNK_ROWS).min(n) {
                load_row(map.input_support(), data, i, &mut buf)?;
                let (y, logdet) = map.forward(&buf, &mut scr)?;
                let lg = cfg.reference.log_density_extended(&y);
                if !lg.is_finite() {
                    return Ok((f64::INFINITY, grad));
                }
                s += -lg - logdet;
                if let Some(f) = target {
                    s += f.log_density_or_neg_inf(&buf);
                }
                let ybar: Vec<f64> = cfg
                    .reference
                    .grad_log_density_extended(&y)?
                    .iter()
                    .map(|v| -v)
                    .collect();
                map.backprop(&buf, &ybar, -1.0, &mut grad, &mut scr);
            }
            Ok((s, grad))
        })
        .collect::<Result<_>>()?;
    let mut loss = 0.0;
    let mut grad = vec![0.0; np];
    for (s, g) in &partial {
        loss += s;
        for (a, b) in grad.iter_mut().zip(g) {
            *a += b;
        }
    }
    let inv = 1.0 / n as f64;
    if !loss.is_finite() {
        return Ok((f64::INFINITY, vec![0.0; np]));
    }
    grad.iter_mut().for_each(|g| *g *= inv);
    Ok((loss * inv, grad))
}

/// Gradient of [`empirical_loss`] alone.
pub fn loss_gradient<T: Trainable>(
    map: &T,
    data: &Array2<f64>,
    cfg: &LossConfig,
) -> Result<Vec<f64>> {
    Ok(loss_and_gradient(map, data, cfg)?.1)
}

/// Per-coordinate means of
/// `psi^k(x) = [ln f_k(x_k | x_{k+1..})] - ln g_k(S_k(x) | S_{k+1..}(x)) - ln D_k S_k(x)`.
///
/// They sum to [`empirical_loss`] up to rounding.
pub fn per_coordinate_loss(
    spec: &MonotoneMapSpec,
    data: &Array2<f64>,
    cfg: &LossConfig,
) -> Result<Vec<f64>> {
    let d = spec.dim();
    check_data(d, data, &cfg.reference)?;
    let target = cfg.target_term()?;
    let n = data.nrows();
    let partial: Vec<Vec<f64>> = chunk_starts(n)
        .into_par_iter()
        .map(|start| {
            let mut scr = Scratch::default();
            let mut buf = Vec::with_capacity(d);
            let mut acc = vec![0.0; d];
            for i in start..(start + CHUNK_ROWS).min(n) {
                load_row(spec.support_in(), data, i, &mut buf)?;
                let (y, ld) = spec.eval_unchecked(&buf, &mut scr);
                for k in 0..d {
                    let mut v = -cfg
                        .reference
                        .log_conditional_density(k, y[k], &y[k + 1..])?
                        - ld[k];
                    if let Some(f) = target {
                        v += f.log_conditional_density(k, buf[k], &buf[k + 1..])?;
                    }
                    acc[k] += v;
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut out = vec![0.0; d];
    for p in &partial {
        for (o, v) in out.iter_mut().zip(p) {
            *o += v;
        }
    }
    Ok(out.into_iter().map(|v| v / n as f64).collect())
}
