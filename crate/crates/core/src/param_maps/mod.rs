//! Parametrized monotone triangular maps and Jacobian flows.
//!
//! Component `k` of a [`MonotoneMapSpec`] is
//!
//! ```text
//! S_k(x) = a_k(x_{k+1..d}) + int_{m_k}^{x_k} rho(p_k(t, x_{k+1..d})) dt
//! ```
//!
//! with `a_k`, `p_k` tensor-product Legendre expansions on the rescaled input
//! box, `m_k` the lower box edge and `rho = exp` or `rho(p) = p^2 + 1e-6`.
//! The integral uses a fixed 20-node Gauss-Legendre rule; all derivatives are
//! derivatives of that discretization, except `D_k S_k`, which is `rho`
//! evaluated exactly at `x_k`.

mod flow;

pub use flow::{FlowBlock, FlowEval, JacobianFlowSpec};

use serde::{Deserialize, Serialize};

use crate::densities::SupportBox;
use crate::error::{Error, Result};
use crate::kr_exact::TriangularMap;
use crate::quadrature::{gauss_legendre, legendre_values, legendre_values_and_derivatives};

/// Nodes of the rule used for the monotone integral.
pub const INTEGRATION_NODES: usize = 20;

/// Lower bound added to the squared integrand.
pub const SQUARE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegrandForm {
    #[default]
    Exp,
    Square,
}

impl IntegrandForm {
    #[inline]
    pub fn rho(self, p: f64) -> f64 {
        match self {
            IntegrandForm::Exp => p.exp(),
            IntegrandForm::Square => p * p + SQUARE_FLOOR,
        }
    }

    #[inline]
    fn drho(self, p: f64) -> f64 {
        match self {
            IntegrandForm::Exp => p.exp(),
            IntegrandForm::Square => 2.0 * p,
        }
    }

    /// `rho'(p) / rho(p)`.
    #[inline]
    fn dlog_rho(self, p: f64) -> f64 {
        match self {
            IntegrandForm::Exp => 1.0,
            IntegrandForm::Square => 2.0 * p / (p * p + SQUARE_FLOOR),
        }
    }

    /// `p` with `rho(p) = v`, for `v > 0` (and `v > floor` for the square form).
    fn inverse(self, v: f64) -> f64 {
        match self {
            IntegrandForm::Exp => v.ln(),
            IntegrandForm::Square => (v - SQUARE_FLOOR).max(0.0).sqrt(),
        }
    }
}

/// Polynomial degrees of one component: `diag` in `x_k` for the integrand,
/// `tail[j]` in `x_{k+1+j}` for both the shift `a_k` and the integrand.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentDegrees {
    pub diag: usize,
    pub tail: Vec<usize>,
}

impl ComponentDegrees {
    /// Same degrees for every component of a `dim`-dimensional map.
    pub fn uniform(dim: usize, diag: usize, tail: usize) -> Vec<Self> {
        (0..dim)
            .map(|k| Self {
                diag,
                tail: vec![tail; dim - k - 1],
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Layout {
    offset: usize,
    diag: usize,
    tail_degs: Vec<usize>,
    /// Number of tail basis functions.
    n_tail: usize,
    /// Multi-indices, `n_tail * tail_degs.len()`, first tail coordinate fastest.
    multi: Vec<usize>,
}

impl Layout {
    fn n_params(&self) -> usize {
        self.n_tail * (self.diag + 2)
    }

    /// Index of the shift coefficient for tail basis `j`.
    #[inline]
    fn a_index(&self, j: usize) -> usize {
        self.offset + j
    }

    /// Index of the integrand coefficient `(i, j)`.
    #[inline]
    fn p_index(&self, i: usize, j: usize) -> usize {
        self.offset + self.n_tail + i * self.n_tail + j
    }
}

fn build_layouts(dim: usize, degrees: &[ComponentDegrees]) -> Result<(Vec<Layout>, usize)> {
    if degrees.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: degrees.len(),
        });
    }
    let mut offset = 0;
    let mut layouts = Vec::with_capacity(dim);
    for (k, deg) in degrees.iter().enumerate() {
        if deg.tail.len() != dim - k - 1 {
            return Err(Error::InvalidParameter(format!(
                "component {k} needs {} tail degrees, got {}",
                dim - k - 1,
                deg.tail.len()
            )));
        }
        let n_tail: usize = deg.tail.iter().map(|t| t + 1).product();
        let m = deg.tail.len();
        let mut multi = vec![0usize; n_tail * m];
        for idx in 0..n_tail {
            let mut r = idx;
            for (c, t) in deg.tail.iter().enumerate() {
                multi[idx * m + c] = r % (t + 1);
                r /= t + 1;
            }
        }
        let layout = Layout {
            offset,
            diag: deg.diag,
            tail_degs: deg.tail.clone(),
            n_tail,
            multi,
        };
        offset += layout.n_params();
        layouts.push(layout);
    }
    Ok((layouts, offset))
}

/// Parametrized monotone upper-triangular map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpecDocument", into = "SpecDocument")]
pub struct MonotoneMapSpec {
    dim: usize,
    support_in: SupportBox,
    support_out: SupportBox,
    degrees: Vec<ComponentDegrees>,
    form: IntegrandForm,
    theta: Vec<f64>,
    layouts: Vec<Layout>,
}

/// On-disk form of a trained map.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpecDocument {
    pub dim: usize,
    pub support_in: SupportBox,
    pub support_out: SupportBox,
    pub degrees: Vec<ComponentDegrees>,
    #[serde(default)]
    pub integrand_form: IntegrandForm,
    pub theta: Vec<f64>,
}

impl TryFrom<SpecDocument> for MonotoneMapSpec {
    type Error = Error;
    fn try_from(doc: SpecDocument) -> Result<Self> {
        let mut spec = MonotoneMapSpec::zeros(
            doc.dim,
            doc.support_in,
            doc.support_out,
            doc.degrees,
            doc.integrand_form,
        )?;
        spec.set_theta(doc.theta)?;
        Ok(spec)
    }
}

impl From<MonotoneMapSpec> for SpecDocument {
    fn from(s: MonotoneMapSpec) -> Self {
        Self {
            dim: s.dim,
            support_in: s.support_in,
            support_out: s.support_out,
            degrees: s.degrees,
            integrand_form: s.form,
            theta: s.theta,
        }
    }
}

/// Per-row scratch buffers, reused across rows.
#[derive(Default)]
pub struct Scratch {
    tail_vals: Vec<Vec<f64>>,
    tail_ders: Vec<Vec<f64>>,
    basis: Vec<f64>,
    dbasis: Vec<f64>,
    coef: Vec<f64>,
    dcoef: Vec<f64>,
    pv: Vec<f64>,
    pd: Vec<f64>,
    acc: Vec<f64>,
    acc_x: Vec<f64>,
}

/// Result of [`MonotoneMapSpec::derivative_cap_diagnostic`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeCapReport {
    /// Smallest `D_k S_k` over the grid.
    pub min_diag: f64,
    /// Largest `D_k S_k` over the grid.
    pub max_diag: f64,
    /// Largest `|d S_k / d x_j|` over the grid, per component.
    pub max_partials: Vec<f64>,
}

impl DerivativeCapReport {
    /// Smallest `M` with `1/M <= D_k S_k` and all first partials `<= M`.
    pub fn realized_m(&self) -> f64 {
        let p = self.max_partials.iter().cloned().fold(0.0, f64::max);
        p.max(1.0 / self.min_diag)
    }
}

impl MonotoneMapSpec {
    /// All coefficients zero.
    pub fn zeros(
        dim: usize,
        support_in: SupportBox,
        support_out: SupportBox,
        degrees: Vec<ComponentDegrees>,
        form: IntegrandForm,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        for b in [&support_in, &support_out] {
            if b.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: b.dim(),
                });
            }
        }
        let (layouts, n) = build_layouts(dim, &degrees)?;
        Ok(Self {
            dim,
            support_in,
            support_out,
            degrees,
            form,
            theta: vec![0.0; n],
            layouts,
        })
    }

    /// `S_k(x) = offsets[k] + scales[k] * x_k`.
    pub fn diagonal_affine(
        support_in: SupportBox,
        support_out: SupportBox,
        degrees: Vec<ComponentDegrees>,
        form: IntegrandForm,
        scales: &[f64],
        offsets: &[f64],
    ) -> Result<Self> {
        let dim = support_in.dim();
        let mut spec = Self::zeros(dim, support_in, support_out, degrees, form)?;
        if scales.len() != dim || offsets.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: scales.len().min(offsets.len()),
            });
        }
        for k in 0..dim {
            if form == IntegrandForm::Square && scales[k] <= SQUARE_FLOOR || scales[k] <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "scale {} must be positive",
                    scales[k]
                )));
            }
            let l = &spec.layouts[k];
            let (ai, pi) = (l.a_index(0), l.p_index(0, 0));
            spec.theta[ai] = offsets[k] + scales[k] * spec.support_in.lower()[k];
            spec.theta[pi] = form.inverse(scales[k]);
        }
        Ok(spec)
    }

    /// The identity map on `support_in`.
    pub fn identity(
        support_in: SupportBox,
        support_out: SupportBox,
        degrees: Vec<ComponentDegrees>,
        form: IntegrandForm,
    ) -> Result<Self> {
        let d = support_in.dim();
        Self::diagonal_affine(
            support_in,
            support_out,
            degrees,
            form,
            &vec![1.0; d],
            &vec![0.0; d],
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn support_in(&self) -> &SupportBox {
        &self.support_in
    }

    pub fn support_out(&self) -> &SupportBox {
        &self.support_out
    }

    pub fn degrees(&self) -> &[ComponentDegrees] {
        &self.degrees
    }

    pub fn form(&self) -> IntegrandForm {
        self.form
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn n_params(&self) -> usize {
        self.theta.len()
    }

    /// Range of `theta` owned by component `k`.
    pub fn component_range(&self, k: usize) -> std::ops::Range<usize> {
        let l = &self.layouts[k];
        l.offset..l.offset + l.n_params()
    }

    pub fn set_theta(&mut self, theta: Vec<f64>) -> Result<()> {
        if theta.len() != self.theta.len() {
            return Err(Error::DimensionMismatch {
                expected: self.theta.len(),
                got: theta.len(),
            });
        }
        self.theta = theta;
        Ok(())
    }

    pub fn with_theta(&self, theta: &[f64]) -> Result<Self> {
        let mut s = self.clone();
        s.set_theta(theta.to_vec())?;
        Ok(s)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    #[inline]
    fn scaled(&self, j: usize, v: f64) -> f64 {
        2.0 * (v - self.support_in.lower()[j]) / self.support_in.width(j) - 1.0
    }

    #[inline]
    fn scale_factor(&self, j: usize) -> f64 {
        2.0 / self.support_in.width(j)
    }

    /// Fills `scr.basis` (and `scr.dbasis` when `with_der`) with the tail
    /// basis of component `k` at `x`.
    fn tail_basis(&self, k: usize, x: &[f64], with_der: bool, scr: &mut Scratch) {
        let l = &self.layouts[k];
        let m = l.tail_degs.len();
        scr.tail_vals.resize_with(m, Vec::new);
        scr.tail_ders.resize_with(m, Vec::new);
        for c in 0..m {
            let j = k + 1 + c;
            let deg = l.tail_degs[c];
            scr.tail_vals[c].resize(deg + 1, 0.0);
            let s = self.scaled(j, x[j]);
            if with_der {
                scr.tail_ders[c].resize(deg + 1, 0.0);
                legendre_values_and_derivatives(
                    deg,
                    s,
                    &mut scr.tail_vals[c],
                    &mut scr.tail_ders[c],
                );
                let f = self.scale_factor(j);
                scr.tail_ders[c].iter_mut().for_each(|v| *v *= f);
            } else {
                legendre_values(deg, s, &mut scr.tail_vals[c]);
            }
        }
        scr.basis.clear();
        scr.basis.resize(l.n_tail, 1.0);
        if with_der {
            scr.dbasis.clear();
            scr.dbasis.resize(l.n_tail * m, 1.0);
        }
        for b in 0..l.n_tail {
            let idx = &l.multi[b * m..(b + 1) * m];
            let mut v = 1.0;
            for c in 0..m {
                v *= scr.tail_vals[c][idx[c]];
            }
            scr.basis[b] = v;
            if with_der {
                for c in 0..m {
                    let mut dv = scr.tail_ders[c][idx[c]];
                    for c2 in 0..m {
                        if c2 != c {
                            dv *= scr.tail_vals[c2][idx[c2]];
                        }
                    }
                    scr.dbasis[b * m + c] = dv;
                }
            }
        }
    }

    /// Integrand polynomial coefficients `c_i = sum_j beta_ij T_j` (and their
    /// tail derivatives when `with_der`).
    fn integrand_coefs(&self, k: usize, with_der: bool, scr: &mut Scratch) {
        let l = &self.layouts[k];
        let m = l.tail_degs.len();
        scr.coef.clear();
        scr.coef.resize(l.diag + 1, 0.0);
        if with_der {
            scr.dcoef.clear();
            scr.dcoef.resize((l.diag + 1) * m, 0.0);
        }
        for i in 0..=l.diag {
            let row = &self.theta[l.p_index(i, 0)..l.p_index(i, 0) + l.n_tail];
            let mut c = 0.0;
            for (b, beta) in row.iter().enumerate() {
                c += beta * scr.basis[b];
                if with_der {
                    for t in 0..m {
                        scr.dcoef[i * m + t] += beta * scr.dbasis[b * m + t];
                    }
                }
            }
            scr.coef[i] = c;
        }
    }

    fn shift_value(&self, k: usize, scr: &Scratch) -> f64 {
        let l = &self.layouts[k];
        self.theta[l.a_index(0)..l.a_index(0) + l.n_tail]
            .iter()
            .zip(&scr.basis)
            .map(|(a, b)| a * b)
            .sum()
    }

    /// `p_k` at scaled diagonal coordinate `s`, given the coefficients.
    #[inline]
    fn poly(&self, k: usize, s: f64, scr: &mut Scratch) -> f64 {
        let deg = self.layouts[k].diag;
        scr.pv.resize(deg + 1, 0.0);
        legendre_values(deg, s, &mut scr.pv);
        scr.coef.iter().zip(&scr.pv).map(|(c, p)| c * p).sum()
    }

    /// `(S_k(x), ln D_k S_k(x))` without support checks.
    pub fn component_with_log_diag(&self, k: usize, x: &[f64], scr: &mut Scratch) -> (f64, f64) {
        self.tail_basis(k, x, false, scr);
        self.integrand_coefs(k, false, scr);
        let a = self.shift_value(k, scr);
        let lo = self.support_in.lower()[k];
        let h = 0.5 * (x[k] - lo);
        let q = gauss_legendre(INTEGRATION_NODES);
        let mut integral = 0.0;
        for (z, w) in q.nodes.iter().zip(&q.weights) {
            let t = lo + h * (1.0 + z);
            let p = self.poly(k, self.scaled(k, t), scr);
            integral += w * self.form.rho(p);
        }
        let p_x = self.poly(k, self.scaled(k, x[k]), scr);
        let log_diag = match self.form {
            IntegrandForm::Exp => p_x,
            IntegrandForm::Square => self.form.rho(p_x).ln(),
        };
        (a + h * integral, log_diag)
    }

    /// `(S(x), [ln D_k S_k(x)])` without support checks.
    pub fn eval_unchecked(&self, x: &[f64], scr: &mut Scratch) -> (Vec<f64>, Vec<f64>) {
        let mut y = vec![0.0; self.dim];
        let mut ld = vec![0.0; self.dim];
        for k in 0..self.dim {
            (y[k], ld[k]) = self.component_with_log_diag(k, x, scr);
        }
        (y, ld)
    }

    /// Reverse-mode pass for `L(theta, x) = ybar . S(x) + w * sum_k ln D_k S_k(x)`.
    ///
    /// Adds `dL/dtheta` into `grad` (length `n_params`) and, when `xbar` is
    /// given, `dL/dx` into `xbar`.
    pub fn backprop_row(
        &self,
        x: &[f64],
        ybar: &[f64],
        w: f64,
        grad: &mut [f64],
        mut xbar: Option<&mut [f64]>,
        scr: &mut Scratch,
    ) {
        let q = gauss_legendre(INTEGRATION_NODES);
        let with_x = xbar.is_some();
        for k in 0..self.dim {
            let l = &self.layouts[k];
            let m = l.tail_degs.len();
            let nd = l.diag + 1;
            self.tail_basis(k, x, with_x, scr);
            self.integrand_coefs(k, with_x, scr);
            let lo = self.support_in.lower()[k];
            let h = 0.5 * (x[k] - lo);
            let sk = self.scale_factor(k);
            // acc[i] = coefficient multiplying T_j in d L / d beta_ij
            scr.acc.clear();
            scr.acc.resize(nd, 0.0);
            scr.acc_x.clear();
            scr.acc_x.resize(m, 0.0);
            let mut dsdx_k = 0.0;
            scr.pv.resize(nd, 0.0);
            scr.pd.resize(nd, 0.0);
            for (z, wq) in q.nodes.iter().zip(&q.weights) {
                let t = lo + h * (1.0 + z);
                legendre_values_and_derivatives(
                    l.diag,
                    self.scaled(k, t),
                    &mut scr.pv,
                    &mut scr.pd,
                );
                let p: f64 = scr.coef.iter().zip(&scr.pv).map(|(c, v)| c * v).sum();
                let r1 = self.form.drho(p);
                let coef = ybar[k] * h * wq * r1;
                for i in 0..nd {
                    scr.acc[i] += coef * scr.pv[i];
                }
                if with_x {
                    let dp_dt: f64 = scr
                        .coef
                        .iter()
                        .zip(&scr.pd)
                        .map(|(c, v)| c * v)
                        .sum::<f64>()
                        * sk;
                    dsdx_k += wq * (0.5 * self.form.rho(p) + h * r1 * dp_dt * 0.5 * (1.0 + z));
                    for c in 0..m {
                        let dp_dxj: f64 = (0..nd).map(|i| scr.dcoef[i * m + c] * scr.pv[i]).sum();
                        scr.acc_x[c] += h * wq * r1 * dp_dxj;
                    }
                }
            }
            legendre_values_and_derivatives(l.diag, self.scaled(k, x[k]), &mut scr.pv, &mut scr.pd);
            let p_x: f64 = scr.coef.iter().zip(&scr.pv).map(|(c, v)| c * v).sum();
            let g = w * self.form.dlog_rho(p_x);
            for i in 0..nd {
                scr.acc[i] += g * scr.pv[i];
            }
            for b in 0..l.n_tail {
                let tb = scr.basis[b];
                grad[l.a_index(b)] += ybar[k] * tb;
                for i in 0..nd {
                    grad[l.p_index(i, b)] += scr.acc[i] * tb;
                }
            }
            if let Some(xb) = xbar.as_deref_mut() {
                let dp_dxk: f64 = scr
                    .coef
                    .iter()
                    .zip(&scr.pd)
                    .map(|(c, v)| c * v)
                    .sum::<f64>()
                    * sk;
                xb[k] += ybar[k] * dsdx_k + g * dp_dxk;
                for c in 0..m {
                    let j = k + 1 + c;
                    let da: f64 = (0..l.n_tail)
                        .map(|b| self.theta[l.a_index(b)] * scr.dbasis[b * m + c])
                        .sum();
                    let dp_dxj: f64 = (0..nd).map(|i| scr.dcoef[i * m + c] * scr.pv[i]).sum();
                    xb[j] += ybar[k] * (da + scr.acc_x[c]) + g * dp_dxj;
                }
            }
        }
    }

    /// Dense `dS/dtheta` (`d x n_params`) and `d(D_k S_k)/dtheta` rows.
    pub fn param_jacobian(&self, x: &[f64]) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        self.support_in.check(x)?;
        let mut scr = Scratch::default();
        let n = self.n_params();
        let mut ds = Vec::with_capacity(self.dim);
        let mut dd = Vec::with_capacity(self.dim);
        for k in 0..self.dim {
            let mut e = vec![0.0; self.dim];
            e[k] = 1.0;
            let mut g = vec![0.0; n];
            self.backprop_row(x, &e, 0.0, &mut g, None, &mut scr);
            ds.push(g);
            // only component k's block moves ln D_k
            let zero = vec![0.0; self.dim];
            let mut gl = vec![0.0; n];
            self.backprop_row(x, &zero, 1.0, &mut gl, None, &mut scr);
            let dk = self.component_with_log_diag(k, x, &mut scr).1.exp();
            let r = self.component_range(k);
            dd.push(
                (0..n)
                    .map(|p| if r.contains(&p) { gl[p] * dk } else { 0.0 })
                    .collect(),
            );
        }
        Ok((ds, dd))
    }

    /// Full input Jacobian (rows `k`, columns `j`) at `x`.
    pub fn input_jacobian(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut scr = Scratch::default();
        let mut g = vec![0.0; self.n_params()];
        (0..self.dim)
            .map(|k| {
                let mut e = vec![0.0; self.dim];
                e[k] = 1.0;
                let mut xb = vec![0.0; self.dim];
                self.backprop_row(x, &e, 0.0, &mut g, Some(&mut xb), &mut scr);
                xb
            })
            .collect()
    }

    /// Empirical class constants over a `grid_per_axis^d` grid of the input box.
    pub fn derivative_cap_diagnostic(&self, grid_per_axis: usize) -> Result<DerivativeCapReport> {
        if grid_per_axis < 2 {
            return Err(Error::InvalidParameter(
                "grid needs at least two points per axis".into(),
            ));
        }
        let mut scr = Scratch::default();
        let mut min_diag = f64::INFINITY;
        let mut max_diag = 0.0f64;
        let mut max_partials = vec![0.0f64; self.dim];
        for x in self.support_in.grid(grid_per_axis) {
            let (_, ld) = self.eval_unchecked(&x, &mut scr);
            for v in ld {
                min_diag = min_diag.min(v.exp());
                max_diag = max_diag.max(v.exp());
            }
            for (k, row) in self.input_jacobian(&x).iter().enumerate() {
                for v in row {
                    max_partials[k] = max_partials[k].max(v.abs());
                }
            }
        }
        Ok(DerivativeCapReport {
            min_diag,
            max_diag,
            max_partials,
        })
    }
}

impl TriangularMap for MonotoneMapSpec {
    fn dim(&self) -> usize {
        self.dim
    }

    fn domain(&self) -> &SupportBox {
        &self.support_in
    }

    fn component(&self, k: usize, x: &[f64]) -> Result<f64> {
        self.support_in.check(x)?;
        Ok(self
            .component_with_log_diag(k, x, &mut Scratch::default())
            .0)
    }

    fn diag_partial(&self, k: usize, x: &[f64]) -> Result<f64> {
        self.support_in.check(x)?;
        Ok(self
            .component_with_log_diag(k, x, &mut Scratch::default())
            .1
            .exp())
    }

    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.support_in.check(x)?;
        Ok(self.eval_unchecked(x, &mut Scratch::default()).0)
    }

    fn log_det_jacobian(&self, x: &[f64]) -> Result<f64> {
        self.support_in.check(x)?;
        Ok(self
            .eval_unchecked(x, &mut Scratch::default())
            .1
            .iter()
            .sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spec(rng: &mut ChaCha8Rng, dim: usize, form: IntegrandForm) -> MonotoneMapSpec {
        let lo: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..0.0)).collect();
        let hi: Vec<f64> = lo.iter().map(|l| l + rng.random_range(1.0..4.0)).collect();
        let b = SupportBox::new(lo, hi).unwrap();
        let degrees = (0..dim)
            .map(|k| ComponentDegrees {
                diag: rng.random_range(0..4),
                tail: (k + 1..dim).map(|_| rng.random_range(0..3)).collect(),
            })
            .collect();
        let mut s = MonotoneMapSpec::zeros(dim, b.clone(), b, degrees, form).unwrap();
        let theta = (0..s.n_params())
            .map(|_| rng.random_range(-0.5..0.5))
            .collect();
        s.set_theta(theta).unwrap();
        s
    }

    fn random_point(rng: &mut ChaCha8Rng, b: &SupportBox) -> Vec<f64> {
        (0..b.dim())
            .map(|k| b.lower()[k] + b.width(k) * rng.random_range(0.02..0.98))
            .collect()
    }

    #[test]
    fn identity_examples() {
        let b = SupportBox::unit(3);
        let z = MonotoneMapSpec::zeros(
            3,
            b.clone(),
            b.clone(),
            ComponentDegrees::uniform(3, 2, 1),
            IntegrandForm::Exp,
        )
        .unwrap();
        let x = [0.2, 0.7, 0.4];
        let y = z.eval(&x).unwrap();
        for k in 0..3 {
            assert!((y[k] - x[k]).abs() < 1e-14);
            assert!((z.diag_partial(k, &x).unwrap() - 1.0).abs() < 1e-15);
        }
        let g = SupportBox::cube(2, -3.0, 3.0).unwrap();
        for form in [IntegrandForm::Exp, IntegrandForm::Square] {
            let id = MonotoneMapSpec::identity(
                g.clone(),
                g.clone(),
                ComponentDegrees::uniform(2, 1, 1),
                form,
            )
            .unwrap();
            let y = id.eval(&[-1.0, 2.5]).unwrap();
            assert!((y[0] + 1.0).abs() < 1e-12 && (y[1] - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn doubling_map() {
        let b = SupportBox::unit(1);
        let mut s = MonotoneMapSpec::zeros(
            1,
            b.clone(),
            b,
            ComponentDegrees::uniform(1, 0, 0),
            IntegrandForm::Exp,
        )
        .unwrap();
        s.set_theta(vec![0.0, 2f64.ln()]).unwrap();
        assert!((s.eval(&[0.3]).unwrap()[0] - 0.6).abs() < 1e-15);
        assert!((s.diag_partial(0, &[0.3]).unwrap() - 2.0).abs() < 1e-15);
        let rep = s.derivative_cap_diagnostic(8).unwrap();
        assert!((rep.min_diag - 2.0).abs() < 1e-14);
    }

    #[test]
    fn identity_diagnostic() {
        let b = SupportBox::unit(2);
        let s = MonotoneMapSpec::identity(
            b.clone(),
            b,
            ComponentDegrees::uniform(2, 2, 2),
            IntegrandForm::Exp,
        )
        .unwrap();
        let rep = s.derivative_cap_diagnostic(8).unwrap();
        assert!((rep.min_diag - 1.0).abs() < 1e-14);
        assert!(rep.max_partials.iter().all(|p| (p - 1.0).abs() < 1e-12));
    }

    #[test]
    fn linearization_at_identity() {
        let b = SupportBox::unit(2);
        let s = MonotoneMapSpec::zeros(
            2,
            b.clone(),
            b,
            ComponentDegrees::uniform(2, 1, 1),
            IntegrandForm::Exp,
        )
        .unwrap();
        let x = [0.5, 0.5];
        let (ds, _) = s.param_jacobian(&x).unwrap();
        let l = &s.layouts[0];
        assert!((ds[0][l.p_index(0, 0)] - 0.5).abs() < 1e-14);
        assert!((ds[0][l.a_index(0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn monotone_on_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for form in [IntegrandForm::Exp, IntegrandForm::Square] {
            let s = random_spec(&mut rng, 2, form);
            for x in s.support_in().grid(15) {
                assert!(s.diag_partial(0, &x).unwrap() > 0.0);
            }
            let rep = s.derivative_cap_diagnostic(8).unwrap();
            assert!(rep.min_diag > 0.0);
        }
    }

    #[test]
    fn diag_partial_matches_refined_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = gauss_legendre(200);
        for _ in 0..50 {
            let form = if rng.random_bool(0.5) {
                IntegrandForm::Exp
            } else {
                IntegrandForm::Square
            };
            let s = random_spec(&mut rng, 2, form);
            let x = random_point(&mut rng, s.support_in());
            let mut scr = Scratch::default();
            // refined evaluation of component 0 in x_0
            let refined = |t: f64, scr: &mut Scratch| -> f64 {
                let mut xx = x.clone();
                xx[0] = t;
                s.tail_basis(0, &xx, false, scr);
                s.integrand_coefs(0, false, scr);
                let a = s.shift_value(0, scr);
                let lo = s.support_in.lower()[0];
                let coef = scr.coef.clone();
                a + q.integrate(lo, t, |u| {
                    let mut pv = vec![0.0; coef.len()];
                    legendre_values(coef.len() - 1, s.scaled(0, u), &mut pv);
                    form.rho(coef.iter().zip(&pv).map(|(c, p)| c * p).sum())
                })
            };
            let h = 1e-5;
            let fd = (refined(x[0] + h, &mut scr) - refined(x[0] - h, &mut scr)) / (2.0 * h);
            let exact = s.diag_partial(0, &x).unwrap();
            assert!(((fd - exact) / exact).abs() < 1e-5, "{fd} {exact}");
        }
    }

    #[test]
    fn param_jacobian_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..40 {
            let form = if rng.random_bool(0.5) {
                IntegrandForm::Exp
            } else {
                IntegrandForm::Square
            };
            let dim = rng.random_range(1..=3);
            let s = random_spec(&mut rng, dim, form);
            let x = random_point(&mut rng, s.support_in());
            let (ds, dd) = s.param_jacobian(&x).unwrap();
            let h = 1e-6;
            for p in 0..s.n_params() {
                let mut tp = s.theta.clone();
                let mut tm = s.theta.clone();
                tp[p] += h;
                tm[p] -= h;
                let sp = s.with_theta(&tp).unwrap();
                let sm = s.with_theta(&tm).unwrap();
                for k in 0..dim {
                    let fd =
                        (sp.component(k, &x).unwrap() - sm.component(k, &x).unwrap()) / (2.0 * h);
                    assert!(
                        (fd - ds[k][p]).abs() <= 1e-6 * ds[k][p].abs().max(1.0),
                        "{fd} {}",
                        ds[k][p]
                    );
                    let fdd = (sp.diag_partial(k, &x).unwrap() - sm.diag_partial(k, &x).unwrap())
                        / (2.0 * h);
                    assert!(
                        (fdd - dd[k][p]).abs() <= 1e-6 * dd[k][p].abs().max(1.0),
                        "{fdd} {}",
                        dd[k][p]
                    );
                }
            }
        }
    }

    #[test]
    fn input_jacobian_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..40 {
            let form = if rng.random_bool(0.5) {
                IntegrandForm::Exp
            } else {
                IntegrandForm::Square
            };
            let dim = rng.random_range(1..=3);
            let s = random_spec(&mut rng, dim, form);
            let x = random_point(&mut rng, s.support_in());
            let jac = s.input_jacobian(&x);
            let h = 1e-6;
            let mut scr = Scratch::default();
            for j in 0..dim {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += h;
                xm[j] -= h;
                let (yp, lp) = s.eval_unchecked(&xp, &mut scr);
                let (ym, lm) = s.eval_unchecked(&xm, &mut scr);
                for k in 0..dim {
                    let fd = (yp[k] - ym[k]) / (2.0 * h);
                    assert!((fd - jac[k][j]).abs() <= 1e-6 * jac[k][j].abs().max(1.0));
                    if j < k {
                        assert_eq!(jac[k][j], 0.0);
                    }
                }
                // log-diagonal input gradient
                let mut xb = vec![0.0; dim];
                let mut g = vec![0.0; s.n_params()];
                s.backprop_row(&x, &vec![0.0; dim], 1.0, &mut g, Some(&mut xb), &mut scr);
                let fd: f64 = (lp.iter().sum::<f64>() - lm.iter().sum::<f64>()) / (2.0 * h);
                assert!((fd - xb[j]).abs() <= 1e-6 * xb[j].abs().max(1.0));
            }
        }
    }

    #[test]
    fn components_ignore_leading_coordinates() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let s = random_spec(&mut rng, 3, IntegrandForm::Exp);
        let x = random_point(&mut rng, s.support_in());
        let mut x2 = x.clone();
        x2[0] = s.support_in().lower()[0];
        x2[1] = s.support_in().upper()[1];
        assert_eq!(s.component(2, &x).unwrap(), s.component(2, &x2).unwrap());
    }

    #[test]
    fn json_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s = random_spec(&mut rng, 2, IntegrandForm::Square);
        let back = MonotoneMapSpec::from_json(&s.to_json().unwrap()).unwrap();
        assert_eq!(back, s);
        let mut doc: serde_json::Value = serde_json::from_str(&s.to_json().unwrap()).unwrap();
        doc["theta"] = serde_json::json!([1.0]);
        assert!(MonotoneMapSpec::from_json(&doc.to_string()).is_err());
    }

    #[test]
    fn out_of_support_rejected() {
        let b = SupportBox::unit(2);
        let s = MonotoneMapSpec::identity(
            b.clone(),
            b,
            ComponentDegrees::uniform(2, 1, 1),
            IntegrandForm::Exp,
        )
        .unwrap();
        assert!(matches!(
            s.eval(&[1.5, 0.0]),
            Err(Error::OutOfSupport { coord: 0, .. })
        ));
    }
}
