//! Target and source densities on compact boxes.
//!
//! Every density carries its support box and a smoothness profile. Gaussian
//! kinds are truncated to `mean ± 6 sd`; closed-form log densities, gradients
//! and conditional cdfs ignore the truncated mass (below `1e-8`).
//!
//! Conditional quantities follow the triangular convention: component `k`
//! conditions on the trailing coordinates `x_{k+1}, ..., x_d`.

use std::f64::consts::PI;

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{
    bisect_increasing, gauss_legendre, normal_log_pdf, std_normal_cdf, std_normal_quantile,
};
use crate::seed::SeedSpec;
use crate::smoothness::{Ordering, SmoothnessProfile};

/// Width of the Gaussian truncation box in standard deviations.
pub const GAUSSIAN_TRUNCATION: f64 = 6.0;

/// Quadrature nodes used when a conditional has no closed form.
pub const FALLBACK_QUAD_NODES: usize = 128;

const BANANA_VAR: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBox")]
pub struct SupportBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Deserialize)]
struct RawBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl TryFrom<RawBox> for SupportBox {
    type Error = Error;
    fn try_from(r: RawBox) -> Result<Self> {
        SupportBox::new(r.lower, r.upper)
    }
}

impl SupportBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if lower.is_empty() {
            return Err(Error::InvalidParameter(
                "support box has no coordinates".into(),
            ));
        }
        for k in 0..lower.len() {
            if !(lower[k] < upper[k]) || !lower[k].is_finite() || !upper[k].is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "support box coordinate {k}: need finite lower < upper, got [{}, {}]",
                    lower[k], upper[k]
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn unit(dim: usize) -> Self {
        Self {
            lower: vec![0.0; dim],
            upper: vec![1.0; dim],
        }
    }

    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn width(&self, k: usize) -> f64 {
        self.upper[k] - self.lower[k]
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| *lo <= *v && *v <= *hi)
    }

    pub fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        for (k, &v) in x.iter().enumerate() {
            if !(self.lower[k] <= v && v <= self.upper[k]) {
                return Err(Error::OutOfSupport {
                    coord: k,
                    value: v,
                    lower: self.lower[k],
                    upper: self.upper[k],
                });
            }
        }
        Ok(())
    }

    pub fn clamp(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(k, &v)| v.clamp(self.lower[k], self.upper[k]))
            .collect()
    }

    pub fn permuted(&self, ordering: &Ordering) -> Self {
        Self {
            lower: ordering.apply(&self.lower),
            upper: ordering.apply(&self.upper),
        }
    }

    /// Tail box over coordinates `k..d`.
    pub fn tail(&self, k: usize) -> Self {
        Self {
            lower: self.lower[k..].to_vec(),
            upper: self.upper[k..].to_vec(),
        }
    }

    /// Evenly spaced grid with `per_axis` points per coordinate, edges included.
    pub fn grid(&self, per_axis: usize) -> Vec<Vec<f64>> {
        let d = self.dim();
        let total = per_axis.pow(d as u32);
        (0..total)
            .map(|mut idx| {
                (0..d)
                    .map(|k| {
                        let i = idx % per_axis;
                        idx /= per_axis;
                        let t = if per_axis == 1 {
                            0.5
                        } else {
                            i as f64 / (per_axis - 1) as f64
                        };
                        self.lower[k] + t * self.width(k)
                    })
                    .collect()
            })
            .collect()
    }
}

/// Mean, standard deviations and (for two coordinates) correlation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianParams {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    #[serde(default)]
    pub rho: f64,
}

impl GaussianParams {
    pub fn new(mean: Vec<f64>, std: Vec<f64>, rho: f64) -> Result<Self> {
        if mean.len() != std.len() || mean.is_empty() {
            return Err(Error::InvalidParameter(
                "gaussian mean and std must have the same positive length".into(),
            ));
        }
        if std.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::InvalidParameter(
                "gaussian std must be positive".into(),
            ));
        }
        if !(rho.abs() < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "|rho| must be < 1, got {rho}"
            )));
        }
        if mean.len() != 2 && rho != 0.0 {
            return Err(Error::InvalidParameter(
                "correlation is only supported for two coordinates".into(),
            ));
        }
        Ok(Self { mean, std, rho })
    }

    pub fn standard(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
            rho: 0.0,
        }
    }

    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn truncation_box(&self) -> SupportBox {
        SupportBox {
            lower: self
                .mean
                .iter()
                .zip(&self.std)
                .map(|(m, s)| m - GAUSSIAN_TRUNCATION * s)
                .collect(),
            upper: self
                .mean
                .iter()
                .zip(&self.std)
                .map(|(m, s)| m + GAUSSIAN_TRUNCATION * s)
                .collect(),
        }
    }

    fn permuted(&self, o: &Ordering) -> Self {
        Self {
            mean: o.apply(&self.mean),
            std: o.apply(&self.std),
            rho: self.rho,
        }
    }

    fn log_pdf(&self, x: &[f64]) -> f64 {
        if self.rho == 0.0 {
            return x
                .iter()
                .enumerate()
                .map(|(k, &v)| normal_log_pdf(v, self.mean[k], self.std[k]))
                .sum();
        }
        let (z1, z2) = self.z2(x);
        let r = self.rho;
        let one_m = 1.0 - r * r;
        let q = (z1 * z1 - 2.0 * r * z1 * z2 + z2 * z2) / one_m;
        -0.5 * q - (2.0 * PI).ln() - (self.std[0] * self.std[1]).ln() - 0.5 * one_m.ln()
    }

    fn grad_log_pdf(&self, x: &[f64]) -> Vec<f64> {
        if self.rho == 0.0 {
            return x
                .iter()
                .enumerate()
                .map(|(k, &v)| -(v - self.mean[k]) / (self.std[k] * self.std[k]))
                .collect();
        }
        let (z1, z2) = self.z2(x);
        let r = self.rho;
        let one_m = 1.0 - r * r;
        vec![
            -(z1 - r * z2) / (one_m * self.std[0]),
            -(z2 - r * z1) / (one_m * self.std[1]),
        ]
    }

    fn z2(&self, x: &[f64]) -> (f64, f64) {
        (
            (x[0] - self.mean[0]) / self.std[0],
            (x[1] - self.mean[1]) / self.std[1],
        )
    }

    /// Mean and sd of coordinate `k` given the trailing coordinates.
    fn conditional(&self, k: usize, tail: &[f64]) -> (f64, f64) {
        if self.rho != 0.0 && k == 0 {
            let (s1, s2) = (self.std[0], self.std[1]);
            let m = self.mean[0] + self.rho * (s1 / s2) * (tail[0] - self.mean[1]);
            (m, s1 * (1.0 - self.rho * self.rho).sqrt())
        } else {
            (self.mean[k], self.std[k])
        }
    }

    /// Log density of the trailing coordinates `k..d`.
    fn log_marginal_tail(&self, k: usize, tail: &[f64]) -> f64 {
        tail.iter()
            .enumerate()
            .map(|(i, &v)| normal_log_pdf(v, self.mean[k + i], self.std[k + i]))
            .sum()
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z: Vec<f64> = (0..self.dim())
            .map(|_| rng.sample(StandardNormal))
            .collect();
        if self.rho != 0.0 {
            // x2 first, then x1 | x2
            let x2 = self.mean[1] + self.std[1] * z[1];
            let x1 = self.mean[0]
                + self.std[0] * (self.rho * z[1] + (1.0 - self.rho * self.rho).sqrt() * z[0]);
            vec![x1, x2]
        } else {
            z.iter()
                .enumerate()
                .map(|(k, &v)| self.mean[k] + self.std[k] * v)
                .collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DensityKind {
    Gaussian(GaussianParams),
    GaussianMixture {
        weights: Vec<f64>,
        components: Vec<GaussianParams>,
    },
    /// `X_2 ~ N(0, 1)`, `X_1 | X_2 ~ N(X_2^2 / 2, 1/2)`.
    Banana,
    /// `1 + prod_j sin(2 pi k_j x_j)` on the unit cube.
    Sine {
        frequencies: Vec<i64>,
    },
    UniformBox,
    /// Independent one-dimensional factors.
    Product {
        factors: Vec<Density>,
    },
    /// Coordinates of `inner` reordered by `ordering`.
    Permuted {
        inner: Box<Density>,
        ordering: Ordering,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Density {
    kind: DensityKind,
    support: SupportBox,
    smoothness: SmoothnessProfile,
}

impl Density {
    fn build(
        kind: DensityKind,
        support: SupportBox,
        smoothness: Option<SmoothnessProfile>,
    ) -> Result<Self> {
        let dim = support.dim();
        let smoothness = match smoothness {
            Some(s) => s,
            None => default_smoothness(&kind, dim)?,
        };
        if smoothness.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: smoothness.dim(),
            });
        }
        Ok(Self {
            kind,
            support,
            smoothness,
        })
    }

    pub fn gaussian(params: GaussianParams) -> Result<Self> {
        let params = GaussianParams::new(params.mean, params.std, params.rho)?;
        let support = params.truncation_box();
        Self::build(DensityKind::Gaussian(params), support, None)
    }

    pub fn standard_gaussian(dim: usize) -> Result<Self> {
        Self::gaussian(GaussianParams::standard(dim))
    }

    pub fn bivariate_gaussian(mean: [f64; 2], std: [f64; 2], rho: f64) -> Result<Self> {
        Self::gaussian(GaussianParams::new(mean.to_vec(), std.to_vec(), rho)?)
    }

    pub fn gaussian_mixture(weights: Vec<f64>, components: Vec<GaussianParams>) -> Result<Self> {
        if weights.len() != components.len() || weights.is_empty() {
            return Err(Error::InvalidParameter(
                "mixture weights/components mismatch".into(),
            ));
        }
        if weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::InvalidParameter(
                "mixture weights must be positive".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        let weights: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let dim = components[0].dim();
        let mut lower = vec![f64::INFINITY; dim];
        let mut upper = vec![f64::NEG_INFINITY; dim];
        let mut comps = Vec::with_capacity(components.len());
        for c in components {
            let c = GaussianParams::new(c.mean, c.std, c.rho)?;
            if c.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: c.dim(),
                });
            }
            let b = c.truncation_box();
            for k in 0..dim {
                lower[k] = lower[k].min(b.lower[k]);
                upper[k] = upper[k].max(b.upper[k]);
            }
            comps.push(c);
        }
        Self::build(
            DensityKind::GaussianMixture {
                weights,
                components: comps,
            },
            SupportBox::new(lower, upper)?,
            None,
        )
    }

    /// Eight equal-weight Gaussians (sd 0.5) on the circle of radius 2.
    pub fn eight_gaussians() -> Result<Self> {
        let comps = (0..8)
            .map(|i| {
                let a = i as f64 * PI / 4.0;
                GaussianParams::new(vec![2.0 * a.cos(), 2.0 * a.sin()], vec![0.5, 0.5], 0.0)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::gaussian_mixture(vec![1.0; 8], comps)
    }

    /// Two concentric rings (radii 1 and 2) of Gaussian beads, sd 0.2.
    pub fn two_circles() -> Result<Self> {
        let mut comps = Vec::new();
        for (radius, count) in [(1.0, 8usize), (2.0, 16)] {
            for i in 0..count {
                let a = 2.0 * PI * i as f64 / count as f64;
                comps.push(GaussianParams::new(
                    vec![radius * a.cos(), radius * a.sin()],
                    vec![0.2, 0.2],
                    0.0,
                )?);
            }
        }
        let n = comps.len();
        Self::gaussian_mixture(vec![1.0; n], comps)
    }

    /// Banana density on `[-4, 18] x [-5, 5]` (mass outside below `1e-6`).
    pub fn banana() -> Result<Self> {
        Self::build(
            DensityKind::Banana,
            SupportBox::new(vec![-4.0, -5.0], vec![18.0, 5.0])?,
            None,
        )
    }

    pub fn sine(frequencies: Vec<i64>) -> Result<Self> {
        if frequencies.is_empty() || frequencies.contains(&0) {
            return Err(Error::InvalidParameter(
                "sine frequencies must be nonzero integers".into(),
            ));
        }
        let d = frequencies.len();
        Self::build(DensityKind::Sine { frequencies }, SupportBox::unit(d), None)
    }

    pub fn uniform_box(support: SupportBox) -> Result<Self> {
        Self::build(DensityKind::UniformBox, support, None)
    }

    pub fn product(factors: Vec<Density>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::InvalidParameter(
                "product needs at least one factor".into(),
            ));
        }
        let mut lower = Vec::new();
        let mut upper = Vec::new();
        let mut s = Vec::new();
        for f in &factors {
            if f.dim() != 1 {
                return Err(Error::InvalidParameter(
                    "product factors must be one-dimensional".into(),
                ));
            }
            lower.push(f.support.lower[0]);
            upper.push(f.support.upper[0]);
            s.push(f.smoothness.values()[0]);
        }
        Self::build(
            DensityKind::Product { factors },
            SupportBox::new(lower, upper)?,
            Some(SmoothnessProfile::new(s)?),
        )
    }

    /// Replaces the support box (e.g. a tighter box for a mixture).
    pub fn with_support(mut self, support: SupportBox) -> Result<Self> {
        if support.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: support.dim(),
            });
        }
        if let DensityKind::Sine { .. } = self.kind {
            if support != SupportBox::unit(self.dim()) {
                return Err(Error::InvalidParameter(
                    "sine density lives on the unit cube".into(),
                ));
            }
        }
        self.support = support;
        Ok(self)
    }

    pub fn with_smoothness(mut self, s: SmoothnessProfile) -> Result<Self> {
        if s.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: s.dim(),
            });
        }
        self.smoothness = s;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.support.dim()
    }

    pub fn kind(&self) -> &DensityKind {
        &self.kind
    }

    pub fn support(&self) -> &SupportBox {
        &self.support
    }

    pub fn smoothness(&self) -> &SmoothnessProfile {
        &self.smoothness
    }

    /// Short label used in result files.
    pub fn name(&self) -> String {
        match &self.kind {
            DensityKind::Gaussian(p) if p.rho != 0.0 => format!("gaussian_rho{}", p.rho),
            DensityKind::Gaussian(_) => "gaussian".into(),
            DensityKind::GaussianMixture { components, .. } => {
                format!("mixture{}", components.len())
            }
            DensityKind::Banana => "banana".into(),
            DensityKind::Sine { frequencies } => format!(
                "sine_k{}",
                frequencies
                    .iter()
                    .map(|k| k.to_string())
                    .collect::<Vec<_>>()
                    .join("_")
            ),
            DensityKind::UniformBox => "uniform".into(),
            DensityKind::Product { .. } => "product".into(),
            DensityKind::Permuted { inner, ordering } => {
                format!("{}_perm{}", inner.name(), ordering.label())
            }
        }
    }

    /// True when the density factors over coordinates.
    pub fn is_product(&self) -> bool {
        match &self.kind {
            DensityKind::Gaussian(p) => p.rho == 0.0,
            DensityKind::UniformBox | DensityKind::Product { .. } => true,
            DensityKind::Permuted { inner, .. } => inner.is_product(),
            _ => false,
        }
    }

    /// The density of `ordering.apply(X)` for `X` with this density.
    pub fn permuted(&self, ordering: &Ordering) -> Result<Self> {
        if ordering.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: ordering.dim(),
            });
        }
        if ordering.is_identity() {
            return Ok(self.clone());
        }
        let support = self.support.permuted(ordering);
        let smoothness = Some(self.smoothness.permuted(ordering));
        let kind = match &self.kind {
            DensityKind::Gaussian(p) => DensityKind::Gaussian(p.permuted(ordering)),
            DensityKind::GaussianMixture {
                weights,
                components,
            } => DensityKind::GaussianMixture {
                weights: weights.clone(),
                components: components.iter().map(|c| c.permuted(ordering)).collect(),
            },
            DensityKind::Sine { frequencies } => DensityKind::Sine {
                frequencies: ordering.apply(frequencies),
            },
            DensityKind::UniformBox => DensityKind::UniformBox,
            DensityKind::Product { factors } => DensityKind::Product {
                factors: ordering.apply(factors),
            },
            DensityKind::Permuted {
                inner,
                ordering: first,
            } => {
                let composed =
                    Ordering::new(ordering.perm().iter().map(|&i| first.perm()[i]).collect())?;
                return inner.permuted(&composed);
            }
            DensityKind::Banana => DensityKind::Permuted {
                inner: Box::new(self.clone()),
                ordering: ordering.clone(),
            },
        };
        Self::build(kind, support, smoothness)
    }

    /// `ln f(x)`; errors outside the support and where the density vanishes.
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        self.support.check(x)?;
        self.log_density_unchecked(x)
    }

    /// `ln f(x)`, with `-inf` outside the support or on the zero set.
    pub fn log_density_or_neg_inf(&self, x: &[f64]) -> f64 {
        self.log_density(x).unwrap_or(f64::NEG_INFINITY)
    }

    /// True when the closed form extends analytically past the support box.
    pub fn is_extendable(&self) -> bool {
        match &self.kind {
            DensityKind::Gaussian(_)
            | DensityKind::GaussianMixture { .. }
            | DensityKind::Banana => true,
            DensityKind::Product { factors } => factors.iter().all(|f| f.is_extendable()),
            DensityKind::Permuted { inner, .. } => inner.is_extendable(),
            DensityKind::Sine { .. } | DensityKind::UniformBox => false,
        }
    }

    /// `ln f(x)`, continuing the closed form past the box for extendable
    /// kinds and `-inf` outside the box otherwise. Used for the reference
    /// density, so a fitted map that sends a rare point past the truncation
    /// box still has a finite loss.
    pub fn log_density_extended(&self, x: &[f64]) -> f64 {
        if self.is_extendable() && x.len() == self.dim() {
            self.log_density_unchecked(x).unwrap_or(f64::NEG_INFINITY)
        } else {
            self.log_density_or_neg_inf(x)
        }
    }

    /// Gradient matching [`Density::log_density_extended`].
    pub fn grad_log_density_extended(&self, x: &[f64]) -> Result<Vec<f64>> {
        if self.is_extendable() && x.len() == self.dim() {
            self.grad_unchecked(x)
        } else {
            self.grad_log_density(x)
        }
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        self.log_density_or_neg_inf(x).exp()
    }

    fn log_density_unchecked(&self, x: &[f64]) -> Result<f64> {
        match &self.kind {
            DensityKind::Gaussian(p) => Ok(p.log_pdf(x)),
            DensityKind::GaussianMixture {
                weights,
                components,
            } => {
                let terms: Vec<f64> = weights
                    .iter()
                    .zip(components)
                    .map(|(w, c)| w.ln() + c.log_pdf(x))
                    .collect();
                Ok(log_sum_exp(&terms))
            }
            DensityKind::Banana => Ok(banana_log_pdf(x)),
            DensityKind::Sine { frequencies } => {
                let v = sine_value(frequencies, x);
                if v <= 0.0 {
                    Err(Error::ZeroDensity)
                } else {
                    Ok(v.ln())
                }
            }
            DensityKind::UniformBox => Ok(-(0..self.dim())
                .map(|k| self.support.width(k).ln())
                .sum::<f64>()),
            DensityKind::Product { factors } => factors
                .iter()
                .zip(x)
                .map(|(f, v)| f.log_density_unchecked(std::slice::from_ref(v)))
                .sum(),
            DensityKind::Permuted { inner, ordering } => {
                inner.log_density_unchecked(&ordering.inverse().apply(x))
            }
        }
    }

    /// Gradient of `ln f` at `x`.
    pub fn grad_log_density(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.support.check(x)?;
        self.grad_unchecked(x)
    }

    fn grad_unchecked(&self, x: &[f64]) -> Result<Vec<f64>> {
        match &self.kind {
            DensityKind::Gaussian(p) => Ok(p.grad_log_pdf(x)),
            DensityKind::GaussianMixture {
                weights,
                components,
            } => {
                let terms: Vec<f64> = weights
                    .iter()
                    .zip(components)
                    .map(|(w, c)| w.ln() + c.log_pdf(x))
                    .collect();
                let lse = log_sum_exp(&terms);
                let mut g = vec![0.0; x.len()];
                for (t, c) in terms.iter().zip(components) {
                    let r = (t - lse).exp();
                    for (gi, ci) in g.iter_mut().zip(c.grad_log_pdf(x)) {
                        *gi += r * ci;
                    }
                }
                Ok(g)
            }
            DensityKind::Banana => {
                let r = (x[0] - 0.5 * x[1] * x[1]) / BANANA_VAR;
                Ok(vec![-r, r * x[1] - x[1]])
            }
            DensityKind::Sine { frequencies } => {
                let v = sine_value(frequencies, x);
                if v <= 0.0 {
                    return Err(Error::ZeroDensity);
                }
                let sines: Vec<f64> = frequencies
                    .iter()
                    .zip(x)
                    .map(|(&k, &xi)| (2.0 * PI * k as f64 * xi).sin())
                    .collect();
                Ok((0..x.len())
                    .map(|j| {
                        let w = 2.0 * PI * frequencies[j] as f64;
                        let others: f64 = sines
                            .iter()
                            .enumerate()
                            .filter(|(i, _)| *i != j)
                            .map(|(_, s)| s)
                            .product();
                        w * (w * x[j]).cos() * others / v
                    })
                    .collect())
            }
            DensityKind::UniformBox => Ok(vec![0.0; x.len()]),
            DensityKind::Product { factors } => factors
                .iter()
                .zip(x)
                .map(|(f, v)| f.grad_unchecked(std::slice::from_ref(v)).map(|g| g[0]))
                .collect(),
            DensityKind::Permuted { inner, ordering } => {
                let g = inner.grad_unchecked(&ordering.inverse().apply(x))?;
                Ok(ordering.apply(&g))
            }
        }
    }

    /// `n` i.i.d. draws, one row per draw, all inside the support.
    pub fn sample(&self, n: usize, seed: SeedSpec) -> Result<Array2<f64>> {
        if n == 0 {
            return Err(Error::InvalidParameter(
                "sample size must be positive".into(),
            ));
        }
        let d = self.dim();
        let mut rng = seed.rng();
        let mut out = Array2::zeros((n, d));
        for i in 0..n {
            let row = self.draw(&mut rng);
            for k in 0..d {
                out[[i, k]] = row[k];
            }
        }
        Ok(out)
    }

    /// One draw, rejecting anything outside the support box.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        loop {
            let x = self.draw_untruncated(rng);
            if self.support.contains(&x) {
                return x;
            }
        }
    }

    fn draw_untruncated<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match &self.kind {
            DensityKind::Gaussian(p) => p.draw(rng),
            DensityKind::GaussianMixture {
                weights,
                components,
            } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut pick = components.len() - 1;
                for (j, w) in weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        pick = j;
                        break;
                    }
                }
                components[pick].draw(rng)
            }
            DensityKind::Banana => {
                let x2: f64 = rng.sample(StandardNormal);
                let z: f64 = rng.sample(StandardNormal);
                vec![0.5 * x2 * x2 + BANANA_VAR.sqrt() * z, x2]
            }
            DensityKind::Sine { frequencies } => loop {
                // envelope 2 on the unit cube
                let x: Vec<f64> = (0..frequencies.len()).map(|_| rng.random()).collect();
                let u: f64 = rng.random();
                if 2.0 * u <= sine_value(frequencies, &x) {
                    break x;
                }
            },
            DensityKind::UniformBox => (0..self.dim())
                .map(|k| self.support.lower[k] + self.support.width(k) * rng.random::<f64>())
                .collect(),
            DensityKind::Product { factors } => factors.iter().map(|f| f.draw(rng)[0]).collect(),
            DensityKind::Permuted { inner, ordering } => ordering.apply(&inner.draw(rng)),
        }
    }

    fn check_conditional_args(&self, k: usize, tail: &[f64]) -> Result<()> {
        let d = self.dim();
        if k >= d {
            return Err(Error::InvalidParameter(format!(
                "coordinate index {k} out of range for dimension {d}"
            )));
        }
        if tail.len() != d - k - 1 {
            return Err(Error::DimensionMismatch {
                expected: d - k - 1,
                got: tail.len(),
            });
        }
        Ok(())
    }

    /// `F_k(x_k | x_{k+1..d})`, closed form where available and Gauss-Legendre
    /// quadrature otherwise. Returns exactly 0 / 1 at and beyond the edges.
    pub fn conditional_cdf(&self, k: usize, x_k: f64, tail: &[f64]) -> Result<f64> {
        self.check_conditional_args(k, tail)?;
        let (lo, hi) = (self.support.lower[k], self.support.upper[k]);
        if x_k <= lo {
            return Ok(0.0);
        }
        if x_k >= hi {
            return Ok(1.0);
        }
        let v = match self.closed_form_cdf(k, x_k, tail) {
            Some(v) => v,
            None => self.conditional_cdf_quadrature(k, x_k, tail, FALLBACK_QUAD_NODES)?,
        };
        Ok(v.clamp(0.0, 1.0))
    }

    /// `(x_k - m) / s` when the conditional of coordinate `k` is `N(m, s^2)`.
    pub fn conditional_z_score(&self, k: usize, x_k: f64, tail: &[f64]) -> Option<f64> {
        match &self.kind {
            DensityKind::Gaussian(p) => {
                let (m, s) = p.conditional(k, tail);
                Some((x_k - m) / s)
            }
            DensityKind::Banana => Some(if k == 0 {
                (x_k - 0.5 * tail[0] * tail[0]) / BANANA_VAR.sqrt()
            } else {
                x_k
            }),
            DensityKind::Product { factors } => factors[k].conditional_z_score(0, x_k, &[]),
            _ => None,
        }
    }

    /// Parameters when this is a (truncated) Gaussian.
    pub fn gaussian_params(&self) -> Option<&GaussianParams> {
        match &self.kind {
            DensityKind::Gaussian(p) => Some(p),
            _ => None,
        }
    }

    /// Quantile of coordinate `k` when the density is a product, so the
    /// marginal of `k` does not depend on other coordinates.
    pub fn product_quantile(&self, k: usize, u: f64) -> Result<f64> {
        if !self.is_product() {
            return Err(Error::Unsupported(format!(
                "{} is not a product density",
                self.name()
            )));
        }
        let (lo, hi) = (self.support.lower[k], self.support.upper[k]);
        let u = u.clamp(0.0, 1.0);
        let closed = match &self.kind {
            DensityKind::Gaussian(p) => Some(p.mean[k] + p.std[k] * std_normal_quantile(u)),
            DensityKind::UniformBox => Some(lo + u * (hi - lo)),
            _ => None,
        };
        match closed {
            Some(v) => Ok(v.clamp(lo, hi)),
            None => {
                let tail = vec![0.0; self.dim() - k - 1];
                bisect_increasing(
                    |t| self.conditional_cdf(k, t, &tail).unwrap_or(f64::NAN),
                    u,
                    lo,
                    hi,
                    1e-14 * (hi - lo),
                    200,
                )
            }
        }
    }

    /// Log marginal density of coordinate `k` for product densities.
    pub fn product_log_marginal(&self, k: usize, y: f64) -> Result<f64> {
        if !self.is_product() {
            return Err(Error::Unsupported(format!(
                "{} is not a product density",
                self.name()
            )));
        }
        let tail = vec![0.0; self.dim() - k - 1];
        self.log_conditional_density(k, y, &tail)
    }

    fn closed_form_cdf(&self, k: usize, x_k: f64, tail: &[f64]) -> Option<f64> {
        match &self.kind {
            DensityKind::Gaussian(p) => {
                let (m, s) = p.conditional(k, tail);
                Some(std_normal_cdf((x_k - m) / s))
            }
            DensityKind::GaussianMixture {
                weights,
                components,
            } => {
                let (resp, _) = mixture_tail_weights(weights, components, k, tail);
                Some(
                    resp.iter()
                        .zip(components)
                        .map(|(r, c)| {
                            let (m, s) = c.conditional(k, tail);
                            r * std_normal_cdf((x_k - m) / s)
                        })
                        .sum(),
                )
            }
            DensityKind::Banana => Some(if k == 0 {
                std_normal_cdf((x_k - 0.5 * tail[0] * tail[0]) / BANANA_VAR.sqrt())
            } else {
                std_normal_cdf(x_k)
            }),
            DensityKind::Sine { frequencies } => Some(if k == 0 {
                let prod: f64 = frequencies[1..]
                    .iter()
                    .zip(tail)
                    .map(|(&kj, &xj)| (2.0 * PI * kj as f64 * xj).sin())
                    .product();
                let w = 2.0 * PI * frequencies[0] as f64;
                x_k + prod * (1.0 - (w * x_k).cos()) / w
            } else {
                x_k
            }),
            DensityKind::UniformBox => Some((x_k - self.support.lower[k]) / self.support.width(k)),
            DensityKind::Product { factors } => factors[k].closed_form_cdf(0, x_k, &[]),
            DensityKind::Permuted { .. } => None,
        }
    }

    /// `F_k(x_k | tail)` by Gauss-Legendre quadrature of the density alone,
    /// independent of any closed form. Limited to `d <= 2`.
    pub fn conditional_cdf_quadrature(
        &self,
        k: usize,
        x_k: f64,
        tail: &[f64],
        nodes: usize,
    ) -> Result<f64> {
        self.check_conditional_args(k, tail)?;
        let (lo, hi) = (self.support.lower[k], self.support.upper[k]);
        let x_k = x_k.clamp(lo, hi);
        let q = gauss_legendre(nodes);
        match (self.dim(), k) {
            (1, 0) => {
                let f = |t: f64| self.density_inside(&[t]);
                Ok((q.integrate(lo, x_k, f) / q.integrate(lo, hi, f)).clamp(0.0, 1.0))
            }
            (2, 0) => {
                let f = |t: f64| self.density_inside(&[t, tail[0]]);
                let total = q.integrate(lo, hi, f);
                if total <= 0.0 {
                    return Err(Error::ZeroDensity);
                }
                Ok((q.integrate(lo, x_k, f) / total).clamp(0.0, 1.0))
            }
            (2, 1) => {
                let m = |t: f64| self.marginal_last_quadrature(t, nodes);
                Ok((q.integrate(lo, x_k, m) / q.integrate(lo, hi, m)).clamp(0.0, 1.0))
            }
            _ => Err(Error::Unsupported(format!(
                "quadrature conditional cdf in dimension {}",
                self.dim()
            ))),
        }
    }

    /// Density at a point of the (closed) support, zero where it vanishes.
    fn density_inside(&self, x: &[f64]) -> f64 {
        self.log_density_unchecked(x).map(f64::exp).unwrap_or(0.0)
    }

    /// `m(t) = int f(s, t) ds` over the first coordinate, for `d = 2`.
    pub fn marginal_last_quadrature(&self, t: f64, nodes: usize) -> f64 {
        let q = gauss_legendre(nodes);
        q.integrate(self.support.lower[0], self.support.upper[0], |s| {
            self.density_inside(&[s, t])
        })
    }

    /// `ln f_k(x_k | x_{k+1..d})`. Closed form for every kind except
    /// permutations without one, which fall back to quadrature for `d <= 2`.
    pub fn log_conditional_density(&self, k: usize, x_k: f64, tail: &[f64]) -> Result<f64> {
        self.check_conditional_args(k, tail)?;
        match &self.kind {
            DensityKind::Gaussian(p) => {
                let (m, s) = p.conditional(k, tail);
                Ok(normal_log_pdf(x_k, m, s))
            }
            DensityKind::GaussianMixture {
                weights,
                components,
            } => {
                let (resp, _) = mixture_tail_weights(weights, components, k, tail);
                let terms: Vec<f64> = resp
                    .iter()
                    .zip(components)
                    .map(|(r, c)| {
                        let (m, s) = c.conditional(k, tail);
                        r.ln() + normal_log_pdf(x_k, m, s)
                    })
                    .collect();
                Ok(log_sum_exp(&terms))
            }
            DensityKind::Banana => Ok(if k == 0 {
                normal_log_pdf(x_k, 0.5 * tail[0] * tail[0], BANANA_VAR.sqrt())
            } else {
                normal_log_pdf(x_k, 0.0, 1.0)
            }),
            DensityKind::Sine { .. } => {
                if k == 0 {
                    let mut x = vec![x_k];
                    x.extend_from_slice(tail);
                    self.log_density_unchecked(&x)
                } else {
                    Ok(0.0)
                }
            }
            DensityKind::UniformBox => Ok(-self.support.width(k).ln()),
            DensityKind::Product { factors } => factors[k].log_density_unchecked(&[x_k]),
            DensityKind::Permuted { .. } => match (self.dim(), k) {
                (1, 0) => self.log_density_unchecked(&[x_k]),
                (2, 0) => {
                    let m = self.marginal_last_quadrature(tail[0], FALLBACK_QUAD_NODES);
                    Ok(self.log_density_unchecked(&[x_k, tail[0]])? - m.ln())
                }
                (2, 1) => Ok(self.marginal_last_quadrature(x_k, FALLBACK_QUAD_NODES).ln()),
                _ => Err(Error::Unsupported(format!(
                    "conditional density of a permuted {}-dimensional density",
                    self.dim()
                ))),
            },
        }
    }

    /// Tensor-product Gauss-Legendre estimate of the total mass (`d <= 2`).
    pub fn quadrature_normalization(&self, nodes_per_axis: usize) -> Result<f64> {
        if nodes_per_axis < 1 {
            return Err(Error::InvalidParameter("need at least one node".into()));
        }
        let q = gauss_legendre(nodes_per_axis);
        let (lo, hi) = (self.support.lower(), self.support.upper());
        match self.dim() {
            1 => Ok(q.integrate(lo[0], hi[0], |t| self.density_inside(&[t]))),
            2 => Ok(q.integrate(lo[1], hi[1], |t| {
                q.integrate(lo[0], hi[0], |s| self.density_inside(&[s, t]))
            })),
            d => Err(Error::Unsupported(format!(
                "quadrature normalization in dimension {d}"
            ))),
        }
    }
}

fn default_smoothness(kind: &DensityKind, dim: usize) -> Result<SmoothnessProfile> {
    match kind {
        // Higher frequency means rougher: s_j = round(max|k| / |k_j|).
        DensityKind::Sine { frequencies } => {
            let kmax = frequencies
                .iter()
                .map(|k| k.unsigned_abs())
                .max()
                .unwrap_or(1) as f64;
            SmoothnessProfile::new(
                frequencies
                    .iter()
                    .map(|k| ((kmax / k.unsigned_abs() as f64).round() as u32).max(1))
                    .collect(),
            )
        }
        _ => SmoothnessProfile::constant(2, dim),
    }
}

fn sine_value(frequencies: &[i64], x: &[f64]) -> f64 {
    1.0 + frequencies
        .iter()
        .zip(x)
        .map(|(&k, &xi)| (2.0 * PI * k as f64 * xi).sin())
        .product::<f64>()
}

fn banana_log_pdf(x: &[f64]) -> f64 {
    normal_log_pdf(x[0], 0.5 * x[1] * x[1], BANANA_VAR.sqrt()) + normal_log_pdf(x[1], 0.0, 1.0)
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

/// Posterior component weights given the trailing coordinates `k+1..d`.
fn mixture_tail_weights(
    weights: &[f64],
    components: &[GaussianParams],
    k: usize,
    tail: &[f64],
) -> (Vec<f64>, f64) {
    let logs: Vec<f64> = weights
        .iter()
        .zip(components)
        .map(|(w, c)| w.ln() + c.log_marginal_tail(k + 1, tail))
        .collect();
    let lse = log_sum_exp(&logs);
    (logs.iter().map(|l| (l - lse).exp()).collect(), lse)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    fn fd_grad(den: &Density, x: &[f64], h: f64) -> Vec<f64> {
        (0..x.len())
            .map(|j| {
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[j] += h;
                xm[j] -= h;
                (den.log_density(&xp).unwrap() - den.log_density(&xm).unwrap()) / (2.0 * h)
            })
            .collect()
    }

    fn zoo() -> Vec<Density> {
        vec![
            Density::standard_gaussian(2).unwrap(),
            Density::bivariate_gaussian([0.5, -1.0], [1.5, 0.7], 0.7).unwrap(),
            Density::eight_gaussians().unwrap(),
            Density::two_circles().unwrap(),
            Density::banana().unwrap(),
            Density::sine(vec![1, 3]).unwrap(),
            Density::uniform_box(SupportBox::new(vec![0.0, -1.0], vec![2.0, 3.0]).unwrap())
                .unwrap(),
            Density::product(vec![
                Density::standard_gaussian(1).unwrap(),
                Density::sine(vec![2]).unwrap(),
            ])
            .unwrap(),
            Density::banana()
                .unwrap()
                .permuted(&Ordering::reversed(2))
                .unwrap(),
        ]
    }

    #[test]
    fn gaussian_log_density_at_origin() {
        let g = Density::standard_gaussian(2).unwrap();
        assert!((g.log_density(&[0.0, 0.0]).unwrap() + (2.0 * PI).ln()).abs() < 1e-15);
        let x = [0.3, -1.2];
        let gr = g.grad_log_density(&x).unwrap();
        assert_eq!(gr, vec![-0.3, 1.2]);
    }

    #[test]
    fn sine_log_density_examples() {
        let s = Density::sine(vec![1, 3]).unwrap();
        assert_eq!(s.log_density(&[0.0, 0.0]).unwrap(), 0.0);
        assert!((s.log_density(&[0.25, 1.0 / 12.0]).unwrap() - LN_2).abs() < 1e-12);
        // zero set: sin(2 pi x1) = 1, sin(6 pi x2) = -1
        assert!(matches!(
            s.log_density(&[0.25, 0.25]),
            Err(Error::ZeroDensity)
        ));
        assert!(matches!(
            s.log_density(&[1.5, 0.5]),
            Err(Error::OutOfSupport { .. })
        ));
        assert_eq!(s.log_density_or_neg_inf(&[1.5, 0.5]), f64::NEG_INFINITY);
    }

    #[test]
    fn uniform_gradient_is_zero() {
        let u = Density::uniform_box(SupportBox::unit(2)).unwrap();
        assert_eq!(u.grad_log_density(&[0.3, 0.9]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn gradients_match_finite_differences() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for den in zoo() {
            for _ in 0..100 {
                let x = den.draw(&mut rng);
                // keep away from edges and the sine zero set
                if den.density(&x) < 1e-3 {
                    continue;
                }
                let inner = (0..2).all(|k| {
                    x[k] - den.support().lower()[k] > 1e-3 && den.support().upper()[k] - x[k] > 1e-3
                });
                if !inner {
                    continue;
                }
                let g = den.grad_log_density(&x).unwrap();
                let fd = fd_grad(&den, &x, 1e-5);
                for (a, b) in g.iter().zip(&fd) {
                    let rel = (a - b).abs() / a.abs().max(1.0);
                    assert!(rel < 1e-6, "{}: {a} vs {b} at {x:?}", den.name());
                }
            }
        }
    }

    #[test]
    fn banana_gradient_at_origin_matches_fd() {
        let b = Density::banana().unwrap();
        let g = b.grad_log_density(&[0.0, 0.0]).unwrap();
        let fd = fd_grad(&b, &[0.0, 0.0], 1e-5);
        assert!((g[0] - fd[0]).abs() < 1e-8 && (g[1] - fd[1]).abs() < 1e-8);
    }

    #[test]
    fn normalization_by_quadrature() {
        let u = Density::uniform_box(SupportBox::unit(2)).unwrap();
        assert!((u.quadrature_normalization(64).unwrap() - 1.0).abs() < 1e-14);
        let s = Density::sine(vec![1, 3]).unwrap();
        assert!((s.quadrature_normalization(256).unwrap() - 1.0).abs() < 1e-9);
        let g = Density::standard_gaussian(2).unwrap();
        assert!((g.quadrature_normalization(256).unwrap() - 1.0).abs() < 1e-6);
        for den in zoo() {
            let z = den.quadrature_normalization(256).unwrap();
            assert!((z - 1.0).abs() < 1e-6, "{}: {z}", den.name());
        }
        let three = Density::standard_gaussian(3).unwrap();
        assert!(three.quadrature_normalization(16).is_err());
    }

    #[test]
    fn sine_marginal_is_uniform() {
        let s = Density::sine(vec![1, 3]).unwrap();
        let q = gauss_legendre(64);
        for i in 0..=20 {
            let x1 = i as f64 / 20.0;
            let m = q.integrate(0.0, 1.0, |x2| s.density_inside(&[x1, x2]));
            assert!((m - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn conditional_cdf_examples() {
        let g = Density::standard_gaussian(2).unwrap();
        for x2 in [-2.0, 0.0, 1.3] {
            assert!((g.conditional_cdf(0, 0.0, &[x2]).unwrap() - 0.5).abs() < 1e-15);
        }
        assert!(
            (g.conditional_cdf(0, 1.0, &[0.0]).unwrap() - 0.841_344_746_068_542_9).abs() < 1e-15
        );
        let s = Density::sine(vec![1, 3]).unwrap();
        let v = s.conditional_cdf(0, 0.5, &[1.0 / 12.0]).unwrap();
        assert!((v - (0.5 + 1.0 / PI)).abs() < 1e-12);
        assert!((v - 0.818_309_9).abs() < 1e-7);
        let q = s
            .conditional_cdf_quadrature(0, 0.5, &[1.0 / 12.0], 64)
            .unwrap();
        assert!((q - v).abs() < 1e-12);
        assert!(g.conditional_cdf(2, 0.0, &[]).is_err());
        assert!(g.conditional_cdf(0, 0.0, &[]).is_err());
    }

    #[test]
    fn conditional_cdf_edges_and_monotone() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for den in zoo() {
            let d = den.dim();
            for _ in 0..20 {
                let x = den.draw(&mut rng);
                for k in 0..d {
                    let tail = &x[k + 1..];
                    let (lo, hi) = (den.support().lower()[k], den.support().upper()[k]);
                    assert_eq!(den.conditional_cdf(k, lo, tail).unwrap(), 0.0);
                    assert_eq!(den.conditional_cdf(k, hi, tail).unwrap(), 1.0);
                    let mut prev = 0.0;
                    for i in 0..200 {
                        let t = lo + (hi - lo) * i as f64 / 199.0;
                        let v = den.conditional_cdf(k, t, tail).unwrap();
                        assert!(v >= prev - 1e-12, "{} k={k}", den.name());
                        prev = v;
                    }
                }
            }
        }
    }

    #[test]
    fn closed_form_cdf_matches_quadrature() {
        let dens = [
            Density::bivariate_gaussian([0.0, 0.0], [1.0, 1.0], 0.7).unwrap(),
            Density::bivariate_gaussian([0.5, -1.0], [1.5, 0.7], -0.4).unwrap(),
            Density::banana().unwrap(),
            Density::eight_gaussians().unwrap(),
        ];
        for den in &dens {
            for &(x1, x2) in &[(0.0, 0.0), (0.5, -0.3), (1.0, 1.0), (-0.8, 0.4)] {
                let a = den.conditional_cdf(0, x1, &[x2]).unwrap();
                let b = den.conditional_cdf_quadrature(0, x1, &[x2], 256).unwrap();
                assert!((a - b).abs() < 1e-6, "{} {a} {b}", den.name());
                let a2 = den.conditional_cdf(1, x2, &[]).unwrap();
                let b2 = den.conditional_cdf_quadrature(1, x2, &[], 128).unwrap();
                assert!((a2 - b2).abs() < 1e-6, "{} {a2} {b2}", den.name());
            }
        }
    }

    #[test]
    fn conditional_densities_multiply_to_joint() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for den in zoo() {
            for _ in 0..20 {
                let x = den.draw(&mut rng);
                if den.density(&x) < 1e-6 {
                    continue;
                }
                let sum: f64 = (0..den.dim())
                    .map(|k| den.log_conditional_density(k, x[k], &x[k + 1..]).unwrap())
                    .sum();
                let joint = den.log_density(&x).unwrap();
                assert!(
                    (sum - joint).abs() < 1e-9,
                    "{}: {sum} vs {joint}",
                    den.name()
                );
            }
        }
    }

    #[test]
    fn sampling_is_deterministic_and_inside() {
        for den in zoo() {
            let a = den.sample(500, SeedSpec::new(1, 2)).unwrap();
            let b = den.sample(500, SeedSpec::new(1, 2)).unwrap();
            assert_eq!(a, b);
            for row in a.rows() {
                assert!(den.support().contains(row.as_slice().unwrap()));
            }
        }
        assert!(Density::banana()
            .unwrap()
            .sample(0, SeedSpec::new(0, 0))
            .is_err());
    }

    #[test]
    fn permuted_gaussian_is_closed_form() {
        let g = Density::bivariate_gaussian([1.0, 2.0], [1.0, 3.0], 0.5).unwrap();
        let p = g.permuted(&Ordering::reversed(2)).unwrap();
        assert!(matches!(p.kind(), DensityKind::Gaussian(_)));
        let x = [0.3, 1.1];
        assert!((g.log_density(&x).unwrap() - p.log_density(&[1.1, 0.3]).unwrap()).abs() < 1e-14);
        let back = p.permuted(&Ordering::reversed(2)).unwrap();
        assert_eq!(back, g);
        let b = Density::banana()
            .unwrap()
            .permuted(&Ordering::reversed(2))
            .unwrap();
        assert_eq!(
            b.permuted(&Ordering::reversed(2)).unwrap(),
            Density::banana().unwrap()
        );
    }

    #[test]
    fn invalid_parameters() {
        assert!(Density::bivariate_gaussian([0.0, 0.0], [1.0, 1.0], 1.0).is_err());
        assert!(Density::bivariate_gaussian([0.0, 0.0], [0.0, 1.0], 0.0).is_err());
        assert!(Density::sine(vec![1, 0]).is_err());
        assert!(SupportBox::new(vec![1.0], vec![0.0]).is_err());
    }
}
