//! Ground-truth Knothe-Rosenblatt maps, triangular inversion and pushforward
//! densities.
//!
//! Component `k` of a KR map from `f` to `g` is
//! `S_k(x) = G_k^{-1}(F_k(x_k | x_{k+1..d}) | S_{k+1..d}(x))`.

use crate::densities::{Density, SupportBox};
use crate::error::{Error, Result};
use crate::quadrature::{bisect_increasing, gauss_legendre};
use crate::triangular::UpperTriangularMatrix;

/// Default Gauss-Legendre nodes per axis for quadrature-backed maps.
pub const DEFAULT_QUAD_NODES: usize = 64;

/// Quantile bisection iteration cap.
pub const MAX_BISECTION_ITERS: usize = 60;

/// A monotone upper-triangular map: component `k` reads only `x[k..]`.
pub trait TriangularMap: Send + Sync {
    fn dim(&self) -> usize;

    /// Box on which the map is defined.
    fn domain(&self) -> &SupportBox;

    /// `S_k(x)`; entries `x[..k]` are ignored.
    fn component(&self, k: usize, x: &[f64]) -> Result<f64>;

    /// `D_k S_k(x)`.
    fn diag_partial(&self, k: usize, x: &[f64]) -> Result<f64>;

    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        (0..self.dim()).map(|k| self.component(k, x)).collect()
    }

    /// `sum_k ln D_k S_k(x)`; errors on a nonpositive diagonal entry.
    fn log_det_jacobian(&self, x: &[f64]) -> Result<f64> {
        let mut s = 0.0;
        for k in 0..self.dim() {
            let v = self.diag_partial(k, x)?;
            if !(v > 0.0) {
                return Err(Error::NonPositiveDiagonal { k, value: v });
            }
            s += v.ln();
        }
        Ok(s)
    }
}

/// `S(x) = A x + b` with `A` upper triangular.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineTriangularMap {
    matrix: UpperTriangularMatrix,
    offset: Vec<f64>,
    domain: SupportBox,
}

impl AffineTriangularMap {
    pub fn new(
        matrix: UpperTriangularMatrix,
        offset: Vec<f64>,
        domain: SupportBox,
    ) -> Result<Self> {
        let d = matrix.dim();
        if offset.len() != d || domain.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: if offset.len() != d {
                    offset.len()
                } else {
                    domain.dim()
                },
            });
        }
        Ok(Self {
            matrix,
            offset,
            domain,
        })
    }

    pub fn identity(domain: SupportBox) -> Self {
        let d = domain.dim();
        Self {
            matrix: UpperTriangularMatrix::identity(d),
            offset: vec![0.0; d],
            domain,
        }
    }

    pub fn matrix(&self) -> &UpperTriangularMatrix {
        &self.matrix
    }

    pub fn offset(&self) -> &[f64] {
        &self.offset
    }
}

impl TriangularMap for AffineTriangularMap {
    fn dim(&self) -> usize {
        self.matrix.dim()
    }

    fn domain(&self) -> &SupportBox {
        &self.domain
    }

    fn component(&self, k: usize, x: &[f64]) -> Result<f64> {
        let d = self.dim();
        Ok((k..d).map(|j| self.matrix.get(k, j) * x[j]).sum::<f64>() + self.offset[k])
    }

    fn diag_partial(&self, k: usize, _x: &[f64]) -> Result<f64> {
        Ok(self.matrix.get(k, k))
    }
}

/// KR map to a product target `g` using `f`'s closed-form conditionals:
/// `S_k = G_k^{-1}(F_k(x_k | tail))`. When `f`'s conditional is Gaussian and
/// `g` is Gaussian the z-score is used directly, avoiding cdf round-off in
/// the tails.
#[derive(Debug, Clone)]
pub struct KrToProductMap {
    source: Density,
    target: Density,
}

impl KrToProductMap {
    pub fn new(source: Density, target: Density) -> Result<Self> {
        if source.dim() != target.dim() {
            return Err(Error::DimensionMismatch {
                expected: source.dim(),
                got: target.dim(),
            });
        }
        if !target.is_product() {
            return Err(Error::Unsupported(format!(
                "closed-form KR needs a product target, got {}",
                target.name()
            )));
        }
        Ok(Self { source, target })
    }

    pub fn source(&self) -> &Density {
        &self.source
    }

    pub fn target(&self) -> &Density {
        &self.target
    }

    fn x_k(&self, k: usize, x: &[f64]) -> f64 {
        let s = self.source.support();
        x[k].clamp(s.lower()[k], s.upper()[k])
    }
}

impl TriangularMap for KrToProductMap {
    fn dim(&self) -> usize {
        self.source.dim()
    }

    fn domain(&self) -> &SupportBox {
        self.source.support()
    }

    fn component(&self, k: usize, x: &[f64]) -> Result<f64> {
        let xk = self.x_k(k, x);
        let tail = &x[k + 1..];
        if let (Some(z), Some(gp)) = (
            self.source.conditional_z_score(k, xk, tail),
            self.target.gaussian_params(),
        ) {
            return Ok(gp.mean[k] + gp.std[k] * z);
        }
        let u = self.source.conditional_cdf(k, xk, tail)?;
        self.target.product_quantile(k, u)
    }

    fn diag_partial(&self, k: usize, x: &[f64]) -> Result<f64> {
        let xk = self.x_k(k, x);
        let tail = &x[k + 1..];
        let lf = self.source.log_conditional_density(k, xk, tail)?;
        let y = self.component(k, x)?;
        let lg = self.target.product_log_marginal(k, y)?;
        Ok((lf - lg).exp())
    }
}

/// KR map built only from the two densities: `F_k` by Gauss-Legendre
/// quadrature of `f`'s conditional density, `G_k^{-1}` by bisection on `g`'s
/// conditional cdf. Limited to `d <= 2`.
#[derive(Debug, Clone)]
pub struct NumericalKrMap {
    source: Density,
    target: Density,
    nodes: usize,
    bisect_tol: f64,
    /// Total mass of `f`'s last-coordinate marginal under the rule (d = 2).
    source_mass: f64,
}

impl NumericalKrMap {
    fn source_marginal(&self, t: f64) -> f64 {
        self.source.marginal_last_quadrature(t, self.nodes)
    }

    /// `F_k(x_k | tail)` by quadrature.
    fn source_cdf(&self, k: usize, xk: f64, tail: &[f64]) -> Result<f64> {
        let sup = self.source.support();
        let (lo, hi) = (sup.lower()[k], sup.upper()[k]);
        let xk = xk.clamp(lo, hi);
        let q = gauss_legendre(self.nodes);
        let v = match (self.dim(), k) {
            (1, 0) => q.integrate(lo, xk, |t| self.source.density(&[t])) / self.source_mass,
            (2, 0) => {
                let m = self.source_marginal(tail[0]);
                if !(m > 0.0) {
                    return Err(Error::ZeroDensity);
                }
                q.integrate(lo, xk, |s| self.source.density(&[s, tail[0]])) / m
            }
            _ => q.integrate(lo, xk, |t| self.source_marginal(t)) / self.source_mass,
        };
        Ok(v.clamp(0.0, 1.0))
    }

    fn source_conditional_density(&self, k: usize, xk: f64, tail: &[f64]) -> f64 {
        match (self.dim(), k) {
            (1, 0) => self.source.density(&[xk]) / self.source_mass,
            (2, 0) => self.source.density(&[xk, tail[0]]) / self.source_marginal(tail[0]),
            _ => self.source_marginal(xk) / self.source_mass,
        }
    }

    /// Target image of coordinates `k..d` (so `S_k` and its tail).
    fn image_tail(&self, k: usize, x: &[f64]) -> Result<Vec<f64>> {
        let d = self.dim();
        let mut y = vec![0.0; d - k];
        for j in (k..d).rev() {
            let u = self.source_cdf(j, x[j], &x[j + 1..])?;
            let (lo, hi) = (
                self.target.support().lower()[j],
                self.target.support().upper()[j],
            );
            let tail_y = y[j + 1 - k..].to_vec();
            y[j - k] = bisect_increasing(
                |t| {
                    self.target
                        .conditional_cdf(j, t, &tail_y)
                        .unwrap_or(f64::NAN)
                },
                u,
                lo,
                hi,
                self.bisect_tol,
                MAX_BISECTION_ITERS,
            )?;
        }
        Ok(y)
    }
}

impl TriangularMap for NumericalKrMap {
    fn dim(&self) -> usize {
        self.source.dim()
    }

    fn domain(&self) -> &SupportBox {
        self.source.support()
    }

    fn component(&self, k: usize, x: &[f64]) -> Result<f64> {
        Ok(self.image_tail(k, x)?[0])
    }

    fn diag_partial(&self, k: usize, x: &[f64]) -> Result<f64> {
        let y = self.image_tail(k, x)?;
        let fk = self.source_conditional_density(k, x[k], &x[k + 1..]);
        let lg = self.target.log_conditional_density(k, y[0], &y[1..])?;
        Ok(fk / lg.exp())
    }
}

/// `S + shift`, used for deliberately misspecified maps.
pub struct ShiftedMap<M> {
    pub inner: M,
    pub shift: Vec<f64>,
}

impl<M: TriangularMap> TriangularMap for ShiftedMap<M> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn domain(&self) -> &SupportBox {
        self.inner.domain()
    }

    fn component(&self, k: usize, x: &[f64]) -> Result<f64> {
        Ok(self.inner.component(k, x)? + self.shift[k])
    }

    fn diag_partial(&self, k: usize, x: &[f64]) -> Result<f64> {
        self.inner.diag_partial(k, x)
    }
}

/// Any exact construction.
#[derive(Debug, Clone)]
pub enum ExactKrMap {
    Affine(AffineTriangularMap),
    Closed(KrToProductMap),
    Numerical(NumericalKrMap),
}

impl ExactKrMap {
    fn inner(&self) -> &dyn TriangularMap {
        match self {
            ExactKrMap::Affine(m) => m,
            ExactKrMap::Closed(m) => m,
            ExactKrMap::Numerical(m) => m,
        }
    }
}

impl TriangularMap for ExactKrMap {
    fn dim(&self) -> usize {
        self.inner().dim()
    }

    fn domain(&self) -> &SupportBox {
        self.inner().domain()
    }

    fn component(&self, k: usize, x: &[f64]) -> Result<f64> {
        self.inner().component(k, x)
    }

    fn diag_partial(&self, k: usize, x: &[f64]) -> Result<f64> {
        self.inner().diag_partial(k, x)
    }
}

/// Affine KR map between Gaussians (two coordinates with correlation, or
/// diagonal in any dimension).
pub fn gaussian_to_gaussian_kr(source: &Density, target: &Density) -> Result<ExactKrMap> {
    let (f, g) = match (source.gaussian_params(), target.gaussian_params()) {
        (Some(f), Some(g)) => (f, g),
        _ => {
            return Err(Error::InvalidParameter(
                "gaussian_to_gaussian_kr needs Gaussian source and target".into(),
            ))
        }
    };
    let d = source.dim();
    if target.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: target.dim(),
        });
    }
    if f.rho.abs() >= 1.0 || g.rho.abs() >= 1.0 {
        return Err(Error::InvalidParameter("|rho| must be < 1".into()));
    }
    // conditional mean slope c and conditional sd s of coordinate k
    let slope_sd = |p: &crate::densities::GaussianParams, k: usize| -> (f64, f64) {
        if k == 0 && d == 2 && p.rho != 0.0 {
            (
                p.rho * p.std[0] / p.std[1],
                p.std[0] * (1.0 - p.rho * p.rho).sqrt(),
            )
        } else {
            (0.0, p.std[k])
        }
    };
    let mut rows = vec![vec![0.0; d]; d];
    let mut offset = vec![0.0; d];
    for k in (0..d).rev() {
        let (cf, sf) = slope_sd(f, k);
        let (cg, sg) = slope_sd(g, k);
        let r = sg / sf;
        // S_k = mu_g,k + cg (S_{k+1} - mu_g,k+1) + r (x_k - mu_f,k - cf (x_{k+1} - mu_f,k+1))
        rows[k][k] = r;
        offset[k] = g.mean[k] - r * f.mean[k];
        if cf != 0.0 || cg != 0.0 {
            let next = rows[k + 1].clone();
            for j in k + 1..d {
                rows[k][j] += cg * next[j];
            }
            rows[k][k + 1] -= r * cf;
            offset[k] += cg * (offset[k + 1] - g.mean[k + 1]) + r * cf * f.mean[k + 1];
        }
    }
    Ok(ExactKrMap::Affine(AffineTriangularMap::new(
        UpperTriangularMatrix::from_rows(&rows)?,
        offset,
        source.support().clone(),
    )?))
}

/// KR map to the uniform density on the unit cube: the conditional cdfs.
pub fn rosenblatt_transform(f: &Density) -> Result<ExactKrMap> {
    let g = Density::uniform_box(SupportBox::unit(f.dim()))?;
    Ok(ExactKrMap::Closed(KrToProductMap::new(f.clone(), g)?))
}

/// KR map to a product target through `f`'s closed-form conditionals.
pub fn closed_form_kr(f: &Density, g: &Density) -> Result<ExactKrMap> {
    if f.gaussian_params().is_some() && g.gaussian_params().is_some() {
        return gaussian_to_gaussian_kr(f, g);
    }
    Ok(ExactKrMap::Closed(KrToProductMap::new(
        f.clone(),
        g.clone(),
    )?))
}

/// KR map from quadrature and bisection alone (`d <= 2`).
pub fn numerical_kr(
    f: &Density,
    g: &Density,
    quad_nodes: usize,
    bisect_tol: f64,
) -> Result<ExactKrMap> {
    let d = f.dim();
    if d > 2 {
        return Err(Error::Unsupported(format!("numerical KR in dimension {d}")));
    }
    if g.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: g.dim(),
        });
    }
    if !(bisect_tol >= 1e-12) {
        return Err(Error::InvalidParameter(format!(
            "bisect_tol must be >= 1e-12, got {bisect_tol}"
        )));
    }
    if quad_nodes < 2 {
        return Err(Error::InvalidParameter(
            "need at least two quadrature nodes".into(),
        ));
    }
    let q = gauss_legendre(quad_nodes);
    let sup = f.support();
    let k = d - 1;
    let source_mass = if d == 1 {
        q.integrate(sup.lower()[0], sup.upper()[0], |t| f.density(&[t]))
    } else {
        q.integrate(sup.lower()[k], sup.upper()[k], |t| {
            f.marginal_last_quadrature(t, quad_nodes)
        })
    };
    if !(source_mass > 0.0) {
        return Err(Error::ZeroDensity);
    }
    Ok(ExactKrMap::Numerical(NumericalKrMap {
        source: f.clone(),
        target: g.clone(),
        nodes: quad_nodes,
        bisect_tol,
        source_mass,
    }))
}

/// Solves `S(x) = y` by back-substitution, `x_d` first. Each slice is solved
/// by Newton steps safeguarded by bisection on the domain interval.
pub fn invert_triangular_map(map: &dyn TriangularMap, y: &[f64], tol: f64) -> Result<Vec<f64>> {
    let d = map.dim();
    if y.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: y.len(),
        });
    }
    let dom = map.domain();
    let mut x = dom.lower().to_vec();
    for k in (0..d).rev() {
        let (lo, hi) = (dom.lower()[k], dom.upper()[k]);
        let h = |t: f64, x: &mut Vec<f64>| -> Result<f64> {
            x[k] = t;
            Ok(map.component(k, x)? - y[k])
        };
        let hlo = h(lo, &mut x)?;
        let hhi = h(hi, &mut x)?;
        if hlo > tol || hhi < -tol {
            return Err(Error::BracketFailure {
                level: y[k],
                lower: hlo + y[k],
                upper: hhi + y[k],
            });
        }
        if hlo >= 0.0 {
            x[k] = lo;
            continue;
        }
        if hhi <= 0.0 {
            x[k] = hi;
            continue;
        }
        let (mut a, mut b) = (lo, hi);
        let mut t = 0.5 * (a + b);
        for _ in 0..200 {
            let v = h(t, &mut x)?;
            if v == 0.0 {
                break;
            }
            if v < 0.0 {
                a = t;
            } else {
                b = t;
            }
            if b - a <= 4.0 * f64::EPSILON * a.abs().max(b.abs()).max(1.0) {
                break;
            }
            x[k] = t;
            let slope = map.diag_partial(k, &x)?;
            let newton = t - v / slope;
            let next = if slope > 0.0 && newton > a && newton < b {
                newton
            } else {
                0.5 * (a + b)
            };
            if (next - t).abs() <= 1e-15 * t.abs().max(1.0) && v.abs() <= tol {
                t = next;
                break;
            }
            t = next;
        }
        x[k] = t;
    }
    Ok(x)
}

/// `ln[g(S(x)) prod_k D_k S_k(x)]`, `-inf` when `S(x)` leaves `g`'s support.
pub fn log_pushforward_density(map: &dyn TriangularMap, g: &Density, x: &[f64]) -> Result<f64> {
    let logdet = map.log_det_jacobian(x)?;
    let y = map.eval(x)?;
    Ok(g.log_density_or_neg_inf(&y) + logdet)
}

/// `g(S(x)) prod_k D_k S_k(x)`: the density that `S` pulls `g` back to.
pub fn pushforward_density(map: &dyn TriangularMap, g: &Density, x: &[f64]) -> Result<f64> {
    Ok(log_pushforward_density(map, g, x)?.exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::SeedSpec;

    fn gauss07() -> Density {
        Density::bivariate_gaussian([0.0, 0.0], [1.0, 1.0], 0.7).unwrap()
    }

    #[test]
    fn gaussian_closed_form_examples() {
        let g = Density::standard_gaussian(2).unwrap();
        let id = gaussian_to_gaussian_kr(&g, &g).unwrap();
        assert_eq!(id.eval(&[0.3, -1.2]).unwrap(), vec![0.3, -1.2]);
        let s = gaussian_to_gaussian_kr(&gauss07(), &g).unwrap();
        let y = s.eval(&[1.0, 1.0]).unwrap();
        assert!((y[0] - 0.3 / 0.51f64.sqrt()).abs() < 1e-14);
        assert!((y[0] - 0.420_084_0).abs() < 1e-7);
        assert!((y[1] - 1.0).abs() < 1e-15);
        assert_eq!(s.eval(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn gaussian_general_moments_match_z_score_map() {
        let f = Density::bivariate_gaussian([0.5, -1.0], [1.5, 0.7], -0.4).unwrap();
        let g = Density::standard_gaussian(2).unwrap();
        let aff = gaussian_to_gaussian_kr(&f, &g).unwrap();
        let closed = KrToProductMap::new(f.clone(), g).unwrap();
        for x in [[0.0, 0.0], [1.0, -2.0], [3.0, 0.5]] {
            let a = aff.eval(&x).unwrap();
            let b = closed.eval(&x).unwrap();
            assert!((a[0] - b[0]).abs() < 1e-13 && (a[1] - b[1]).abs() < 1e-13);
        }
        // between two non-standard Gaussians, S pushes f onto g: check moments of S(X)
        let g2 = Density::bivariate_gaussian([2.0, 1.0], [0.5, 2.0], 0.3).unwrap();
        let s = gaussian_to_gaussian_kr(&f, &g2).unwrap();
        let xs = f.sample(50_000, SeedSpec::new(3, 0)).unwrap();
        let ys: Vec<Vec<f64>> = xs
            .rows()
            .into_iter()
            .map(|r| s.eval(r.as_slice().unwrap()).unwrap())
            .collect();
        let n = ys.len() as f64;
        let m0 = ys.iter().map(|y| y[0]).sum::<f64>() / n;
        let m1 = ys.iter().map(|y| y[1]).sum::<f64>() / n;
        let c = ys.iter().map(|y| (y[0] - m0) * (y[1] - m1)).sum::<f64>() / n;
        assert!((m0 - 2.0).abs() < 0.02 && (m1 - 1.0).abs() < 0.05);
        assert!((c - 0.3 * 0.5 * 2.0).abs() < 0.03, "cov {c}");
    }

    #[test]
    fn rejects_non_gaussian() {
        let b = Density::banana().unwrap();
        let g = Density::standard_gaussian(2).unwrap();
        assert!(gaussian_to_gaussian_kr(&b, &g).is_err());
    }

    #[test]
    fn rosenblatt_examples() {
        let u = Density::uniform_box(SupportBox::unit(2)).unwrap();
        let r = rosenblatt_transform(&u).unwrap();
        assert_eq!(r.eval(&[0.3, 0.8]).unwrap(), vec![0.3, 0.8]);
        let g = Density::standard_gaussian(2).unwrap();
        assert_eq!(
            rosenblatt_transform(&g).unwrap().eval(&[0.0, 0.0]).unwrap(),
            vec![0.5, 0.5]
        );
        let s = Density::sine(vec![1, 3]).unwrap();
        let y = rosenblatt_transform(&s)
            .unwrap()
            .eval(&[0.5, 1.0 / 12.0])
            .unwrap();
        assert!((y[0] - 0.818_309_9).abs() < 1e-7);
        assert!((y[1] - 1.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn numerical_identity_on_uniform() {
        let u = Density::uniform_box(SupportBox::unit(2)).unwrap();
        let m = numerical_kr(&u, &u, 64, 1e-12).unwrap();
        for x in [[0.1, 0.2], [0.9, 0.5], [0.5, 0.99]] {
            let y = m.eval(&x).unwrap();
            assert!((y[0] - x[0]).abs() < 1e-11 && (y[1] - x[1]).abs() < 1e-11);
        }
        assert!(numerical_kr(&u, &u, 64, 1e-14).is_err());
        let three = Density::standard_gaussian(3).unwrap();
        assert!(numerical_kr(&three, &three, 64, 1e-12).is_err());
    }

    #[test]
    fn numerical_matches_closed_form_gaussian() {
        let f = gauss07();
        let g = Density::standard_gaussian(2).unwrap();
        let exact = gaussian_to_gaussian_kr(&f, &g).unwrap();
        let num = numerical_kr(&f, &g, DEFAULT_QUAD_NODES, 1e-12).unwrap();
        let mut worst = 0.0f64;
        for i in 0..6 {
            for j in 0..6 {
                let x = [-1.5 + 3.0 * i as f64 / 5.0, -1.5 + 3.0 * j as f64 / 5.0];
                let a = exact.eval(&x).unwrap();
                let b = num.eval(&x).unwrap();
                worst = worst.max((a[0] - b[0]).abs()).max((a[1] - b[1]).abs());
                let da = exact.diag_partial(0, &x).unwrap();
                let db = num.diag_partial(0, &x).unwrap();
                assert!((da - db).abs() < 1e-6, "{da} {db}");
            }
        }
        assert!(worst < 1e-6, "{worst}");
    }

    #[test]
    fn inversion_examples() {
        let a = AffineTriangularMap::new(
            UpperTriangularMatrix::from_rows(&[vec![2.0, 1.0], vec![0.0, 3.0]]).unwrap(),
            vec![0.0, 0.0],
            SupportBox::cube(2, -10.0, 10.0).unwrap(),
        )
        .unwrap();
        let x = invert_triangular_map(&a, &[5.0, 3.0], 1e-12).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
        let id = AffineTriangularMap::identity(SupportBox::cube(2, -1.0, 1.0).unwrap());
        assert_eq!(
            invert_triangular_map(&id, &[0.25, -0.5], 1e-12).unwrap(),
            vec![0.25, -0.5]
        );
        assert!(matches!(
            invert_triangular_map(&id, &[3.0, 0.0], 1e-12),
            Err(Error::BracketFailure { .. })
        ));
    }

    #[test]
    fn gaussian_round_trip() {
        use rand::{Rng, SeedableRng};
        let f = gauss07();
        let g = Density::standard_gaussian(2).unwrap();
        let s = gaussian_to_gaussian_kr(&f, &g).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let x = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
            let y = s.eval(&x).unwrap();
            let back = invert_triangular_map(&s, &y, 1e-12).unwrap();
            assert!((back[0] - x[0]).abs() < 1e-10 && (back[1] - x[1]).abs() < 1e-10);
        }
    }

    #[test]
    fn pushforward_examples() {
        let g = Density::standard_gaussian(2).unwrap();
        let id = AffineTriangularMap::identity(g.support().clone());
        let x = [0.3, -0.7];
        assert!((pushforward_density(&id, &g, &x).unwrap() - g.density(&x)).abs() < 1e-15);

        let scale = AffineTriangularMap::new(
            UpperTriangularMatrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 1.0]]).unwrap(),
            vec![0.0, 0.0],
            SupportBox::unit(2),
        )
        .unwrap();
        let u =
            Density::uniform_box(SupportBox::new(vec![0.0, 0.0], vec![2.0, 1.0]).unwrap()).unwrap();
        assert!((pushforward_density(&scale, &u, &[0.3, 0.4]).unwrap() - 1.0).abs() < 1e-15);

        let f = gauss07();
        let s = gaussian_to_gaussian_kr(&f, &g).unwrap();
        for i in 0..10 {
            for j in 0..10 {
                let x = [-3.0 + 6.0 * i as f64 / 9.0, -3.0 + 6.0 * j as f64 / 9.0];
                assert!((pushforward_density(&s, &g, &x).unwrap() - f.density(&x)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn nonpositive_diagonal_is_reported() {
        let flip = AffineTriangularMap::new(
            UpperTriangularMatrix::from_rows(&[vec![-1.0, 0.0], vec![0.0, 1.0]]).unwrap(),
            vec![0.0, 0.0],
            SupportBox::unit(2),
        )
        .unwrap();
        let u = Density::uniform_box(SupportBox::unit(2)).unwrap();
        assert!(matches!(
            pushforward_density(&flip, &u, &[0.5, 0.5]),
            Err(Error::NonPositiveDiagonal { k: 0, .. })
        ));
    }

    #[test]
    fn components_ignore_leading_coordinates() {
        let maps: Vec<ExactKrMap> = vec![
            gaussian_to_gaussian_kr(&gauss07(), &Density::standard_gaussian(2).unwrap()).unwrap(),
            closed_form_kr(
                &Density::banana().unwrap(),
                &Density::standard_gaussian(2).unwrap(),
            )
            .unwrap(),
            rosenblatt_transform(&Density::sine(vec![1, 3]).unwrap()).unwrap(),
        ];
        for m in &maps {
            let x = [0.4, 0.3];
            let base = m.component(1, &x).unwrap();
            assert_eq!(m.component(1, &[0.1, 0.3]).unwrap(), base);
            assert!(m.diag_partial(0, &x).unwrap() > 0.0);
        }
    }
}
