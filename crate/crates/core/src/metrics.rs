//! Evaluation of fitted maps: held-out likelihood, KL estimates, map errors
//! against exact oracles, and log-log rate fits.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::densities::{Density, SupportBox};
use crate::error::{Error, Result};
use crate::kr_exact::TriangularMap;
use crate::objective::{empirical_loss, row_losses, LossConfig, Transport};
use crate::seed::SeedSpec;

/// Default grid resolution for [`sup_grid_error`].
pub const DEFAULT_GRID_PER_AXIS: usize = 50;

/// z-value of the two-sided 95% normal interval.
const Z95: f64 = 1.96;

/// Sample mean and its standard error (0 for a single value).
pub fn mean_and_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = v.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Median; averages the two middle values for even lengths.
pub fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    }
}

/// A mean with its Monte Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn from_samples(v: &[f64]) -> Self {
        let (value, stderr) = mean_and_stderr(v);
        Self { value, stderr }
    }
}

/// Held-out negative log-likelihood, `-mean ln (S^# g)(x)`.
pub fn test_nll<T: Transport + ?Sized>(
    map: &T,
    test_data: &Array2<f64>,
    g: &Density,
) -> Result<f64> {
    empirical_loss(map, test_data, &LossConfig::new(g.clone()))
}

/// Monte Carlo estimate of `KL(f || S^# g)` from `n_mc` fresh draws of `f`.
pub fn mc_kl_between<T: Transport + ?Sized>(
    map: &T,
    f: &Density,
    g: &Density,
    n_mc: usize,
    seed: SeedSpec,
) -> Result<Estimate> {
    let data = f.sample(n_mc, seed)?;
    mc_kl_on(map, f, g, &data)
}

/// As [`mc_kl_between`] on a given sample of `f`.
pub fn mc_kl_on<T: Transport + ?Sized>(
    map: &T,
    f: &Density,
    g: &Density,
    data: &Array2<f64>,
) -> Result<Estimate> {
    let v = row_losses(map, data, &LossConfig::with_target(g.clone(), f.clone()))?;
    Ok(Estimate::from_samples(&v))
}

/// `max_k max_grid |S_k - S*_k|` on a regular grid over `grid_box`
/// (default: the fitted map's domain).
pub fn sup_grid_error(
    fitted: &dyn TriangularMap,
    oracle: &dyn TriangularMap,
    grid_per_axis: usize,
    grid_box: Option<&SupportBox>,
) -> Result<f64> {
    check_dims(fitted, oracle)?;
    let b = grid_box.unwrap_or(fitted.domain());
    worst_error(fitted, oracle, b.grid(grid_per_axis.max(2)))
}

/// Sup error over the grid points where `f` is at least `level` times its
/// largest grid value.
///
/// Far out in the tails of a truncated box the data say nothing about the
/// map, so the plain grid error there measures extrapolation rather than fit.
pub fn sup_grid_error_above_level(
    fitted: &dyn TriangularMap,
    oracle: &dyn TriangularMap,
    f: &Density,
    grid_per_axis: usize,
    level: f64,
) -> Result<f64> {
    check_dims(fitted, oracle)?;
    if !(level > 0.0 && level <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "density level must lie in (0, 1], got {level}"
        )));
    }
    let grid = fitted.domain().grid(grid_per_axis.max(2));
    let logf: Vec<f64> = grid.iter().map(|x| f.log_density_or_neg_inf(x)).collect();
    let cut = logf.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + level.ln();
    worst_error(
        fitted,
        oracle,
        grid.into_iter()
            .zip(logf)
            .filter(|(_, l)| *l >= cut)
            .map(|(x, _)| x),
    )
}

fn check_dims(fitted: &dyn TriangularMap, oracle: &dyn TriangularMap) -> Result<()> {
    if fitted.dim() != oracle.dim() {
        return Err(Error::DimensionMismatch {
            expected: fitted.dim(),
            got: oracle.dim(),
        });
    }
    Ok(())
}

fn worst_error(
    fitted: &dyn TriangularMap,
    oracle: &dyn TriangularMap,
    points: impl IntoIterator<Item = Vec<f64>>,
) -> Result<f64> {
    let mut worst = 0.0f64;
    for x in points {
        let (a, e) = (fitted.eval(&x)?, oracle.eval(&x)?);
        for (p, q) in a.iter().zip(&e) {
            worst = worst.max((p - q).abs());
        }
    }
    Ok(worst)
}

/// Monte Carlo estimate of
/// `sum_k E_f[(S_k - S*_k)^2 + (D_k S_k - D_k S*_k)^2]`.
pub fn sobolev_error(
    fitted: &dyn TriangularMap,
    oracle: &dyn TriangularMap,
    f: &Density,
    n_mc: usize,
    seed: SeedSpec,
) -> Result<Estimate> {
    let data = f.sample(n_mc, seed)?;
    sobolev_error_on(fitted, oracle, &data)
}

/// As [`sobolev_error`] on a given sample.
pub fn sobolev_error_on(
    fitted: &dyn TriangularMap,
    oracle: &dyn TriangularMap,
    data: &Array2<f64>,
) -> Result<Estimate> {
    let d = fitted.dim();
    if oracle.dim() != d || data.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: data.ncols(),
        });
    }
    let mut v = Vec::with_capacity(data.nrows());
    for row in data.rows() {
        let x = fitted.domain().clamp(&row.to_vec());
        let mut s = 0.0;
        for k in 0..d {
            let dv = fitted.component(k, &x)? - oracle.component(k, &x)?;
            let dd = fitted.diag_partial(k, &x)? - oracle.diag_partial(k, &x)?;
            s += dv * dv + dd * dd;
        }
        v.push(s);
    }
    Ok(Estimate::from_samples(&v))
}

/// Replicate summary at one sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub n: usize,
    pub median: f64,
    pub mean: f64,
    /// `mean -/+ 1.96 * stderr`.
    pub ci_low: f64,
    pub ci_high: f64,
    pub replicates: usize,
}

/// Least-squares line through `(ln n, ln median loss)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCurve {
    pub sample_sizes: Vec<usize>,
    pub losses: Vec<Vec<f64>>,
    pub points: Vec<RatePoint>,
    pub slope: f64,
    pub intercept: f64,
    pub residuals: Vec<f64>,
}

/// Fits `ln median = intercept + slope * ln n`.
pub fn fit_loglog_slope(ns: &[usize], per_n_losses: &[Vec<f64>]) -> Result<RateCurve> {
    if ns.len() != per_n_losses.len() {
        return Err(Error::DimensionMismatch {
            expected: ns.len(),
            got: per_n_losses.len(),
        });
    }
    if ns.len() < 3 || ns.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter(
            "need at least three strictly increasing sample sizes".into(),
        ));
    }
    let mut points = Vec::with_capacity(ns.len());
    for (&n, l) in ns.iter().zip(per_n_losses) {
        if l.is_empty() {
            return Err(Error::InvalidParameter(format!("no losses at n = {n}")));
        }
        let med = median(l);
        if !(med > 0.0) {
            return Err(Error::NonPositiveMedian { n, value: med });
        }
        let (mean, se) = mean_and_stderr(l);
        points.push(RatePoint {
            n,
            median: med,
            mean,
            ci_low: mean - Z95 * se,
            ci_high: mean + Z95 * se,
            replicates: l.len(),
        });
    }
    let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.median.ln()).collect();
    let m = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / m, ys.iter().sum::<f64>() / m);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| y - intercept - slope * x)
        .collect();
    Ok(RateCurve {
        sample_sizes: ns.to_vec(),
        losses: per_n_losses.to_vec(),
        points,
        slope,
        intercept,
        residuals,
    })
}

/// Exact two-sided sign test p-value for `positives` out of `trials`
/// nonzero differences.
pub fn sign_test_p_value(positives: usize, trials: usize) -> f64 {
    if trials == 0 {
        return 1.0;
    }
    let k = positives.min(trials - positives);
    // P(X <= k) for X ~ Bin(trials, 1/2), in log space for large trials
    let ln_half_n = -(trials as f64) * std::f64::consts::LN_2;
    let mut ln_c = 0.0;
    let mut tail = 0.0;
    for i in 0..=k {
        if i > 0 {
            ln_c += ((trials - i + 1) as f64).ln() - (i as f64).ln();
        }
        tail += (ln_c + ln_half_n).exp();
    }
    (2.0 * tail).min(1.0)
}

/// Kolmogorov-Smirnov distance between the sample and Uniform(0, 1).
pub fn ks_uniform_statistic(sample: &[f64]) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &u)| {
            let u = u.clamp(0.0, 1.0);
            ((i + 1) as f64 / n - u).max(u - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic KS critical value at level `alpha`.
pub fn ks_critical_value(n: usize, alpha: f64) -> f64 {
    (-(0.5 * alpha).ln() / (2.0 * n as f64)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kr_exact::{closed_form_kr, AffineTriangularMap, ShiftedMap};

    #[test]
    fn exact_power_law_slope() {
        let c = fit_loglog_slope(&[10, 100, 1000], &[vec![1.0], vec![0.1], vec![0.01]]).unwrap();
        assert!((c.slope + 1.0).abs() < 1e-12);
        let flat = fit_loglog_slope(&[10, 100, 1000], &[vec![2.0], vec![2.0], vec![2.0]]).unwrap();
        assert_eq!(flat.slope, 0.0);
    }

    #[test]
    fn slope_errors() {
        assert!(fit_loglog_slope(&[10, 100], &[vec![1.0], vec![0.5]]).is_err());
        let e =
            fit_loglog_slope(&[10, 100, 1000], &[vec![1.0], vec![0.0], vec![-1.0]]).unwrap_err();
        assert!(matches!(e, Error::NonPositiveMedian { n: 100, .. }));
    }

    #[test]
    fn sign_test_values() {
        assert!((sign_test_p_value(10, 20) - 1.0).abs() < 1e-12);
        // P(X <= 0) * 2 = 2 / 2^20
        assert!((sign_test_p_value(20, 20) - 2.0 / 1048576.0).abs() < 1e-18);
        // P(X <= 5) = 21700 / 2^20
        assert!((sign_test_p_value(5, 20) - 2.0 * 21700.0 / 1048576.0).abs() < 1e-12);
    }

    #[test]
    fn ks_on_a_perfect_grid() {
        let n = 1000;
        let s: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        assert!((ks_uniform_statistic(&s) - 0.5 / n as f64).abs() < 1e-12);
    }

    #[test]
    fn shift_errors() {
        let b = SupportBox::cube(2, -3.0, 3.0).unwrap();
        let id = AffineTriangularMap::identity(b.clone());
        let shifted = ShiftedMap {
            inner: id.clone(),
            shift: vec![0.1, 0.0],
        };
        let sup = sup_grid_error(&shifted, &id, 11, None).unwrap();
        assert!((sup - 0.1).abs() < 1e-14);
        assert_eq!(sup_grid_error(&id, &id, 11, None).unwrap(), 0.0);
        let f = Density::standard_gaussian(2).unwrap();
        let s = sobolev_error(&shifted, &id, &f, 500, SeedSpec::new(1, 0)).unwrap();
        assert!((s.value - 0.01).abs() < 1e-12);
    }

    #[test]
    fn level_restricted_grid() {
        let f = Density::bivariate_gaussian([0.0, 0.0], [1.0, 1.0], 0.7).unwrap();
        let g = Density::standard_gaussian(2).unwrap();
        let oracle = closed_form_kr(&f, &g).unwrap();
        let id = AffineTriangularMap::identity(f.support().clone());
        let full = sup_grid_error(&id, &oracle, 11, None).unwrap();
        let bulk = sup_grid_error_above_level(&id, &oracle, &f, 11, 0.1).unwrap();
        // only the origin survives, where both maps vanish
        let peak = sup_grid_error_above_level(&id, &oracle, &f, 11, 1.0).unwrap();
        assert!(bulk < full && bulk > 0.0);
        assert_eq!(peak, 0.0);
        assert!(sup_grid_error_above_level(&id, &oracle, &f, 11, 0.0).is_err());
    }

    #[test]
    fn identity_kl_between_gaussians() {
        let f = Density::bivariate_gaussian([0.0, 0.0], [1.0, 1.0], 0.7).unwrap();
        let g = Density::standard_gaussian(2).unwrap();
        let id = AffineTriangularMap::identity(f.support().clone());
        let kl = mc_kl_between(
            &crate::objective::Exact(&id),
            &f,
            &g,
            20000,
            SeedSpec::new(2, 0),
        )
        .unwrap();
        let exact = -0.5 * (1.0f64 - 0.49).ln();
        assert!(
            (kl.value - exact).abs() < 4.0 * kl.stderr,
            "{kl:?} vs {exact}"
        );
        let oracle = closed_form_kr(&f, &g).unwrap();
        let kl0 = mc_kl_between(
            &crate::objective::Exact(&oracle),
            &f,
            &g,
            2000,
            SeedSpec::new(2, 1),
        )
        .unwrap();
        assert!(kl0.value.abs() < 1e-9);
    }
}
