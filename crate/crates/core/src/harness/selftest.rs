//! Quick checks with exactly known answers, run by `krflow selftest`.

use serde::Serialize;

use super::config::{DensityConfig, DensitySpec, ExperimentConfig, ExperimentKind};
use super::runner::run_rates;
use crate::densities::{Density, SupportBox};
use crate::error::Result;
use crate::kr_exact::{
    gaussian_to_gaussian_kr, invert_triangular_map, pushforward_density, rosenblatt_transform,
    AffineTriangularMap, ShiftedMap, TriangularMap,
};
use crate::metrics::{fit_loglog_slope, sobolev_error, sup_grid_error};
use crate::objective::{
    empirical_loss, minimize, per_coordinate_loss, LossConfig, OptimizerOptions,
};
use crate::param_maps::{
    ComponentDegrees, FlowBlock, IntegrandForm, JacobianFlowSpec, MonotoneMapSpec,
};
use crate::seed::SeedSpec;
use crate::smoothness::{best_ordering, rate_exponents, Ordering, Regime, SmoothnessProfile};
use crate::triangular::UpperTriangularMatrix;

#[derive(Debug, Clone, Serialize)]
pub struct SelfCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn vec_close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| close(*x, *y, tol))
}

type Check = (&'static str, fn() -> Result<(bool, String)>);

const CHECKS: &[Check] = &[
    ("triangular inverse of [[1,0.5],[0,1]]", || {
        let a = UpperTriangularMatrix::from_rows(&[vec![1.0, 0.5], vec![0.0, 1.0]])?;
        let inv = a.invert()?;
        let ok = a.invert()?.rows() == vec![vec![1.0, -0.5], vec![0.0, 1.0]]
            && a.check_inverse_bounds(0.5, 1.0)?;
        Ok((ok, format!("{:?}", inv.rows())))
    }),
    ("rate exponents of s=(1,2)", || {
        let r = rate_exponents(&SmoothnessProfile::new(vec![1, 2])?);
        let ok = r[0].d_k == 2
            && close(r[0].sigma_k, 4.0 / 3.0, 1e-12)
            && r[0].regime == Regime::Smooth
            && r[1].d_k == 1
            && close(r[1].sigma_k, 2.0, 1e-12);
        Ok((ok, format!("{r:?}")))
    }),
    ("best ordering of s=(3,1,2)", || {
        let o = best_ordering(&SmoothnessProfile::new(vec![3, 1, 2])?);
        Ok((o.one_based() == vec![2, 3, 1], o.to_string()))
    }),
    ("log densities at known points", || {
        let g = Density::standard_gaussian(2)?.log_density(&[0.0, 0.0])?;
        let s = Density::sine(vec![1, 3])?;
        let a = s.log_density(&[0.25, 1.0 / 12.0])?;
        let ok = close(g, -(2.0 * std::f64::consts::PI).ln(), 1e-12) && close(a, 2f64.ln(), 1e-12);
        Ok((ok, format!("{g} {a}")))
    }),
    ("sampling is deterministic", || {
        let d = Density::banana()?;
        let s = SeedSpec::new(7, 1);
        Ok((d.sample(50, s)? == d.sample(50, s)?, String::new()))
    }),
    ("Gaussian KR is the identity for f = g", || {
        let f = Density::standard_gaussian(2)?;
        let m = gaussian_to_gaussian_kr(&f, &f)?;
        let y = m.eval(&[0.3, -1.2])?;
        Ok((vec_close(&y, &[0.3, -1.2], 1e-14), format!("{y:?}")))
    }),
    ("Rosenblatt of a standard Gaussian at the origin", || {
        let m = rosenblatt_transform(&Density::standard_gaussian(2)?)?;
        let y = m.eval(&[0.0, 0.0])?;
        Ok((vec_close(&y, &[0.5, 0.5], 1e-14), format!("{y:?}")))
    }),
    ("affine inversion", || {
        let a = UpperTriangularMatrix::from_rows(&[vec![2.0, 1.0], vec![0.0, 3.0]])?;
        let m = AffineTriangularMap::new(a, vec![0.0, 0.0], SupportBox::cube(2, -10.0, 10.0)?)?;
        let x = invert_triangular_map(&m, &[5.0, 3.0], 1e-13)?;
        Ok((vec_close(&x, &[2.0, 1.0], 1e-10), format!("{x:?}")))
    }),
    ("pushforward through a coordinate scaling", || {
        let b = SupportBox::unit(2);
        let a = UpperTriangularMatrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 1.0]])?;
        let m = AffineTriangularMap::new(a, vec![0.0, 0.0], b)?;
        let g = Density::uniform_box(SupportBox::new(vec![0.0, 0.0], vec![2.0, 1.0])?)?;
        let v = pushforward_density(&m, &g, &[0.3, 0.4])?;
        Ok((close(v, 1.0, 1e-14), format!("{v}")))
    }),
    ("zero-coefficient map is the identity", || {
        let b = SupportBox::unit(2);
        let s = MonotoneMapSpec::zeros(
            2,
            b.clone(),
            b,
            ComponentDegrees::uniform(2, 2, 2),
            IntegrandForm::Exp,
        )?;
        let y = s.eval(&[0.3, 0.7])?;
        Ok((vec_close(&y, &[0.3, 0.7], 1e-14), format!("{y:?}")))
    }),
    ("constant ln 2 integrand doubles", || {
        let b = SupportBox::unit(1);
        let s = MonotoneMapSpec::diagonal_affine(
            b.clone(),
            SupportBox::new(vec![0.0], vec![2.0])?,
            ComponentDegrees::uniform(1, 0, 0),
            IntegrandForm::Exp,
            &[2.0],
            &[0.0],
        )?;
        let y = s.eval(&[0.4])?[0];
        let caps = s.derivative_cap_diagnostic(5)?;
        Ok((
            close(y, 0.8, 1e-14) && close(caps.min_diag, 2.0, 1e-14),
            format!("{y}"),
        ))
    }),
    ("two swaps cancel in a flow", || {
        let b = SupportBox::unit(2);
        let id = MonotoneMapSpec::identity(
            b.clone(),
            b.clone(),
            ComponentDegrees::uniform(2, 1, 1),
            IntegrandForm::Exp,
        )?;
        let swap = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let flow = JacobianFlowSpec::new(
            b,
            vec![
                FlowBlock {
                    rotation: swap.clone(),
                    map: id.clone(),
                },
                FlowBlock {
                    rotation: swap,
                    map: id,
                },
            ],
        )?;
        let e = flow.flow_eval_with_logdet(&[0.2, 0.9])?;
        Ok((
            vec_close(&e.y, &[0.2, 0.9], 1e-14) && close(e.logdet, 0.0, 1e-14),
            format!("{:?}", e.y),
        ))
    }),
    ("identity loss vanishes when f = g", || {
        let g = Density::standard_gaussian(2)?;
        let b = g.support().clone();
        let s = MonotoneMapSpec::identity(
            b.clone(),
            b,
            ComponentDegrees::uniform(2, 1, 1),
            IntegrandForm::Exp,
        )?;
        let x = g.sample(200, SeedSpec::new(3, 0))?;
        let cfg = LossConfig::with_target(g.clone(), g);
        let l = empirical_loss(&s, &x, &cfg)?;
        let parts = per_coordinate_loss(&s, &x, &cfg)?;
        Ok((
            close(l, 0.0, 1e-12) && parts.iter().all(|p| close(*p, 0.0, 1e-12)),
            format!("{l}"),
        ))
    }),
    ("zero iterations return the start", || {
        let r = minimize(
            &[1.0],
            |t| Ok(t[0] * t[0]),
            |t| Ok((t[0] * t[0], vec![2.0 * t[0]])),
            &OptimizerOptions {
                max_iters: 0,
                ..Default::default()
            },
        )?;
        Ok((!r.converged && r.final_loss == 1.0, String::new()))
    }),
    ("map errors for a 0.1 shift", || {
        let b = SupportBox::cube(2, -6.0, 6.0)?;
        let id = AffineTriangularMap::identity(b);
        let sh = ShiftedMap {
            inner: id.clone(),
            shift: vec![0.1, 0.0],
        };
        let sup = sup_grid_error(&sh, &id, 20, None)?;
        let same = sup_grid_error(&id, &id, 20, None)?;
        let sob = sobolev_error(
            &id,
            &id,
            &Density::standard_gaussian(2)?,
            100,
            SeedSpec::new(1, 0),
        )?;
        Ok((
            close(sup, 0.1, 1e-14) && same == 0.0 && sob.value == 0.0,
            format!("{sup}"),
        ))
    }),
    ("log-log slope of an exact power law", || {
        let c = fit_loglog_slope(&[10, 100, 1000], &[vec![1.0], vec![0.1], vec![0.01]])?;
        let flat = fit_loglog_slope(&[10, 100, 1000], &[vec![3.0], vec![3.0], vec![3.0]])?;
        Ok((
            close(c.slope, -1.0, 1e-12) && flat.slope == 0.0,
            format!("{}", c.slope),
        ))
    }),
    ("one replicate at one n gives one row", || {
        let mut cfg = ExperimentConfig::new(
            ExperimentKind::Rates,
            DensitySpec::new(DensityConfig::StandardGaussian { dim: 2 }),
            vec![100],
        );
        cfg.test_size = 1000;
        cfg.map.diag_degree = 1;
        cfg.map.tail_degree = 1;
        let a = run_rates(&cfg)?;
        let b = run_rates(&cfg)?;
        Ok((
            a.rows.len() == 1 && a.csv() == b.csv(),
            format!("{} rows", a.rows.len()),
        ))
    }),
    ("orderings round trip", || {
        let o = Ordering::from_one_based(&[2, 3, 1])?;
        let x = [1.0, 2.0, 3.0];
        Ok((o.inverse().apply(&o.apply(&x)) == x, o.label()))
    }),
];

/// Runs every check; a check that errors counts as failed.
pub fn run_selftest() -> Vec<SelfCheck> {
    CHECKS
        .iter()
        .map(|(name, f)| match f() {
            Ok((passed, detail)) => SelfCheck {
                name,
                passed,
                detail,
            },
            Err(e) => SelfCheck {
                name,
                passed: false,
                detail: e.to_string(),
            },
        })
        .collect()
}

/// `(passed, total)`.
pub fn selftest_summary(checks: &[SelfCheck]) -> (usize, usize) {
    let passed = checks.iter().filter(|c| c.passed).count();
    (passed, checks.len())
}

#[cfg(test)]
mod tests {
    #[test]
    fn all_checks_pass() {
        for c in super::run_selftest() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
