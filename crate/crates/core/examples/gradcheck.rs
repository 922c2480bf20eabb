//! Analytic loss gradient against central differences, and the coefficient
//! Jacobian of a map against the same.

use krflow::densities::Density;
use krflow::harness::{
    run_gradcheck, DensityConfig, DensitySpec, ExperimentConfig, ExperimentKind,
};
use krflow::kr_exact::TriangularMap;
use krflow::param_maps::{ComponentDegrees, IntegrandForm, MonotoneMapSpec};
use rand::Rng;

fn main() -> krflow::error::Result<()> {
    let mut cfg = ExperimentConfig::new(
        ExperimentKind::Gradcheck,
        DensitySpec::new(DensityConfig::Banana),
        vec![200],
    );
    cfg.gradcheck_points = 20;
    let r = run_gradcheck(&cfg)?;
    println!(
        "loss gradient: max relative error {:.2e} over {} points x {} coefficients",
        r.max_relative_error, r.points, r.params
    );

    let f = Density::banana()?;
    let b = f.support().clone();
    let mut rng = krflow::seed::SeedSpec::new(3, 0).rng();
    let init = MonotoneMapSpec::zeros(
        2,
        b.clone(),
        b,
        ComponentDegrees::uniform(2, 2, 2),
        IntegrandForm::Exp,
    )?;
    let theta: Vec<f64> = (0..init.n_params())
        .map(|_| rng.random_range(-0.3..0.3))
        .collect();
    let spec = init.with_theta(&theta)?;
    let x = [0.7, -0.4];
    let (jac, _) = spec.param_jacobian(&x)?;
    let h = 1e-6;
    let mut worst = 0.0f64;
    for j in 0..theta.len() {
        let mut up = theta.clone();
        let mut dn = theta.clone();
        up[j] += h;
        dn[j] -= h;
        let (yu, yd) = (
            spec.with_theta(&up)?.eval(&x)?,
            spec.with_theta(&dn)?.eval(&x)?,
        );
        for k in 0..2 {
            let fd = (yu[k] - yd[k]) / (2.0 * h);
            worst = worst.max((jac[k][j] - fd).abs());
        }
    }
    println!("coefficient Jacobian at {x:?}: max abs error {worst:.2e}");
    Ok(())
}
