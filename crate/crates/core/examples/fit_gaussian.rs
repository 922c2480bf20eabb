//! Fit a monotone triangular map to Gaussian samples and compare it with the
//! exact affine KR map.

use krflow::densities::Density;
use krflow::harness::{
    standardizing_init, DensityConfig, DensitySpec, ExperimentConfig, ExperimentKind,
};
use krflow::kr_exact::{closed_form_kr, invert_triangular_map, TriangularMap};
use krflow::metrics::{sobolev_error, sup_grid_error_above_level, test_nll};
use krflow::objective::{optimize, Exact, LossConfig, OptimizerOptions};
use krflow::seed::SeedSpec;

fn main() -> krflow::error::Result<()> {
    let f = Density::bivariate_gaussian([0.0, 0.0], [1.0, 1.0], 0.7)?;
    let g = Density::standard_gaussian(2)?;
    let oracle = closed_form_kr(&f, &g)?;
    let test = f.sample(20_000, SeedSpec::new(9, 1))?;
    let floor = test_nll(&Exact(&oracle), &test, &g)?;

    let mut cfg = ExperimentConfig::new(
        ExperimentKind::Rates,
        DensitySpec::new(DensityConfig::StandardGaussian { dim: 2 }),
        vec![1],
    );
    cfg.map.diag_degree = 1;
    cfg.map.tail_degree = 1;

    for n in [500, 2000, 8000] {
        let data = f.sample(n, SeedSpec::new(9, n as u64))?;
        let init = standardizing_init(&cfg, &f, &g, &data)?;
        let fit = optimize(
            &init,
            &data,
            &LossConfig::new(g.clone()),
            &OptimizerOptions::default(),
        )?;
        let nll = test_nll(&fit.map, &test, &g)?;
        let sup = sup_grid_error_above_level(&fit.map, &oracle, &f, 50, 0.1)?;
        let sob = sobolev_error(&fit.map, &oracle, &f, 20_000, SeedSpec::new(9, 2))?;
        println!(
            "n = {n:5}: {} iterations, test KL {:.5}, sup error {sup:.4}, Sobolev error {:.5}",
            fit.result.iterations,
            nll - floor,
            sob.value
        );
        if n == 8000 {
            let x = [0.3, -0.4];
            let y = fit.map.eval(&x)?;
            let back = invert_triangular_map(&fit.map, &y, 1e-13)?;
            println!(
                "fitted S{x:?} = {y:.5?}, exact {:.5?}, round trip {back:.12?}",
                oracle.eval(&x)?
            );
            println!("{:?}", fit.result.diagnostics);
        }
    }
    Ok(())
}
