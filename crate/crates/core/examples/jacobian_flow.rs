//! Jacobian flows of increasing depth (triangular maps between coordinate
//! reversals) fitted to a ring of eight Gaussians.

use krflow::densities::Density;
use krflow::metrics::test_nll;
use krflow::objective::{optimize, LossConfig, OptimizerOptions};
use krflow::param_maps::{IntegrandForm, JacobianFlowSpec};
use krflow::seed::SeedSpec;

fn main() -> krflow::error::Result<()> {
    let f = Density::eight_gaussians()?;
    let g = Density::standard_gaussian(2)?;
    let train = f.sample(4000, SeedSpec::new(4, 0))?;
    let test = f.sample(20_000, SeedSpec::new(4, 1))?;
    let opts = OptimizerOptions {
        max_iters: 500,
        ..Default::default()
    };
    for depth in [1, 2, 3] {
        let init =
            JacobianFlowSpec::alternating(f.support().clone(), depth, 1, 2, IntegrandForm::Exp)?;
        let fit = optimize(&init, &train, &LossConfig::new(g.clone()), &opts)?;
        let e = fit.map.flow_eval_with_logdet(&[0.5, 0.0])?;
        println!(
            "depth {depth}: {} coefficients, {} iterations (converged {}), train {:.4}, test NLL {:.4}, S(0.5, 0) = {:.4?} with log det {:.4}",
            init.n_params(),
            fit.result.iterations,
            fit.result.converged,
            fit.result.final_loss,
            test_nll(&fit.map, &test, &g)?,
            e.y,
            e.logdet
        );
    }
    Ok(())
}
