//! A small rate study: test-set KL of fitted maps against n, and the fitted
//! log-log slope.

use krflow::harness::{run_rates, DensityConfig, DensitySpec, ExperimentConfig, ExperimentKind};

fn main() -> krflow::error::Result<()> {
    let density = DensitySpec::new(DensityConfig::Gaussian {
        mean: vec![0.0, 0.0],
        std: vec![1.0, 1.0],
        rho: 0.7,
    });
    let mut cfg = ExperimentConfig::new(ExperimentKind::Rates, density, vec![250, 500, 1000, 2000]);
    cfg.map.diag_degree = 1;
    cfg.map.tail_degree = 1;
    cfg.replicates = 5;
    cfg.test_size = 10_000;
    let out = run_rates(&cfg)?;
    let c = &out.summary.curves[0];
    let curve = c.curve.as_ref().expect("all medians positive");
    for p in &curve.points {
        println!(
            "n = {:5}: median KL {:.5} (mean {:.5}, 95% CI {:.5} .. {:.5})",
            p.n, p.median, p.mean, p.ci_low, p.ci_high
        );
    }
    println!("slope {:.3}, intercept {:.3}", curve.slope, curve.intercept);
    println!(
        "{} result rows, all converged: {}",
        out.rows.len(),
        out.rows.iter().all(|r| r.converged)
    );
    Ok(())
}
