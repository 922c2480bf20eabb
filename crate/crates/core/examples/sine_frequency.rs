//! Raising the second frequency of the sine density makes it harder to
//! learn; a small sweep shows the test NLL rising with it.

use krflow::harness::{
    run_sine_frequency, DensityConfig, DensitySpec, ExperimentConfig, ExperimentKind,
    OrderingConfig,
};

fn main() -> krflow::error::Result<()> {
    let mut cfg = ExperimentConfig::new(
        ExperimentKind::SineFrequency,
        DensitySpec::new(DensityConfig::Sine {
            frequencies: vec![1, 3],
        }),
        vec![2000],
    );
    cfg.sine_k2 = Some(vec![3, 5, 7]);
    cfg.ordering = OrderingConfig::Label("identity".into());
    cfg.map.diag_degree = 3;
    cfg.map.tail_degree = 6;
    cfg.replicates = 3;
    cfg.test_size = 5000;
    let out = run_sine_frequency(&cfg)?;
    for s in &out.summary.sine {
        println!(
            "k2 = {}: median test NLL {:.4}, median KL {:.4}",
            s.k2, s.median_test_nll, s.median_mc_kl
        );
    }
    Ok(())
}
