//! Which coordinate goes first matters: paired fits of the banana density in
//! both orderings, next to the ordering suggested by the smoothness profile.

use krflow::harness::{
    run_ordering, DensityConfig, DensitySpec, ExperimentConfig, ExperimentKind, OrderingConfig,
};
use krflow::smoothness::{best_ordering, rate_exponents, SmoothnessProfile};

fn main() -> krflow::error::Result<()> {
    let s = SmoothnessProfile::new(vec![1, 3])?;
    println!(
        "smoothness {:?} -> best ordering {}",
        s.values(),
        best_ordering(&s)
    );
    for r in rate_exponents(&s) {
        println!("  {}", r.tag());
    }

    let mut cfg = ExperimentConfig::new(
        ExperimentKind::Ordering,
        DensitySpec::new(DensityConfig::Banana),
        vec![1000],
    );
    cfg.ordering = OrderingConfig::Label("both".into());
    cfg.map.diag_degree = 1;
    cfg.map.tail_degree = 2;
    cfg.replicates = 6;
    cfg.test_size = 10_000;
    cfg.skip_oracle_errors = true;
    let out = run_ordering(&cfg)?;
    for p in &out.summary.pairs {
        println!(
            "replicate {}: NLL 12 {:.4}, 21 {:.4}",
            p.replicate, p.nll_first, p.nll_second
        );
    }
    let ps = &out.summary.paired[0];
    println!(
        "12 wins {:.0}% of {} pairs, sign test p = {:.3}",
        100.0 * ps.first_wins,
        ps.pairs,
        ps.sign_test_p
    );
    Ok(())
}
