//! The forward divergence of the pushforward equals the backward divergence
//! of the pullback; two independent Monte Carlo estimates should agree.

use krflow::densities::Density;
use krflow::kr_exact::{closed_form_kr, ShiftedMap};
use krflow::objective::kl_change_of_variables_check;
use krflow::seed::SeedSpec;

fn main() -> krflow::error::Result<()> {
    let f = Density::bivariate_gaussian([0.0, 0.0], [1.0, 1.0], 0.7)?;
    let g = Density::standard_gaussian(2)?;
    let exact = closed_form_kr(&f, &g)?;
    let shifted = ShiftedMap {
        inner: exact.clone(),
        shift: vec![0.3, -0.2],
    };
    for (name, r) in [
        (
            "exact",
            kl_change_of_variables_check(&exact, &f, &g, 20_000, SeedSpec::new(5, 0))?,
        ),
        (
            "shifted",
            kl_change_of_variables_check(&shifted, &f, &g, 20_000, SeedSpec::new(5, 1))?,
        ),
    ] {
        println!(
            "{name:8} forward {:.5} +/- {:.5}, backward {:.5} +/- {:.5}, agree: {}",
            r.forward,
            r.forward_stderr,
            r.backward,
            r.backward_stderr,
            r.agrees(3.0)
        );
    }
    Ok(())
}
