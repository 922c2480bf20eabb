//! Draw from the built-in densities and check the sampler against the
//! exact Rosenblatt transform, which sends exact draws to uniforms.

use krflow::densities::Density;
use krflow::kr_exact::{rosenblatt_transform, TriangularMap};
use krflow::metrics::{ks_critical_value, ks_uniform_statistic};
use krflow::seed::SeedSpec;

fn main() -> krflow::error::Result<()> {
    let densities = [
        Density::standard_gaussian(2)?,
        Density::bivariate_gaussian([1.0, -1.0], [2.0, 0.5], -0.4)?,
        Density::banana()?,
        Density::sine(vec![1, 3])?,
    ];
    let n = 5000;
    for f in &densities {
        let r = rosenblatt_transform(f)?;
        let x = f.sample(n, SeedSpec::new(11, 0))?;
        let mut u = [Vec::with_capacity(n), Vec::with_capacity(n)];
        for row in x.rows() {
            let v = r.eval(&row.to_vec())?;
            u[0].push(v[0]);
            u[1].push(v[1]);
        }
        println!(
            "{:24} KS statistics {:.4} {:.4} (5% critical value {:.4})",
            f.name(),
            ks_uniform_statistic(&u[0]),
            ks_uniform_statistic(&u[1]),
            ks_critical_value(n, 0.05)
        );
    }
    for f in [Density::eight_gaussians()?, Density::two_circles()?] {
        let x = f.sample(3, SeedSpec::new(11, 1))?;
        println!(
            "{}: {:?}",
            f.name(),
            x.rows().into_iter().map(|r| r.to_vec()).collect::<Vec<_>>()
        );
    }
    Ok(())
}
