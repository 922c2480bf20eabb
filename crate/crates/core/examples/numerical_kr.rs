//! Quadrature-and-bisection KR map checked against the closed forms.

use krflow::densities::{Density, SupportBox};
use krflow::kr_exact::{closed_form_kr, numerical_kr, rosenblatt_transform, DEFAULT_QUAD_NODES};
use krflow::metrics::{sup_grid_error, sup_grid_error_above_level};

fn main() -> krflow::error::Result<()> {
    let f = Density::bivariate_gaussian([0.0, 0.0], [1.0, 1.0], 0.7)?;
    let g = Density::standard_gaussian(2)?;
    let exact = closed_form_kr(&f, &g)?;
    let num = numerical_kr(&f, &g, DEFAULT_QUAD_NODES, 1e-12)?;
    for level in [1e-1, 1e-2, 1e-4, 1e-6] {
        let e = sup_grid_error_above_level(&num, &exact, &f, 20, level)?;
        println!("Gaussian, grid points with f >= {level:.0e} * peak: sup error {e:.2e}");
    }

    let sine = Density::sine(vec![1, 3])?;
    let u = Density::uniform_box(SupportBox::unit(2))?;
    let e = sup_grid_error(
        &numerical_kr(&sine, &u, DEFAULT_QUAD_NODES, 1e-12)?,
        &rosenblatt_transform(&sine)?,
        20,
        None,
    )?;
    println!("sine to uniform: sup error {e:.2e}");

    let banana = Density::banana()?;
    let m = numerical_kr(&banana, &g, DEFAULT_QUAD_NODES, 1e-12)?;
    println!(
        "banana quadrature mass {:.8}",
        banana.quadrature_normalization(128)?
    );
    let x = [0.5, 0.0];
    println!(
        "banana KR at {x:?}: {:?}",
        krflow::kr_exact::TriangularMap::eval(&m, &x)?
    );
    Ok(())
}
