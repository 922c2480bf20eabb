//! Exact KR maps: the affine Gaussian map and the Rosenblatt transform of the
//! sine density, with a round trip through the inverse.

use krflow::densities::Density;
use krflow::kr_exact::{
    closed_form_kr, invert_triangular_map, rosenblatt_transform, TriangularMap,
};

fn main() -> krflow::error::Result<()> {
    let f = Density::bivariate_gaussian([0.0, 0.0], [1.0, 1.0], 0.7)?;
    let g = Density::standard_gaussian(2)?;
    let s = closed_form_kr(&f, &g)?;
    for x in [[0.0, 0.0], [1.0, 1.0], [-0.5, 2.0]] {
        let y = s.eval(&x)?;
        let back = invert_triangular_map(&s, &y, 1e-13)?;
        println!(
            "S({:5.2}, {:5.2}) = ({:8.5}, {:8.5})  log det {:.5}  inverse ({:.5}, {:.5})",
            x[0],
            x[1],
            y[0],
            y[1],
            s.log_det_jacobian(&x)?,
            back[0],
            back[1]
        );
    }

    // conditional CDFs of the sine density push it onto the unit square
    let sine = Density::sine(vec![1, 3])?;
    let r = rosenblatt_transform(&sine)?;
    for x in [[0.25, 0.25], [0.5, 1.0 / 12.0], [0.9, 0.6]] {
        let u = r.eval(&x)?;
        println!("R({:.3}, {:.3}) = ({:.6}, {:.6})", x[0], x[1], u[0], u[1]);
    }
    Ok(())
}
