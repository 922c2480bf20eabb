//! Upper-triangular matrices: inversion and the entrywise bounds on the
//! inverse implied by a bounded superdiagonal and a diagonal kept away from 0.

use krflow::triangular::UpperTriangularMatrix;

fn largest_entry(a: &UpperTriangularMatrix) -> f64 {
    a.rows().concat().iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn main() -> krflow::error::Result<()> {
    let a = UpperTriangularMatrix::from_rows(&[
        vec![2.0, 0.5, -1.0],
        vec![0.0, 1.0, 0.25],
        vec![0.0, 0.0, 0.5],
    ])?;
    let inv = a.invert()?;
    println!("A^-1 = {:?}", inv.rows());
    println!(
        "|A A^-1 - I| = {:.1e}",
        a.matmul(&inv)
            .max_abs_diff(&UpperTriangularMatrix::identity(3))
    );

    // L bounds the superdiagonal, 1/M bounds the diagonal from below
    let (max_off, min_diag) = a.hypothesis_constants();
    let (l, m) = (max_off, 1.0 / min_diag);
    println!("tightest constants L = {l}, M = {m}");
    println!(
        "inverse within its bounds: {}",
        a.check_inverse_bounds(l, m)?
    );

    // a tiny pivot makes M, and with it the inverse, huge
    let b = UpperTriangularMatrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 1e-6]])?;
    let (max_off, min_diag) = b.hypothesis_constants();
    println!(
        "near-singular: M = {:.0e}, largest inverse entry {:.1e}, within bounds: {}",
        1.0 / min_diag,
        largest_entry(&b.invert()?),
        b.check_inverse_bounds(max_off, 1.0 / min_diag)?
    );

    // constants that are too tight are rejected up front
    match a.check_inverse_bounds(0.1, m) {
        Err(e) => println!("L = 0.1: {e}"),
        Ok(v) => println!("L = 0.1 unexpectedly accepted: {v}"),
    }
    Ok(())
}
