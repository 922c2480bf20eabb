//! Map values checked against references computed independently in high
//! precision. The banana reference keeps the exact box truncation of the
//! source and inverts the plain normal cdf for the reference.

use approx::assert_abs_diff_eq;

use krflow::densities::Density;
use krflow::kr_exact::{
    closed_form_kr, numerical_kr, rosenblatt_transform, TriangularMap, DEFAULT_QUAD_NODES,
};
use krflow::smoothness::{rate_exponents, Regime, SmoothnessProfile};

type Case = ([f64; 2], [f64; 2]);

const BANANA_TO_GAUSSIAN: &[Case] = &[
    ([0.5, 0.0], [0.707_106_775_238_157_7, 0.0]),
    ([2.0, 1.5], [1.237_436_867_076_335, 1.500_001_916_212_427_3]),
    (
        [-1.0, -0.5],
        [-1.590_990_280_423_162_8, -0.500_000_310_012_836_9],
    ),
    ([10.0, 4.0], [2.828_427_124_746_19, 4.002_150_998_285_196]),
    (
        [0.1, -2.5],
        [-4.277_996_026_178_613, -2.500_016_149_985_973],
    ),
];

const SINE_13_ROSENBLATT: &[Case] = &[
    ([0.25, 0.25], [0.090_845_056_908_104_66, 0.25]),
    ([0.5, 1.0 / 12.0], [0.818_309_886_183_790_7, 1.0 / 12.0]),
    ([0.9, 0.6], [0.871_091_791_325_366_3, 0.6]),
    ([0.1, 0.95], [0.075_409_208_922_913_34, 0.95]),
];

// mean (1, -1), std (2, 0.5), rho -0.4
const GAUSSIAN_AFFINE: &[Case] = &[
    ([0.0, 0.0], [0.327_326_835_353_988_6, 2.0]),
    ([3.0, -1.2], [0.916_515_138_991_168, -0.4]),
    ([-2.0, 0.5], [-0.327_326_835_353_988_6, 3.0]),
];
const GAUSSIAN_AFFINE_LOGDET: f64 = 0.087_176_693_572_388_88;

fn check(map: &dyn TriangularMap, cases: &[Case], tol: f64) {
    for (x, want) in cases {
        let y = map.eval(x).unwrap();
        for k in 0..2 {
            assert_abs_diff_eq!(y[k], want[k], epsilon = tol);
        }
    }
}

#[test]
fn banana_numerical_kr() {
    let f = Density::banana().unwrap();
    let g = Density::standard_gaussian(2).unwrap();
    let m = numerical_kr(&f, &g, DEFAULT_QUAD_NODES, 1e-12).unwrap();
    check(&m, BANANA_TO_GAUSSIAN, 1e-7);
}

#[test]
fn sine_rosenblatt() {
    let f = Density::sine(vec![1, 3]).unwrap();
    check(
        &rosenblatt_transform(&f).unwrap(),
        SINE_13_ROSENBLATT,
        1e-14,
    );
}

#[test]
fn correlated_gaussian_closed_form() {
    let f = Density::bivariate_gaussian([1.0, -1.0], [2.0, 0.5], -0.4).unwrap();
    let g = Density::standard_gaussian(2).unwrap();
    let s = closed_form_kr(&f, &g).unwrap();
    check(&s, GAUSSIAN_AFFINE, 1e-14);
    for (x, _) in GAUSSIAN_AFFINE {
        assert_abs_diff_eq!(
            s.log_det_jacobian(x).unwrap(),
            GAUSSIAN_AFFINE_LOGDET,
            epsilon = 1e-14
        );
    }
}

#[test]
fn rate_exponents_by_hand() {
    // tails (1,3,6), (3,6), (6): harmonic sums 3/2, 1/2, 1/6
    let r = rate_exponents(&SmoothnessProfile::new(vec![1, 3, 6]).unwrap());
    assert_eq!(
        r.iter().map(|e| e.regime).collect::<Vec<_>>(),
        vec![Regime::Smooth; 3]
    );
    assert_abs_diff_eq!(r[0].sigma_k, 2.0, epsilon = 1e-15);
    assert_abs_diff_eq!(r[1].sigma_k, 4.0, epsilon = 1e-15);

    // (1,1): sum exactly 2 is the boundary case; (1,1,1) is rough with 1/3
    let c = rate_exponents(&SmoothnessProfile::new(vec![1, 1]).unwrap());
    assert_eq!(c[0].regime, Regime::Critical);
    let rough = rate_exponents(&SmoothnessProfile::new(vec![1, 1, 1]).unwrap());
    assert_eq!(rough[0].regime, Regime::Rough);
    assert_abs_diff_eq!(rough[0].exponent(), 1.0 / 3.0, epsilon = 1e-15);
    assert_eq!(rough[0].tag(), "n^{-1/3}");
}
