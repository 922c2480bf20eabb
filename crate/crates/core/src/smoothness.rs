//! Anisotropic smoothness profiles, coordinate orderings and the per-coordinate
//! rate exponents they induce.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of continuous derivatives of the target density along each coordinate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<u32>", into = "Vec<u32>")]
pub struct SmoothnessProfile(Vec<u32>);

impl SmoothnessProfile {
    pub fn new(s: Vec<u32>) -> Result<Self> {
        if s.is_empty() {
            return Err(Error::InvalidParameter("empty smoothness profile".into()));
        }
        if let Some(k) = s.iter().position(|&v| v == 0) {
            return Err(Error::InvalidParameter(format!(
                "smoothness of coordinate {} must be at least 1",
                k + 1
            )));
        }
        Ok(Self(s))
    }

    pub fn constant(s: u32, dim: usize) -> Result<Self> {
        Self::new(vec![s; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[u32] {
        &self.0
    }

    pub fn permuted(&self, ordering: &Ordering) -> Self {
        Self(ordering.apply(&self.0))
    }
}

impl TryFrom<Vec<u32>> for SmoothnessProfile {
    type Error = Error;
    fn try_from(v: Vec<u32>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<SmoothnessProfile> for Vec<u32> {
    fn from(p: SmoothnessProfile) -> Self {
        p.0
    }
}

/// A permutation of coordinates. `apply` reorders a vector so that position
/// `i` holds original coordinate `perm[i]` (0-based internally, 1-based when
/// displayed).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Ordering {
    perm: Vec<usize>,
}

impl Ordering {
    pub fn identity(dim: usize) -> Self {
        Self {
            perm: (0..dim).collect(),
        }
    }

    /// From a 0-based permutation.
    pub fn new(perm: Vec<usize>) -> Result<Self> {
        let d = perm.len();
        let mut seen = vec![false; d];
        for &p in &perm {
            if p >= d || seen[p] {
                return Err(Error::InvalidParameter(format!(
                    "{perm:?} is not a permutation of 0..{d}"
                )));
            }
            seen[p] = true;
        }
        Ok(Self { perm })
    }

    /// From a 1-based permutation such as `[2, 1]`.
    pub fn from_one_based(perm: &[usize]) -> Result<Self> {
        if perm.contains(&0) {
            return Err(Error::InvalidParameter(
                "1-based permutation contains 0".into(),
            ));
        }
        Self::new(perm.iter().map(|p| p - 1).collect())
    }

    pub fn reversed(dim: usize) -> Self {
        Self {
            perm: (0..dim).rev().collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    pub fn one_based(&self) -> Vec<usize> {
        self.perm.iter().map(|p| p + 1).collect()
    }

    pub fn is_identity(&self) -> bool {
        self.perm.iter().enumerate().all(|(i, &p)| i == p)
    }

    pub fn apply<T: Clone>(&self, x: &[T]) -> Vec<T> {
        self.perm.iter().map(|&p| x[p].clone()).collect()
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.perm.len()];
        for (i, &p) in self.perm.iter().enumerate() {
            inv[p] = i;
        }
        Self { perm: inv }
    }

    /// Label like `12` or `21`, used in result files.
    pub fn label(&self) -> String {
        self.one_based()
            .iter()
            .map(|p| p.to_string())
            .collect::<Vec<_>>()
            .join("")
    }
}

impl TryFrom<Vec<usize>> for Ordering {
    type Error = Error;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        Self::from_one_based(&v)
    }
}

impl From<Ordering> for Vec<usize> {
    fn from(o: Ordering) -> Self {
        o.one_based()
    }
}

impl fmt::Display for Ordering {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({})",
            self.one_based()
                .iter()
                .map(|p| p.to_string())
                .collect::<Vec<_>>()
                .join(",")
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `d_k < 2 sigma_k`, rate `n^{-1/2}`.
    Smooth,
    /// `d_k = 2 sigma_k`, rate `n^{-1/2} log n`.
    Critical,
    /// `d_k > 2 sigma_k`, rate `n^{-sigma_k / d_k}`.
    Rough,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateExponent {
    /// Number of coordinates `k..d` that component `k` depends on.
    pub d_k: usize,
    pub sigma_k: f64,
    pub regime: Regime,
}

impl RateExponent {
    /// Exponent `e` of the polynomial part `n^{-e}` of the rate.
    pub fn exponent(&self) -> f64 {
        match self.regime {
            Regime::Smooth | Regime::Critical => 0.5,
            Regime::Rough => self.sigma_k / self.d_k as f64,
        }
    }

    /// The rate term `c_{n,k}` evaluated at sample size `n`.
    pub fn rate(&self, n: f64) -> f64 {
        match self.regime {
            Regime::Smooth => n.powf(-0.5),
            Regime::Critical => n.powf(-0.5) * n.ln(),
            Regime::Rough => n.powf(-self.sigma_k / self.d_k as f64),
        }
    }

    pub fn tag(&self) -> String {
        match self.regime {
            Regime::Smooth => "n^{-1/2}".to_string(),
            Regime::Critical => "n^{-1/2} log n".to_string(),
            Regime::Rough => format!("n^{{-{}/{}}}", fmt_ratio(self.sigma_k), self.d_k),
        }
    }
}

fn fmt_ratio(x: f64) -> String {
    if (x - x.round()).abs() < 1e-12 {
        format!("{}", x.round() as i64)
    } else {
        format!("{x:.6}")
    }
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Per-component exponents `d_k = d - k + 1` and
/// `sigma_k = d_k / sum_{j >= k} 1/s_j`, with the regime decided exactly in
/// rational arithmetic (`d_k < 2 sigma_k` iff `sum_{j >= k} 1/s_j < 2`).
pub fn rate_exponents(profile: &SmoothnessProfile) -> Vec<RateExponent> {
    let s = profile.values();
    let d = s.len();
    (0..d)
        .map(|k| {
            let tail = &s[k..];
            let d_k = d - k;
            let lcm = tail
                .iter()
                .fold(1u128, |acc, &v| acc / gcd(acc, v as u128) * v as u128);
            let num: u128 = tail.iter().map(|&v| lcm / v as u128).sum();
            // sum 1/s_j = num / lcm
            let regime = match num.cmp(&(2 * lcm)) {
                std::cmp::Ordering::Less => Regime::Smooth,
                std::cmp::Ordering::Equal => Regime::Critical,
                std::cmp::Ordering::Greater => Regime::Rough,
            };
            let sigma_k = d_k as f64 * lcm as f64 / num as f64;
            RateExponent {
                d_k,
                sigma_k,
                regime,
            }
        })
        .collect()
}

/// Sum of the rate terms `sum_k c_{n,k}` for a profile taken in the given order.
pub fn rate_bound(profile: &SmoothnessProfile, ordering: &Ordering, n: f64) -> f64 {
    rate_exponents(&profile.permuted(ordering))
        .iter()
        .map(|r| r.rate(n))
        .sum()
}

/// Ordering that arranges coordinates by nondecreasing smoothness; ties keep
/// their original index order.
pub fn best_ordering(profile: &SmoothnessProfile) -> Ordering {
    let mut idx: Vec<usize> = (0..profile.dim()).collect();
    idx.sort_by_key(|&i| profile.values()[i]);
    Ordering { perm: idx }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(v: &[u32]) -> SmoothnessProfile {
        SmoothnessProfile::new(v.to_vec()).unwrap()
    }

    #[test]
    fn exponents_one_two() {
        let r = rate_exponents(&p(&[1, 2]));
        assert_eq!(r[0].d_k, 2);
        assert!((r[0].sigma_k - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(r[0].regime, Regime::Smooth);
        assert_eq!(r[1].d_k, 1);
        assert!((r[1].sigma_k - 2.0).abs() < 1e-15);
        assert_eq!(r[1].regime, Regime::Smooth);
    }

    #[test]
    fn exponents_critical() {
        let r = rate_exponents(&p(&[1, 1]));
        assert_eq!(
            (r[0].d_k, r[0].sigma_k, r[0].regime),
            (2, 1.0, Regime::Critical)
        );
    }

    #[test]
    fn exponents_rough() {
        let r = rate_exponents(&p(&[1, 1, 1, 1, 1]));
        assert_eq!(
            (r[0].d_k, r[0].sigma_k, r[0].regime),
            (5, 1.0, Regime::Rough)
        );
        assert!((r[0].exponent() - 0.2).abs() < 1e-15);
        assert_eq!(r[0].tag(), "n^{-1/5}");
    }

    #[test]
    fn constant_profile_three_regimes() {
        for s in 1..6u32 {
            for d in 1..12usize {
                let r = rate_exponents(&SmoothnessProfile::constant(s, d).unwrap());
                let expected = match (d as u32).cmp(&(2 * s)) {
                    std::cmp::Ordering::Less => Regime::Smooth,
                    std::cmp::Ordering::Equal => Regime::Critical,
                    std::cmp::Ordering::Greater => Regime::Rough,
                };
                assert_eq!(r[0].regime, expected, "s={s} d={d}");
            }
        }
    }

    #[test]
    fn ordering_examples() {
        assert_eq!(best_ordering(&p(&[3, 1, 2])).one_based(), vec![2, 3, 1]);
        assert!(best_ordering(&p(&[2, 2])).is_identity());
        assert!(best_ordering(&p(&[1, 3])).is_identity());
    }

    #[test]
    fn best_ordering_minimizes_bound_for_small_profiles() {
        let prof = p(&[3, 1, 2]);
        let best = best_ordering(&prof);
        let n = 1e4;
        let b = rate_bound(&prof, &best, n);
        for perm in [
            [0, 1, 2],
            [0, 2, 1],
            [1, 0, 2],
            [1, 2, 0],
            [2, 0, 1],
            [2, 1, 0],
        ] {
            let o = Ordering::new(perm.to_vec()).unwrap();
            assert!(b <= rate_bound(&prof, &o, n) + 1e-15);
        }
    }

    #[test]
    fn invalid_inputs() {
        assert!(SmoothnessProfile::new(vec![1, 0]).is_err());
        assert!(Ordering::new(vec![0, 0]).is_err());
        assert!(Ordering::from_one_based(&[0, 1]).is_err());
    }

    #[test]
    fn ordering_inverse_roundtrip() {
        let o = Ordering::new(vec![2, 0, 1]).unwrap();
        let x = [10, 20, 30];
        assert_eq!(o.inverse().apply(&o.apply(&x)), x.to_vec());
        assert_eq!(o.label(), "312");
    }
}
