//! Experiment configuration, read from JSON.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::densities::{Density, GaussianParams, SupportBox};
use crate::error::{Error, Result};
use crate::objective::OptimizerOptions;
use crate::param_maps::{ComponentDegrees, IntegrandForm};
use crate::seed::SeedSpec;
use crate::smoothness::{Ordering, SmoothnessProfile};

/// Smallest allowed held-out set.
pub const MIN_TEST_SIZE: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Rates,
    Ordering,
    SineFrequency,
    Gradcheck,
    Oracle,
}

impl ExperimentKind {
    pub fn label(self) -> &'static str {
        match self {
            Self::Rates => "rates",
            Self::Ordering => "ordering",
            Self::SineFrequency => "sine_frequency",
            Self::Gradcheck => "gradcheck",
            Self::Oracle => "oracle",
        }
    }
}

/// A density family, tagged by `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DensityConfig {
    Gaussian {
        mean: Vec<f64>,
        std: Vec<f64>,
        #[serde(default)]
        rho: f64,
    },
    StandardGaussian {
        dim: usize,
    },
    Mixture {
        weights: Vec<f64>,
        components: Vec<GaussianParams>,
    },
    EightGaussians,
    TwoCircles,
    Banana,
    Sine {
        frequencies: Vec<i64>,
    },
    Uniform {
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    Product {
        factors: Vec<DensitySpec>,
    },
}

/// A density family plus optional support and smoothness overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensitySpec {
    #[serde(flatten)]
    pub family: DensityConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support: Option<SupportBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smoothness: Option<Vec<u32>>,
}

impl DensitySpec {
    pub fn new(family: DensityConfig) -> Self {
        Self {
            family,
            support: None,
            smoothness: None,
        }
    }

    pub fn build(&self) -> Result<Density> {
        let mut d = match &self.family {
            DensityConfig::Gaussian { mean, std, rho } => {
                Density::gaussian(GaussianParams::new(mean.clone(), std.clone(), *rho)?)?
            }
            DensityConfig::StandardGaussian { dim } => Density::standard_gaussian(*dim)?,
            DensityConfig::Mixture {
                weights,
                components,
            } => Density::gaussian_mixture(weights.clone(), components.clone())?,
            DensityConfig::EightGaussians => Density::eight_gaussians()?,
            DensityConfig::TwoCircles => Density::two_circles()?,
            DensityConfig::Banana => Density::banana()?,
            DensityConfig::Sine { frequencies } => Density::sine(frequencies.clone())?,
            DensityConfig::Uniform { lower, upper } => {
                Density::uniform_box(SupportBox::new(lower.clone(), upper.clone())?)?
            }
            DensityConfig::Product { factors } => {
                Density::product(factors.iter().map(|f| f.build()).collect::<Result<_>>()?)?
            }
        };
        if let Some(b) = &self.support {
            d = d.with_support(b.clone())?;
        }
        if let Some(s) = &self.smoothness {
            d = d.with_smoothness(SmoothnessProfile::new(s.clone())?)?;
        }
        Ok(d)
    }
}

/// `"identity"`, `"reversed"`, `"both"`, a digit label such as `"21"`, or
/// a one-based permutation array.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OrderingConfig {
    Label(String),
    Permutation(Vec<usize>),
}

impl Default for OrderingConfig {
    fn default() -> Self {
        Self::Label("identity".into())
    }
}

impl OrderingConfig {
    pub fn resolve(&self, dim: usize) -> Result<Vec<Ordering>> {
        match self {
            Self::Permutation(p) => Ok(vec![Ordering::from_one_based(p)?]),
            Self::Label(l) => match l.as_str() {
                "identity" => Ok(vec![Ordering::identity(dim)]),
                "reversed" => Ok(vec![Ordering::reversed(dim)]),
                "both" => Ok(vec![Ordering::identity(dim), Ordering::reversed(dim)]),
                digits => {
                    let p: Option<Vec<usize>> = digits
                        .chars()
                        .map(|c| c.to_digit(10).map(|v| v as usize))
                        .collect();
                    match p {
                        Some(p) if p.len() == dim => Ok(vec![Ordering::from_one_based(&p)?]),
                        _ => Err(Error::Config(format!("unknown ordering {l:?}"))),
                    }
                }
            },
        }
    }
}

/// Hyperparameters of the monotone triangular map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MapConfig {
    pub diag_degree: usize,
    pub tail_degree: usize,
    /// Overrides the uniform degrees when given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub degrees: Option<Vec<ComponentDegrees>>,
    pub integrand_form: IntegrandForm,
}

impl Default for MapConfig {
    fn default() -> Self {
        Self {
            diag_degree: 2,
            tail_degree: 2,
            degrees: None,
            integrand_form: IntegrandForm::Exp,
        }
    }
}

impl MapConfig {
    pub fn degrees(&self, dim: usize) -> Result<Vec<ComponentDegrees>> {
        match &self.degrees {
            Some(d) if d.len() == dim => Ok(d.clone()),
            Some(d) => Err(Error::Config(format!(
                "map.degrees has {} entries for a {dim}-dimensional density",
                d.len()
            ))),
            None => Ok(ComponentDegrees::uniform(
                dim,
                self.diag_degree,
                self.tail_degree,
            )),
        }
    }
}

/// Hyperparameters of a Jacobian flow; when present it replaces the single map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub depth: usize,
    #[serde(default = "one")]
    pub diag_degree: usize,
    #[serde(default = "one")]
    pub tail_degree: usize,
    #[serde(default)]
    pub integrand_form: IntegrandForm,
}

fn one() -> usize {
    1
}

fn default_replicates() -> usize {
    1
}

fn default_test_size() -> usize {
    100_000
}

fn default_oracle_mc() -> usize {
    20_000
}

fn default_grid() -> usize {
    crate::metrics::DEFAULT_GRID_PER_AXIS
}

fn default_restarts() -> usize {
    1
}

fn default_gradcheck_points() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub density: DensitySpec,
    #[serde(default)]
    pub ordering: OrderingConfig,
    #[serde(default)]
    pub map: MapConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow: Option<FlowConfig>,
    pub ns: Vec<usize>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_test_size")]
    pub test_size: usize,
    #[serde(default)]
    pub seed: SeedSpec,
    #[serde(default)]
    pub optimizer: OptimizerOptions,
    /// Random starts per fit; the lowest training loss wins.
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    /// Second frequencies for the sine experiment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sine_k2: Option<Vec<i64>>,
    /// Draws used for the Sobolev error.
    #[serde(default = "default_oracle_mc")]
    pub oracle_mc: usize,
    #[serde(default = "default_grid")]
    pub grid_per_axis: usize,
    /// Box for the sup-norm grid; defaults to the density support.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_box: Option<SupportBox>,
    /// Keep only grid points where the density is at least this fraction of
    /// its peak. Excludes `grid_box`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_level: Option<f64>,
    /// Skip sup and Sobolev errors even when an exact map exists.
    #[serde(default)]
    pub skip_oracle_errors: bool,
    #[serde(default = "default_gradcheck_points")]
    pub gradcheck_points: usize,
    /// Fill `wall_ms`; off by default so outputs are reproducible byte for byte.
    #[serde(default)]
    pub timing: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<PathBuf>,
}

impl ExperimentConfig {
    /// A config with defaults for everything but the essentials.
    pub fn new(experiment: ExperimentKind, density: DensitySpec, ns: Vec<usize>) -> Self {
        Self {
            experiment,
            density,
            ordering: OrderingConfig::default(),
            map: MapConfig::default(),
            flow: None,
            ns,
            replicates: default_replicates(),
            test_size: default_test_size(),
            seed: SeedSpec::default(),
            optimizer: OptimizerOptions::default(),
            restarts: default_restarts(),
            sine_k2: None,
            oracle_mc: default_oracle_mc(),
            grid_per_axis: default_grid(),
            grid_box: None,
            grid_level: None,
            skip_oracle_errors: false,
            gradcheck_points: default_gradcheck_points(),
            timing: false,
            output_path: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ns.is_empty() {
            return Err(Error::Config("ns must not be empty".into()));
        }
        if self.ns.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("ns must be strictly increasing".into()));
        }
        if self.ns[0] == 0 {
            return Err(Error::Config("sample sizes must be positive".into()));
        }
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        if self.test_size < MIN_TEST_SIZE {
            return Err(Error::Config(format!(
                "test_size must be at least {MIN_TEST_SIZE}"
            )));
        }
        if self.restarts == 0 {
            return Err(Error::Config("restarts must be at least 1".into()));
        }
        if self.experiment == ExperimentKind::SineFrequency {
            if !matches!(self.density.family, DensityConfig::Sine { .. }) {
                return Err(Error::Config("sine_frequency needs a sine density".into()));
            }
            if self.sine_k2.as_ref().is_none_or(|k| k.is_empty()) {
                return Err(Error::Config(
                    "sine_frequency needs a nonempty sine_k2".into(),
                ));
            }
        }
        if let Some(l) = self.grid_level {
            if !(l > 0.0 && l <= 1.0) {
                return Err(Error::Config("grid_level must lie in (0, 1]".into()));
            }
            if self.grid_box.is_some() {
                return Err(Error::Config(
                    "set at most one of grid_box and grid_level".into(),
                ));
            }
        }
        let d = self
            .density
            .build()
            .map_err(|e| Error::Config(format!("density: {e}")))?;
        self.ordering.resolve(d.dim())?;
        self.map.degrees(d.dim())?;
        Ok(())
    }

    /// Parses and validates; JSON errors keep their line and column.
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(p: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(p)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_parses() {
        let c = ExperimentConfig::from_json(
            r#"{"experiment": "rates", "density": {"kind": "banana"}, "ns": [100, 200]}"#,
        )
        .unwrap();
        assert_eq!(c.replicates, 1);
        assert_eq!(c.test_size, 100_000);
        assert_eq!(c.ordering.resolve(2).unwrap(), vec![Ordering::identity(2)]);
    }

    #[test]
    fn nested_product_and_overrides() {
        let c = ExperimentConfig::from_json(
            r#"{"experiment": "oracle",
                "density": {"kind": "product", "factors": [
                    {"kind": "standard_gaussian", "dim": 1},
                    {"kind": "uniform", "lower": [0], "upper": [2]}],
                    "smoothness": [1, 3]},
                "ordering": "both", "ns": [50]}"#,
        )
        .unwrap();
        let d = c.density.build().unwrap();
        assert_eq!(d.smoothness().values(), &[1, 3]);
        assert_eq!(c.ordering.resolve(2).unwrap().len(), 2);
    }

    #[test]
    fn invalid_configs() {
        let base = r#"{"experiment": "rates", "density": {"kind": "banana"}, "#;
        for tail in [
            r#""ns": [200, 100]}"#,
            r#""ns": [100], "replicates": 0}"#,
            r#""ns": [100], "test_size": 10}"#,
            r#""ns": [100], "ordering": "312"}"#,
        ] {
            let e = ExperimentConfig::from_json(&format!("{base}{tail}")).unwrap_err();
            assert!(matches!(e, Error::Config(_)), "{e}");
        }
        let e = ExperimentConfig::from_json("{\n  \"experiment\": 3\n}").unwrap_err();
        match e {
            Error::Json(j) => assert_eq!(j.line(), 2),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn round_trip() {
        let mut c = ExperimentConfig::new(
            ExperimentKind::SineFrequency,
            DensitySpec::new(DensityConfig::Sine {
                frequencies: vec![1, 3],
            }),
            vec![400],
        );
        c.sine_k2 = Some(vec![3, 5]);
        c.validate().unwrap();
        assert_eq!(
            ExperimentConfig::from_json(&c.to_json().unwrap()).unwrap(),
            c
        );
    }
}
