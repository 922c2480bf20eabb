//! Seeded replicate loops and their CSV/JSON outputs.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use ndarray::Array2;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{DensityConfig, ExperimentConfig, ExperimentKind};
use crate::densities::Density;
use crate::error::{Error, Result};
use crate::kr_exact::{closed_form_kr, ExactKrMap, TriangularMap};
use crate::metrics::{
    fit_loglog_slope, mean_and_stderr, median, sign_test_p_value, sobolev_error_on, sup_grid_error,
    sup_grid_error_above_level, test_nll, RateCurve,
};
use crate::objective::{empirical_loss, loss_and_gradient, optimize, Fit, LossConfig, Trainable};
use crate::param_maps::{JacobianFlowSpec, MonotoneMapSpec};
use crate::seed::SeedSpec;
use crate::smoothness::Ordering;

/// Stream of the shared held-out set.
const TEST_STREAM: u64 = u64::MAX;
/// Stream of the draws behind the Sobolev error.
const SOBOLEV_STREAM: u64 = u64::MAX - 1;

/// Gradient entries smaller than this are compared absolutely.
const GRADCHECK_FLOOR: f64 = 1e-3;

/// CSV header; the column order is part of the output format.
pub const CSV_HEADER: &str =
    "experiment,density,ordering,n,replicate,seed_stream,test_nll,mc_kl,sup_err,sobolev_err,iters,converged,wall_ms";

/// Training stream of replicate `rep` at the `n_index`-th sample size.
/// Depends only on these two indices, never on the worker.
pub fn replicate_stream(n_index: usize, rep: usize) -> u64 {
    ((n_index as u64) << 32) | rep as u64
}

/// One fitted replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub density: String,
    pub ordering: String,
    pub n: usize,
    pub replicate: usize,
    pub seed_stream: u64,
    pub test_nll: f64,
    pub mc_kl: Option<f64>,
    pub sup_err: Option<f64>,
    pub sobolev_err: Option<f64>,
    pub iters: usize,
    pub converged: bool,
    pub wall_ms: Option<u64>,
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

impl ResultRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.experiment,
            self.density,
            self.ordering,
            self.n,
            self.replicate,
            self.seed_stream,
            fmt_f64(self.test_nll),
            fmt_opt(self.mc_kl),
            fmt_opt(self.sup_err),
            fmt_opt(self.sobolev_err),
            self.iters,
            self.converged,
            self.wall_ms.map(|w| w.to_string()).unwrap_or_default()
        )
    }
}

/// Rows as CSV text, header first.
pub fn rows_to_csv(rows: &[ResultRow]) -> String {
    let mut s = String::with_capacity(64 * (rows.len() + 1));
    s.push_str(CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.to_csv_line());
        s.push('\n');
    }
    s
}

/// FNV-1a over the bit patterns of a sample matrix.
pub fn sample_hash(data: &Array2<f64>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in data.iter() {
        for b in v.to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

fn permute_columns(data: &Array2<f64>, o: &Ordering) -> Array2<f64> {
    if o.is_identity() {
        return data.clone();
    }
    let mut out = data.clone();
    for (mut dst, src) in out.rows_mut().into_iter().zip(data.rows()) {
        let y = o.apply(&src.to_vec());
        dst.iter_mut().zip(y).for_each(|(a, b)| *a = b);
    }
    out
}

/// One density variant seen through one coordinate ordering.
struct Problem {
    ordering: Ordering,
    density_name: String,
    f: Density,
    g: Density,
    oracle: Option<ExactKrMap>,
    test: Array2<f64>,
    mean_log_f_test: f64,
    sobolev_data: Option<Array2<f64>>,
}

impl Problem {
    fn new(
        base: &Density,
        ordering: &Ordering,
        cfg: &ExperimentConfig,
        test_base: &Array2<f64>,
    ) -> Result<Self> {
        let f = base.permuted(ordering)?;
        let g = Density::standard_gaussian(f.dim())?;
        let test = permute_columns(test_base, ordering);
        let lf: Vec<f64> = test
            .rows()
            .into_iter()
            .map(|r| f.log_density_or_neg_inf(&r.to_vec()))
            .collect();
        let mean_log_f_test = lf.iter().sum::<f64>() / lf.len() as f64;
        let want_oracle = !cfg.skip_oracle_errors && cfg.flow.is_none();
        let oracle = if want_oracle {
            closed_form_kr(&f, &g).ok()
        } else {
            None
        };
        let sobolev_data = match oracle {
            Some(_) => Some(f.sample(cfg.oracle_mc.max(1), cfg.seed.with_stream(SOBOLEV_STREAM))?),
            None => None,
        };
        Ok(Self {
            ordering: ordering.clone(),
            density_name: base.name(),
            f,
            g,
            oracle,
            test,
            mean_log_f_test,
            sobolev_data,
        })
    }
}

/// Per-coordinate mean and standard deviation of the data.
fn column_moments(data: &Array2<f64>) -> (Vec<f64>, Vec<f64>) {
    let n = data.nrows() as f64;
    let d = data.ncols();
    let mut mean = vec![0.0; d];
    let mut sd = vec![0.0; d];
    for k in 0..d {
        let c = data.column(k);
        mean[k] = c.sum() / n;
        let v = c.iter().map(|x| (x - mean[k]).powi(2)).sum::<f64>() / n;
        sd[k] = if v > 0.0 { v.sqrt() } else { 1.0 };
    }
    (mean, sd)
}

/// Starting map: standardizes each coordinate with the training moments.
pub fn standardizing_init(
    cfg: &ExperimentConfig,
    f: &Density,
    g: &Density,
    data: &Array2<f64>,
) -> Result<MonotoneMapSpec> {
    let (mean, sd) = column_moments(data);
    let scales: Vec<f64> = sd.iter().map(|s| 1.0 / s).collect();
    let offsets: Vec<f64> = mean.iter().zip(&sd).map(|(m, s)| -m / s).collect();
    MonotoneMapSpec::diagonal_affine(
        f.support().clone(),
        g.support().clone(),
        cfg.map.degrees(f.dim())?,
        cfg.map.integrand_form,
        &scales,
        &offsets,
    )
}

fn jitter<T: Trainable>(map: &T, seed: SeedSpec, scale: f64) -> Result<T> {
    let mut rng = seed.rng();
    let th: Vec<f64> = map
        .params()
        .iter()
        .map(|t| t + rng.random_range(-scale..scale))
        .collect();
    map.with_params(&th)
}

/// Best of `restarts` fits, the first from `init` and the rest jittered.
fn fit_with_restarts<T: Trainable>(
    init: &T,
    data: &Array2<f64>,
    loss: &LossConfig,
    cfg: &ExperimentConfig,
    seed: SeedSpec,
) -> Result<Fit<T>> {
    let mut best: Option<Fit<T>> = None;
    for r in 0..cfg.restarts {
        let start = if r == 0 {
            init.clone()
        } else {
            jitter(init, seed.derive(r as u64), 0.1)?
        };
        let Ok(fit) = optimize(&start, data, loss, &cfg.optimizer) else {
            continue;
        };
        if best
            .as_ref()
            .is_none_or(|b| fit.result.final_loss < b.result.final_loss)
        {
            best = Some(fit);
        }
    }
    best.ok_or_else(|| Error::Experiment("every start failed".into()))
}

/// What a single replicate produced, before it becomes a row.
struct Outcome {
    test_nll: f64,
    sup_err: Option<f64>,
    sobolev_err: Option<f64>,
    iters: usize,
    converged: bool,
}

fn evaluate_fit<T: Trainable>(
    p: &Problem,
    fit: &Fit<T>,
    tri: Option<&dyn TriangularMap>,
    cfg: &ExperimentConfig,
) -> Result<Outcome> {
    let nll = test_nll(&fit.map, &p.test, &p.g)?;
    let (mut sup_err, mut sobolev_err) = (None, None);
    if let (Some(oracle), Some(map), Some(sd)) = (&p.oracle, tri, &p.sobolev_data) {
        sup_err = Some(match cfg.grid_level {
            Some(level) => sup_grid_error_above_level(map, oracle, &p.f, cfg.grid_per_axis, level)?,
            None => sup_grid_error(map, oracle, cfg.grid_per_axis, cfg.grid_box.as_ref())?,
        });
        sobolev_err = Some(sobolev_error_on(map, oracle, sd)?.value);
    }
    Ok(Outcome {
        test_nll: nll,
        sup_err,
        sobolev_err,
        iters: fit.result.iterations,
        converged: fit.result.converged,
    })
}

fn run_replicate(
    p: &Problem,
    train: &Array2<f64>,
    cfg: &ExperimentConfig,
    seed: SeedSpec,
) -> Result<Outcome> {
    let loss = LossConfig::new(p.g.clone());
    match &cfg.flow {
        Some(fc) => {
            let init = JacobianFlowSpec::alternating(
                p.f.support().clone(),
                fc.depth,
                fc.diag_degree,
                fc.tail_degree,
                fc.integrand_form,
            )?;
            let fit = fit_with_restarts(&init, train, &loss, cfg, seed)?;
            evaluate_fit(p, &fit, None, cfg)
        }
        None => {
            let init = standardizing_init(cfg, &p.f, &p.g, train)?;
            let fit = fit_with_restarts(&init, train, &loss, cfg, seed)?;
            evaluate_fit(p, &fit, Some(&fit.map), cfg)
        }
    }
}

/// Trains one map on `ns[0]` draws with replicate 0's stream.
pub fn train_single(
    cfg: &ExperimentConfig,
) -> Result<(MonotoneMapSpec, crate::objective::OptimizationResult)> {
    let base = cfg.density.build()?;
    let ordering = cfg.ordering.resolve(base.dim())?.remove(0);
    let f = base.permuted(&ordering)?;
    let g = Density::standard_gaussian(f.dim())?;
    let seed = cfg.seed.with_stream(replicate_stream(0, 0));
    let train = permute_columns(&base.sample(cfg.ns[0], seed)?, &ordering);
    let init = standardizing_init(cfg, &f, &g, &train)?;
    let fit = fit_with_restarts(&init, &train, &LossConfig::new(g), cfg, seed)?;
    Ok((fit.map, fit.result))
}

struct Task {
    variant: usize,
    ordering: usize,
    n_index: usize,
    rep: usize,
}

/// Per-ordering summary of a rate study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSummary {
    pub density: String,
    pub ordering: String,
    /// Floor-subtracted test NLL, i.e. the test-set KL estimate.
    pub metric: String,
    pub floor: f64,
    pub floor_method: String,
    pub curve: Option<RateCurve>,
    pub curve_error: Option<String>,
    pub median_test_nll: Vec<f64>,
    pub median_sup_err: Vec<Option<f64>>,
    pub median_sobolev_err: Vec<Option<f64>>,
}

/// One pair of the paired ordering design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    pub n: usize,
    pub replicate: usize,
    pub seed_stream: u64,
    pub sample_hash: u64,
    pub nll_first: f64,
    pub nll_second: f64,
}

impl PairRow {
    /// Positive when the first ordering wins.
    pub fn difference(&self) -> f64 {
        self.nll_second - self.nll_first
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedSummary {
    pub density: String,
    pub first: String,
    pub second: String,
    pub n: usize,
    pub pairs: usize,
    /// Fraction of pairs where the first ordering has the lower test NLL.
    pub first_wins: f64,
    pub median_difference: f64,
    pub sign_test_p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SineSummary {
    pub density: String,
    pub k2: i64,
    pub ordering: String,
    pub n: usize,
    pub median_test_nll: f64,
    pub median_mc_kl: f64,
}

/// A group of replicates with too many failures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureGroup {
    pub density: String,
    pub ordering: String,
    pub n: usize,
    pub failed: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub experiment: String,
    pub curves: Vec<CurveSummary>,
    pub pairs: Vec<PairRow>,
    pub paired: Vec<PairedSummary>,
    pub sine: Vec<SineSummary>,
    pub failures: Vec<FailureGroup>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    pub summary: ExperimentSummary,
}

impl ExperimentOutput {
    pub fn csv(&self) -> String {
        rows_to_csv(&self.rows)
    }

    /// Writes `results.csv`, `summary.json` and, for paired runs, `pairs.csv`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("results.csv"), self.csv())?;
        std::fs::write(
            dir.join("summary.json"),
            serde_json::to_string_pretty(&self.summary)?,
        )?;
        if !self.summary.pairs.is_empty() {
            let mut s = String::from(
                "n,replicate,seed_stream,sample_hash,nll_first,nll_second,difference\n",
            );
            for p in &self.summary.pairs {
                let _ = writeln!(
                    s,
                    "{},{},{},{:016x},{},{},{}",
                    p.n,
                    p.replicate,
                    p.seed_stream,
                    p.sample_hash,
                    fmt_f64(p.nll_first),
                    fmt_f64(p.nll_second),
                    fmt_f64(p.difference())
                );
            }
            std::fs::write(dir.join("pairs.csv"), s)?;
        }
        Ok(())
    }

    /// `Err` when more than half the replicates failed at some sample size.
    pub fn ensure_success(&self) -> Result<()> {
        match self.summary.failures.first() {
            None => Ok(()),
            Some(g) => Err(Error::Experiment(format!(
                "{} of {} replicates failed for {} ordering {} at n = {}",
                g.failed, g.total, g.density, g.ordering, g.n
            ))),
        }
    }
}

/// Runs every (variant, ordering, n, replicate) task and returns the rows in
/// that nesting order, plus the training-sample hashes.
fn run_grid(
    cfg: &ExperimentConfig,
    variants: &[Density],
) -> Result<(Vec<ResultRow>, Vec<u64>, Vec<Vec<Problem>>)> {
    cfg.validate()?;
    let dim = variants[0].dim();
    let orderings = cfg.ordering.resolve(dim)?;
    let problems: Vec<Vec<Problem>> = variants
        .iter()
        .map(|base| {
            let test_base = base.sample(cfg.test_size, cfg.seed.with_stream(TEST_STREAM))?;
            orderings
                .iter()
                .map(|o| Problem::new(base, o, cfg, &test_base))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut tasks = Vec::new();
    for variant in 0..variants.len() {
        for ordering in 0..orderings.len() {
            for n_index in 0..cfg.ns.len() {
                for rep in 0..cfg.replicates {
                    tasks.push(Task {
                        variant,
                        ordering,
                        n_index,
                        rep,
                    });
                }
            }
        }
    }
    let results: Vec<(ResultRow, u64)> = tasks
        .par_iter()
        .map(|t| {
            let p = &problems[t.variant][t.ordering];
            let n = cfg.ns[t.n_index];
            let stream = replicate_stream(t.n_index, t.rep);
            let seed = cfg.seed.with_stream(stream);
            let start = Instant::now();
            let raw = variants[t.variant].sample(n, seed)?;
            let hash = sample_hash(&raw);
            let train = permute_columns(&raw, &p.ordering);
            let outcome = run_replicate(p, &train, cfg, seed);
            let wall_ms = cfg.timing.then(|| start.elapsed().as_millis() as u64);
            let row = match outcome {
                Ok(o) => ResultRow {
                    experiment: cfg.experiment.label().into(),
                    density: p.density_name.clone(),
                    ordering: p.ordering.label(),
                    n,
                    replicate: t.rep,
                    seed_stream: stream,
                    test_nll: o.test_nll,
                    mc_kl: Some(o.test_nll + p.mean_log_f_test),
                    sup_err: o.sup_err,
                    sobolev_err: o.sobolev_err,
                    iters: o.iters,
                    converged: o.converged,
                    wall_ms,
                },
                Err(_) => ResultRow {
                    experiment: cfg.experiment.label().into(),
                    density: p.density_name.clone(),
                    ordering: p.ordering.label(),
                    n,
                    replicate: t.rep,
                    seed_stream: stream,
                    test_nll: f64::NAN,
                    mc_kl: None,
                    sup_err: None,
                    sobolev_err: None,
                    iters: 0,
                    converged: false,
                    wall_ms,
                },
            };
            Ok((row, hash))
        })
        .collect::<Result<_>>()?;
    let (rows, hashes) = results.into_iter().unzip();
    Ok((rows, hashes, problems))
}

fn failures(cfg: &ExperimentConfig, rows: &[ResultRow]) -> Vec<FailureGroup> {
    let mut out = Vec::new();
    for group in rows.chunks(cfg.replicates) {
        let failed = group.iter().filter(|r| !r.converged).count();
        if 2 * failed > group.len() {
            out.push(FailureGroup {
                density: group[0].density.clone(),
                ordering: group[0].ordering.clone(),
                n: group[0].n,
                failed,
                total: group.len(),
            });
        }
    }
    out
}

fn converged_values(group: &[ResultRow], pick: impl Fn(&ResultRow) -> Option<f64>) -> Vec<f64> {
    group
        .iter()
        .filter(|r| r.converged)
        .filter_map(pick)
        .collect()
}

fn median_opt(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| median(v))
}

fn curve_summaries(
    cfg: &ExperimentConfig,
    rows: &[ResultRow],
    problems: &[Vec<Problem>],
) -> Vec<CurveSummary> {
    let per_curve = cfg.ns.len() * cfg.replicates;
    rows.chunks(per_curve)
        .zip(problems.iter().flatten())
        .map(|(block, p)| {
            let groups: Vec<&[ResultRow]> = block.chunks(cfg.replicates).collect();
            let kl: Vec<Vec<f64>> = groups
                .iter()
                .map(|g| converged_values(g, |r| r.mc_kl))
                .collect();
            let (curve, curve_error) = match fit_loglog_slope(&cfg.ns, &kl) {
                Ok(c) => (Some(c), None),
                Err(e) => (None, Some(e.to_string())),
            };
            CurveSummary {
                density: p.density_name.clone(),
                ordering: p.ordering.label(),
                metric: "test_nll minus exact test-set entropy".into(),
                floor: -p.mean_log_f_test,
                floor_method: "mean of -ln f over the test set".into(),
                curve,
                curve_error,
                median_test_nll: groups
                    .iter()
                    .map(|g| {
                        median_opt(&converged_values(g, |r| Some(r.test_nll))).unwrap_or(f64::NAN)
                    })
                    .collect(),
                median_sup_err: groups
                    .iter()
                    .map(|g| median_opt(&converged_values(g, |r| r.sup_err)))
                    .collect(),
                median_sobolev_err: groups
                    .iter()
                    .map(|g| median_opt(&converged_values(g, |r| r.sobolev_err)))
                    .collect(),
            }
        })
        .collect()
}

/// Rate study: every ordering, sample size and replicate.
pub fn run_rates(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let base = cfg.density.build()?;
    let (rows, _, problems) = run_grid(cfg, std::slice::from_ref(&base))?;
    let summary = ExperimentSummary {
        experiment: cfg.experiment.label().into(),
        curves: curve_summaries(cfg, &rows, &problems),
        pairs: Vec::new(),
        paired: Vec::new(),
        sine: Vec::new(),
        failures: failures(cfg, &rows),
    };
    Ok(ExperimentOutput { rows, summary })
}

/// Paired comparison of two orderings on shared training samples.
pub fn run_ordering(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let base = cfg.density.build()?;
    if cfg.ordering.resolve(base.dim())?.len() != 2 {
        return Err(Error::Config(
            "the ordering experiment needs \"ordering\": \"both\"".into(),
        ));
    }
    let (rows, hashes, problems) = run_grid(cfg, std::slice::from_ref(&base))?;
    let half = rows.len() / 2;
    let mut pairs = Vec::with_capacity(half);
    for i in 0..half {
        let (a, b) = (&rows[i], &rows[half + i]);
        if hashes[i] != hashes[half + i] {
            return Err(Error::Experiment(format!(
                "paired samples differ at n = {}, replicate {}",
                a.n, a.replicate
            )));
        }
        if a.converged && b.converged {
            pairs.push(PairRow {
                n: a.n,
                replicate: a.replicate,
                seed_stream: a.seed_stream,
                sample_hash: hashes[i],
                nll_first: a.test_nll,
                nll_second: b.test_nll,
            });
        }
    }
    let paired = cfg
        .ns
        .iter()
        .map(|&n| {
            let at: Vec<&PairRow> = pairs.iter().filter(|p| p.n == n).collect();
            let diffs: Vec<f64> = at.iter().map(|p| p.difference()).collect();
            let wins = diffs.iter().filter(|d| **d > 0.0).count();
            let nonzero = diffs.iter().filter(|d| **d != 0.0).count();
            PairedSummary {
                density: base.name(),
                first: problems[0][0].ordering.label(),
                second: problems[0][1].ordering.label(),
                n,
                pairs: at.len(),
                first_wins: if at.is_empty() {
                    f64::NAN
                } else {
                    wins as f64 / at.len() as f64
                },
                median_difference: median(&diffs),
                sign_test_p: sign_test_p_value(wins, nonzero),
            }
        })
        .collect();
    let summary = ExperimentSummary {
        experiment: cfg.experiment.label().into(),
        curves: Vec::new(),
        pairs,
        paired,
        sine: Vec::new(),
        failures: failures(cfg, &rows),
    };
    Ok(ExperimentOutput { rows, summary })
}

/// Sine densities with the second frequency swept over `sine_k2`.
pub fn run_sine_frequency(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let DensityConfig::Sine { frequencies } = &cfg.density.family else {
        return Err(Error::Config("sine_frequency needs a sine density".into()));
    };
    let k2s = cfg
        .sine_k2
        .clone()
        .ok_or_else(|| Error::Config("sine_frequency needs sine_k2".into()))?;
    if frequencies.len() < 2 {
        return Err(Error::Config(
            "sine density must be at least two-dimensional".into(),
        ));
    }
    let variants: Vec<Density> = k2s
        .iter()
        .map(|&k2| {
            let mut k = frequencies.clone();
            k[1] = k2;
            Density::sine(k)
        })
        .collect::<Result<_>>()?;
    let (rows, _, problems) = run_grid(cfg, &variants)?;
    let mut sine = Vec::new();
    let per_ordering = cfg.ns.len() * cfg.replicates;
    let mut blocks = rows.chunks(per_ordering);
    for (&k2, variant) in k2s.iter().zip(&problems) {
        for (p, block) in variant.iter().zip(blocks.by_ref()) {
            for group in block.chunks(cfg.replicates) {
                sine.push(SineSummary {
                    density: p.density_name.clone(),
                    k2,
                    ordering: p.ordering.label(),
                    n: group[0].n,
                    median_test_nll: median(&converged_values(group, |r| Some(r.test_nll))),
                    median_mc_kl: median(&converged_values(group, |r| r.mc_kl)),
                });
            }
        }
    }
    let summary = ExperimentSummary {
        experiment: cfg.experiment.label().into(),
        curves: Vec::new(),
        pairs: Vec::new(),
        paired: Vec::new(),
        sine,
        failures: failures(cfg, &rows),
    };
    Ok(ExperimentOutput { rows, summary })
}

/// Rates, ordering or sine study, chosen by `cfg.experiment`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    match cfg.experiment {
        ExperimentKind::Rates => run_rates(cfg),
        ExperimentKind::Ordering => run_ordering(cfg),
        ExperimentKind::SineFrequency => run_sine_frequency(cfg),
        other => Err(Error::Config(format!(
            "{} does not produce result rows",
            other.label()
        ))),
    }
}

/// Runs `job` on a dedicated pool of `threads` workers.
pub fn with_threads<R: Send>(threads: usize, job: impl FnOnce() -> R + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Experiment(e.to_string()))?;
    Ok(pool.install(job))
}

/// Finite-difference check of the loss gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub points: usize,
    pub params: usize,
    /// `max |analytic - fd| / max(|fd|, 1e-3)`.
    pub max_relative_error: f64,
}

/// Central-difference check of the loss gradient at random coefficients.
pub fn run_gradcheck(cfg: &ExperimentConfig) -> Result<GradcheckReport> {
    cfg.validate()?;
    let base = cfg.density.build()?;
    let ordering = cfg.ordering.resolve(base.dim())?.remove(0);
    let f = base.permuted(&ordering)?;
    let g = Density::standard_gaussian(f.dim())?;
    let seed = cfg.seed.with_stream(replicate_stream(0, 0));
    let data = permute_columns(&base.sample(cfg.ns[0], seed)?, &ordering);
    let init = standardizing_init(cfg, &f, &g, &data)?;
    let loss = LossConfig::new(g);
    let h = 1e-6;
    let mut worst = 0.0f64;
    for p in 0..cfg.gradcheck_points {
        let spec = jitter(&init, seed.derive(1000 + p as u64), 0.2)?;
        let (_, grad) = loss_and_gradient(&spec, &data, &loss)?;
        let th = spec.theta().to_vec();
        for j in 0..th.len() {
            let mut a = th.clone();
            a[j] += h;
            let mut b = th.clone();
            b[j] -= h;
            let fd = (empirical_loss(&spec.with_theta(&a)?, &data, &loss)?
                - empirical_loss(&spec.with_theta(&b)?, &data, &loss)?)
                / (2.0 * h);
            worst = worst.max((grad[j] - fd).abs() / fd.abs().max(GRADCHECK_FLOOR));
        }
    }
    Ok(GradcheckReport {
        points: cfg.gradcheck_points,
        params: init.n_params(),
        max_relative_error: worst,
    })
}

/// Exact-map reference values for one ordering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleEntry {
    pub density: String,
    pub ordering: String,
    /// Test-set mean of `psi` for the exact map; zero up to rounding.
    pub exact_kl: f64,
    pub exact_kl_stderr: f64,
    /// Test NLL of the exact map, the floor of every fitted map.
    pub exact_test_nll: f64,
    /// Test NLL of the standardizing affine start.
    pub affine_test_nll: f64,
}

/// Exact-map reference values for each configured ordering.
pub fn run_oracle(cfg: &ExperimentConfig) -> Result<Vec<OracleEntry>> {
    cfg.validate()?;
    let base = cfg.density.build()?;
    let test_base = base.sample(cfg.test_size, cfg.seed.with_stream(TEST_STREAM))?;
    let train_base = base.sample(cfg.ns[0], cfg.seed.with_stream(replicate_stream(0, 0)))?;
    cfg.ordering
        .resolve(base.dim())?
        .iter()
        .map(|o| {
            let f = base.permuted(o)?;
            let g = Density::standard_gaussian(f.dim())?;
            let test = permute_columns(&test_base, o);
            let exact = closed_form_kr(&f, &g)?;
            let psi = crate::objective::row_losses(
                &crate::objective::Exact(&exact),
                &test,
                &LossConfig::with_target(g.clone(), f.clone()),
            )?;
            let (kl, se) = mean_and_stderr(&psi);
            let affine = standardizing_init(cfg, &f, &g, &permute_columns(&train_base, o))?;
            Ok(OracleEntry {
                density: base.name(),
                ordering: o.label(),
                exact_kl: kl,
                exact_kl_stderr: se,
                exact_test_nll: test_nll(&crate::objective::Exact(&exact), &test, &g)?,
                affine_test_nll: test_nll(&affine, &test, &g)?,
            })
        })
        .collect()
}
