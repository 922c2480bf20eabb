use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use krflow::densities::Density;
use krflow::error::Error;
use krflow::harness::{
    run_gradcheck, run_ordering, run_rates, run_selftest, run_sine_frequency, train_single,
    with_threads, ExperimentConfig,
};
use krflow::kr_exact::{closed_form_kr, invert_triangular_map, TriangularMap};
use krflow::param_maps::MonotoneMapSpec;

/// Gradient checks above this fail `gradcheck`.
const GRADCHECK_LIMIT: f64 = 1e-4;
/// Round trips above this are flagged by `invert`.
const ROUND_TRIP_LIMIT: f64 = 1e-8;

#[derive(Parser)]
#[command(
    name = "krflow",
    version,
    about = "Triangular transport maps and convergence experiments"
)]
struct Cli {
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw from the configured density into samples.csv.
    Sample {
        /// Number of draws (default: first entry of ns).
        #[arg(long)]
        n: Option<usize>,
    },
    /// Tabulate the exact KR map to a standard Gaussian on a grid.
    KrExact {
        #[arg(long, default_value_t = 21)]
        grid: usize,
    },
    /// Fit one map on ns[0] draws and save it as map.json.
    Train,
    /// Round-trip a saved map on fresh draws.
    Invert {
        /// Trained map (default: <out>/map.json).
        #[arg(long)]
        map: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        points: usize,
    },
    /// Rate study over ns and replicates.
    Rates,
    /// Paired comparison of the two coordinate orderings.
    Ordering,
    /// Sine frequency sweep.
    Sine,
    /// Finite-difference check of the loss gradient.
    Gradcheck,
    /// Built-in checks with exactly known answers.
    Selftest,
}

enum Failure {
    Config(String),
    Threshold(String),
    Other(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Json(j) => Failure::Config(format!(
                "malformed JSON at line {} column {}: {j}",
                j.line(),
                j.column()
            )),
            Error::Config(m) => Failure::Config(m),
            other => Failure::Other(other.to_string()),
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Failure::Config("this subcommand needs --config <path>".into()))?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let mut cfg = ExperimentConfig::from_json(&text)?;
    if let Some(s) = cli.seed {
        cfg.seed.master_seed = s;
    }
    Ok(cfg)
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(Error::from)?;
    std::fs::write(dir.join(name), contents).map_err(Error::from)?;
    Ok(())
}

fn csv_line(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| format!("{v:.16e}"))
        .collect::<Vec<_>>()
        .join(",")
}

fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Selftest => {
            let checks = run_selftest();
            let mut failed = 0;
            for c in &checks {
                println!("{} {}", if c.passed { "PASS" } else { "FAIL" }, c.name);
                if !c.passed {
                    println!("     {}", c.detail);
                    failed += 1;
                }
            }
            if failed > 0 {
                return Err(Failure::Threshold(format!(
                    "{failed} of {} checks failed",
                    checks.len()
                )));
            }
            println!("all {} checks passed", checks.len());
        }
        Command::Sample { n } => {
            let cfg = load_config(cli)?;
            let f = cfg.density.build()?;
            let x = f.sample(n.unwrap_or(cfg.ns[0]), cfg.seed)?;
            let header: Vec<String> = (1..=f.dim()).map(|k| format!("x{k}")).collect();
            let mut s = header.join(",") + "\n";
            for r in x.rows() {
                s += &csv_line(&r.to_vec());
                s.push('\n');
            }
            write(&cli.out, "samples.csv", &s)?;
            println!(
                "wrote {} draws of {} to {}",
                x.nrows(),
                f.name(),
                cli.out.join("samples.csv").display()
            );
        }
        Command::KrExact { grid } => {
            let cfg = load_config(cli)?;
            let f = cfg.density.build()?;
            let g = Density::standard_gaussian(f.dim())?;
            let map = closed_form_kr(&f, &g)?;
            let d = f.dim();
            let mut s = (1..=d)
                .map(|k| format!("x{k}"))
                .chain((1..=d).map(|k| format!("y{k}")))
                .collect::<Vec<_>>()
                .join(",")
                + ",logdet\n";
            for x in f.support().grid(*grid) {
                let y = map.eval(&x)?;
                let ld = map.log_det_jacobian(&x)?;
                let mut row = x.clone();
                row.extend(y);
                row.push(ld);
                s += &csv_line(&row);
                s.push('\n');
            }
            write(&cli.out, "kr_exact.csv", &s)?;
            println!(
                "wrote {} grid points to {}",
                grid.pow(d as u32),
                cli.out.join("kr_exact.csv").display()
            );
        }
        Command::Train => {
            let cfg = load_config(cli)?;
            let (map, result) = match cli.threads {
                Some(t) => with_threads(t, || train_single(&cfg))??,
                None => train_single(&cfg)?,
            };
            write(&cli.out, "map.json", &map.to_json()?)?;
            write(
                &cli.out,
                "train.json",
                &serde_json::to_string_pretty(&result).map_err(Error::from)?,
            )?;
            println!(
                "final loss {:.6} after {} iterations (converged: {}, grad {:.2e})",
                result.final_loss, result.iterations, result.converged, result.grad_norm
            );
        }
        Command::Invert { map, points } => {
            let cfg = load_config(cli)?;
            let path = map.clone().unwrap_or_else(|| cli.out.join("map.json"));
            let text = std::fs::read_to_string(&path).map_err(Error::from)?;
            let spec = MonotoneMapSpec::from_json(&text)?;
            let base = cfg.density.build()?;
            let ordering = cfg.ordering.resolve(base.dim())?.remove(0);
            let f = base.permuted(&ordering)?;
            let x = f.sample(*points, cfg.seed.derive(0x1a7e))?;
            let mut worst = 0.0f64;
            for r in x.rows() {
                let x = r.to_vec();
                let back = invert_triangular_map(&spec, &spec.eval(&x)?, 1e-13)?;
                worst = back
                    .iter()
                    .zip(&x)
                    .fold(worst, |m, (a, b)| m.max((a - b).abs()));
            }
            let report = serde_json::json!({
                "map": path.display().to_string(),
                "points": points,
                "max_abs_error": worst,
                "within_limit": worst <= ROUND_TRIP_LIMIT,
            });
            write(
                &cli.out,
                "invert.json",
                &serde_json::to_string_pretty(&report).map_err(Error::from)?,
            )?;
            println!("round trip max |T(S(x)) - x| = {worst:.3e} over {points} points");
        }
        Command::Rates | Command::Ordering | Command::Sine => {
            let cfg = load_config(cli)?;
            let job = || match cli.command {
                Command::Rates => run_rates(&cfg),
                Command::Ordering => run_ordering(&cfg),
                _ => run_sine_frequency(&cfg),
            };
            let out = match cli.threads {
                Some(t) => with_threads(t, job)??,
                None => job()?,
            };
            let dir = cfg.output_path.clone().unwrap_or_else(|| cli.out.clone());
            out.write(&dir)?;
            println!(
                "wrote {} rows to {}",
                out.rows.len(),
                dir.join("results.csv").display()
            );
            for c in &out.summary.curves {
                match &c.curve {
                    Some(rc) => println!("{} {}: slope {:.3}", c.density, c.ordering, rc.slope),
                    None => println!(
                        "{} {}: no slope ({})",
                        c.density,
                        c.ordering,
                        c.curve_error.as_deref().unwrap_or("")
                    ),
                }
            }
            for p in &out.summary.paired {
                println!(
                    "n={} {} beats {} in {:.0}% of {} pairs (sign test p = {:.3})",
                    p.n,
                    p.first,
                    p.second,
                    100.0 * p.first_wins,
                    p.pairs,
                    p.sign_test_p
                );
            }
            for s in &out.summary.sine {
                println!(
                    "k2={} ordering {} n={}: median test NLL {:.5}",
                    s.k2, s.ordering, s.n, s.median_test_nll
                );
            }
            out.ensure_success()?;
        }
        Command::Gradcheck => {
            let cfg = load_config(cli)?;
            let r = run_gradcheck(&cfg)?;
            println!(
                "max relative error {:.3e} over {} points x {} coefficients",
                r.max_relative_error, r.points, r.params
            );
            if !(r.max_relative_error <= GRADCHECK_LIMIT) {
                return Err(Failure::Threshold(format!(
                    "gradient error above {GRADCHECK_LIMIT:e}"
                )));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Threshold(m)) => {
            eprintln!("check failed: {m}");
            ExitCode::from(3)
        }
        Err(Failure::Other(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
