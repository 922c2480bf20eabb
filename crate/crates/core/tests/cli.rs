use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

use krflow::harness::{ExperimentConfig, CSV_HEADER};
use krflow::param_maps::MonotoneMapSpec;

const QUICK: &str = r#"{
  "experiment": "rates",
  "density": {"kind": "gaussian", "mean": [0.0, 0.0], "std": [1.0, 1.0], "rho": 0.5},
  "map": {"diag_degree": 1, "tail_degree": 1},
  "ns": [200, 400, 800],
  "replicates": 2,
  "test_size": 2000,
  "oracle_mc": 2000,
  "grid_per_axis": 10,
  "seed": {"master_seed": 3}
}"#;

fn krflow(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_krflow"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn selftest_passes() {
    let dir = TempDir::new().unwrap();
    let o = krflow(dir.path(), &["selftest"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("checks passed"));
}

#[test]
fn config_errors_exit_with_2() {
    let dir = TempDir::new().unwrap();
    let missing = krflow(dir.path(), &["rates"]);
    assert_eq!(missing.status.code(), Some(2));

    let bad = write_config(
        dir.path(),
        "bad.json",
        "{\"experiment\": \"rates\",\n \"ns\": [10,",
    );
    let o = krflow(dir.path(), &["rates", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));

    let unknown = write_config(
        dir.path(),
        "unknown.json",
        &QUICK.replace("\"replicates\"", "\"replicate_count\""),
    );
    let o = krflow(
        dir.path(),
        &["rates", "--config", unknown.to_str().unwrap()],
    );
    assert_eq!(o.status.code(), Some(2));

    let empty_ns = write_config(
        dir.path(),
        "empty.json",
        &QUICK.replace("[200, 400, 800]", "[]"),
    );
    let o = krflow(
        dir.path(),
        &["rates", "--config", empty_ns.to_str().unwrap()],
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sample_writes_csv_with_header() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.json", QUICK);
    let o = krflow(
        dir.path(),
        &["sample", "--config", cfg.to_str().unwrap(), "--n", "25"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("samples.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "x1,x2");
    assert_eq!(lines.len(), 26);
    assert!(lines[1..]
        .iter()
        .all(|l| l.split(',').all(|v| v.parse::<f64>().is_ok())));
}

#[test]
fn kr_exact_tabulates_grid() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.json", QUICK);
    let o = krflow(
        dir.path(),
        &["kr-exact", "--config", cfg.to_str().unwrap(), "--grid", "5"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("kr_exact.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("x1,x2,y1,y2,logdet"));
    assert_eq!(text.lines().count(), 26);
}

#[test]
fn train_then_invert_round_trips() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.json", QUICK);
    let c = cfg.to_str().unwrap();
    let o = krflow(dir.path(), &["train", "--config", c]);
    assert!(o.status.success(), "{}", stderr(&o));
    let map =
        MonotoneMapSpec::from_json(&std::fs::read_to_string(dir.path().join("map.json")).unwrap())
            .unwrap();
    assert_eq!(map.dim(), 2);

    let o = krflow(dir.path(), &["invert", "--config", c, "--points", "50"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("invert.json")).unwrap())
            .unwrap();
    assert_eq!(report["within_limit"], true);
    assert!(report["max_abs_error"].as_f64().unwrap() < 1e-8);
}

#[test]
fn rates_output_is_reproducible() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let cfg = write_config(a.path(), "c.json", QUICK);
    let c = cfg.to_str().unwrap();
    for (dir, threads) in [(&a, "1"), (&b, "2")] {
        let o = krflow(dir.path(), &["rates", "--config", c, "--threads", threads]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let ra = std::fs::read_to_string(a.path().join("results.csv")).unwrap();
    let rb = std::fs::read_to_string(b.path().join("results.csv")).unwrap();
    assert_eq!(ra, rb);
    assert_eq!(ra.lines().next(), Some(CSV_HEADER));
    assert_eq!(ra.lines().count(), 1 + 3 * 2);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.path().join("summary.json")).unwrap())
            .unwrap();
    assert!(summary["curves"][0]["curve"]["slope"].is_number());

    // a different seed changes the draws
    let o = krflow(b.path(), &["rates", "--config", c, "--seed", "4"]);
    assert!(o.status.success());
    assert_ne!(
        ra,
        std::fs::read_to_string(b.path().join("results.csv")).unwrap()
    );
}

#[test]
fn gradcheck_passes_on_shipped_config() {
    let dir = TempDir::new().unwrap();
    let shipped = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/gradcheck.json");
    let mut cfg = ExperimentConfig::from_path(&shipped).unwrap();
    cfg.gradcheck_points = 10;
    let p = write_config(dir.path(), "g.json", &cfg.to_json().unwrap());
    let o = krflow(dir.path(), &["gradcheck", "--config", p.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn shipped_configs_parse_and_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        let cfg =
            ExperimentConfig::from_path(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        cfg.validate().unwrap();
        let back = ExperimentConfig::from_json(&cfg.to_json().unwrap()).unwrap();
        assert_eq!(back, cfg);
        seen += 1;
    }
    assert!(seen >= 5);
}
