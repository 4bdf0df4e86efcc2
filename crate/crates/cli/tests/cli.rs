use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const TINY_WS: &str = r#"
[estimator]
kind = "counting"
delta = 0.2
[design]
kind = "grid"
axes = [{ min = 0.0, max = 20.0, step = 4.0 }, { min = 1.0, max = 3.0, step = 0.5 }]
"#;

fn ssm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ssm"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = ssm(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

/// Data rows of a CSV output: provenance comments and the header dropped.
fn rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn assert_provenance(path: &Path, command: &str) {
    let text = fs::read_to_string(path).unwrap();
    let head: Vec<&str> = text.lines().take(4).collect();
    assert_eq!(
        head[0],
        format!("# tool_version={}", env!("CARGO_PKG_VERSION")),
        "{path:?}"
    );
    assert_eq!(head[1], format!("# command={command}"));
    assert!(head[2].starts_with("# config_hash=") && head[2].len() == 14 + 64);
    assert!(head[3].starts_with("# seed="));
}

fn ingest(dir: &Path, out: &str, seed: &str) -> PathBuf {
    ok(dir, &["--out", out, "--seed", seed, "ingest"]);
    dir.join(out)
}

#[test]
fn synthetic_ingest_is_deterministic_and_consistent() {
    let tmp = TempDir::new().unwrap();
    let a = ingest(tmp.path(), "a", "7");
    let b = ingest(tmp.path(), "b", "7");
    let pairs = fs::read(a.join("pairs.csv")).unwrap();
    assert_eq!(pairs, fs::read(b.join("pairs.csv")).unwrap());
    assert_provenance(&a.join("pairs.csv"), "ingest");
    assert_provenance(&a.join("episodes.csv"), "ingest");

    let per_episode: usize = rows(&a.join("episodes.csv"))
        .iter()
        .map(|r| r[5].parse::<usize>().unwrap())
        .sum();
    let n_pairs = rows(&a.join("pairs.csv")).len();
    assert!(n_pairs > 0);
    assert_eq!(per_episode, n_pairs);

    // Re-ingesting the written trajectories reproduces the pairs.
    ok(
        tmp.path(),
        &["--out", "c", "--seed", "7", "ingest", "a/trajectories.csv"],
    );
    assert_eq!(rows(&tmp.path().join("c/pairs.csv")).len(), n_pairs);
}

#[test]
fn empty_trajectory_file_is_invalid_input() {
    let tmp = TempDir::new().unwrap();
    write(tmp.path(), "empty.csv", "");
    let out = ssm(tmp.path(), &["--out", "o", "ingest", "empty.csv"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_configs_and_names_exit_with_two() {
    let tmp = TempDir::new().unwrap();
    write(tmp.path(), "bad.toml", "root_seed = 1\nbogus = true\n");
    let out = ssm(
        tmp.path(),
        &["--config", "bad.toml", "--out", "o", "replicate-ws"],
    );
    assert_eq!(out.status.code(), Some(2));
    let out = ssm(tmp.path(), &["--out", "o", "derive", "--model", "lateral"]);
    assert_eq!(out.status.code(), Some(2));
    let out = ssm(
        tmp.path(),
        &["--out", "o", "derive", "--estimator", "bootstrap"],
    );
    assert_eq!(out.status.code(), Some(2));
    let out = ssm(
        tmp.path(),
        &["--out", "o", "derive", "--model", "longitudinal"],
    );
    assert_eq!(out.status.code(), Some(2));
    let out = ssm(tmp.path(), &["--out", "o", "benchmark", "missing.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn derive_is_deterministic_across_thread_counts() {
    let tmp = TempDir::new().unwrap();
    write(tmp.path(), "ws.toml", TINY_WS);
    ok(tmp.path(), &["--config", "ws.toml", "--out", "a", "derive"]);
    ok(
        tmp.path(),
        &[
            "--config",
            "ws.toml",
            "--out",
            "b",
            "--threads",
            "1",
            "derive",
        ],
    );
    let a = fs::read(tmp.path().join("a/table.json")).unwrap();
    assert_eq!(a, fs::read(tmp.path().join("b/table.json")).unwrap());
    let table: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(table["metadata"]["mode"], "ws");
    assert_eq!(table["metadata"]["config_hash"].as_str().unwrap().len(), 64);
    assert_provenance(&tmp.path().join("a/table_points.csv"), "derive");
    assert_eq!(rows(&tmp.path().join("a/table_points.csv")).len(), 30);

    // A different seed changes the estimates.
    ok(
        tmp.path(),
        &["--config", "ws.toml", "--out", "c", "--seed", "2", "derive"],
    );
    assert_ne!(a, fs::read(tmp.path().join("c/table.json")).unwrap());
}

#[test]
fn evaluate_returns_table_values_and_reports_bad_rows() {
    let tmp = TempDir::new().unwrap();
    write(
        tmp.path(),
        "ws.toml",
        &format!("{TINY_WS}[bandwidth]\nnw_diagonal = [1e-6, 1e-6]\n"),
    );
    ok(tmp.path(), &["--config", "ws.toml", "--out", "d", "derive"]);
    let points = rows(&tmp.path().join("d/table_points.csv"));
    let target = points.iter().find(|r| r[0] == "12" && r[1] == "2").unwrap();

    write(tmp.path(), "q.csv", "ttc,dv\n2,12\n");
    ok(
        tmp.path(),
        &["--out", "e", "evaluate", "d/table.json", "q.csv"],
    );
    let got = rows(&tmp.path().join("e/evaluate.csv"));
    assert_eq!(got.len(), 1);
    assert_eq!(got[0][3], target[2]);

    write(
        tmp.path(),
        "bad.csv",
        "dv,ttc\n12,2\nfast,2\n12\n4,inf\n8,1.5\n",
    );
    let out = ssm(
        tmp.path(),
        &["--out", "f", "evaluate", "d/table.json", "bad.csv"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(rows(&tmp.path().join("f/evaluate.csv")).len(), 2);
    let errors = rows(&tmp.path().join("f/evaluate_errors.csv"));
    let lines: Vec<&str> = errors.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(lines, ["3", "4", "5"]);

    write(tmp.path(), "wrong.csv", "speed,ttc\n1,2\n");
    let out = ssm(
        tmp.path(),
        &["--out", "g", "evaluate", "d/table.json", "wrong.csv"],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn evaluate_json_output_wraps_metadata() {
    let tmp = TempDir::new().unwrap();
    write(tmp.path(), "ws.toml", TINY_WS);
    ok(tmp.path(), &["--config", "ws.toml", "--out", "d", "derive"]);
    write(tmp.path(), "q.csv", "dv,ttc\n10,2\n30,1\n");
    ok(
        tmp.path(),
        &[
            "--out",
            "e",
            "--format",
            "json",
            "evaluate",
            "d/table.json",
            "q.csv",
        ],
    );
    let doc: serde_json::Value =
        serde_json::from_slice(&fs::read(tmp.path().join("e/evaluate.json")).unwrap()).unwrap();
    assert_eq!(doc["metadata"]["command"], "evaluate");
    let data = doc["data"].as_array().unwrap();
    assert_eq!(data.len(), 2);
    assert!(data
        .iter()
        .all(|r| (0.0..=1.0).contains(&r["p"].as_f64().unwrap())));
}

#[test]
fn replicate_ws_emits_curves_and_residuals() {
    let tmp = TempDir::new().unwrap();
    write(
        tmp.path(),
        "r.toml",
        r#"
[design]
kind = "grid"
axes = [{ min = 0.0, max = 40.0, step = 4.0 }, { min = 0.5, max = 4.0, step = 0.5 }]
[replicate]
deltas = [0.2, 0.02]
curve_ttc = { min = 0.5, max = 4.0, step = 0.5 }
"#,
    );
    ok(
        tmp.path(),
        &["--config", "r.toml", "--out", "r", "replicate-ws"],
    );
    let dir = tmp.path().join("r");
    assert!(dir.join("ws_table_delta_0.2.json").exists());
    assert!(dir.join("ws_table_delta_0.02.json").exists());
    let report = rows(&dir.join("replicate_ws_report.csv"));
    assert_eq!(report.len(), 2);
    for r in &report {
        let mean: f64 = r[3].parse().unwrap();
        let max: f64 = r[4].parse().unwrap();
        assert!(mean.is_finite() && mean <= max && max <= 1.0);
    }

    let curves = rows(&dir.join("replicate_ws_curves.csv"));
    assert_eq!(curves.len(), 3 * 8);
    let p = |dv: &str, ttc: &str, col: usize| -> f64 {
        curves.iter().find(|r| r[0] == dv && r[1] == ttc).unwrap()[col]
            .parse()
            .unwrap()
    };
    // Closed form: 30 / (2 * 0.5) exceeds the largest deceleration.
    assert_eq!(p("30", "0.5", 2), 1.0);
    for ttc in ["1", "1.5", "2", "2.5"] {
        assert!(p("30", ttc, 2) >= p("20", ttc, 2) && p("20", ttc, 2) >= p("10", ttc, 2));
    }
}

#[test]
fn scenario_and_benchmark_outputs() {
    let tmp = TempDir::new().unwrap();
    write(tmp.path(), "ws.toml", TINY_WS);
    ok(tmp.path(), &["--config", "ws.toml", "--out", "d", "derive"]);
    let cruise = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/fixtures/scenarios/cruise.json")
        .canonicalize()
        .unwrap();
    ok(
        tmp.path(),
        &[
            "--out",
            "s",
            "simulate-scenario",
            cruise.to_str().unwrap(),
            "d/table.json",
        ],
    );
    let trace = rows(&tmp.path().join("s/scenario_cruise.csv"));
    assert!(trace.len() > 10);
    assert!(trace.iter().all(|r| r[6].parse::<f64>().unwrap() == 0.0));

    // The trend benchmark needs a five-input table.
    let out = ssm(tmp.path(), &["--out", "b", "benchmark", "d/table.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn trend_pipeline_writes_a_percentile_table() {
    let tmp = TempDir::new().unwrap();
    ingest(tmp.path(), "i", "7");
    write(
        tmp.path(),
        "t.toml",
        r#"
model = "trend"
[estimator]
delta = 0.2
[design]
kind = "grid"
axes = [
  { min = 0.0, max = 20.0, step = 10.0 },
  { min = 10.0, max = 30.0, step = 10.0 },
  { min = 0.5, max = 1.5, step = 0.5 },
  { min = 5.0, max = 30.0, step = 12.5 },
  { min = 4.0, max = 10.0, step = 3.0 },
]
[benchmark]
axes = [
  { min = 0.0, max = 20.0, step = 10.0 },
  { min = 10.0, max = 30.0, step = 10.0 },
  { min = 0.5, max = 1.5, step = 0.5 },
  { min = 5.0, max = 30.0, step = 12.5 },
  { min = 4.0, max = 10.0, step = 3.0 },
]
"#,
    );
    ok(
        tmp.path(),
        &["--config", "t.toml", "--out", "t", "derive", "i/pairs.csv"],
    );
    assert!(tmp.path().join("t/future_model.json").exists());
    ok(
        tmp.path(),
        &[
            "--config",
            "t.toml",
            "--out",
            "t",
            "benchmark",
            "t/table.json",
        ],
    );
    let path = tmp.path().join("t/trend.csv");
    assert_provenance(&path, "benchmark");
    let text = fs::read_to_string(&path).unwrap();
    let header = text.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header, "percentile,dv,v_ego,t_react,gap,a_max");
    let labels: Vec<String> = rows(&path).into_iter().map(|r| r[0].clone()).collect();
    assert_eq!(
        labels,
        [
            "min",
            "1",
            "5",
            "10",
            "25",
            "50",
            "75",
            "90",
            "95",
            "99",
            "max",
            "expected",
            "correct_sign_fraction"
        ]
    );
}

#[test]
fn sampled_futures_are_reproducible() {
    let tmp = TempDir::new().unwrap();
    ingest(tmp.path(), "i", "7");
    let args = |out: &'static str| {
        vec![
            "--out",
            out,
            "sample-futures",
            "i/pairs.csv",
            "--v-lead",
            "15",
            "--a-lead",
            "1",
            "--count",
            "4",
        ]
    };
    ok(tmp.path(), &args("a"));
    ok(tmp.path(), &args("b"));
    let a = fs::read(tmp.path().join("a/futures.csv")).unwrap();
    assert_eq!(a, fs::read(tmp.path().join("b/futures.csv")).unwrap());
    let rows = rows(&tmp.path().join("a/futures.csv"));
    assert_eq!(rows.len(), 4 * 51);
    assert_eq!(rows[0], ["0", "0", "15"]);
    assert_eq!(rows[1][1], "0.1");
}
