use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn eqdisco(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eqdisco"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn assert_single_error_line(o: &Output) {
    let err = stderr(o);
    let lines: Vec<&str> = err.lines().collect();
    assert_eq!(lines.len(), 1, "stderr: {err}");
    assert!(lines[0].starts_with("error: "), "stderr: {err}");
}

fn generate(dir: &Path, problem: &str, out: &str) {
    let o = eqdisco(
        &[
            "generate",
            "--problem",
            problem,
            "--nx",
            "41",
            "--nt",
            "41",
            "--out",
            out,
        ],
        dir,
    );
    assert!(o.status.success(), "{}", stderr(&o));
}

fn distribution(dir: &Path, args: &[&str]) -> serde_json::Map<String, Value> {
    let mut all = vec!["distribution", "--data", "data"];
    all.extend_from_slice(args);
    let o = eqdisco(&all, dir);
    assert!(o.status.success(), "{}", stderr(&o));
    match serde_json::from_slice(&o.stdout).unwrap() {
        Value::Object(m) => m,
        other => panic!("not an object: {other}"),
    }
}

const QUICK: [&str; 4] = ["--generations", "15", "--population", "24"];

#[test]
fn generate_writes_manifest_and_fields() {
    let tmp = TempDir::new().unwrap();
    let o = eqdisco(
        &[
            "generate",
            "--problem",
            "burgers_inviscid",
            "--nx",
            "101",
            "--nt",
            "101",
            "--out",
            "data/burgers",
        ],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let dir = tmp.path().join("data/burgers");
    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["nx"], 101);
    assert_eq!(manifest["nt"], 101);
    for f in ["u.csv", "du_dx.csv", "du_dt.csv"] {
        assert!(dir.join(f).is_file(), "missing {f}");
    }
}

#[test]
fn unknown_problem_names_valid_ids() {
    let tmp = TempDir::new().unwrap();
    let o = eqdisco(&["generate", "--problem", "heat", "--out", "d"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert_single_error_line(&o);
    assert!(stderr(&o).contains("burgers_inviscid"));
    assert!(!tmp.path().join("d").exists());
}

#[test]
fn non_empty_output_needs_force() {
    let tmp = TempDir::new().unwrap();
    generate(tmp.path(), "wave", "d");
    let o = eqdisco(
        &[
            "generate",
            "--problem",
            "wave",
            "--nx",
            "41",
            "--nt",
            "41",
            "--out",
            "d",
        ],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    assert_single_error_line(&o);
    let o = eqdisco(
        &[
            "generate",
            "--problem",
            "wave",
            "--nx",
            "41",
            "--nt",
            "41",
            "--out",
            "d",
            "--force",
        ],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn usage_and_data_errors_have_distinct_codes() {
    let tmp = TempDir::new().unwrap();
    let o = eqdisco(&["discover", "--bogus"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert_single_error_line(&o);

    let o = eqdisco(&["discover", "--data", "missing", "--out", "r"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert_single_error_line(&o);

    generate(tmp.path(), "burgers_inviscid", "data");
    fs::write(tmp.path().join("cfg.json"), r#"{"runs": 0}"#).unwrap();
    let o = eqdisco(
        &[
            "discover", "--data", "data", "--config", "cfg.json", "--out", "r",
        ],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    assert_single_error_line(&o);

    fs::write(tmp.path().join("cfg.json"), r#"{"runz": 3}"#).unwrap();
    let o = eqdisco(
        &[
            "discover", "--data", "data", "--config", "cfg.json", "--out", "r",
        ],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    assert_single_error_line(&o);
}

#[test]
fn discover_writes_one_row_per_run_and_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    generate(tmp.path(), "burgers_inviscid", "data");
    let mut args = vec![
        "discover",
        "--data",
        "data",
        "--regimes",
        "classical,biased",
        "--runs",
        "10",
        "--seed",
        "42",
        "--no-timing",
    ];
    args.extend_from_slice(&QUICK);
    let first: Vec<&str> = args.iter().copied().chain(["--out", "a"]).collect();
    let second: Vec<&str> = args.iter().copied().chain(["--out", "b"]).collect();
    for a in [&first, &second] {
        let o = eqdisco(a, tmp.path());
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let a = fs::read(tmp.path().join("a/report.csv")).unwrap();
    let b = fs::read(tmp.path().join("b/report.csv")).unwrap();
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 20);
    assert_eq!(
        text.lines().next().unwrap(),
        "regime,run,status,mae,elapsed_s"
    );
    assert_eq!(
        rows.iter().filter(|r| r.starts_with("classical,")).count(),
        10
    );
    assert_eq!(fs::read_dir(tmp.path().join("a/logs")).unwrap().count(), 20);
    assert!(tmp.path().join("a/summary.json").is_file());
}

#[test]
fn distribution_file_is_used_and_echoed() {
    let tmp = TempDir::new().unwrap();
    generate(tmp.path(), "burgers_inviscid", "data");
    let custom = distribution(
        tmp.path(),
        &[
            "--regime",
            "biased",
            "--boost-terms",
            "du/dt,u*du/dx",
            "--seed",
            "5",
        ],
    );
    fs::write(
        tmp.path().join("custom.json"),
        Value::Object(custom.clone()).to_string(),
    )
    .unwrap();
    let mut args = vec![
        "discover",
        "--data",
        "data",
        "--regimes",
        "fixed",
        "--runs",
        "1",
        "--distribution-file",
        "custom.json",
        "--out",
        "r",
        "--dump-distribution",
        "used.json",
    ];
    args.extend_from_slice(&QUICK);
    let o = eqdisco(&args, tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let summary: Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("r/summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["distribution_file"], "custom.json");
    let used = &summary["distributions"]["fixed"];
    for (sig, p) in &custom {
        assert!(
            (used[sig].as_f64().unwrap() - p.as_f64().unwrap()).abs() < 1e-15,
            "{sig}"
        );
    }
    let dumped: Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("used.json")).unwrap()).unwrap();
    assert_eq!(&dumped["fixed"], used);
}

#[test]
fn uniform_regime_on_five_terms() {
    let tmp = TempDir::new().unwrap();
    generate(tmp.path(), "kdv_homogeneous", "data");
    let table = distribution(tmp.path(), &["--regime", "uniform", "--t-max", "1"]);
    assert_eq!(table.len(), 5);
    for p in table.values() {
        assert!((p.as_f64().unwrap() - 0.2).abs() < 1e-12);
    }
}

#[test]
fn biased_boosts_named_terms_over_fixed() {
    let tmp = TempDir::new().unwrap();
    generate(tmp.path(), "burgers_inviscid", "data");
    let fixed = distribution(tmp.path(), &["--regime", "fixed"]);
    let biased = distribution(
        tmp.path(),
        &["--regime", "biased", "--boost-terms", "du/dt,u*du/dx"],
    );
    assert_eq!(fixed.len(), biased.len());
    for (sig, p) in &biased {
        let (p, q) = (p.as_f64().unwrap(), fixed[sig].as_f64().unwrap());
        if sig == "du/dt" || sig == "du/dx*u" {
            assert!(p > q, "{sig}: {p} vs {q}");
        } else if q > 0.0 {
            assert!(p < q, "{sig}: {p} vs {q}");
        }
    }
}

#[test]
fn biased_without_boost_terms_fails() {
    let tmp = TempDir::new().unwrap();
    generate(tmp.path(), "burgers_inviscid", "data");
    let o = eqdisco(
        &["distribution", "--data", "data", "--regime", "biased"],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    assert_single_error_line(&o);
    assert!(o.stdout.is_empty());
}
