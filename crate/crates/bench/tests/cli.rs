use std::path::Path;
use std::process::{Command, Output};

use doraemon_core::workload::{read_keys, read_text};

fn doraemon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_doraemon"))
        .args(args)
        .env("RUST_LOG", "warn")
        .env_remove("DORAEMON_CACHE_DIR")
        .output()
        .unwrap()
}

fn small(out: &Path, extra: &[&str]) -> Vec<String> {
    let mut args: Vec<String> = [
        "--out",
        out.to_str().unwrap(),
        "--n",
        "5000",
        "--queries",
        "20000",
        "--search-space",
        "lin,nn4:10,20",
        "--epochs",
        "3",
        "--restarts",
        "1",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    args.extend(extra.iter().map(|s| s.to_string()));
    args
}

fn run(cmd: &str, args: &[String]) -> Output {
    let mut all = vec![cmd];
    all.extend(args.iter().map(String::as_str));
    doraemon(&all)
}

#[test]
fn missing_required_flag_is_a_usage_error() {
    let out = doraemon(&["gen-data", "--family", "lognormal", "--out", "x.keys"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--n"));
}

#[test]
fn invalid_values_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g.csv");
    let bad_space = run("grid", &small(&out, &["--search-space", "btree"]));
    assert_eq!(bad_space.status.code(), Some(2));
    let bad_tau = run("grid", &small(&out, &["--tau", "-1"]));
    assert_eq!(
        bad_tau.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&bad_tau.stderr)
    );
    let bad_id = run("grid", &small(&out, &["--dataset", "nope"]));
    assert_eq!(bad_id.status.code(), Some(2));
}

#[test]
fn unreadable_inputs_fail_at_runtime() {
    let dir = tempfile::tempdir().unwrap();
    let out = doraemon(&[
        "grid",
        "--config",
        dir.path().join("missing.json").to_str().unwrap(),
        "--out",
        dir.path().join("g.csv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));

    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"datasets": [{"id": "f", "source": "file", "path": "/nonexistent/k.keys"}]}"#,
    )
    .unwrap();
    let out = doraemon(&[
        "grid",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().join("g.csv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn gen_data_and_workload_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let keys = dir.path().join("d1.keys");
    let out = doraemon(&[
        "gen-data",
        "--family",
        "lognormal",
        "--n",
        "20000",
        "--seed",
        "1",
        "--out",
        keys.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let k = read_keys(&keys).unwrap();
    assert_eq!(k.len(), 20_000);
    assert!(k.windows(2).all(|w| w[0] < w[1]));

    let text = dir.path().join("d3.txt");
    assert!(doraemon(&[
        "gen-data",
        "--family",
        "d3",
        "--n",
        "1000",
        "--out",
        text.to_str().unwrap()
    ])
    .status
    .success());
    assert_eq!(read_text(&text).unwrap().len(), 1000);

    let qry = dir.path().join("w.qry");
    let out = doraemon(&[
        "gen-workload",
        "--data",
        keys.to_str().unwrap(),
        "--kind",
        "skewed",
        "--hot-frac",
        "0.05",
        "--hot-prob",
        "0.95",
        "--queries",
        "1000000",
        "--out",
        qry.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert_eq!(read_keys(&qry).unwrap().len(), 1_000_000);
    let stdout = String::from_utf8_lossy(&out.stdout);
    let mass: f64 = stdout.trim().rsplit(' ').next().unwrap().parse().unwrap();
    assert!((mass - 0.95).abs() < 0.002, "{stdout}");
}

#[test]
fn deterministic_grid_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a/grid.csv");
    let b = dir.path().join("b/grid.csv");
    for out in [&a, &b] {
        let o = run("grid", &small(out, &["--seed", "3"]));
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for tag in [
        "grid.csv",
        "grid.summary.csv",
        "grid.decomposition.csv",
        "grid.ranges.csv",
    ] {
        let x = std::fs::read(dir.path().join("a").join(tag)).unwrap();
        let y = std::fs::read(dir.path().join("b").join(tag)).unwrap();
        assert_eq!(x, y, "{tag}");
        assert!(String::from_utf8_lossy(&x).starts_with("schema_version,"));
    }
    let rows = std::fs::read_to_string(&a).unwrap();
    // 4 datasets x 4 workloads x (4 candidates + 2 baselines), plus the header.
    assert_eq!(rows.lines().count(), 1 + 16 * 6);
    let summary = std::fs::read_to_string(dir.path().join("a/grid.summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 17);
    // Timing columns stay empty in deterministic mode.
    let header: Vec<&str> = rows.lines().next().unwrap().split(',').collect();
    let build = header.iter().position(|&c| c == "build_secs").unwrap();
    let exact = header.iter().position(|&c| c == "exactness").unwrap();
    for line in rows.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[build], "");
        assert_eq!(cols[exact], "1.0");
    }
}

#[test]
fn json_output_carries_every_section() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("grid.json");
    let o = run(
        "grid",
        &small(
            &out,
            &[
                "--format",
                "json",
                "--dataset",
                "d2",
                "--workload",
                "uniform",
            ],
        ),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["rows"].as_array().unwrap().len(), 6);
    assert_eq!(v["summary"].as_array().unwrap().len(), 1);
    assert!(!v["ranges"].as_array().unwrap().is_empty());
}

#[test]
fn augment_ab_reports_three_exact_variants() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ab.csv");
    let o = run(
        "augment-ab",
        &small(&out, &["--dataset", "d1", "--workload", "skewed3"]),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut r = csv::Reader::from_path(&out).unwrap();
    let variants: Vec<String> = r.records().map(|rec| rec.unwrap()[3].to_string()).collect();
    assert_eq!(variants, vec!["none", "duplicate", "stretch"]);

    let uniform_only = run("augment-ab", &small(&out, &["--workload", "uniform"]));
    assert_eq!(uniform_only.status.code(), Some(2));
}

#[test]
fn shift_reuses_the_cache_and_swapping_presets_misses() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let out = dir.path().join("shift.csv");
    let o = run(
        "shift",
        &small(&out, &["--cache-dir", cache.to_str().unwrap()]),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut r = csv::Reader::from_path(&out).unwrap();
    let headers = r.headers().unwrap().clone();
    let row = r.records().next().unwrap().unwrap();
    let get = |name: &str| row[headers.iter().position(|h| h == name).unwrap()].to_string();
    assert_eq!(get("cold_provenance"), "auto_tuned");
    assert_eq!(get("warm_provenance"), "fine_tuned");
    assert_eq!(get("shifted_dataset"), "d1-churn");
    assert_eq!(get("exactness"), "1.0");
    assert!(cache.join("shift").join("manifest.json").exists());

    let o = run(
        "shift",
        &small(
            &out,
            &["--cache-dir", cache.to_str().unwrap(), "--swap-preset"],
        ),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut r = csv::Reader::from_path(&out).unwrap();
    let headers = r.headers().unwrap().clone();
    let row = r.records().next().unwrap().unwrap();
    let get = |name: &str| row[headers.iter().position(|h| h == name).unwrap()].to_string();
    assert_eq!(get("shifted_dataset"), "d2");
    assert_eq!(get("warm_provenance"), "auto_tuned");
}

#[test]
fn cache_dir_flag_beats_environment() {
    let dir = tempfile::tempdir().unwrap();
    let env_dir = dir.path().join("from-env");
    let flag_dir = dir.path().join("from-flag");
    let out = dir.path().join("s.csv");
    let args = small(&out, &[]);
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_doraemon"));
    cmd.arg("shift")
        .args(&args)
        .env("RUST_LOG", "warn")
        .env("DORAEMON_CACHE_DIR", &env_dir);
    assert!(cmd.output().unwrap().status.success());
    assert!(env_dir.join("shift").exists());

    let mut cmd = Command::new(env!("CARGO_BIN_EXE_doraemon"));
    cmd.arg("shift")
        .args(&args)
        .args(["--cache-dir", flag_dir.to_str().unwrap()])
        .env("RUST_LOG", "warn")
        .env("DORAEMON_CACHE_DIR", &env_dir);
    assert!(cmd.output().unwrap().status.success());
    assert!(flag_dir.join("shift").exists());
}
