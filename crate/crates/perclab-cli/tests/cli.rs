//! End-to-end tests driving the compiled binary: documented example
//! values, the exit-code contract, config schema rejection, output
//! round-trips and byte-level reproducibility.

use std::path::PathBuf;
use std::process::{Command, Output};

use perclab_cli::report::ComparisonRow;
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_perclab"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}): {}",
            String::from_utf8_lossy(&out.stdout)
        )
    })
}

fn rows_of(doc: &Value) -> Vec<ComparisonRow> {
    doc["rows"]
        .as_array()
        .expect("rows array")
        .iter()
        .map(|r| serde_json::from_value(r.clone()).expect("row schema"))
        .collect()
}

fn find<'a>(rows: &'a [ComparisonRow], label: &str) -> &'a ComparisonRow {
    rows.iter()
        .find(|r| r.label == label)
        .unwrap_or_else(|| panic!("no row labeled {label}"))
}

/// Unique scratch path; the tests clean up after themselves.
fn tmp(name: &str) -> PathBuf {
    std::env::temp_dir().join(format!("perclab-cli-test-{}-{name}", std::process::id()))
}

fn write_tmp(name: &str, contents: &str) -> PathBuf {
    let path = tmp(name);
    std::fs::write(&path, contents).expect("write temp file");
    path
}

#[test]
fn help_documents_columns_exit_codes_and_env_override() {
    let out = run(&["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(
        text.contains("label,descriptor,predicted,measured,ci_low,ci_high,abs_error,within_ci"),
        "--help must document the fixed CSV column order"
    );
    assert!(text.contains("PERCLAB_WORKERS"));
    assert!(text.contains("17 significant digits"));
    assert!(text.contains("Exit codes"));
}

#[test]
fn formula_eta_half_reports_half() {
    let out = run(&["formula", "--eta", "0.5", "--format", "json"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let rows = rows_of(&stdout_json(&out));
    let p = find(&rows, "crossing_probability");
    assert!((p.predicted - 0.5).abs() < 1e-12);
    assert!(p.within_ci);
}

#[test]
fn formula_rect_two_reports_silver_ratio_eta() {
    let out = run(&["formula", "--rect-r", "2", "--format", "json"]);
    assert!(out.status.success());
    let rows = rows_of(&stdout_json(&out));
    let eta = find(&rows, "rectangle_eta");
    let exact = 17.0 - 12.0 * std::f64::consts::SQRT_2;
    assert!(
        (eta.predicted - exact).abs() < 1e-9,
        "eta(2) = {} should be 17 - 12 sqrt(2) = {exact}",
        eta.predicted
    );
    let cross = find(&rows, "rectangle_crossing");
    assert!(cross.within_ci, "integral and hypergeometric routes agree");
}

#[test]
fn formula_strip_ratio_six_reports_strip_law() {
    let out = run(&["formula", "--strip-ratio", "6", "--format", "json"]);
    assert!(out.status.success());
    let rows = rows_of(&stdout_json(&out));
    let row = find(&rows, "strip_mean_crossings");
    assert!((row.predicted - 6.0 * 3.0f64.sqrt() / 4.0).abs() < 1e-12);
}

#[test]
fn formula_domain_violation_warns_and_continues() {
    let out = run(&[
        "formula", "--eta", "1.5", "--eta", "0.25", "--format", "json",
    ]);
    assert!(out.status.success(), "good point still evaluates");
    let rows = rows_of(&stdout_json(&out));
    assert!(rows.iter().all(|r| (r.descriptor - 0.25).abs() < 1e-15));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("1.5"), "violation reported per row: {err}");
}

#[test]
fn geometry_unit_aspect_reports_eta_half() {
    let out = run(&["geometry", "--r", "1", "--format", "json"]);
    assert!(out.status.success());
    let rows = rows_of(&stdout_json(&out));
    let eta = find(&rows, "rectangle_eta");
    assert!((eta.predicted - 0.5).abs() < 1e-10);
    assert!(rows.iter().all(|r| r.within_ci));
}

#[test]
fn enumerate_single_bond_crossing_equals_p() {
    let graph = write_tmp(
        "single-bond.json",
        r#"{"n_sites":2,"bonds":[[0,1]],"gamma1":[0],"gamma2":[1]}"#,
    );
    let out = run(&[
        "enumerate",
        "--graph",
        graph.to_str().unwrap(),
        "--p",
        "0.37",
        "--format",
        "json",
    ]);
    std::fs::remove_file(&graph).ok();
    assert!(out.status.success());
    let doc = stdout_json(&out);
    let rows = rows_of(&doc);
    assert_eq!(find(&rows, "crossing_probability").predicted, 0.37);
    for bc in ["ff", "aa", "af", "fa"] {
        let row = find(&rows, &format!("partition_normalization_{bc}"));
        assert_eq!(row.measured, 1.0, "Z_{bc}(1) normalizes exactly");
    }
    assert!(rows.iter().all(|r| r.within_ci));
}

#[test]
fn emitted_json_rows_reparse_bit_identically() {
    let out = run(&["formula", "--rect-r", "1.37", "--format", "json"]);
    assert!(out.status.success());
    let doc = stdout_json(&out);
    for raw in doc["rows"].as_array().unwrap() {
        let row: ComparisonRow = serde_json::from_value(raw.clone()).expect("row parses");
        let back = serde_json::to_value(&row).unwrap();
        assert_eq!(&back, raw, "row survives a parse/serialize cycle");
        assert_eq!(
            row.abs_error.to_bits(),
            (row.predicted - row.measured).abs().to_bits(),
            "abs_error is exactly |predicted - measured|"
        );
    }
}

#[test]
fn enumerate_refuses_graphs_over_the_bond_cap() {
    let out = run(&["enumerate", "--nx", "6", "--ny", "6", "--p", "0.5"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("cap"), "refusal names the cap: {err}");
}

#[test]
fn unknown_config_key_is_rejected_before_any_work() {
    let cfg = write_tmp(
        "bad-key.json",
        r#"{"kind":"mc","lattice":{"kind":"square_bond","shape":"rectangle","nx":3,"ny":3,"p":0.5},"bogus_key":1}"#,
    );
    let out = run(&["mc", "--config", cfg.to_str().unwrap()]);
    std::fs::remove_file(&cfg).ok();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bogus_key"), "{err}");
    assert!(
        out.stdout.is_empty(),
        "no output is written on config errors"
    );
}

#[test]
fn config_kind_must_match_subcommand() {
    let cfg = write_tmp(
        "kind-mismatch.json",
        r#"{"kind":"mc","lattice":{"kind":"square_bond","shape":"rectangle","nx":3,"ny":3,"p":0.5}}"#,
    );
    let out = run(&["formula", "--config", cfg.to_str().unwrap()]);
    std::fs::remove_file(&cfg).ok();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("does not match"));
}

#[test]
fn mc_without_config_or_flags_is_a_usage_error() {
    let out = run(&["mc"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn csv_output_is_byte_identical_across_reruns_and_worker_counts() {
    let cfg = write_tmp(
        "repro.json",
        r#"{
            "kind": "mc",
            "lattice": {"kind": "square_bond", "shape": "rectangle", "nx": 3, "ny": 3, "p": 0.5},
            "n_trials": 2000,
            "master_seed": 42,
            "tolerance": 1.0
        }"#,
    );
    let paths = [tmp("repro-a.csv"), tmp("repro-b.csv"), tmp("repro-c.csv")];
    let baseline = run(&[
        "mc",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        paths[0].to_str().unwrap(),
    ]);
    assert!(
        baseline.status.success(),
        "{}",
        String::from_utf8_lossy(&baseline.stderr)
    );
    let with_flag = run(&[
        "mc",
        "--config",
        cfg.to_str().unwrap(),
        "--workers",
        "3",
        "--out",
        paths[1].to_str().unwrap(),
    ]);
    assert!(with_flag.status.success());
    let with_env = bin()
        .args(["mc", "--config", cfg.to_str().unwrap(), "--out"])
        .arg(&paths[2])
        .env("PERCLAB_WORKERS", "2")
        .output()
        .expect("binary runs");
    assert!(with_env.status.success());

    let bytes: Vec<Vec<u8>> = paths
        .iter()
        .map(|p| std::fs::read(p).expect("output file exists"))
        .collect();
    assert_eq!(bytes[0], bytes[1], "worker flag must not change the bytes");
    assert_eq!(bytes[0], bytes[2], "worker env must not change the bytes");
    assert!(!bytes[0].is_empty());
    std::fs::remove_file(&cfg).ok();
    for p in &paths {
        std::fs::remove_file(p).ok();
    }
}

#[test]
fn seed_flag_overrides_config_seed() {
    let cfg = write_tmp(
        "seed-override.json",
        r#"{
            "kind": "mc",
            "lattice": {"kind": "square_bond", "shape": "rectangle", "nx": 3, "ny": 3, "p": 0.5},
            "n_trials": 500,
            "master_seed": 42,
            "tolerance": 1.0
        }"#,
    );
    let out = run(&[
        "mc",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "99",
        "--format",
        "json",
    ]);
    std::fs::remove_file(&cfg).ok();
    assert!(out.status.success());
    let doc = stdout_json(&out);
    assert_eq!(
        doc["meta"]["params"]["seed"], 99,
        "seed is explicit in metadata"
    );
}

#[test]
fn invalid_worker_settings_follow_precedence() {
    let base = ["formula", "--eta", "0.3"];
    let bad_env = bin()
        .args(base)
        .env("PERCLAB_WORKERS", "zero")
        .output()
        .expect("binary runs");
    assert_eq!(bad_env.status.code(), Some(2), "garbage env is rejected");
    let flag_wins = bin()
        .args(base)
        .args(["--workers", "1"])
        .env("PERCLAB_WORKERS", "zero")
        .output()
        .expect("binary runs");
    assert!(
        flag_wins.status.success(),
        "an explicit flag short-circuits the env variable"
    );
}

#[test]
fn compare_exits_one_when_tolerance_is_violated() {
    // Continuum P(1) = 1/2 versus the exact 12-bond value 43/64: a
    // deterministic, systematic gap of about 0.17.
    let cfg = write_tmp(
        "cmp-tight.json",
        r#"{
            "kind": "compare",
            "measurer": {"kind": "enumerate",
                         "lattice": {"kind": "square_bond", "shape": "rectangle",
                                     "nx": 3, "ny": 3, "p": 0.5}},
            "tolerance": 1e-9
        }"#,
    );
    let out = run(&[
        "compare",
        "--config",
        cfg.to_str().unwrap(),
        "--format",
        "json",
    ]);
    assert_eq!(out.status.code(), Some(1), "numeric check failure exits 1");
    let rows = rows_of(&stdout_json(&out));
    assert!(
        rows.iter().any(|r| !r.within_ci),
        "failed rows are still flushed"
    );
    // Same comparison with an honest finite-size tolerance passes.
    let ok = run(&[
        "compare",
        "--config",
        cfg.to_str().unwrap(),
        "--tolerance",
        "0.25",
    ]);
    assert!(ok.status.success(), "flag tolerance overrides the config");
    std::fs::remove_file(&cfg).ok();
}

#[test]
fn compare_enumeration_predictor_matches_mc_within_sigma_band() {
    let cfg = write_tmp(
        "cmp-enum.json",
        r#"{
            "kind": "compare",
            "measurer": {"kind": "mc",
                         "lattice": {"kind": "square_bond", "shape": "rectangle",
                                     "nx": 3, "ny": 3, "p": 0.5},
                         "n_trials": 4000,
                         "master_seed": 7},
            "predictor": "enumeration",
            "sigma_band": 6.0
        }"#,
    );
    let out = run(&[
        "compare",
        "--config",
        cfg.to_str().unwrap(),
        "--format",
        "json",
    ]);
    std::fs::remove_file(&cfg).ok();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let doc = stdout_json(&out);
    let rows = rows_of(&doc);
    let p = find(&rows, "crossing_probability");
    assert!(
        (p.predicted - 0.671875).abs() < 1e-12,
        "12-bond exact value"
    );
    assert!(p.within_ci);
    assert_eq!(doc["meta"]["params"]["predictor"], "enumeration");
}

#[test]
fn sle_race_reports_eta_and_unresolved_fraction() {
    let out = run(&[
        "sle",
        "--a",
        "1",
        "--b",
        "3",
        "-n",
        "40",
        "--seed",
        "11",
        "--tolerance",
        "1.0",
        "--format",
        "json",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let doc = stdout_json(&out);
    let rows = rows_of(&doc);
    let race = find(&rows, "hitting_race");
    assert!((race.descriptor - 0.75).abs() < 1e-15, "eta = b/(a+b)");
    assert!((race.predicted - 0.6264).abs() < 1e-3, "P(3/4) prediction");
    let params = &doc["meta"]["params"];
    assert!(params["unresolved_fraction"].is_number());
    assert!(params["params"]["dt0"].is_number());
    assert_eq!(params["seed"], 11);
}

#[test]
fn smirnov_observable_snaps_and_reports_the_query_point() {
    let out = run(&[
        "mc",
        "--lattice",
        "triangular-site",
        "--shape",
        "equilateral-triangle",
        "--nx",
        "13",
        "--ny",
        "13",
        "--p",
        "0.5",
        "--smirnov-x",
        "0.5",
        "-n",
        "300",
        "--seed",
        "5",
        "--tolerance",
        "1.0",
        "--format",
        "json",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let doc = stdout_json(&out);
    let rows = rows_of(&doc);
    let row = find(&rows, "separation_crossing");
    assert_eq!(row.descriptor, 0.5, "x = 1/2 lies on the 12-edge lattice");
    assert_eq!(row.predicted, 0.5, "boundary law P = x");
    assert_eq!(doc["meta"]["params"]["smirnov_x_snapped"], 0.5);
}

#[test]
fn stdout_and_file_output_carry_identical_bytes() {
    let path = tmp("stdout-vs-file.csv");
    let to_stdout = run(&["formula", "--carleson-x", "0.37"]);
    assert!(to_stdout.status.success());
    let to_file = run(&[
        "formula",
        "--carleson-x",
        "0.37",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(to_file.status.success());
    let file_bytes = std::fs::read(&path).expect("output file");
    std::fs::remove_file(&path).ok();
    assert_eq!(to_stdout.stdout, file_bytes);
    assert!(to_file.stdout.is_empty(), "file target leaves stdout clean");
}
