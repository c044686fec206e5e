use std::process::{Command, Output};

use serde_json::Value;

fn kppdr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kppdr")).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("JSON on stdout")
}

#[test]
fn optimal_symmetric_example() {
    let out = kppdr(&["optimal", "--family", "symmetric", "--k", "6", "--n", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["spec"]["family"], "symmetric");
    assert_eq!(v["spec"]["k"], 6);
    for p in v["probs"].as_array().unwrap() {
        assert!((p.as_f64().unwrap() - 1.0 / 6.0).abs() < 1e-15);
    }
    assert!((v["slem"].as_f64().unwrap() - 0.866_025_403_784_438_6).abs() < 1e-12);
    assert_eq!(v["feasible"], true);
}

#[test]
fn slem_k2_example() {
    let out = kppdr(&["slem", "--family", "symmetric", "--k", "2", "--n", "1", "--probs", "0.6666667"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert!((v["slem"].as_f64().unwrap() - 0.333_333_4).abs() < 1e-12);
    assert_eq!(v["spectrum"].as_array().unwrap().len(), 2);
}

#[test]
fn human_mode_rounds_to_nine_digits() {
    let out = kppdr(&["--human", "optimal", "--family", "symmetric", "--k", "6", "--n", "3"]);
    let v = json(&out);
    assert_eq!(v["slem"].as_f64().unwrap(), 0.866_025_404);
    assert_eq!(v["probs"][0].as_f64().unwrap(), 0.166_666_667);
}

#[test]
fn certify_example_exits_zero() {
    let out = kppdr(&["certify", "--k", "4", "--n", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    for r in v["residuals"].as_array().unwrap() {
        assert!(r["value"].as_f64().unwrap() < 1e-8, "{r}");
    }
}

#[test]
fn infeasible_probabilities_exit_three() {
    let out = kppdr(&["slem", "--family", "symmetric", "--k", "3", "--n", "1", "--probs", "0.9,0.9"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("negative holding"));
}

#[test]
fn infeasible_closed_form_reports_flag_and_exits_three() {
    let out = kppdr(&["optimal", "--family", "semi-symmetric", "--k", "3", "--n", "2"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(json(&out)["feasible"], false);
}

#[test]
fn malformed_flags_exit_two() {
    assert_eq!(kppdr(&["slem", "--family", "symmetric"]).status.code(), Some(2));
    assert_eq!(kppdr(&["build", "--family", "tree", "--k", "3", "--n", "1"]).status.code(), Some(2));
    assert_eq!(kppdr(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn build_prints_edge_list() {
    let out = kppdr(&["build", "--family", "semi-symmetric", "--k", "3", "--n", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    // full layer: 4 edges, strait layer: 2 edges
    assert_eq!(text.lines().count(), 6);
    assert_eq!(text.lines().filter(|l| l.ends_with("strait")).count(), 2);
}

#[test]
fn mh_reports_probabilities() {
    let out = kppdr(&["mh", "--family", "symmetric", "--k", "5", "--n", "2"]);
    let v = json(&out);
    assert_eq!(v["probs"].as_array().unwrap().len(), 4);
    assert!((v["probs"][0].as_f64().unwrap() - 0.25).abs() < 1e-15);
}

#[test]
fn simulate_is_deterministic() {
    let args = [
        "simulate", "--family", "cycle", "--k", "5", "--n", "2", "--probs", "mh", "--trials", "20",
        "--iters", "10", "--seed", "3",
    ];
    let a = kppdr(&args);
    let b = kppdr(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    assert_eq!(text.lines().next(), Some("iteration,distance"));
    assert_eq!(text.lines().count(), 12);
}

#[test]
fn stratify_reports_partition() {
    let out =
        kppdr(&["stratify", "--family", "symmetric", "--k", "4", "--n", "3", "--probs", "0.1,0.12,0.15"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["partition_holds"], true);
    assert_eq!(v["residual_diagonals"].as_array().unwrap().len(), 2);
}

#[test]
fn optimize_matches_closed_form() {
    let out = kppdr(&["optimize", "--family", "symmetric", "--k", "4", "--n", "1", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert!((v["slem"].as_f64().unwrap() - 0.707_106_781_186_547_5).abs() < 1e-6);
    assert_eq!(v["spec"]["k"], 4);
}

#[test]
fn compare_from_file_writes_report_and_traces() {
    let dir = std::env::temp_dir().join(format!("kppdr-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let specs = dir.join("runs.json");
    let traces = dir.join("traces.csv");
    std::fs::write(
        &specs,
        r#"{ "window": 10, "runs": [
            { "label": "opt", "family": "semi-symmetric", "k": 6, "n": 3, "probs": "optimal", "trials": 30, "iters": 40, "seed": 1 },
            { "label": "mh",  "family": "semi-symmetric", "k": 6, "n": 3, "probs": "mh",      "trials": 30, "iters": 40, "seed": 1 }
        ] }"#,
    )
    .unwrap();
    let out = kppdr(&["compare", "--specs", specs.to_str().unwrap(), "--traces", traces.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["report"]["labels"], serde_json::json!(["opt", "mh"]));
    assert_eq!(v["runs"][0]["meta"]["spec"]["family"], "semi-symmetric");
    let csv = std::fs::read_to_string(&traces).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 41);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn out_flag_writes_file() {
    let path = std::env::temp_dir().join(format!("kppdr-out-{}.json", std::process::id()));
    let out = kppdr(&["mh", "--family", "cycle", "--k", "4", "--n", "1", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v["spec"]["family"], "cycle");
    std::fs::remove_file(&path).ok();
}
