use std::path::PathBuf;
use std::process::{Command, Output};

fn nestwalk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nestwalk")).args(args).output().expect("binary runs")
}

fn temp_path(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("nestwalk-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn solve_generated_planted_instance_reports_verified_triple() {
    let out = nestwalk(&["solve", "--n", "24", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["found"], true);
    assert_eq!(v["verified"], true);
    assert_eq!(v["seed"], 1);
    assert_eq!(v["config"]["mode"], "abstract");
    let t: Vec<u64> = v["triple"].as_array().unwrap().iter().map(|x| x.as_u64().unwrap()).collect();
    assert!(t[0] < t[1] && t[1] < t[2] && t[2] <= 24);
    assert!(v["ledger"]["queries"].as_u64().unwrap() > 0);
}

#[test]
fn solve_reads_instance_file_and_finds_its_only_triple() {
    let path = temp_path("inst.json");
    std::fs::write(&path, r#"{"n": 5, "values": [4, 9, 4, 1, 4], "planted": null}"#).unwrap();
    let out = nestwalk(&["solve", "--instance", path.to_str().unwrap(), "--seed", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["triple"], serde_json::json!([1, 3, 5]));
}

#[test]
fn solve_without_triple_exits_one() {
    let out = nestwalk(&["solve", "--n", "12", "--no-planted", "--seed", "4"]);
    assert_eq!(out.status.code(), Some(1));
    let v = json(&out);
    assert_eq!(v["found"], false);
    assert_eq!(v["verified"], true);
}

#[test]
fn solve_rejects_corrupt_instance_with_exit_two() {
    let path = temp_path("corrupt.json");
    std::fs::write(&path, "{\"n\": 3, \"values\": [1, 2").unwrap();
    let out = nestwalk(&["solve", "--instance", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("malformed"));
}

#[test]
fn solve_rejects_instance_with_two_triples() {
    let path = temp_path("two.json");
    std::fs::write(&path, r#"{"n": 6, "values": [1, 1, 1, 2, 2, 2], "planted": null}"#).unwrap();
    let out = nestwalk(&["solve", "--instance", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_flag_exits_two() {
    assert_eq!(nestwalk(&["solve", "--bogus"]).status.code(), Some(2));
}

#[test]
fn solve_trials_in_concrete_mode_writes_out_file() {
    let path = temp_path("trials.json");
    let out = nestwalk(&["solve", "--n", "12", "--mode", "concrete", "--seed", "3", "--trials", "3", "--out", path.to_str().unwrap()]);
    assert!(out.stdout.is_empty());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v["trials"], 3);
    assert_eq!(v["results"].as_array().unwrap().len(), 3);
    let found = v["found"].as_u64().unwrap();
    assert_eq!(out.status.code(), Some(if found == 3 { 0 } else { 1 }));
}

#[test]
fn verify_passes_and_is_byte_stable() {
    let a = nestwalk(&["verify", "--seed", "7"]);
    let b = nestwalk(&["verify", "--seed", "7"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let v = json(&a);
    assert_eq!(v["pass"], true);
    assert!(v["checks"].as_array().unwrap().len() >= 10);
}

#[test]
fn verify_with_perturbed_garbage_fails() {
    let out = nestwalk(&["verify", "--seed", "7", "--perturb-psi"]);
    assert_eq!(out.status.code(), Some(1));
    let v = json(&out);
    let failed: Vec<&str> =
        v["checks"].as_array().unwrap().iter().filter(|c| c["pass"] == false).map(|c| c["name"].as_str().unwrap()).collect();
    assert!(failed.contains(&"garbage_symmetry"), "failed checks: {failed:?}");
}

#[test]
fn cost_range_emits_csv_and_fit_on_stderr() {
    let out = nestwalk(&["cost", "--lo", "10", "--hi", "14", "--objective", "dominant"]);
    assert_eq!(out.status.code(), Some(0));
    let mut rdr = csv::Reader::from_reader(out.stdout.as_slice());
    let headers = rdr.headers().unwrap().clone();
    assert_eq!(&headers[0], "version");
    assert!(headers.iter().any(|h| h == "balance_max_over_min"));
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 5);
    let n_col = headers.iter().position(|h| h == "n").unwrap();
    assert_eq!(rows[0][n_col].parse::<f64>().unwrap(), 1024.0);
    assert!(String::from_utf8_lossy(&out.stderr).contains("fitted slopes"));
}

#[test]
fn cost_single_point_and_bad_range() {
    let out = nestwalk(&["cost", "--n", "1000", "--mode", "time"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 2);
    assert_eq!(nestwalk(&["cost", "--lo", "12", "--hi", "10"]).status.code(), Some(2));
}
