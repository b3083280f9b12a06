use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

fn data(name: &str) -> PathBuf {
    [env!("CARGO_MANIFEST_DIR"), "tests", "data", name].iter().collect()
}

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

impl Run {
    fn json(&self) -> Value {
        serde_json::from_str(&self.stdout).unwrap_or_else(|e| panic!("{e}: {}", self.stdout))
    }
}

fn hmtree(args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_hmtree")).args(args).output().unwrap();
    Run {
        code: out.status.code().unwrap(),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

fn save(dir: &Path, name: &str, v: &Value) -> String {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string(v).unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

const QUARTET: &str = "((1,2),(3,4));";

#[test]
fn table_cumulants_are_exact() {
    let r = hmtree(&["cumulants", "--tree", QUARTET, "--table", data("table1.json").to_str().unwrap()]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let doc = r.json();
    assert_eq!(doc["cumulant"]["1234"], "528/390625");
    assert_eq!(doc["cumulant"]["12"], "44/625");
    assert_eq!(doc["noncentral"]["13"], "929/2500");
    assert_eq!(doc["means"][1], "31/50");
}

#[test]
fn uniform_table_has_no_interactions() {
    let dir = tempfile::tempdir().unwrap();
    let p: Vec<Value> = (0..16).map(|_| Value::from("1/16")).collect();
    let table = save(dir.path(), "u.json", &serde_json::json!({ "n": 4, "order": "binary-ascending", "p": p }));
    let doc = hmtree(&["cumulants", "--tree", QUARTET, "--table", &table]).json();
    assert!(doc["cumulant"].as_object().unwrap().values().all(|v| v == "0"));
    let m = hmtree(&["metric", "--table", &table, "--format", "text"]);
    assert!(m.stdout.lines().nth(1).unwrap().contains("inf"), "{}", m.stdout);
}

#[test]
fn certify_exit_codes_and_witnesses() {
    let tripod = hmtree(&["certify", "--tree", "(1,2,3);", "--moments", data("tripod.json").to_str().unwrap()]);
    assert_eq!(tripod.code, 1);
    assert_eq!(tripod.json()["failed_families"], serde_json::json!(["C3"]));
    let table = hmtree(&["certify", "--tree", QUARTET, "--table", data("table1.json").to_str().unwrap()]);
    assert_eq!(table.code, 1);
    let doc = table.json();
    assert_eq!(doc["verdict"], "FAIL");
    let c2 = doc["reports"].as_array().unwrap().iter().find(|r| r["witness"] == "(1,2,3) upper").unwrap();
    assert_eq!(c2["satisfied"], false);
    assert_eq!(c2["lhs"], "1936/9765625");
}

#[test]
fn moment_report_feeds_certify() {
    let dir = tempfile::tempdir().unwrap();
    let table = data("table1.json");
    let report = hmtree(&["cumulants", "--tree", QUARTET, "--table", table.to_str().unwrap()]).json();
    let moments = save(dir.path(), "k.json", &report);
    let a = hmtree(&["certify", "--tree", QUARTET, "--moments", &moments]);
    let b = hmtree(&["certify", "--tree", QUARTET, "--table", table.to_str().unwrap()]);
    assert_eq!(a.code, 1);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn sample_forward_certify_recover() {
    let dir = tempfile::tempdir().unwrap();
    let tree = "((1,2),3,(4,5));";
    let first = hmtree(&["sample", "--tree", tree, "--seed", "7"]);
    assert_eq!(first.code, 0);
    assert_eq!(first.stdout, hmtree(&["sample", "--tree", tree, "--seed", "7"]).stdout);
    assert_ne!(first.stdout, hmtree(&["sample", "--tree", tree, "--seed", "8"]).stdout);
    let drawn = save(dir.path(), "s.json", &first.json());

    let fwd = hmtree(&["forward", "--tree", tree, "--params", &drawn]);
    assert_eq!(fwd.code, 0, "{}", fwd.stderr);
    assert_eq!(fwd.json(), first.json()["table"]);
    let mut total = num_rational::BigRational::from_integer(0.into());
    for v in fwd.json()["p"].as_array().unwrap() {
        total += v.as_str().unwrap().parse::<num_rational::BigRational>().unwrap();
    }
    assert_eq!(total, num_rational::BigRational::from_integer(1.into()));

    let cert = hmtree(&["certify", "--tree", tree, "--table", &drawn]);
    assert_eq!(cert.code, 0, "{}", cert.stdout);

    let rec = hmtree(&["recover", "--tree", tree, "--table", &drawn]);
    assert_eq!(rec.code, 0, "{}", rec.stdout);
    let doc = rec.json();
    assert_eq!(doc["feasible"], true);
    // Recovered parameters regenerate the table.
    let theta = save(dir.path(), "theta.json", &doc["theta"]);
    let omega = save(dir.path(), "omega.json", &doc["omega"]);
    assert_eq!(hmtree(&["forward", "--tree", tree, "--params", &theta]).json(), first.json()["table"]);
    assert_eq!(hmtree(&["forward", "--tree", tree, "--params", &omega]).json(), first.json()["table"]);
}

#[test]
fn recover_from_another_root() {
    let dir = tempfile::tempdir().unwrap();
    let drawn = save(dir.path(), "s.json", &hmtree(&["sample", "--tree", QUARTET, "--seed", "3"]).json());
    let rec = hmtree(&["recover", "--tree", QUARTET, "--table", &drawn, "--root", "h2"]).json();
    assert_eq!(rec["omega"]["root"], "h2");
    let theta = save(dir.path(), "theta.json", &rec["theta"]);
    let fwd = hmtree(&["forward", "--tree", QUARTET, "--params", &theta]).json();
    assert_eq!(
        fwd["p"],
        serde_json::from_str::<Value>(&std::fs::read_to_string(&drawn).unwrap()).unwrap()["table"]["p"]
    );
}

#[test]
fn table_recovery_reports_negative_conditional() {
    let r = hmtree(&["recover", "--tree", QUARTET, "--table", data("table1.json").to_str().unwrap()]);
    assert_eq!(r.code, 1);
    let doc = r.json();
    assert_eq!(doc["theta"]["cond"]["1"][0], "-3/10");
    assert!(doc["theta_violations"].as_array().unwrap().iter().any(|v| v["constraint"] == "theta[1]_1|0 >= 0"));
}

#[test]
fn invariants_hold_on_the_table() {
    let r = hmtree(&["invariants", "--tree", QUARTET, "--table", data("table1.json").to_str().unwrap()]);
    assert_eq!(r.code, 0, "{}", r.stdout);
    let inner = r.json()["edges"].as_array().unwrap().iter().find(|e| e["trivial"] == false).cloned().unwrap();
    assert_eq!(inner["flattening_rank"], 2);
    assert_eq!(inner["cumulant_rank"], 1);
    let text = hmtree(&[
        "invariants",
        "--tree",
        QUARTET,
        "--table",
        data("table1.json").to_str().unwrap(),
        "--format",
        "text",
    ]);
    assert!(text.stdout.contains("row,00,01,10,11"), "{}", text.stdout);
}

#[test]
fn float_mode_agrees() {
    let r = hmtree(&[
        "recover",
        "--tree",
        "(1,2,3);",
        "--moments",
        data("tripod.json").to_str().unwrap(),
        "--mode",
        "float",
    ]);
    assert_eq!(r.code, 1);
    let m = r.json()["omega"]["mean_bar"]["h1"].as_f64().unwrap();
    assert!((m - 0.8597).abs() < 5e-4);
}

#[test]
fn usage_and_format_errors_exit_2() {
    assert_eq!(hmtree(&["certify", "--table", data("table1.json").to_str().unwrap()]).code, 2);
    assert_eq!(hmtree(&["certify", "--tree", QUARTET]).code, 2);
    assert_eq!(hmtree(&["certify", "--tree", QUARTET, "--table", "/nonexistent.json"]).code, 2);
    assert_eq!(
        hmtree(&["cumulants", "--tree", QUARTET, "--table", data("table1.json").to_str().unwrap(), "--tol", "0"]).code,
        2
    );
    assert_eq!(hmtree(&["certify", "--tree", "((1,2),(3,4);"]).code, 2);
    assert_eq!(hmtree(&["nonsense"]).code, 2);
    let dir = tempfile::tempdir().unwrap();
    let bad = save(dir.path(), "bad.json", &serde_json::json!({ "n": 2, "p": ["1/2", "x", 0, 0] }));
    let r = hmtree(&["cumulants", "--tree", "(1,2);", "--table", &bad]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("cannot read 'x'"), "{}", r.stderr);
}
