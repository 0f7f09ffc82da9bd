use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use jsonschema::JSONSchema;
use serde_json::Value;

const CSV_HEADER: &str =
    "trial,realized_game,s1,s2,t,avg_u1,avg_u2,ext_regret1,ext_regret2,swap_regret1,swap_regret2";

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).to_path_buf()
}

fn example(name: &str) -> String {
    root().join("examples").join(name).display().to_string()
}

fn asymlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_asymlab"))
        .args(args)
        .env_remove("ASYMLAB_OUT_DIR")
        .output()
        .expect("spawn asymlab")
}

fn json_out(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}); stderr: {}",
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

fn read_schema(name: &str) -> Value {
    let text = fs::read_to_string(root().join("schemas").join(name)).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn check_schema(name: &str, report: &Value) {
    let schema = read_schema(name);
    let compiled = JSONSchema::options()
        .with_document(
            "asymlab:///common.schema.json".into(),
            read_schema("common.schema.json"),
        )
        .with_document(
            "asymlab:///config.schema.json".into(),
            read_schema("config.schema.json"),
        )
        .compile(&schema)
        .unwrap_or_else(|e| panic!("{name} does not compile: {e}"));
    if let Err(errors) = compiled.validate(report) {
        let msgs: Vec<String> = errors
            .map(|e| format!("{} at {}", e, e.instance_path))
            .collect();
        panic!("{name} rejects report:\n{}", msgs.join("\n"));
    };
}

fn close(v: &Value, want: f64) -> bool {
    (v.as_f64().unwrap() - want).abs() < 1e-9
}

#[test]
fn stackval_single_game() {
    let out = asymlab(&["stackval", "--game", "fig1_g2:gamma=1", "--player", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let r = json_out(&out);
    check_schema("stackval.schema.json", &r);
    assert!(close(&r["value"], 2.0));
    assert!(close(&r["commitment"]["D"], 1.0));
    assert_eq!(r["follower_action"], "B");
}

#[test]
fn stackval_prior_expectation() {
    let out = asymlab(&["stackval", "--prior", "fig1:gamma=1", "--player", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let r = json_out(&out);
    check_schema("stackval.schema.json", &r);
    assert!(close(&r["value"], 1.5));
    assert_eq!(r["games"].as_array().unwrap().len(), 2);

    let out = asymlab(&["stackval", "--prior", "fig1:gamma=1"]);
    assert!(close(&json_out(&out)["value"], 8.5));
}

#[test]
fn stackval_one_by_one_game_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.json");
    fs::write(
        &path,
        r#"{"name": "dot", "actions1": ["a"], "actions2": ["b"], "u1": [[3]], "u2": [[-1]]}"#,
    )
    .unwrap();
    let out = asymlab(&[
        "stackval",
        "--game",
        path.to_str().unwrap(),
        "--player",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let r = json_out(&out);
    check_schema("stackval.schema.json", &r);
    assert!(close(&r["value"], 3.0));
    assert!(close(&r["commitment"]["a"], 1.0));
}

#[test]
fn reveal_reports() {
    let out = asymlab(&["reveal", "--prior", "example41", "--player", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let r = json_out(&out);
    check_schema("reveal.schema.json", &r);
    assert_eq!(r["any_revealing"], false);

    let r = json_out(&asymlab(&[
        "reveal",
        "--prior",
        "example41",
        "--player",
        "2",
    ]));
    check_schema("reveal.schema.json", &r);
    assert_eq!(r["actions"][0]["label"], "C");
    assert_eq!(r["actions"][0]["revealing"], true);
    assert_eq!(r["actions"][1]["revealing"], false);
}

#[test]
fn audit_catches_mimic_deviation() {
    let out = asymlab(&[
        "audit",
        &example("reveal_follow.json"),
        "--horizon",
        "2000",
        "--trials",
        "8",
        "--epsilon",
        "0.1",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let r = json_out(&out);
    check_schema("audit.schema.json", &r);
    assert_eq!(r["verdict"]["status"], "fail");
    assert_eq!(r["verdict"]["player"], 1);
    assert_eq!(r["verdict"]["deviation"], "mimic:G1");
    assert!((r["verdict"]["gain"].as_f64().unwrap() - 0.45).abs() < 0.01);
}

#[test]
fn audit_passes_for_constant_pair_with_large_epsilon() {
    let out = asymlab(&[
        "audit",
        &example("constant_ac.json"),
        "--horizon",
        "50",
        "--trials",
        "4",
        "--epsilon",
        "100",
        "--independent",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let r = json_out(&out);
    check_schema("audit.schema.json", &r);
    assert_eq!(r["verdict"]["status"], "pass");
    assert_eq!(r["common_random_numbers"], false);
}

#[test]
fn claims_flags_contradiction() {
    let out = asymlab(&[
        "claims",
        &example("reveal_follow.json"),
        "--horizon",
        "2000",
        "--trials",
        "16",
    ]);
    let r = json_out(&out);
    check_schema("claims.schema.json", &r);
    assert_eq!(r["contradiction"], true);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn claims_rejects_foreign_prior() {
    let out = asymlab(&[
        "claims",
        &example("example41_likelihood.json"),
        "--horizon",
        "10",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn learn_reports() {
    let out = asymlab(&[
        "learn",
        &example("example41_likelihood.json"),
        "--belief",
        "utility_likelihood",
        "--horizon",
        "200",
        "--trials",
        "4",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let r = json_out(&out);
    check_schema("learn.schema.json", &r);
    assert_eq!(r["player"], 2);
    assert!(r["last_error_round"].as_u64().unwrap_or(0) <= 1);
    assert_eq!(r["success"], true);

    let out = asymlab(&[
        "learn",
        &example("reveal_follow.json"),
        "--belief",
        "nearest_best_response",
        "--horizon",
        "100",
        "--trials",
        "4",
    ]);
    let r = json_out(&out);
    check_schema("learn.schema.json", &r);
    assert_eq!(r["player"], 1);
}

#[test]
fn simulate_every_example() {
    let mut names: Vec<_> = fs::read_dir(root().join("examples"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    names.sort();
    assert!(names.len() >= 5);
    for path in names {
        let cfg: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        check_schema("config.schema.json", &cfg);
        let out = asymlab(&[
            "simulate",
            path.to_str().unwrap(),
            "--horizon",
            "300",
            "--trials",
            "3",
        ]);
        assert_eq!(
            out.status.code(),
            Some(0),
            "{}: {}",
            path.display(),
            String::from_utf8_lossy(&out.stderr)
        );
        let r = json_out(&out);
        check_schema("simulate.schema.json", &r);
        assert_eq!(r["estimate"]["trials"], 3);
        assert_eq!(r["estimate"]["horizon"], 300);
    }
}

#[test]
fn malformed_config_names_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.json");
    fs::write(
        &path,
        "{\n  \"prior\": \"fig1:gamma=1\",\n  \"horizon\": ,\n}\n",
    )
    .unwrap();
    let out = asymlab(&["simulate", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("broken.json"), "{err}");
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn unknown_config_field_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("extra.json");
    let mut cfg: Value =
        serde_json::from_str(&fs::read_to_string(example("constant_ac.json")).unwrap()).unwrap();
    cfg["horizn"] = 10.into();
    fs::write(&path, cfg.to_string()).unwrap();
    let out = asymlab(&["simulate", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("horizn"));
}

#[test]
fn overrides_apply_to_config() {
    let out = asymlab(&[
        "simulate",
        &example("constant_ac.json"),
        "--set",
        "signal_model.p2=0.5",
        "--set",
        "spec1.params.action=1",
        "--seed",
        "9",
        "--horizon",
        "10",
        "--trials",
        "2",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let r = json_out(&out);
    assert!(close(&r["config"]["signal_model"]["p2"], 0.5));
    assert_eq!(r["config"]["spec1"]["params"]["action"], 1);
    assert_eq!(r["config"]["master_seed"], 9);
    assert_eq!(r["config"]["horizon"], 10);

    let out = asymlab(&[
        "simulate",
        &example("constant_ac.json"),
        "--set",
        "nosuch.key=1",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn out_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_asymlab"))
        .args([
            "simulate",
            &example("constant_ac.json"),
            "--horizon",
            "8",
            "--trials",
            "2",
        ])
        .env("ASYMLAB_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let summary: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("simulate.json")).unwrap())
            .unwrap();
    assert_eq!(summary, json_out(&out));

    let csv = fs::read_to_string(dir.path().join("trials.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    // 2 trials x checkpoints {1, 2, 4, 8}
    assert_eq!(lines.count(), 8);
}

#[test]
fn csv_to_stdout() {
    let out = asymlab(&[
        "simulate",
        &example("constant_ac.json"),
        "--horizon",
        "4",
        "--trials",
        "1",
        "--csv",
        "-",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines[0], CSV_HEADER);
    assert!(lines[1].starts_with("0,"));
    assert!(lines[3].split(',').nth(4) == Some("4"));
    assert_eq!(lines.len(), 4);
}

#[test]
fn thread_count_does_not_change_reports() {
    let run = |threads: &str| {
        json_out(&asymlab(&[
            "simulate",
            &example("inline_prior.json"),
            "--horizon",
            "200",
            "--trials",
            "6",
            "--threads",
            threads,
        ]))
    };
    let mut a = run("1");
    let mut b = run("3");
    a["config"]["threads"].take();
    b["config"]["threads"].take();
    assert_eq!(a, b);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(asymlab(&["stackval"]).status.code(), Some(1));
    assert_eq!(
        asymlab(&["stackval", "--game", "fig1_g1:gamma=1", "--player", "3"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(asymlab(&["--help"]).status.code(), Some(0));
}
