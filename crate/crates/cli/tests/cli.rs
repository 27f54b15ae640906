use std::path::Path;
use std::process::{Command, Output};

use nl2sql_core::fixtures::{write_store_scenario, Scenario, STORE_QUESTIONS};

fn nl2sql(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nl2sql"))
        .args(args)
        .env_remove("NL2SQL_CONFIG")
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
}

fn scenario(dir: &Path) -> Scenario {
    write_store_scenario(dir).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn ask_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario(dir.path());
    let run = |out: &str| {
        let out = dir.path().join(out);
        let o = nl2sql(&[
            "--config",
            s(&sc.config),
            "--out",
            s(&out),
            "ask",
            s(&sc.db),
            "--question",
            STORE_QUESTIONS[0].question,
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        (o.stdout, std::fs::read(out.join("transcript.json")).unwrap())
    };
    let (a_out, a_file) = run("a");
    let (b_out, b_file) = run("b");
    assert_eq!(a_out, b_out);
    assert_eq!(a_file, b_file);
    assert_eq!(String::from_utf8(a_out).unwrap().trim(), STORE_QUESTIONS[0].answers[0]);
}

#[test]
fn ask_execute_prints_rows() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario(dir.path());
    let o = nl2sql(&[
        "--config",
        s(&sc.config),
        "--out",
        s(&dir.path().join("o")),
        "ask",
        s(&sc.db),
        "--question",
        STORE_QUESTIONS[0].question,
        "--execute",
    ]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().nth(1), Some("2"));
}

#[test]
fn eval_scores_five_items() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario(dir.path());
    let out = dir.path().join("eval");
    let o = nl2sql(&["--config", s(&sc.config), "--out", s(&out), "--workers", "3", "eval", s(&sc.dataset)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    // Hand-scored: items 0, 1, 3 correct; item 2 loses the vote; item 4 has broken gold.
    assert_eq!(report["items"], 5);
    assert_eq!(report["scored"], 4);
    assert_eq!(report["correct"], 3);
    assert_eq!(report["gold_errors"], 1);
    assert_eq!(report["ex"], 0.75);
    let records = std::fs::read_to_string(out.join("records.jsonl")).unwrap();
    let verdicts: Vec<String> = records
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["verdict"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(verdicts, ["correct", "correct", "wrong", "correct", "gold_error"]);
    assert!(out.join("summary.txt").is_file());
}

#[test]
fn eval_output_independent_of_workers() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario(dir.path());
    let read = |w: &str| {
        let out = dir.path().join(format!("w{w}"));
        let o = nl2sql(&["--config", s(&sc.config), "--out", s(&out), "--workers", w, "eval", s(&sc.dataset)]);
        assert!(o.status.success());
        std::fs::read(out.join("records.jsonl")).unwrap()
    };
    assert_eq!(read("1"), read("4"));
}

#[test]
fn missing_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario(dir.path());
    let o = nl2sql(&["ask", s(&sc.db), "--question", "q"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("invalid configuration"));

    let o = nl2sql(&["--config", s(&dir.path().join("nope.toml")), "ask", s(&sc.db), "--question", "q"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn invalid_config_and_usage_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario(dir.path());
    let text = std::fs::read_to_string(&sc.config).unwrap().replace("p_s = 2", "p_s = 0");
    std::fs::write(&sc.config, text).unwrap();
    let o = nl2sql(&["--config", s(&sc.config), "ask", s(&sc.db), "--question", "q"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(nl2sql(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn pipeline_failure_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario(dir.path());
    let o = nl2sql(&["--config", s(&sc.config), "ask", s(&dir.path().join("missing.sqlite")), "--question", "q"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn synth_multitask_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario(dir.path());
    let run = |out: &str| {
        let out = dir.path().join(out);
        let o = nl2sql(&["--config", s(&sc.config), "--out", s(&out), "--seed", "3", "synth", s(&sc.dataset), "--task", "multitask"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(out.join("multitask.jsonl")).unwrap()
    };
    let a = run("a");
    assert_eq!(a, run("b"));
    // Four items have working gold SQL.
    assert_eq!(a.iter().filter(|b| **b == b'\n').count(), 4);
}

#[test]
fn synth_selection_writes_balance() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario(dir.path());
    let out = dir.path().join("sel");
    let o = nl2sql(&["--config", s(&sc.config), "--out", s(&out), "synth", s(&sc.dataset), "--task", "selection"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    // Items 0 and 2 have both right and wrong candidates; 1 and 3 are unanimous.
    let lines = std::fs::read_to_string(out.join("selection.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 2);
    assert!(out.join("balance.json").is_file());
}

#[test]
fn introspect_prints_schema() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario(dir.path());
    let o = nl2sql(&["--out", s(&dir.path().join("o")), "introspect", s(&sc.db)]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("# Table: orders"));
}
