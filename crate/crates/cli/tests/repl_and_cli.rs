use std::io::Cursor;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;

use nl2sql::fixtures;
use nl2sql::gateway::{ScriptedGateway, ScriptedRule};
use nl2sql::pipeline::Gateways;
use nl2sql::{Pipeline, PipelineConfig};
use nl2sql_cli::repl::Session;
use serde_json::Value;

fn pipeline() -> Pipeline {
    let gw = ScriptedGateway::new(vec![
        ScriptedRule::contains("### Schema linking", "TABLES:\norders\nREASONING:\nCount orders."),
        ScriptedRule::contains("### SQL generation", "SELECT count(*) FROM orders WHERE status = 'paid'"),
        ScriptedRule::contains("### SQL critic", "Answer: 1"),
    ]);
    let cfg = PipelineConfig {
        mining: fixtures::demo_mining_config(),
        ..Default::default()
    };
    Pipeline::new(cfg, Gateways::single(Arc::new(gw)))
}

fn session_output(input: &str) -> (String, Option<nl2sql::QueryTrace>) {
    let dir = tempfile::tempdir().unwrap();
    let db = fixtures::demo_db(dir.path()).unwrap();
    let p = pipeline();
    let mut s = Session::new(&p, &db);
    let mut out = Vec::new();
    s.run(Cursor::new(input), &mut out).unwrap();
    (String::from_utf8(out).unwrap(), s.last)
}

#[test]
fn question_prints_sql_rows_and_summary() {
    let (out, last) = session_output("How many orders are paid?\n");
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("SELECT count(*) FROM orders WHERE status = 1"));
    assert!(out.contains("\n2\n"));
    assert!(out.contains("-- 4 candidates, 4 constant fixes, 0 regenerations"));
    assert_eq!(last.unwrap().question, "How many orders are paid?");
}

#[test]
fn trace_command() {
    let (out, _) = session_output("\\trace\nHow many orders are paid?\n\\trace\n");
    assert!(out.starts_with("no query yet\n"));
    let json_start = out.find("{\n").unwrap();
    let trace: Value = serde_json::from_str(&out[json_start..]).unwrap();
    assert_eq!(trace["question"], "How many orders are paid?");
}

#[test]
fn flags_toggle_critic() {
    let (out, last) = session_output("\\flags use_critic off\nHow many orders are paid?\n");
    assert!(out.starts_with("use_critic off\n"));
    let t = last.unwrap();
    assert!(!t.flags.use_critic);
    assert_eq!(serde_json::to_value(t.verdict.method).unwrap(), "bypassed");
}

#[test]
fn errors_do_not_end_the_session() {
    let (out, last) = session_output("\\flags nonsense on\n\\bogus\n\\style natural\nHow many orders are paid?\n\\flags\n");
    assert!(out.contains("error: invalid configuration: unknown flag `nonsense`"));
    assert!(out.contains("error: unknown command"));
    assert!(out.contains("prompt_style natural_language"));
    assert!(last.is_some());
    assert!(out.trim_end().ends_with("prompt_style natural_language"));
}

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_nl2sql"));
    c.env("NL2SQL_LOG", "error");
    c
}

fn run_ok(cmd: &mut Command) -> String {
    let out = cmd.output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn write_rules(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("rules.json");
    std::fs::write(
        &path,
        r####"{"rules": [
            {"contains": "### Schema linking", "response": "TABLES:\nsinger\nREASONING:\nSingers."},
            {"contains": "### SQL generation", "response": "SELECT count(*) FROM singer"},
            {"contains": "### SQL critic", "response": "Answer: 2"}
        ]}"####,
    )
    .unwrap();
    path
}

#[test]
fn repl_binary_exits_cleanly_on_eof() {
    let dir = tempfile::tempdir().unwrap();
    let db = fixtures::demo_db(dir.path()).unwrap();
    let out = bin()
        .args(["repl", "--db"])
        .arg(db.path())
        .stdin(std::process::Stdio::null())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn stage_commands() {
    let dir = tempfile::tempdir().unwrap();
    let db = fixtures::demo_db(dir.path()).unwrap();
    let rules = write_rules(dir.path());

    let card: Value = serde_json::from_str(&run_ok(bin().arg("mine").arg(db.path()))).unwrap();
    assert_eq!(card["tables"].as_array().unwrap().len(), 4);
    let out = dir.path().join("card.json");
    run_ok(bin().arg("mine").arg(db.path()).arg("--out").arg(&out));
    let written: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(written, card);

    let linked: Value = serde_json::from_str(&run_ok(
        bin().arg("--gateway").arg(&rules).args(["link", "--db"]).arg(db.path()).arg("How many singers?"),
    ))
    .unwrap();
    assert_eq!(linked["linked"]["tables"][0], "singer");

    let cands: Value = serde_json::from_str(&run_ok(
        bin().arg("--gateway").arg(&rules).args(["gen", "--db"]).arg(db.path()).arg("How many singers?"),
    ))
    .unwrap();
    assert_eq!(cands.as_array().unwrap().len(), 4);
    assert_eq!(cands[0]["sql"], "SELECT count(*) FROM singer");

    let verdict: Value = serde_json::from_str(&run_ok(
        bin()
            .arg("--gateway")
            .arg(&rules)
            .args(["critic", "--db"])
            .arg(db.path())
            .args(["--sql", "SELECT name FROM singer", "--sql", "SELECT count(*) FROM singer", "How many singers?"]),
    ))
    .unwrap();
    assert_eq!(verdict["chosen_sql"], "SELECT count(*) FROM singer");
    assert_eq!(verdict["verdict"]["chosen_index"], 1);
}

#[test]
fn kb_commands() {
    let dir = tempfile::tempdir().unwrap();
    let db = fixtures::demo_db(dir.path()).unwrap();
    let kb = dir.path().join("kb.jsonl");
    let records = dir.path().join("records.jsonl");
    std::fs::write(
        &records,
        "{\"question\": \"How many singers are older than 30?\", \"good_answer\": \"SELECT count(*) FROM singer WHERE age > 30\"}\n\
         {\"question\": \"List the names of all customers.\", \"good_answer\": \"SELECT name, id FROM customer\"}\n",
    )
    .unwrap();
    let report: Value = serde_json::from_str(&run_ok(
        bin().args(["kb", "ingest", "--kb"]).arg(&kb).arg("--db").arg(db.path()).arg("--records").arg(&records),
    ))
    .unwrap();
    assert_eq!(report["added"], 2);

    let listed: Value = serde_json::from_str(&run_ok(bin().args(["kb", "list", "--kb"]).arg(&kb))).unwrap();
    assert_eq!(listed.as_array().unwrap().len(), 2);
    assert_eq!(listed[1]["bad_answer"], "SELECT id, name FROM customer");

    let hits: Value = serde_json::from_str(&run_ok(
        bin()
            .args(["kb", "retrieve", "-k", "1", "--kb"])
            .arg(&kb)
            .arg("--db")
            .arg(db.path())
            .arg("How many concerts are older than 5?"),
    ))
    .unwrap();
    assert_eq!(hits[0]["id"], "kb-000001");
}

#[test]
fn eval_single_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let root = fixtures::write_spider_mini(dir.path()).unwrap();
    let csv = run_ok(
        bin()
            .args(["eval", "--gateway", "gold-echo", "--scenario", "wo Critic Module", "--dataset"])
            .arg(&root),
    );
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("scenario,total,correct,accuracy,delta_vs_full"));
    assert_eq!(lines.next(), Some("wo Critic Module,20,20,1.0000,"));
}

#[test]
fn bad_arguments_fail() {
    assert!(!bin().args(["eval", "--dataset", "x"]).output().unwrap().status.success());
    let dir = tempfile::tempdir().unwrap();
    let db = fixtures::demo_db(dir.path()).unwrap();
    let out = bin().args(["--gateway", "gold-echo", "link", "--db"]).arg(db.path()).arg("q").output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("gold-echo"));
}
