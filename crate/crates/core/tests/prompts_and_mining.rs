use std::path::PathBuf;

use nl2sql::fixtures;
use nl2sql::linking::{self, LinkedSchema};
use nl2sql::mining::{self, MiningConfig};
use nl2sql::sqlgen::{self, PromptStyle};
use nl2sql::{canonical, Database};

fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

/// Compares with the committed render; `UPDATE_GOLDEN=1` rewrites it.
fn check_golden(name: &str, actual: &str) {
    let path = golden(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(actual, expected, "render differs from {}", path.display());
}

fn linked() -> LinkedSchema {
    let mut ls = LinkedSchema::default();
    ls.add_table("orders");
    ls.add_table("customer");
    ls.add_column("orders.status".parse().unwrap());
    ls.add_column("customer.name".parse().unwrap());
    ls.add_join("orders.customer_id".parse().unwrap(), "customer.id".parse().unwrap());
    ls.add_value("orders.status".parse().unwrap(), "2".into());
    ls.rationale = "Cancelled orders are status 2; customer names come from customer.".into();
    ls
}

const QUESTION: &str = "List the names of customers who have an order that was cancelled.";

#[test]
fn linking_prompt_golden() {
    let card = fixtures::demo_card();
    let prompt = linking::build_linking_prompt(QUESTION, &card);
    assert!(prompt.contains("  orders.status = 0: init; 1: paid; 2: cancelled"));
    check_golden("linking_prompt.txt", &prompt);
}

#[test]
fn generation_prompts_golden() {
    let card = fixtures::demo_card();
    for (style, file) in [
        (PromptStyle::Sqlfuse, "gen_sqlfuse.txt"),
        (PromptStyle::CodeRepresentation, "gen_code.txt"),
        (PromptStyle::NaturalLanguage, "gen_natural.txt"),
    ] {
        check_golden(file, &sqlgen::render_prompt(style, QUESTION, &linked(), &card));
    }
}

#[test]
fn demo_card_matches_miner() {
    let dir = tempfile::tempdir().unwrap();
    let db = fixtures::demo_db(dir.path()).unwrap();
    let mined = mining::mine(&db, &fixtures::demo_mining_config()).unwrap();
    assert_eq!(mined, fixtures::demo_card());
    assert_eq!(mined.column_count(), 11);
}

#[test]
fn mining_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = canonical::to_string(&mining::mine(&fixtures::retail_db(a.path()).unwrap(), &MiningConfig::default()).unwrap()).unwrap();
    let second = canonical::to_string(&mining::mine(&fixtures::retail_db(b.path()).unwrap(), &MiningConfig::default()).unwrap()).unwrap();
    assert_eq!(first, second);
}

#[test]
fn execution_never_writes() {
    let dir = tempfile::tempdir().unwrap();
    let db = fixtures::demo_db(dir.path()).unwrap();
    let before = std::fs::read(db.path()).unwrap();
    for sql in [
        "DELETE FROM singer",
        "DROP TABLE singer",
        "UPDATE singer SET age = 0",
        "INSERT INTO singer VALUES (9, 'X', 1, 'US')",
        "SELECT 1; DELETE FROM singer",
        "PRAGMA user_version = 5",
        "ATTACH DATABASE ':memory:' AS m",
    ] {
        match db.execution_check(sql) {
            Ok(out) => assert!(!out.ok, "`{sql}` was allowed"),
            Err(_) => {}
        }
    }
    let reopened = Database::open(db.path()).unwrap();
    assert_eq!(reopened.execution_check("SELECT count(*) FROM singer").unwrap().ok, true);
    assert_eq!(std::fs::read(db.path()).unwrap(), before);
}
