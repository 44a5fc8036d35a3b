//! Execution-accuracy evaluation over Spider-format datasets.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use rayon::prelude::*;
use regex::escape;
use serde::{Deserialize, Serialize};

use crate::gateway::{Gateway, ScriptedGateway, ScriptedRule};
use crate::linking::{render_linking_response, LinkedSchema};
use crate::pipeline::{AblationFlags, Catalog, Gateways, Pipeline};
use crate::schema::SchemaCard;
use crate::sql::{extract_linking, has_top_level_order_by, Database, ResultTable, SqlValue};
use crate::sqlgen::PromptStyle;
use crate::{Error, Result};

pub const ITEM_TIMEOUT: Duration = Duration::from_secs(30);
pub const FULL_SYSTEM: &str = "SQLfuse";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkItem {
    pub question: String,
    pub database_id: String,
    pub gold_sql: String,
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub items: Vec<BenchmarkItem>,
    pub databases: Catalog,
    pub diagnostics: Vec<String>,
}

#[derive(Deserialize)]
struct RawItem {
    db_id: Option<String>,
    question: Option<String>,
    query: Option<String>,
}

/// Reads `tables.json`, `dev.json` and `database/<id>/<id>.sqlite` from a
/// Spider-layout directory. Records that are malformed, point at a missing
/// database, or whose gold SQL fails are skipped with a diagnostic.
pub fn load_spider(dir: &Path) -> Result<Dataset> {
    let tables_path = dir.join("tables.json");
    let tables_text = std::fs::read_to_string(&tables_path)
        .map_err(|e| Error::Ingestion(format!("{}: {e}", tables_path.display())))?;
    let tables: serde_json::Value = serde_json::from_str(&tables_text)
        .map_err(|e| Error::Ingestion(format!("{}: {e}", tables_path.display())))?;
    if !tables.is_array() {
        return Err(Error::Ingestion("tables.json must hold an array".into()));
    }
    let examples_path = dir.join("dev.json");
    let examples_text = std::fs::read_to_string(&examples_path)
        .map_err(|e| Error::Ingestion(format!("{}: {e}", examples_path.display())))?;
    let raw: Vec<serde_json::Value> = serde_json::from_str(&examples_text)
        .map_err(|e| Error::Ingestion(format!("{}: {e}", examples_path.display())))?;

    let mut ds = Dataset::default();
    let mut opened: BTreeMap<String, Option<Database>> = BTreeMap::new();
    for (n, value) in raw.into_iter().enumerate() {
        let rec: RawItem = match serde_json::from_value(value) {
            Ok(r) => r,
            Err(e) => {
                ds.diagnostics.push(format!("record {n}: {e}"));
                continue;
            }
        };
        let (Some(db_id), Some(question), Some(gold)) = (rec.db_id, rec.question, rec.query) else {
            ds.diagnostics.push(format!("record {n}: missing db_id, question or query"));
            continue;
        };
        let db = opened
            .entry(db_id.clone())
            .or_insert_with(|| {
                let path = dir.join("database").join(&db_id).join(format!("{db_id}.sqlite"));
                Database::with_id(&db_id, path).ok()
            })
            .clone();
        let Some(db) = db else {
            ds.diagnostics.push(format!("record {n}: database `{db_id}` not found"));
            continue;
        };
        match db.execute(&gold, ITEM_TIMEOUT) {
            Ok(out) if out.ok => {}
            Ok(out) => {
                ds.diagnostics.push(format!(
                    "record {n}: gold SQL fails: {}",
                    out.error.unwrap_or_default()
                ));
                continue;
            }
            Err(e) => {
                ds.diagnostics.push(format!("record {n}: gold SQL rejected: {e}"));
                continue;
            }
        }
        ds.databases.insert(db);
        ds.items.push(BenchmarkItem {
            question,
            database_id: db_id,
            gold_sql: gold,
        });
    }
    Ok(ds)
}

/// Comparison key for a cell. Numbers are snapped to a 1e-6 grid so that
/// equality stays transitive.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum CellKey {
    Null,
    Number(i128),
    Float(u64),
    Text(String),
    Blob(String),
}

fn cell_key(v: &SqlValue) -> CellKey {
    match v {
        SqlValue::Null => CellKey::Null,
        SqlValue::Integer(_) | SqlValue::Real(_) => {
            let x = v.as_f64().unwrap_or(0.0);
            let scaled = (x * 1e6).round();
            if scaled.is_finite() && scaled.abs() < 1e30 {
                CellKey::Number(scaled as i128)
            } else {
                CellKey::Float(x.to_bits())
            }
        }
        SqlValue::Text(s) => CellKey::Text(s.clone()),
        SqlValue::Blob { blob } => CellKey::Blob(blob.clone()),
    }
}

fn row_keys(t: &ResultTable) -> Vec<Vec<CellKey>> {
    t.rows.iter().map(|r| r.iter().map(cell_key).collect()).collect()
}

/// Result-table equality by column position. Unordered comparison treats
/// rows as a multiset.
pub fn results_equal(a: &ResultTable, b: &ResultTable, order_sensitive: bool) -> bool {
    if a.rows.len() != b.rows.len() {
        return false;
    }
    let width = |t: &ResultTable| t.rows.first().map_or(t.columns.len(), Vec::len);
    if !a.rows.is_empty() && width(a) != width(b) {
        return false;
    }
    let mut ka = row_keys(a);
    let mut kb = row_keys(b);
    if !order_sensitive {
        ka.sort();
        kb.sort();
    }
    ka == kb
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    ExecutionError,
    WrongResult,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemScore {
    #[serde(rename = "match")]
    pub matched: bool,
    pub failure_kind: Option<FailureKind>,
}

/// Executes the gold and predicted SQL and compares their results.
pub fn score_item(item: &BenchmarkItem, predicted_sql: &str, db: &Database) -> Result<ItemScore> {
    let gold = db.execute(&item.gold_sql, ITEM_TIMEOUT)?;
    let gold_rows = match (gold.ok, gold.rows) {
        (true, Some(rows)) => rows,
        _ => {
            return Err(Error::Ingestion(format!(
                "gold SQL fails for `{}`: {}",
                item.question,
                gold.error.unwrap_or_default()
            )))
        }
    };
    let fail = |kind| ItemScore {
        matched: false,
        failure_kind: Some(kind),
    };
    if predicted_sql.trim().is_empty() {
        return Ok(fail(FailureKind::ExecutionError));
    }
    let pred_rows = match db.execute(predicted_sql, ITEM_TIMEOUT) {
        Ok(out) if out.ok => out.rows.unwrap_or_default(),
        _ => return Ok(fail(FailureKind::ExecutionError)),
    };
    let ordered = has_top_level_order_by(predicted_sql) || has_top_level_order_by(&item.gold_sql);
    if results_equal(&gold_rows, &pred_rows, ordered) {
        Ok(ItemScore {
            matched: true,
            failure_kind: None,
        })
    } else {
        Ok(fail(FailureKind::WrongResult))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemResult {
    pub item: BenchmarkItem,
    pub predicted_sql: String,
    #[serde(rename = "match")]
    pub matched: bool,
    pub failure_kind: Option<FailureKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scenario: String,
    pub flags: AblationFlags,
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
    #[serde(default)]
    pub delta_vs_full: Option<f64>,
    pub per_item: Vec<ItemResult>,
}

impl EvalReport {
    fn new(scenario: &str, flags: AblationFlags, per_item: Vec<ItemResult>) -> Self {
        let total = per_item.len();
        let correct = per_item.iter().filter(|r| r.matched).count();
        let accuracy = if total == 0 { 0.0 } else { correct as f64 / total as f64 };
        Self {
            scenario: scenario.to_string(),
            flags,
            total,
            correct,
            accuracy,
            delta_vs_full: None,
            per_item,
        }
    }
}

/// Runs the pipeline over `items` with `flags` and scores every answer.
/// Items run in parallel; the report keeps input order.
pub fn run_scenario(
    scenario: &str,
    items: &[BenchmarkItem],
    catalog: &Catalog,
    flags: &AblationFlags,
    pipeline: &Pipeline,
) -> Result<EvalReport> {
    let results: Vec<Result<ItemResult>> = items
        .par_iter()
        .map(|item| {
            let db = catalog.get(&item.database_id)?;
            let predicted = match pipeline.run_query(&item.question, db, flags) {
                Ok(trace) => trace.chosen_sql,
                Err(Error::Database(_)) | Err(Error::RejectedStatement(_)) => String::new(),
                Err(e) => return Err(e),
            };
            let score = score_item(item, &predicted, db)?;
            Ok(ItemResult {
                item: item.clone(),
                predicted_sql: predicted,
                matched: score.matched,
                failure_kind: score.failure_kind,
            })
        })
        .collect();
    let per_item = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::new(scenario, *flags, per_item))
}

/// One row of the ablation table.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: &'static str,
    pub flags: AblationFlags,
    /// Rank with the alternate critic model.
    pub alternate_critic: bool,
}

/// The thirteen ablation rows, full system first.
pub fn ablation_scenarios() -> Vec<Scenario> {
    let full = AblationFlags::default();
    let row = |name, f: fn(&mut AblationFlags)| {
        let mut flags = full;
        f(&mut flags);
        Scenario {
            name,
            flags,
            alternate_critic: false,
        }
    };
    let mut rows = vec![
        row(FULL_SYSTEM, |_| {}),
        row("wo Primary KEY", |f| f.use_primary_key = false),
        row("wo Foreign KEY", |f| f.use_foreign_key = false),
        row("wo One-to-Many Relation", |f| f.use_one_to_many = false),
        row("wo Enum Values", |f| f.use_enums = false),
        row("wo Schema Linking", |f| f.use_schema_linking = false),
        row("wo CoT", |f| f.use_cot = false),
        row("Code Representation Style", |f| f.prompt_style = PromptStyle::CodeRepresentation),
        row("Natual Description Style", |f| f.prompt_style = PromptStyle::NaturalLanguage),
        row("wo Constant Value Fix", |f| f.use_constant_fix = false),
        row("wo SQL Execution Checking", |f| f.use_execution_check = false),
        row("wo Critic Module", |f| f.use_critic = false),
    ];
    rows.push(Scenario {
        name: "Critic Module (GPT-4)",
        flags: full,
        alternate_critic: true,
    });
    rows
}

/// Runs every ablation row. `alternate_critic` defaults to the pipeline's
/// own critic model.
pub fn ablation_matrix(
    items: &[BenchmarkItem],
    catalog: &Catalog,
    pipeline: &Pipeline,
    alternate_critic: Option<Arc<dyn Gateway>>,
) -> Result<Vec<EvalReport>> {
    let alt = alternate_critic.map(|gw| pipeline.with_gateways(pipeline.gateways().with_critic(gw)));
    let mut reports = Vec::new();
    for sc in ablation_scenarios() {
        let p = match (&alt, sc.alternate_critic) {
            (Some(alt), true) => alt,
            _ => pipeline,
        };
        reports.push(run_scenario(sc.name, items, catalog, &sc.flags, p)?);
    }
    let full = reports[0].accuracy;
    for r in &mut reports {
        r.delta_vs_full = Some(r.accuracy - full);
    }
    Ok(reports)
}

/// Summary table: scenario, total, correct, accuracy, delta_vs_full.
pub fn reports_to_csv(reports: &[EvalReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(["scenario", "total", "correct", "accuracy", "delta_vs_full"])
        .map_err(io)?;
    for r in reports {
        w.write_record([
            r.scenario.clone(),
            r.total.to_string(),
            r.correct.to_string(),
            format!("{:.4}", r.accuracy),
            r.delta_vs_full.map(|d| format!("{d:.4}")).unwrap_or_default(),
        ])
        .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Linking answer that names exactly the items `sql` uses.
pub fn linking_answer_for(sql: &str, card: &SchemaCard) -> Result<String> {
    let facts = extract_linking(sql, card)?;
    let mut ls = LinkedSchema::default();
    for t in &facts.tables {
        ls.add_table(t);
    }
    for c in facts.columns {
        ls.add_column(c);
    }
    for (a, b) in facts.joins {
        ls.add_join(a, b);
    }
    for (c, v) in facts.values {
        ls.add_value(c, v);
    }
    ls.rationale = format!("The question needs {}.", ls.tables.join(" and "));
    Ok(render_linking_response(&ls))
}

/// Scripted model that answers every stage with the gold SQL of the item
/// whose question appears in the prompt.
pub fn gold_echo_gateway(items: &[BenchmarkItem], cards: &BTreeMap<String, SchemaCard>) -> Result<ScriptedGateway> {
    let mut rules = Vec::new();
    for item in items {
        let q = escape(item.question.trim());
        let card = cards
            .get(&item.database_id)
            .ok_or_else(|| Error::NotFound(format!("card for `{}`", item.database_id)))?;
        let linking = linking_answer_for(&item.gold_sql, card)?;
        let regex = |stage: &str| format!(r"\A### {stage}\n(?s:.*)\nQuestion: {q}\n");
        rules.push(
            ScriptedRule::regex(&regex("Schema linking"), linking)
                .map_err(|e| Error::Config(e.to_string()))?,
        );
        rules.push(
            ScriptedRule::regex(&regex("SQL generation"), format!("```sql\n{}\n```", item.gold_sql))
                .map_err(|e| Error::Config(e.to_string()))?,
        );
    }
    rules.push(ScriptedRule::regex(r"\A### SQL critic\n", "Answer: 1").map_err(|e| Error::Config(e.to_string()))?);
    Ok(ScriptedGateway::new(rules))
}

/// Mines every database of `catalog` with the pipeline's settings.
pub fn mine_all(catalog: &Catalog, pipeline: &Pipeline) -> Result<BTreeMap<String, SchemaCard>> {
    catalog
        .databases()
        .map(|db| Ok((db.id().to_string(), (*pipeline.card_for(db)?).clone())))
        .collect()
}

/// Gold-echo gateways for a whole dataset.
pub fn gold_echo_gateways(ds: &Dataset, pipeline: &Pipeline) -> Result<Gateways> {
    let cards = mine_all(&ds.databases, pipeline)?;
    Ok(Gateways::single(Arc::new(gold_echo_gateway(&ds.items, &cards)?)))
}
