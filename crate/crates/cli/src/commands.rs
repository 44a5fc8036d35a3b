//! Single-stage commands. Each returns the JSON it would print.

use std::path::Path;

use anyhow::{bail, Context, Result};
use nl2sql::critic::{self, BadAnswerSource, IngestRecord, KnowledgeBase};
use nl2sql::eval::{self, ablation_scenarios, EvalReport};
use nl2sql::gateway::{CompletionRequest, Gateway};
use nl2sql::linking::{self, LinkedSchema};
use nl2sql::sqlgen::{self, SqlCandidate};
use nl2sql::{canonical, mining, Database, Pipeline};
use serde_json::json;

use crate::config::{GatewayConfig, GatewayKind};
use crate::gateways;

pub fn mine(db: &Database, pipeline: &Pipeline) -> Result<String> {
    let card = mining::mine(db, &pipeline.config().mining)?;
    Ok(canonical::to_string_pretty(&card)?)
}

fn link_stage(question: &str, db: &Database, pipeline: &Pipeline) -> Result<(LinkedSchema, Vec<String>)> {
    let card = pipeline.card_for(db)?;
    let prompt = linking::build_linking_prompt(question, &card);
    let text = pipeline
        .gateways()
        .linker
        .complete(&CompletionRequest::new(prompt))
        .context("linking model call")?;
    let parsed = linking::parse_linking_response(&text, &card)?;
    let scorer = linking::default_scorer(&card);
    let ls = linking::calibrate(question, &parsed.linked, &card, &scorer, pipeline.config().recall_threshold);
    Ok((ls, parsed.warnings))
}

pub fn link(question: &str, db: &Database, pipeline: &Pipeline) -> Result<String> {
    let (ls, warnings) = link_stage(question, db, pipeline)?;
    Ok(canonical::to_string_pretty(&json!({ "linked": ls, "warnings": warnings }))?)
}

/// Candidates after constant repair and execution feedback. Without
/// `use_linking` the whole schema goes into the prompt.
pub fn generate(question: &str, db: &Database, pipeline: &Pipeline, use_linking: bool) -> Result<String> {
    let card = pipeline.card_for(db)?;
    let ls = if use_linking {
        link_stage(question, db, pipeline)?.0
    } else {
        LinkedSchema::full(&card)
    };
    let cfg = &pipeline.config().generation;
    let prompt = sqlgen::render_prompt(cfg.style, question, &ls, &card);
    let opts = sqlgen::LoopOptions {
        rewrites: pipeline.config().rewrites.clone(),
        ..Default::default()
    };
    let cands = sqlgen::self_correct_loop_with(&prompt, &card, db, pipeline.gateways().generator.as_ref(), cfg, &opts)?;
    Ok(canonical::to_string_pretty(&cands)?)
}

/// Ranks the given SQL strings for `question`.
pub fn criticize(question: &str, sqls: &[String], db: &Database, pipeline: &Pipeline) -> Result<String> {
    if sqls.is_empty() {
        bail!("at least one --sql candidate is required");
    }
    let card = pipeline.card_for(db)?;
    let candidates: Vec<SqlCandidate> = sqls
        .iter()
        .map(|s| {
            let mut c = SqlCandidate::new(s.as_str());
            match db.execution_check(s) {
                Ok(out) if out.ok => c.executable = true,
                Ok(out) => c.last_error = out.error,
                Err(e) => c.last_error = Some(e.to_string()),
            }
            c
        })
        .collect();
    let ls = LinkedSchema::full(&card);
    let kb = pipeline.knowledge_base();
    let sel = critic::select_best(
        question,
        &card,
        &ls,
        &candidates,
        &kb,
        pipeline.gateways().critic.as_ref(),
        &pipeline.config().critic,
    );
    Ok(canonical::to_string_pretty(&json!({
        "verdict": sel.verdict,
        "chosen_sql": candidates[sel.verdict.chosen_index].sql,
    }))?)
}

/// Knowledge base at `path`, empty when the file does not exist yet.
pub fn load_kb(path: &Path) -> Result<KnowledgeBase> {
    if !path.exists() {
        return Ok(KnowledgeBase::new());
    }
    KnowledgeBase::load(path).with_context(|| format!("loading {}", path.display()))
}

/// Records from a JSON array or a JSON-lines file.
pub fn read_records(path: &Path) -> Result<Vec<IngestRecord>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if text.trim_start().starts_with('[') {
        return Ok(serde_json::from_str(&text)?);
    }
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("{}:{}", path.display(), i + 1)))
        .collect()
}

pub fn kb_ingest(
    kb_path: &Path,
    records: &[IngestRecord],
    db: &Database,
    pipeline: &Pipeline,
    model_bad_answers: bool,
) -> Result<String> {
    let mut kb = load_kb(kb_path)?;
    let before = kb.len();
    let card = pipeline.card_for(db)?;
    let critic: &dyn Gateway = pipeline.gateways().critic.as_ref();
    let source = if model_bad_answers {
        BadAnswerSource::Model(critic)
    } else {
        BadAnswerSource::Perturbation
    };
    let report = kb.ingest(records, &card, Some(db), source);
    KnowledgeBase::append_to(kb_path, &kb.entries()[before..])?;
    Ok(canonical::to_string_pretty(&report)?)
}

pub fn kb_list(kb_path: &Path) -> Result<String> {
    let kb = load_kb(kb_path)?;
    Ok(canonical::to_string_pretty(&kb.entries())?)
}

pub fn kb_retrieve(kb_path: &Path, question: &str, db: &Database, pipeline: &Pipeline, k: usize) -> Result<String> {
    let kb = load_kb(kb_path)?;
    let card = pipeline.card_for(db)?;
    let hits = critic::retrieve_examples(question, &card, &kb, k, kb.scorer());
    Ok(canonical::to_string_pretty(&hits)?)
}

pub struct EvalArgs<'a> {
    pub dataset: &'a Path,
    /// `None` runs the full matrix.
    pub scenario: Option<&'a str>,
    pub gateway: &'a GatewayConfig,
    pub critic_gateway: Option<&'a GatewayConfig>,
}

/// Loads the dataset, runs one scenario or the whole matrix, and returns
/// the reports.
pub fn evaluate(args: &EvalArgs<'_>, config: nl2sql::PipelineConfig) -> Result<Vec<EvalReport>> {
    let ds = eval::load_spider(args.dataset)?;
    for d in &ds.diagnostics {
        tracing::warn!("{d}");
    }
    let pipeline = gateways::pipeline_for_dataset(config, args.gateway, &ds)?;
    let alt = gateways::alternate_critic(args.critic_gateway, &pipeline, &ds)?;
    match args.scenario {
        None => Ok(eval::ablation_matrix(&ds.items, &ds.databases, &pipeline, alt)?),
        Some(name) => {
            let sc = ablation_scenarios()
                .into_iter()
                .find(|s| s.name.eq_ignore_ascii_case(name))
                .with_context(|| format!("unknown scenario `{name}`"))?;
            let p = match (sc.alternate_critic, alt) {
                (true, Some(gw)) => pipeline.with_gateways(pipeline.gateways().with_critic(gw)),
                _ => pipeline,
            };
            let mut report = eval::run_scenario(sc.name, &ds.items, &ds.databases, &sc.flags, &p)?;
            if sc.name == eval::FULL_SYSTEM {
                report.delta_vs_full = Some(0.0);
            }
            Ok(vec![report])
        }
    }
}

/// Writes `reports.json` and `summary.csv` into `dir`.
pub fn write_reports(dir: &Path, reports: &[EvalReport]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("reports.json"), canonical::to_string_pretty(&reports)?)?;
    std::fs::write(dir.join("summary.csv"), eval::reports_to_csv(reports)?)?;
    Ok(())
}

/// Errors early for gateway kinds a command cannot use.
pub fn require_non_echo(cfg: &GatewayConfig, verb: &str) -> Result<()> {
    if cfg.kind == GatewayKind::GoldEcho {
        bail!("`{verb}` cannot use the gold-echo gateway");
    }
    Ok(())
}
