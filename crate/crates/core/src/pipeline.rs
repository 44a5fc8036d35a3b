//! End-to-end orchestration: mine, link, generate, rank, execute.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::critic::{self, CriticConfig, CriticVerdict, KnowledgeBase};
use crate::gateway::{CompletionRequest, Gateway};
use crate::linking::{self, LinkedSchema, DEFAULT_RECALL_THRESHOLD};
use crate::mining::{self, MiningConfig};
use crate::schema::SchemaCard;
use crate::sql::{Database, ResultTable};
use crate::sqlgen::{self, GenConfig, LoopOptions, PromptStyle, RewriteRule, SqlCandidate};
use crate::{Error, Result};

/// Feature switches. All on by default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationFlags {
    pub use_primary_key: bool,
    pub use_foreign_key: bool,
    pub use_one_to_many: bool,
    pub use_enums: bool,
    pub use_schema_linking: bool,
    pub use_cot: bool,
    pub use_constant_fix: bool,
    pub use_execution_check: bool,
    pub use_critic: bool,
    pub prompt_style: PromptStyle,
}

impl Default for AblationFlags {
    fn default() -> Self {
        Self {
            use_primary_key: true,
            use_foreign_key: true,
            use_one_to_many: true,
            use_enums: true,
            use_schema_linking: true,
            use_cot: true,
            use_constant_fix: true,
            use_execution_check: true,
            use_critic: true,
            prompt_style: PromptStyle::Sqlfuse,
        }
    }
}

impl AblationFlags {
    pub const NAMES: [&'static str; 9] = [
        "use_primary_key",
        "use_foreign_key",
        "use_one_to_many",
        "use_enums",
        "use_schema_linking",
        "use_cot",
        "use_constant_fix",
        "use_execution_check",
        "use_critic",
    ];

    fn slot(&mut self, name: &str) -> Option<&mut bool> {
        Some(match name {
            "use_primary_key" => &mut self.use_primary_key,
            "use_foreign_key" => &mut self.use_foreign_key,
            "use_one_to_many" => &mut self.use_one_to_many,
            "use_enums" => &mut self.use_enums,
            "use_schema_linking" => &mut self.use_schema_linking,
            "use_cot" => &mut self.use_cot,
            "use_constant_fix" => &mut self.use_constant_fix,
            "use_execution_check" => &mut self.use_execution_check,
            "use_critic" => &mut self.use_critic,
            _ => return None,
        })
    }

    /// Sets a boolean flag by name.
    pub fn set(&mut self, name: &str, on: bool) -> Result<()> {
        match self.slot(name) {
            Some(v) => {
                *v = on;
                Ok(())
            }
            None => Err(Error::Config(format!("unknown flag `{name}`"))),
        }
    }

    pub fn get(&self, name: &str) -> Option<bool> {
        let mut copy = *self;
        copy.slot(name).map(|v| *v)
    }

    /// `card` without the mined features that are switched off.
    pub fn apply_to_card(&self, card: &SchemaCard) -> SchemaCard {
        let mut out = card.clone();
        if !self.use_primary_key {
            out.primary_keys.clear();
        }
        if !self.use_foreign_key {
            out.foreign_keys.clear();
        }
        if !self.use_one_to_many {
            out.one_to_many.clear();
        }
        if !self.use_enums {
            out.enums.clear();
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub mining: MiningConfig,
    pub generation: GenConfig,
    pub critic: CriticConfig,
    pub recall_threshold: f64,
    pub rewrites: Vec<RewriteRule>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            mining: MiningConfig::default(),
            generation: GenConfig::default(),
            critic: CriticConfig::default(),
            recall_threshold: DEFAULT_RECALL_THRESHOLD,
            rewrites: Vec::new(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.mining.validate()?;
        self.generation.validate()?;
        if !(self.recall_threshold > 0.0 && self.recall_threshold <= 1.0) {
            return Err(Error::Config("recall_threshold must be in (0, 1]".into()));
        }
        if self.critic.k == 0 {
            return Err(Error::Config("critic k must be at least 1".into()));
        }
        Ok(())
    }
}

/// The model endpoints used by each stage.
#[derive(Clone)]
pub struct Gateways {
    pub linker: Arc<dyn Gateway>,
    pub generator: Arc<dyn Gateway>,
    pub critic: Arc<dyn Gateway>,
}

impl Gateways {
    pub fn single(gw: Arc<dyn Gateway>) -> Self {
        Self {
            linker: Arc::clone(&gw),
            generator: Arc::clone(&gw),
            critic: gw,
        }
    }

    pub fn with_critic(&self, critic: Arc<dyn Gateway>) -> Self {
        Self {
            critic,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryTrace {
    pub question: String,
    pub database_id: String,
    pub flags: AblationFlags,
    pub linked: LinkedSchema,
    #[serde(default)]
    pub warnings: Vec<String>,
    pub prompts: BTreeMap<String, String>,
    pub candidates: Vec<SqlCandidate>,
    pub verdict: CriticVerdict,
    pub chosen_sql: String,
    #[serde(default)]
    pub result_rows: Option<ResultTable>,
    #[serde(default)]
    pub execution_error: Option<String>,
    pub timings: BTreeMap<String, u64>,
}

impl QueryTrace {
    /// Short description of the repairs made across all candidates.
    pub fn repair_summary(&self) -> String {
        let fixes: usize = self
            .candidates
            .iter()
            .flat_map(|c| &c.repairs)
            .filter(|r| r.kind == sqlgen::RepairKind::ConstantFix && r.before != r.after)
            .count();
        let regen: usize = self
            .candidates
            .iter()
            .flat_map(|c| &c.repairs)
            .filter(|r| r.kind == sqlgen::RepairKind::Regenerated)
            .count();
        format!(
            "{} candidates, {fixes} constant fixes, {regen} regenerations, verdict {:?} #{}",
            self.candidates.len(),
            self.verdict.method,
            self.verdict.chosen_index + 1
        )
    }
}

/// Databases by id.
#[derive(Debug, Clone, Default)]
pub struct Catalog {
    databases: BTreeMap<String, Database>,
}

impl Catalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, db: Database) {
        self.databases.insert(db.id().to_string(), db);
    }

    pub fn get(&self, id: &str) -> Result<&Database> {
        self.databases
            .get(id)
            .ok_or_else(|| Error::NotFound(format!("database `{id}`")))
    }

    pub fn ids(&self) -> Vec<String> {
        self.databases.keys().cloned().collect()
    }

    pub fn databases(&self) -> impl Iterator<Item = &Database> {
        self.databases.values()
    }

    /// Every `*.sqlite` / `*.db` file under `dir`, at most two levels deep
    /// (which covers both flat folders and `database/<id>/<id>.sqlite`).
    pub fn scan(dir: &Path) -> Result<Self> {
        let mut catalog = Self::new();
        let mut stack = vec![(dir.to_path_buf(), 0)];
        while let Some((d, depth)) = stack.pop() {
            let mut entries: Vec<PathBuf> = std::fs::read_dir(&d)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .collect();
            entries.sort();
            for p in entries {
                if p.is_dir() {
                    if depth < 2 {
                        stack.push((p, depth + 1));
                    }
                } else if matches!(
                    p.extension().and_then(|e| e.to_str()),
                    Some("sqlite" | "db" | "sqlite3")
                ) {
                    catalog.insert(Database::open(&p)?);
                }
            }
        }
        Ok(catalog)
    }
}

impl FromIterator<Database> for Catalog {
    fn from_iter<I: IntoIterator<Item = Database>>(iter: I) -> Self {
        let mut c = Catalog::new();
        for db in iter {
            c.insert(db);
        }
        c
    }
}

struct CachedCard {
    hash: String,
    card: Arc<SchemaCard>,
}

/// Pipeline with its configuration, models, knowledge base and card cache.
pub struct Pipeline {
    config: PipelineConfig,
    gateways: Gateways,
    kb: RwLock<KnowledgeBase>,
    cards: Mutex<HashMap<PathBuf, CachedCard>>,
}

fn millis(since: Instant) -> u64 {
    since.elapsed().as_millis() as u64
}

impl Pipeline {
    pub fn new(config: PipelineConfig, gateways: Gateways) -> Self {
        Self {
            config,
            gateways,
            kb: RwLock::new(KnowledgeBase::new()),
            cards: Mutex::new(HashMap::new()),
        }
    }

    pub fn with_knowledge_base(self, kb: KnowledgeBase) -> Self {
        *self.kb.write().expect("kb lock") = kb;
        self
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn gateways(&self) -> &Gateways {
        &self.gateways
    }

    pub fn knowledge_base(&self) -> std::sync::RwLockReadGuard<'_, KnowledgeBase> {
        self.kb.read().expect("kb lock")
    }

    pub fn knowledge_base_mut(&self) -> std::sync::RwLockWriteGuard<'_, KnowledgeBase> {
        self.kb.write().expect("kb lock")
    }

    /// Same configuration and cache, different models.
    pub fn with_gateways(&self, gateways: Gateways) -> Self {
        let cards = self
            .cards
            .lock()
            .expect("card cache")
            .iter()
            .map(|(k, v)| {
                (
                    k.clone(),
                    CachedCard {
                        hash: v.hash.clone(),
                        card: Arc::clone(&v.card),
                    },
                )
            })
            .collect();
        Self {
            config: self.config.clone(),
            gateways,
            kb: RwLock::new(self.knowledge_base().clone()),
            cards: Mutex::new(cards),
        }
    }

    /// The mined card of `db`, re-mined when the file content changed.
    pub fn card_for(&self, db: &Database) -> Result<Arc<SchemaCard>> {
        let hash = db.content_hash()?;
        if let Some(c) = self.cards.lock().expect("card cache").get(db.path()) {
            if c.hash == hash {
                return Ok(Arc::clone(&c.card));
            }
        }
        let card = Arc::new(mining::mine(db, &self.config.mining)?);
        self.cards.lock().expect("card cache").insert(
            db.path().to_path_buf(),
            CachedCard {
                hash,
                card: Arc::clone(&card),
            },
        );
        Ok(card)
    }

    /// Looks `database_id` up in `catalog` and runs the question on it.
    pub fn run_query_in(
        &self,
        catalog: &Catalog,
        question: &str,
        database_id: &str,
        flags: &AblationFlags,
    ) -> Result<QueryTrace> {
        let db = catalog.get(database_id)?;
        self.run_query(question, db, flags)
    }

    /// Runs all stages. Model failures are absorbed into the trace; only
    /// database and configuration problems are errors.
    pub fn run_query(&self, question: &str, db: &Database, flags: &AblationFlags) -> Result<QueryTrace> {
        let mut timings = BTreeMap::new();
        let mut prompts = BTreeMap::new();
        let mut warnings = Vec::new();

        let t = Instant::now();
        let full_card = self.card_for(db)?;
        let card = flags.apply_to_card(&full_card);
        timings.insert("mining".to_string(), millis(t));

        let t = Instant::now();
        let mut linked = if flags.use_schema_linking {
            let prompt = linking::build_linking_prompt(question, &card);
            let reply = self.gateways.linker.complete(&CompletionRequest::new(prompt.clone()));
            prompts.insert("linking".to_string(), prompt);
            let parsed = reply
                .map_err(Error::Generation)
                .and_then(|text| linking::parse_linking_response(&text, &card));
            match parsed {
                Ok(p) => {
                    warnings.extend(p.warnings);
                    let scorer = linking::default_scorer(&card);
                    linking::calibrate(question, &p.linked, &card, &scorer, self.config.recall_threshold)
                }
                Err(e) => {
                    warnings.push(format!("linking fell back to the full schema: {e}"));
                    LinkedSchema::full(&card)
                }
            }
        } else {
            LinkedSchema::full(&card)
        };
        if !flags.use_cot {
            linked.rationale.clear();
        }
        timings.insert("linking".to_string(), millis(t));

        let t = Instant::now();
        let mut gen_cfg = self.config.generation.clone();
        gen_cfg.style = flags.prompt_style;
        let prompt = sqlgen::render_prompt(gen_cfg.style, question, &linked, &card);
        prompts.insert("generation".to_string(), prompt.clone());
        let opts = LoopOptions {
            constant_fix: flags.use_constant_fix,
            execution_check: flags.use_execution_check,
            rewrites: self.config.rewrites.clone(),
        };
        let candidates = match sqlgen::self_correct_loop_with(
            &prompt,
            &card,
            db,
            self.gateways.generator.as_ref(),
            &gen_cfg,
            &opts,
        ) {
            Ok(c) => c,
            Err(Error::Generation(e)) => {
                let err = Error::Generation(e).to_string();
                warnings.push(err.clone());
                vec![SqlCandidate {
                    last_error: Some(err),
                    ..SqlCandidate::new("")
                }]
            }
            Err(e) => return Err(e),
        };
        timings.insert("generation".to_string(), millis(t));

        let t = Instant::now();
        let verdict = if flags.use_critic {
            let kb = self.knowledge_base();
            let sel = critic::select_best(
                question,
                &card,
                &linked,
                &candidates,
                &kb,
                self.gateways.critic.as_ref(),
                &self.config.critic,
            );
            prompts.insert("critic".to_string(), sel.prompt);
            sel.verdict
        } else {
            critic::bypass(&candidates)
        };
        timings.insert("critic".to_string(), millis(t));

        let chosen_sql = candidates[verdict.chosen_index].sql.clone();
        let t = Instant::now();
        let (result_rows, execution_error) = if chosen_sql.is_empty() {
            (None, Some("no SQL was generated".to_string()))
        } else {
            match db.execution_check(&chosen_sql) {
                Ok(out) if out.ok => (out.rows, None),
                Ok(out) => (None, out.error),
                Err(e) => (None, Some(e.to_string())),
            }
        };
        timings.insert("execution".to_string(), millis(t));

        Ok(QueryTrace {
            question: question.to_string(),
            database_id: db.id().to_string(),
            flags: *flags,
            linked,
            warnings,
            prompts,
            candidates,
            verdict,
            chosen_sql,
            result_rows,
            execution_error,
            timings,
        })
    }
}
