//! Candidate ranking: question skeletons, the hindsight knowledge base,
//! exemplar retrieval and the critic prompt.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write as _};
use std::ops::ControlFlow;
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sqlparser::ast::{
    visit_expressions_mut, Expr, Ident, JoinConstraint, JoinOperator, ObjectName, ObjectNamePart,
    SelectItem, SetExpr,
};

use crate::gateway::{CompletionRequest, Gateway};
use crate::linking::LinkedSchema;
use crate::schema::SchemaCard;
use crate::similarity::{SimilarityScorer, TfIdfScorer};
use crate::sql::{parse_query, Database};
use crate::sqlgen::SqlCandidate;
use crate::{canonical, Error, Result};

const PROMPT_TEMPLATE: &str = include_str!("../resources/critic_prompt.txt");

pub const SCHEMA_PLACEHOLDER: &str = "<SCHEMA>";
pub const VALUE_PLACEHOLDER: &str = "<VAL>";
pub const DEFAULT_K: usize = 3;

const KB_FORMAT: &str = "nl2sql-kb";
const KB_VERSION: u32 = 1;

/// Hints appended to every critic prompt unless overridden.
pub fn default_hints() -> Vec<String> {
    [
        "Check that GROUP BY uses the column the question groups by.",
        "Check that every table the question needs is joined on its key.",
        "Check that enum columns are compared with stored values, not labels.",
        "Avoid DISTINCT unless the question asks for unique values.",
        "Check that the aggregate function matches the question.",
    ]
    .into_iter()
    .map(String::from)
    .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BadAnswerOrigin {
    Model,
    Perturbation,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeEntry {
    pub id: String,
    pub question: String,
    pub skeleton: String,
    pub schema_summary: String,
    pub good_answer: String,
    #[serde(default)]
    pub bad_answer: Option<String>,
    pub bad_answer_origin: BadAnswerOrigin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictMethod {
    Parsed,
    FallbackFirstExecutable,
    FallbackFirst,
    /// The critic stage was switched off.
    Bypassed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriticVerdict {
    pub chosen_index: usize,
    pub method: VerdictMethod,
    pub raw_response: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Token {
    Word(String),
    Sep(String),
    Placeholder(&'static str),
    Other(char),
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

fn tokenize(text: &str) -> Vec<Token> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let rest: String = chars[i..chars.len().min(i + 8)].iter().collect();
        if let Some(p) = [SCHEMA_PLACEHOLDER, VALUE_PLACEHOLDER]
            .into_iter()
            .find(|p| rest.starts_with(p))
        {
            out.push(Token::Placeholder(p));
            i += p.chars().count();
            continue;
        }
        let c = chars[i];
        if c == '\'' || c == '"' {
            let opens = i == 0 || !is_word_char(chars[i - 1]);
            let close = (i + 1..chars.len()).find(|&j| {
                chars[j] == c && (j + 1 == chars.len() || !is_word_char(chars[j + 1]))
            });
            if let (true, Some(j)) = (opens, close) {
                out.push(Token::Placeholder(VALUE_PLACEHOLDER));
                i = j + 1;
                continue;
            }
        }
        if is_word_char(c) {
            let start = i;
            while i < chars.len() && is_word_char(chars[i]) {
                i += 1;
            }
            // Decimal numbers stay one token.
            if i + 1 < chars.len()
                && chars[i] == '.'
                && chars[i + 1].is_ascii_digit()
                && chars[start..i].iter().all(|c| c.is_ascii_digit())
            {
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            out.push(Token::Word(chars[start..i].iter().collect()));
            continue;
        }
        if c.is_whitespace() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_whitespace() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token::Sep(chars[start..i].iter().collect()));
            continue;
        }
        out.push(Token::Other(c));
        i += 1;
    }
    out
}

fn is_number(word: &str) -> bool {
    !word.is_empty() && word.parse::<f64>().is_ok() && word.chars().all(|c| c.is_ascii_digit() || c == '.')
}

fn word_matches(token: &str, word: &str) -> bool {
    let t = token.to_lowercase();
    t == word || t.strip_suffix('s') == Some(word) || t.strip_suffix("es") == Some(word)
}

fn split_words(text: &str) -> Vec<String> {
    text.split(|c: char| !is_word_char(c))
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Phrases to mask, longest first; ties keep schema terms ahead of labels.
fn mask_phrases(card: &SchemaCard) -> Vec<(Vec<String>, &'static str)> {
    let mut phrases: Vec<(Vec<String>, &'static str)> = Vec::new();
    let mut push = |words: Vec<String>, ph: &'static str| {
        if !words.is_empty() && !phrases.iter().any(|(w, _)| *w == words) {
            phrases.push((words, ph));
        }
    };
    for t in &card.tables {
        push(split_words(&t.name), SCHEMA_PLACEHOLDER);
        for c in &t.columns {
            push(split_words(&c.name), SCHEMA_PLACEHOLDER);
        }
    }
    for entries in card.enums.values() {
        for e in entries {
            push(split_words(&e.label), VALUE_PLACEHOLDER);
        }
    }
    phrases.sort_by(|a, b| b.0.len().cmp(&a.0.len()));
    phrases
}

/// Indexes of the word tokens of a phrase match starting at `start`, if any.
fn match_at(tokens: &[Token], start: usize, phrase: &[String]) -> Option<usize> {
    let mut i = start;
    for (n, word) in phrase.iter().enumerate() {
        if n > 0 {
            match tokens.get(i) {
                Some(Token::Sep(_)) => i += 1,
                _ => return None,
            }
        }
        match tokens.get(i) {
            Some(Token::Word(w)) if word_matches(w, word) => i += 1,
            _ => return None,
        }
    }
    Some(i)
}

/// Replaces schema terms, enum labels, quoted strings and numbers in
/// `question` with placeholders and normalizes whitespace.
pub fn mask_question_skeleton(question: &str, card: &SchemaCard) -> String {
    let phrases = mask_phrases(card);
    let tokens = tokenize(question);
    let mut out = String::new();
    let mut i = 0;
    while i < tokens.len() {
        match &tokens[i] {
            Token::Word(w) => {
                if is_number(w) {
                    out.push_str(VALUE_PLACEHOLDER);
                    i += 1;
                    continue;
                }
                let hit = phrases
                    .iter()
                    .find_map(|(p, ph)| match_at(&tokens, i, p).map(|end| (end, *ph)));
                match hit {
                    Some((end, ph)) => {
                        out.push_str(ph);
                        i = end;
                    }
                    None => {
                        out.push_str(w);
                        i += 1;
                    }
                }
            }
            Token::Sep(s) => {
                out.push_str(if s.contains('_') { "_" } else { " " });
                i += 1;
            }
            Token::Placeholder(p) => {
                out.push_str(p);
                i += 1;
            }
            Token::Other(c) => {
                out.push(*c);
                i += 1;
            }
        }
    }
    out.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// One line per table listing its columns.
pub fn schema_summary(card: &SchemaCard) -> String {
    card.tables
        .iter()
        .map(|t| {
            let cols: Vec<&str> = t.columns.iter().map(|c| c.name.as_str()).collect();
            format!("{}({})", t.name, cols.join(", "))
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn swap_projections(sql: &str) -> Option<String> {
    let mut q = parse_query(sql).ok()?;
    let SetExpr::Select(select) = q.body.as_mut() else { return None };
    if select.projection.len() < 2 {
        return None;
    }
    if select.projection[0].to_string() == select.projection[1].to_string() {
        return None;
    }
    select.projection.swap(0, 1);
    Some(q.to_string())
}

fn drop_join_predicate(sql: &str) -> Option<String> {
    let mut q = parse_query(sql).ok()?;
    let SetExpr::Select(select) = q.body.as_mut() else { return None };
    for twj in &mut select.from {
        for join in &mut twj.joins {
            use JoinOperator::*;
            let c = match &mut join.join_operator {
                Join(c) | Inner(c) | Left(c) | LeftOuter(c) | Right(c) | RightOuter(c)
                | FullOuter(c) => c,
                _ => continue,
            };
            if matches!(c, JoinConstraint::On(_) | JoinConstraint::Using(_)) {
                *c = JoinConstraint::None;
                return Some(q.to_string());
            }
        }
    }
    None
}

fn replace_aggregate(sql: &str) -> Option<String> {
    let mut q = parse_query(sql).ok()?;
    let SetExpr::Select(select) = q.body.as_mut() else { return None };
    let mut changed = false;
    for item in &mut select.projection {
        let expr = match item {
            SelectItem::UnnamedExpr(e) | SelectItem::ExprWithAlias { expr: e, .. } => e,
            _ => continue,
        };
        let _ = visit_expressions_mut(expr, |e| {
            if let Expr::Function(f) = e {
                let name = f.name.to_string().to_ascii_uppercase();
                let swap = match name.as_str() {
                    "MAX" => "MIN",
                    "MIN" => "MAX",
                    "SUM" => "AVG",
                    "AVG" => "SUM",
                    _ => return ControlFlow::Continue(()),
                };
                f.name = ObjectName(vec![ObjectNamePart::Identifier(Ident::new(swap))]);
                changed = true;
                return ControlFlow::Break(());
            }
            ControlFlow::Continue(())
        });
        if changed {
            return Some(q.to_string());
        }
    }
    None
}

/// A deliberately wrong variant of `good`: the first of swapping the first
/// two output columns, dropping a join predicate, or replacing an aggregate
/// that applies. With `db`, a rule only counts when its result differs.
pub fn perturb(good: &str, db: Option<&Database>) -> Option<String> {
    let rules: [fn(&str) -> Option<String>; 3] = [swap_projections, drop_join_predicate, replace_aggregate];
    let gold_rows = db.and_then(|d| d.execution_check(good).ok()).and_then(|o| o.rows);
    for rule in rules {
        let Some(bad) = rule(good) else { continue };
        if bad == good {
            continue;
        }
        if let (Some(d), Some(gold)) = (db, &gold_rows) {
            match d.execution_check(&bad) {
                Ok(out) => {
                    if let Some(rows) = out.rows {
                        if crate::eval::results_equal(gold, &rows, true) {
                            continue;
                        }
                    }
                }
                Err(_) => continue,
            }
        }
        return Some(bad);
    }
    None
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestRecord {
    pub question: String,
    #[serde(default)]
    pub schema_summary: String,
    pub good_answer: String,
}

/// Where bad answers come from during ingestion.
pub enum BadAnswerSource<'a> {
    Perturbation,
    Model(&'a dyn Gateway),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub added: usize,
    pub rejected: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct KbHeader {
    format: String,
    version: u32,
}

/// In-memory knowledge base with a TF-IDF index over skeletons.
#[derive(Debug, Clone, Default)]
pub struct KnowledgeBase {
    entries: Vec<KnowledgeEntry>,
    scorer: TfIdfScorer,
}

impl KnowledgeBase {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: Vec<KnowledgeEntry>) -> Self {
        let mut kb = Self {
            entries,
            scorer: TfIdfScorer::default(),
        };
        kb.reindex();
        kb
    }

    fn reindex(&mut self) {
        self.scorer = TfIdfScorer::fit(self.entries.iter().map(|e| e.skeleton.as_str()));
    }

    pub fn entries(&self) -> &[KnowledgeEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Scorer fitted on the stored skeletons.
    pub fn scorer(&self) -> &TfIdfScorer {
        &self.scorer
    }

    fn next_id(&self) -> String {
        format!("kb-{:06}", self.entries.len() + 1)
    }

    /// Validates and adds `records`. Each good answer must parse and, when
    /// `db` is given, execute.
    pub fn ingest(
        &mut self,
        records: &[IngestRecord],
        card: &SchemaCard,
        db: Option<&Database>,
        source: BadAnswerSource<'_>,
    ) -> IngestReport {
        let mut report = IngestReport::default();
        for rec in records {
            match self.prepare(rec, card, db, &source) {
                Ok(entry) => {
                    self.entries.push(entry);
                    report.added += 1;
                }
                Err(reason) => report.rejected.push(format!("{}: {reason}", rec.question)),
            }
        }
        self.reindex();
        report
    }

    fn prepare(
        &self,
        rec: &IngestRecord,
        card: &SchemaCard,
        db: Option<&Database>,
        source: &BadAnswerSource<'_>,
    ) -> Result<KnowledgeEntry, String> {
        if rec.question.trim().is_empty() {
            return Err("empty question".into());
        }
        parse_query(&rec.good_answer).map_err(|e| e.to_string())?;
        if let Some(d) = db {
            let out = d.execution_check(&rec.good_answer).map_err(|e| e.to_string())?;
            if !out.ok {
                return Err(format!("good answer fails: {}", out.error.unwrap_or_default()));
            }
        }
        let (bad_answer, origin) = match source {
            BadAnswerSource::Perturbation => match perturb(&rec.good_answer, db) {
                Some(bad) => (Some(bad), BadAnswerOrigin::Perturbation),
                None => (None, BadAnswerOrigin::None),
            },
            BadAnswerSource::Model(gw) => {
                let prompt = format!(
                    "### Hindsight\nWrite a plausible but incorrect SQL query for the question.\n\
                     Schema:\n{}\nQuestion: {}\nCorrect SQL: {}\n",
                    rec.schema_summary, rec.question, rec.good_answer
                );
                match gw.complete(&CompletionRequest::new(prompt)) {
                    Ok(text) => {
                        let bad = crate::sql::first_statement(&text);
                        if bad.is_empty() || bad == rec.good_answer {
                            (None, BadAnswerOrigin::None)
                        } else {
                            (Some(bad), BadAnswerOrigin::Model)
                        }
                    }
                    Err(_) => (None, BadAnswerOrigin::None),
                }
            }
        };
        let summary = if rec.schema_summary.is_empty() {
            schema_summary(card)
        } else {
            rec.schema_summary.clone()
        };
        Ok(KnowledgeEntry {
            id: format!("kb-{:06}", self.entries.len() + 1),
            question: rec.question.clone(),
            skeleton: mask_question_skeleton(&rec.question, card),
            schema_summary: summary,
            good_answer: rec.good_answer.clone(),
            bad_answer,
            bad_answer_origin: origin,
        })
    }

    /// Adds a fully formed entry, assigning the next id.
    pub fn push(&mut self, mut entry: KnowledgeEntry) {
        entry.id = self.next_id();
        self.entries.push(entry);
        self.reindex();
    }

    /// Reads a knowledge-base file: a header record then one entry per line.
    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let mut lines = BufReader::new(file).lines();
        let header: KbHeader = match lines.next() {
            Some(line) => serde_json::from_str(&line?)?,
            None => return Err(Error::KnowledgeBase("missing header record".into())),
        };
        if header.format != KB_FORMAT || header.version != KB_VERSION {
            return Err(Error::KnowledgeBase(format!(
                "unsupported file format {} v{}",
                header.format, header.version
            )));
        }
        let mut entries = Vec::new();
        for (n, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: KnowledgeEntry = serde_json::from_str(&line)
                .map_err(|e| Error::KnowledgeBase(format!("line {}: {e}", n + 2)))?;
            entries.push(entry);
        }
        Ok(Self::from_entries(entries))
    }

    /// Appends `entries` to the file at `path`, writing the header first when
    /// the file is new.
    pub fn append_to(path: &Path, entries: &[KnowledgeEntry]) -> Result<()> {
        let fresh = !path.exists() || std::fs::metadata(path)?.len() == 0;
        let mut file = OpenOptions::new().create(true).append(true).open(path)?;
        if fresh {
            let header = KbHeader {
                format: KB_FORMAT.into(),
                version: KB_VERSION,
            };
            writeln!(file, "{}", canonical::to_string(&header)?)?;
        }
        for e in entries {
            writeln!(file, "{}", canonical::to_string(e)?)?;
        }
        Ok(())
    }

    /// Writes the whole knowledge base to `path`, replacing it.
    pub fn save(&self, path: &Path) -> Result<()> {
        if path.exists() {
            std::fs::remove_file(path)?;
        }
        Self::append_to(path, &self.entries)
    }
}

fn rank(a: &(f64, &KnowledgeEntry), b: &(f64, &KnowledgeEntry)) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.id.cmp(&b.1.id))
}

/// The `k` entries whose skeletons are most similar to the masked question,
/// best first, ties by ascending id.
pub fn retrieve_examples(
    question: &str,
    card: &SchemaCard,
    kb: &KnowledgeBase,
    k: usize,
    scorer: &dyn SimilarityScorer,
) -> Vec<KnowledgeEntry> {
    if k == 0 || kb.is_empty() {
        return Vec::new();
    }
    let skeleton = mask_question_skeleton(question, card);
    let mut scored: Vec<(f64, &KnowledgeEntry)> = kb
        .entries()
        .iter()
        .map(|e| (scorer.score(&skeleton, &e.skeleton), e))
        .collect();
    if k < scored.len() {
        scored.select_nth_unstable_by(k - 1, rank);
        scored.truncate(k);
    }
    scored.sort_by(rank);
    scored.into_iter().map(|(_, e)| e.clone()).collect()
}

fn render_linking(ls: &LinkedSchema) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Tables: {}", ls.tables.join(", "));
    let cols: Vec<String> = ls.columns.iter().map(ToString::to_string).collect();
    let _ = writeln!(out, "Columns: {}", cols.join(", "));
    if !ls.join_relations.is_empty() {
        let joins: Vec<String> = ls
            .join_relations
            .iter()
            .map(|j| format!("{} = {}", j.left, j.right))
            .collect();
        let _ = writeln!(out, "Joins: {}", joins.join(", "));
    }
    if !ls.condition_values.is_empty() {
        let vals: Vec<String> = ls
            .condition_values
            .iter()
            .map(|v| format!("{} = {}", v.column, v.literal))
            .collect();
        let _ = writeln!(out, "Values: {}", vals.join(", "));
    }
    out
}

/// Renders the ranking prompt.
pub fn build_critic_prompt(
    question: &str,
    ls: &LinkedSchema,
    candidates: &[SqlCandidate],
    examples: &[KnowledgeEntry],
    hints: &[String],
) -> String {
    let mut exemplars = String::new();
    for e in examples {
        let _ = writeln!(exemplars, "Example question: {}", e.question);
        let _ = writeln!(exemplars, "A good answer is: {}", e.good_answer);
        if let Some(bad) = &e.bad_answer {
            let _ = writeln!(exemplars, "A bad answer is: {bad}");
        }
        exemplars.push('\n');
    }
    let mut hint_text = String::new();
    if !hints.is_empty() {
        hint_text.push_str("Common mistakes to check:\n");
        for h in hints {
            let _ = writeln!(hint_text, "- {h}");
        }
    }
    let mut cands = String::new();
    for (i, c) in candidates.iter().enumerate() {
        let _ = writeln!(cands, "{}. {}", i + 1, c.sql.replace('\n', " "));
    }
    PROMPT_TEMPLATE
        .replace("{exemplars}", &exemplars)
        .replace("{hints}", &hint_text)
        .replace("{linking}", render_linking(ls).trim_end())
        .replace("{question}", question.trim())
        .replace("{candidates}", cands.trim_end())
}

/// The 0-based index named by an `Answer: <n>` line, if it is in range.
pub fn parse_answer(text: &str, n_candidates: usize) -> Option<usize> {
    let re = Regex::new(r"(?i)answer\s*[:：]\s*\**\s*(\d+)").expect("static regex");
    let n: usize = re.captures(text)?.get(1)?.as_str().parse().ok()?;
    (1..=n_candidates).contains(&n).then(|| n - 1)
}

fn fallback(candidates: &[SqlCandidate], raw: String) -> CriticVerdict {
    match candidates.iter().position(|c| c.executable) {
        Some(i) => CriticVerdict {
            chosen_index: i,
            method: VerdictMethod::FallbackFirstExecutable,
            raw_response: raw,
        },
        None => CriticVerdict {
            chosen_index: 0,
            method: VerdictMethod::FallbackFirst,
            raw_response: raw,
        },
    }
}

/// Verdict used when the critic stage is off: the first executable
/// candidate, else the first.
pub fn bypass(candidates: &[SqlCandidate]) -> CriticVerdict {
    CriticVerdict {
        chosen_index: candidates.iter().position(|c| c.executable).unwrap_or(0),
        method: VerdictMethod::Bypassed,
        raw_response: String::new(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CriticConfig {
    pub k: usize,
    pub hints: Vec<String>,
}

impl Default for CriticConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            hints: default_hints(),
        }
    }
}

/// Output of [`select_best`]: the verdict and the prompt that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub verdict: CriticVerdict,
    pub prompt: String,
}

/// Asks the critic model to pick one of `candidates`. Never fails: gateway
/// errors and unparseable replies fall back to the first executable
/// candidate.
pub fn select_best(
    question: &str,
    card: &SchemaCard,
    ls: &LinkedSchema,
    candidates: &[SqlCandidate],
    kb: &KnowledgeBase,
    gateway: &dyn Gateway,
    cfg: &CriticConfig,
) -> Selection {
    let examples = retrieve_examples(question, card, kb, cfg.k, kb.scorer());
    let prompt = build_critic_prompt(question, ls, candidates, &examples, &cfg.hints);
    let verdict = if candidates.is_empty() {
        CriticVerdict {
            chosen_index: 0,
            method: VerdictMethod::FallbackFirst,
            raw_response: String::new(),
        }
    } else {
        match gateway.complete(&CompletionRequest::new(prompt.clone())) {
            Ok(text) => match parse_answer(&text, candidates.len()) {
                Some(i) => CriticVerdict {
                    chosen_index: i,
                    method: VerdictMethod::Parsed,
                    raw_response: text,
                },
                None => fallback(candidates, text),
            },
            Err(e) => fallback(candidates, format!("error: {e}")),
        }
    };
    Selection { verdict, prompt }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::gateway::{ScriptedGateway, ScriptedRule};

    #[test]
    fn masks_schema_terms_and_values() {
        let card = fixtures::demo_card();
        assert_eq!(
            mask_question_skeleton("How many singers are older than 30?", &card),
            "How many <SCHEMA> are older than <VAL>?"
        );
        assert_eq!(
            mask_question_skeleton("Orders   with status 'init' for customer_id 2", &card),
            "<SCHEMA> with <SCHEMA> <VAL> for <SCHEMA> <VAL>"
        );
        assert_eq!(
            mask_question_skeleton("What is the singer's stage name?", &card),
            "What is the <SCHEMA>'s stage <SCHEMA>?"
        );
    }

    #[test]
    fn masking_is_idempotent_and_stable() {
        let card = fixtures::demo_card();
        let once = mask_question_skeleton("List every  concert of singer 'Ann' in 2014.", &card);
        assert_eq!(mask_question_skeleton(&once, &card), once);
        assert_eq!(
            mask_question_skeleton(" Which  one is  better? ", &card),
            "Which one is better?"
        );
    }

    #[test]
    fn perturbation_rules() {
        assert_eq!(
            perturb("SELECT name, age FROM singer", None).unwrap(),
            "SELECT age, name FROM singer"
        );
        assert_eq!(
            perturb("SELECT T1.name FROM singer AS T1 JOIN concert AS T2 ON T1.singer_id = T2.singer_id", None).unwrap(),
            "SELECT T1.name FROM singer AS T1 JOIN concert AS T2"
        );
        assert_eq!(perturb("SELECT max(age) FROM singer", None).unwrap(), "SELECT MIN(age) FROM singer");
        assert!(perturb("SELECT count(*) FROM singer", None).is_none());
    }

    #[test]
    fn ingest_gate() {
        let dir = tempfile::tempdir().unwrap();
        let db = fixtures::demo_db(dir.path()).unwrap();
        let card = fixtures::demo_card();
        let rec = |q: &str, sql: &str| IngestRecord {
            question: q.into(),
            schema_summary: String::new(),
            good_answer: sql.into(),
        };
        let mut kb = KnowledgeBase::new();
        let report = kb.ingest(
            &[
                rec("Names and ages of singers", "SELECT name, age FROM singer"),
                rec("Oldest singer age", "SELECT max(age) FROM singer"),
                rec("Broken", "SELEC FROM"),
                rec("Names of singers with concerts", "SELECT T1.name FROM singer AS T1 JOIN concert AS T2 ON T1.singer_id = T2.singer_id"),
            ],
            &card,
            Some(&db),
            BadAnswerSource::Perturbation,
        );
        assert_eq!(report.added, 3);
        assert_eq!(report.rejected.len(), 1);
        for e in kb.entries() {
            assert_eq!(e.bad_answer_origin, BadAnswerOrigin::Perturbation);
            assert_ne!(e.bad_answer.as_deref(), Some(e.good_answer.as_str()));
        }
        assert_eq!(kb.entries()[2].id, "kb-000003");
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("kb.jsonl");
        let card = fixtures::demo_card();
        let mut kb = KnowledgeBase::new();
        kb.ingest(
            &[IngestRecord {
                question: "Ages of singers".into(),
                schema_summary: String::new(),
                good_answer: "SELECT age, name FROM singer".into(),
            }],
            &card,
            None,
            BadAnswerSource::Perturbation,
        );
        kb.save(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("{\"format\":\"nl2sql-kb\",\"version\":1}\n"));
        let loaded = KnowledgeBase::load(&path).unwrap();
        assert_eq!(loaded.entries(), kb.entries());
    }

    fn entry(id: &str, skeleton: &str) -> KnowledgeEntry {
        KnowledgeEntry {
            id: id.into(),
            question: skeleton.into(),
            skeleton: skeleton.into(),
            schema_summary: String::new(),
            good_answer: "SELECT 1".into(),
            bad_answer: None,
            bad_answer_origin: BadAnswerOrigin::None,
        }
    }

    #[test]
    fn retrieval_order() {
        let card = fixtures::demo_card();
        let kb = KnowledgeBase::from_entries(vec![
            entry("a", "How many <SCHEMA> are there?"),
            entry("b", "List all <SCHEMA>."),
            entry("c", "How many <SCHEMA> are older than <VAL>?"),
        ]);
        let scorer = TfIdfScorer::unfitted();
        let got = retrieve_examples("How many singers are older than 30?", &card, &kb, 2, &scorer);
        assert_eq!(got[0].id, "c");
        assert_eq!(scorer.score("How many <SCHEMA> are older than <VAL>?", &got[0].skeleton), 1.0);
        assert_eq!(got.len(), 2);
        assert_eq!(retrieve_examples("x", &card, &kb, 5, &scorer).len(), 3);
        assert!(retrieve_examples("x", &card, &KnowledgeBase::new(), 3, &scorer).is_empty());
    }

    fn cands(flags: &[bool]) -> Vec<SqlCandidate> {
        flags
            .iter()
            .enumerate()
            .map(|(i, &ok)| SqlCandidate {
                executable: ok,
                ..SqlCandidate::new(format!("SELECT {i}"))
            })
            .collect()
    }

    #[test]
    fn prompt_sections() {
        let card = fixtures::demo_card();
        let ls = LinkedSchema::full(&card);
        let ex = vec![
            KnowledgeEntry { bad_answer: Some("SELECT 2".into()), ..entry("a", "x") },
            KnowledgeEntry { bad_answer: Some("SELECT 3".into()), ..entry("b", "y") },
        ];
        let p = build_critic_prompt("q?", &ls, &cands(&[true, true, true]), &ex, &default_hints());
        assert!(p.starts_with("### SQL critic\n"));
        assert_eq!(p.matches("A good answer is").count(), 2);
        assert_eq!(p.matches("A bad answer is").count(), 2);
        assert!(p.contains("\n1. SELECT 0\n2. SELECT 1\n3. SELECT 2"));
        assert!(p.contains("\nQuestion: q?\n"));
        let bare = build_critic_prompt("q?", &ls, &cands(&[true]), &[], &[]);
        assert!(!bare.contains("good answer"));
        assert_eq!(bare, build_critic_prompt("q?", &ls, &cands(&[true]), &[], &[]));
    }

    #[test]
    fn verdicts() {
        let card = fixtures::demo_card();
        let ls = LinkedSchema::full(&card);
        let kb = KnowledgeBase::new();
        let cfg = CriticConfig::default();

        let gw = ScriptedGateway::new(vec![ScriptedRule::contains("###", "Answer: 2")]);
        let v = select_best("q", &card, &ls, &cands(&[true, true, true]), &kb, &gw, &cfg).verdict;
        assert_eq!((v.chosen_index, v.method), (1, VerdictMethod::Parsed));

        let gw = ScriptedGateway::new(vec![ScriptedRule::contains("###", "They all look fine.")]);
        let v = select_best("q", &card, &ls, &cands(&[false, true, true]), &kb, &gw, &cfg).verdict;
        assert_eq!((v.chosen_index, v.method), (1, VerdictMethod::FallbackFirstExecutable));

        let v = select_best("q", &card, &ls, &cands(&[true]), &kb, &gw, &cfg).verdict;
        assert_eq!(v.chosen_index, 0);

        let down = ScriptedGateway::new(vec![]);
        let v = select_best("q", &card, &ls, &cands(&[false, false]), &kb, &down, &cfg).verdict;
        assert_eq!((v.chosen_index, v.method), (0, VerdictMethod::FallbackFirst));
        assert!(v.raw_response.starts_with("error:"));
    }

    #[test]
    fn answer_parsing() {
        assert_eq!(parse_answer("Answer: 3", 3), Some(2));
        assert_eq!(parse_answer("answer:  **1**", 3), Some(0));
        assert_eq!(parse_answer("Answer: 4", 3), None);
        assert_eq!(parse_answer("Answer: 0", 3), None);
        assert_eq!(parse_answer("the second", 3), None);
    }
}
