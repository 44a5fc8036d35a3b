//! Schema linking: prompt rendering, response parsing and calibration.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::schema::{ColumnRef, SchemaCard};
use crate::similarity::{SimilarityScorer, TfIdfScorer};
use crate::{Error, Result};

const PROMPT_TEMPLATE: &str = include_str!("../resources/linking_prompt.txt");
const FORMAT_CONTRACT: &str = include_str!("../resources/linking_format.txt");

/// Version tag of the output-format contract shipped in `resources/`.
pub const FORMAT_VERSION: &str = "linking-format/1";

pub const DEFAULT_RECALL_THRESHOLD: f64 = 0.55;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct JoinRelation {
    pub left: ColumnRef,
    pub right: ColumnRef,
}

impl JoinRelation {
    /// Same pair of columns in either orientation.
    pub fn same_pair(&self, a: &ColumnRef, b: &ColumnRef) -> bool {
        (self.left.eq_ignore_case(a) && self.right.eq_ignore_case(b))
            || (self.left.eq_ignore_case(b) && self.right.eq_ignore_case(a))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ConditionValue {
    pub column: ColumnRef,
    pub literal: String,
}

/// Question-relevant subset of a schema.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LinkedSchema {
    pub tables: Vec<String>,
    pub columns: Vec<ColumnRef>,
    pub join_relations: Vec<JoinRelation>,
    pub condition_values: Vec<ConditionValue>,
    #[serde(default)]
    pub rationale: String,
}

impl LinkedSchema {
    /// Every table and column of `card`, with its foreign keys as joins.
    pub fn full(card: &SchemaCard) -> Self {
        let mut ls = LinkedSchema {
            tables: card.tables.iter().map(|t| t.name.clone()).collect(),
            columns: card.columns().collect(),
            ..Default::default()
        };
        for fk in &card.foreign_keys {
            ls.add_join(fk.parent.clone(), fk.child.clone());
        }
        ls
    }

    pub fn has_table(&self, name: &str) -> bool {
        self.tables.iter().any(|t| t.eq_ignore_ascii_case(name))
    }

    pub fn has_column(&self, col: &ColumnRef) -> bool {
        self.columns.iter().any(|c| c.eq_ignore_case(col))
    }

    pub fn has_join(&self, a: &ColumnRef, b: &ColumnRef) -> bool {
        self.join_relations.iter().any(|j| j.same_pair(a, b))
    }

    pub fn add_table(&mut self, name: &str) {
        if !self.has_table(name) {
            self.tables.push(name.to_string());
        }
    }

    /// Adds the column and, if needed, its table.
    pub fn add_column(&mut self, col: ColumnRef) {
        self.add_table(&col.table);
        if !self.has_column(&col) {
            self.columns.push(col);
        }
    }

    pub fn add_join(&mut self, left: ColumnRef, right: ColumnRef) {
        self.add_column(left.clone());
        self.add_column(right.clone());
        if !self.has_join(&left, &right) {
            self.join_relations.push(JoinRelation { left, right });
        }
    }

    pub fn add_value(&mut self, column: ColumnRef, literal: String) {
        self.add_column(column.clone());
        let v = ConditionValue { column, literal };
        if !self.condition_values.contains(&v) {
            self.condition_values.push(v);
        }
    }

    /// Whether `self` contains every item of `other`.
    pub fn is_superset_of(&self, other: &LinkedSchema) -> bool {
        other.tables.iter().all(|t| self.has_table(t))
            && other.columns.iter().all(|c| self.has_column(c))
            && other.join_relations.iter().all(|j| self.has_join(&j.left, &j.right))
            && other.condition_values.iter().all(|v| self.condition_values.contains(v))
    }

    /// Rebuilds the lists through the `add_*` helpers so the invariants hold
    /// and duplicates are gone.
    pub fn normalized(&self) -> Self {
        let mut out = LinkedSchema {
            rationale: self.rationale.clone(),
            ..Default::default()
        };
        for t in &self.tables {
            out.add_table(t);
        }
        for c in &self.columns {
            out.add_column(c.clone());
        }
        for j in &self.join_relations {
            out.add_join(j.left.clone(), j.right.clone());
        }
        for v in &self.condition_values {
            out.add_value(v.column.clone(), v.literal.clone());
        }
        out
    }

    /// Narrows `card` to the linked items. A linked table without linked
    /// columns keeps all of its columns; keys, relations and enums survive
    /// only when every column they mention survives.
    pub fn restrict(&self, card: &SchemaCard) -> SchemaCard {
        let mut out = SchemaCard {
            database_id: card.database_id.clone(),
            ..Default::default()
        };
        for table in &card.tables {
            if !self.has_table(&table.name) {
                continue;
            }
            let listed: Vec<_> = self
                .columns
                .iter()
                .filter(|c| c.table.eq_ignore_ascii_case(&table.name))
                .collect();
            let mut t = table.clone();
            if !listed.is_empty() {
                t.columns.retain(|c| listed.iter().any(|l| l.column.eq_ignore_ascii_case(&c.name)));
            }
            out.tables.push(t);
        }
        for (table, cols) in &card.primary_keys {
            let kept: Vec<String> = cols
                .iter()
                .filter(|c| out.resolve(table, c).is_some())
                .cloned()
                .collect();
            if out.table(table).is_some() && kept.len() == cols.len() {
                out.primary_keys.insert(table.clone(), kept);
            }
        }
        out.foreign_keys = card
            .foreign_keys
            .iter()
            .filter(|fk| out.contains(&fk.child) && out.contains(&fk.parent))
            .cloned()
            .collect();
        out.one_to_many = card
            .one_to_many
            .iter()
            .filter(|r| out.contains(&r.one_side) && out.contains(&r.many_side))
            .cloned()
            .collect();
        out.enums = card
            .enums
            .iter()
            .filter(|(c, _)| out.contains(c))
            .map(|(c, v)| (c.clone(), v.clone()))
            .collect();
        out
    }
}

/// Schema listing with per-column comments, one block per table.
pub fn render_schema_listing(card: &SchemaCard) -> String {
    let mut out = String::new();
    for t in &card.tables {
        out.push_str("Table ");
        out.push_str(&t.name);
        if !t.comment.is_empty() {
            let _ = write!(out, " -- {}", t.comment);
        }
        out.push('\n');
        for c in &t.columns {
            let _ = write!(out, "  {} {}", c.name, c.declared_type);
            if !c.comment.is_empty() {
                let _ = write!(out, " -- {}", c.comment);
            }
            out.push('\n');
        }
    }
    out
}

/// Keys, relations and enum mappings of `card`. Empty sections are left out.
pub fn render_auxiliary(card: &SchemaCard) -> String {
    let mut out = String::new();
    let pks: Vec<_> = card
        .tables
        .iter()
        .filter_map(|t| {
            let pk = card.primary_key(&t.name);
            (!pk.is_empty()).then(|| format!("  {}({})", t.name, pk.join(", ")))
        })
        .collect();
    if !pks.is_empty() {
        out.push_str("Primary keys:\n");
        for line in pks {
            out.push_str(&line);
            out.push('\n');
        }
    }
    if !card.foreign_keys.is_empty() {
        out.push_str("Foreign keys:\n");
        for fk in &card.foreign_keys {
            let _ = writeln!(out, "  {} -> {}", fk.child, fk.parent);
        }
    }
    if !card.one_to_many.is_empty() {
        out.push_str("One-to-many relations:\n");
        for r in &card.one_to_many {
            let _ = writeln!(
                out,
                "  {} 1:N {} (up to {} rows per value)",
                r.one_side, r.many_side, r.max_fanout
            );
        }
    }
    if !card.enums.is_empty() {
        out.push_str("Enum values:\n");
        for (col, entries) in &card.enums {
            let mapping: Vec<String> = entries
                .iter()
                .map(|e| format!("{}: {}", e.stored_value, e.label))
                .collect();
            let _ = writeln!(out, "  {col} = {}", mapping.join("; "));
        }
    }
    out
}

/// The linking prompt for `question` over `card`.
pub fn build_linking_prompt(question: &str, card: &SchemaCard) -> String {
    let aux = render_auxiliary(card);
    let aux = if aux.is_empty() {
        String::new()
    } else {
        format!("\nAuxiliary information:\n{aux}")
    };
    PROMPT_TEMPLATE
        .replace("{schema}", render_schema_listing(card).trim_end())
        .replace("{auxiliary}", &aux)
        .replace("{question}", question.trim())
        .replace("{format}", FORMAT_CONTRACT.trim_end())
}

/// Renders `ls` in the output-format contract. Inverse of
/// [`parse_linking_response`] on tables, columns, joins and values.
pub fn render_linking_response(ls: &LinkedSchema) -> String {
    let mut out = String::from("TABLES:\n");
    for t in &ls.tables {
        let _ = writeln!(out, "{t}");
    }
    out.push_str("COLUMNS:\n");
    for c in &ls.columns {
        let _ = writeln!(out, "{c}");
    }
    out.push_str("JOINS:\n");
    for j in &ls.join_relations {
        let _ = writeln!(out, "{} = {}", j.left, j.right);
    }
    out.push_str("VALUES:\n");
    for v in &ls.condition_values {
        let _ = writeln!(out, "{} = {}", v.column, v.literal);
    }
    out.push_str("REASONING:\n");
    out.push_str(&ls.rationale);
    out
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParsedLinking {
    pub linked: LinkedSchema,
    pub warnings: Vec<String>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Section {
    Tables,
    Columns,
    Joins,
    Values,
    Reasoning,
}

fn section_header(line: &str) -> Option<(Section, &str)> {
    let t = line.trim().trim_start_matches(['#', '*', ' ']);
    let (head, rest) = t.split_once(':')?;
    let head = head.trim().trim_end_matches('*');
    let section = match head.to_ascii_uppercase().as_str() {
        "TABLES" => Section::Tables,
        "COLUMNS" => Section::Columns,
        "JOINS" => Section::Joins,
        "VALUES" => Section::Values,
        "REASONING" => Section::Reasoning,
        _ => return None,
    };
    Some((section, rest.trim_start_matches('*')))
}

fn strip_bullet(item: &str) -> &str {
    let t = item.trim();
    t.strip_prefix("- ")
        .or_else(|| t.strip_prefix("* "))
        .unwrap_or(t)
        .trim()
}

fn unquote(s: &str) -> &str {
    for q in ['\'', '"', '`'] {
        if s.len() >= 2 && s.starts_with(q) && s.ends_with(q) {
            return &s[1..s.len() - 1];
        }
    }
    s
}

fn resolve_ref(text: &str, card: &SchemaCard) -> Option<ColumnRef> {
    let text = text.trim();
    match text.split_once('.') {
        Some((t, c)) => card.resolve(unquote(t.trim()), unquote(c.trim())),
        None => {
            let name = unquote(text);
            let mut hits = card.columns().filter(|c| c.column.eq_ignore_ascii_case(name));
            let first = hits.next()?;
            hits.next().is_none().then_some(first)
        }
    }
}

/// Parses a response written in the output-format contract. Identifiers
/// that do not resolve in `card` are dropped and reported in `warnings`.
pub fn parse_linking_response(text: &str, card: &SchemaCard) -> Result<ParsedLinking> {
    let mut out = ParsedLinking::default();
    let mut section = None;
    let mut seen_section = false;
    let mut rationale: Vec<&str> = Vec::new();

    for line in text.lines() {
        if let Some((s, rest)) = section_header(line) {
            section = Some(s);
            seen_section = true;
            let rest = rest.trim();
            if rest.is_empty() {
                continue;
            }
            if s == Section::Reasoning {
                rationale.push(rest);
                continue;
            }
            // Inline lists such as `TABLES: singer, concert`.
            let items: Vec<&str> = if matches!(s, Section::Tables | Section::Columns) {
                rest.split(',').collect()
            } else {
                vec![rest]
            };
            for item in items {
                parse_item(s, item, card, &mut out);
            }
            continue;
        }
        match section {
            Some(Section::Reasoning) => rationale.push(line),
            Some(s) if !line.trim().is_empty() => parse_item(s, line, card, &mut out),
            _ => {}
        }
    }
    if !seen_section {
        return Err(Error::LinkingParse);
    }
    out.linked.rationale = rationale.join("\n").trim().to_string();
    Ok(out)
}

fn parse_item(section: Section, raw: &str, card: &SchemaCard, out: &mut ParsedLinking) {
    let item = strip_bullet(raw);
    if item.is_empty() {
        return;
    }
    let ls = &mut out.linked;
    match section {
        Section::Tables => match card.table(unquote(item)) {
            Some(t) => ls.add_table(&t.name),
            None => out.warnings.push(format!("unknown table `{item}`")),
        },
        Section::Columns => match resolve_ref(item, card) {
            Some(c) => ls.add_column(c),
            None => out.warnings.push(format!("unknown column `{item}`")),
        },
        Section::Joins => {
            let Some((l, r)) = item.split_once('=') else {
                out.warnings.push(format!("malformed join `{item}`"));
                return;
            };
            match (resolve_ref(l, card), resolve_ref(r, card)) {
                (Some(a), Some(b)) => ls.add_join(a, b),
                _ => out.warnings.push(format!("unknown join `{item}`")),
            }
        }
        Section::Values => {
            let Some((l, r)) = item.split_once('=') else {
                out.warnings.push(format!("malformed value `{item}`"));
                return;
            };
            match resolve_ref(l, card) {
                Some(c) => ls.add_value(c, unquote(r.trim()).to_string()),
                None => out.warnings.push(format!("unknown value column `{}`", l.trim())),
            }
        }
        Section::Reasoning => {}
    }
}

/// Restores foreign-key joins between linked tables that the model left out.
pub fn calibrate_join_relations(ls: &LinkedSchema, card: &SchemaCard) -> LinkedSchema {
    let mut out = ls.clone();
    for fk in &card.foreign_keys {
        if fk.child.table.eq_ignore_ascii_case(&fk.parent.table) {
            continue;
        }
        if out.has_table(&fk.child.table)
            && out.has_table(&fk.parent.table)
            && !out.has_join(&fk.parent, &fk.child)
        {
            out.add_join(fk.parent.clone(), fk.child.clone());
        }
    }
    out
}

fn display_name(name: &str) -> String {
    name.replace('_', " ")
}

fn item_score(scorer: &dyn SimilarityScorer, question: &str, name: &str, comment: &str) -> f64 {
    let by_name = scorer.score(question, &display_name(name));
    if comment.is_empty() {
        by_name
    } else {
        by_name.max(scorer.score(question, comment))
    }
}

/// Appends unlinked tables and columns whose similarity to the question
/// reaches `threshold`, best first, ties in catalog order.
pub fn calibrate_similarity_recall(
    question: &str,
    ls: &LinkedSchema,
    card: &SchemaCard,
    scorer: &dyn SimilarityScorer,
    threshold: f64,
) -> LinkedSchema {
    enum Item {
        Table(String),
        Column(ColumnRef),
    }
    let mut scored: Vec<(f64, usize, Item)> = Vec::new();
    let mut order = 0usize;
    for t in &card.tables {
        if !ls.has_table(&t.name) {
            let s = item_score(scorer, question, &t.name, &t.comment);
            if s >= threshold {
                scored.push((s, order, Item::Table(t.name.clone())));
            }
        }
        order += 1;
        for c in &t.columns {
            let col = ColumnRef::new(&t.name, &c.name);
            if !ls.has_column(&col) {
                let s = item_score(scorer, question, &c.name, &c.comment);
                if s >= threshold {
                    scored.push((s, order, Item::Column(col)));
                }
            }
            order += 1;
        }
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut out = ls.clone();
    for (_, _, item) in scored {
        match item {
            Item::Table(t) => out.add_table(&t),
            Item::Column(c) => out.add_column(c),
        }
    }
    out
}

/// TF-IDF scorer fitted on the names and comments of `card`.
pub fn default_scorer(card: &SchemaCard) -> TfIdfScorer {
    let mut corpus = Vec::new();
    for t in &card.tables {
        corpus.push(display_name(&t.name));
        if !t.comment.is_empty() {
            corpus.push(t.comment.clone());
        }
        for c in &t.columns {
            corpus.push(display_name(&c.name));
            if !c.comment.is_empty() {
                corpus.push(c.comment.clone());
            }
        }
    }
    TfIdfScorer::fit(corpus.iter().map(String::as_str))
}

/// Similarity recall followed by join restoration.
pub fn calibrate(
    question: &str,
    ls: &LinkedSchema,
    card: &SchemaCard,
    scorer: &dyn SimilarityScorer,
    threshold: f64,
) -> LinkedSchema {
    let recalled = calibrate_similarity_recall(question, ls, card, scorer, threshold);
    calibrate_join_relations(&recalled, card)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::demo_card;
    use proptest::prelude::*;

    fn c(s: &str) -> ColumnRef {
        s.parse().unwrap()
    }

    #[test]
    fn prompt_shape() {
        let card = demo_card();
        let p = build_linking_prompt("How many singers?", &card);
        assert!(p.starts_with("### Schema linking\n"));
        assert_eq!(p.matches("\nTable ").count(), 4);
        assert!(p.contains("\nLet's think step by step.\n"));
        assert!(p.contains("\nQuestion: How many singers?\n"));
        let aux = &p[p.find("Auxiliary information:").unwrap()..p.find("Question:").unwrap()];
        assert!(aux.contains("0: init"));
        assert_eq!(p, build_linking_prompt("How many singers?", &card));
    }

    #[test]
    fn parse_well_formed() {
        let card = demo_card();
        let text = "TABLES:\nsinger\nconcert\nCOLUMNS:\nsinger.name\nconcert.singer_id\nJOINS:\nsinger.singer_id = concert.singer_id\nVALUES:\nsinger.nationality = 'US'\nREASONING:\nFirst find the singers.\nThen join.";
        let parsed = parse_linking_response(text, &card).unwrap();
        assert_eq!(parsed.linked.tables, ["singer", "concert"]);
        assert!(parsed.warnings.is_empty());
        assert_eq!(parsed.linked.condition_values[0].literal, "US");
        assert_eq!(parsed.linked.rationale, "First find the singers.\nThen join.");
    }

    #[test]
    fn unknown_identifiers_are_dropped() {
        let card = demo_card();
        let parsed = parse_linking_response("TABLES: singer, ghost\nCOLUMNS:\nghost.x", &card).unwrap();
        assert_eq!(parsed.linked.tables, ["singer"]);
        assert_eq!(parsed.warnings.len(), 2);
        assert!(parsed.warnings[0].contains("ghost"));
    }

    #[test]
    fn prose_is_a_parse_error() {
        let err = parse_linking_response("I think you need the singer table.", &demo_card());
        assert!(matches!(err, Err(Error::LinkingParse)));
    }

    #[test]
    fn join_restoration() {
        let card = demo_card();
        let ls = LinkedSchema {
            tables: vec!["singer".into(), "concert".into()],
            ..Default::default()
        };
        let out = calibrate_join_relations(&ls, &card);
        assert_eq!(
            out.join_relations,
            [JoinRelation { left: c("singer.singer_id"), right: c("concert.singer_id") }]
        );
        assert_eq!(calibrate_join_relations(&out, &card), out);

        let single = LinkedSchema { tables: vec!["singer".into()], ..Default::default() };
        assert_eq!(calibrate_join_relations(&single, &card), single);
    }

    #[test]
    fn similarity_recall() {
        let card = demo_card();
        let scorer = default_scorer(&card);
        let q = "How many singers?";
        let s = scorer.score(q, "singer");
        assert!(s > 0.0);
        let ls = LinkedSchema { tables: vec!["orders".into()], ..Default::default() };
        let out = calibrate_similarity_recall(q, &ls, &card, &scorer, s - 1e-9);
        assert!(out.has_table("singer"));
        assert!(out.is_superset_of(&ls));

        let none = calibrate_similarity_recall("zzz qqq", &ls, &card, &scorer, 1.0);
        assert_eq!(none, ls);
    }

    #[test]
    fn recalled_column_brings_its_table() {
        let card = demo_card();
        let scorer = default_scorer(&card);
        let ls = LinkedSchema::default();
        let out = calibrate_similarity_recall("nationality", &ls, &card, &scorer, 0.99);
        assert!(out.has_column(&c("singer.nationality")));
        assert!(out.has_table("singer"));
    }

    #[test]
    fn restrict_keeps_linked_items() {
        let card = demo_card();
        let ls = LinkedSchema {
            tables: vec!["orders".into()],
            columns: vec![c("orders.status")],
            ..Default::default()
        };
        let sub = ls.restrict(&card);
        assert_eq!(sub.tables.len(), 1);
        assert_eq!(sub.tables[0].columns.len(), 1);
        assert!(sub.primary_keys.is_empty());
        assert_eq!(sub.enums.len(), 1);
    }

    fn arb_linked() -> impl Strategy<Value = LinkedSchema> {
        let card = demo_card();
        let cols: Vec<ColumnRef> = card.columns().collect();
        let n = cols.len();
        (
            proptest::collection::vec(0..n, 0..6),
            proptest::collection::vec((0..n, 0..n), 0..3),
            proptest::collection::vec((0..n, "[A-Za-z0-9][A-Za-z0-9 ]{0,8}[A-Za-z0-9]"), 0..3),
            "[a-z ]{0,20}",
        )
            .prop_map(move |(cs, js, vs, why)| {
                let mut ls = LinkedSchema::default();
                for i in cs {
                    ls.add_column(cols[i].clone());
                }
                for (a, b) in js {
                    if a != b {
                        ls.add_join(cols[a].clone(), cols[b].clone());
                    }
                }
                for (i, lit) in vs {
                    ls.add_value(cols[i].clone(), lit);
                }
                ls.rationale = why.trim().to_string();
                ls
            })
    }

    proptest! {
        #[test]
        fn render_parse_round_trip(ls in arb_linked()) {
            let card = demo_card();
            let parsed = parse_linking_response(&render_linking_response(&ls), &card).unwrap();
            prop_assert!(parsed.warnings.is_empty());
            prop_assert_eq!(parsed.linked, ls);
        }
    }
}
