//! SQL generation: prompt styles, candidate collection, constant repair and
//! the execution-feedback loop.

use std::fmt::{self, Write as _};
use std::ops::Range;

use rusqlite::{Connection, OptionalExtension};
use serde::{Deserialize, Serialize};
use sqlparser::ast::{BinaryOperator, Expr, Spanned};

use crate::gateway::{CompletionRequest, Gateway};
use crate::linking::{render_auxiliary, LinkedSchema};
use crate::mining::{is_numeric_type, is_text_type, quote_ident};
use crate::schema::{ColumnRef, SchemaCard};
use crate::sql::{
    first_statement, for_each_select, is_comparison, parse_query, shallow_exprs, span_range,
    Database, SqlValue,
};
use crate::{Error, Result};

const CODE_TEMPLATE: &str = include_str!("../resources/gen_code.txt");
const NATURAL_TEMPLATE: &str = include_str!("../resources/gen_natural.txt");
const SQLFUSE_TEMPLATE: &str = include_str!("../resources/gen_sqlfuse.txt");
const CORRECTION_TEMPLATE: &str = include_str!("../resources/correction.txt");

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptStyle {
    CodeRepresentation,
    NaturalLanguage,
    #[default]
    Sqlfuse,
}

impl fmt::Display for PromptStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::CodeRepresentation => "code_representation",
            Self::NaturalLanguage => "natural_language",
            Self::Sqlfuse => "sqlfuse",
        })
    }
}

impl std::str::FromStr for PromptStyle {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "code_representation" | "code" => Ok(Self::CodeRepresentation),
            "natural_language" | "natural" => Ok(Self::NaturalLanguage),
            "sqlfuse" => Ok(Self::Sqlfuse),
            other => Err(format!("unknown prompt style `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepairKind {
    ConstantFix,
    Regenerated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Repair {
    pub kind: RepairKind,
    pub before: String,
    pub after: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SqlCandidate {
    pub sql: String,
    pub turn: u32,
    #[serde(default)]
    pub repairs: Vec<Repair>,
    pub executable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_error: Option<String>,
}

impl SqlCandidate {
    pub fn new(sql: impl Into<String>) -> Self {
        Self {
            sql: sql.into(),
            turn: 0,
            repairs: Vec::new(),
            executable: false,
            last_error: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub n_candidates: usize,
    pub max_turns: u32,
    pub style: PromptStyle,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            n_candidates: 4,
            max_turns: 2,
            style: PromptStyle::Sqlfuse,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_candidates == 0 {
            return Err(Error::Config("n_candidates must be at least 1".into()));
        }
        if self.max_turns == 0 {
            return Err(Error::Config("max_turns must be at least 1".into()));
        }
        Ok(())
    }
}

fn code_schema(card: &SchemaCard) -> String {
    let mut out = String::new();
    for t in &card.tables {
        let _ = write!(out, "CREATE TABLE {} (", t.name);
        if !t.comment.is_empty() {
            let _ = write!(out, " -- {}", t.comment);
        }
        out.push('\n');
        let mut lines: Vec<(String, &str)> = t
            .columns
            .iter()
            .map(|c| {
                let mut def = format!("  {} {}", c.name, c.declared_type);
                if !c.nullable {
                    def.push_str(" NOT NULL");
                }
                (def, c.comment.as_str())
            })
            .collect();
        let pk = card.primary_key(&t.name);
        if !pk.is_empty() {
            lines.push((format!("  PRIMARY KEY ({})", pk.join(", ")), ""));
        }
        for fk in card.foreign_keys.iter().filter(|f| f.child.table == t.name) {
            lines.push((
                format!(
                    "  FOREIGN KEY ({}) REFERENCES {}({})",
                    fk.child.column, fk.parent.table, fk.parent.column
                ),
                "",
            ));
        }
        let n = lines.len();
        for (i, (def, comment)) in lines.into_iter().enumerate() {
            out.push_str(&def);
            if i + 1 < n {
                out.push(',');
            }
            if !comment.is_empty() {
                let _ = write!(out, " -- {comment}");
            }
            out.push('\n');
        }
        out.push_str(");\n");
    }
    out
}

fn natural_schema(card: &SchemaCard) -> String {
    let mut out = String::new();
    for t in &card.tables {
        let _ = write!(out, "Table {}", t.name);
        if !t.comment.is_empty() {
            let _ = write!(out, " ({})", t.comment);
        }
        let cols: Vec<String> = t
            .columns
            .iter()
            .map(|c| {
                let ty = c.declared_type.to_lowercase();
                match (ty.is_empty(), c.comment.is_empty()) {
                    (true, true) => c.name.clone(),
                    (true, false) => format!("{} ({})", c.name, c.comment),
                    (false, true) => format!("{} ({ty})", c.name),
                    (false, false) => format!("{} ({ty}, {})", c.name, c.comment),
                }
            })
            .collect();
        let _ = writeln!(out, " has columns {}.", cols.join(", "));
        let pk = card.primary_key(&t.name);
        match pk.len() {
            0 => {}
            1 => {
                let _ = writeln!(out, "The primary key of {} is {}.", t.name, pk[0]);
            }
            _ => {
                let _ = writeln!(out, "The primary key of {} is ({}).", t.name, pk.join(", "));
            }
        }
    }
    for fk in &card.foreign_keys {
        let _ = writeln!(out, "{} refers to {}.", fk.child, fk.parent);
    }
    for r in &card.one_to_many {
        let _ = writeln!(
            out,
            "Each {} value can match several {} rows.",
            r.one_side, r.many_side
        );
    }
    for (col, entries) in &card.enums {
        let mapping: Vec<String> = entries
            .iter()
            .map(|e| format!("{} means {}", e.stored_value.to_sql_literal(), e.label))
            .collect();
        let _ = writeln!(out, "In {col}, {}.", mapping.join(", "));
    }
    out
}

fn compact_schema(card: &SchemaCard) -> String {
    let mut out = String::new();
    for t in &card.tables {
        let cols: Vec<String> = t
            .columns
            .iter()
            .map(|c| {
                let mut s = c.name.clone();
                if !c.declared_type.is_empty() {
                    let _ = write!(s, " {}", c.declared_type);
                }
                if !c.comment.is_empty() {
                    let _ = write!(s, " /* {} */", c.comment);
                }
                s
            })
            .collect();
        let _ = write!(out, "{}({})", t.name, cols.join(", "));
        if !t.comment.is_empty() {
            let _ = write!(out, " -- {}", t.comment);
        }
        out.push('\n');
    }
    out
}

/// Renders the generation prompt for `question` in `style`, over the part of
/// `card` that `ls` links.
pub fn render_prompt(
    style: PromptStyle,
    question: &str,
    ls: &LinkedSchema,
    card: &SchemaCard,
) -> String {
    let sub = ls.restrict(card);
    let question = question.trim();
    match style {
        PromptStyle::CodeRepresentation => CODE_TEMPLATE
            .replace("{schema}", code_schema(&sub).trim_end())
            .replace("{question}", question),
        PromptStyle::NaturalLanguage => NATURAL_TEMPLATE
            .replace("{schema}", natural_schema(&sub).trim_end())
            .replace("{question}", question),
        PromptStyle::Sqlfuse => {
            let aux = render_auxiliary(&sub);
            let aux = if aux.is_empty() {
                String::new()
            } else {
                format!("\n[Hints]\n{aux}")
            };
            let rationale = ls.rationale.trim();
            let rationale = if rationale.is_empty() {
                String::new()
            } else {
                format!("\nLet's think step by step.\n{rationale}\n")
            };
            SQLFUSE_TEMPLATE
                .replace("{schema}", compact_schema(&sub).trim_end())
                .replace("{auxiliary}", &aux)
                .replace("{question}", question)
                .replace("{rationale}", &rationale)
        }
    }
}

/// `prompt` followed by a correction turn carrying the failed SQL and the
/// engine's error text.
pub fn correction_prompt(prompt: &str, failed_sql: &str, error: &str) -> String {
    let mut out = prompt.trim_end().to_string();
    out.push('\n');
    out.push_str(
        &CORRECTION_TEMPLATE
            .replace("{sql}", failed_sql)
            .replace("{error}", error),
    );
    out
}

/// Issues `cfg.n_candidates` completions for `prompt` and keeps the first
/// SQL statement of each.
pub fn generate_candidates(
    prompt: &str,
    gateway: &dyn Gateway,
    cfg: &GenConfig,
) -> Result<Vec<SqlCandidate>> {
    cfg.validate()?;
    let req = CompletionRequest::new(prompt);
    (0..cfg.n_candidates)
        .map(|_| {
            let text = gateway.complete(&req).map_err(Error::Generation)?;
            Ok(SqlCandidate::new(first_statement(&text)))
        })
        .collect()
}

/// Site-specific literal rewrite, consulted before any other alternative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewriteRule {
    /// Restricts the rule to one column; `None` applies everywhere.
    #[serde(default)]
    pub column: Option<ColumnRef>,
    /// Matched case-insensitively against the literal text.
    pub from: String,
    pub to: SqlValue,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FixOutcome {
    pub sql: String,
    pub repairs: Vec<Repair>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CheckKind {
    Equality,
    Ordering,
}

struct Check {
    column: ColumnRef,
    column_range: Range<usize>,
    literal: SqlValue,
    literal_range: Range<usize>,
    fragment: Range<usize>,
    kind: CheckKind,
    /// Column rewrites are only safe when the column feeds one comparison.
    may_move_column: bool,
}

/// Literal comparisons in WHERE and HAVING clauses.
fn collect_checks(sql: &str, card: &SchemaCard) -> Result<Vec<Check>> {
    let query = parse_query(sql)?;
    let mut checks = Vec::new();
    for_each_select(&query, &mut |ctx| {
        let roots = ctx.select.selection.iter().chain(ctx.select.having.iter());
        for root in roots {
            for e in shallow_exprs(root) {
                match e {
                    Expr::BinaryOp { left, op, right } if is_comparison(op) => {
                        let kind = if matches!(op, BinaryOperator::Eq | BinaryOperator::NotEq) {
                            CheckKind::Equality
                        } else {
                            CheckKind::Ordering
                        };
                        let pair = match (ctx.resolve(left, card), ctx.resolve(right, card)) {
                            (Some(c), None) => ctx.literal(right, card).map(|l| (c, l)),
                            (None, Some(c)) => ctx.literal(left, card).map(|l| (c, l)),
                            _ => None,
                        };
                        let Some(((column, cspan), (literal, lspan))) = pair else { continue };
                        let (Some(cr), Some(lr), Some(fr)) = (
                            span_range(sql, cspan),
                            span_range(sql, lspan),
                            span_range(sql, e.span()),
                        ) else {
                            continue;
                        };
                        checks.push(Check {
                            column,
                            column_range: cr,
                            literal,
                            literal_range: lr,
                            fragment: fr,
                            kind,
                            may_move_column: true,
                        });
                    }
                    Expr::InList { expr, list, .. } => {
                        let Some((column, cspan)) = ctx.resolve(expr, card) else { continue };
                        let Some(cr) = span_range(sql, cspan) else { continue };
                        for item in list {
                            let Some((literal, lspan)) = ctx.literal(item, card) else { continue };
                            let Some(lr) = span_range(sql, lspan) else { continue };
                            checks.push(Check {
                                column: column.clone(),
                                column_range: cr.clone(),
                                literal,
                                literal_range: lr.clone(),
                                fragment: lr,
                                kind: CheckKind::Equality,
                                may_move_column: false,
                            });
                        }
                    }
                    _ => {}
                }
            }
        }
    });
    checks.sort_by_key(|c| c.literal_range.start);
    checks.dedup_by_key(|c| c.literal_range.start);
    Ok(checks)
}

fn exists(conn: &Connection, col: &ColumnRef, value: &SqlValue, nocase: bool) -> Result<Option<SqlValue>> {
    let collate = if nocase { " COLLATE NOCASE" } else { "" };
    let sql = format!(
        "SELECT {c} FROM {t} WHERE {c} = ?1{collate} ORDER BY {c} LIMIT 1",
        c = quote_ident(&col.column),
        t = quote_ident(&col.table),
    );
    let found = conn
        .query_row(&sql, [value], |row| Ok(SqlValue::from_ref(row.get_ref(0)?)))
        .optional()?;
    Ok(found)
}

fn values_equal(a: &SqlValue, b: &SqlValue) -> bool {
    match (a.as_f64(), b.as_f64()) {
        (Some(x), Some(y)) => x == y,
        _ => a == b,
    }
}

fn literal_text(v: &SqlValue) -> String {
    v.to_string()
}

fn render_ident(name: &str) -> String {
    let plain = name
        .chars()
        .next()
        .is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
    if plain {
        name.to_string()
    } else {
        quote_ident(name)
    }
}

struct Alternative {
    column: Option<String>,
    value: SqlValue,
    reason: String,
}

fn find_alternative(
    conn: &Connection,
    card: &SchemaCard,
    rewrites: &[RewriteRule],
    check: &Check,
) -> Result<Option<Alternative>> {
    let text = literal_text(&check.literal);
    let col = &check.column;

    for rule in rewrites {
        let applies = rule.column.as_ref().is_none_or(|c| c.eq_ignore_case(col));
        if applies && rule.from.eq_ignore_ascii_case(&text) {
            return Ok(Some(Alternative {
                column: None,
                value: rule.to.clone(),
                reason: format!("rewrite rule maps '{text}' in {col}"),
            }));
        }
    }

    let is_text_literal = matches!(check.literal, SqlValue::Text(_));
    if check.kind == CheckKind::Equality && is_text_literal {
        if let Some(stored) = exists(conn, col, &check.literal, true)? {
            return Ok(Some(Alternative {
                column: None,
                value: stored,
                reason: format!("case-insensitive match in {col}"),
            }));
        }
    }

    if let Some(entries) = card.enum_values(col) {
        if let Some(e) = entries.iter().find(|e| e.label.eq_ignore_ascii_case(&text)) {
            return Ok(Some(Alternative {
                column: None,
                value: e.stored_value.clone(),
                reason: format!("enum label '{}' maps to stored value in {col}", e.label),
            }));
        }
    }

    if check.kind == CheckKind::Equality && is_text_literal && check.may_move_column {
        let Some(table) = card.table(&col.table) else { return Ok(None) };
        let siblings: Vec<ColumnRef> = table
            .columns
            .iter()
            .filter(|c| !c.name.eq_ignore_ascii_case(&col.column) && is_text_type(&c.declared_type))
            .map(|c| ColumnRef::new(&table.name, &c.name))
            .collect();
        for nocase in [false, true] {
            for sib in &siblings {
                if let Some(stored) = exists(conn, sib, &check.literal, nocase)? {
                    return Ok(Some(Alternative {
                        column: Some(sib.column.clone()),
                        value: stored,
                        reason: format!("value found in sibling column {sib} instead of {col}"),
                    }));
                }
            }
        }
    }
    Ok(None)
}

/// Whether the literal is acceptable for its column as written.
fn literal_is_valid(conn: &Connection, card: &SchemaCard, check: &Check) -> Result<bool> {
    let declared = card
        .column_info(&check.column)
        .map(|c| c.declared_type.as_str())
        .unwrap_or("");
    let type_ok = match &check.literal {
        SqlValue::Text(s) if is_numeric_type(declared) => s.trim().parse::<f64>().is_ok(),
        _ => true,
    };
    if !type_ok {
        return Ok(false);
    }
    if check.kind == CheckKind::Ordering {
        return Ok(true);
    }
    if exists(conn, &check.column, &check.literal, false)?.is_none() {
        return Ok(false);
    }
    Ok(match card.enum_values(&check.column) {
        Some(entries) => entries.iter().any(|e| values_equal(&e.stored_value, &check.literal)),
        None => true,
    })
}

fn splice(text: &str, base: usize, edits: &[(Range<usize>, String)]) -> String {
    let mut out = text.to_string();
    let mut sorted: Vec<_> = edits.to_vec();
    sorted.sort_by_key(|(r, _)| std::cmp::Reverse(r.start));
    for (r, rep) in sorted {
        out.replace_range(r.start - base..r.end - base, &rep);
    }
    out
}

/// Checks every literal comparison in WHERE/HAVING against the data and
/// repairs mismatched literals in place. Text outside repaired spans is kept
/// byte for byte.
pub fn constant_value_fix(sql: &str, db: &Database, card: &SchemaCard) -> Result<FixOutcome> {
    constant_value_fix_with(sql, db, card, &[])
}

/// [`constant_value_fix`] with a user rewrite table tried first.
pub fn constant_value_fix_with(
    sql: &str,
    db: &Database,
    card: &SchemaCard,
    rewrites: &[RewriteRule],
) -> Result<FixOutcome> {
    let checks = collect_checks(sql, card)?;
    let conn = db.connect()?;
    let mut edits: Vec<(Range<usize>, String)> = Vec::new();
    let mut repairs = Vec::new();
    for check in &checks {
        if literal_is_valid(&conn, card, check)? {
            continue;
        }
        let before = sql[check.fragment.clone()].to_string();
        match find_alternative(&conn, card, rewrites, check)? {
            Some(alt) => {
                let mut local = vec![(check.literal_range.clone(), alt.value.to_sql_literal())];
                if let Some(new_col) = &alt.column {
                    local.push((check.column_range.clone(), render_ident(new_col)));
                }
                let after = splice(&before, check.fragment.start, &local);
                edits.extend(local);
                repairs.push(Repair {
                    kind: RepairKind::ConstantFix,
                    before,
                    after,
                    reason: alt.reason,
                });
            }
            None => repairs.push(Repair {
                kind: RepairKind::ConstantFix,
                after: before.clone(),
                before,
                reason: format!(
                    "no match for {} in {}; left unchanged",
                    check.literal.to_sql_literal(),
                    check.column
                ),
            }),
        }
    }
    Ok(FixOutcome {
        sql: splice(sql, 0, &edits),
        repairs,
    })
}

/// Stage switches for [`self_correct_loop_with`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopOptions {
    pub constant_fix: bool,
    pub execution_check: bool,
    #[serde(default)]
    pub rewrites: Vec<RewriteRule>,
}

impl Default for LoopOptions {
    fn default() -> Self {
        Self {
            constant_fix: true,
            execution_check: true,
            rewrites: Vec::new(),
        }
    }
}

/// Generates candidates for `question` and drives each through constant
/// repair and execution feedback.
pub fn self_correct_loop(
    question: &str,
    ls: &LinkedSchema,
    card: &SchemaCard,
    db: &Database,
    gateway: &dyn Gateway,
    cfg: &GenConfig,
) -> Result<Vec<SqlCandidate>> {
    let prompt = render_prompt(cfg.style, question, ls, card);
    self_correct_loop_with(&prompt, card, db, gateway, cfg, &LoopOptions::default())
}

/// The loop over an already rendered prompt. Each candidate costs at most
/// `cfg.max_turns` gateway calls, the initial one included.
pub fn self_correct_loop_with(
    prompt: &str,
    card: &SchemaCard,
    db: &Database,
    gateway: &dyn Gateway,
    cfg: &GenConfig,
    opts: &LoopOptions,
) -> Result<Vec<SqlCandidate>> {
    let mut candidates = generate_candidates(prompt, gateway, cfg)?;
    for cand in &mut candidates {
        refine(cand, prompt, card, db, gateway, cfg, opts)?;
    }
    Ok(candidates)
}

fn refine(
    cand: &mut SqlCandidate,
    prompt: &str,
    card: &SchemaCard,
    db: &Database,
    gateway: &dyn Gateway,
    cfg: &GenConfig,
    opts: &LoopOptions,
) -> Result<()> {
    loop {
        if opts.constant_fix {
            // Unparseable SQL skips the fix; execution reports the problem.
            if let Ok(fix) = constant_value_fix_with(&cand.sql, db, card, &opts.rewrites) {
                cand.sql = fix.sql;
                cand.repairs.extend(fix.repairs);
            }
        }
        if !opts.execution_check {
            return Ok(());
        }
        let error = match db.execution_check(&cand.sql) {
            Ok(out) if out.ok => None,
            Ok(out) => Some(out.error.unwrap_or_else(|| "execution failed".into())),
            Err(e) => Some(e.to_string()),
        };
        let Some(error) = error else {
            cand.executable = true;
            cand.last_error = None;
            return Ok(());
        };
        cand.executable = false;
        cand.last_error = Some(error.clone());
        if cand.turn + 1 >= cfg.max_turns {
            return Ok(());
        }
        let req = CompletionRequest::new(correction_prompt(prompt, &cand.sql, &error));
        let text = gateway.complete(&req).map_err(Error::Generation)?;
        let next = first_statement(&text);
        cand.repairs.push(Repair {
            kind: RepairKind::Regenerated,
            before: std::mem::replace(&mut cand.sql, next.clone()),
            after: next,
            reason: error,
        });
        cand.turn += 1;
    }
}
