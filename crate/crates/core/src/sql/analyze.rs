use std::ops::{ControlFlow, Range};

use sqlparser::ast::{
    BinaryOperator, Expr, JoinConstraint, JoinOperator, ObjectNamePart, Query, Select, SelectItem,
    SetExpr, Statement, TableFactor, TableWithJoins, Value, Visit, Visitor,
};
use sqlparser::dialect::SQLiteDialect;
use sqlparser::parser::Parser;
use sqlparser::tokenizer::Span;

use super::SqlValue;
use crate::schema::{ColumnRef, SchemaCard};
use crate::{Error, Result};

/// Parses a single read query.
pub fn parse_query(sql: &str) -> Result<Box<Query>> {
    let mut stmts =
        Parser::parse_sql(&SQLiteDialect {}, sql).map_err(|e| Error::SqlParse(e.to_string()))?;
    if stmts.len() != 1 {
        return Err(Error::SqlParse(format!("expected one statement, found {}", stmts.len())));
    }
    match stmts.pop() {
        Some(Statement::Query(q)) => Ok(q),
        Some(other) => Err(Error::SqlParse(format!(
            "expected a query, found `{}`",
            other.to_string().split_whitespace().next().unwrap_or("")
        ))),
        None => unreachable!(),
    }
}

/// Pulls the first SQL statement out of a model response.
///
/// A fenced code block wins; otherwise the text from the first `SELECT` or
/// `WITH` keyword is used. Either way the result is cut at the first `;`
/// outside quotes.
pub fn first_statement(response: &str) -> String {
    let body = match fenced_block(response) {
        Some(block) => block,
        None => {
            let lower = response.to_ascii_lowercase();
            let start = ["select", "with"]
                .iter()
                .filter_map(|kw| find_keyword(&lower, kw))
                .min()
                .unwrap_or(0);
            &response[start..]
        }
    };
    statement_text(body).trim().to_string()
}

fn fenced_block(text: &str) -> Option<&str> {
    let open = text.find("```")?;
    let after = &text[open + 3..];
    // Skip an info string such as `sql`.
    let body_start = after.find('\n').map(|i| i + 1).unwrap_or(0);
    let info = after[..body_start].trim();
    let body = if info.chars().all(|c| c.is_ascii_alphanumeric()) {
        &after[body_start..]
    } else {
        after
    };
    let close = body.find("```").unwrap_or(body.len());
    Some(&body[..close])
}

fn find_keyword(lower: &str, kw: &str) -> Option<usize> {
    let bytes = lower.as_bytes();
    let mut from = 0;
    while let Some(pos) = lower[from..].find(kw) {
        let at = from + pos;
        let before_ok = at == 0 || !is_ident_byte(bytes[at - 1]);
        let end = at + kw.len();
        let after_ok = end >= bytes.len() || !is_ident_byte(bytes[end]);
        if before_ok && after_ok {
            return Some(at);
        }
        from = at + kw.len();
    }
    None
}

fn is_ident_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

/// Text up to (not including) the first `;` that is outside quotes.
pub fn statement_text(text: &str) -> &str {
    let mut quote: Option<char> = None;
    for (i, ch) in text.char_indices() {
        match quote {
            Some(q) if ch == q => quote = None,
            Some(_) => {}
            None if matches!(ch, '\'' | '"' | '`') => quote = Some(ch),
            None if ch == ';' => return &text[..i],
            None => {}
        }
    }
    text
}

/// Whether the outermost query carries an `ORDER BY`.
pub fn has_top_level_order_by(sql: &str) -> bool {
    match parse_query(sql) {
        Ok(q) => q.order_by.is_some(),
        Err(_) => {
            // Fall back to a paren-depth scan so unparseable SQL still gets a
            // sensible answer.
            let lower = sql.to_ascii_lowercase();
            let mut depth = 0i32;
            let bytes = lower.as_bytes();
            for (i, &b) in bytes.iter().enumerate() {
                match b {
                    b'(' => depth += 1,
                    b')' => depth -= 1,
                    b'o' if depth == 0 && lower[i..].starts_with("order") => {
                        let rest = lower[i + 5..].trim_start();
                        if rest.starts_with("by") && (i == 0 || !is_ident_byte(bytes[i - 1])) {
                            return true;
                        }
                    }
                    _ => {}
                }
            }
            false
        }
    }
}

/// Converts a parser span into a byte range of `sql`.
pub(crate) fn span_range(sql: &str, span: Span) -> Option<Range<usize>> {
    let start = location_offset(sql, span.start.line, span.start.column)?;
    let end = location_offset(sql, span.end.line, span.end.column)?;
    (start < end).then_some(start..end)
}

fn location_offset(sql: &str, line: u64, column: u64) -> Option<usize> {
    if line == 0 || column == 0 {
        return None;
    }
    let mut offset = 0usize;
    for (i, text) in sql.split_inclusive('\n').enumerate() {
        if i as u64 + 1 == line {
            let mut col = 1u64;
            for (byte, _) in text.char_indices() {
                if col == column {
                    return Some(offset + byte);
                }
                col += 1;
            }
            return (col == column).then_some(offset + text.len());
        }
        offset += text.len();
    }
    (line as usize == sql.split_inclusive('\n').count() + 1 && column == 1).then_some(sql.len())
}

/// One relation visible in a SELECT's FROM clause.
#[derive(Debug, Clone)]
pub(crate) struct ScopeTable {
    /// Alias, or the table name when there is none; compared case-insensitively.
    pub(crate) visible_as: String,
    /// Catalog table name, `None` for derived tables.
    pub(crate) table: Option<String>,
}

pub(crate) type Frame = Vec<ScopeTable>;

/// A SELECT together with its enclosing scopes (innermost last).
pub(crate) struct SelectCtx<'a, 'f> {
    pub(crate) select: &'a Select,
    /// `ORDER BY` of the query whose body is this SELECT.
    pub(crate) order_by: Vec<&'a Expr>,
    pub(crate) frames: &'f [Frame],
}

impl<'a> SelectCtx<'a, '_> {
    /// Resolves a column expression against the visible relations.
    pub(crate) fn resolve(&self, expr: &Expr, card: &SchemaCard) -> Option<(ColumnRef, Span)> {
        resolve_column(expr, self.frames, card)
    }

    /// A literal operand, including double-quoted strings that SQLite would
    /// treat as text because no column of that name is in scope.
    pub(crate) fn literal(&self, expr: &Expr, card: &SchemaCard) -> Option<(SqlValue, Span)> {
        match expr {
            Expr::Value(v) => {
                let value = match &v.value {
                    Value::Number(n, _) => match n.parse::<i64>() {
                        Ok(i) => SqlValue::Integer(i),
                        Err(_) => SqlValue::Real(n.parse().ok()?),
                    },
                    Value::SingleQuotedString(s) | Value::DoubleQuotedString(s) => {
                        SqlValue::Text(s.clone())
                    }
                    _ => return None,
                };
                Some((value, v.span))
            }
            Expr::Identifier(id) if id.quote_style == Some('"') => {
                if resolve_column(expr, self.frames, card).is_some() {
                    None
                } else {
                    Some((SqlValue::Text(id.value.clone()), id.span))
                }
            }
            _ => None,
        }
    }

    /// Expressions owned by this SELECT, excluding nested subqueries.
    pub(crate) fn expressions(&self) -> Vec<&'a Expr> {
        let s = self.select;
        let mut out: Vec<&'a Expr> = Vec::new();
        for item in &s.projection {
            match item {
                SelectItem::UnnamedExpr(e) => out.push(e),
                SelectItem::ExprWithAlias { expr, .. } => out.push(expr),
                SelectItem::ExprWithAliases { expr, .. } => out.push(expr),
                _ => {}
            }
        }
        out.extend(join_constraints(&s.from));
        out.extend(s.selection.iter());
        if let sqlparser::ast::GroupByExpr::Expressions(exprs, _) = &s.group_by {
            out.extend(exprs.iter());
        }
        out.extend(s.having.iter());
        out.extend(self.order_by.iter().copied());
        out
    }
}

fn join_constraints(from: &[TableWithJoins]) -> Vec<&Expr> {
    let mut out = Vec::new();
    for twj in from {
        collect_join_constraints(twj, &mut out);
    }
    out
}

fn collect_join_constraints<'a>(twj: &'a TableWithJoins, out: &mut Vec<&'a Expr>) {
    if let TableFactor::NestedJoin { table_with_joins, .. } = &twj.relation {
        collect_join_constraints(table_with_joins, out);
    }
    for join in &twj.joins {
        if let TableFactor::NestedJoin { table_with_joins, .. } = &join.relation {
            collect_join_constraints(table_with_joins, out);
        }
        if let Some(JoinConstraint::On(e)) = join_constraint(&join.join_operator) {
            out.push(e);
        }
    }
}

fn join_constraint(op: &JoinOperator) -> Option<&JoinConstraint> {
    use JoinOperator::*;
    match op {
        Join(c) | Inner(c) | Left(c) | LeftOuter(c) | Right(c) | RightOuter(c) | FullOuter(c)
        | CrossJoin(c) | Semi(c) | LeftSemi(c) | RightSemi(c) | Anti(c) | LeftAnti(c)
        | RightAnti(c) => Some(c),
        _ => None,
    }
}

pub(crate) fn resolve_column(
    expr: &Expr,
    frames: &[Frame],
    card: &SchemaCard,
) -> Option<(ColumnRef, Span)> {
    match expr {
        Expr::Identifier(id) => {
            for frame in frames.iter().rev() {
                for st in frame {
                    if let Some(t) = st.table.as_deref() {
                        if let Some(c) = card.resolve(t, &id.value) {
                            return Some((c, id.span));
                        }
                    }
                }
            }
            None
        }
        Expr::CompoundIdentifier(parts) if parts.len() >= 2 => {
            let qualifier = &parts[parts.len() - 2].value;
            let col = &parts[parts.len() - 1];
            for frame in frames.iter().rev() {
                for st in frame {
                    if st.visible_as.eq_ignore_ascii_case(qualifier) {
                        let t = st.table.as_deref()?;
                        return card.resolve(t, &col.value).map(|c| (c, col.span));
                    }
                }
            }
            None
        }
        Expr::Nested(inner) => resolve_column(inner, frames, card),
        _ => None,
    }
}

fn object_name_last(name: &sqlparser::ast::ObjectName) -> Option<String> {
    match name.0.last()? {
        ObjectNamePart::Identifier(id) => Some(id.value.clone()),
        _ => None,
    }
}

/// Subqueries reachable from `expr` without crossing another query boundary.
pub(crate) fn direct_subqueries(expr: &Expr) -> Vec<&Query> {
    struct Finder<'a> {
        depth: usize,
        found: Vec<*const Query>,
        _marker: std::marker::PhantomData<&'a Query>,
    }
    impl Visitor for Finder<'_> {
        type Break = ();
        fn pre_visit_query(&mut self, q: &Query) -> ControlFlow<()> {
            if self.depth == 0 {
                self.found.push(q as *const Query);
            }
            self.depth += 1;
            ControlFlow::Continue(())
        }
        fn post_visit_query(&mut self, _q: &Query) -> ControlFlow<()> {
            self.depth -= 1;
            ControlFlow::Continue(())
        }
    }
    let mut finder = Finder {
        depth: 0,
        found: Vec::new(),
        _marker: std::marker::PhantomData,
    };
    let _ = expr.visit(&mut finder);
    // SAFETY: every pointer was taken from a node borrowed from `expr`, which
    // outlives the returned references.
    finder.found.into_iter().map(|p| unsafe { &*p }).collect()
}

/// Expressions reachable from `expr` that are not inside a nested subquery,
/// in pre-order.
pub(crate) fn shallow_exprs(expr: &Expr) -> Vec<&Expr> {
    struct Collector {
        depth: usize,
        found: Vec<*const Expr>,
    }
    impl Visitor for Collector {
        type Break = ();
        fn pre_visit_query(&mut self, _q: &Query) -> ControlFlow<()> {
            self.depth += 1;
            ControlFlow::Continue(())
        }
        fn post_visit_query(&mut self, _q: &Query) -> ControlFlow<()> {
            self.depth -= 1;
            ControlFlow::Continue(())
        }
        fn pre_visit_expr(&mut self, e: &Expr) -> ControlFlow<()> {
            if self.depth == 0 {
                self.found.push(e as *const Expr);
            }
            ControlFlow::Continue(())
        }
    }
    let mut c = Collector {
        depth: 0,
        found: Vec::new(),
    };
    let _ = expr.visit(&mut c);
    // SAFETY: as in `direct_subqueries`.
    c.found.into_iter().map(|p| unsafe { &*p }).collect()
}

/// Calls `f` for every SELECT in `query`, nested ones included, with the
/// scopes visible to it.
pub(crate) fn for_each_select<'a>(
    query: &'a Query,
    f: &mut dyn FnMut(&SelectCtx<'a, '_>),
) {
    let mut frames = Vec::new();
    walk_query(query, &mut frames, f);
}

fn walk_query<'a>(query: &'a Query, frames: &mut Vec<Frame>, f: &mut dyn FnMut(&SelectCtx<'a, '_>)) {
    if let Some(with) = &query.with {
        for cte in &with.cte_tables {
            walk_query(&cte.query, frames, f);
        }
    }
    let order_by: Vec<&'a Expr> = match &query.order_by {
        Some(ob) => match &ob.kind {
            sqlparser::ast::OrderByKind::Expressions(exprs) => exprs.iter().map(|o| &o.expr).collect(),
            _ => Vec::new(),
        },
        None => Vec::new(),
    };
    walk_set_expr(&query.body, order_by, frames, f);
}

fn walk_set_expr<'a>(
    body: &'a SetExpr,
    order_by: Vec<&'a Expr>,
    frames: &mut Vec<Frame>,
    f: &mut dyn FnMut(&SelectCtx<'a, '_>),
) {
    match body {
        SetExpr::Select(select) => walk_select(select, order_by, frames, f),
        SetExpr::Query(q) => walk_query(q, frames, f),
        SetExpr::SetOperation { left, right, .. } => {
            walk_set_expr(left, Vec::new(), frames, f);
            walk_set_expr(right, Vec::new(), frames, f);
        }
        _ => {}
    }
}

fn walk_select<'a>(
    select: &'a Select,
    order_by: Vec<&'a Expr>,
    frames: &mut Vec<Frame>,
    f: &mut dyn FnMut(&SelectCtx<'a, '_>),
) {
    let mut frame = Frame::new();
    for twj in &select.from {
        collect_relations(twj, &mut frame, frames, f);
    }
    frames.push(frame);
    let ctx = SelectCtx {
        select,
        order_by,
        frames: frames.as_slice(),
    };
    f(&ctx);
    let nested: Vec<&'a Query> = ctx.expressions().into_iter().flat_map(direct_subqueries).collect();
    drop(ctx);
    for q in nested {
        walk_query(q, frames, f);
    }
    frames.pop();
}

fn collect_relations<'a>(
    twj: &'a TableWithJoins,
    frame: &mut Frame,
    frames: &mut Vec<Frame>,
    f: &mut dyn FnMut(&SelectCtx<'a, '_>),
) {
    let mut factors = vec![&twj.relation];
    factors.extend(twj.joins.iter().map(|j| &j.relation));
    for factor in factors {
        match factor {
            TableFactor::Table { name, alias, .. } => {
                if let Some(table) = object_name_last(name) {
                    let visible_as = alias
                        .as_ref()
                        .map(|a| a.name.value.clone())
                        .unwrap_or_else(|| table.clone());
                    frame.push(ScopeTable {
                        visible_as,
                        table: Some(table),
                    });
                }
            }
            TableFactor::Derived { subquery, alias, .. } => {
                walk_query(subquery, frames, f);
                if let Some(a) = alias {
                    frame.push(ScopeTable {
                        visible_as: a.name.value.clone(),
                        table: None,
                    });
                }
            }
            TableFactor::NestedJoin { table_with_joins, .. } => {
                collect_relations(table_with_joins, frame, frames, f);
            }
            _ => {}
        }
    }
}

/// Schema items a query touches, in order of first appearance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SqlFacts {
    pub tables: Vec<String>,
    pub columns: Vec<ColumnRef>,
    pub joins: Vec<(ColumnRef, ColumnRef)>,
    pub values: Vec<(ColumnRef, String)>,
}

fn push_unique<T: PartialEq>(v: &mut Vec<T>, item: T) {
    if !v.contains(&item) {
        v.push(item);
    }
}

/// Collects the tables, columns, equi-joins and literal conditions of `sql`,
/// resolved against `card`. Unresolvable identifiers are ignored.
pub fn extract_linking(sql: &str, card: &SchemaCard) -> Result<SqlFacts> {
    let query = parse_query(sql)?;
    let mut facts = SqlFacts::default();
    for_each_select(&query, &mut |ctx| {
        for st in ctx.frames.last().into_iter().flatten() {
            if let Some(t) = st.table.as_deref().and_then(|t| card.table(t)) {
                push_unique(&mut facts.tables, t.name.clone());
            }
        }
        for root in ctx.expressions() {
            for e in shallow_exprs(root) {
                if let Some((col, _)) = ctx.resolve(e, card) {
                    if !matches!(e, Expr::Nested(_)) {
                        push_unique(&mut facts.columns, col);
                    }
                }
                let (left, right) = match e {
                    Expr::BinaryOp { left, op, right } if is_comparison(op) => (left, right),
                    Expr::Like { expr, pattern, .. } | Expr::ILike { expr, pattern, .. } => {
                        (expr, pattern)
                    }
                    _ => continue,
                };
                let l = ctx.resolve(left, card);
                let r = ctx.resolve(right, card);
                match (l, r) {
                    (Some((a, _)), Some((b, _))) => {
                        if matches!(e, Expr::BinaryOp { op: BinaryOperator::Eq, .. }) {
                            let pair = (a, b);
                            let rev = (pair.1.clone(), pair.0.clone());
                            if !facts.joins.contains(&rev) {
                                push_unique(&mut facts.joins, pair);
                            }
                        }
                    }
                    (Some((a, _)), None) => {
                        if let Some((v, _)) = ctx.literal(right, card) {
                            push_unique(&mut facts.values, (a, v.to_string()));
                        }
                    }
                    (None, Some((b, _))) => {
                        if let Some((v, _)) = ctx.literal(left, card) {
                            push_unique(&mut facts.values, (b, v.to_string()));
                        }
                    }
                    (None, None) => {}
                }
            }
            for e in shallow_exprs(root) {
                if let Expr::InList { expr, list, .. } = e {
                    if let Some((col, _)) = ctx.resolve(expr, card) {
                        for item in list {
                            if let Some((v, _)) = ctx.literal(item, card) {
                                push_unique(&mut facts.values, (col.clone(), v.to_string()));
                            }
                        }
                    }
                }
            }
        }
    });
    for (a, b) in &facts.joins {
        push_unique(&mut facts.columns, a.clone());
        push_unique(&mut facts.columns, b.clone());
    }
    for col in &facts.columns {
        if !facts.tables.iter().any(|t| t.eq_ignore_ascii_case(&col.table)) {
            facts.tables.push(col.table.clone());
        }
    }
    Ok(facts)
}

pub(crate) fn is_comparison(op: &BinaryOperator) -> bool {
    matches!(
        op,
        BinaryOperator::Eq
            | BinaryOperator::NotEq
            | BinaryOperator::Lt
            | BinaryOperator::LtEq
            | BinaryOperator::Gt
            | BinaryOperator::GtEq
    )
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn extracts_fenced_sql() {
        let resp = "Sure! Here you go:\n```sql\nSELECT name FROM singer;\n```\nThis lists names.";
        assert_eq!(first_statement(resp), "SELECT name FROM singer");
    }

    #[test]
    fn extracts_unfenced_sql_at_terminator() {
        assert_eq!(
            first_statement("The answer is SELECT count(*) FROM singer; SELECT 1"),
            "SELECT count(*) FROM singer"
        );
        assert_eq!(first_statement("SELECT ';' FROM t; x"), "SELECT ';' FROM t");
    }

    #[test]
    fn order_by_detection_ignores_subqueries() {
        assert!(has_top_level_order_by("SELECT a FROM t ORDER BY a"));
        assert!(!has_top_level_order_by(
            "SELECT a FROM t WHERE a IN (SELECT a FROM t ORDER BY a LIMIT 1)"
        ));
        assert!(has_top_level_order_by("SELEC a FROM t ORDER BY a"));
    }

    #[test]
    fn spans_map_to_source_bytes() {
        let sql = "SELECT name\nFROM singer WHERE name = 'Ann' AND \"nationality\" = \"US\"";
        let q = parse_query(sql).unwrap();
        let card = fixtures::demo_card();
        let mut seen = Vec::new();
        for_each_select(&q, &mut |ctx| {
            for root in ctx.expressions() {
                for e in shallow_exprs(root) {
                    if let Some((_, span)) = ctx.literal(e, &card) {
                        seen.push(sql[span_range(sql, span).unwrap()].to_string());
                    }
                    if let Some((_, span)) = ctx.resolve(e, &card) {
                        seen.push(sql[span_range(sql, span).unwrap()].to_string());
                    }
                }
            }
        });
        assert!(seen.contains(&"'Ann'".to_string()), "{seen:?}");
        assert!(seen.contains(&"\"US\"".to_string()), "{seen:?}");
        assert!(seen.contains(&"\"nationality\"".to_string()), "{seen:?}");
    }

    #[test]
    fn linking_facts_from_join_query() {
        let card = fixtures::demo_card();
        let facts = extract_linking(
            "SELECT T1.name, count(*) FROM singer AS T1 JOIN concert AS T2 \
             ON T1.singer_id = T2.singer_id WHERE T1.nationality = 'US' GROUP BY T1.singer_id",
            &card,
        )
        .unwrap();
        assert_eq!(facts.tables, vec!["singer", "concert"]);
        assert_eq!(
            facts.joins,
            vec![(
                ColumnRef::new("singer", "singer_id"),
                ColumnRef::new("concert", "singer_id")
            )]
        );
        assert_eq!(
            facts.values,
            vec![(ColumnRef::new("singer", "nationality"), "US".to_string())]
        );
        assert!(facts.columns.contains(&ColumnRef::new("singer", "name")));
    }

    #[test]
    fn nested_subquery_resolves_in_own_scope() {
        let card = fixtures::demo_card();
        let facts = extract_linking(
            "SELECT name FROM singer WHERE singer_id IN (SELECT singer_id FROM concert WHERE concert_id = 10)",
            &card,
        )
        .unwrap();
        assert_eq!(facts.tables, vec!["singer", "concert"]);
        assert!(facts
            .values
            .contains(&(ColumnRef::new("concert", "concert_id"), "10".to_string())));
    }
}
