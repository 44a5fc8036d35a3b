//! Line-oriented query session.
//!
//! Anything that is not a backslash command is a question. Commands:
//! `\trace`, `\flags`, `\flags <name> on|off`, `\style <name>`, `\quit`.

use std::io::{self, BufRead, Write};

use nl2sql::sqlgen::PromptStyle;
use nl2sql::{canonical, AblationFlags, Database, Pipeline, QueryTrace, ResultTable, SqlValue};

const MAX_ROWS: usize = 20;

pub struct Session<'a> {
    pipeline: &'a Pipeline,
    db: &'a Database,
    pub flags: AblationFlags,
    pub last: Option<QueryTrace>,
}

impl<'a> Session<'a> {
    pub fn new(pipeline: &'a Pipeline, db: &'a Database) -> Self {
        Self {
            pipeline,
            db,
            flags: AblationFlags::default(),
            last: None,
        }
    }

    /// Reads until EOF or `\quit`. Per-line errors are printed and the
    /// session goes on.
    pub fn run<R: BufRead, W: Write>(&mut self, input: R, out: &mut W) -> io::Result<()> {
        for line in input.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if line == "\\quit" || line == "\\q" {
                break;
            }
            if let Some(cmd) = line.strip_prefix('\\') {
                self.command(cmd, out)?;
            } else {
                self.ask(line, out)?;
            }
        }
        Ok(())
    }

    fn command<W: Write>(&mut self, cmd: &str, out: &mut W) -> io::Result<()> {
        let parts: Vec<&str> = cmd.split_whitespace().collect();
        match parts.as_slice() {
            ["trace"] => match &self.last {
                Some(t) => match canonical::to_string_pretty(t) {
                    Ok(text) => writeln!(out, "{text}"),
                    Err(e) => writeln!(out, "error: {e}"),
                },
                None => writeln!(out, "no query yet"),
            },
            ["flags"] => {
                for name in AblationFlags::NAMES {
                    let on = self.flags.get(name).unwrap_or(false);
                    writeln!(out, "{name} {}", if on { "on" } else { "off" })?;
                }
                writeln!(out, "prompt_style {}", self.flags.prompt_style)
            }
            ["flags", name, state] => {
                let on = match *state {
                    "on" => true,
                    "off" => false,
                    other => return writeln!(out, "error: expected on|off, got `{other}`"),
                };
                match self.flags.set(name, on) {
                    Ok(()) => writeln!(out, "{name} {state}"),
                    Err(e) => writeln!(out, "error: {e}"),
                }
            }
            ["style", name] => match name.parse::<PromptStyle>() {
                Ok(style) => {
                    self.flags.prompt_style = style;
                    writeln!(out, "prompt_style {style}")
                }
                Err(e) => writeln!(out, "error: {e}"),
            },
            _ => writeln!(out, "error: unknown command `\\{cmd}`"),
        }
    }

    fn ask<W: Write>(&mut self, question: &str, out: &mut W) -> io::Result<()> {
        match self.pipeline.run_query(question, self.db, &self.flags) {
            Ok(trace) => {
                writeln!(out, "{}", trace.chosen_sql)?;
                match (&trace.result_rows, &trace.execution_error) {
                    (Some(rows), _) => write_table(out, rows)?,
                    (None, Some(err)) => writeln!(out, "execution error: {err}")?,
                    (None, None) => {}
                }
                writeln!(out, "-- {}", trace.repair_summary())?;
                self.last = Some(trace);
                Ok(())
            }
            Err(e) => writeln!(out, "error: {e}"),
        }
    }
}

fn cell(v: &SqlValue) -> String {
    match v {
        SqlValue::Null => "NULL".into(),
        SqlValue::Integer(i) => i.to_string(),
        SqlValue::Real(r) => r.to_string(),
        SqlValue::Text(s) => s.clone(),
        SqlValue::Blob { blob } => format!("x'{blob}'"),
    }
}

fn write_table<W: Write>(out: &mut W, t: &ResultTable) -> io::Result<()> {
    writeln!(out, "{}", t.columns.join(" | "))?;
    for row in t.rows.iter().take(MAX_ROWS) {
        let cells: Vec<String> = row.iter().map(cell).collect();
        writeln!(out, "{}", cells.join(" | "))?;
    }
    if t.rows.len() > MAX_ROWS {
        writeln!(out, "... {} more rows", t.rows.len() - MAX_ROWS)?;
    }
    writeln!(out, "({} rows)", t.rows.len())
}
