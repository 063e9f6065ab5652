//! Result records: one JSON object per line.
//!
//! Every line carries `kind`, `command`, `version`, `config_hash`, `seed` and
//! `spend`, the composition of the DP runs the command executed (`null` when
//! it executed none). Privacy quantities are strings with 17 significant
//! digits; other floats use the shortest representation that round-trips.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use linscale_core::accounting::{compose_gdp, gdp_to_epsilon, GdpBudget};
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Exact decimal form of a privacy quantity.
pub fn exact(x: f64) -> Value {
    Value::String(format!("{x:.16e}"))
}

/// Composed guarantee of `runs` as `{mu, epsilon, delta}`, `null` for none.
pub fn spend(runs: &[GdpBudget], delta: f64) -> Result<Value> {
    if runs.is_empty() {
        return Ok(Value::Null);
    }
    let mu = compose_gdp(runs)?;
    let epsilon = gdp_to_epsilon(mu, delta)?;
    Ok(
        json!({ "mu": exact(mu.mu()), "epsilon": exact(epsilon), "delta": exact(delta), "runs": runs.len() }),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    /// One JSON object per line.
    Lines,
    /// Aligned text tables, one per run of same-kind records.
    Table,
}

/// Collects the records of one command in emission order.
#[derive(Debug, Clone)]
pub struct Records {
    command: String,
    config_hash: String,
    lines: Vec<Map<String, Value>>,
}

impl Records {
    pub fn new(command: impl Into<String>, config_hash: impl Into<String>) -> Self {
        Self {
            command: command.into(),
            config_hash: config_hash.into(),
            lines: Vec::new(),
        }
    }

    /// Appends a record; `body` must be a JSON object.
    pub fn push(&mut self, kind: &str, seed: u64, spend: &Value, body: Value) {
        let mut line = match body {
            Value::Object(map) => map,
            other => panic!("record body must be an object, got {other}"),
        };
        line.insert("kind".into(), kind.into());
        line.insert("command".into(), self.command.clone().into());
        line.insert("version".into(), VERSION.into());
        line.insert("config_hash".into(), self.config_hash.clone().into());
        line.insert("seed".into(), seed.into());
        line.insert("spend".into(), spend.clone());
        self.lines.push(line);
    }

    pub fn lines(&self) -> &[Map<String, Value>] {
        &self.lines
    }

    /// Overwrites the `spend` field of every record so far.
    pub fn set_spend(&mut self, spend: &Value) {
        for line in &mut self.lines {
            line.insert("spend".into(), spend.clone());
        }
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Lines => {
                let mut out = String::new();
                for line in &self.lines {
                    out.push_str(&Value::Object(line.clone()).to_string());
                    out.push('\n');
                }
                out
            }
            Format::Table => render_table(&self.lines),
        }
    }

    /// Writes to `path`, replacing it, or to stdout.
    pub fn write(&self, format: Format, path: Option<&Path>) -> Result<()> {
        let text = self.render(format);
        match path {
            Some(p) => std::fs::write(p, text).map_err(|e| Error::io(p, e)),
            None => {
                let mut stdout = std::io::stdout().lock();
                stdout
                    .write_all(text.as_bytes())
                    .and_then(|_| stdout.flush())
                    .map_err(|e| Error::Output(e.to_string()))
            }
        }
    }
}

const ENVELOPE: [&str; 4] = ["kind", "command", "version", "config_hash"];

fn cell(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => "-".into(),
        other => other.to_string(),
    }
}

fn flatten(line: &Map<String, Value>) -> Vec<(String, String)> {
    let mut cols = Vec::new();
    for (k, v) in line {
        if ENVELOPE.contains(&k.as_str()) {
            continue;
        }
        match v {
            Value::Object(inner) => {
                for (ik, iv) in inner {
                    cols.push((format!("{k}.{ik}"), cell(iv)));
                }
            }
            other => cols.push((k.clone(), cell(other))),
        }
    }
    cols
}

fn render_table(lines: &[Map<String, Value>]) -> String {
    let mut out = String::new();
    let mut i = 0;
    while i < lines.len() {
        let kind = lines[i].get("kind").map(cell).unwrap_or_default();
        let mut j = i;
        while j < lines.len() && lines[j].get("kind").map(cell).unwrap_or_default() == kind {
            j += 1;
        }
        let rows: Vec<Vec<(String, String)>> = lines[i..j].iter().map(flatten).collect();
        let mut header: Vec<String> = Vec::new();
        for row in &rows {
            for (k, _) in row {
                if !header.contains(k) {
                    header.push(k.clone());
                }
            }
        }
        let cells: Vec<Vec<String>> = rows
            .iter()
            .map(|row| {
                header
                    .iter()
                    .map(|h| {
                        row.iter()
                            .find(|(k, _)| k == h)
                            .map(|(_, v)| v.clone())
                            .unwrap_or_else(|| "-".into())
                    })
                    .collect()
            })
            .collect();
        let widths: Vec<usize> = header
            .iter()
            .enumerate()
            .map(|(c, h)| {
                cells
                    .iter()
                    .map(|r| r[c].len())
                    .chain([h.len()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        if i > 0 {
            out.push('\n');
        }
        let _ = writeln!(out, "# {kind}");
        let fmt_row = |vals: &[String]| {
            let padded: Vec<String> = vals
                .iter()
                .zip(&widths)
                .map(|(v, w)| format!("{v:<w$}"))
                .collect();
            padded.join("  ").trim_end().to_string()
        };
        let _ = writeln!(out, "{}", fmt_row(&header));
        for r in &cells {
            let _ = writeln!(out, "{}", fmt_row(r));
        }
        i = j;
    }
    out
}

/// One series of a plot table.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotBlock {
    pub title: String,
    pub x: String,
    pub y: String,
    pub points: Vec<(f64, f64)>,
}

impl PlotBlock {
    pub fn new(title: &str, x: &str, y: &str, points: Vec<(f64, f64)>) -> Self {
        Self {
            title: title.into(),
            x: x.into(),
            y: y.into(),
            points,
        }
    }
}

/// Two-column blocks for external plotting, separated by blank lines.
pub fn render_plot(blocks: &[PlotBlock]) -> String {
    let mut out = String::new();
    for (i, b) in blocks.iter().enumerate() {
        if i > 0 {
            out.push_str("\n\n");
        }
        let _ = writeln!(out, "# {}", b.title);
        let _ = writeln!(out, "{}\t{}", b.x, b.y);
        for (a, b) in &b.points {
            let _ = writeln!(out, "{a:?}\t{b:?}");
        }
    }
    out
}
