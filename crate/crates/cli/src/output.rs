use std::fs;
use std::io::{self, Write};
use std::path::Path;

use clap::ValueEnum;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    #[value(name = "csv")]
    Csv,
    #[value(
        name = "markdown_table",
        alias = "markdown-table",
        alias = "markdown",
        alias = "md"
    )]
    MarkdownTable,
    #[value(name = "json_lines", alias = "json-lines", alias = "jsonl")]
    JsonLines,
}

/// Rows of display cells plus the records behind them.
pub struct Report<R> {
    pub headers: &'static [&'static str],
    pub cells: Vec<Vec<String>>,
    pub records: Vec<R>,
}

impl<R: Serialize> Report<R> {
    pub fn render(&self, format: OutputFormat) -> io::Result<Vec<u8>> {
        match format {
            OutputFormat::Csv => {
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(self.headers)?;
                for row in &self.cells {
                    w.write_record(row)?;
                }
                w.into_inner().map_err(|e| e.into_error())
            }
            OutputFormat::MarkdownTable => {
                let line = |cells: &[String]| {
                    let escaped: Vec<String> =
                        cells.iter().map(|c| c.replace('|', "\\|")).collect();
                    format!("| {} |\n", escaped.join(" | "))
                };
                let headers: Vec<String> = self.headers.iter().map(|h| h.to_string()).collect();
                let rule: Vec<String> = self.headers.iter().map(|_| "---".to_string()).collect();
                let mut out = line(&headers) + &line(&rule);
                for row in &self.cells {
                    out += &line(row);
                }
                Ok(out.into_bytes())
            }
            OutputFormat::JsonLines => {
                let mut out = Vec::new();
                for r in &self.records {
                    serde_json::to_writer(&mut out, r)?;
                    out.push(b'\n');
                }
                Ok(out)
            }
        }
    }
}

/// Writes to `path`, or to standard output when there is none.
pub fn emit(bytes: &[u8], path: Option<&Path>) -> io::Result<()> {
    match path {
        Some(p) => fs::write(p, bytes),
        None => io::stdout().lock().write_all(bytes),
    }
}

pub fn sci(v: f64) -> String {
    format!("{v:.3e}")
}
