//! Output plumbing: format selection, destination, and rendering.
//!
//! Every subcommand renders its result once into a [`Rendered`] pair — a
//! JSON value and a CSV table — and hands it to [`OutOpt::emit`]. Data goes
//! to standard output or `--output`; diagnostics go to standard error only.

use std::fs::File;
use std::io::Write;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use serde_json::{json, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    /// Subcommand-specific CSV table (documented per subcommand).
    Csv,
    /// Stable envelope `{"version", "spec_hash", "data"}`.
    Json,
}

/// Output format and destination shared by all subcommands.
#[derive(Debug, Args)]
pub struct OutOpt {
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,

    /// Write data to this file instead of standard output.
    #[arg(long, value_name = "PATH")]
    pub output: Option<PathBuf>,
}

/// CSV shape of one result.
pub enum Table {
    /// A bare value on a single line (no header).
    Scalar(String),
    /// Two-column `key,value` table.
    KeyValue(Vec<(&'static str, String)>),
    /// General table with a header row.
    Records {
        header: Vec<&'static str>,
        rows: Vec<Vec<String>>,
    },
}

/// One result rendered for both output formats.
pub struct Rendered {
    pub json: Value,
    pub csv: Table,
}

/// Shortest decimal form that parses back to the same float.
pub fn num(v: f64) -> String {
    format!("{v}")
}

impl OutOpt {
    /// Serialize and write the payload. `spec_hash` identifies the input
    /// measure when the subcommand takes one.
    pub fn emit(&self, spec_hash: Option<&str>, payload: Rendered) -> Result<()> {
        let bytes = match self.format {
            Format::Json => {
                let envelope = json!({
                    "version": env!("CARGO_PKG_VERSION"),
                    "spec_hash": spec_hash,
                    "data": payload.json,
                });
                let mut text = serde_json::to_string_pretty(&envelope)?;
                text.push('\n');
                text.into_bytes()
            }
            Format::Csv => render_csv(&payload.csv)?,
        };
        match &self.output {
            Some(path) => {
                let mut f = File::create(path)
                    .with_context(|| format!("cannot create {}", path.display()))?;
                f.write_all(&bytes)?;
            }
            None => {
                std::io::stdout().write_all(&bytes)?;
            }
        }
        Ok(())
    }
}

fn render_csv(table: &Table) -> Result<Vec<u8>> {
    match table {
        Table::Scalar(v) => Ok(format!("{v}\n").into_bytes()),
        Table::KeyValue(pairs) => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["key", "value"])?;
            for (k, v) in pairs {
                w.write_record([*k, v.as_str()])?;
            }
            Ok(w.into_inner()?)
        }
        Table::Records { header, rows } => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(header)?;
            for row in rows {
                w.write_record(row)?;
            }
            Ok(w.into_inner()?)
        }
    }
}

/// Write a measure as a permuton spec JSON file (loadable back via `--mu`).
pub fn write_spec(path: &PathBuf, spec: &permlab::PermutonSpec) -> Result<()> {
    let mut text = spec.to_json_pretty();
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}
