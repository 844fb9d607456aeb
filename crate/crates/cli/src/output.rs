//! Result files. Every file carries the config hash and seed.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

/// Fixed 17-significant-digit rendering.
pub fn fmt17(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt17).unwrap_or_default()
}

/// A CSV table built row by row.
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Table {
            header: header.iter().map(|h| h.as_ref().to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Writes result files for one subcommand into the output directory.
pub struct Writer<'a> {
    command: &'a str,
    config: &'a ExperimentConfig,
    hash: String,
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl<'a> Writer<'a> {
    pub fn new(command: &'a str, config: &'a ExperimentConfig) -> CliResult<Self> {
        let dir = config.out.clone();
        std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        Ok(Writer {
            command,
            config,
            hash: config.hash(),
            dir,
            written: Vec::new(),
        })
    }

    pub fn json<T: Serialize>(&mut self, name: &str, result: &T) -> CliResult<()> {
        if !self.config.format.json() {
            return Ok(());
        }
        let doc = json!({
            "command": self.command,
            "config_hash": self.hash,
            "seed": self.config.seed,
            "config": self.config,
            "result": result,
        });
        let mut text = serde_json::to_string_pretty(&doc).expect("report serializes");
        text.push('\n');
        self.write(name, &text)
    }

    pub fn csv(&mut self, name: &str, table: &Table) -> CliResult<()> {
        if !self.config.format.csv() {
            return Ok(());
        }
        let mut text = String::new();
        let config = serde_json::to_string(self.config).expect("config serializes");
        writeln!(text, "# command: {}", self.command).unwrap();
        writeln!(text, "# config_hash: {}", self.hash).unwrap();
        writeln!(text, "# seed: {}", self.config.seed).unwrap();
        writeln!(text, "# config: {config}").unwrap();
        let line = |cells: &[String]| cells.iter().map(|c| csv_field(c)).collect::<Vec<_>>().join(",");
        writeln!(text, "{}", line(&table.header)).unwrap();
        for row in &table.rows {
            writeln!(text, "{}", line(row)).unwrap();
        }
        self.write(name, &text)
    }

    fn write(&mut self, name: &str, text: &str) -> CliResult<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        self.written.push(path);
        Ok(())
    }

    pub fn finish(self) -> Vec<PathBuf> {
        self.written
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}
