//! Artifact rendering.
//!
//! A CSV artifact is two comment lines (`# ccpr <version>`, `# config:
//! <resolved config as JSON>`), a header row and data rows with floats at
//! four decimals. The JSON form is one document per run:
//! `{"version", "experiment", "config", "results"}` at full precision.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;

use crate::{CliError, Format};

/// Four decimals, with negative zero printed as zero.
pub fn fmt4(x: f64) -> String {
    let s = format!("{x:.4}");
    if s == "-0.0000" {
        "0.0000".to_string()
    } else {
        s
    }
}

pub fn fmt4_opt(x: Option<f64>) -> String {
    x.map(fmt4).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    /// File stem; the file is `<name>.csv`.
    pub name: &'static str,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &'static str, header: &[&str]) -> Self {
        Self {
            name,
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    fn to_csv(&self) -> anyhow::Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        Ok(String::from_utf8(w.into_inner()?)?)
    }
}

#[derive(Debug, Clone)]
pub struct Output {
    pub experiment: &'static str,
    pub config: serde_json::Value,
    pub results: serde_json::Value,
    pub tables: Vec<Table>,
}

#[derive(Serialize)]
struct Document<'a> {
    version: &'a str,
    experiment: &'a str,
    config: &'a serde_json::Value,
    results: &'a serde_json::Value,
}

fn io(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Io(e.into())
}

impl Output {
    pub fn new(experiment: &'static str, config: &impl Serialize, results: &impl Serialize) -> Result<Self, CliError> {
        Ok(Self {
            experiment,
            config: serde_json::to_value(config).map_err(io)?,
            results: serde_json::to_value(results).map_err(io)?,
            tables: Vec::new(),
        })
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    /// Full text of one CSV artifact, comment lines included.
    pub fn csv(&self, table: &Table) -> Result<String, CliError> {
        let config = serde_json::to_string(&self.config).map_err(io)?;
        Ok(format!(
            "# ccpr {}\n# config: {config}\n{}",
            ccpr::VERSION,
            table.to_csv().map_err(io)?
        ))
    }

    pub fn json(&self) -> Result<String, CliError> {
        let doc = Document {
            version: ccpr::VERSION,
            experiment: self.experiment,
            config: &self.config,
            results: &self.results,
        };
        let mut s = serde_json::to_string_pretty(&doc).map_err(io)?;
        s.push('\n');
        Ok(s)
    }

    /// Everything as one string, CSV tables separated by blank lines.
    pub fn render(&self, format: Format) -> Result<String, CliError> {
        match format {
            Format::Json => self.json(),
            Format::Csv => {
                let parts = self.tables.iter().map(|t| self.csv(t)).collect::<Result<Vec<_>, _>>()?;
                Ok(parts.join("\n"))
            }
        }
    }

    /// Writes `<name>.csv` per table, or `<experiment>.json`.
    pub fn write(&self, dir: &Path, format: Format) -> Result<Vec<PathBuf>, CliError> {
        let files = match format {
            Format::Json => vec![(dir.join(format!("{}.json", self.experiment)), self.json()?)],
            Format::Csv => self
                .tables
                .iter()
                .map(|t| Ok((dir.join(format!("{}.csv", t.name)), self.csv(t)?)))
                .collect::<Result<Vec<_>, CliError>>()?,
        };
        fs::create_dir_all(dir)
            .with_context(|| format!("cannot create {}", dir.display()))
            .map_err(io)?;
        for (path, text) in &files {
            fs::write(path, text)
                .with_context(|| format!("cannot write {}", path.display()))
                .map_err(io)?;
        }
        Ok(files.into_iter().map(|(p, _)| p).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_decimals() {
        assert_eq!(fmt4(0.91774), "0.9177");
        assert_eq!(fmt4(-1e-9), "0.0000");
        assert_eq!(fmt4(3.0), "3.0000");
        assert_eq!(fmt4_opt(None), "");
    }

    #[test]
    fn csv_has_provenance_lines() {
        let mut out = Output::new("evolve", &serde_json::json!({"a": 1}), &()).unwrap();
        let mut t = Table::new("x", &["a", "b"]);
        t.push(vec!["1".into(), fmt4(0.5)]);
        out.tables.push(t);
        let text = out.csv(&out.tables[0]).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], format!("# ccpr {}", ccpr::VERSION));
        assert_eq!(lines[1], r#"# config: {"a":1}"#);
        assert_eq!(&lines[2..], ["a,b", "1,0.5000"]);
    }
}
