//! CSV tables and text summaries, printed and optionally written to a directory.

use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};

/// A CSV table built row by row.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Table {
            name: name.to_string(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        Ok(String::from_utf8(w.into_inner()?)?)
    }
}

/// Everything a command produced.
#[derive(Debug, Default)]
pub struct Report {
    pub summary: Vec<String>,
    pub tables: Vec<Table>,
}

impl Report {
    pub fn line(&mut self, text: impl Into<String>) {
        self.summary.push(text.into());
    }

    /// Prints the summary and writes `summary.txt` plus one CSV per table
    /// into `out` when given.
    pub fn emit(&self, out: Option<&PathBuf>) -> Result<()> {
        for line in &self.summary {
            println!("{line}");
        }
        if let Some(dir) = out {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            let mut text = self.summary.join("\n");
            text.push('\n');
            fs::write(dir.join("summary.txt"), text)?;
            for table in &self.tables {
                let path = dir.join(format!("{}.csv", table.name));
                fs::write(&path, table.to_csv()?).with_context(|| format!("writing {}", path.display()))?;
            }
        }
        Ok(())
    }
}

/// Full-precision, locale-free float formatting.
pub fn num(x: f64) -> String {
    format!("{x:e}")
}

pub fn coords(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_quotes_fields_with_separators() {
        let mut t = Table::new("t", &["a", "b"]);
        t.push(vec!["1, 2".into(), "say \"hi\"".into()]);
        assert_eq!(t.to_csv().unwrap(), "a,b\n\"1, 2\",\"say \"\"hi\"\"\"\n");
    }

    #[test]
    fn numbers_round_trip() {
        let x = 0.1 + 0.2;
        assert_eq!(num(x).parse::<f64>().unwrap(), x);
    }
}
