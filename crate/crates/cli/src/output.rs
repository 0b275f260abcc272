//! Artifact files of one run. Every file is recorded so the manifest can
//! list exactly what the run produced.

use std::fs;
use std::path::{Path, PathBuf};

use roughshe::io::{path_csv, write_container, Matrix};
use roughshe::stats::{summary_csv, SummaryRow};
use roughshe::PathSample;
use serde::Serialize;

use crate::config::Format;
use crate::RunError;

pub struct Artifacts {
    dir: PathBuf,
    format: Format,
    written: Vec<String>,
}

impl Artifacts {
    pub fn create(dir: &Path, format: Format) -> Result<Self, RunError> {
        fs::create_dir_all(dir)?;
        Ok(Artifacts {
            dir: dir.to_path_buf(),
            format,
            written: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }

    fn target(&mut self, name: &str) -> Result<PathBuf, RunError> {
        let p = self.dir.join(name);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent)?;
        }
        self.written.push(name.to_string());
        Ok(p)
    }

    pub fn text(&mut self, name: &str, body: &str) -> Result<(), RunError> {
        let p = self.target(name)?;
        fs::write(p, body)?;
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), RunError> {
        let mut body = serde_json::to_string_pretty(value)?;
        body.push('\n');
        self.text(name, &body)
    }

    /// One JSON object per line.
    pub fn json_lines<T: Serialize>(&mut self, name: &str, records: &[T]) -> Result<(), RunError> {
        let mut body = String::new();
        for r in records {
            body.push_str(&serde_json::to_string(r)?);
            body.push('\n');
        }
        self.text(name, &body)
    }

    /// A table of records: `<stem>.csv` or `<stem>.jsonl` depending on the
    /// requested format. `csv` renders the CSV body when needed.
    pub fn table<T: Serialize>(
        &mut self,
        stem: &str,
        records: &[T],
        csv: impl FnOnce() -> String,
    ) -> Result<(), RunError> {
        match self.format {
            Format::Csv => self.text(&format!("{stem}.csv"), &csv()),
            Format::Json => self.json_lines(&format!("{stem}.jsonl"), records),
        }
    }

    pub fn summary_table(&mut self, rows: &[SummaryRow]) -> Result<(), RunError> {
        self.table("summary", rows, || summary_csv(rows))
    }

    pub fn container(&mut self, name: &str, m: &Matrix) -> Result<(), RunError> {
        let p = self.target(name)?;
        write_container(fs::File::create(p)?, m)?;
        Ok(())
    }

    pub fn path(
        &mut self,
        name: &str,
        path: &PathSample,
        value_name: &str,
    ) -> Result<(), RunError> {
        self.text(name, &path_csv(path, value_name))
    }
}
