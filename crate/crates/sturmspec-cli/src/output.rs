use std::fs;
use std::io::Write;
use std::path::Path;

use serde_json::Value;

use crate::config::{Format, RunConfig};
use crate::error::AppError;

pub struct Table {
    pub name: &'static str,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &'static str, header: &[&'static str]) -> Self {
        Self {
            name,
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// Comment line with the config hash, header row, then the data.
    pub fn to_csv(&self, cfg: &RunConfig) -> Result<String, AppError> {
        let mut out = format!(
            "# sturmspec {} table={} config={}\n",
            cfg.command.name(),
            self.name,
            cfg.hash()
        );
        let mut w = csv::Writer::from_writer(Vec::new());
        let fail = |e: csv::Error| AppError::Compute(format!("csv: {e}"));
        w.write_record(&self.header).map_err(fail)?;
        for r in &self.rows {
            w.write_record(r).map_err(fail)?;
        }
        let bytes = w.into_inner().map_err(|e| AppError::Compute(format!("csv: {e}")))?;
        out.push_str(&String::from_utf8(bytes).expect("csv output is utf-8"));
        Ok(out)
    }
}

pub struct Report {
    pub json: Value,
    pub tables: Vec<Table>,
}

pub fn num(x: f64) -> String {
    format!("{x}")
}

impl Report {
    pub fn document(&self, cfg: &RunConfig) -> Value {
        let mut doc = serde_json::json!({ "config": cfg.summary() });
        if !cfg.warnings.is_empty() {
            doc["warnings"] = serde_json::json!(cfg.warnings);
        }
        if let Value::Object(m) = &self.json {
            for (k, v) in m {
                doc[k] = v.clone();
            }
        }
        doc
    }

    fn csv(&self, cfg: &RunConfig) -> Result<String, AppError> {
        let parts = self.tables.iter().map(|t| t.to_csv(cfg)).collect::<Result<Vec<_>, _>>()?;
        Ok(parts.join("\n"))
    }

    pub fn emit(&self, cfg: &RunConfig, out: &mut impl Write) -> Result<(), AppError> {
        let json = serde_json::to_string_pretty(&self.document(cfg)).expect("report serializes") + "\n";
        match cfg.format {
            Format::Json => out.write_all(json.as_bytes())?,
            Format::Csv => out.write_all(self.csv(cfg)?.as_bytes())?,
        }
        if let Some(dir) = &cfg.out_dir {
            fs::create_dir_all(dir)?;
            write_atomic(&dir.join(format!("{}.json", cfg.command.name())), json.as_bytes())?;
            for t in &self.tables {
                let name = format!("{}_{}.csv", cfg.command.name(), t.name);
                write_atomic(&dir.join(name), t.to_csv(cfg)?.as_bytes())?;
            }
        }
        Ok(())
    }
}

/// Write to a temporary file in the target directory, then rename over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), AppError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| AppError::Compute(format!("i/o: {}", e.error)))?;
    Ok(())
}
