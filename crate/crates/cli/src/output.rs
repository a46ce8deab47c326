//! Output files. Every file carries the effective configuration: JSON
//! documents under a `config` key, text tables as leading `#` lines.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::config::RunConfig;
use crate::CliError;

pub struct OutputDir {
    pub root: PathBuf,
    config: Value,
    header: String,
}

impl OutputDir {
    pub fn create(cfg: &RunConfig) -> Result<Self, CliError> {
        let root = cfg.paths.output_dir.clone();
        std::fs::create_dir_all(&root)
            .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", root.display())))?;
        let mut header = String::new();
        for line in cfg.to_json().lines() {
            writeln!(header, "# {line}").unwrap();
        }
        Ok(OutputDir {
            root,
            config: cfg.to_value(),
            header,
        })
    }

    pub fn config(&self) -> &Value {
        &self.config
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn write(&self, name: &str, body: &str) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| CliError::runtime(format!("cannot create {}: {e}", dir.display())))?;
        }
        std::fs::write(&path, body).map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }

    /// Serialize `doc` (an object) with an added `config` key.
    pub fn json<T: Serialize>(&self, name: &str, doc: &T) -> Result<PathBuf, CliError> {
        let mut v = serde_json::to_value(doc).map_err(|e| CliError::runtime(e.to_string()))?;
        match &mut v {
            Value::Object(m) => {
                m.insert("config".to_string(), self.config.clone());
            }
            _ => return Err(CliError::runtime("report is not a JSON object")),
        }
        let text = serde_json::to_string_pretty(&v).map_err(|e| CliError::runtime(e.to_string()))? + "\n";
        self.write(name, &text)
    }

    /// Write `body` under the commented configuration header.
    pub fn text(&self, name: &str, body: &str) -> Result<PathBuf, CliError> {
        self.write(name, &format!("{}{body}", self.header))
    }
}

/// Two-column blocks for plotting, one per series, separated by two blank
/// lines.
pub fn dat_blocks(columns: [&str; 2], blocks: &[(String, Vec<(f64, f64)>)]) -> String {
    let mut s = String::new();
    writeln!(s, "# {} {}", columns[0], columns[1]).unwrap();
    for (i, (label, pts)) in blocks.iter().enumerate() {
        if i > 0 {
            s.push_str("\n\n");
        }
        writeln!(s, "# {label}").unwrap();
        for (x, y) in pts {
            writeln!(s, "{x} {y}").unwrap();
        }
    }
    s
}

pub fn display(p: &Path) -> String {
    p.display().to_string()
}
