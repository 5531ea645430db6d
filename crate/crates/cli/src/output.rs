use std::fs;
use std::path::{Path, PathBuf};

use mbridge::Error;
use serde::Serialize;
use serde_json::{json, Map, Value};

pub const SCHEMA: &str = "mbridge/1";

/// Everything needed to rerun a command; embedded in every report.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub inputs: Map<String, Value>,
    pub config: Value,
    pub seed: Option<u64>,
    pub iterations: Option<usize>,
}

impl RunManifest {
    pub fn new(command: &str, config: Value) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            inputs: Map::new(),
            config,
            seed: None,
            iterations: None,
        }
    }

    pub fn input(&mut self, name: &str, path: &Path, document: Value) {
        self.inputs.insert(
            name.to_string(),
            json!({ "path": path.display().to_string(), "document": document }),
        );
    }
}

pub struct OutputDir {
    root: PathBuf,
    artifacts: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, Error> {
        fs::create_dir_all(root).map_err(|e| io_field("--out", root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            artifacts: Vec::new(),
        })
    }

    pub fn csv(&mut self, name: &str, header: &[String], rows: impl IntoIterator<Item = Vec<Cell>>) -> Result<(), Error> {
        let path = self.root.join(name);
        let mut w = csv::Writer::from_path(&path).map_err(|e| csv_field(&path, e))?;
        w.write_record(header).map_err(|e| csv_field(&path, e))?;
        for row in rows {
            w.write_record(row.iter().map(Cell::render)).map_err(|e| csv_field(&path, e))?;
        }
        w.flush().map_err(|e| io_field("--out", &path, e))?;
        self.artifacts.push(name.to_string());
        Ok(())
    }

    pub fn text(&mut self, name: &str, body: &str) -> Result<(), Error> {
        let path = self.root.join(name);
        fs::write(&path, body).map_err(|e| io_field("--out", &path, e))?;
        self.artifacts.push(name.to_string());
        Ok(())
    }

    /// Writes report.json with the schema tag, the manifest and the artifact list.
    pub fn finish(self, manifest: &RunManifest, status: &str, mut body: Map<String, Value>) -> Result<PathBuf, Error> {
        body.insert("schema".into(), json!(SCHEMA));
        body.insert("status".into(), json!(status));
        body.insert("manifest".into(), serde_json::to_value(manifest).expect("manifest serialises"));
        body.insert("artifacts".into(), json!(self.artifacts));
        let path = self.root.join("report.json");
        let mut text = serde_json::to_string_pretty(&Value::Object(body)).expect("report serialises");
        text.push('\n');
        fs::write(&path, text).map_err(|e| io_field("--out", &path, e))?;
        Ok(path)
    }
}

pub enum Cell {
    Int(u64),
    Float(f64),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => format!("{v:.16e}"),
        }
    }
}

pub fn floats(values: impl IntoIterator<Item = f64>) -> Vec<Cell> {
    values.into_iter().map(Cell::Float).collect()
}

pub fn io_field(field: &str, path: &Path, e: std::io::Error) -> Error {
    Error::Field {
        field: field.to_string(),
        message: format!("{}: {e}", path.display()),
    }
}

fn csv_field(path: &Path, e: csv::Error) -> Error {
    Error::Field {
        field: "--out".into(),
        message: format!("{}: {e}", path.display()),
    }
}

/// Exit status for a failed run.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NotConverged { .. } | Error::DegenerateFiber { .. } | Error::Numerical(_) => 2,
        Error::NotInConvexOrder(_)
        | Error::NotIrreducible { .. }
        | Error::InfeasibleParameters { .. }
        | Error::DualDivergence { .. }
        | Error::InfiniteEntropy(_) => 3,
        _ => 1,
    }
}
