//! Run manifest written next to every output set.

use serde_json::{json, Value};
use std::path::Path;

pub const FILE_NAME: &str = "manifest.json";

pub struct Manifest {
    pub subcommand: String,
    pub argv: Vec<String>,
    pub config: Value,
    pub seed: Option<u64>,
    pub params: Value,
    pub overrides: Vec<String>,
    pub outputs: Vec<String>,
    pub duration_s: f64,
}

impl Manifest {
    pub fn to_json(&self) -> Value {
        json!({
            "subcommand": self.subcommand,
            "argv": self.argv,
            "config": self.config,
            "seed": self.seed,
            "params": self.params,
            "overrides": self.overrides,
            "outputs": self.outputs,
            "version": env!("CARGO_PKG_VERSION"),
            "duration_s": self.duration_s,
        })
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(&self.to_json()).expect("manifest is plain JSON");
        std::fs::write(dir.join(FILE_NAME), text + "\n")
    }
}

/// Recorded argument vector of a manifest, without the program name.
pub fn recorded_argv(path: &Path) -> Result<Vec<String>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    value["argv"]
        .as_array()
        .ok_or_else(|| format!("{}: no argv array", path.display()))?
        .iter()
        .map(|v| v.as_str().map(str::to_string).ok_or_else(|| "argv entries must be strings".to_string()))
        .collect()
}
