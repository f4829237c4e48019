//! Run manifests: every file-writing command records its resolved
//! parameters, tool version and input hashes next to its outputs.

use std::fs;
use std::path::{Path, PathBuf};

use cdp_core::seeding::fnv1a64;
use serde::Serialize;
use serde_json::Value;

use crate::CliError;

#[derive(Serialize)]
pub struct InputRecord {
    pub path: String,
    pub fnv1a64: String,
}

#[derive(Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub schema: u32,
    pub command: String,
    pub seed: Option<u64>,
    pub config: Value,
    pub inputs: Vec<InputRecord>,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, seed: Option<u64>, config: Value) -> Self {
        Manifest {
            tool: "cdp",
            version: env!("CARGO_PKG_VERSION"),
            schema: 1,
            command: command.to_string(),
            seed,
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn record_input(&mut self, path: &Path) -> Result<(), CliError> {
        let bytes = fs::read(path)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        self.inputs.push(InputRecord {
            path: path.display().to_string(),
            fnv1a64: format!("{:016x}", fnv1a64(&bytes)),
        });
        Ok(())
    }

    /// Outputs are recorded by file name: every command writes its files
    /// directly into the output directory, and name-relative manifests stay
    /// byte-identical across reruns into different directories.
    pub fn record_output(&mut self, path: &Path) {
        let name = path
            .file_name()
            .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
        self.outputs.push(name);
    }

    /// Write the manifest: `<dir>/manifest.json` for directory outputs,
    /// `<file>.manifest.json` next to single-file outputs.
    pub fn write(&self, out: &Path) -> Result<PathBuf, CliError> {
        let path = if out.is_dir() {
            out.join("manifest.json")
        } else {
            let mut name = out.file_name().unwrap_or_default().to_os_string();
            name.push(".manifest.json");
            out.with_file_name(name)
        };
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::Runtime(format!("manifest serialization: {e}")))?;
        fs::write(&path, json)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        Ok(path)
    }
}
