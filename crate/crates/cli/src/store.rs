//! On-disk layout of a pipeline run and the manifests that tie artifacts
//! to the config and inputs that produced them.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const TOOL_VERSION: &str = concat!("knowself ", env!("CARGO_PKG_VERSION"));

/// Artifact names, relative to the output root.
pub const CONFIG: &str = "config.toml";
pub const TRAIN_TASKS: &str = "tasks/train.jsonl";
pub const EVAL_TASKS: &str = "tasks/eval.jsonl";
pub const KB: &str = "kb.json";
pub const D_SELF: &str = "d_self.jsonl";
pub const REFERENCE: &str = "reference.json";
pub const STAGE1_METRICS: &str = "metrics/stage1.jsonl";
pub const PAIRS: &str = "pairs.jsonl";
pub const POLICY: &str = "policy.json";
pub const STAGE2_METRICS: &str = "metrics/stage2.jsonl";
pub const ABLATION_JSON: &str = "ablation.json";
pub const ABLATION_TXT: &str = "ablation.txt";

pub fn episodes(mode: &str) -> String {
    format!("reports/{mode}.episodes.jsonl")
}

pub fn report_json(mode: &str) -> String {
    format!("reports/{mode}.json")
}

pub fn report_txt(mode: &str) -> String {
    format!("reports/{mode}.txt")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    /// Artifact name -> sha256 of the bytes read.
    pub inputs: BTreeMap<String, String>,
    /// Artifact name -> sha256 of the bytes written.
    pub outputs: BTreeMap<String, String>,
    pub tool_version: String,
    /// Command-level parameters that are not part of the config.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub args: BTreeMap<String, String>,
}

pub fn sha256(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Output root plus bookkeeping for the command being run.
pub struct Store {
    pub root: PathBuf,
    pub config_hash: String,
    force: bool,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

impl Store {
    pub fn new(root: PathBuf, config_hash: String, force: bool) -> Self {
        Self { root, config_hash, force, inputs: BTreeMap::new(), outputs: BTreeMap::new() }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn manifest_path(&self, command: &str) -> PathBuf {
        self.root.join("manifests").join(format!("{command}.json"))
    }

    /// Manifests that list `name` among their outputs.
    fn producers(&self, name: &str) -> Result<Vec<Manifest>, CliError> {
        let Ok(rd) = fs::read_dir(self.root.join("manifests")) else { return Ok(Vec::new()) };
        let mut paths: Vec<PathBuf> = rd.filter_map(|e| e.ok().map(|e| e.path())).collect();
        paths.sort();
        let mut out = Vec::new();
        for p in paths {
            let text = fs::read_to_string(&p).map_err(|e| CliError::Invalid(format!("{}: {e}", p.display())))?;
            let m: Manifest = serde_json::from_str(&text)
                .map_err(|e| CliError::Invalid(format!("corrupt manifest {}: {e}", p.display())))?;
            if m.outputs.contains_key(name) {
                out.push(m);
            }
        }
        Ok(out)
    }

    /// Read an input artifact, checking it against the manifest that wrote it.
    pub fn read(&mut self, name: &str) -> Result<Vec<u8>, CliError> {
        let bytes = fs::read(self.path(name)).map_err(|_| CliError::Missing(name.to_string()))?;
        let digest = sha256(&bytes);
        let producers = self.producers(name)?;
        if !producers.is_empty() {
            let Some(m) = producers.iter().find(|m| m.outputs[name] == digest) else {
                return Err(CliError::Invalid(format!("artifact {name} does not match its manifest")));
            };
            if m.config_hash != self.config_hash && !self.force {
                return Err(CliError::Invalid(format!(
                    "artifact {name} was built with config {}, current config is {}; rerun upstream or pass --force",
                    m.config_hash, self.config_hash
                )));
            }
        }
        self.inputs.insert(name.to_string(), digest);
        Ok(bytes)
    }

    pub fn read_json<T: DeserializeOwned>(&mut self, name: &str) -> Result<T, CliError> {
        let bytes = self.read(name)?;
        serde_json::from_slice(&bytes).map_err(|e| CliError::Invalid(format!("corrupt artifact {name}: {e}")))
    }

    pub fn read_jsonl<T: DeserializeOwned>(&mut self, name: &str) -> Result<Vec<T>, CliError> {
        let bytes = self.read(name)?;
        knowself::minienv::read_jsonl(&bytes[..]).map_err(|e| CliError::Invalid(format!("corrupt artifact {name}: {e}")))
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
        }
        fs::write(&path, bytes).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        self.outputs.insert(name.to_string(), sha256(bytes));
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, v: &T) -> Result<PathBuf, CliError> {
        let mut s = serde_json::to_string_pretty(v).map_err(|e| CliError::Runtime(e.to_string()))?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }

    pub fn write_jsonl<T: Serialize>(&mut self, name: &str, items: &[T]) -> Result<PathBuf, CliError> {
        let mut buf = Vec::new();
        knowself::minienv::write_jsonl(&mut buf, items).map_err(|e| CliError::Runtime(e.to_string()))?;
        self.write(name, &buf)
    }

    /// Record what this command read and wrote under `manifests/<name>.json`.
    pub fn finish(self, name: &str, command: &str, args: BTreeMap<String, String>) -> Result<Manifest, CliError> {
        let m = Manifest {
            command: command.to_string(),
            config_hash: self.config_hash.clone(),
            inputs: self.inputs.clone(),
            outputs: self.outputs.clone(),
            tool_version: TOOL_VERSION.to_string(),
            args,
        };
        let path = self.manifest_path(name);
        fs::create_dir_all(path.parent().expect("manifest dir"))
            .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        let mut s = serde_json::to_string_pretty(&m).map_err(|e| CliError::Runtime(e.to_string()))?;
        s.push('\n');
        fs::write(&path, s).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        Ok(m)
    }
}
