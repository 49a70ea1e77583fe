//! Run manifests written beside every output.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};

use elical_core::records::SCHEMA_VERSION;
use elical_core::{Error, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub versions: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let mut file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

fn name_of(p: &Path) -> String {
    p.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| p.display().to_string())
}

/// Hashes inputs and outputs and writes `<first output>.manifest.json`.
pub fn write(command: &str, config_json: &str, seed: u64, inputs: &[PathBuf], outputs: &[PathBuf]) -> Result<PathBuf> {
    let hash_all = |paths: &[PathBuf]| -> Result<BTreeMap<String, String>> {
        paths.iter().map(|p| Ok((name_of(p), file_sha256(p)?))).collect()
    };
    let manifest = RunManifest {
        command: command.to_string(),
        config_sha256: sha256_hex(config_json.as_bytes()),
        seed,
        inputs: hash_all(inputs)?,
        outputs: hash_all(outputs)?,
        versions: BTreeMap::from([
            ("elical".to_string(), env!("CARGO_PKG_VERSION").to_string()),
            ("record_schema".to_string(), SCHEMA_VERSION.to_string()),
        ]),
    };
    let first = outputs.first().expect("every command has an output");
    let mut name = first.as_os_str().to_owned();
    name.push(".manifest.json");
    let path = PathBuf::from(name);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
