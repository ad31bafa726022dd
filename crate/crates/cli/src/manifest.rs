use std::collections::BTreeMap;
use std::fs::File;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
}

pub fn digest_file(path: &Path) -> io::Result<InputDigest> {
    let mut hasher = Sha256::new();
    let bytes = io::copy(&mut File::open(path)?, &mut hasher)?;
    Ok(InputDigest {
        path: path.to_path_buf(),
        sha256: format!("{:x}", hasher.finalize()),
        bytes,
    })
}

/// Record of one invocation, written as `<command>.manifest.json` in the
/// output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub params: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<PathBuf>,
    pub started_at: String,
    pub finished_at: String,
}

impl RunManifest {
    pub fn file_name(command: &str) -> String {
        format!("{command}.manifest.json")
    }
}
