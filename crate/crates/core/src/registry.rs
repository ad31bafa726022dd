//! Built-in model, hardware and dataset metadata, plus loading of
//! user-supplied profile files.
//!
//! Profile files are plain UTF-8 text made of `[model]`, `[hardware]` and
//! `[dataset]` blocks holding `key = value` lines. `#` starts a comment.
//! A block whose `name` matches an existing entry (case-insensitively)
//! starts from that entry and overrides only the keys it sets.
//!
//! ```text
//! [model]
//! name = my-slm
//! hidden_size = 384
//! n_heads = 6
//! n_layers = 4
//! vocab_size = 30522
//! n_params = 22000000
//!
//! [hardware]
//! name = orin
//! ram_bytes = 8000000000
//! unit.cpu = 2.0e10
//! unit.gpu = 4.0e11
//! ```

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const GB: u64 = 1_000_000_000;

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: unknown key `{key}` in [{block}] block")]
    UnknownKey {
        line: usize,
        block: &'static str,
        key: String,
    },
    #[error("line {line}: field `{field}`: {message}")]
    Field {
        line: usize,
        field: String,
        message: String,
    },
    #[error("[{block}] block starting at line {line} is missing required field `{field}`")]
    MissingField {
        line: usize,
        block: &'static str,
        field: &'static str,
    },
    #[error("invalid profile `{profile}`: {reason}")]
    Validation { profile: String, reason: String },
}

/// Architecture constants of one transformer model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelProfile {
    pub name: String,
    pub distilled_from: Option<String>,
    pub hidden_size: u64,
    pub n_heads: u64,
    pub n_layers: u64,
    pub vocab_size: u64,
    pub n_params: u64,
    /// Published on-device RAM usage in MB, when one is known. Carried
    /// alongside the analytical estimate, never used to compute it.
    pub reference_ram_mb: Option<u64>,
}

impl ModelProfile {
    pub fn validate(&self) -> Result<(), RegistryError> {
        let invalid = |reason: String| RegistryError::Validation {
            profile: self.name.clone(),
            reason,
        };
        if self.name.trim().is_empty() {
            return Err(invalid("empty name".into()));
        }
        for (field, value) in [
            ("hidden_size", self.hidden_size),
            ("n_heads", self.n_heads),
            ("n_layers", self.n_layers),
            ("vocab_size", self.vocab_size),
            ("n_params", self.n_params),
        ] {
            if value == 0 {
                return Err(invalid(format!("{field} must be > 0")));
            }
        }
        if !self.hidden_size.is_multiple_of(self.n_heads) {
            return Err(invalid(format!(
                "hidden_size {} is not divisible by n_heads {}",
                self.hidden_size, self.n_heads
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionUnit {
    pub name: String,
    /// Sustained throughput in FLOP/s.
    pub flops_per_second: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardwareProfile {
    pub name: String,
    pub units: Vec<ExecutionUnit>,
    pub ram_capacity_bytes: u64,
    /// Set on alternate configurations of another device (same compute,
    /// different memory). Variants are excluded when expanding `all`.
    pub variant_of: Option<String>,
}

impl HardwareProfile {
    pub fn unit(&self, name: &str) -> Option<&ExecutionUnit> {
        self.units.iter().find(|u| u.name.eq_ignore_ascii_case(name))
    }

    pub fn validate(&self) -> Result<(), RegistryError> {
        let invalid = |reason: String| RegistryError::Validation {
            profile: self.name.clone(),
            reason,
        };
        if self.name.trim().is_empty() {
            return Err(invalid("empty name".into()));
        }
        if self.units.is_empty() {
            return Err(invalid("no execution units".into()));
        }
        for unit in &self.units {
            if !(unit.flops_per_second.is_finite() && unit.flops_per_second > 0.0) {
                return Err(invalid(format!(
                    "unit `{}` throughput must be a positive finite FLOP/s value",
                    unit.name
                )));
            }
        }
        if self.ram_capacity_bytes == 0 {
            return Err(invalid("ram capacity must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetDescriptor {
    pub name: String,
    pub path: PathBuf,
    pub size_gb: f64,
    pub record_count: u64,
    pub n_features: usize,
    /// Label columns; the first one is the primary (binary/class) label.
    pub label_columns: Vec<String>,
    pub benign_label_value: String,
    pub attack_categories: BTreeSet<String>,
    pub format: DatasetFormat,
}

impl DatasetDescriptor {
    pub fn primary_label(&self) -> &str {
        &self.label_columns[0]
    }

    pub fn validate(&self) -> Result<(), RegistryError> {
        let invalid = |reason: &str| RegistryError::Validation {
            profile: self.name.clone(),
            reason: reason.to_string(),
        };
        if self.name.trim().is_empty() {
            return Err(invalid("empty name"));
        }
        if self.n_features == 0 {
            return Err(invalid("n_features must be > 0"));
        }
        if self.label_columns.is_empty() {
            return Err(invalid("label_columns must not be empty"));
        }
        Ok(())
    }
}

#[allow(clippy::too_many_arguments)]
fn model(
    name: &str,
    distilled_from: &str,
    hidden_size: u64,
    n_heads: u64,
    n_layers: u64,
    vocab_size: u64,
    n_params: u64,
    reference_ram_mb: u64,
) -> ModelProfile {
    ModelProfile {
        name: name.into(),
        distilled_from: Some(distilled_from.into()),
        hidden_size,
        n_heads,
        n_layers,
        vocab_size,
        n_params,
        reference_ram_mb: Some(reference_ram_mb),
    }
}

pub fn builtin_model_profiles() -> Vec<ModelProfile> {
    vec![
        model("distilGPT2", "GPT-2", 768, 12, 6, 50_257, 81_912_576, 750),
        model("distilBERT", "BERT-base", 768, 12, 6, 30_522, 66_362_880, 600),
        model("TinyBERT", "BERT-base", 312, 12, 4, 30_522, 14_350_248, 380),
        model("Llama-3.2-1B", "Llama 3", 2048, 32, 16, 128_256, 1_235_814_400, 5500),
        model("TinyT5", "T5-base", 256, 4, 4, 32_128, 15_570_688, 400),
    ]
}

fn unit(name: &str, gflops: f64) -> ExecutionUnit {
    ExecutionUnit {
        name: name.into(),
        flops_per_second: gflops * 1e9,
    }
}

/// Raspberry Pi 3 and Jetson Nano, plus the 8 GB Jetson variant.
///
/// Throughputs (0.3 / 10 / 50 GFLOP/s) are the values under which
/// `total_flops / throughput` reproduces the published latency table.
pub fn builtin_hardware_profiles() -> Vec<HardwareProfile> {
    vec![
        HardwareProfile {
            name: "raspberry-pi-3".into(),
            units: vec![unit("cpu", 0.3)],
            ram_capacity_bytes: GB,
            variant_of: None,
        },
        HardwareProfile {
            name: "jetson-nano".into(),
            units: vec![unit("cpu", 10.0), unit("gpu", 50.0)],
            ram_capacity_bytes: 2 * GB,
            variant_of: None,
        },
        // The device is described both as 2 GB and as 8 GB; ship both.
        HardwareProfile {
            name: "jetson-nano-8gb".into(),
            units: vec![unit("cpu", 10.0), unit("gpu", 50.0)],
            ram_capacity_bytes: 8 * GB,
            variant_of: Some("jetson-nano".into()),
        },
    ]
}

fn categories(tags: &[&str]) -> BTreeSet<String> {
    tags.iter().map(|t| t.to_string()).collect()
}

pub fn builtin_dataset_descriptors() -> Vec<DatasetDescriptor> {
    vec![
        DatasetDescriptor {
            name: "X-IIoTID".into(),
            path: "data/x-iiotid.csv".into(),
            size_gb: 0.38,
            record_count: 820_000,
            n_features: 65,
            label_columns: vec!["class3".into(), "class2".into(), "class1".into()],
            benign_label_value: "Normal".into(),
            attack_categories: categories(&["IG", "IT", "DS"]),
            format: DatasetFormat::Csv,
        },
        DatasetDescriptor {
            name: "EdgeIIoTset".into(),
            path: "data/edge-iiotset.csv".into(),
            size_gb: 1.2,
            record_count: 72_000_000,
            n_features: 46,
            label_columns: vec!["Attack_type".into(), "Attack_label".into()],
            benign_label_value: "Normal".into(),
            attack_categories: categories(&["IG", "DS"]),
            format: DatasetFormat::Csv,
        },
        DatasetDescriptor {
            name: "TON-IoT".into(),
            path: "data/ton-iot.csv".into(),
            size_gb: 3.68,
            record_count: 223_000_000,
            n_features: 44,
            label_columns: vec!["type".into(), "label".into()],
            benign_label_value: "normal".into(),
            attack_categories: categories(&["IT", "DS"]),
            format: DatasetFormat::Csv,
        },
        DatasetDescriptor {
            name: "CIC IoT 2023".into(),
            path: "data/ciciot2023.csv".into(),
            size_gb: 12.8,
            record_count: 46_690_000,
            n_features: 47,
            label_columns: vec!["label".into()],
            benign_label_value: "BenignTraffic".into(),
            attack_categories: categories(&["IG", "IT", "DS"]),
            format: DatasetFormat::Csv,
        },
    ]
}

/// Merged set of models, hardware and datasets. Immutable once built.
#[derive(Debug, Clone)]
pub struct Registry {
    models: Vec<ModelProfile>,
    hardware: Vec<HardwareProfile>,
    datasets: Vec<DatasetDescriptor>,
}

impl Default for Registry {
    fn default() -> Self {
        Self::builtin()
    }
}

fn position<T>(items: &[T], name: &str, key: impl Fn(&T) -> &str) -> Option<usize> {
    items.iter().position(|i| key(i).eq_ignore_ascii_case(name))
}

fn upsert<T>(items: &mut Vec<T>, item: T, key: impl Fn(&T) -> &str) {
    match position(items, key(&item), &key) {
        Some(i) => items[i] = item,
        None => items.push(item),
    }
}

impl Registry {
    pub fn builtin() -> Self {
        Self {
            models: builtin_model_profiles(),
            hardware: builtin_hardware_profiles(),
            datasets: builtin_dataset_descriptors(),
        }
    }

    /// Built-ins merged with the profiles defined in `path`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, RegistryError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| RegistryError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::builtin().merged_with(&text)
    }

    /// Applies a profile document on top of this registry.
    pub fn merged_with(mut self, text: &str) -> Result<Self, RegistryError> {
        for block in parse_blocks(text)? {
            match block.kind {
                BlockKind::Model => {
                    let m = block.into_model(&self.models)?;
                    m.validate()?;
                    upsert(&mut self.models, m, |m| &m.name);
                }
                BlockKind::Hardware => {
                    let h = block.into_hardware(&self.hardware)?;
                    h.validate()?;
                    upsert(&mut self.hardware, h, |h| &h.name);
                }
                BlockKind::Dataset => {
                    let d = block.into_dataset(&self.datasets)?;
                    d.validate()?;
                    upsert(&mut self.datasets, d, |d| &d.name);
                }
            }
        }
        Ok(self)
    }

    pub fn models(&self) -> &[ModelProfile] {
        &self.models
    }

    pub fn hardware(&self) -> &[HardwareProfile] {
        &self.hardware
    }

    pub fn datasets(&self) -> &[DatasetDescriptor] {
        &self.datasets
    }

    pub fn model(&self, name: &str) -> Option<&ModelProfile> {
        position(&self.models, name, |m| &m.name).map(|i| &self.models[i])
    }

    pub fn hardware_profile(&self, name: &str) -> Option<&HardwareProfile> {
        position(&self.hardware, name, |h| &h.name).map(|i| &self.hardware[i])
    }

    pub fn dataset(&self, name: &str) -> Option<&DatasetDescriptor> {
        position(&self.datasets, name, |d| &d.name).map(|i| &self.datasets[i])
    }

    /// Hardware profiles that are not variants of another device.
    pub fn primary_hardware(&self) -> impl Iterator<Item = &HardwareProfile> {
        self.hardware.iter().filter(|h| h.variant_of.is_none())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BlockKind {
    Model,
    Hardware,
    Dataset,
}

impl BlockKind {
    fn label(self) -> &'static str {
        match self {
            BlockKind::Model => "model",
            BlockKind::Hardware => "hardware",
            BlockKind::Dataset => "dataset",
        }
    }
}

impl fmt::Display for BlockKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug)]
struct Entry {
    line: usize,
    key: String,
    value: String,
}

#[derive(Debug)]
struct Block {
    kind: BlockKind,
    line: usize,
    entries: Vec<Entry>,
}

fn parse_blocks(text: &str) -> Result<Vec<Block>, RegistryError> {
    let mut blocks: Vec<Block> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if content.is_empty() {
            continue;
        }
        if let Some(header) = content.strip_prefix('[') {
            let header = header.strip_suffix(']').ok_or_else(|| RegistryError::Parse {
                line,
                message: format!("unterminated block header `{content}`"),
            })?;
            let kind = match header.trim() {
                "model" => BlockKind::Model,
                "hardware" => BlockKind::Hardware,
                "dataset" => BlockKind::Dataset,
                other => {
                    return Err(RegistryError::Parse {
                        line,
                        message: format!("unknown block type `[{other}]`"),
                    })
                }
            };
            blocks.push(Block {
                kind,
                line,
                entries: Vec::new(),
            });
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| RegistryError::Parse {
            line,
            message: format!("expected `key = value`, found `{content}`"),
        })?;
        let block = blocks.last_mut().ok_or_else(|| RegistryError::Parse {
            line,
            message: "key/value line outside of a block".into(),
        })?;
        let key = key.trim().to_string();
        if block.entries.iter().any(|e| e.key == key) {
            return Err(RegistryError::Parse {
                line,
                message: format!("duplicate key `{key}`"),
            });
        }
        block.entries.push(Entry {
            line,
            key,
            value: value.trim().to_string(),
        });
    }
    Ok(blocks)
}

fn parse_value<T: std::str::FromStr>(entry: &Entry) -> Result<T, RegistryError>
where
    T::Err: fmt::Display,
{
    entry
        .value
        .replace('_', "")
        .parse::<T>()
        .map_err(|e| RegistryError::Field {
            line: entry.line,
            field: entry.key.clone(),
            message: format!("cannot parse `{}`: {e}", entry.value),
        })
}

fn parse_list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

fn optional(value: &str) -> Option<String> {
    match value {
        "" | "none" | "-" => None,
        v => Some(v.to_string()),
    }
}

impl Block {
    fn name(&self) -> Result<&str, RegistryError> {
        self.entries
            .iter()
            .find(|e| e.key == "name")
            .map(|e| e.value.as_str())
            .ok_or(RegistryError::MissingField {
                line: self.line,
                block: self.kind.label(),
                field: "name",
            })
    }

    fn missing(&self, field: &'static str) -> RegistryError {
        RegistryError::MissingField {
            line: self.line,
            block: self.kind.label(),
            field,
        }
    }

    fn unknown(&self, entry: &Entry) -> RegistryError {
        RegistryError::UnknownKey {
            line: entry.line,
            block: self.kind.label(),
            key: entry.key.clone(),
        }
    }

    fn into_model(self, existing: &[ModelProfile]) -> Result<ModelProfile, RegistryError> {
        let name = self.name()?.to_string();
        let base = position(existing, &name, |m| &m.name).map(|i| existing[i].clone());
        let overriding = base.is_some();
        let mut m = base.unwrap_or(ModelProfile {
            name: name.clone(),
            distilled_from: None,
            hidden_size: 0,
            n_heads: 0,
            n_layers: 0,
            vocab_size: 0,
            n_params: 0,
            reference_ram_mb: None,
        });
        let mut seen = BTreeSet::new();
        for e in &self.entries {
            match e.key.as_str() {
                "name" => {}
                "distilled_from" => m.distilled_from = optional(&e.value),
                "hidden_size" => m.hidden_size = parse_value(e)?,
                "n_heads" => m.n_heads = parse_value(e)?,
                "n_layers" => m.n_layers = parse_value(e)?,
                "vocab_size" => m.vocab_size = parse_value(e)?,
                "n_params" => m.n_params = parse_value(e)?,
                "reference_ram_mb" => {
                    m.reference_ram_mb = optional(&e.value).map(|_| parse_value(e)).transpose()?
                }
                _ => return Err(self.unknown(e)),
            }
            seen.insert(e.key.as_str());
        }
        if !overriding {
            for field in ["hidden_size", "n_heads", "n_layers", "vocab_size", "n_params"] {
                if !seen.contains(field) {
                    return Err(self.missing(field));
                }
            }
        }
        Ok(m)
    }

    fn into_hardware(self, existing: &[HardwareProfile]) -> Result<HardwareProfile, RegistryError> {
        let name = self.name()?.to_string();
        let base = position(existing, &name, |h| &h.name).map(|i| existing[i].clone());
        let overriding = base.is_some();
        let mut h = base.unwrap_or(HardwareProfile {
            name,
            units: Vec::new(),
            ram_capacity_bytes: 0,
            variant_of: None,
        });
        let mut has_ram = false;
        for e in &self.entries {
            if let Some(unit_name) = e.key.strip_prefix("unit.") {
                if unit_name.is_empty() {
                    return Err(self.unknown(e));
                }
                let flops: f64 = parse_value(e)?;
                match h.units.iter_mut().find(|u| u.name == unit_name) {
                    Some(u) => u.flops_per_second = flops,
                    None => h.units.push(ExecutionUnit {
                        name: unit_name.to_string(),
                        flops_per_second: flops,
                    }),
                }
                continue;
            }
            match e.key.as_str() {
                "name" => {}
                "ram_bytes" => {
                    h.ram_capacity_bytes = parse_value(e)?;
                    has_ram = true;
                }
                "variant_of" => h.variant_of = optional(&e.value),
                _ => return Err(self.unknown(e)),
            }
        }
        if !overriding && !has_ram {
            return Err(self.missing("ram_bytes"));
        }
        Ok(h)
    }

    fn into_dataset(self, existing: &[DatasetDescriptor]) -> Result<DatasetDescriptor, RegistryError> {
        let name = self.name()?.to_string();
        let base = position(existing, &name, |d| &d.name).map(|i| existing[i].clone());
        let overriding = base.is_some();
        let mut d = base.unwrap_or(DatasetDescriptor {
            name,
            path: PathBuf::new(),
            size_gb: 0.0,
            record_count: 0,
            n_features: 0,
            label_columns: Vec::new(),
            benign_label_value: String::new(),
            attack_categories: BTreeSet::new(),
            format: DatasetFormat::Csv,
        });
        let mut seen = BTreeSet::new();
        for e in &self.entries {
            match e.key.as_str() {
                "name" => {}
                "path" => d.path = PathBuf::from(&e.value),
                "size_gb" => d.size_gb = parse_value(e)?,
                "record_count" => d.record_count = parse_value(e)?,
                "n_features" => d.n_features = parse_value(e)?,
                "label_columns" => d.label_columns = parse_list(&e.value),
                "benign_label_value" => d.benign_label_value = e.value.clone(),
                "attack_categories" => d.attack_categories = parse_list(&e.value).into_iter().collect(),
                "format" => {
                    if !e.value.eq_ignore_ascii_case("csv") {
                        return Err(RegistryError::Field {
                            line: e.line,
                            field: e.key.clone(),
                            message: format!("unsupported format `{}` (only csv)", e.value),
                        });
                    }
                }
                _ => return Err(self.unknown(e)),
            }
            seen.insert(e.key.as_str());
        }
        if !overriding {
            for field in ["path", "n_features", "label_columns", "benign_label_value"] {
                if !seen.contains(field) {
                    return Err(self.missing(field));
                }
            }
        }
        Ok(d)
    }
}
