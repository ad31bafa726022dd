//! Dataset loading, label encoding, record serialization, splitting and
//! the synthetic flow generator.
//!
//! A prepared record's text is the space-joined list of `name=value`
//! pairs over the feature columns in header order. Inside names and
//! values, `\`, `=`, space, tab, CR and LF are backslash-escaped, and an
//! empty cell is written as the `__missing__` token.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::registry::{DatasetDescriptor, DatasetFormat};

pub const MISSING_TOKEN: &str = "__missing__";
pub const DEFAULT_TRAIN_RATIO: f64 = 0.6;
pub const DEFAULT_FEW_SHOT_LIMIT: usize = 30_000;
pub const DEFAULT_FOLDS: usize = 5;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("schema error: missing column(s) {missing:?}")]
    MissingColumns { missing: Vec<String> },
    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("cannot encode unseen label `{value}` in column `{column}`")]
    UnseenLabel { column: String, value: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// String cells with a header; every row has one cell per column.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RawTable {
    pub column_names: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl RawTable {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.column_names.iter().position(|c| c == name)
    }

    pub fn column(&self, name: &str) -> Option<impl Iterator<Item = &str>> {
        let idx = self.column_index(name)?;
        Some(self.rows.iter().map(move |r| r[idx].as_str()))
    }

    /// Column indices that are not label columns, in header order.
    pub fn feature_indices(&self, descriptor: &DatasetDescriptor) -> Vec<usize> {
        (0..self.column_names.len())
            .filter(|&i| !descriptor.label_columns.contains(&self.column_names[i]))
            .collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DataError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(&self.column_names)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

pub fn load_table(path: impl AsRef<Path>, descriptor: &DatasetDescriptor) -> Result<RawTable, DataError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_err(path))?;
    read_table(BufReader::new(file), descriptor)
}

/// Reads comma-separated, quote-escaped CSV with a header row.
pub fn read_table<R: Read>(reader: R, descriptor: &DatasetDescriptor) -> Result<RawTable, DataError> {
    match descriptor.format {
        DatasetFormat::Csv => {}
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let column_names: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if column_names.is_empty() || column_names.iter().all(|c| c.is_empty()) {
        return Err(DataError::Parse {
            line: 1,
            message: "missing header row".into(),
        });
    }
    let missing: Vec<String> = descriptor
        .label_columns
        .iter()
        .filter(|l| !column_names.contains(l))
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(DataError::MissingColumns { missing });
    }
    let mut rows = Vec::new();
    for result in rdr.records() {
        let record = result?;
        if record.len() != column_names.len() {
            let line = record.position().map_or(0, |p| p.line());
            return Err(DataError::Parse {
                line,
                message: format!("expected {} cells, found {}", column_names.len(), record.len()),
            });
        }
        rows.push(record.iter().map(str::to_string).collect());
    }
    Ok(RawTable { column_names, rows })
}

/// Bijection between the distinct values of one column (sorted
/// lexicographically) and the codes `0..n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCodec {
    pub column: String,
    pub classes: Vec<String>,
}

impl LabelCodec {
    pub fn fit<'a>(column: &str, values: impl IntoIterator<Item = &'a str>) -> Self {
        let classes: BTreeSet<&str> = values.into_iter().collect();
        Self {
            column: column.to_string(),
            classes: classes.into_iter().map(str::to_string).collect(),
        }
    }

    pub fn encode(&self, value: &str) -> Result<u32, DataError> {
        self.classes
            .binary_search_by(|c| c.as_str().cmp(value))
            .map(|i| i as u32)
            .map_err(|_| DataError::UnseenLabel {
                column: self.column.clone(),
                value: value.to_string(),
            })
    }

    pub fn decode(&self, code: u32) -> Option<&str> {
        self.classes.get(code as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }
}

pub fn fit_label_codec(table: &RawTable, label_column: &str) -> Result<LabelCodec, DataError> {
    let values = table.column(label_column).ok_or_else(|| DataError::MissingColumns {
        missing: vec![label_column.to_string()],
    })?;
    Ok(LabelCodec::fit(label_column, values))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledRecord {
    pub id: u64,
    pub text: String,
    /// 0 benign, 1 attack.
    pub binary_label: u8,
    pub class_label: u32,
    /// One code per label column. Not persisted in prepared-record files.
    pub multilabel: Vec<u32>,
}

pub fn escape_component(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for ch in raw.chars() {
        match ch {
            '\\' => out.push_str("\\\\"),
            '=' => out.push_str("\\="),
            ' ' => out.push_str("\\ "),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

pub fn unescape_component(escaped: &str) -> String {
    let mut out = String::with_capacity(escaped.len());
    let mut chars = escaped.chars();
    while let Some(ch) = chars.next() {
        if ch != '\\' {
            out.push(ch);
            continue;
        }
        match chars.next() {
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some(c) => out.push(c),
            None => out.push('\\'),
        }
    }
    out
}

fn serialize_value(cell: &str) -> String {
    if cell.is_empty() {
        MISSING_TOKEN.to_string()
    } else if cell == MISSING_TOKEN {
        format!("\\{MISSING_TOKEN}")
    } else {
        escape_component(cell)
    }
}

/// Serializes `(name, value)` cells into record text.
pub fn serialize_features<'a>(cells: impl IntoIterator<Item = (&'a str, &'a str)>) -> String {
    let mut out = String::new();
    for (name, value) in cells {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(&escape_component(name));
        out.push('=');
        out.push_str(&serialize_value(value));
    }
    out
}

/// Splits record text on unescaped spaces. Tokens keep their escapes.
pub fn split_tokens(text: &str) -> impl Iterator<Item = &str> {
    let bytes = text.as_bytes();
    let mut start = 0;
    let mut i = 0;
    std::iter::from_fn(move || {
        while i < bytes.len() {
            match bytes[i] {
                b'\\' => i += 2,
                b' ' => {
                    let token = &text[start..i];
                    i += 1;
                    start = i;
                    if !token.is_empty() {
                        return Some(token);
                    }
                }
                _ => i += 1,
            }
        }
        if start < bytes.len() {
            let token = &text[start..];
            start = bytes.len();
            return Some(token);
        }
        None
    })
}

/// Inverse of [`serialize_features`]: the missing token maps back to an
/// empty cell.
pub fn parse_features(text: &str) -> Result<Vec<(String, String)>, DataError> {
    split_tokens(text)
        .map(|token| {
            let bytes = token.as_bytes();
            let mut i = 0;
            while i < bytes.len() {
                match bytes[i] {
                    b'\\' => i += 2,
                    b'=' => break,
                    _ => i += 1,
                }
            }
            if i >= bytes.len() {
                return Err(DataError::Parse {
                    line: 0,
                    message: format!("token `{token}` has no unescaped `=`"),
                });
            }
            let (name, value) = (&token[..i], &token[i + 1..]);
            let value = if value == MISSING_TOKEN {
                String::new()
            } else {
                unescape_component(value)
            };
            Ok((unescape_component(name), value))
        })
        .collect()
}

/// Serializes a table into labeled records. `primary` must be fitted on
/// the descriptor's primary label column; secondary label columns get
/// codecs fitted on this table.
pub fn prepare(
    table: &RawTable,
    descriptor: &DatasetDescriptor,
    primary: &LabelCodec,
) -> Result<Vec<LabeledRecord>, DataError> {
    let primary_name = descriptor.primary_label();
    if primary.column != primary_name {
        return Err(DataError::InvalidArgument(format!(
            "codec fitted on `{}`, expected primary label column `{primary_name}`",
            primary.column
        )));
    }
    let mut label_idx = Vec::with_capacity(descriptor.label_columns.len());
    let mut missing = Vec::new();
    for col in &descriptor.label_columns {
        match table.column_index(col) {
            Some(i) => label_idx.push(i),
            None => missing.push(col.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(DataError::MissingColumns { missing });
    }
    let mut codecs = vec![primary.clone()];
    for col in &descriptor.label_columns[1..] {
        codecs.push(fit_label_codec(table, col)?);
    }
    let features = table.feature_indices(descriptor);

    table
        .rows
        .iter()
        .enumerate()
        .map(|(id, row)| {
            let multilabel = label_idx
                .iter()
                .zip(&codecs)
                .map(|(&i, codec)| codec.encode(&row[i]))
                .collect::<Result<Vec<_>, _>>()?;
            let primary_value = &row[label_idx[0]];
            Ok(LabeledRecord {
                id: id as u64,
                text: serialize_features(
                    features
                        .iter()
                        .map(|&i| (table.column_names[i].as_str(), row[i].as_str())),
                ),
                binary_label: u8::from(*primary_value != descriptor.benign_label_value),
                class_label: multilabel[0],
                multilabel,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub seed: u64,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

impl SplitPlan {
    pub fn apply<'a, T>(&self, items: &'a [T]) -> (Vec<&'a T>, Vec<&'a T>) {
        (
            self.train_indices.iter().map(|&i| &items[i]).collect(),
            self.test_indices.iter().map(|&i| &items[i]).collect(),
        )
    }
}

fn shuffled(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx
}

/// Seeded shuffle followed by a prefix split with `round(ratio · n)`
/// training indices.
pub fn split(n: usize, ratio: f64, seed: u64) -> Result<SplitPlan, DataError> {
    if n < 2 {
        return Err(DataError::InvalidArgument(format!("split needs at least 2 records, got {n}")));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(DataError::InvalidArgument(format!("train ratio must be in (0, 1), got {ratio}")));
    }
    let n_train = ((ratio * n as f64).round() as usize).clamp(1, n - 1);
    let mut idx = shuffled(n, seed);
    let test_indices = idx.split_off(n_train);
    Ok(SplitPlan {
        seed,
        train_indices: idx,
        test_indices,
    })
}

/// Seeded uniform sample of `limit` items without replacement, kept in
/// their original order. Identity when there are at most `limit` items.
pub fn few_shot_subsample<T: Clone>(records: &[T], limit: usize, seed: u64) -> Result<Vec<T>, DataError> {
    if limit == 0 {
        return Err(DataError::InvalidArgument("few-shot limit must be >= 1".into()));
    }
    if records.len() <= limit {
        return Ok(records.to_vec());
    }
    let mut picked = index::sample(&mut ChaCha8Rng::seed_from_u64(seed), records.len(), limit).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| records[i].clone()).collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KFoldPlan {
    pub k: usize,
    pub seed: u64,
    pub folds: Vec<Vec<usize>>,
}

impl KFoldPlan {
    /// Every index outside `fold`, ascending.
    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|(f, _)| *f != fold)
            .flat_map(|(_, members)| members.iter().copied())
            .collect();
        idx.sort_unstable();
        idx
    }
}

/// Seeded shuffle, then round-robin assignment to `k` folds.
pub fn kfold_plan(n: usize, k: usize, seed: u64) -> Result<KFoldPlan, DataError> {
    if k < 2 {
        return Err(DataError::InvalidArgument(format!("k must be >= 2, got {k}")));
    }
    if n < k {
        return Err(DataError::InvalidArgument(format!("k-fold needs n >= k (n = {n}, k = {k})")));
    }
    let mut folds = vec![Vec::with_capacity(n / k + 1); k];
    for (pos, idx) in shuffled(n, seed).into_iter().enumerate() {
        folds[pos % k].push(idx);
    }
    Ok(KFoldPlan { k, seed, folds })
}

/// Descriptor used for generator output: features `f0..`, label column
/// `label` with benign value `benign`.
pub fn synthetic_descriptor(n_features: usize) -> DatasetDescriptor {
    DatasetDescriptor {
        name: "synthetic".into(),
        path: PathBuf::new(),
        size_gb: 0.0,
        record_count: 0,
        n_features,
        label_columns: vec!["label".into()],
        benign_label_value: "benign".into(),
        attack_categories: BTreeSet::new(),
        format: DatasetFormat::Csv,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_rows: usize,
    pub n_features: usize,
    pub n_informative: usize,
    pub attack_fraction: f64,
    /// Seeds the row draws.
    pub seed: u64,
    /// Seeds the structure (informative set and weights). Two datasets
    /// of the same family share their labeling rule. Defaults to `seed`.
    pub family_seed: Option<u64>,
    /// Each feature takes integer values `0..levels`.
    pub levels: u32,
    /// Probability of flipping each binary label after thresholding.
    pub label_noise: f64,
}

impl SynthConfig {
    pub fn new(n_rows: usize, n_features: usize, n_informative: usize, attack_fraction: f64, seed: u64) -> Self {
        Self {
            n_rows,
            n_features,
            n_informative,
            attack_fraction,
            seed,
            family_seed: None,
            levels: 2,
            label_noise: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub descriptor: DatasetDescriptor,
    pub table: RawTable,
    pub codec: LabelCodec,
    pub records: Vec<LabeledRecord>,
    /// Ground-truth informative feature indices, ascending.
    pub informative: Vec<usize>,
    pub weights: Vec<f64>,
}

/// Integer-valued features; the attack label is a thresholded linear
/// function of the informative features only (plus optional label flips).
/// Attack rows are named after the informative feature that contributes
/// most to their score. Rows tied with the threshold score stay benign,
/// so with few levels the attack count can fall short of the requested
/// fraction.
pub fn synth_generate(config: &SynthConfig) -> Result<SynthDataset, DataError> {
    let SynthConfig {
        n_rows,
        n_features,
        n_informative,
        attack_fraction,
        seed,
        levels,
        label_noise,
        ..
    } = *config;
    if n_features == 0 || n_informative == 0 || n_informative > n_features {
        return Err(DataError::InvalidArgument(format!(
            "need 1 <= n_informative <= n_features (got {n_informative} of {n_features})"
        )));
    }
    if !(0.0..=1.0).contains(&attack_fraction) || !(0.0..=1.0).contains(&label_noise) {
        return Err(DataError::InvalidArgument(
            "attack_fraction and label_noise must be in [0, 1]".into(),
        ));
    }
    if levels < 2 {
        return Err(DataError::InvalidArgument("levels must be >= 2".into()));
    }

    let mut family = ChaCha8Rng::seed_from_u64(config.family_seed.unwrap_or(seed) ^ 0x5eed_fa31);
    let mut informative = index::sample(&mut family, n_features, n_informative).into_vec();
    informative.sort_unstable();
    let weights: Vec<f64> = (0..n_informative)
        .map(|_| {
            let magnitude = family.gen_range(1.0..2.0);
            if family.gen_bool(0.5) {
                magnitude
            } else {
                -magnitude
            }
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let center = f64::from(levels - 1) / 2.0;
    let values: Vec<Vec<u32>> = (0..n_rows)
        .map(|_| (0..n_features).map(|_| rng.gen_range(0..levels)).collect())
        .collect();
    let contributions = |row: &[u32]| -> Vec<f64> {
        informative
            .iter()
            .zip(&weights)
            .map(|(&j, w)| w * (f64::from(row[j]) - center))
            .collect()
    };
    let scores: Vec<f64> = values.iter().map(|r| contributions(r).iter().sum()).collect();

    let n_attack = (attack_fraction * n_rows as f64).round() as usize;
    let threshold = if n_attack == 0 {
        f64::INFINITY
    } else if n_attack >= n_rows {
        f64::NEG_INFINITY
    } else {
        let mut sorted = scores.clone();
        sorted.sort_by(f64::total_cmp);
        sorted[n_rows - n_attack - 1]
    };

    let mut column_names: Vec<String> = (0..n_features).map(|j| format!("f{j}")).collect();
    column_names.push("label".into());
    let rows = values
        .iter()
        .zip(&scores)
        .map(|(row, &score)| {
            let mut attack = score > threshold;
            if label_noise > 0.0 && rng.gen_bool(label_noise) {
                attack = !attack;
            }
            let label = if attack {
                let c = contributions(row);
                let top = (0..c.len())
                    .max_by(|&a, &b| c[a].total_cmp(&c[b]).then(b.cmp(&a)))
                    .unwrap_or(0);
                format!("attack_{top}")
            } else {
                "benign".to_string()
            };
            let mut cells: Vec<String> = row.iter().map(u32::to_string).collect();
            cells.push(label);
            cells
        })
        .collect();
    let table = RawTable { column_names, rows };
    let descriptor = synthetic_descriptor(n_features);
    let codec = fit_label_codec(&table, "label")?;
    let records = prepare(&table, &descriptor, &codec)?;
    Ok(SynthDataset {
        descriptor,
        table,
        codec,
        records,
        informative,
        weights,
    })
}

/// Writes `id<TAB>binary_label<TAB>class_label<TAB>text` lines.
pub fn write_prepared<W: Write>(writer: W, records: &[LabeledRecord]) -> std::io::Result<()> {
    let mut w = BufWriter::new(writer);
    for r in records {
        writeln!(w, "{}\t{}\t{}\t{}", r.id, r.binary_label, r.class_label, r.text)?;
    }
    w.flush()
}

pub fn save_prepared(path: impl AsRef<Path>, records: &[LabeledRecord]) -> Result<(), DataError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(io_err(path))?;
    write_prepared(file, records).map_err(io_err(path))
}

pub fn read_prepared<R: BufRead>(reader: R) -> Result<Vec<LabeledRecord>, DataError> {
    let mut records = Vec::new();
    let mut seen = BTreeMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx as u64 + 1;
        let line = line.map_err(|e| DataError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.is_empty() {
            continue;
        }
        let bad = |message: String| DataError::Parse { line: line_no, message };
        let mut fields = line.splitn(4, '\t');
        let mut next = |what: &str| fields.next().ok_or_else(|| bad(format!("missing {what} field")));
        let id: u64 = next("id")?.parse().map_err(|e| bad(format!("bad id: {e}")))?;
        let binary_label: u8 = match next("binary_label")? {
            "0" => 0,
            "1" => 1,
            other => return Err(bad(format!("binary label must be 0 or 1, found `{other}`"))),
        };
        let class_label: u32 = next("class_label")?
            .parse()
            .map_err(|e| bad(format!("bad class label: {e}")))?;
        let text = next("text")?.to_string();
        if let Some(prev) = seen.insert(id, line_no) {
            return Err(bad(format!("duplicate id {id} (first seen at line {prev})")));
        }
        records.push(LabeledRecord {
            id,
            text,
            binary_label,
            class_label,
            multilabel: Vec::new(),
        });
    }
    Ok(records)
}

pub fn load_prepared(path: impl AsRef<Path>) -> Result<Vec<LabeledRecord>, DataError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_err(path))?;
    read_prepared(BufReader::new(file))
}
