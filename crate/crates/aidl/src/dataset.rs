//! KDD99 / NSL-KDD connection records: parsing, statistics, and encoding.
//!
//! A record is 41 features plus an attack-name label; NSL-KDD lines carry a
//! trailing difficulty score that is parsed and kept but never modeled.
//! Features F2 (protocol type), F3 (service) and F4 (flag) are symbolic,
//! the remaining 38 are numeric, 15 of which are rates constrained to [0,1].

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::Vector;

pub const FEATURE_COUNT: usize = 41;
pub const NUMERIC_COUNT: usize = 38;

/// 0-based indices of the symbolic features: protocol type, service, flag.
pub const SYMBOLIC_INDICES: [usize; 3] = [1, 2, 3];

/// Rate features (serror/rerror/srv rates and the dst-host rate block) are
/// fractions in [0,1]; everything else numeric is a nonnegative count,
/// byte total or duration.
fn is_rate_feature(index: usize) -> bool {
    matches!(index, 24..=30 | 33..=40)
}

fn is_symbolic_feature(index: usize) -> bool {
    SYMBOLIC_INDICES.contains(&index)
}

/// Input layout hint. Both layouts share the 41-feature core; lines with
/// 42 fields (features + label) or 43 (with the NSL difficulty score)
/// parse under either, and a trailing '.' on the label (the KDD99 surface
/// form) is always stripped, so a misdeclared format still parses
/// correctly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    /// KDD Cup 99 layout: 42 comma-separated fields, labels end in '.'.
    Kdd,
    /// NSL-KDD layout: 43 fields, the 43rd being the difficulty score.
    Nsl,
}

#[derive(Debug, Error, PartialEq)]
pub enum DatasetError {
    #[error("expected 42 or 43 fields, found {found}")]
    FieldCount { found: usize },
    #[error("field {field}: cannot parse {token:?} as a number")]
    NumericParse { field: usize, token: String },
    #[error("field {field}: value {value} outside the allowed range {range}")]
    ValueOutOfRange {
        field: usize,
        value: f64,
        range: &'static str,
    },
    #[error("field {field}: empty value")]
    EmptyField { field: usize },
    #[error("dataset is empty")]
    EmptyDataset,
}

/// A parse failure annotated with its 1-based line number.
#[derive(Debug, Error, PartialEq)]
#[error("line {line}: {source}")]
pub struct LineParseError {
    pub line: usize,
    #[source]
    pub source: DatasetError,
}

/// One raw feature value. Numeric values are finite and nonnegative by
/// construction; -0.0 is normalized to 0.0 so equality and hashing agree.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureValue {
    Symbolic(String),
    Numeric(f64),
}

impl Eq for FeatureValue {}

impl Hash for FeatureValue {
    fn hash<H: Hasher>(&self, state: &mut H) {
        match self {
            FeatureValue::Symbolic(s) => {
                state.write_u8(0);
                s.hash(state);
            }
            FeatureValue::Numeric(v) => {
                state.write_u8(1);
                v.to_bits().hash(state);
            }
        }
    }
}

/// One parsed connection record.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectionRecord {
    features: Vec<FeatureValue>,
    label: String,
    difficulty: Option<u32>,
}

impl ConnectionRecord {
    pub fn features(&self) -> &[FeatureValue] {
        &self.features
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn difficulty(&self) -> Option<u32> {
        self.difficulty
    }

    pub fn category(&self) -> AttackCategory {
        categorize_label(&self.label)
    }

    pub fn is_attack(&self) -> bool {
        self.category() != AttackCategory::Normal
    }

    /// Duplicate identity: all 41 features and the label, difficulty excluded.
    fn dedup_key(&self) -> (&[FeatureValue], &str) {
        (&self.features, &self.label)
    }
}

/// Parse one comma-separated line: 42 fields (41 features + label) or 43
/// (with a trailing difficulty score, captured when present). A trailing
/// '.' on the label is stripped.
pub fn parse_record(line: &str, _format: DatasetFormat) -> Result<ConnectionRecord, DatasetError> {
    let line = line.trim_end_matches(['\r', '\n']);
    let fields: Vec<&str> = line.split(',').collect();
    let n = fields.len();
    if n != 42 && n != 43 {
        return Err(DatasetError::FieldCount { found: n });
    }

    let mut features = Vec::with_capacity(FEATURE_COUNT);
    for (idx, token) in fields[..FEATURE_COUNT].iter().enumerate() {
        let field = idx + 1; // report 1-based F-numbers
        if is_symbolic_feature(idx) {
            if token.is_empty() {
                return Err(DatasetError::EmptyField { field });
            }
            features.push(FeatureValue::Symbolic((*token).to_string()));
        } else {
            let value: f64 = token
                .parse()
                .map_err(|_| DatasetError::NumericParse {
                    field,
                    token: (*token).to_string(),
                })?;
            if !value.is_finite() || value < 0.0 {
                return Err(DatasetError::ValueOutOfRange {
                    field,
                    value,
                    range: ">= 0",
                });
            }
            if is_rate_feature(idx) && value > 1.0 {
                return Err(DatasetError::ValueOutOfRange {
                    field,
                    value,
                    range: "[0, 1]",
                });
            }
            // normalize -0.0 so duplicate detection treats it as 0.0
            features.push(FeatureValue::Numeric(if value == 0.0 { 0.0 } else { value }));
        }
    }

    let label = fields[FEATURE_COUNT].trim_end_matches('.');
    if label.is_empty() {
        return Err(DatasetError::EmptyField { field: 42 });
    }

    let difficulty = if n == 43 {
        Some(fields[42].parse().map_err(|_| DatasetError::NumericParse {
            field: 43,
            token: fields[42].to_string(),
        })?)
    } else {
        None
    };

    Ok(ConnectionRecord {
        features,
        label: label.to_string(),
        difficulty,
    })
}

/// Parse every line of a reader, skipping blank lines, with 1-based line
/// numbers attached to failures.
pub fn parse_reader<R: BufRead>(
    reader: R,
    format: DatasetFormat,
) -> Result<Vec<ConnectionRecord>, LineParseError> {
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| LineParseError {
            line: i + 1,
            source: DatasetError::NumericParse {
                field: 0,
                token: e.to_string(),
            },
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record = parse_record(&line, format).map_err(|source| LineParseError {
            line: i + 1,
            source,
        })?;
        records.push(record);
    }
    Ok(records)
}

pub fn parse_file(
    path: &Path,
    format: DatasetFormat,
) -> std::io::Result<Result<Vec<ConnectionRecord>, LineParseError>> {
    let file = std::fs::File::open(path)?;
    Ok(parse_reader(std::io::BufReader::new(file), format))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AttackCategory {
    #[serde(rename = "DoS")]
    Dos,
    #[serde(rename = "R2L")]
    R2l,
    #[serde(rename = "U2R")]
    U2r,
    Probe,
    Normal,
    Unknown,
}

impl fmt::Display for AttackCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttackCategory::Dos => "DoS",
            AttackCategory::R2l => "R2L",
            AttackCategory::U2r => "U2R",
            AttackCategory::Probe => "Probe",
            AttackCategory::Normal => "Normal",
            AttackCategory::Unknown => "Unknown",
        })
    }
}

const DOS_LABELS: &[&str] = &[
    "back",
    "land",
    "neptune",
    "pod",
    "smurf",
    "teardrop",
    "mailbomb",
    "proccesstable",
    "processtable",
    "udpstorm",
    "apache2",
    "worm",
];

const R2L_LABELS: &[&str] = &[
    "guess_password",
    "guess_passwd",
    "ftp_write",
    "imap",
    "phf",
    "multihop",
    "warezmaster",
    "xlock",
    "xsnoop",
    "snmpguess",
    "snmpgetattack",
    "httpptunnel",
    "httptunnel",
    "sendmail",
    "named",
];

const U2R_LABELS: &[&str] = &[
    "buffer_overflow",
    "loadmodule",
    "rootkit",
    "perl",
    "sqlattack",
    "xterm",
    "ps",
];

const PROBE_LABELS: &[&str] = &["satan", "ipsweep", "nmap", "portsweep", "mscan", "saint"];

/// Map an attack-name label to its category. Matching is case-insensitive
/// and ignores a trailing '.'; unlisted labels map to `Unknown`.
pub fn categorize_label(label: &str) -> AttackCategory {
    let normalized = label.trim_end_matches('.').to_ascii_lowercase();
    if normalized == "normal" {
        AttackCategory::Normal
    } else if DOS_LABELS.contains(&normalized.as_str()) {
        AttackCategory::Dos
    } else if R2L_LABELS.contains(&normalized.as_str()) {
        AttackCategory::R2l
    } else if U2R_LABELS.contains(&normalized.as_str()) {
        AttackCategory::U2r
    } else if PROBE_LABELS.contains(&normalized.as_str()) {
        AttackCategory::Probe
    } else {
        AttackCategory::Unknown
    }
}

/// Sample and distinct-sample counts for one class of interest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StatsRow {
    pub samples: u64,
    pub distinct: u64,
}

impl StatsRow {
    /// Possible reduction percentage, 100 * (1 - distinct/samples).
    pub fn reduction(&self) -> f64 {
        if self.samples == 0 {
            0.0
        } else {
            100.0 * (1.0 - self.distinct as f64 / self.samples as f64)
        }
    }
}

/// Truncate a percentage to two decimals. The published benchmark
/// statistics truncate rather than round (e.g. 88.269..% is reported as
/// 88.26%), so the tables here do the same.
pub fn truncate_pct(value: f64) -> f64 {
    (value * 100.0).floor() / 100.0
}

/// Redundancy statistics plus per-label sample counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub attacks: StatsRow,
    pub normal: StatsRow,
    pub total: StatsRow,
    /// Label -> sample count, descending by count then ascending by label.
    pub label_counts: Vec<(String, u64)>,
}

/// Count samples and distinct samples overall and per class. Two records
/// are duplicates when all 41 features and the label agree; the NSL-KDD
/// difficulty score is ignored.
pub fn dedup_stats(records: &[ConnectionRecord]) -> DatasetStats {
    // the duplicate key includes the label, so the per-class distinct sets
    // partition the overall distinct set
    let mut attack_set: HashSet<(&[FeatureValue], &str)> = HashSet::new();
    let mut normal_set: HashSet<(&[FeatureValue], &str)> = HashSet::new();
    let mut attacks = StatsRow::default();
    let mut normal = StatsRow::default();
    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();

    for record in records {
        let key = record.dedup_key();
        *counts.entry(record.label()).or_insert(0) += 1;
        if record.is_attack() {
            attacks.samples += 1;
            attack_set.insert(key);
        } else {
            normal.samples += 1;
            normal_set.insert(key);
        }
    }
    attacks.distinct = attack_set.len() as u64;
    normal.distinct = normal_set.len() as u64;

    let total = StatsRow {
        samples: attacks.samples + normal.samples,
        distinct: attacks.distinct + normal.distinct,
    };
    DatasetStats {
        attacks,
        normal,
        total,
        label_counts: sorted_counts(counts),
    }
}

/// Per-label and per-category sample counts, descending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDistribution {
    pub labels: Vec<(String, u64)>,
    pub categories: Vec<(AttackCategory, u64)>,
}

pub fn class_distribution(records: &[ConnectionRecord]) -> ClassDistribution {
    let mut labels: BTreeMap<&str, u64> = BTreeMap::new();
    let mut categories: BTreeMap<AttackCategory, u64> = BTreeMap::new();
    for record in records {
        *labels.entry(record.label()).or_insert(0) += 1;
        *categories.entry(record.category()).or_insert(0) += 1;
    }
    let mut cats: Vec<(AttackCategory, u64)> = categories.into_iter().collect();
    cats.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    ClassDistribution {
        labels: sorted_counts(labels),
        categories: cats,
    }
}

fn sorted_counts(counts: BTreeMap<&str, u64>) -> Vec<(String, u64)> {
    let mut out: Vec<(String, u64)> = counts
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
    out.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    out
}

/// Per-feature encoding rule learned from training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureSchema {
    /// Sorted vocabulary of the distinct values seen in training; each
    /// value owns one one-hot slot.
    Symbolic { vocab: Vec<String> },
    /// Min/max over training data; encoding is min-max scaling to [0,1].
    /// A constant feature (min == max) always encodes to 0.
    Numeric { min: f64, max: f64 },
}

/// Encoding schema covering all 41 features in file order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EncodingSchema {
    features: Vec<FeatureSchema>,
}

impl EncodingSchema {
    pub fn features(&self) -> &[FeatureSchema] {
        &self.features
    }

    /// Total encoded dimensionality: one slot per numeric feature plus the
    /// summed vocabulary sizes.
    pub fn dimension(&self) -> usize {
        self.features
            .iter()
            .map(|f| match f {
                FeatureSchema::Symbolic { vocab } => vocab.len(),
                FeatureSchema::Numeric { .. } => 1,
            })
            .sum()
    }

    /// Shape validation for schemas loaded from disk.
    pub fn validate(&self) -> Result<(), String> {
        if self.features.len() != FEATURE_COUNT {
            return Err(format!(
                "schema has {} feature entries, expected {FEATURE_COUNT}",
                self.features.len()
            ));
        }
        for (idx, feature) in self.features.iter().enumerate() {
            match feature {
                FeatureSchema::Symbolic { vocab } => {
                    if !is_symbolic_feature(idx) {
                        return Err(format!("feature F{} should be numeric", idx + 1));
                    }
                    if vocab.windows(2).any(|w| w[0] >= w[1]) {
                        return Err(format!("vocabulary of F{} is not sorted/distinct", idx + 1));
                    }
                }
                FeatureSchema::Numeric { min, max } => {
                    if is_symbolic_feature(idx) {
                        return Err(format!("feature F{} should be symbolic", idx + 1));
                    }
                    if !(min.is_finite() && max.is_finite() && min <= max) {
                        return Err(format!("invalid range for F{}", idx + 1));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Learn vocabularies and numeric ranges from training records.
pub fn fit_schema(records: &[ConnectionRecord]) -> Result<EncodingSchema, DatasetError> {
    if records.is_empty() {
        return Err(DatasetError::EmptyDataset);
    }
    let mut features = Vec::with_capacity(FEATURE_COUNT);
    for idx in 0..FEATURE_COUNT {
        if is_symbolic_feature(idx) {
            let mut vocab: Vec<String> = records
                .iter()
                .filter_map(|r| match &r.features[idx] {
                    FeatureValue::Symbolic(s) => Some(s.clone()),
                    FeatureValue::Numeric(_) => None,
                })
                .collect::<std::collections::BTreeSet<_>>()
                .into_iter()
                .collect();
            vocab.shrink_to_fit();
            features.push(FeatureSchema::Symbolic { vocab });
        } else {
            let mut min = f64::INFINITY;
            let mut max = f64::NEG_INFINITY;
            for record in records {
                if let FeatureValue::Numeric(v) = record.features[idx] {
                    min = min.min(v);
                    max = max.max(v);
                }
            }
            features.push(FeatureSchema::Numeric { min, max });
        }
    }
    Ok(EncodingSchema { features })
}

/// Dense encoded sample: scaled features, binary target, category for
/// reporting.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub x: Vector,
    /// True iff the record is an attack (any non-Normal category).
    pub y: bool,
    pub category: AttackCategory,
}

impl FeatureVector {
    /// The target as the 0/1 real the loss consumes.
    pub fn target(&self) -> f64 {
        if self.y {
            1.0
        } else {
            0.0
        }
    }
}

/// Encode a record against a fitted schema. Numeric features are min-max
/// scaled and clamped to [0,1]; symbolic features one-hot encode, with
/// values unseen at training time yielding an all-zero block.
pub fn encode(record: &ConnectionRecord, schema: &EncodingSchema) -> FeatureVector {
    let mut x = Vec::with_capacity(schema.dimension());
    for (feature, rule) in record.features.iter().zip(schema.features.iter()) {
        match (feature, rule) {
            (FeatureValue::Numeric(v), FeatureSchema::Numeric { min, max }) => {
                if min == max {
                    x.push(0.0);
                } else {
                    x.push(((v - min) / (max - min)).clamp(0.0, 1.0));
                }
            }
            (FeatureValue::Symbolic(s), FeatureSchema::Symbolic { vocab }) => {
                let hit = vocab.binary_search(s).ok();
                for i in 0..vocab.len() {
                    x.push(if hit == Some(i) { 1.0 } else { 0.0 });
                }
            }
            // parse and fit share the same symbolic/numeric layout, so a
            // kind mismatch cannot happen for records produced by this module
            _ => unreachable!("feature kind mismatch between record and schema"),
        }
    }
    let category = record.category();
    FeatureVector {
        x: Vector::from_vec(x),
        y: category != AttackCategory::Normal,
        category,
    }
}
