//! Versioned JSON artifacts: model files, encoding schemas, evaluation
//! reports and training traces.
//!
//! Every real number is written as a decimal with 17 significant digits
//! (`{:.16e}`), which round-trips any finite 64-bit value bit-exactly and
//! keeps the files diffable. Writes go to a sibling temp file that is
//! renamed into place, so a crashed run never leaves a partial artifact.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::EncodingSchema;
use crate::lstm::{LstmParams, NetConfig};
use crate::svm::{SvmConfig, SvmModel};
use crate::training::{TrainConfig, TrainTrace};

pub const MODEL_FORMAT: &str = "aidl-model/1";
pub const SCHEMA_FORMAT: &str = "aidl-schema/1";
pub const REPORT_FORMAT: &str = "aidl-report/1";
pub const TRACE_FORMAT: &str = "aidl-trace/1";

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unrecognized format tag {found:?}, expected {expected:?}")]
    UnknownFormat { found: String, expected: &'static str },
    #[error("inconsistent artifact: {0}")]
    Invalid(String),
}

/// JSON formatter that renders every finite f64 with 17 significant
/// digits. Non-finite values never reach artifacts (training errors out
/// first), but are written as null like the default formatter would.
struct Decimal17;

impl serde_json::ser::Formatter for Decimal17 {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        if value.is_finite() {
            write!(writer, "{value:.16e}")
        } else {
            writer.write_all(b"null")
        }
    }
}

/// Compact JSON with decimal-17 reals.
pub fn to_json_string(value: &impl Serialize) -> Result<String, ArtifactError> {
    let mut buf = Vec::new();
    let mut serializer = serde_json::Serializer::with_formatter(&mut buf, Decimal17);
    value.serialize(&mut serializer)?;
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

/// Serialize to a sibling `.tmp` file and rename over the target.
pub fn write_json_atomic(path: &Path, value: &impl Serialize) -> Result<(), ArtifactError> {
    write_atomic(path, to_json_string(value)?.as_bytes())
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ArtifactError> {
    let mut temp = path.as_os_str().to_owned();
    temp.push(".tmp");
    let temp = std::path::PathBuf::from(temp);
    {
        let mut file = fs::File::create(&temp)?;
        file.write_all(bytes)?;
        file.sync_all()?;
    }
    fs::rename(&temp, path)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, ArtifactError> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// A complete aidl-schema/1 document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaDoc {
    pub format: String,
    pub features: EncodingSchema,
}

impl SchemaDoc {
    pub fn new(features: EncodingSchema) -> Self {
        SchemaDoc {
            format: SCHEMA_FORMAT.to_string(),
            features,
        }
    }

    pub fn validate(&self) -> Result<(), ArtifactError> {
        if self.format != SCHEMA_FORMAT {
            return Err(ArtifactError::UnknownFormat {
                found: self.format.clone(),
                expected: SCHEMA_FORMAT,
            });
        }
        self.features.validate().map_err(ArtifactError::Invalid)
    }
}

/// SHA-256 over the canonical (decimal-17, compact) schema document bytes.
pub fn schema_checksum(schema: &EncodingSchema) -> String {
    let doc = SchemaDoc::new(schema.clone());
    let canonical = to_json_string(&doc).expect("schema serializes");
    let digest = Sha256::digest(canonical.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Lstm,
    Svm,
}

impl ModelKind {
    /// Row label used in comparison tables.
    pub fn methodology(&self) -> &'static str {
        match self {
            ModelKind::Lstm => "Deep learning (LSTM)",
            ModelKind::Svm => "SVM",
        }
    }

    /// Decision threshold when none is given: probability 0.5 for the
    /// LSTM head, raw margin 0 for the SVM.
    pub fn default_threshold(&self) -> f64 {
        match self {
            ModelKind::Lstm => 0.5,
            ModelKind::Svm => 0.0,
        }
    }
}

/// Architecture plus parameters, tagged by model kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
#[allow(clippy::large_enum_variant)]
pub enum ModelPayload {
    Lstm {
        input_dim: usize,
        net: NetConfig,
        training: TrainConfig,
        params: LstmParams,
    },
    Svm {
        input_dim: usize,
        config: SvmConfig,
        model: SvmModel,
    },
}

impl ModelPayload {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelPayload::Lstm { .. } => ModelKind::Lstm,
            ModelPayload::Svm { .. } => ModelKind::Svm,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            ModelPayload::Lstm { input_dim, .. } | ModelPayload::Svm { input_dim, .. } => {
                *input_dim
            }
        }
    }
}

/// An aidl-model/1 document: schema, architecture, parameters, and the
/// training configuration snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub created_at: String,
    pub schema_checksum: String,
    pub schema: SchemaDoc,
    #[serde(flatten)]
    pub payload: ModelPayload,
}

impl ModelFile {
    pub fn new(schema: EncodingSchema, payload: ModelPayload) -> Self {
        let schema_checksum = schema_checksum(&schema);
        ModelFile {
            format: MODEL_FORMAT.to_string(),
            created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            schema_checksum,
            schema: SchemaDoc::new(schema),
            payload,
        }
    }

    pub fn validate(&self) -> Result<(), ArtifactError> {
        if self.format != MODEL_FORMAT {
            return Err(ArtifactError::UnknownFormat {
                found: self.format.clone(),
                expected: MODEL_FORMAT,
            });
        }
        self.schema.validate()?;
        if schema_checksum(&self.schema.features) != self.schema_checksum {
            return Err(ArtifactError::Invalid(
                "schema checksum does not match the embedded schema".into(),
            ));
        }
        let dim = self.schema.features.dimension();
        if self.payload.input_dim() != dim {
            return Err(ArtifactError::Invalid(format!(
                "model input dimension {} does not match schema dimensionality {dim}",
                self.payload.input_dim()
            )));
        }
        match &self.payload {
            ModelPayload::Lstm {
                input_dim,
                net,
                params,
                ..
            } => {
                if params.input_dim() != *input_dim || params.hidden_dim() != net.hidden {
                    return Err(ArtifactError::Invalid(format!(
                        "parameter shapes ({}, {}) do not match architecture ({input_dim}, {})",
                        params.input_dim(),
                        params.hidden_dim(),
                        net.hidden
                    )));
                }
            }
            ModelPayload::Svm {
                input_dim, model, ..
            } => {
                if model.weights.len() != *input_dim {
                    return Err(ArtifactError::Invalid(format!(
                        "SVM weight length {} does not match input dimension {input_dim}",
                        model.weights.len()
                    )));
                }
            }
        }
        Ok(())
    }
}

pub fn save_model(path: &Path, model: &ModelFile) -> Result<(), ArtifactError> {
    write_json_atomic(path, model)
}

pub fn load_model(path: &Path) -> Result<ModelFile, ArtifactError> {
    let model: ModelFile = read_json(path)?;
    model.validate()?;
    Ok(model)
}

/// An aidl-report/1 document wrapping an evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDoc {
    pub format: String,
    #[serde(flatten)]
    pub report: crate::evaluation::EvalReport,
}

impl ReportDoc {
    pub fn new(report: crate::evaluation::EvalReport) -> Self {
        ReportDoc {
            format: REPORT_FORMAT.to_string(),
            report,
        }
    }
}

pub fn save_report(path: &Path, report: &crate::evaluation::EvalReport) -> Result<(), ArtifactError> {
    write_json_atomic(path, &ReportDoc::new(report.clone()))
}

pub fn load_report(path: &Path) -> Result<crate::evaluation::EvalReport, ArtifactError> {
    let doc: ReportDoc = read_json(path)?;
    if doc.format != REPORT_FORMAT {
        return Err(ArtifactError::UnknownFormat {
            found: doc.format,
            expected: REPORT_FORMAT,
        });
    }
    Ok(doc.report)
}

/// An aidl-trace/1 document wrapping per-epoch training statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceDoc {
    pub format: String,
    #[serde(flatten)]
    pub trace: TrainTrace,
}

pub fn save_trace(path: &Path, trace: &TrainTrace) -> Result<(), ArtifactError> {
    write_json_atomic(
        path,
        &TraceDoc {
            format: TRACE_FORMAT.to_string(),
            trace: trace.clone(),
        },
    )
}

pub fn save_schema(path: &Path, schema: &EncodingSchema) -> Result<(), ArtifactError> {
    write_json_atomic(path, &SchemaDoc::new(schema.clone()))
}

pub fn load_schema(path: &Path) -> Result<EncodingSchema, ArtifactError> {
    let doc: SchemaDoc = read_json(path)?;
    doc.validate()?;
    Ok(doc.features)
}
