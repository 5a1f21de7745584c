//! Command-line interface: dataset statistics, training, evaluation,
//! comparison, and the gradient-check gate.
//!
//! Exit codes: 0 success, 1 I/O error, 2 parse/argument error,
//! 3 training divergence, 4 schema or shape mismatch, 5 gradient check
//! failure.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::artifact::{
    self, load_model, load_report, save_model, save_report, save_trace, ArtifactError, ModelFile, ModelPayload,
};
use crate::dataset::{
    class_distribution, dedup_stats, encode, fit_schema, parse_file, truncate_pct,
    ConnectionRecord, DatasetFormat, DatasetStats, FeatureVector,
};
use crate::evaluation::{compare, evaluate, EvalReport, ScoredSample};
use crate::lstm::{predict, Activation, NetConfig};
use crate::svm::{svm_fit, svm_predict, SvmConfig, SvmError};
use crate::training::{grad_check, grad_check_negative_control, train, TrainConfig, TrainError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("I/O error: {0}")]
    Io(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("{0}")]
    Divergence(String),
    #[error("mismatch: {0}")]
    Mismatch(String),
    #[error("gradient check failed")]
    GradCheckFailed,
    #[error("invalid arguments: {0}")]
    InvalidArgs(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Parse(_) | CliError::InvalidArgs(_) => 2,
            CliError::Divergence(_) => 3,
            CliError::Mismatch(_) => 4,
            CliError::GradCheckFailed => 5,
        }
    }
}

impl From<ArtifactError> for CliError {
    fn from(err: ArtifactError) -> Self {
        match err {
            ArtifactError::Io(e) => CliError::Io(e.to_string()),
            ArtifactError::Json(e) => CliError::Parse(e.to_string()),
            ArtifactError::UnknownFormat { .. } => CliError::Parse(err.to_string()),
            ArtifactError::Invalid(msg) => CliError::Mismatch(msg),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(err: TrainError) -> Self {
        match err {
            TrainError::Divergence { .. } => CliError::Divergence(err.to_string()),
            TrainError::EmptyDataset => CliError::Parse("dataset is empty".into()),
            TrainError::InvalidConfig(msg) => CliError::InvalidArgs(msg),
            TrainError::ShapeMismatch(msg) => CliError::Mismatch(msg),
        }
    }
}

impl From<SvmError> for CliError {
    fn from(err: SvmError) -> Self {
        match err {
            SvmError::EmptyDataset => CliError::Parse("dataset is empty".into()),
            SvmError::InvalidConfig(msg) => CliError::InvalidArgs(msg),
            SvmError::Numerics(e) => CliError::Mismatch(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Kdd,
    Nsl,
}

impl From<FormatArg> for DatasetFormat {
    fn from(value: FormatArg) -> Self {
        match value {
            FormatArg::Kdd => DatasetFormat::Kdd,
            FormatArg::Nsl => DatasetFormat::Nsl,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelKindArg {
    Lstm,
    Svm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ActArg {
    Tanh,
    Relu,
}

impl From<ActArg> for Activation {
    fn from(value: ActArg) -> Self {
        match value {
            ActArg::Tanh => Activation::Tanh,
            ActArg::Relu => Activation::Relu,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "aidl",
    version,
    about = "Anomaly-based intrusion detection lab: train and compare classifiers on KDD99/NSL-KDD connection records"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Dataset statistics: duplicate counts, reduction percentages, class
    /// distribution.
    Stats {
        /// Input dataset file.
        #[arg(long)]
        input: PathBuf,
        /// Input layout.
        #[arg(long, value_enum, default_value = "nsl")]
        format: FormatArg,
        /// Also print a machine-readable JSON document.
        #[arg(long)]
        json: bool,
    },
    /// Train a model and write an aidl-model/1 file (plus, for the LSTM, an
    /// aidl-trace/1 file and a CSV trace next to it).
    Train {
        /// Which model to train.
        #[arg(long, value_enum)]
        model: ModelKindArg,
        /// Training dataset file.
        #[arg(long)]
        train: PathBuf,
        /// Output model path.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "nsl")]
        format: FormatArg,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Training epochs (defaults: 20 for lstm, 10 for svm).
        #[arg(long)]
        epochs: Option<usize>,
        /// Minibatch size (lstm).
        #[arg(long, default_value_t = 128)]
        batch: usize,
        /// Hidden units (lstm).
        #[arg(long, default_value_t = 64)]
        hidden: usize,
        /// Cell activation (lstm).
        #[arg(long, value_enum, default_value = "relu")]
        act: ActArg,
        /// Dropout rate on the final hidden state (lstm).
        #[arg(long, default_value_t = 0.5)]
        dropout: f64,
        /// Learning rate (lstm).
        #[arg(long, default_value_t = 0.001)]
        lr: f64,
        /// RMSprop decay of the squared-gradient average (lstm).
        #[arg(long, default_value_t = 0.9)]
        rho: f64,
        /// Inverse-time learning-rate decay (lstm).
        #[arg(long, default_value_t = 0.0)]
        decay: f64,
        /// RMSprop stabilizer inside the square root (lstm).
        #[arg(long, default_value_t = 1e-7)]
        epsilon: f64,
        /// Global gradient-norm clip (lstm).
        #[arg(long, default_value_t = 5.0)]
        clip: f64,
        /// Regularization strength (svm).
        #[arg(long, default_value_t = 1e-4)]
        lambda: f64,
    },
    /// Evaluate a trained model on a dataset and write an aidl-report/1
    /// file. Encoding always uses the schema embedded in the model.
    Eval {
        /// Path to an aidl-model/1 file.
        #[arg(long)]
        model: PathBuf,
        /// Evaluation dataset file.
        #[arg(long)]
        test: PathBuf,
        /// Output report path.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "nsl")]
        format: FormatArg,
        /// Decision threshold (defaults: 0.5 on the LSTM probability, 0 on
        /// the SVM margin).
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Print a comparison table from one or more report files.
    Compare {
        /// aidl-report/1 files, one table row each, in argument order.
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        /// Emit JSON instead of the aligned text table.
        #[arg(long)]
        json: bool,
    },
    /// Check analytic gradients against central finite differences; exits
    /// 0 only if the maximum relative error is below 1e-4.
    Gradcheck {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 8)]
        input_dim: usize,
        #[arg(long, default_value_t = 5)]
        hidden: usize,
        #[arg(long, default_value_t = 3)]
        seq_len: usize,
        #[arg(long, value_enum, default_value = "relu")]
        act: ActArg,
        /// Corrupt one analytic gradient (negative control for the checker).
        #[arg(long, hide = true)]
        corrupt: bool,
    },
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Stats {
            input,
            format,
            json,
        } => cmd_stats(&input, format.into(), json),
        Command::Train {
            model,
            train,
            out,
            format,
            seed,
            epochs,
            batch,
            hidden,
            act,
            dropout,
            lr,
            rho,
            decay,
            epsilon,
            clip,
            lambda,
        } => {
            let flags = TrainFlags {
                kind: model,
                format: format.into(),
                seed,
                epochs,
                batch,
                hidden,
                act: act.into(),
                dropout,
                lr,
                rho,
                decay,
                epsilon,
                clip,
                lambda,
            };
            cmd_train(&train, &out, &flags)
        }
        Command::Eval {
            model,
            test,
            out,
            format,
            threshold,
        } => cmd_eval(&model, &test, &out, format.into(), threshold),
        Command::Compare { reports, json } => cmd_compare(&reports, json),
        Command::Gradcheck {
            seed,
            input_dim,
            hidden,
            seq_len,
            act,
            corrupt,
        } => cmd_gradcheck(seed, input_dim, hidden, seq_len, act.into(), corrupt),
    }
}

fn read_dataset(path: &Path, format: DatasetFormat) -> Result<Vec<ConnectionRecord>, CliError> {
    let parsed = parse_file(path, format)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    parsed.map_err(|e| CliError::Parse(format!("{}:{}: {}", path.display(), e.line, e.source)))
}

fn group_digits(n: u64) -> String {
    let digits = n.to_string();
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}

/// Left-aligned columns separated by two spaces, no trailing whitespace.
fn align_table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row.iter()) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let push = |cells: Vec<String>, out: &mut String| {
        let mut line = String::new();
        for (i, cell) in cells.iter().enumerate() {
            line.push_str(cell);
            if i + 1 < cells.len() {
                for _ in cell.len()..widths[i] + 2 {
                    line.push(' ');
                }
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    };
    push(headers.iter().map(|h| h.to_string()).collect(), &mut out);
    for row in rows {
        push(row.clone(), &mut out);
    }
    out
}

fn stats_table(stats: &DatasetStats) -> String {
    let row = |name: &str, r: &crate::dataset::StatsRow| {
        vec![
            name.to_string(),
            group_digits(r.samples),
            group_digits(r.distinct),
            format!("{:.2}%", truncate_pct(r.reduction())),
        ]
    };
    align_table(
        &[
            "Class",
            "Number of samples",
            "Number of distinct samples",
            "Possible reduction percentage",
        ],
        &[
            row("Attacks", &stats.attacks),
            row("Normal", &stats.normal),
            row("Total", &stats.total),
        ],
    )
}

fn cmd_stats(input: &Path, format: DatasetFormat, json: bool) -> Result<(), CliError> {
    let records = read_dataset(input, format)?;
    let stats = dedup_stats(&records);
    let dist = class_distribution(&records);

    println!(
        "Dataset statistics: {} ({} records)\n",
        input.display(),
        group_digits(stats.total.samples)
    );
    print!("{}", stats_table(&stats));

    println!("\nClass distribution");
    let label_rows: Vec<Vec<String>> = dist
        .labels
        .iter()
        .map(|(label, count)| vec![label.clone(), group_digits(*count)])
        .collect();
    print!("{}", align_table(&["Label", "Samples"], &label_rows));

    println!("\nCategory rollup");
    let category_rows: Vec<Vec<String>> = dist
        .categories
        .iter()
        .map(|(category, count)| vec![category.to_string(), group_digits(*count)])
        .collect();
    print!("{}", align_table(&["Category", "Samples"], &category_rows));

    if json {
        let doc = serde_json::json!({
            "input": input.display().to_string(),
            "stats": {
                "attacks": stats_row_json(&stats.attacks),
                "normal": stats_row_json(&stats.normal),
                "total": stats_row_json(&stats.total),
            },
            "labels": dist.labels,
            "categories": dist.categories,
        });
        println!("\n{doc}");
    }
    Ok(())
}

fn stats_row_json(row: &crate::dataset::StatsRow) -> serde_json::Value {
    serde_json::json!({
        "samples": row.samples,
        "distinct": row.distinct,
        "reduction_pct": truncate_pct(row.reduction()),
    })
}

struct TrainFlags {
    kind: ModelKindArg,
    format: DatasetFormat,
    seed: u64,
    epochs: Option<usize>,
    batch: usize,
    hidden: usize,
    act: Activation,
    dropout: f64,
    lr: f64,
    rho: f64,
    decay: f64,
    epsilon: f64,
    clip: f64,
    lambda: f64,
}

fn encode_all(records: &[ConnectionRecord], schema: &crate::dataset::EncodingSchema) -> Vec<FeatureVector> {
    records.iter().map(|r| encode(r, schema)).collect()
}

#[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN lambda must fail validation
fn cmd_train(train_path: &Path, out: &Path, flags: &TrainFlags) -> Result<(), CliError> {
    // reject invalid configurations before any file work
    let net = NetConfig {
        hidden: flags.hidden,
        activation: flags.act,
        dropout: flags.dropout,
        seq_len: 1,
    };
    let config = TrainConfig {
        learning_rate: flags.lr,
        rho: flags.rho,
        decay: flags.decay,
        epsilon: flags.epsilon,
        epochs: flags.epochs.unwrap_or(20),
        batch_size: flags.batch,
        seed: flags.seed,
        clip_norm: flags.clip,
        ..TrainConfig::default()
    };
    if flags.kind == ModelKindArg::Lstm {
        config.validate()?;
        net.validate().map_err(CliError::InvalidArgs)?;
    } else if !(flags.lambda > 0.0) {
        return Err(CliError::InvalidArgs("lambda must be > 0".into()));
    }

    let records = read_dataset(train_path, flags.format)?;
    let schema = fit_schema(&records)
        .map_err(|e| CliError::Parse(format!("{}: {e}", train_path.display())))?;
    let dataset = encode_all(&records, &schema);
    let input_dim = schema.dimension();

    let model_file = match flags.kind {
        ModelKindArg::Lstm => {
            let (params, trace) = train(&dataset, &net, &config)?;
            if let Some(last) = trace.epochs.last() {
                println!(
                    "trained lstm: {} epochs, final loss {:.6}, train accuracy {:.4}",
                    trace.epochs.len(),
                    last.train_loss,
                    last.train_accuracy
                );
            }
            save_trace(&out.with_extension("trace.json"), &trace)?;
            artifact::write_atomic(&out.with_extension("trace.csv"), trace.to_csv().as_bytes())?;
            ModelFile::new(
                schema,
                ModelPayload::Lstm {
                    input_dim,
                    net,
                    training: config,
                    params,
                },
            )
        }
        ModelKindArg::Svm => {
            let config = SvmConfig {
                lambda: flags.lambda,
                epochs: flags.epochs.unwrap_or(10),
                seed: flags.seed,
            };
            let model = svm_fit(&dataset, &config)?;
            println!("trained svm: {} epochs, lambda {}", config.epochs, config.lambda);
            ModelFile::new(
                schema,
                ModelPayload::Svm {
                    input_dim,
                    config,
                    model,
                },
            )
        }
    };

    save_model(out, &model_file)?;
    println!(
        "model written to {} ({} input dimensions)",
        out.display(),
        input_dim
    );
    Ok(())
}

fn score_dataset(model: &ModelFile, dataset: &[FeatureVector]) -> Result<Vec<ScoredSample>, CliError> {
    let mut samples = Vec::with_capacity(dataset.len());
    match &model.payload {
        ModelPayload::Lstm { net, params, .. } => {
            for fv in dataset {
                let score = predict(params, net, std::slice::from_ref(&fv.x))
                    .map_err(|e| CliError::Mismatch(e.to_string()))?;
                samples.push(ScoredSample {
                    score,
                    is_attack: fv.y,
                    category: fv.category,
                });
            }
        }
        ModelPayload::Svm { model: svm, .. } => {
            for fv in dataset {
                let (_, margin) =
                    svm_predict(svm, &fv.x).map_err(|e| CliError::Mismatch(e.to_string()))?;
                samples.push(ScoredSample {
                    score: margin,
                    is_attack: fv.y,
                    category: fv.category,
                });
            }
        }
    }
    Ok(samples)
}

fn print_report(report: &EvalReport) {
    let rate = |r: Option<f64>| match r {
        Some(v) => format!("{v:.4}"),
        None => "n/a".to_string(),
    };
    println!("model:          {}", report.model);
    println!("threshold:      {}", report.threshold);
    println!("samples:        {}", group_digits(report.matrix.total()));
    println!(
        "tp/tn/fp/fn:    {}/{}/{}/{}",
        report.matrix.true_positives,
        report.matrix.true_negatives,
        report.matrix.false_positives,
        report.matrix.false_negatives
    );
    println!("fp_rate:        {}", rate(report.fp_rate));
    println!("fn_rate:        {}", rate(report.fn_rate));
    println!("accuracy:       {}", rate(report.accuracy));
    println!("detection_rate: {}", rate(report.detection_rate));
    if !report.category_recall.is_empty() {
        println!("recall by attack category:");
        for c in &report.category_recall {
            println!(
                "  {:<8} {}/{} ({:.4})",
                c.category.to_string(),
                c.detected,
                c.attacks,
                c.recall
            );
        }
    }
}

fn cmd_eval(
    model_path: &Path,
    test_path: &Path,
    out: &Path,
    format: DatasetFormat,
    threshold: Option<f64>,
) -> Result<(), CliError> {
    let model = load_model(model_path)?;
    let records = read_dataset(test_path, format)?;
    let dataset = encode_all(&records, &model.schema.features);
    let samples = score_dataset(&model, &dataset)?;
    let kind = model.payload.kind();
    let threshold = threshold.unwrap_or_else(|| kind.default_threshold());
    let mut report = evaluate(&samples, threshold, kind.methodology())
        .map_err(|e| CliError::Parse(e.to_string()))?;
    report.schema_checksum = Some(model.schema_checksum.clone());

    save_report(out, &report)?;
    print_report(&report);
    println!("report written to {}", out.display());
    Ok(())
}

fn cmd_compare(report_paths: &[PathBuf], json: bool) -> Result<(), CliError> {
    let mut reports = Vec::with_capacity(report_paths.len());
    for path in report_paths {
        let report = load_report(path).map_err(|e| match e {
            ArtifactError::Io(io) => CliError::Io(format!("{}: {io}", path.display())),
            other => CliError::Parse(format!("{}: {other}", path.display())),
        })?;
        reports.push(report);
    }
    let table = compare(&reports).map_err(|e| CliError::Parse(e.to_string()))?;
    if json {
        println!(
            "{}",
            serde_json::to_string_pretty(&table).expect("table serializes")
        );
    } else {
        print!("{}", table.to_text());
    }
    Ok(())
}

fn cmd_gradcheck(
    seed: u64,
    input_dim: usize,
    hidden: usize,
    seq_len: usize,
    act: Activation,
    corrupt: bool,
) -> Result<(), CliError> {
    if input_dim == 0 || hidden == 0 || seq_len == 0 {
        return Err(CliError::InvalidArgs(
            "input-dim, hidden and seq-len must all be >= 1".into(),
        ));
    }
    if input_dim * hidden > 10_000 {
        return Err(CliError::InvalidArgs(format!(
            "input-dim * hidden = {} exceeds the finite-difference budget of 10000",
            input_dim * hidden
        )));
    }
    const THRESHOLD: f64 = 1e-4;
    let report = if corrupt {
        grad_check_negative_control(seed, input_dim, hidden, seq_len, act)
    } else {
        grad_check(seed, input_dim, hidden, seq_len, act)
    };
    println!(
        "gradient check: act={act} D={input_dim} H={hidden} T={seq_len} seed={seed}"
    );
    println!("parameters checked: {}", report.params_checked);
    println!(
        "max relative error: {:.3e} (threshold {THRESHOLD:.0e})",
        report.max_rel_error
    );
    if !report.worst_coordinate.is_empty() {
        println!(
            "worst coordinate:   {} (analytic {:.6e}, numeric {:.6e})",
            report.worst_coordinate, report.analytic_at_worst, report.numeric_at_worst
        );
    }
    if report.max_rel_error < THRESHOLD {
        println!("PASS");
        Ok(())
    } else {
        println!("FAIL");
        Err(CliError::GradCheckFailed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_are_pinned() {
        assert_eq!(CliError::Io("x".into()).exit_code(), 1);
        assert_eq!(CliError::Parse("x".into()).exit_code(), 2);
        assert_eq!(CliError::InvalidArgs("x".into()).exit_code(), 2);
        assert_eq!(CliError::Divergence("x".into()).exit_code(), 3);
        assert_eq!(CliError::Mismatch("x".into()).exit_code(), 4);
        assert_eq!(CliError::GradCheckFailed.exit_code(), 5);
    }

    #[test]
    fn digit_grouping() {
        assert_eq!(group_digits(0), "0");
        assert_eq!(group_digits(999), "999");
        assert_eq!(group_digits(4_898_431), "4,898,431");
        assert_eq!(group_digits(1_074_992), "1,074,992");
    }

    #[test]
    fn stats_table_uses_published_layout() {
        use crate::dataset::StatsRow;
        let stats = DatasetStats {
            attacks: StatsRow {
                samples: 3_925_650,
                distinct: 262_178,
            },
            normal: StatsRow {
                samples: 972_781,
                distinct: 812_814,
            },
            total: StatsRow {
                samples: 4_898_431,
                distinct: 1_074_992,
            },
            label_counts: vec![],
        };
        let table = stats_table(&stats);
        let expected = "\
Class    Number of samples  Number of distinct samples  Possible reduction percentage
Attacks  3,925,650          262,178                     93.32%
Normal   972,781            812,814                     16.44%
Total    4,898,431          1,074,992                   78.05%
";
        assert_eq!(table, expected);
    }

    #[test]
    fn test_set_stats_row_truncates() {
        use crate::dataset::StatsRow;
        let stats = DatasetStats {
            attacks: StatsRow {
                samples: 250_436,
                distinct: 29_378,
            },
            normal: StatsRow {
                samples: 60_591,
                distinct: 47_911,
            },
            total: StatsRow {
                samples: 311_027,
                distinct: 77_289,
            },
            label_counts: vec![],
        };
        let table = stats_table(&stats);
        assert!(table.contains("88.26%"), "{table}");
        assert!(table.contains("20.92%"), "{table}");
        assert!(table.contains("75.15%"), "{table}");
    }
}
