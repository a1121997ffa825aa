//! Subcommands behind the `fedaug` binary.
//!
//! Each command reads an [`ExperimentConfig`], derives every random stream
//! from its seed, and writes plain files into an output directory.

pub mod config;
pub mod report;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use fedaug_core::augment::{apply_transform, to_pgm, TransformKind};
use fedaug_core::data::{
    generate_synthetic, load_dataset, save_dataset, split_train_test, LabeledDataset,
};
use fedaug_core::federation::{run_centralized, run_experiment_with};
use fedaug_core::metrics::{
    final_accuracy, metrics_csv, parse_metrics_csv, stability_stats, RoundRecord,
};
use fedaug_core::model::save_checkpoint;
use fedaug_core::partition::{assignment_csv, partition, shard_statistics, ClientShard};
use fedaug_core::rng::{Purpose, RngStream};
use serde::Serialize;

pub use config::{ConfigError, ExperimentConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error(transparent)]
    Runtime(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl From<fedaug_core::Error> for CliError {
    fn from(e: fedaug_core::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub const METRICS_FILE: &str = "metrics.csv";
pub const SHARD_STATS_FILE: &str = "shard_stats.csv";
pub const ASSIGNMENT_FILE: &str = "assignment.csv";
pub const TRACE_FILE: &str = "trace.jsonl";
pub const FINAL_MODEL_FILE: &str = "final_model.fbmp";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CHECKPOINT_DIR: &str = "checkpoints";

pub fn load_config(path: &Path) -> CliResult<ExperimentConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    ExperimentConfig::parse(&text)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

/// Train/test split and client shards derived from a config.
pub struct Prepared {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub shards: Vec<ClientShard>,
}

pub fn load_source(cfg: &ExperimentConfig) -> CliResult<LabeledDataset> {
    let d = &cfg.dataset;
    match &d.path {
        Some(path) => {
            if !path.exists() {
                return Err(CliError::Runtime(anyhow::anyhow!(
                    "dataset not found: {}",
                    path.display()
                )));
            }
            load_dataset(path)
                .with_context(|| format!("reading dataset {}", path.display()))
                .map_err(CliError::from)
        }
        None => Ok(generate_synthetic(
            d.num_classes,
            d.per_class,
            (d.height, d.width),
            d.noise_sigma,
            &mut RngStream::new(cfg.seed, Purpose::Synthetic),
        )?),
    }
}

pub fn prepare(cfg: &ExperimentConfig) -> CliResult<Prepared> {
    let source = load_source(cfg)?;
    let (train, test) = split_train_test(
        &source,
        cfg.dataset.test_fraction,
        &mut RngStream::new(cfg.seed, Purpose::Split),
    )?;
    let shards = partition(
        &train,
        &cfg.partition_spec(),
        &mut RngStream::new(cfg.seed, Purpose::Partition),
    )?;
    Ok(Prepared {
        train,
        test,
        shards,
    })
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir)
        .with_context(|| format!("creating output directory {}", dir.display()))
        .map_err(CliError::from)
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    fs::write(path, contents)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(CliError::from)
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    core_version: &'static str,
    command: &'a str,
    seed: u64,
    dataset: DatasetSummary,
    final_accuracy: Option<f64>,
    stability_std: Option<f64>,
    outputs: Vec<&'a str>,
    config: String,
}

#[derive(Serialize)]
struct DatasetSummary {
    num_classes: usize,
    image_shape: (usize, usize),
    train: usize,
    test: usize,
}

fn write_manifest(
    dir: &Path,
    command: &str,
    cfg: &ExperimentConfig,
    prepared: &Prepared,
    records: &[RoundRecord],
    outputs: Vec<&str>,
) -> CliResult<()> {
    let manifest = Manifest {
        tool: "fedaug",
        version: env!("CARGO_PKG_VERSION"),
        core_version: fedaug_core::VERSION,
        command,
        seed: cfg.seed,
        dataset: DatasetSummary {
            num_classes: prepared.train.num_classes(),
            image_shape: prepared.train.image_shape(),
            train: prepared.train.len(),
            test: prepared.test.len(),
        },
        final_accuracy: (!records.is_empty()).then(|| final_accuracy(records, 5)),
        stability_std: stability_stats(records, cfg.report.stability_window)?,
        outputs,
        config: cfg.to_toml(),
    };
    let json = serde_json::to_string_pretty(&manifest).context("serializing manifest")?;
    write_file(&dir.join(MANIFEST_FILE), json + "\n")
}

/// Federated run: metrics, shard statistics, optional protocol trace, final
/// checkpoint and manifest.
pub fn cmd_run(cfg: &ExperimentConfig, out: &Path) -> CliResult<()> {
    let prepared = prepare(cfg)?;
    create_dir(out)?;
    let num_classes = prepared.train.num_classes();
    write_file(
        &out.join(SHARD_STATS_FILE),
        shard_statistics(&prepared.shards, num_classes).to_csv(),
    )?;

    let mut trace = if cfg.report.protocol_trace {
        let path = out.join(TRACE_FILE);
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        Some(BufWriter::new(file))
    } else {
        None
    };
    let fed = cfg.federation_config();
    let mut trace_error = None;
    let run = run_experiment_with(
        &fed,
        &prepared.shards,
        prepared.test.examples(),
        |outcome, record| {
            log::info!(
                "round {}: accuracy {:.4}, objective {:.4}",
                record.round,
                record.test_accuracy,
                record.global_objective
            );
            if let Some(w) = trace.as_mut() {
                for msg in &outcome.messages {
                    let line = serde_json::to_string(msg).expect("messages serialize");
                    if let Err(e) = writeln!(w, "{line}") {
                        trace_error.get_or_insert(e);
                    }
                }
            }
            Ok(())
        },
    )?;
    if let Some(e) = trace_error {
        return Err(anyhow::Error::from(e)
            .context("writing protocol trace")
            .into());
    }
    if let Some(mut w) = trace {
        w.flush().context("writing protocol trace")?;
    }

    write_file(&out.join(METRICS_FILE), metrics_csv(&run.records))?;
    save_checkpoint(&run.final_params, out.join(FINAL_MODEL_FILE))?;
    let mut outputs = vec![
        METRICS_FILE,
        SHARD_STATS_FILE,
        FINAL_MODEL_FILE,
        MANIFEST_FILE,
    ];
    if cfg.report.protocol_trace {
        outputs.push(TRACE_FILE);
    }
    write_manifest(out, "run", cfg, &prepared, &run.records, outputs)
}

/// Centralized baseline on the pooled training split, with one checkpoint
/// per round-equivalent.
pub fn cmd_centralized(cfg: &ExperimentConfig, out: &Path) -> CliResult<()> {
    let prepared = prepare(cfg)?;
    let ckpt_dir = out.join(CHECKPOINT_DIR);
    create_dir(&ckpt_dir)?;
    let mut fed = cfg.federation_config();
    fed.track_divergence = false;
    let run = run_centralized(
        &fed,
        prepared.train.examples(),
        prepared.train.num_classes(),
        prepared.test.examples(),
        |round, params| save_checkpoint(params, ckpt_dir.join(format!("round_{round:04}.fbmp"))),
    )?;
    write_file(&out.join(METRICS_FILE), metrics_csv(&run.records))?;
    save_checkpoint(&run.final_params, out.join(FINAL_MODEL_FILE))?;
    write_manifest(
        out,
        "centralized",
        cfg,
        &prepared,
        &run.records,
        vec![
            METRICS_FILE,
            CHECKPOINT_DIR,
            FINAL_MODEL_FILE,
            MANIFEST_FILE,
        ],
    )
}

/// Writes the example-to-client assignment and per-client label counts.
/// Returns the statistics table for printing.
pub fn cmd_partition(cfg: &ExperimentConfig, out: &Path) -> CliResult<String> {
    let prepared = prepare(cfg)?;
    create_dir(out)?;
    let stats = shard_statistics(&prepared.shards, prepared.train.num_classes()).to_csv();
    write_file(&out.join(ASSIGNMENT_FILE), assignment_csv(&prepared.shards))?;
    write_file(&out.join(SHARD_STATS_FILE), &stats)?;
    Ok(stats)
}

/// Applies each transform once to example `index` of a dataset file. Writes
/// a one-example dataset file and a PGM dump per transform, plus the
/// original as PGM. Returns the dataset files written.
pub fn cmd_augment_preview(dataset: &Path, index: usize, out: &Path) -> CliResult<Vec<PathBuf>> {
    if !dataset.exists() {
        return Err(CliError::Runtime(anyhow::anyhow!(
            "dataset not found: {}",
            dataset.display()
        )));
    }
    let ds =
        load_dataset(dataset).with_context(|| format!("reading dataset {}", dataset.display()))?;
    let Some(example) = ds.examples().get(index) else {
        return Err(CliError::Validation(format!(
            "example index {index} out of range for {} examples",
            ds.len()
        )));
    };
    create_dir(out)?;
    write_file(&out.join("original.pgm"), to_pgm(&example.image))?;
    let mut written = Vec::with_capacity(TransformKind::ALL.len());
    for kind in TransformKind::ALL {
        let mut rng = RngStream::lane(0, Purpose::Preview, kind.index() as u64, index as u64);
        let mut shown = example.clone();
        shown.image = apply_transform(&example.image, kind, &mut rng);
        let stem = format!("{:02}_{}", kind.index(), kind.name());
        write_file(&out.join(format!("{stem}.pgm")), to_pgm(&shown.image))?;
        let single = LabeledDataset::new(ds.num_classes(), ds.image_shape(), vec![shown])?;
        let path = out.join(format!("{stem}.fbds"));
        save_dataset(&single, &path)?;
        written.push(path);
    }
    Ok(written)
}

/// File stem, or the parent directory name for the default `metrics.csv`.
fn series_name(path: &Path) -> String {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned());
    let parent = path
        .parent()
        .and_then(|p| p.file_name())
        .map(|s| s.to_string_lossy().into_owned());
    match (stem, parent) {
        (Some(stem), Some(parent)) if stem == "metrics" => parent,
        (Some(stem), _) => stem,
        _ => path.display().to_string(),
    }
}

/// Renders metrics CSVs as one SVG; series are named after file stems.
pub fn cmd_report(inputs: &[PathBuf], output: &Path) -> CliResult<()> {
    if inputs.is_empty() {
        return Err(CliError::Validation(
            "report needs at least one metrics CSV".into(),
        ));
    }
    let mut series = Vec::with_capacity(inputs.len());
    for path in inputs {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let records = parse_metrics_csv(&text)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        series.push(report::Series {
            name: series_name(path),
            records,
        });
    }
    if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_file(output, report::render_svg(&series))
}
