//! The four experiment commands behind the CLI. Each is a pure function
//! of (config, input files): reruns produce byte-identical outputs, and
//! every command echoes its parsed config into the output directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::config::{RunConfig, SOURCE_ID_BASE, TARGET_ID_BASE};
use crate::data::{generate_domain, load_dataset, save_dataset};
use crate::engine::{run_stream, StreamReport};
use crate::error::{Error, Result};
use crate::evaluator::EvaluatorModel;
use crate::meta::{load_records, save_records};
use crate::neural::Autoencoder;
use crate::report::{parse_metrics_csv, render_svg, summarize, ColumnStats};
use crate::train::{bootstrap_evaluators, bootstrap_source_records, pretrain, train_metrics_csv};

pub const CONFIG_ECHO_FILE: &str = "config.json";
pub const AUTOENCODER_FILE: &str = "autoencoder.txt";
pub const EVALUATOR_SOURCE_FILE: &str = "evaluator_source.txt";
pub const EVALUATOR_TARGET_FILE: &str = "evaluator_target.txt";
pub const SOURCE_RECORDS_FILE: &str = "source_records.csv";
pub const TRAIN_METRICS_FILE: &str = "train_metrics.csv";
pub const STREAM_METRICS_FILE: &str = "metrics.csv";
pub const OUTCOMES_FILE: &str = "outcomes.csv";
pub const SUMMARY_FILE: &str = "summary.json";

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent.display().to_string(), e))?;
        }
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path.display().to_string(), e))
}

fn echo_config(config: &RunConfig, dir: &Path) -> Result<PathBuf> {
    let path = dir.join(CONFIG_ECHO_FILE);
    write_file(&path, &config.to_canonical_json())?;
    Ok(path)
}

/// Generate both domains and write dataset + manifest files (and a config
/// echo beside them). Returns every path written.
pub fn cmd_gen_data(config: &RunConfig) -> Result<Vec<PathBuf>> {
    config.validate()?;
    let source = generate_domain(&config.source, config.seed, SOURCE_ID_BASE)?;
    let target = generate_domain(&config.target, config.seed.wrapping_add(1), TARGET_ID_BASE)?;

    let source_path = PathBuf::from(&config.source_path);
    let target_path = PathBuf::from(&config.target_path);
    let mut written = Vec::new();
    for (path, dataset, seed) in [
        (&source_path, &source, config.seed),
        (&target_path, &target, config.seed.wrapping_add(1)),
    ] {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)
                    .map_err(|e| Error::io(parent.display().to_string(), e))?;
            }
        }
        save_dataset(path, dataset, seed)?;
        written.push(path.clone());
        written.push(crate::data::manifest_path(path));
    }
    let mut echo_dirs: Vec<PathBuf> = Vec::new();
    for path in [&source_path, &target_path] {
        let dir = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
        if !echo_dirs.contains(&dir) {
            written.push(echo_config(config, &dir)?);
            echo_dirs.push(dir);
        }
    }
    Ok(written)
}

/// Everything `cmd_train` produced, in memory and on disk.
pub struct TrainArtifacts {
    pub autoencoder: Autoencoder,
    pub source_evaluator: EvaluatorModel,
    pub target_evaluator: EvaluatorModel,
    pub record_count: usize,
    pub paths: Vec<PathBuf>,
}

/// Pretrain the embedding model on the source domain and bootstrap both
/// evaluators from truth-labeled source meta-features. Writes model and
/// evaluator snapshots, the per-epoch loss log, and the bootstrap records
/// (the stream needs them for knowledge exchange).
pub fn cmd_train(config: &RunConfig, out_dir: &Path) -> Result<TrainArtifacts> {
    config.validate()?;
    let source = load_dataset(Path::new(&config.source_path))?;

    let mut autoencoder = config.build_autoencoder()?;
    let log = pretrain(&mut autoencoder, &source, config)?;
    let records = bootstrap_source_records(&autoencoder, &source)?;
    let (source_evaluator, target_evaluator) = bootstrap_evaluators(&records, config.fit_params())?;

    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    let paths = vec![
        out_dir.join(AUTOENCODER_FILE),
        out_dir.join(EVALUATOR_SOURCE_FILE),
        out_dir.join(EVALUATOR_TARGET_FILE),
        out_dir.join(SOURCE_RECORDS_FILE),
        out_dir.join(TRAIN_METRICS_FILE),
        echo_config(config, out_dir)?,
    ];
    autoencoder.save(&paths[0])?;
    source_evaluator.save(&paths[1])?;
    target_evaluator.save(&paths[2])?;
    save_records(&paths[3], &records)?;
    write_file(&paths[4], &train_metrics_csv(&log))?;

    Ok(TrainArtifacts {
        autoencoder,
        source_evaluator,
        target_evaluator,
        record_count: records.len(),
        paths,
    })
}

/// Everything `cmd_stream` produced.
pub struct StreamArtifacts {
    pub report: StreamReport,
    pub paths: Vec<PathBuf>,
}

/// Run the open-world stream over the target domain, starting from the
/// snapshots `cmd_train` wrote. Emits the per-query outcome log, per-epoch
/// metrics, and post-stream snapshots of the adapted models.
pub fn cmd_stream(config: &RunConfig, snapshots_dir: &Path, out_dir: &Path) -> Result<StreamArtifacts> {
    config.validate()?;
    let mut autoencoder = Autoencoder::load(&snapshots_dir.join(AUTOENCODER_FILE))?;
    let mut source_evaluator = EvaluatorModel::load(&snapshots_dir.join(EVALUATOR_SOURCE_FILE))?;
    let mut target_evaluator = EvaluatorModel::load(&snapshots_dir.join(EVALUATOR_TARGET_FILE))?;
    let source_records = load_records(&snapshots_dir.join(SOURCE_RECORDS_FILE))?;
    let target = load_dataset(Path::new(&config.target_path))?;

    let report = run_stream(
        &mut autoencoder,
        &mut source_evaluator,
        &mut target_evaluator,
        &target,
        &source_records,
        &config.stream_config(),
    )?;

    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    let paths = vec![
        out_dir.join(OUTCOMES_FILE),
        out_dir.join(STREAM_METRICS_FILE),
        out_dir.join(AUTOENCODER_FILE),
        out_dir.join(EVALUATOR_SOURCE_FILE),
        out_dir.join(EVALUATOR_TARGET_FILE),
        echo_config(config, out_dir)?,
    ];
    write_file(&paths[0], &report.outcomes_csv())?;
    write_file(&paths[1], &report.metrics_csv())?;
    autoencoder.save(&paths[2])?;
    source_evaluator.save(&paths[3])?;
    target_evaluator.save(&paths[4])?;

    Ok(StreamArtifacts { report, paths })
}

/// Render every CSV in `in_dir` to an SVG chart and write one JSON summary
/// (final / best / mean per metric, keyed by file stem then column).
pub fn cmd_report(in_dir: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut csv_files: Vec<PathBuf> = std::fs::read_dir(in_dir)
        .map_err(|e| Error::io(in_dir.display().to_string(), e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "csv"))
        .collect();
    csv_files.sort();
    if csv_files.is_empty() {
        return Err(Error::EmptyInput(format!(
            "no .csv metrics files in {}",
            in_dir.display()
        )));
    }

    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    let mut written = Vec::new();
    let mut summary: BTreeMap<String, BTreeMap<String, ColumnStats>> = BTreeMap::new();
    for csv_path in &csv_files {
        let display = csv_path.display().to_string();
        let text =
            std::fs::read_to_string(csv_path).map_err(|e| Error::io(display.clone(), e))?;
        let table = parse_metrics_csv(&text, &display)?;
        let stem = csv_path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::MalformedFile {
                path: display.clone(),
                reason: "file name is not valid unicode".into(),
            })?
            .to_string();
        let svg_path = out_dir.join(format!("{stem}.svg"));
        write_file(&svg_path, &render_svg(&table, &stem))?;
        written.push(svg_path);
        summary.insert(stem, summarize(&table));
    }
    let summary_path = out_dir.join(SUMMARY_FILE);
    let json = serde_json::to_string_pretty(&summary)? + "\n";
    write_file(&summary_path, &json)?;
    written.push(summary_path);
    Ok(written)
}
