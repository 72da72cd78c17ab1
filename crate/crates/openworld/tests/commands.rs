//! Contracts of the four pipeline commands that the CLI only checks at the
//! level of exit codes and file existence: echoed configs are canonical,
//! snapshots written after the stream reload cleanly, and the two generated
//! domains occupy disjoint identity ranges.

use std::path::Path;

use openworld::commands::{
    cmd_gen_data, cmd_stream, cmd_train, AUTOENCODER_FILE, CONFIG_ECHO_FILE, SOURCE_RECORDS_FILE,
    TRAIN_METRICS_FILE,
};
use openworld::config::RunConfig;
use openworld::data::{load_dataset, EpisodeConfig};
use openworld::evaluator::EvaluatorModel;
use openworld::meta::load_records;
use openworld::neural::Autoencoder;
use openworld::Domain;

/// Reference config shrunk for test speed, rooted inside `dir`.
fn small_config(dir: &Path) -> RunConfig {
    let mut config = RunConfig::reference();
    config.source.num_identities = 6;
    config.source.samples_per_identity = 10;
    config.source.raw_dim = 8;
    config.target = config.source.clone();
    config.target.domain_tag = Domain::Target;
    config.target.transform.scale = 5.0;
    config.target.transform.offset = vec![3.0];
    config.target.transform.rotation_seed = Some(7);
    config.encoder_hidden = vec![16];
    config.decoder_hidden = vec![16];
    config.embed_dim = 4;
    config.train_epochs = 8;
    config.evaluator_epochs = 100;
    config.episode = EpisodeConfig {
        p_same: 0.5,
        queries_per_epoch: 30,
        epochs: 2,
    };
    config.source_path = dir.join("data/source.csv").display().to_string();
    config.target_path = dir.join("data/target.csv").display().to_string();
    config
}

#[test]
fn generated_domains_are_disjoint_and_loadable() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_config(tmp.path());
    cmd_gen_data(&config).unwrap();

    let source = load_dataset(Path::new(&config.source_path)).unwrap();
    let target = load_dataset(Path::new(&config.target_path)).unwrap();
    assert_eq!(source.domain, Domain::Source);
    assert_eq!(target.domain, Domain::Target);
    assert_eq!(source.rows.len(), 60, "6 identities x 10 samples");
    assert_eq!(target.rows.len(), 60);

    let source_ids = source.ids();
    let target_ids = target.ids();
    assert!(
        source_ids.iter().all(|id| !target_ids.contains(id)),
        "identity ranges must not overlap across domains"
    );
}

#[test]
fn echoed_config_is_canonical_and_reloadable() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_config(tmp.path());
    cmd_gen_data(&config).unwrap();
    let train_dir = tmp.path().join("train");
    cmd_train(&config, &train_dir).unwrap();

    let echoed = std::fs::read_to_string(train_dir.join(CONFIG_ECHO_FILE)).unwrap();
    assert_eq!(
        echoed,
        config.to_canonical_json(),
        "echo must be the canonical form of the run configuration"
    );
    let reloaded = RunConfig::from_json(&echoed).unwrap();
    assert_eq!(
        reloaded.to_canonical_json(),
        echoed,
        "canonical form must round-trip through parsing"
    );
}

#[test]
fn train_log_has_one_row_per_epoch() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_config(tmp.path());
    cmd_gen_data(&config).unwrap();
    let train_dir = tmp.path().join("train");
    cmd_train(&config, &train_dir).unwrap();

    let log = std::fs::read_to_string(train_dir.join(TRAIN_METRICS_FILE)).unwrap();
    let mut lines = log.lines();
    assert_eq!(
        lines.next(),
        Some("epoch,triplet_loss,mse_loss,combined_loss,effective_lr"),
    );
    assert_eq!(lines.count(), config.train_epochs, "one row per training epoch");
}

#[test]
fn post_stream_snapshots_reload_and_reflect_online_updates() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_config(tmp.path());
    cmd_gen_data(&config).unwrap();
    let train_dir = tmp.path().join("train");
    let trained = cmd_train(&config, &train_dir).unwrap();
    let stream_dir = tmp.path().join("stream");
    cmd_stream(&config, &train_dir, &stream_dir).unwrap();

    let adapted = Autoencoder::load(&stream_dir.join(AUTOENCODER_FILE)).unwrap();
    assert_eq!(adapted.param_count(), trained.autoencoder.param_count());
    let moved = (0..adapted.param_count())
        .any(|i| adapted.param(i) != trained.autoencoder.param(i));
    assert!(moved, "online updates should move the autoencoder parameters");

    for name in ["evaluator_source.txt", "evaluator_target.txt"] {
        let evaluator = EvaluatorModel::load(&stream_dir.join(name)).unwrap();
        assert!(evaluator.is_fitted(), "{name} should reload as a fitted model");
    }
    let records = load_records(&train_dir.join(SOURCE_RECORDS_FILE)).unwrap();
    assert!(
        records.iter().all(|r| r.label.is_some()),
        "bootstrap records carry true labels"
    );
}
