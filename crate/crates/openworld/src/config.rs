//! One JSON config drives every command. Unknown keys are rejected and
//! every range violation names the offending key, so a typo fails fast
//! instead of silently running a different experiment.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{DomainSpec, DomainTransform, EpisodeConfig};
use crate::engine::{AcceptRule, StreamConfig};
use crate::error::{Error, Result};
use crate::evaluator::{ConfidenceGate, FitParams};
use crate::neural::{Autoencoder, SgdOptimizer};
use crate::types::Domain;

/// Identity labels: source identities start at 0, target identities at
/// 10000, so the two domains can never collide.
pub const SOURCE_ID_BASE: u32 = 0;
pub const TARGET_ID_BASE: u32 = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master seed: model init, batch sampling, and the query stream all
    /// derive from it.
    pub seed: u64,

    // Embedding model.
    pub embed_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,

    // Source pretraining (triplet + lambda * reconstruction).
    pub margin: f64,
    pub lambda: f64,
    pub base_lr: f64,
    /// Learning-rate multiplier applied every `decay_every` epochs.
    pub gamma: f64,
    pub decay_every: u32,
    /// Identities per batch and samples per identity.
    pub batch_p: usize,
    pub batch_k: usize,
    pub train_epochs: usize,

    // Evaluators and knowledge exchange.
    pub confidence_threshold: f64,
    pub accept_threshold: f64,
    /// Exchange evaluator knowledge every this many stream epochs;
    /// 0 disables.
    pub exchange_every: usize,
    pub k_negative_galleries: usize,
    pub single_class_dmin_threshold: f64,
    pub evaluator_epochs: usize,
    pub evaluator_lr: f64,

    // Online adaptation during the stream.
    pub online_lr: f64,
    /// Queries per online update; 0 disables online adaptation.
    pub online_batch: usize,
    pub freeze_encoder: bool,
    pub gallery_cap: usize,

    // Stream shape.
    pub episode: EpisodeConfig,

    // Data generation and location.
    pub source: DomainSpec,
    pub target: DomainSpec,
    pub source_path: String,
    pub target_path: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            embed_dim: 16,
            encoder_hidden: vec![64],
            decoder_hidden: vec![64],
            margin: 0.3,
            lambda: 1.0,
            base_lr: 0.05,
            gamma: 0.5,
            decay_every: 20,
            batch_p: 4,
            batch_k: 4,
            train_epochs: 60,
            confidence_threshold: 0.9,
            accept_threshold: 0.5,
            exchange_every: 1,
            k_negative_galleries: 5,
            single_class_dmin_threshold: 1.0,
            evaluator_epochs: 200,
            evaluator_lr: 0.1,
            online_lr: 0.001,
            online_batch: 8,
            freeze_encoder: false,
            gallery_cap: 50,
            episode: EpisodeConfig {
                p_same: 0.5,
                queries_per_epoch: 100,
                epochs: 10,
            },
            source: DomainSpec {
                num_identities: 20,
                samples_per_identity: 30,
                raw_dim: 32,
                cluster_spread: 0.1,
                transform: DomainTransform::default(),
                domain_tag: Domain::Source,
                min_separation: 3.0,
            },
            target: DomainSpec {
                num_identities: 20,
                samples_per_identity: 30,
                raw_dim: 32,
                cluster_spread: 0.1,
                transform: DomainTransform {
                    scale: 5.0,
                    offset: vec![3.0],
                    rotation_seed: Some(7),
                },
                domain_tag: Domain::Target,
                min_separation: 3.0,
            },
            source_path: "data/source.csv".into(),
            target_path: "data/target.csv".into(),
        }
    }
}

impl RunConfig {
    /// The reference experiment: 20+20 disjoint identities, target scale 5,
    /// seed 0 — every default in one place.
    pub fn reference() -> Self {
        RunConfig::default()
    }

    /// Parse from JSON, rejecting unknown keys. Parse failures are config
    /// errors (the message names the offending key), not runtime errors.
    pub fn from_json(text: &str) -> Result<Self> {
        let config: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_json(&text)
    }

    /// Canonical serialization echoed into every output directory.
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, why: String| Err(Error::InvalidConfig(format!("{key}: {why}")));
        if self.embed_dim == 0 {
            return bad("embed_dim", "must be at least 1".into());
        }
        for (key, dims) in [("encoder_hidden", &self.encoder_hidden), ("decoder_hidden", &self.decoder_hidden)] {
            if dims.iter().any(|d| *d == 0) {
                return bad(key, "layer widths must be at least 1".into());
            }
        }
        if !(self.margin > 0.0) || !self.margin.is_finite() {
            return bad("margin", format!("must be positive, got {}", self.margin));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return bad("lambda", format!("must be non-negative, got {}", self.lambda));
        }
        // Range checks owned by the optimizer.
        SgdOptimizer::new(self.base_lr, self.gamma, self.decay_every)?;
        if self.batch_p < 2 {
            return bad("batch_p", format!("need at least 2 identities per batch, got {}", self.batch_p));
        }
        if self.batch_k < 2 {
            return bad("batch_k", format!("need at least 2 samples per identity, got {}", self.batch_k));
        }
        ConfidenceGate::new(self.confidence_threshold)
            .map_err(|_| Error::InvalidConfig(format!(
                "confidence_threshold: must lie in (0.5, 1], got {}",
                self.confidence_threshold
            )))?;
        self.accept_rule().validate()?;
        if self.k_negative_galleries == 0 {
            return bad("k_negative_galleries", "must be at least 1".into());
        }
        if !(self.single_class_dmin_threshold > 0.0) || !self.single_class_dmin_threshold.is_finite() {
            return bad(
                "single_class_dmin_threshold",
                format!("must be positive, got {}", self.single_class_dmin_threshold),
            );
        }
        self.fit_params().validate()?;
        if self.online_batch > 0 && (!(self.online_lr > 0.0) || !self.online_lr.is_finite()) {
            return bad("online_lr", format!("must be positive, got {}", self.online_lr));
        }
        if self.gallery_cap == 0 {
            return bad("gallery_cap", "must be at least 1".into());
        }
        self.episode.validate()?;
        self.source.validate("source")?;
        self.target.validate("target")?;
        if self.source.domain_tag != Domain::Source {
            return bad("source.domain_tag", "must be `source`".into());
        }
        if self.target.domain_tag != Domain::Target {
            return bad("target.domain_tag", "must be `target`".into());
        }
        if self.source.raw_dim != self.target.raw_dim {
            return bad(
                "target.raw_dim",
                format!("must match source.raw_dim ({} vs {})", self.target.raw_dim, self.source.raw_dim),
            );
        }
        if self.source.num_identities as u32 > TARGET_ID_BASE {
            return bad(
                "source.num_identities",
                format!("identity space is limited to {TARGET_ID_BASE} per domain"),
            );
        }
        if self.source_path.is_empty() {
            return bad("source_path", "must not be empty".into());
        }
        if self.target_path.is_empty() {
            return bad("target_path", "must not be empty".into());
        }
        Ok(())
    }

    pub fn optimizer(&self) -> SgdOptimizer {
        SgdOptimizer::new(self.base_lr, self.gamma, self.decay_every).expect("validated config")
    }

    pub fn fit_params(&self) -> FitParams {
        FitParams {
            epochs: self.evaluator_epochs,
            lr: self.evaluator_lr,
        }
    }

    pub fn accept_rule(&self) -> AcceptRule {
        AcceptRule::Evaluator {
            threshold: self.accept_threshold,
        }
    }

    /// Fresh embedding model per this config (seeded initialization).
    pub fn build_autoencoder(&self) -> Result<Autoencoder> {
        Autoencoder::from_dims(
            self.source.raw_dim,
            &self.encoder_hidden,
            self.embed_dim,
            &self.decoder_hidden,
            self.seed,
        )
    }

    /// Stream settings with the given decision rule (the evaluator rule in
    /// normal runs; a raw-distance rule for baseline comparisons).
    pub fn stream_config_with_rule(&self, rule: AcceptRule) -> StreamConfig {
        StreamConfig {
            episode: self.episode,
            seed: self.seed,
            accept_rule: rule,
            k_negative_galleries: self.k_negative_galleries,
            single_class_dmin_threshold: self.single_class_dmin_threshold,
            confidence_threshold: self.confidence_threshold,
            online_lr: self.online_lr,
            online_batch: self.online_batch,
            freeze_encoder: self.freeze_encoder,
            exchange_every: self.exchange_every,
            gallery_cap: self.gallery_cap,
            evaluator_fit: self.fit_params(),
        }
    }

    pub fn stream_config(&self) -> StreamConfig {
        self.stream_config_with_rule(self.accept_rule())
    }
}
