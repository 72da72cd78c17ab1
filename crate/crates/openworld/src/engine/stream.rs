//! The open-world streaming loop: per epoch, rebuild the registry from the
//! enrolled galleries (re-embedded with the current encoder), stream a
//! seeded mix of enrolled and never-seen queries through the membership
//! decision, adapt the autoencoder online on unlabeled batches, and at
//! epoch end feed confidently scored encounters to both evaluators.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{mixed_sampler, Dataset, EpisodeConfig};
use crate::error::{Error, Result};
use crate::evaluator::{exchange, ConfidenceGate, EvaluatorModel, FitParams};
use crate::meta::MetaFeatureRecord;
use crate::neural::{apply_step, mse_loss, Autoencoder};
use crate::types::Domain;

use super::decide::{decide, AcceptRule};
use super::registry::IdentityRegistry;

/// Per-query log schema, one row per streamed query.
pub const OUTCOME_CSV_HEADER: &str =
    "query_id,true_label,candidate_label,d_min,probability,decision,assigned_label,epoch";

/// Per-epoch metrics schema shared by all metric emitters.
pub const METRICS_CSV_HEADER: &str = "epoch,domain,same_class_acc,diff_class_acc,mse";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionKind {
    Accepted,
    EnrolledNew,
}

impl DecisionKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            DecisionKind::Accepted => "accepted",
            DecisionKind::EnrolledNew => "enrolled_new",
        }
    }
}

/// One streamed query's outcome. Candidate fields are absent only for an
/// unconditional cold-start enrollment into an empty registry.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeRow {
    pub query_id: usize,
    pub true_label: u32,
    pub candidate_label: Option<u32>,
    pub d_min: Option<f64>,
    pub probability: Option<f64>,
    pub decision: DecisionKind,
    pub assigned_label: u32,
    pub epoch: usize,
}

impl OutcomeRow {
    pub fn to_csv_row(&self) -> String {
        let opt_u32 = |v: &Option<u32>| v.map(|x| x.to_string()).unwrap_or_default();
        let opt_f64 = |v: &Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{}",
            self.query_id,
            self.true_label,
            opt_u32(&self.candidate_label),
            opt_f64(&self.d_min),
            opt_f64(&self.probability),
            self.decision.as_str(),
            self.assigned_label,
            self.epoch
        )
    }
}

/// Per-epoch tallies. Same-class means the query truly belongs to its
/// nearest candidate; different-class means it does not. Accuracy is
/// correct accepts (respectively correct rejects) over that denominator,
/// `None` when the denominator is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamState {
    pub epoch: usize,
    pub domain: Domain,
    pub same_correct: usize,
    pub same_total: usize,
    pub diff_correct: usize,
    pub diff_total: usize,
    /// Mean pre-update batch reconstruction error for the epoch; when
    /// online updates are disabled, the evaluation-only mean over the
    /// epoch's queries.
    pub mse: f64,
}

impl StreamState {
    pub fn same_class_accuracy(&self) -> Option<f64> {
        (self.same_total > 0).then(|| self.same_correct as f64 / self.same_total as f64)
    }

    pub fn diff_class_accuracy(&self) -> Option<f64> {
        (self.diff_total > 0).then(|| self.diff_correct as f64 / self.diff_total as f64)
    }

    pub fn to_csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
        format!(
            "{},{},{},{},{:?}",
            self.epoch,
            self.domain,
            opt(self.same_class_accuracy()),
            opt(self.diff_class_accuracy()),
            self.mse
        )
    }
}

/// Everything `run_stream` needs beyond the models and data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamConfig {
    pub episode: EpisodeConfig,
    pub seed: u64,
    pub accept_rule: AcceptRule,
    pub k_negative_galleries: usize,
    /// Accept threshold on d_min while the registry holds a single
    /// identity and the evaluator has no negatives to measure against.
    pub single_class_dmin_threshold: f64,
    /// Minimum evaluator confidence for an encounter to become a
    /// soft-labeled training record.
    pub confidence_threshold: f64,
    /// Flat learning rate of the online reconstruction updates.
    pub online_lr: f64,
    /// Queries per online update; 0 disables online adaptation.
    pub online_batch: usize,
    pub freeze_encoder: bool,
    /// Exchange evaluator knowledge every this many epochs; 0 disables.
    pub exchange_every: usize,
    pub gallery_cap: usize,
    pub evaluator_fit: FitParams,
}

impl StreamConfig {
    pub fn validate(&self) -> Result<()> {
        self.episode.validate()?;
        self.accept_rule.validate()?;
        if self.k_negative_galleries == 0 {
            return Err(Error::InvalidConfig("k_negative_galleries must be at least 1".into()));
        }
        if !(self.single_class_dmin_threshold > 0.0) || !self.single_class_dmin_threshold.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "single_class_dmin_threshold must be positive, got {}",
                self.single_class_dmin_threshold
            )));
        }
        ConfidenceGate::new(self.confidence_threshold)?;
        if self.online_batch > 0 && (!(self.online_lr > 0.0) || !self.online_lr.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "online_lr must be positive, got {}",
                self.online_lr
            )));
        }
        if self.gallery_cap == 0 {
            return Err(Error::InvalidConfig("gallery_cap must be at least 1".into()));
        }
        self.evaluator_fit.validate()?;
        Ok(())
    }
}

/// Everything a finished stream reports.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamReport {
    pub states: Vec<StreamState>,
    pub outcomes: Vec<OutcomeRow>,
    /// Confident records harvested per epoch.
    pub gated_per_epoch: Vec<usize>,
    pub exchanges: usize,
}

impl StreamReport {
    pub fn outcomes_csv(&self) -> String {
        let mut out = String::from(OUTCOME_CSV_HEADER);
        out.push('\n');
        for row in &self.outcomes {
            out.push_str(&row.to_csv_row());
            out.push('\n');
        }
        out
    }

    pub fn metrics_csv(&self) -> String {
        let mut out = String::from(METRICS_CSV_HEADER);
        out.push('\n');
        for state in &self.states {
            out.push_str(&state.to_csv_row());
            out.push('\n');
        }
        out
    }
}

/// One unlabeled adaptation step: a single SGD step on the batch's mean
/// reconstruction error. Returns the pre-update batch MSE. With
/// `freeze_encoder` only the decoder moves.
pub fn online_update(
    autoencoder: &mut Autoencoder,
    learning_rate: f64,
    batch: &[Vec<f64>],
    freeze_encoder: bool,
) -> Result<f64> {
    let (mse, mut grads) = autoencoder.reconstruction_grads(batch)?;
    if !mse.is_finite() {
        return Err(Error::TrainingDiverged(format!(
            "non-finite reconstruction loss {mse} in online update"
        )));
    }
    if freeze_encoder {
        grads.encoder.iter_mut().for_each(|g| g.zero());
    }
    apply_step(autoencoder, &grads, learning_rate)?;
    Ok(mse)
}

/// Per-epoch sampler seed: distinct per epoch, stable per (seed, epoch).
fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Run the full open-world stream over `target`.
///
/// Each epoch is one independent pass through an open world backed by the
/// same enrolled population: the registry is rebuilt from the enrolled
/// galleries (re-embedded with the current, online-adapted encoder, so
/// registry and query embeddings always come from the same model state),
/// while the fresh-label counter carries across epochs so labels are never
/// reused. Novel identities encountered mid-epoch are enrolled and may be
/// re-encountered within that epoch.
///
/// Enrolled identities keep their dataset identity as registry label;
/// fresh labels start above every dataset identity, which is what makes
/// outcome logs self-describing (a candidate label never seen as an
/// `enrolled_new` assignment is an enrolled identity).
pub fn run_stream(
    autoencoder: &mut Autoencoder,
    source_evaluator: &mut EvaluatorModel,
    target_evaluator: &mut EvaluatorModel,
    target: &Dataset,
    source_records: &[MetaFeatureRecord],
    config: &StreamConfig,
) -> Result<StreamReport> {
    config.validate()?;
    if !source_evaluator.is_fitted() || !target_evaluator.is_fitted() {
        return Err(Error::NotFitted(
            "run_stream requires bootstrapped evaluators".into(),
        ));
    }
    let gate = ConfidenceGate::new(config.confidence_threshold)?;
    let enrolled_ids = target.gallery_ids();
    let gallery_rows = target.rows_by_id(crate::types::Split::Gallery);
    // Fresh labels live strictly above the dataset's identity space.
    let mut next_label = target.ids().last().map_or(0, |max| max + 1);

    let mut report = StreamReport {
        states: Vec::with_capacity(config.episode.epochs),
        outcomes: Vec::new(),
        gated_per_epoch: Vec::with_capacity(config.episode.epochs),
        exchanges: 0,
    };
    let mut gated_pool: Vec<MetaFeatureRecord> = Vec::new();
    let mut query_id = 0usize;

    for epoch in 0..config.episode.epochs {
        let mut registry = IdentityRegistry::new(config.gallery_cap, next_label)?;
        // truth maps every registry label to the dataset identity it
        // stands for; it is what the accuracy tallies compare against.
        let mut truth: BTreeMap<u32, u32> = BTreeMap::new();
        for (&id, rows) in &gallery_rows {
            let gallery = rows
                .iter()
                .map(|&i| autoencoder.encode(&target.rows[i].features))
                .collect::<Result<Vec<_>>>()?;
            registry.seed_identity(id, gallery)?;
            truth.insert(id, id);
        }

        let stream = mixed_sampler(target, &enrolled_ids, &config.episode, epoch_seed(config.seed, epoch))?;

        let mut tallies = (0usize, 0usize, 0usize, 0usize); // same_correct, same_total, diff_correct, diff_total
        let mut scored: Vec<(MetaFeatureRecord, f64)> = Vec::new();
        let mut raw_batch: Vec<Vec<f64>> = Vec::new();
        let mut batch_mses: Vec<f64> = Vec::new();

        for &row_index in &stream {
            let row = &target.rows[row_index];
            let embedding = autoencoder.encode(&row.features)?;

            if registry.is_empty() {
                let assigned = registry.enroll(embedding);
                truth.insert(assigned, row.id);
                report.outcomes.push(OutcomeRow {
                    query_id,
                    true_label: row.id,
                    candidate_label: None,
                    d_min: None,
                    probability: None,
                    decision: DecisionKind::EnrolledNew,
                    assigned_label: assigned,
                    epoch,
                });
            } else {
                let decision = decide(
                    &embedding,
                    &registry,
                    target_evaluator,
                    &config.accept_rule,
                    config.k_negative_galleries,
                    config.single_class_dmin_threshold,
                )?;
                let same_class = truth[&decision.candidate_label] == row.id;
                match (same_class, decision.accepted) {
                    (true, accepted) => {
                        tallies.1 += 1;
                        tallies.0 += usize::from(accepted);
                    }
                    (false, accepted) => {
                        tallies.3 += 1;
                        tallies.2 += usize::from(!accepted);
                    }
                }
                if let (Some(record), Some(p)) = (&decision.record, decision.probability) {
                    scored.push((record.clone(), p));
                }
                let assigned = if decision.accepted {
                    registry.append(decision.candidate_label, embedding)?;
                    decision.candidate_label
                } else {
                    let fresh = registry.enroll(embedding);
                    truth.insert(fresh, row.id);
                    fresh
                };
                report.outcomes.push(OutcomeRow {
                    query_id,
                    true_label: row.id,
                    candidate_label: Some(decision.candidate_label),
                    d_min: Some(decision.d_min),
                    probability: decision.probability,
                    decision: if decision.accepted {
                        DecisionKind::Accepted
                    } else {
                        DecisionKind::EnrolledNew
                    },
                    assigned_label: assigned,
                    epoch,
                });
            }
            query_id += 1;

            if config.online_batch > 0 {
                raw_batch.push(row.features.clone());
                if raw_batch.len() == config.online_batch {
                    batch_mses.push(online_update(
                        autoencoder,
                        config.online_lr,
                        &raw_batch,
                        config.freeze_encoder,
                    )?);
                    raw_batch.clear();
                }
            }
        }
        // A trailing partial batch is dropped: epochs are independent
        // passes and update cadence stays exactly `online_batch`.

        let mse = if batch_mses.is_empty() {
            let mut total = 0.0;
            for &row_index in &stream {
                let x = &target.rows[row_index].features;
                total += mse_loss(x, &autoencoder.reconstruct(x)?)?;
            }
            total / stream.len() as f64
        } else {
            batch_mses.iter().sum::<f64>() / batch_mses.len() as f64
        };

        let gated = gate.gate_confident(&scored);
        report.gated_per_epoch.push(gated.len());
        gated_pool.extend(gated);
        if config.exchange_every > 0 && (epoch + 1) % config.exchange_every == 0 && !gated_pool.is_empty() {
            exchange(
                source_evaluator,
                target_evaluator,
                source_records,
                &gated_pool,
                config.evaluator_fit,
            )?;
            report.exchanges += 1;
        }

        report.states.push(StreamState {
            epoch,
            domain: target.domain,
            same_correct: tallies.0,
            same_total: tallies.1,
            diff_correct: tallies.2,
            diff_total: tallies.3,
            mse,
        });
        next_label = registry.next_label();
    }
    Ok(report)
}
