//! Source-domain pretraining (triplet + reconstruction on labeled data)
//! and evaluator bootstrapping from source meta-features.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::evaluator::{EvaluatorModel, FitParams};
use crate::meta::{extract_meta_features, MetaFeatureRecord};
use crate::neural::{sgd_step, Autoencoder, GradientSet};
use crate::objectives::{combined_source_loss, euclidean, triplet_loss, TripletConfig, TripletMining};
use crate::types::{Domain, Embedding, Split};

/// Per-epoch pretraining log schema.
pub const TRAIN_METRICS_CSV_HEADER: &str = "epoch,triplet_loss,mse_loss,combined_loss,effective_lr";

/// Mean losses of one pretraining epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainEpoch {
    pub epoch: usize,
    pub triplet_loss: f64,
    pub mse_loss: f64,
    pub combined_loss: f64,
    pub effective_lr: f64,
}

impl TrainEpoch {
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{:?},{:?},{:?},{:?}",
            self.epoch, self.triplet_loss, self.mse_loss, self.combined_loss, self.effective_lr
        )
    }
}

pub fn train_metrics_csv(epochs: &[TrainEpoch]) -> String {
    let mut out = String::from(TRAIN_METRICS_CSV_HEADER);
    out.push('\n');
    for e in epochs {
        out.push_str(&e.to_csv_row());
        out.push('\n');
    }
    out
}

/// Draw one identity-balanced batch: `p` distinct identities, `k` rows
/// each (without replacement when an identity has at least `k` rows).
fn sample_pk_batch<'a>(
    by_id: &BTreeMap<u32, Vec<&'a [f64]>>,
    p: usize,
    k: usize,
    rng: &mut ChaCha8Rng,
) -> (Vec<Vec<f64>>, Vec<u32>) {
    let ids: Vec<u32> = by_id.keys().copied().collect();
    let chosen: Vec<u32> = {
        let mut pool = ids.clone();
        pool.shuffle(rng);
        pool.truncate(p.min(pool.len()));
        pool
    };
    let mut inputs = Vec::with_capacity(chosen.len() * k);
    let mut labels = Vec::with_capacity(chosen.len() * k);
    for id in chosen {
        let rows = &by_id[&id];
        if rows.len() >= k {
            let mut indices: Vec<usize> = (0..rows.len()).collect();
            indices.shuffle(rng);
            for &i in indices.iter().take(k) {
                inputs.push(rows[i].to_vec());
                labels.push(id);
            }
        } else {
            for _ in 0..k {
                inputs.push(rows[rng.gen_range(0..rows.len())].to_vec());
                labels.push(id);
            }
        }
    }
    (inputs, labels)
}

/// One combined step: gradients of `triplet + lambda * reconstruction`
/// accumulated in a single set, one optimizer step. Returns
/// (triplet, mse, combined) losses at the pre-step parameters.
fn combined_step(
    autoencoder: &mut Autoencoder,
    inputs: &[Vec<f64>],
    labels: &[u32],
    triplet_config: &TripletConfig,
    lambda: f64,
    optimizer: &crate::neural::SgdOptimizer,
) -> Result<(f64, f64, f64)> {
    let mut grads = GradientSet::zeros_like(autoencoder);

    // Reconstruction branch scales its gradients by lambda so both
    // objectives land in one gradient set. lambda = 0 still reports the
    // MSE but contributes no gradient.
    let mse = if lambda > 0.0 {
        autoencoder.reconstruction_grads_scaled(inputs, lambda, &mut grads)?
    } else {
        let mut total = 0.0;
        for x in inputs {
            total += crate::neural::mse_loss(x, &autoencoder.reconstruct(x)?)?;
        }
        total / inputs.len() as f64
    };

    // Triplet branch: embedding gradients backpropagated through the
    // encoder only.
    let traces = inputs
        .iter()
        .map(|x| autoencoder.encoder().forward_trace(x))
        .collect::<Result<Vec<_>>>()?;
    let embeddings: Vec<Vec<f64>> = traces.iter().map(|t| t.output().to_vec()).collect();
    let (triplet, d_embeddings) = triplet_loss(&embeddings, labels, triplet_config)?;
    for (trace, d_embedding) in traces.iter().zip(&d_embeddings) {
        autoencoder.encoder().backward(trace, d_embedding, &mut grads.encoder);
    }

    sgd_step(optimizer, autoencoder, &grads)?;
    let combined = combined_source_loss(triplet, mse, lambda)?;
    Ok((triplet, mse, combined))
}

/// Pretrain the embedding model on the labeled source training split.
/// Epoch `e` runs at `base_lr * gamma^floor(e / decay_every)`; batch
/// composition is seeded and independent of the model-init seed stream.
pub fn pretrain(autoencoder: &mut Autoencoder, source: &Dataset, config: &RunConfig) -> Result<Vec<TrainEpoch>> {
    let by_id_rows = source.rows_by_id(Split::Train);
    let by_id: BTreeMap<u32, Vec<&[f64]>> = by_id_rows
        .iter()
        .map(|(id, rows)| (*id, rows.iter().map(|&i| source.rows[i].features.as_slice()).collect()))
        .collect();
    if by_id.len() < 2 {
        return Err(Error::DegenerateTraining(format!(
            "pretraining needs at least 2 identities with training rows, found {}",
            by_id.len()
        )));
    }
    let total_rows: usize = by_id.values().map(Vec::len).sum();
    let batch_size = config.batch_p * config.batch_k;
    let batches_per_epoch = (total_rows / batch_size).max(1);

    let triplet_config = TripletConfig {
        margin: config.margin,
        mining: TripletMining::BatchHard,
    };
    let mut optimizer = config.optimizer();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1); // batch stream, disjoint from the init stream

    let mut log = Vec::with_capacity(config.train_epochs);
    for epoch in 0..config.train_epochs {
        optimizer.set_epoch(epoch as u32);
        let mut sums = (0.0, 0.0, 0.0);
        for _ in 0..batches_per_epoch {
            let (inputs, labels) = sample_pk_batch(&by_id, config.batch_p, config.batch_k, &mut rng);
            let (t, m, c) = combined_step(
                autoencoder,
                &inputs,
                &labels,
                &triplet_config,
                config.lambda,
                &optimizer,
            )?;
            sums.0 += t;
            sums.1 += m;
            sums.2 += c;
        }
        let n = batches_per_epoch as f64;
        log.push(TrainEpoch {
            epoch,
            triplet_loss: sums.0 / n,
            mse_loss: sums.1 / n,
            combined_loss: sums.2 / n,
            effective_lr: optimizer.effective_lr(),
        });
    }
    Ok(log)
}

/// Truth-labeled meta-feature records from the source domain.
///
/// Every source query row yields positive records against its own gallery
/// and negative records against the nearest other gallery. Candidate
/// galleries are also sub-sampled (down to two members and a singleton) so
/// the evaluator learns what freshly enrolled, thin galleries look like;
/// negatives come in two flavors, with the anchor's own gallery among the
/// measured negatives (a registered identity near a wrong candidate) and
/// without it (a never-registered identity).
pub fn bootstrap_source_records(autoencoder: &Autoencoder, source: &Dataset) -> Result<Vec<MetaFeatureRecord>> {
    let k = crate::meta::DEFAULT_NEGATIVE_GALLERIES;
    let gallery_rows = source.rows_by_id(Split::Gallery);
    if gallery_rows.len() < 2 {
        return Err(Error::DegenerateTraining(format!(
            "evaluator bootstrap needs at least 2 galleries, found {}",
            gallery_rows.len()
        )));
    }
    let galleries: BTreeMap<u32, Vec<Embedding>> = gallery_rows
        .iter()
        .map(|(id, rows)| {
            let g = rows
                .iter()
                .map(|&i| autoencoder.encode(&source.rows[i].features))
                .collect::<Result<Vec<_>>>()?;
            Ok((*id, g))
        })
        .collect::<Result<_>>()?;
    let ids: Vec<u32> = galleries.keys().copied().collect();

    let subset_sizes = |len: usize| {
        let mut sizes = vec![len, 2, 1];
        sizes.retain(|s| *s >= 1 && *s <= len);
        sizes.dedup();
        sizes
    };

    let mut records = Vec::new();
    for row in source.rows.iter().filter(|r| r.split == Split::Query) {
        let anchor = autoencoder.encode(&row.features)?;
        let own = &galleries[&row.id];

        // Positive records: anchor against its own gallery at several
        // gallery sizes; all other galleries are the negatives.
        let negatives: Vec<&[Embedding]> = ids
            .iter()
            .filter(|id| **id != row.id)
            .map(|id| galleries[id].as_slice())
            .collect();
        for size in subset_sizes(own.len()) {
            records.push(
                extract_meta_features(&anchor, &own[..size], &negatives, k, Domain::Source)?
                    .with_true_label(true),
            );
        }

        // Negative records: anchor against the nearest wrong gallery.
        let nearest_other = ids
            .iter()
            .filter(|id| **id != row.id)
            .min_by(|a, b| {
                let da = gallery_distance(&anchor, &galleries[a]);
                let db = gallery_distance(&anchor, &galleries[b]);
                da.partial_cmp(&db).expect("finite distances").then(a.cmp(b))
            })
            .copied()
            .expect("at least two galleries");
        let candidate = &galleries[&nearest_other];
        for size in subset_sizes(candidate.len()) {
            // Registered-elsewhere flavor: own gallery measured as a
            // negative.
            let with_own: Vec<&[Embedding]> = ids
                .iter()
                .filter(|id| **id != nearest_other)
                .map(|id| galleries[id].as_slice())
                .collect();
            records.push(
                extract_meta_features(&anchor, &candidate[..size], &with_own, k, Domain::Source)?
                    .with_true_label(false),
            );
            // Never-registered flavor: own gallery invisible.
            let without_own: Vec<&[Embedding]> = ids
                .iter()
                .filter(|id| **id != nearest_other && **id != row.id)
                .map(|id| galleries[id].as_slice())
                .collect();
            if !without_own.is_empty() {
                records.push(
                    extract_meta_features(&anchor, &candidate[..size], &without_own, k, Domain::Source)?
                        .with_true_label(false),
                );
            }
        }
    }
    Ok(records)
}

fn gallery_distance(anchor: &[f64], gallery: &[Embedding]) -> f64 {
    gallery
        .iter()
        .map(|m| euclidean(anchor, m))
        .fold(f64::INFINITY, f64::min)
}

/// Fit the source evaluator on truth-labeled source records and hand the
/// target evaluator the same starting knowledge (it has seen no target
/// data yet; exchange adapts it during the stream).
pub fn bootstrap_evaluators(
    records: &[MetaFeatureRecord],
    params: FitParams,
) -> Result<(EvaluatorModel, EvaluatorModel)> {
    let mut source = EvaluatorModel::new(Domain::Source);
    source.fit(records, params)?;
    let mut target = EvaluatorModel::new(Domain::Target);
    target.fit(records, params)?;
    Ok((source, target))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_domain;

    fn small_config() -> RunConfig {
        let mut config = RunConfig::reference();
        config.source.num_identities = 6;
        config.source.samples_per_identity = 10;
        config.source.raw_dim = 8;
        config.target.num_identities = 6;
        config.target.samples_per_identity = 10;
        config.target.raw_dim = 8;
        config.embed_dim = 4;
        config.encoder_hidden = vec![16];
        config.decoder_hidden = vec![16];
        config.train_epochs = 8;
        config
    }

    fn source_data(config: &RunConfig) -> Dataset {
        generate_domain(&config.source, config.seed, crate::config::SOURCE_ID_BASE).unwrap()
    }

    #[test]
    fn pretraining_descends_and_logs_the_lr_schedule() {
        let mut config = small_config();
        config.train_epochs = 25;
        config.decay_every = 10;
        let data = source_data(&config);
        let mut ae = config.build_autoencoder().unwrap();
        let log = pretrain(&mut ae, &data, &config).unwrap();
        assert_eq!(log.len(), 25);
        let first = &log[0];
        let last = &log[24];
        assert!(
            last.combined_loss < first.combined_loss,
            "combined loss must descend: {} -> {}",
            first.combined_loss,
            last.combined_loss
        );
        assert_eq!(log[9].effective_lr, config.base_lr);
        assert_eq!(log[10].effective_lr, config.base_lr * config.gamma, "decay visible at the boundary");
        assert_eq!(log[20].effective_lr, config.base_lr * config.gamma * config.gamma);
    }

    #[test]
    fn zero_epochs_leaves_the_model_at_init() {
        let mut config = small_config();
        config.train_epochs = 0;
        let data = source_data(&config);
        let mut ae = config.build_autoencoder().unwrap();
        let init = ae.clone();
        let log = pretrain(&mut ae, &data, &config).unwrap();
        assert!(log.is_empty());
        assert_eq!(ae, init);
    }

    #[test]
    fn pretraining_is_deterministic() {
        let config = small_config();
        let data = source_data(&config);
        let mut a = config.build_autoencoder().unwrap();
        let mut b = config.build_autoencoder().unwrap();
        let log_a = pretrain(&mut a, &data, &config).unwrap();
        let log_b = pretrain(&mut b, &data, &config).unwrap();
        assert_eq!(a, b);
        assert_eq!(log_a, log_b);
    }

    #[test]
    fn single_identity_source_is_degenerate() {
        let config = small_config();
        let mut data = source_data(&config);
        let keep = data.rows[0].id;
        data.rows.retain(|r| r.id == keep);
        let mut ae = config.build_autoencoder().unwrap();
        assert!(matches!(
            pretrain(&mut ae, &data, &config),
            Err(Error::DegenerateTraining(_))
        ));
    }

    #[test]
    fn batches_are_identity_balanced() {
        let config = small_config();
        let data = source_data(&config);
        let by_id_rows = data.rows_by_id(Split::Train);
        let by_id: BTreeMap<u32, Vec<&[f64]>> = by_id_rows
            .iter()
            .map(|(id, rows)| (*id, rows.iter().map(|&i| data.rows[i].features.as_slice()).collect()))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (inputs, labels) = sample_pk_batch(&by_id, 4, 4, &mut rng);
        assert_eq!(inputs.len(), 16);
        let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
        for l in &labels {
            *counts.entry(*l).or_default() += 1;
        }
        assert_eq!(counts.len(), 4, "4 distinct identities");
        assert!(counts.values().all(|c| *c == 4), "4 samples each");
    }

    #[test]
    fn bootstrap_records_carry_both_labels_and_thin_galleries() {
        let config = small_config();
        let data = source_data(&config);
        let ae = config.build_autoencoder().unwrap();
        let records = bootstrap_source_records(&ae, &data).unwrap();
        let positives = records.iter().filter(|r| r.label == Some(true)).count();
        let negatives = records.iter().filter(|r| r.label == Some(false)).count();
        assert!(positives > 0 && negatives > 0);
        // Gallery size 2 per identity in this config: subset sizes {2, 1},
        // so singleton-candidate records exist on both sides.
        assert!(
            records.iter().any(|r| r.label == Some(true) && r.cv_ap == 0.0),
            "singleton positive present (cv of one distance is 0)"
        );
        assert!(
            records.iter().any(|r| r.label == Some(false) && r.cv_ap == 0.0),
            "singleton negative present"
        );
    }

    #[test]
    fn bootstrapped_evaluators_separate_source_truth_after_training() {
        let mut config = small_config();
        config.train_epochs = 30;
        let data = source_data(&config);
        let mut ae = config.build_autoencoder().unwrap();
        pretrain(&mut ae, &data, &config).unwrap();
        let records = bootstrap_source_records(&ae, &data).unwrap();
        let (source_eval, target_eval) = bootstrap_evaluators(&records, config.fit_params()).unwrap();
        assert_eq!(source_eval.domain(), Domain::Source);
        assert_eq!(target_eval.domain(), Domain::Target);
        let accuracy = source_eval.accuracy(&records).unwrap();
        assert!(accuracy >= 0.9, "source evaluator fits its own records: {accuracy}");
    }
}
