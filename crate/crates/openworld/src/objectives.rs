//! Training objectives for the embedding space: Euclidean pairwise
//! distances, margin-based triplet loss with batch-hard mining, and the
//! combined metric + reconstruction objective.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How triplets are selected within a batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TripletMining {
    /// Per anchor, the farthest positive against the nearest negative.
    BatchHard,
    /// Mean hinge over every valid (anchor, positive, negative) triplet.
    AllValid,
}

/// Margin and mining mode for the triplet objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TripletConfig {
    pub margin: f64,
    pub mining: TripletMining,
}

impl Default for TripletConfig {
    fn default() -> Self {
        TripletConfig {
            margin: 0.3,
            mining: TripletMining::BatchHard,
        }
    }
}

impl TripletConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin >= 0.0) || !self.margin.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "margin must be non-negative, got {}",
                self.margin
            )));
        }
        Ok(())
    }
}

/// Shape of an identity-balanced training batch: `identities_per_batch`
/// distinct identities with `samples_per_identity` samples each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchSpec {
    pub identities_per_batch: usize,
    pub samples_per_identity: usize,
}

impl BatchSpec {
    pub fn validate(&self) -> Result<()> {
        if self.identities_per_batch < 2 {
            return Err(Error::InvalidConfig(format!(
                "batch_p: need at least 2 identities per batch, got {}",
                self.identities_per_batch
            )));
        }
        if self.samples_per_identity < 2 {
            return Err(Error::InvalidConfig(format!(
                "batch_k: need at least 2 samples per identity, got {}",
                self.samples_per_identity
            )));
        }
        Ok(())
    }

    pub fn batch_size(&self) -> usize {
        self.identities_per_batch * self.samples_per_identity
    }
}

/// Symmetric matrix of Euclidean distances with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        assert!(i < self.n && j < self.n, "distance index out of range");
        self.data[i * self.n + j]
    }
}

/// Plain (non-squared) Euclidean distance.
pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "distance between mismatched dims");
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// All pairwise Euclidean distances among `embeddings`.
pub fn pairwise_distances(embeddings: &[Vec<f64>]) -> Result<DistanceMatrix> {
    if embeddings.is_empty() {
        return Err(Error::EmptyInput("pairwise distances of empty list".into()));
    }
    let dim = embeddings[0].len();
    if let Some(bad) = embeddings.iter().find(|e| e.len() != dim) {
        return Err(Error::ShapeMismatch(format!(
            "embedding dims differ: {} vs {}",
            dim,
            bad.len()
        )));
    }
    let n = embeddings.len();
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = euclidean(&embeddings[i], &embeddings[j]);
            data[i * n + j] = d;
            data[j * n + i] = d;
        }
    }
    Ok(DistanceMatrix { n, data })
}

/// Triplet loss over a labeled batch of embeddings, together with the
/// gradient of the loss with respect to each embedding.
///
/// Batch-hard mining: every sample with at least one same-label partner is
/// an anchor; its term is `max(0, max_p d(a,p) - min_n d(a,n) + margin)`,
/// averaged over anchors. Anchors without a valid positive are skipped, so
/// ragged batches still train; a batch with no negatives at all, or no
/// anchor with a positive, is rejected.
pub fn triplet_loss(
    embeddings: &[Vec<f64>],
    labels: &[u32],
    config: &TripletConfig,
) -> Result<(f64, Vec<Vec<f64>>)> {
    config.validate()?;
    if embeddings.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} embeddings vs {} labels",
            embeddings.len(),
            labels.len()
        )));
    }
    let distances = pairwise_distances(embeddings)?;
    let n = embeddings.len();
    let distinct = {
        let mut seen: Vec<u32> = labels.to_vec();
        seen.sort_unstable();
        seen.dedup();
        seen.len()
    };
    if distinct < 2 {
        return Err(Error::InvalidBatch(
            "triplet loss needs at least two identities in the batch".into(),
        ));
    }

    match config.mining {
        TripletMining::BatchHard => batch_hard(embeddings, labels, &distances, config.margin, n),
        TripletMining::AllValid => all_valid(embeddings, labels, &distances, config.margin, n),
    }
}

fn batch_hard(
    embeddings: &[Vec<f64>],
    labels: &[u32],
    distances: &DistanceMatrix,
    margin: f64,
    n: usize,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let dim = embeddings[0].len();
    // First pass: find each anchor's hardest positive/negative.
    let mut picks = Vec::new();
    for a in 0..n {
        let mut hardest_pos: Option<usize> = None;
        let mut hardest_neg: Option<usize> = None;
        for o in 0..n {
            if o == a {
                continue;
            }
            if labels[o] == labels[a] {
                if hardest_pos.map_or(true, |p| distances.get(a, o) > distances.get(a, p)) {
                    hardest_pos = Some(o);
                }
            } else if hardest_neg.map_or(true, |m| distances.get(a, o) < distances.get(a, m)) {
                hardest_neg = Some(o);
            }
        }
        if let (Some(p), Some(neg)) = (hardest_pos, hardest_neg) {
            picks.push((a, p, neg));
        }
    }
    if picks.is_empty() {
        return Err(Error::InvalidBatch(
            "no anchor has both a positive and a negative in the batch".into(),
        ));
    }

    let count = picks.len() as f64;
    let mut total = 0.0;
    let mut grads = vec![vec![0.0; dim]; n];
    for &(a, p, neg) in &picks {
        let d_ap = distances.get(a, p);
        let d_an = distances.get(a, neg);
        let term = d_ap - d_an + margin;
        if term <= 0.0 {
            continue;
        }
        total += term;
        // d‖y_a - y_p‖ / d y_a = (y_a - y_p) / d_ap; subgradient 0 at 0.
        add_distance_grad(&mut grads, embeddings, a, p, d_ap, 1.0 / count);
        add_distance_grad(&mut grads, embeddings, a, neg, d_an, -1.0 / count);
    }
    Ok((total / count, grads))
}

fn all_valid(
    embeddings: &[Vec<f64>],
    labels: &[u32],
    distances: &DistanceMatrix,
    margin: f64,
    n: usize,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let dim = embeddings[0].len();
    let mut triplets = Vec::new();
    for a in 0..n {
        for p in 0..n {
            if p == a || labels[p] != labels[a] {
                continue;
            }
            for neg in 0..n {
                if labels[neg] != labels[a] {
                    triplets.push((a, p, neg));
                }
            }
        }
    }
    if triplets.is_empty() {
        return Err(Error::InvalidBatch(
            "no valid (anchor, positive, negative) triplet in the batch".into(),
        ));
    }
    let count = triplets.len() as f64;
    let mut total = 0.0;
    let mut grads = vec![vec![0.0; dim]; n];
    for &(a, p, neg) in &triplets {
        let term = distances.get(a, p) - distances.get(a, neg) + margin;
        if term <= 0.0 {
            continue;
        }
        total += term;
        add_distance_grad(&mut grads, embeddings, a, p, distances.get(a, p), 1.0 / count);
        add_distance_grad(&mut grads, embeddings, a, neg, distances.get(a, neg), -1.0 / count);
    }
    Ok((total / count, grads))
}

/// Accumulate `weight * d‖y_i - y_j‖` into the gradients of both endpoints.
fn add_distance_grad(
    grads: &mut [Vec<f64>],
    embeddings: &[Vec<f64>],
    i: usize,
    j: usize,
    distance: f64,
    weight: f64,
) {
    if distance == 0.0 {
        return;
    }
    let scale = weight / distance;
    for k in 0..embeddings[i].len() {
        let diff = embeddings[i][k] - embeddings[j][k];
        grads[i][k] += scale * diff;
        grads[j][k] -= scale * diff;
    }
}

/// Combined objective used on the labeled domain:
/// `triplet + lambda * reconstruction_mse`.
pub fn combined_source_loss(triplet: f64, mse: f64, lambda: f64) -> Result<f64> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "lambda must be non-negative, got {lambda}"
        )));
    }
    let combined = triplet + lambda * mse;
    if !combined.is_finite() {
        return Err(Error::TrainingDiverged(format!(
            "combined loss is not finite: triplet {triplet}, mse {mse}"
        )));
    }
    Ok(combined)
}
