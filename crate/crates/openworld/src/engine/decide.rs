//! Per-query membership decision: does the query belong to its nearest
//! registered identity, or is it someone new?

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluator::EvaluatorModel;
use crate::meta::{extract_meta_features, MetaFeatureRecord};
use crate::types::Embedding;

use super::registry::IdentityRegistry;

/// How accept/enroll is decided. The evaluator rule is the real system;
/// the raw-distance threshold exists as a baseline that runs through the
/// identical stream protocol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum AcceptRule {
    /// Accept when the evaluator's same-class probability reaches
    /// `threshold`.
    Evaluator { threshold: f64 },
    /// Accept when the nearest-member distance is at most `max_d`.
    DminThreshold { max_d: f64 },
}

impl AcceptRule {
    pub fn validate(&self) -> Result<()> {
        match self {
            AcceptRule::Evaluator { threshold } => {
                if !(0.0..=1.0).contains(threshold) {
                    return Err(Error::InvalidConfig(format!(
                        "accept_threshold must lie in [0, 1], got {threshold}"
                    )));
                }
            }
            AcceptRule::DminThreshold { max_d } => {
                if !(max_d > &0.0) || !max_d.is_finite() {
                    return Err(Error::InvalidConfig(format!(
                        "d_min threshold must be positive, got {max_d}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Outcome of one membership decision. `record` is absent only when the
/// registry holds a single identity, where no negative galleries exist to
/// measure against.
#[derive(Debug, Clone)]
pub struct Decision {
    pub candidate_label: u32,
    pub d_min: f64,
    /// Evaluator same-class probability; present whenever a meta-feature
    /// record could be built and the evaluator is fitted.
    pub probability: Option<f64>,
    pub accepted: bool,
    pub record: Option<MetaFeatureRecord>,
}

/// Decide membership of `query` (an embedding) against the registry.
///
/// The query is summarized by distance-shape features against the nearest
/// candidate's gallery and the `k_negative_galleries` nearest other
/// galleries, and the evaluator scores same-class membership. With a
/// single registered identity there are no negatives, so the evaluator is
/// inapplicable and acceptance falls back to `single_class_dmin_threshold`
/// on the raw nearest distance.
pub fn decide(
    query: &Embedding,
    registry: &IdentityRegistry,
    evaluator: &EvaluatorModel,
    rule: &AcceptRule,
    k_negative_galleries: usize,
    single_class_dmin_threshold: f64,
) -> Result<Decision> {
    rule.validate()?;
    let candidate = registry.nearest_candidate(query)?;

    let candidate_gallery = registry
        .gallery(candidate.label)
        .expect("nearest candidate label is registered");
    let negatives: Vec<&[Embedding]> = registry
        .galleries()
        .filter(|(label, _)| *label != candidate.label)
        .map(|(_, gallery)| gallery)
        .collect();

    let record = if negatives.is_empty() {
        None
    } else {
        Some(extract_meta_features(
            query,
            candidate_gallery,
            &negatives,
            k_negative_galleries,
            evaluator.domain(),
        )?)
    };
    let probability = match &record {
        Some(r) if evaluator.is_fitted() => Some(evaluator.predict(r)?),
        _ => None,
    };

    let accepted = match rule {
        AcceptRule::Evaluator { threshold } => match probability {
            Some(p) => p >= *threshold,
            // Single-identity registry: no negatives, no evaluator signal.
            None => candidate.d_min <= single_class_dmin_threshold,
        },
        AcceptRule::DminThreshold { max_d } => candidate.d_min <= *max_d,
    };

    Ok(Decision {
        candidate_label: candidate.label,
        d_min: candidate.d_min,
        probability,
        accepted,
        record,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::registry::DEFAULT_GALLERY_CAP;
    use crate::evaluator::FitParams;
    use crate::types::Domain;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Registry of `n` tight clusters spaced far apart on coordinate axes.
    fn clustered_registry(n: u32, members: usize, spread: f64) -> IdentityRegistry {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut r = IdentityRegistry::new(DEFAULT_GALLERY_CAP, 1_000).unwrap();
        for label in 0..n {
            let center: Vec<f64> = (0..n).map(|i| if i == label { 10.0 } else { 0.0 }).collect();
            let gallery: Vec<Vec<f64>> = (0..members)
                .map(|_| {
                    center
                        .iter()
                        .map(|c| c + rng.gen_range(-spread..spread))
                        .collect()
                })
                .collect();
            r.seed_identity(label, gallery).unwrap();
        }
        r
    }

    /// Evaluator fitted so that same-class layouts (tight candidate, far
    /// negatives) score high: train it on records generated from the same
    /// clustered geometry.
    fn fitted_evaluator(registry: &IdentityRegistry) -> EvaluatorModel {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut records = Vec::new();
        let labels: Vec<u32> = registry.labels().collect();
        for &label in &labels {
            let gallery = registry.gallery(label).unwrap();
            let negatives: Vec<&[Vec<f64>]> = labels
                .iter()
                .filter(|l| **l != label)
                .map(|l| registry.gallery(*l).unwrap())
                .collect();
            for member in gallery {
                // Same-class anchor: jitter a member.
                let anchor: Vec<f64> = member.iter().map(|v| v + rng.gen_range(-0.1..0.1)).collect();
                records.push(
                    extract_meta_features(&anchor, gallery, &negatives, 5, Domain::Source)
                        .unwrap()
                        .with_true_label(true),
                );
                // Different-class anchor: far from everything.
                let anchor: Vec<f64> = member.iter().map(|v| v + rng.gen_range(20.0..30.0)).collect();
                records.push(
                    extract_meta_features(&anchor, gallery, &negatives, 5, Domain::Source)
                        .unwrap()
                        .with_true_label(false),
                );
            }
        }
        let mut model = EvaluatorModel::new(Domain::Source);
        model.fit(&records, FitParams::default()).unwrap();
        model
    }

    #[test]
    fn duplicate_of_a_gallery_member_is_accepted() {
        let registry = clustered_registry(4, 6, 0.2);
        let evaluator = fitted_evaluator(&registry);
        let query = registry.gallery(2).unwrap()[0].clone();
        let d = decide(
            &query,
            &registry,
            &evaluator,
            &AcceptRule::Evaluator { threshold: 0.5 },
            5,
            1.0,
        )
        .unwrap();
        assert_eq!(d.candidate_label, 2);
        assert_eq!(d.d_min, 0.0);
        assert!(d.accepted, "probability {:?}", d.probability);
        assert!(d.record.is_some());
    }

    #[test]
    fn far_query_is_enrolled_as_new() {
        let registry = clustered_registry(4, 6, 0.2);
        let evaluator = fitted_evaluator(&registry);
        // 100x the intra-class radius away from every cluster.
        let query: Vec<f64> = (0..4).map(|_| 60.0).collect();
        let d = decide(
            &query,
            &registry,
            &evaluator,
            &AcceptRule::Evaluator { threshold: 0.5 },
            5,
            1.0,
        )
        .unwrap();
        assert!(!d.accepted, "probability {:?}", d.probability);
    }

    #[test]
    fn single_class_registry_falls_back_to_distance_threshold() {
        let mut registry = IdentityRegistry::new(DEFAULT_GALLERY_CAP, 1_000).unwrap();
        registry
            .seed_identity(0, vec![vec![0.0, 0.0], vec![0.1, 0.0]])
            .unwrap();
        let evaluator = fitted_evaluator(&clustered_registry(3, 4, 0.2));
        let rule = AcceptRule::Evaluator { threshold: 0.5 };
        let near = decide(&vec![0.05, 0.0], &registry, &evaluator, &rule, 5, 1.0).unwrap();
        assert!(near.accepted);
        assert!(near.probability.is_none(), "no negatives, no evaluator signal");
        assert!(near.record.is_none());
        let far = decide(&vec![5.0, 0.0], &registry, &evaluator, &rule, 5, 1.0).unwrap();
        assert!(!far.accepted);
    }

    #[test]
    fn dmin_rule_ignores_the_evaluator() {
        let registry = clustered_registry(4, 6, 0.2);
        let evaluator = fitted_evaluator(&registry);
        // Nudge off a member so d_min is strictly positive.
        let query: Vec<f64> = registry.gallery(1).unwrap()[0].iter().map(|v| v + 0.3).collect();
        let tight = decide(
            &query,
            &registry,
            &evaluator,
            &AcceptRule::DminThreshold { max_d: 5.0 },
            5,
            1.0,
        )
        .unwrap();
        assert!(tight.accepted);
        assert!(tight.d_min > 0.0);
        let strict = decide(
            &query,
            &registry,
            &evaluator,
            &AcceptRule::DminThreshold { max_d: 1e-12 },
            5,
            1.0,
        )
        .unwrap();
        assert!(!strict.accepted, "threshold below d_min must reject");
        assert!(strict.probability.is_some(), "record still carries a probability");
    }

    #[test]
    fn decision_is_deterministic() {
        let registry = clustered_registry(4, 6, 0.2);
        let evaluator = fitted_evaluator(&registry);
        let query: Vec<f64> = vec![9.0, 1.0, 0.5, -0.5];
        let rule = AcceptRule::Evaluator { threshold: 0.5 };
        let a = decide(&query, &registry, &evaluator, &rule, 5, 1.0).unwrap();
        let b = decide(&query, &registry, &evaluator, &rule, 5, 1.0).unwrap();
        assert_eq!(a.candidate_label, b.candidate_label);
        assert_eq!(a.d_min, b.d_min);
        assert_eq!(a.probability, b.probability);
        assert_eq!(a.accepted, b.accepted);
    }

    #[test]
    fn rule_validation_rejects_bad_ranges() {
        assert!(AcceptRule::Evaluator { threshold: 1.5 }.validate().is_err());
        assert!(AcceptRule::DminThreshold { max_d: 0.0 }.validate().is_err());
        assert!(AcceptRule::Evaluator { threshold: 0.5 }.validate().is_ok());
    }
}
