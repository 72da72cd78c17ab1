//! Per-domain knowledge evaluators. Each evaluator is a logistic
//! regression over the eight distance-shape features that predicts whether
//! a query belongs to its nearest candidate identity. The source evaluator
//! is bootstrapped from true-labeled records; the target evaluator starts
//! from the same records and both are refitted on the union of the source
//! pool and confidence-gated, soft-labeled target records, so each domain's
//! experience reaches the other.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::meta::{LabelKind, MetaFeatureRecord, META_FEATURE_DIM};
use crate::types::Domain;

/// Standard deviations below this floor are clamped before standardizing,
/// so constant features stay harmless instead of dividing by zero.
pub const STD_FLOOR: f64 = 1e-8;

/// Epochs and learning rate for one full-batch logistic fit.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FitParams {
    pub epochs: usize,
    pub lr: f64,
}

impl Default for FitParams {
    fn default() -> Self {
        FitParams { epochs: 200, lr: 0.1 }
    }
}

impl FitParams {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("evaluator_epochs must be at least 1".into()));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "evaluator_lr must be positive, got {}",
                self.lr
            )));
        }
        Ok(())
    }
}

/// Logistic membership model for one domain.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluatorModel {
    weights: [f64; META_FEATURE_DIM],
    bias: f64,
    feature_means: [f64; META_FEATURE_DIM],
    feature_stds: [f64; META_FEATURE_DIM],
    domain: Domain,
    records_seen: u64,
    fitted: bool,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl EvaluatorModel {
    pub fn new(domain: Domain) -> Self {
        EvaluatorModel {
            weights: [0.0; META_FEATURE_DIM],
            bias: 0.0,
            feature_means: [0.0; META_FEATURE_DIM],
            feature_stds: [1.0; META_FEATURE_DIM],
            domain,
            records_seen: 0,
            fitted: false,
        }
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn records_seen(&self) -> u64 {
        self.records_seen
    }

    pub fn is_fitted(&self) -> bool {
        self.fitted
    }

    fn standardize(&self, features: &[f64; META_FEATURE_DIM]) -> [f64; META_FEATURE_DIM] {
        let mut out = [0.0; META_FEATURE_DIM];
        for i in 0..META_FEATURE_DIM {
            out[i] = (features[i] - self.feature_means[i]) / self.feature_stds[i];
        }
        out
    }

    /// Probability that the record's anchor belongs to its candidate class.
    pub fn predict(&self, record: &MetaFeatureRecord) -> Result<f64> {
        if !self.fitted {
            return Err(Error::NotFitted(format!("{} evaluator", self.domain)));
        }
        let x = self.standardize(&record.features());
        let z = self
            .weights
            .iter()
            .zip(&x)
            .map(|(w, xi)| w * xi)
            .sum::<f64>()
            + self.bias;
        Ok(sigmoid(z))
    }

    /// Weighted full-batch logistic loss plus its gradient at (w, b).
    /// Per-record weight = class balance weight x sample (gate) weight.
    fn loss_and_grad(
        x: &[[f64; META_FEATURE_DIM]],
        y: &[f64],
        weights: &[f64],
        w: &[f64; META_FEATURE_DIM],
        b: f64,
    ) -> (f64, [f64; META_FEATURE_DIM], f64) {
        let total_weight: f64 = weights.iter().sum();
        let mut loss = 0.0;
        let mut grad_w = [0.0; META_FEATURE_DIM];
        let mut grad_b = 0.0;
        for ((xi, yi), wi) in x.iter().zip(y).zip(weights) {
            let z = w.iter().zip(xi).map(|(a, b)| a * b).sum::<f64>() + b;
            let p = sigmoid(z).clamp(1e-12, 1.0 - 1e-12);
            loss -= wi * (yi * p.ln() + (1.0 - yi) * (1.0 - p).ln());
            let err = wi * (p - yi);
            for k in 0..META_FEATURE_DIM {
                grad_w[k] += err * xi[k];
            }
            grad_b += err;
        }
        loss /= total_weight;
        for g in grad_w.iter_mut() {
            *g /= total_weight;
        }
        grad_b /= total_weight;
        (loss, grad_w, grad_b)
    }

    /// Refit from scratch on `records` by full-batch gradient descent.
    ///
    /// Feature standardization is recomputed on this record set. Classes
    /// are reweighted by inverse frequency, and soft-labeled records are
    /// additionally weighted by their gate confidence. Each epoch takes the
    /// largest step `<= lr` that does not increase the loss (halving on
    /// overshoot), so the loss trace is non-increasing.
    pub fn fit(&mut self, records: &[MetaFeatureRecord], params: FitParams) -> Result<()> {
        params.validate()?;
        if records.is_empty() {
            return Err(Error::EmptyInput("evaluator fit on empty record set".into()));
        }
        let mut x = Vec::with_capacity(records.len());
        let mut y = Vec::with_capacity(records.len());
        let mut sample_w = Vec::with_capacity(records.len());
        for r in records {
            let label = r.label.ok_or_else(|| {
                Error::DegenerateTraining("evaluator fit requires labeled records".into())
            })?;
            x.push(r.features());
            y.push(if label { 1.0 } else { 0.0 });
            sample_w.push(r.sample_weight());
        }
        let pos_weight: f64 = y.iter().zip(&sample_w).filter(|(yi, _)| **yi == 1.0).map(|(_, w)| w).sum();
        let neg_weight: f64 = y.iter().zip(&sample_w).filter(|(yi, _)| **yi == 0.0).map(|(_, w)| w).sum();
        if pos_weight == 0.0 || neg_weight == 0.0 {
            return Err(Error::DegenerateTraining(
                "evaluator fit needs both classes present with positive weight".into(),
            ));
        }

        // Standardization from this record set.
        let n = records.len() as f64;
        let mut means = [0.0; META_FEATURE_DIM];
        for xi in &x {
            for k in 0..META_FEATURE_DIM {
                means[k] += xi[k];
            }
        }
        means.iter_mut().for_each(|m| *m /= n);
        let mut stds = [0.0; META_FEATURE_DIM];
        for xi in &x {
            for k in 0..META_FEATURE_DIM {
                let d = xi[k] - means[k];
                stds[k] += d * d;
            }
        }
        for s in stds.iter_mut() {
            *s = (*s / n).sqrt().max(STD_FLOOR);
        }
        self.feature_means = means;
        self.feature_stds = stds;
        for xi in x.iter_mut() {
            *xi = self.standardize(xi);
        }

        // Inverse-frequency class balance on top of gate confidences.
        let total = pos_weight + neg_weight;
        let combined: Vec<f64> = y
            .iter()
            .zip(&sample_w)
            .map(|(yi, wi)| {
                let class = if *yi == 1.0 { pos_weight } else { neg_weight };
                wi * total / (2.0 * class)
            })
            .collect();

        let mut w = [0.0; META_FEATURE_DIM];
        let mut b = 0.0;
        let (mut loss, mut grad_w, mut grad_b) = Self::loss_and_grad(&x, &y, &combined, &w, b);
        for _ in 0..params.epochs {
            let mut step = params.lr;
            let mut accepted = false;
            for _ in 0..40 {
                let mut w_try = w;
                for k in 0..META_FEATURE_DIM {
                    w_try[k] -= step * grad_w[k];
                }
                let b_try = b - step * grad_b;
                let (loss_try, gw_try, gb_try) = Self::loss_and_grad(&x, &y, &combined, &w_try, b_try);
                if loss_try <= loss {
                    w = w_try;
                    b = b_try;
                    loss = loss_try;
                    grad_w = gw_try;
                    grad_b = gb_try;
                    accepted = true;
                    break;
                }
                step /= 2.0;
            }
            if !accepted {
                break; // at a numerical stationary point
            }
        }
        if !loss.is_finite() {
            return Err(Error::TrainingDiverged("evaluator loss is not finite".into()));
        }
        self.weights = w;
        self.bias = b;
        self.fitted = true;
        self.records_seen += records.len() as u64;
        Ok(())
    }

    /// Fraction of labeled records whose predicted side of 0.5 matches.
    pub fn accuracy(&self, records: &[MetaFeatureRecord]) -> Result<f64> {
        let labeled: Vec<&MetaFeatureRecord> = records.iter().filter(|r| r.label.is_some()).collect();
        if labeled.is_empty() {
            return Err(Error::EmptyInput("accuracy over unlabeled records".into()));
        }
        let mut correct = 0usize;
        for r in &labeled {
            let p = self.predict(r)?;
            if (p >= 0.5) == r.label.expect("filtered") {
                correct += 1;
            }
        }
        Ok(correct as f64 / labeled.len() as f64)
    }

    /// Stable text snapshot:
    ///
    /// ```text
    /// evaluator v1
    /// domain <source|target>
    /// records_seen <count>
    /// n 8
    /// weights <8 floats>
    /// bias <float>
    /// means <8 floats>
    /// stds <8 floats>
    /// fitted <true|false>
    /// ```
    pub fn to_snapshot(&self) -> String {
        let mut s = String::new();
        s.push_str("evaluator v1\n");
        let _ = writeln!(s, "domain {}", self.domain);
        let _ = writeln!(s, "records_seen {}", self.records_seen);
        let _ = writeln!(s, "n {META_FEATURE_DIM}");
        let join = |vals: &[f64]| {
            vals.iter()
                .map(|v| format!("{v:?}"))
                .collect::<Vec<_>>()
                .join(" ")
        };
        let _ = writeln!(s, "weights {}", join(&self.weights));
        let _ = writeln!(s, "bias {:?}", self.bias);
        let _ = writeln!(s, "means {}", join(&self.feature_means));
        let _ = writeln!(s, "stds {}", join(&self.feature_stds));
        let _ = writeln!(s, "fitted {}", self.fitted);
        s
    }

    pub fn from_snapshot(text: &str, path: &str) -> Result<Self> {
        let bad = |reason: String| Error::MalformedFile {
            path: path.to_string(),
            reason,
        };
        let mut lines = text.lines();
        if lines.next() != Some("evaluator v1") {
            return Err(bad("missing `evaluator v1` header".into()));
        }
        let mut field = |name: &str| -> Result<String> {
            let line = lines
                .next()
                .ok_or_else(|| bad(format!("missing `{name}` line")))?;
            line.strip_prefix(name)
                .map(|rest| rest.trim().to_string())
                .ok_or_else(|| bad(format!("expected `{name} ...`, got `{line}`")))
        };
        let domain: Domain = field("domain")?.parse()?;
        let records_seen: u64 = field("records_seen")?
            .parse()
            .map_err(|_| bad("bad records_seen".into()))?;
        let n: usize = field("n")?.parse().map_err(|_| bad("bad n".into()))?;
        if n != META_FEATURE_DIM {
            return Err(bad(format!("expected n {META_FEATURE_DIM}, got {n}")));
        }
        let parse_vec = |text: String, name: &str| -> Result<[f64; META_FEATURE_DIM]> {
            let vals: Vec<f64> = text
                .split_whitespace()
                .map(|v| v.parse::<f64>().map_err(|_| bad(format!("bad float in {name}"))))
                .collect::<Result<_>>()?;
            vals.try_into()
                .map_err(|_| bad(format!("{name} must have {META_FEATURE_DIM} values")))
        };
        let weights = parse_vec(field("weights")?, "weights")?;
        let bias: f64 = field("bias")?.parse().map_err(|_| bad("bad bias".into()))?;
        let feature_means = parse_vec(field("means")?, "means")?;
        let feature_stds = parse_vec(field("stds")?, "stds")?;
        let fitted: bool = field("fitted")?.parse().map_err(|_| bad("bad fitted flag".into()))?;
        Ok(EvaluatorModel {
            weights,
            bias,
            feature_means,
            feature_stds,
            domain,
            records_seen,
            fitted,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_snapshot()).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        EvaluatorModel::from_snapshot(&text, &path.display().to_string())
    }
}

/// Keep-if-confident filter over scored records.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceGate {
    threshold: f64,
}

impl ConfidenceGate {
    /// `threshold` is the minimum of `max(p, 1-p)`; it must exceed 0.5 or
    /// the gate would pass everything.
    pub fn new(threshold: f64) -> Result<Self> {
        if !(threshold > 0.5 && threshold <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "confidence_threshold must lie in (0.5, 1], got {threshold}"
            )));
        }
        Ok(ConfidenceGate { threshold })
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Keep records whose score is confident on either side and attach the
    /// rounded soft label with its confidence.
    pub fn gate_confident(
        &self,
        scored: &[(MetaFeatureRecord, f64)],
    ) -> Vec<MetaFeatureRecord> {
        scored
            .iter()
            .filter_map(|(record, p)| {
                let confidence = p.max(1.0 - p);
                if confidence >= self.threshold {
                    Some(record.clone().with_soft_label(*p >= 0.5, confidence))
                } else {
                    None
                }
            })
            .collect()
    }
}

/// Gated records handed from one domain's stream to both evaluators.
#[derive(Debug, Clone)]
pub struct ExchangeBatch {
    pub records: Vec<MetaFeatureRecord>,
    pub from_domain: Domain,
    pub issued_at_epoch: u32,
}

impl ExchangeBatch {
    pub fn new(records: Vec<MetaFeatureRecord>, from_domain: Domain, issued_at_epoch: u32, gate: &ConfidenceGate) -> Result<Self> {
        for r in &records {
            match (r.label, r.label_kind) {
                (Some(_), Some(LabelKind::True)) => {}
                (Some(_), Some(LabelKind::Soft)) => {
                    let c = r.confidence.ok_or_else(|| {
                        Error::InvalidValue("soft-labeled record without confidence".into())
                    })?;
                    if c < gate.threshold() {
                        return Err(Error::InvalidValue(format!(
                            "soft label confidence {c} below gate {}",
                            gate.threshold()
                        )));
                    }
                }
                _ => {
                    return Err(Error::InvalidValue(
                        "exchange batch requires labeled records".into(),
                    ))
                }
            }
        }
        Ok(ExchangeBatch {
            records,
            from_domain,
            issued_at_epoch,
        })
    }
}

/// Refit both evaluators on the union of the source pool and the gated
/// target records. Soft labels contribute with their gate confidence as
/// sample weight; neither pool is ever shrunk by this call.
pub fn exchange(
    source_model: &mut EvaluatorModel,
    target_model: &mut EvaluatorModel,
    source_records: &[MetaFeatureRecord],
    gated_target_records: &[MetaFeatureRecord],
    params: FitParams,
) -> Result<()> {
    if !source_model.is_fitted() || !target_model.is_fitted() {
        return Err(Error::NotFitted(
            "exchange requires both evaluators fitted at least once".into(),
        ));
    }
    let union: Vec<MetaFeatureRecord> = source_records
        .iter()
        .chain(gated_target_records)
        .cloned()
        .collect();
    target_model.fit(&union, params)?;
    source_model.fit(&union, params)?;
    Ok(())
}
