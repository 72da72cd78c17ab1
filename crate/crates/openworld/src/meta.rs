//! Distance-shape meta-features. For a query (anchor) evaluated against a
//! candidate identity, the shape of its distance distributions — not their
//! absolute scale — tells whether the anchor sits inside the candidate's
//! cluster. Coefficients of variation are scale-free, so these features
//! survive domain shifts that stretch or shrink the feature space.

use std::path::Path;

use crate::error::{Error, Result};
use crate::objectives::euclidean;
use crate::types::{Domain, Embedding};

/// Number of features in an evaluator input vector.
pub const META_FEATURE_DIM: usize = 8;

/// Default number of nearest negative galleries pooled into the
/// anchor-negative distance set.
pub const DEFAULT_NEGATIVE_GALLERIES: usize = 5;

/// Column header of a meta-feature record CSV.
pub const META_CSV_HEADER: &str =
    "cv_ap,cv_an,mycv,mu_ap,mu_an,sigma_ap,sigma_an,d_min,label,label_kind,domain,confidence";

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population standard deviation (divides by n, not n-1).
fn population_std(values: &[f64], mu: f64) -> f64 {
    let var = values.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / values.len() as f64;
    var.sqrt()
}

fn validate_distances(values: &[f64], what: &str) -> Result<()> {
    if values.is_empty() {
        return Err(Error::EmptyInput(format!("{what} distance set is empty")));
    }
    if let Some(bad) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::InvalidValue(format!(
            "{what} distances must be finite and non-negative, got {bad}"
        )));
    }
    Ok(())
}

/// Coefficient of variation in percent: `100 * population_std / mean`.
/// A zero mean (only possible when every distance is zero) maps to 0.
pub fn coefficient_of_variation(values: &[f64]) -> Result<f64> {
    validate_distances(values, "cv input")?;
    let mu = mean(values);
    if mu == 0.0 {
        return Ok(0.0);
    }
    Ok(population_std(values, mu) / mu * 100.0)
}

/// Normalized contrast of the two coefficients of variation:
/// `(cv_ap - cv_an) / (cv_ap + cv_an)`, in [-1, 1]. Both zero maps to 0.
/// The percent factors cancel, so it is identical on raw ratios.
pub fn mycv(cv_ap: f64, cv_an: f64) -> Result<f64> {
    for (name, v) in [("cv_ap", cv_ap), ("cv_an", cv_an)] {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::InvalidValue(format!(
                "{name} must be finite and non-negative, got {v}"
            )));
        }
    }
    let sum = cv_ap + cv_an;
    if sum == 0.0 {
        return Ok(0.0);
    }
    Ok((cv_ap - cv_an) / sum)
}

/// Anchor-positive and anchor-negative distance sets for one query.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceSets {
    pub ap: Vec<f64>,
    pub an: Vec<f64>,
}

impl DistanceSets {
    /// Distances are stored sorted ascending so every downstream statistic
    /// is exactly independent of gallery member order, not merely up to
    /// floating-point summation order.
    pub fn new(mut ap: Vec<f64>, mut an: Vec<f64>) -> Result<Self> {
        validate_distances(&ap, "anchor-positive")?;
        validate_distances(&an, "anchor-negative")?;
        ap.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
        an.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
        Ok(DistanceSets { ap, an })
    }
}

/// Provenance of a record's label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelKind {
    /// Ground truth from the labeled domain.
    True,
    /// Pseudo-label issued by an evaluator that passed the confidence gate.
    Soft,
}

impl LabelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LabelKind::True => "true",
            LabelKind::Soft => "soft",
        }
    }
}

/// One evaluator training/query record: the distance-shape features of a
/// single (anchor, candidate) encounter, plus optional label and provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaFeatureRecord {
    pub cv_ap: f64,
    pub cv_an: f64,
    pub mycv: f64,
    pub mu_ap: f64,
    pub mu_an: f64,
    pub sigma_ap: f64,
    pub sigma_an: f64,
    pub d_min: f64,
    /// 1 = anchor belongs to the candidate class.
    pub label: Option<bool>,
    pub label_kind: Option<LabelKind>,
    pub domain: Domain,
    /// Gate confidence for soft labels; absent for true labels.
    pub confidence: Option<f64>,
}

impl MetaFeatureRecord {
    /// Compute all eight features from a pair of distance sets.
    pub fn from_distances(sets: &DistanceSets, domain: Domain) -> Result<Self> {
        let mu_ap = mean(&sets.ap);
        let mu_an = mean(&sets.an);
        let sigma_ap = population_std(&sets.ap, mu_ap);
        let sigma_an = population_std(&sets.an, mu_an);
        let cv_ap = coefficient_of_variation(&sets.ap)?;
        let cv_an = coefficient_of_variation(&sets.an)?;
        let mycv_value = mycv(cv_ap, cv_an)?;
        let d_min = sets.ap.iter().cloned().fold(f64::INFINITY, f64::min);
        Ok(MetaFeatureRecord {
            cv_ap,
            cv_an,
            mycv: mycv_value,
            mu_ap,
            mu_an,
            sigma_ap,
            sigma_an,
            d_min,
            label: None,
            label_kind: None,
            domain,
            confidence: None,
        })
    }

    pub fn with_true_label(mut self, label: bool) -> Self {
        self.label = Some(label);
        self.label_kind = Some(LabelKind::True);
        self.confidence = None;
        self
    }

    pub fn with_soft_label(mut self, label: bool, confidence: f64) -> Self {
        self.label = Some(label);
        self.label_kind = Some(LabelKind::Soft);
        self.confidence = Some(confidence);
        self
    }

    /// Feature vector consumed by the evaluators, in header order.
    pub fn features(&self) -> [f64; META_FEATURE_DIM] {
        [
            self.cv_ap,
            self.cv_an,
            self.mycv,
            self.mu_ap,
            self.mu_an,
            self.sigma_ap,
            self.sigma_an,
            self.d_min,
        ]
    }

    /// Training weight: gate confidence for soft labels, 1 for true labels.
    pub fn sample_weight(&self) -> f64 {
        self.confidence.unwrap_or(1.0)
    }

    pub fn to_csv_row(&self) -> String {
        let opt_label = self.label.map(|l| if l { "1" } else { "0" }).unwrap_or("");
        let opt_kind = self.label_kind.map(LabelKind::as_str).unwrap_or("");
        let opt_conf = self.confidence.map(|c| format!("{c:?}")).unwrap_or_default();
        format!(
            "{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{},{},{},{}",
            self.cv_ap,
            self.cv_an,
            self.mycv,
            self.mu_ap,
            self.mu_an,
            self.sigma_ap,
            self.sigma_an,
            self.d_min,
            opt_label,
            opt_kind,
            self.domain,
            opt_conf
        )
    }

    pub fn from_csv_row(line: &str, path: &str) -> Result<Self> {
        let bad = |reason: String| Error::MalformedFile {
            path: path.to_string(),
            reason,
        };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 12 {
            return Err(bad(format!("record row has {} fields, expected 12", fields.len())));
        }
        let num = |i: usize| -> Result<f64> {
            fields[i]
                .parse::<f64>()
                .map_err(|_| bad(format!("bad float `{}` in column {i}", fields[i])))
        };
        let label = match fields[8] {
            "" => None,
            "0" => Some(false),
            "1" => Some(true),
            other => return Err(bad(format!("bad label `{other}`"))),
        };
        let label_kind = match fields[9] {
            "" => None,
            "true" => Some(LabelKind::True),
            "soft" => Some(LabelKind::Soft),
            other => return Err(bad(format!("bad label_kind `{other}`"))),
        };
        if label.is_some() != label_kind.is_some() {
            return Err(bad("label and label_kind must be present together".into()));
        }
        let confidence = if fields[11].is_empty() { None } else { Some(num(11)?) };
        Ok(MetaFeatureRecord {
            cv_ap: num(0)?,
            cv_an: num(1)?,
            mycv: num(2)?,
            mu_ap: num(3)?,
            mu_an: num(4)?,
            sigma_ap: num(5)?,
            sigma_an: num(6)?,
            d_min: num(7)?,
            label,
            label_kind,
            domain: fields[10].parse()?,
            confidence,
        })
    }
}

/// Write records to a CSV file with the standard header.
pub fn save_records(path: &Path, records: &[MetaFeatureRecord]) -> Result<()> {
    let mut out = String::with_capacity(records.len() * 96 + 128);
    out.push_str(META_CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.to_csv_row());
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_records(path: &Path) -> Result<Vec<MetaFeatureRecord>> {
    let display = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(display.clone(), e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header == META_CSV_HEADER => {}
        _ => {
            return Err(Error::MalformedFile {
                path: display,
                reason: format!("expected header `{META_CSV_HEADER}`"),
            })
        }
    }
    lines.map(|l| MetaFeatureRecord::from_csv_row(l, &display)).collect()
}

/// Build the meta-feature record for one encounter.
///
/// Anchor-positive distances run from the anchor to every member of the
/// candidate gallery. Anchor-negative distances pool every member of the
/// `k_nearest` negative galleries closest to the anchor (all of them when
/// fewer exist); gallery proximity is its minimum member distance.
pub fn extract_meta_features(
    anchor: &[f64],
    candidate_gallery: &[Embedding],
    negative_galleries: &[&[Embedding]],
    k_nearest: usize,
    domain: Domain,
) -> Result<MetaFeatureRecord> {
    if candidate_gallery.is_empty() {
        return Err(Error::EmptyInput("candidate gallery is empty".into()));
    }
    if k_nearest == 0 {
        return Err(Error::InvalidConfig("k_nearest must be at least 1".into()));
    }
    let ap: Vec<f64> = candidate_gallery.iter().map(|m| euclidean(anchor, m)).collect();

    let mut ranked: Vec<(f64, &[Embedding])> = negative_galleries
        .iter()
        .filter(|g| !g.is_empty())
        .map(|g| {
            let nearest = g
                .iter()
                .map(|m| euclidean(anchor, m))
                .fold(f64::INFINITY, f64::min);
            (nearest, *g)
        })
        .collect();
    if ranked.is_empty() {
        return Err(Error::EmptyInput(
            "no non-empty negative gallery available".into(),
        ));
    }
    ranked.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite distances"));
    let an: Vec<f64> = ranked
        .iter()
        .take(k_nearest)
        .flat_map(|(_, g)| g.iter().map(|m| euclidean(anchor, m)))
        .collect();

    let sets = DistanceSets::new(ap, an)?;
    MetaFeatureRecord::from_distances(&sets, domain)
}
