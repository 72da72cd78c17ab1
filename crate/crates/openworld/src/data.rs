//! Synthetic two-domain benchmark data. Each domain is a set of Gaussian
//! identity clusters in raw feature space; the target domain additionally
//! passes through an affine isometry-plus-scale transform (rotation,
//! scale, offset) and uses a disjoint identity set, which together model a
//! domain shift with unknown feature scaling.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::types::{Domain, Split};

/// Affine map applied to every generated sample: `scale * R * x + offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainTransform {
    pub scale: f64,
    /// Empty = no offset; one value = constant vector; else length must
    /// equal `raw_dim`.
    #[serde(default)]
    pub offset: Vec<f64>,
    /// Seed for a random orthonormal rotation; absent = identity.
    #[serde(default)]
    pub rotation_seed: Option<u64>,
}

impl Default for DomainTransform {
    fn default() -> Self {
        DomainTransform {
            scale: 1.0,
            offset: Vec::new(),
            rotation_seed: None,
        }
    }
}

/// Shape of one synthetic domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub num_identities: usize,
    pub samples_per_identity: usize,
    pub raw_dim: usize,
    /// Isotropic within-identity noise scale.
    pub cluster_spread: f64,
    #[serde(default)]
    pub transform: DomainTransform,
    pub domain_tag: Domain,
    /// Generated clusters must be at least this many times farther apart
    /// (mean between-identity distance) than they are wide (mean
    /// within-identity distance).
    #[serde(default = "default_min_separation")]
    pub min_separation: f64,
}

fn default_min_separation() -> f64 {
    3.0
}

impl DomainSpec {
    pub fn validate(&self, key_prefix: &str) -> Result<()> {
        let bad = |key: &str, why: String| Error::InvalidConfig(format!("{key_prefix}.{key}: {why}"));
        if self.num_identities < 2 {
            return Err(bad("num_identities", format!("need at least 2, got {}", self.num_identities)));
        }
        if self.samples_per_identity < 2 {
            return Err(bad(
                "samples_per_identity",
                format!("need at least 2, got {}", self.samples_per_identity),
            ));
        }
        if self.raw_dim == 0 {
            return Err(bad("raw_dim", "must be positive".into()));
        }
        if !(self.cluster_spread > 0.0) || !self.cluster_spread.is_finite() {
            return Err(bad(
                "cluster_spread",
                format!("must be positive, got {}", self.cluster_spread),
            ));
        }
        if !(self.transform.scale > 0.0) || !self.transform.scale.is_finite() {
            return Err(bad(
                "transform.scale",
                format!("must be positive, got {}", self.transform.scale),
            ));
        }
        let off_len = self.transform.offset.len();
        if off_len > 1 && off_len != self.raw_dim {
            return Err(bad(
                "transform.offset",
                format!("length must be 0, 1, or raw_dim, got {off_len}"),
            ));
        }
        if !self.transform.offset.iter().all(|v| v.is_finite()) {
            return Err(bad("transform.offset", "entries must be finite".into()));
        }
        if !(self.min_separation > 0.0) || !self.min_separation.is_finite() {
            return Err(bad(
                "min_separation",
                format!("must be positive, got {}", self.min_separation),
            ));
        }
        Ok(())
    }
}

/// One sample row.
#[derive(Debug, Clone, PartialEq)]
pub struct DataRow {
    pub id: u32,
    pub domain: Domain,
    pub split: Split,
    pub features: Vec<f64>,
}

/// Single-domain dataset held in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub raw_dim: usize,
    pub domain: Domain,
    pub rows: Vec<DataRow>,
}

impl Dataset {
    /// Identities that have at least one gallery row (the enrolled pool).
    pub fn gallery_ids(&self) -> BTreeSet<u32> {
        self.rows
            .iter()
            .filter(|r| r.split == Split::Gallery)
            .map(|r| r.id)
            .collect()
    }

    pub fn ids(&self) -> BTreeSet<u32> {
        self.rows.iter().map(|r| r.id).collect()
    }

    /// Row indices of `split`, grouped by identity in ascending id order.
    pub fn rows_by_id(&self, split: Split) -> BTreeMap<u32, Vec<usize>> {
        let mut map: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, row) in self.rows.iter().enumerate() {
            if row.split == split {
                map.entry(row.id).or_default().push(i);
            }
        }
        map
    }
}

/// Manifest written alongside every generated dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub raw_dim: usize,
    /// Rows per split name.
    pub counts: BTreeMap<String, usize>,
    pub domain_tag: Domain,
    pub seed: u64,
    pub checksum: String,
}

/// Orthonormal matrix from seeded Gaussian rows via Gram-Schmidt,
/// stored row-major.
fn random_rotation(dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(dim);
    while rows.len() < dim {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        for prev in &rows {
            let dot: f64 = v.iter().zip(prev).map(|(a, b)| a * b).sum();
            for (vi, pi) in v.iter_mut().zip(prev) {
                *vi -= dot * pi;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        // A fresh Gaussian draw is almost never inside the span of the
        // previous rows; retry on the measure-zero degenerate case.
        if norm > 1e-9 {
            v.iter_mut().for_each(|x| *x /= norm);
            rows.push(v);
        }
    }
    rows
}

fn apply_transform(x: &[f64], transform: &DomainTransform, rotation: Option<&[Vec<f64>]>) -> Vec<f64> {
    let rotated: Vec<f64> = match rotation {
        Some(rot) => rot
            .iter()
            .map(|row| row.iter().zip(x).map(|(r, xi)| r * xi).sum::<f64>())
            .collect(),
        None => x.to_vec(),
    };
    let offset_at = |i: usize| -> f64 {
        match transform.offset.len() {
            0 => 0.0,
            1 => transform.offset[0],
            _ => transform.offset[i],
        }
    };
    rotated
        .iter()
        .enumerate()
        .map(|(i, v)| transform.scale * v + offset_at(i))
        .collect()
}

/// Split plan constants. Source identities contribute representation
/// training rows plus gallery/query rows for evaluator bootstrapping;
/// target identities split into an enrolled half (gallery + query) and a
/// held-out half that only ever appears as queries.
const SOURCE_GALLERY_FRACTION: f64 = 0.2;
const SOURCE_QUERY_FRACTION: f64 = 0.2;
const TARGET_GALLERY_FRACTION: f64 = 0.5;
const TARGET_ENROLLED_FRACTION: f64 = 0.5;

fn split_of(spec: &DomainSpec, identity_index: usize, sample_index: usize) -> Split {
    let n = spec.samples_per_identity;
    match spec.domain_tag {
        Domain::Source => {
            let gallery = ((n as f64 * SOURCE_GALLERY_FRACTION) as usize).max(1);
            let query = ((n as f64 * SOURCE_QUERY_FRACTION) as usize).max(1);
            let train = n.saturating_sub(gallery + query);
            if sample_index < train {
                Split::Train
            } else if sample_index < train + gallery {
                Split::Gallery
            } else {
                Split::Query
            }
        }
        Domain::Target => {
            let enrolled = ((spec.num_identities as f64 * TARGET_ENROLLED_FRACTION).ceil() as usize)
                .clamp(1, spec.num_identities - 1);
            if identity_index < enrolled {
                let gallery = ((n as f64 * TARGET_GALLERY_FRACTION) as usize).max(1);
                if sample_index < gallery {
                    Split::Gallery
                } else {
                    Split::Query
                }
            } else {
                Split::Query
            }
        }
    }
}

/// Generate one domain: identity centers are standard normal, samples add
/// isotropic noise of `cluster_spread`, and every sample passes through the
/// domain transform. Identity labels start at `id_base`. Fails if the
/// clusters do not separate by `min_separation`.
pub fn generate_domain(spec: &DomainSpec, seed: u64, id_base: u32) -> Result<Dataset> {
    spec.validate("domain_spec")?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rotation = spec
        .transform
        .rotation_seed
        .map(|s| random_rotation(spec.raw_dim, s));

    let mut rows = Vec::with_capacity(spec.num_identities * spec.samples_per_identity);
    for identity in 0..spec.num_identities {
        let center: Vec<f64> = (0..spec.raw_dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        for sample in 0..spec.samples_per_identity {
            let raw: Vec<f64> = center
                .iter()
                .map(|c| c + spec.cluster_spread * rng.sample::<f64, _>(StandardNormal))
                .collect();
            rows.push(DataRow {
                id: id_base + identity as u32,
                domain: spec.domain_tag,
                split: split_of(spec, identity, sample),
                features: apply_transform(&raw, &spec.transform, rotation.as_deref()),
            });
        }
    }

    let dataset = Dataset {
        raw_dim: spec.raw_dim,
        domain: spec.domain_tag,
        rows,
    };
    let (within, between) = separation(&dataset);
    if between < spec.min_separation * within {
        return Err(Error::GeneratorSelfCheck(format!(
            "between-identity mean distance {between:.4} is below {} x within-identity mean {within:.4}",
            spec.min_separation
        )));
    }
    Ok(dataset)
}

/// Mean within-identity and between-identity pairwise distances.
fn separation(dataset: &Dataset) -> (f64, f64) {
    let mut within = (0.0, 0usize);
    let mut between = (0.0, 0usize);
    for i in 0..dataset.rows.len() {
        for j in (i + 1)..dataset.rows.len() {
            let d = crate::objectives::euclidean(&dataset.rows[i].features, &dataset.rows[j].features);
            if dataset.rows[i].id == dataset.rows[j].id {
                within.0 += d;
                within.1 += 1;
            } else {
                between.0 += d;
                between.1 += 1;
            }
        }
    }
    (within.0 / within.1.max(1) as f64, between.0 / between.1.max(1) as f64)
}

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Manifest path for a dataset file: `source.csv -> source.manifest.json`.
pub fn manifest_path(data_path: &Path) -> PathBuf {
    data_path.with_extension("manifest.json")
}

fn csv_header(raw_dim: usize) -> String {
    let mut header = String::from("id,domain,split");
    for i in 0..raw_dim {
        header.push_str(&format!(",f{i}"));
    }
    header
}

/// Write the dataset CSV plus its manifest (split counts, seed, sha-256).
pub fn save_dataset(path: &Path, dataset: &Dataset, seed: u64) -> Result<DatasetManifest> {
    let mut out = String::new();
    out.push_str(&csv_header(dataset.raw_dim));
    out.push('\n');
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for row in &dataset.rows {
        if row.features.len() != dataset.raw_dim {
            return Err(Error::ShapeMismatch(format!(
                "row of id {} has {} features, dataset raw_dim {}",
                row.id,
                row.features.len(),
                dataset.raw_dim
            )));
        }
        out.push_str(&format!("{},{},{}", row.id, row.domain, row.split));
        for f in &row.features {
            out.push_str(&format!(",{f:?}"));
        }
        out.push('\n');
        *counts.entry(row.split.to_string()).or_default() += 1;
    }
    std::fs::write(path, &out).map_err(|e| Error::io(path.display().to_string(), e))?;
    let manifest = DatasetManifest {
        raw_dim: dataset.raw_dim,
        counts,
        domain_tag: dataset.domain,
        seed,
        checksum: sha256_hex(out.as_bytes()),
    };
    let manifest_json = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(manifest_path(path), manifest_json)
        .map_err(|e| Error::io(manifest_path(path).display().to_string(), e))?;
    Ok(manifest)
}

/// Load a dataset CSV. When a manifest sits next to it the checksum and
/// raw_dim are verified; a bare CSV with a matching header is accepted
/// as-is (ingestion path for externally produced features).
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let display = path.display().to_string();
    let bytes = std::fs::read(path).map_err(|e| Error::io(display.clone(), e))?;

    let manifest_file = manifest_path(path);
    let manifest: Option<DatasetManifest> = if manifest_file.exists() {
        let text = std::fs::read_to_string(&manifest_file)
            .map_err(|e| Error::io(manifest_file.display().to_string(), e))?;
        Some(serde_json::from_str(&text)?)
    } else {
        None
    };
    if let Some(m) = &manifest {
        let actual = sha256_hex(&bytes);
        if actual != m.checksum {
            return Err(Error::ChecksumMismatch {
                path: display,
                expected: m.checksum.clone(),
                actual,
            });
        }
    }

    let text = String::from_utf8(bytes).map_err(|_| Error::MalformedFile {
        path: display.clone(),
        reason: "dataset is not utf-8".into(),
    })?;
    let bad = |reason: String| Error::MalformedFile {
        path: display.clone(),
        reason,
    };
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("empty dataset file".into()))?;
    let columns: Vec<&str> = header.split(',').collect();
    if columns.len() < 4 || columns[0] != "id" || columns[1] != "domain" || columns[2] != "split" {
        return Err(bad(format!("unexpected header `{header}`")));
    }
    let raw_dim = columns.len() - 3;
    for (i, c) in columns[3..].iter().enumerate() {
        if *c != format!("f{i}") {
            return Err(bad(format!("feature column {i} named `{c}`")));
        }
    }
    if let Some(m) = &manifest {
        if m.raw_dim != raw_dim {
            return Err(bad(format!(
                "manifest raw_dim {} but header has {raw_dim} feature columns",
                m.raw_dim
            )));
        }
    }

    let mut rows = Vec::new();
    let mut domain: Option<Domain> = manifest.as_ref().map(|m| m.domain_tag);
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != raw_dim + 3 {
            return Err(bad(format!(
                "row has {} fields, expected {}",
                fields.len(),
                raw_dim + 3
            )));
        }
        let id: u32 = fields[0]
            .parse()
            .map_err(|_| bad(format!("bad id `{}`", fields[0])))?;
        let row_domain: Domain = fields[1].parse()?;
        match domain {
            None => domain = Some(row_domain),
            Some(d) if d != row_domain => {
                return Err(bad("dataset mixes source and target rows".into()))
            }
            _ => {}
        }
        let split: Split = fields[2].parse()?;
        let features: Vec<f64> = fields[3..]
            .iter()
            .map(|v| v.parse::<f64>().map_err(|_| bad(format!("bad feature `{v}`"))))
            .collect::<Result<_>>()?;
        rows.push(DataRow {
            id,
            domain: row_domain,
            split,
            features,
        });
    }
    if rows.is_empty() {
        return Err(bad("dataset has no rows".into()));
    }
    Ok(Dataset {
        raw_dim,
        domain: domain.expect("at least one row"),
        rows,
    })
}

/// Mixed open-world episode shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeConfig {
    /// Probability that a query comes from an enrolled identity.
    #[serde(default = "default_p_same")]
    pub p_same: f64,
    pub queries_per_epoch: usize,
    pub epochs: usize,
}

fn default_p_same() -> f64 {
    0.5
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_same) {
            return Err(Error::InvalidConfig(format!(
                "episode.p_same must lie in [0, 1], got {}",
                self.p_same
            )));
        }
        if self.queries_per_epoch == 0 {
            return Err(Error::InvalidConfig("episode.queries_per_epoch must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("episode.epochs must be at least 1".into()));
        }
        Ok(())
    }
}

/// Draw one epoch's ordered query stream: each draw independently picks an
/// enrolled identity with probability `p_same`, otherwise a held-out one,
/// then a uniform query row of that identity. Returns row indices.
pub fn mixed_sampler(
    dataset: &Dataset,
    enrolled_ids: &BTreeSet<u32>,
    episode: &EpisodeConfig,
    seed: u64,
) -> Result<Vec<usize>> {
    episode.validate()?;
    let by_id = dataset.rows_by_id(Split::Query);
    let enrolled: Vec<(&u32, &Vec<usize>)> =
        by_id.iter().filter(|(id, _)| enrolled_ids.contains(id)).collect();
    let held_out: Vec<(&u32, &Vec<usize>)> =
        by_id.iter().filter(|(id, _)| !enrolled_ids.contains(id)).collect();
    if episode.p_same > 0.0 && enrolled.is_empty() {
        return Err(Error::InvalidConfig(
            "episode.p_same > 0 but no enrolled identity has query rows".into(),
        ));
    }
    if episode.p_same < 1.0 && held_out.is_empty() {
        return Err(Error::InvalidConfig(
            "episode.p_same < 1 but every identity with query rows is enrolled".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stream = Vec::with_capacity(episode.queries_per_epoch);
    for _ in 0..episode.queries_per_epoch {
        let pool = if rng.gen_range(0.0..1.0) < episode.p_same {
            &enrolled
        } else {
            &held_out
        };
        let (_, rows) = pool[rng.gen_range(0..pool.len())];
        stream.push(rows[rng.gen_range(0..rows.len())]);
    }
    Ok(stream)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::euclidean;

    fn base_spec(domain: Domain) -> DomainSpec {
        DomainSpec {
            num_identities: 6,
            samples_per_identity: 10,
            raw_dim: 8,
            cluster_spread: 0.05,
            transform: DomainTransform::default(),
            domain_tag: domain,
            min_separation: 3.0,
        }
    }

    #[test]
    fn generation_is_deterministic_per_seed() {
        let spec = base_spec(Domain::Source);
        let a = generate_domain(&spec, 42, 0).unwrap();
        let b = generate_domain(&spec, 42, 0).unwrap();
        assert_eq!(a, b);
        let c = generate_domain(&spec, 43, 0).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn tiny_spread_collapses_samples_onto_centers() {
        let mut spec = base_spec(Domain::Source);
        spec.cluster_spread = 1e-12;
        let data = generate_domain(&spec, 1, 0).unwrap();
        for id in data.ids() {
            let members: Vec<&DataRow> = data.rows.iter().filter(|r| r.id == id).collect();
            for pair in members.windows(2) {
                assert!(euclidean(&pair[0].features, &pair[1].features) < 1e-9);
            }
        }
    }

    #[test]
    fn scale_multiplies_every_pairwise_distance() {
        let spec1 = base_spec(Domain::Source);
        let mut spec5 = base_spec(Domain::Source);
        spec5.transform.scale = 5.0;
        let d1 = generate_domain(&spec1, 7, 0).unwrap();
        let d5 = generate_domain(&spec5, 7, 0).unwrap();
        for (i, j) in [(0usize, 1usize), (3, 40), (10, 55)] {
            let a = euclidean(&d1.rows[i].features, &d1.rows[j].features);
            let b = euclidean(&d5.rows[i].features, &d5.rows[j].features);
            assert!((b - 5.0 * a).abs() <= 1e-9 * b.abs().max(1.0), "{b} vs 5*{a}");
        }
    }

    #[test]
    fn rotation_and_offset_preserve_pairwise_distances() {
        let plain = base_spec(Domain::Source);
        let mut moved = base_spec(Domain::Source);
        moved.transform.rotation_seed = Some(99);
        moved.transform.offset = vec![3.0];
        let a = generate_domain(&plain, 7, 0).unwrap();
        let b = generate_domain(&moved, 7, 0).unwrap();
        for (i, j) in [(0usize, 1usize), (5, 30), (12, 44)] {
            let da = euclidean(&a.rows[i].features, &a.rows[j].features);
            let db = euclidean(&b.rows[i].features, &b.rows[j].features);
            assert!((da - db).abs() < 1e-9, "isometry must preserve distances: {da} vs {db}");
        }
    }

    #[test]
    fn random_rotation_is_orthonormal() {
        let rot = random_rotation(6, 5);
        for i in 0..6 {
            for j in 0..6 {
                let dot: f64 = rot[i].iter().zip(&rot[j]).map(|(a, b)| a * b).sum();
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expected).abs() < 1e-9, "row {i} . row {j} = {dot}");
            }
        }
    }

    #[test]
    fn overlapping_clusters_fail_the_self_check() {
        let mut spec = base_spec(Domain::Source);
        spec.cluster_spread = 10.0;
        assert!(matches!(
            generate_domain(&spec, 3, 0),
            Err(Error::GeneratorSelfCheck(_))
        ));
    }

    #[test]
    fn source_split_covers_train_gallery_query() {
        let data = generate_domain(&base_spec(Domain::Source), 11, 0).unwrap();
        // 10 samples: gallery 2, query 2, train 6.
        for id in data.ids() {
            let count = |s: Split| data.rows.iter().filter(|r| r.id == id && r.split == s).count();
            assert_eq!(count(Split::Train), 6);
            assert_eq!(count(Split::Gallery), 2);
            assert_eq!(count(Split::Query), 2);
        }
    }

    #[test]
    fn target_split_holds_out_half_the_identities() {
        let data = generate_domain(&base_spec(Domain::Target), 11, 100).unwrap();
        let enrolled = data.gallery_ids();
        assert_eq!(enrolled.len(), 3, "half of 6 identities enrolled");
        let held_out: Vec<u32> = data
            .ids()
            .into_iter()
            .filter(|id| !enrolled.contains(id))
            .collect();
        assert_eq!(held_out.len(), 3);
        // Held-out identities appear only as queries.
        for id in held_out {
            assert!(data
                .rows
                .iter()
                .filter(|r| r.id == id)
                .all(|r| r.split == Split::Query));
        }
        // Enrolled identities have both gallery and query rows, no train.
        for id in enrolled {
            let members: Vec<&DataRow> = data.rows.iter().filter(|r| r.id == id).collect();
            assert!(members.iter().any(|r| r.split == Split::Gallery));
            assert!(members.iter().any(|r| r.split == Split::Query));
            assert!(members.iter().all(|r| r.split != Split::Train));
        }
    }

    #[test]
    fn id_base_offsets_identity_labels() {
        let data = generate_domain(&base_spec(Domain::Target), 11, 10_000).unwrap();
        assert!(data.ids().iter().all(|id| *id >= 10_000));
    }

    #[test]
    fn save_load_round_trips_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("source.csv");
        let data = generate_domain(&base_spec(Domain::Source), 13, 0).unwrap();
        let manifest = save_dataset(&path, &data, 13).unwrap();
        assert_eq!(manifest.raw_dim, 8);
        assert_eq!(manifest.counts["train"], 36);
        let loaded = load_dataset(&path).unwrap();
        assert_eq!(loaded, data, "round trip must preserve every float bit");
    }

    #[test]
    fn tampered_file_fails_checksum() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let data = generate_domain(&base_spec(Domain::Source), 13, 0).unwrap();
        save_dataset(&path, &data, 13).unwrap();
        let mut text = std::fs::read_to_string(&path).unwrap();
        text.truncate(text.len() - 40);
        std::fs::write(&path, text).unwrap();
        assert!(matches!(
            load_dataset(&path),
            Err(Error::ChecksumMismatch { .. })
        ));
    }

    #[test]
    fn foreign_csv_without_manifest_is_accepted() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("foreign.csv");
        std::fs::write(
            &path,
            "id,domain,split,f0,f1\n1,source,gallery,0.5,1.5\n2,source,query,-0.25,2.0\n",
        )
        .unwrap();
        let data = load_dataset(&path).unwrap();
        assert_eq!(data.raw_dim, 2);
        assert_eq!(data.rows.len(), 2);
        assert_eq!(data.rows[1].features, vec![-0.25, 2.0]);
    }

    #[test]
    fn load_rejects_malformed_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "id,domain,split,f0\n1,source,gallery\n").unwrap();
        assert!(load_dataset(&path).is_err());
        std::fs::write(&path, "id,domain,split,f0\n1,moon,gallery,1.0\n").unwrap();
        assert!(load_dataset(&path).is_err());
    }

    #[test]
    fn sampler_respects_pool_choice_at_extremes() {
        let data = generate_domain(&base_spec(Domain::Target), 17, 0).unwrap();
        let enrolled = data.gallery_ids();
        let episode = EpisodeConfig {
            p_same: 1.0,
            queries_per_epoch: 50,
            epochs: 1,
        };
        for idx in mixed_sampler(&data, &enrolled, &episode, 5).unwrap() {
            assert!(enrolled.contains(&data.rows[idx].id));
            assert_eq!(data.rows[idx].split, Split::Query);
        }
        let episode0 = EpisodeConfig { p_same: 0.0, ..episode };
        for idx in mixed_sampler(&data, &enrolled, &episode0, 5).unwrap() {
            assert!(!enrolled.contains(&data.rows[idx].id));
        }
    }

    #[test]
    fn sampler_frequency_tracks_p_same() {
        let data = generate_domain(&base_spec(Domain::Target), 17, 0).unwrap();
        let enrolled = data.gallery_ids();
        let episode = EpisodeConfig {
            p_same: 0.5,
            queries_per_epoch: 2000,
            epochs: 1,
        };
        let stream = mixed_sampler(&data, &enrolled, &episode, 9).unwrap();
        let same = stream
            .iter()
            .filter(|i| enrolled.contains(&data.rows[**i].id))
            .count() as f64;
        let fraction = same / stream.len() as f64;
        assert!((fraction - 0.5).abs() < 0.05, "same fraction {fraction}");
    }

    #[test]
    fn sampler_is_deterministic_per_seed() {
        let data = generate_domain(&base_spec(Domain::Target), 17, 0).unwrap();
        let enrolled = data.gallery_ids();
        let episode = EpisodeConfig {
            p_same: 0.5,
            queries_per_epoch: 100,
            epochs: 1,
        };
        assert_eq!(
            mixed_sampler(&data, &enrolled, &episode, 4).unwrap(),
            mixed_sampler(&data, &enrolled, &episode, 4).unwrap()
        );
    }

    #[test]
    fn sampler_rejects_unsatisfiable_pools() {
        let data = generate_domain(&base_spec(Domain::Target), 17, 0).unwrap();
        let episode = EpisodeConfig {
            p_same: 0.5,
            queries_per_epoch: 10,
            epochs: 1,
        };
        // Everything enrolled: no held-out pool.
        assert!(mixed_sampler(&data, &data.ids(), &episode, 1).is_err());
        // Nothing enrolled but p_same > 0.
        assert!(mixed_sampler(&data, &BTreeSet::new(), &episode, 1).is_err());
    }
}
