//! Growing identity registry: every known identity owns a gallery of
//! embeddings, and novel identities receive fresh labels from a counter
//! that never moves backwards.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::objectives::euclidean;
use crate::types::Embedding;

/// Default per-identity gallery cap; oldest members are evicted first.
pub const DEFAULT_GALLERY_CAP: usize = 50;

/// Nearest registered identity to a query, by minimum distance to any
/// gallery member.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NearestCandidate {
    pub label: u32,
    pub d_min: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityRegistry {
    galleries: BTreeMap<u32, Vec<Embedding>>,
    gallery_cap: usize,
    next_label: u32,
}

impl IdentityRegistry {
    /// Empty registry. Fresh labels start at `next_label` and only grow, so
    /// a counter carried across registry rebuilds guarantees labels are
    /// never reused.
    pub fn new(gallery_cap: usize, next_label: u32) -> Result<Self> {
        if gallery_cap == 0 {
            return Err(Error::InvalidConfig("gallery_cap must be at least 1".into()));
        }
        Ok(IdentityRegistry {
            galleries: BTreeMap::new(),
            gallery_cap,
            next_label,
        })
    }

    pub fn len(&self) -> usize {
        self.galleries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.galleries.is_empty()
    }

    pub fn next_label(&self) -> u32 {
        self.next_label
    }

    pub fn labels(&self) -> impl Iterator<Item = u32> + '_ {
        self.galleries.keys().copied()
    }

    pub fn gallery(&self, label: u32) -> Option<&[Embedding]> {
        self.galleries.get(&label).map(Vec::as_slice)
    }

    /// All galleries in ascending label order.
    pub fn galleries(&self) -> impl Iterator<Item = (u32, &[Embedding])> {
        self.galleries.iter().map(|(l, g)| (*l, g.as_slice()))
    }

    /// Register a known identity under a caller-chosen label (enrolled
    /// identities keep their dataset identity as label). Seed labels must
    /// stay below the fresh-label counter so the two ranges never collide.
    pub fn seed_identity(&mut self, label: u32, gallery: Vec<Embedding>) -> Result<()> {
        if gallery.is_empty() {
            return Err(Error::EmptyInput(format!("gallery for seeded identity {label}")));
        }
        if label >= self.next_label {
            return Err(Error::InvalidValue(format!(
                "seed label {label} collides with the fresh-label range starting at {}",
                self.next_label
            )));
        }
        if self.galleries.contains_key(&label) {
            return Err(Error::InvalidValue(format!("identity {label} already registered")));
        }
        let mut gallery = gallery;
        if gallery.len() > self.gallery_cap {
            gallery.drain(..gallery.len() - self.gallery_cap);
        }
        self.galleries.insert(label, gallery);
        Ok(())
    }

    /// Enroll a novel identity with a fresh label and a singleton gallery.
    pub fn enroll(&mut self, embedding: Embedding) -> u32 {
        let label = self.next_label;
        self.next_label += 1;
        self.galleries.insert(label, vec![embedding]);
        label
    }

    /// Append an embedding to an existing gallery, evicting the oldest
    /// member when the gallery is at capacity.
    pub fn append(&mut self, label: u32, embedding: Embedding) -> Result<()> {
        let gallery = self
            .galleries
            .get_mut(&label)
            .ok_or_else(|| Error::InvalidValue(format!("no registered identity {label}")))?;
        if gallery.len() == self.gallery_cap {
            gallery.remove(0);
        }
        gallery.push(embedding);
        Ok(())
    }

    /// Label owning the single nearest gallery embedding, plus that
    /// distance. Ties break toward the smaller label.
    pub fn nearest_candidate(&self, query: &[f64]) -> Result<NearestCandidate> {
        let mut best: Option<NearestCandidate> = None;
        for (&label, gallery) in &self.galleries {
            for member in gallery {
                let d = euclidean(query, member);
                // Ascending label order + strict `<` keeps the smaller
                // label on exact ties.
                if best.map_or(true, |b| d < b.d_min) {
                    best = Some(NearestCandidate { label, d_min: d });
                }
            }
        }
        best.ok_or(Error::EmptyRegistry)
    }
}
