//! Interchange formats and in-memory dataset types.
//!
//! * Embedding files: a 32-byte little-endian header followed by binary32
//!   payload, see [`embeddings`].
//! * Label files: UTF-8 text, one example per line, see [`labels`].
//! * Manifests: versioned TOML tying splits, labels and provenance together,
//!   see [`manifest`].

pub mod embeddings;
pub mod labels;
pub mod manifest;
pub mod synthetic;

pub use embeddings::{read_embeddings, write_embeddings};
pub use labels::{read_labels, read_multilabels, write_labels, write_multilabels};
pub use manifest::{load_manifest, write_split, DatasetBundle, DatasetManifest, SplitData, SplitEntry, TaskKind};
pub use synthetic::{generate_synthetic, SyntheticData, SyntheticGenerator, SyntheticSpec};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// `V` views of `n` embeddings of dimension `d`. View 0 is the canonical
/// (unaugmented) embedding; further views are augmentations of it.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTensor {
    views: Vec<Matrix>,
}

impl EmbeddingTensor {
    pub fn new(views: Vec<Matrix>) -> Result<Self> {
        let first = views
            .first()
            .ok_or_else(|| Error::invalid("embedding tensor needs at least one view"))?;
        let shape = first.shape();
        if shape.1 == 0 {
            return Err(Error::invalid("embedding dimension must be at least 1"));
        }
        if let Some(v) = views.iter().position(|m| m.shape() != shape) {
            return Err(Error::invalid(format!(
                "view {v} has shape {:?}, view 0 has {:?}",
                views[v].shape(),
                shape
            )));
        }
        Ok(Self { views })
    }

    pub fn single(view: Matrix) -> Result<Self> {
        Self::new(vec![view])
    }

    pub fn n(&self) -> usize {
        self.views[0].rows()
    }

    pub fn dim(&self) -> usize {
        self.views[0].cols()
    }

    pub fn num_views(&self) -> usize {
        self.views.len()
    }

    pub fn view(&self, v: usize) -> &Matrix {
        &self.views[v]
    }

    pub fn canonical(&self) -> &Matrix {
        &self.views[0]
    }

    pub fn views(&self) -> &[Matrix] {
        &self.views
    }

    pub fn select_rows(&self, indices: &[usize]) -> EmbeddingTensor {
        EmbeddingTensor {
            views: self.views.iter().map(|m| m.select_rows(indices)).collect(),
        }
    }

    /// Only the canonical view.
    pub fn canonical_only(&self) -> EmbeddingTensor {
        EmbeddingTensor {
            views: vec![self.views[0].clone()],
        }
    }
}

/// Single-label class indices in `[0, num_classes)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LabelSet {
    labels: Vec<usize>,
    num_classes: usize,
}

impl LabelSet {
    pub fn new(labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if let Some((i, &c)) = labels.iter().enumerate().find(|(_, &c)| c >= num_classes) {
            return Err(Error::invalid(format!(
                "label {c} at index {i} is out of range for {num_classes} classes"
            )));
        }
        Ok(Self { labels, num_classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.labels
    }

    pub fn get(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &c in &self.labels {
            counts[c] += 1;
        }
        counts
    }

    pub fn select(&self, indices: &[usize]) -> LabelSet {
        LabelSet {
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
        }
    }
}

/// `n x C` binary label matrix; a row may be all zeros.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MultiLabelSet {
    n: usize,
    num_classes: usize,
    data: Vec<bool>,
}

impl MultiLabelSet {
    pub fn new(rows: Vec<Vec<bool>>, num_classes: usize) -> Result<Self> {
        if let Some(i) = rows.iter().position(|r| r.len() != num_classes) {
            return Err(Error::invalid(format!(
                "row {i} has {} entries, expected {num_classes}",
                rows[i].len()
            )));
        }
        Ok(Self {
            n: rows.len(),
            num_classes,
            data: rows.concat(),
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn get(&self, i: usize, c: usize) -> bool {
        self.data[i * self.num_classes + c]
    }

    pub fn set(&mut self, i: usize, c: usize, v: bool) {
        self.data[i * self.num_classes + c] = v;
    }

    pub fn row(&self, i: usize) -> &[bool] {
        &self.data[i * self.num_classes..(i + 1) * self.num_classes]
    }

    /// Class `c` as a binary single-label set (1 = present).
    pub fn column(&self, c: usize) -> LabelSet {
        LabelSet {
            labels: (0..self.n).map(|i| usize::from(self.get(i, c))).collect(),
            num_classes: 2,
        }
    }

    pub fn select(&self, indices: &[usize]) -> MultiLabelSet {
        let mut data = Vec::with_capacity(indices.len() * self.num_classes);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        MultiLabelSet {
            n: indices.len(),
            num_classes: self.num_classes,
            data,
        }
    }
}

/// Either label kind, as stored in a manifest split.
#[derive(Clone, Debug, PartialEq)]
pub enum Labels {
    Single(LabelSet),
    Multi(MultiLabelSet),
}

impl Labels {
    pub fn len(&self) -> usize {
        match self {
            Labels::Single(l) => l.len(),
            Labels::Multi(l) => l.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_classes(&self) -> usize {
        match self {
            Labels::Single(l) => l.num_classes(),
            Labels::Multi(l) => l.num_classes(),
        }
    }

    pub fn as_single(&self) -> Option<&LabelSet> {
        match self {
            Labels::Single(l) => Some(l),
            Labels::Multi(_) => None,
        }
    }

    pub fn as_multi(&self) -> Option<&MultiLabelSet> {
        match self {
            Labels::Multi(l) => Some(l),
            Labels::Single(_) => None,
        }
    }

    pub fn select(&self, indices: &[usize]) -> Labels {
        match self {
            Labels::Single(l) => Labels::Single(l.select(indices)),
            Labels::Multi(l) => Labels::Multi(l.select(indices)),
        }
    }
}
