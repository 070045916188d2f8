//! Gaussian-cluster stand-ins for encoder embeddings.
//!
//! Class `c` gets a center drawn uniformly on the unit sphere and scaled by
//! `separation`. Single-label examples are `center[label] + N(0, I)` with
//! labels assigned round-robin (`i % C`). Multi-label examples sum the centers
//! of every present class before adding the same unit noise.
//!
//! Extra views (`views > 1`) are the canonical embedding plus `N(0, jitter^2 I)`,
//! a stand-in for embeddings of augmented images.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{EmbeddingTensor, LabelSet, Labels, MultiLabelSet};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngStream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub n: usize,
    pub dim: usize,
    pub separation: f64,
    pub views: usize,
    pub jitter: f64,
    /// Multi-label generation when present. Diagonal entry `[c][c]` is the
    /// prevalence of class `c`; off-diagonal `[a][b]` is the probability that
    /// `b` is switched on given `a` was drawn present.
    pub cooccurrence: Option<Vec<Vec<f64>>>,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn single_label(num_classes: usize, n: usize, dim: usize, separation: f64, seed: u64) -> Self {
        Self {
            num_classes,
            n,
            dim,
            separation,
            views: 1,
            jitter: 0.0,
            cooccurrence: None,
            seed,
        }
    }

    pub fn with_views(mut self, views: usize, jitter: f64) -> Self {
        self.views = views;
        self.jitter = jitter;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 || self.dim == 0 || self.views == 0 {
            return Err(Error::invalid("need num_classes >= 2, dim >= 1, views >= 1"));
        }
        if !(self.separation > 0.0) || !self.separation.is_finite() {
            return Err(Error::invalid("separation must be positive"));
        }
        if !(self.jitter >= 0.0) {
            return Err(Error::invalid("jitter must be nonnegative"));
        }
        if let Some(m) = &self.cooccurrence {
            if m.len() != self.num_classes || m.iter().any(|r| r.len() != self.num_classes) {
                return Err(Error::invalid("cooccurrence must be C x C"));
            }
            if m.iter().flatten().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::invalid("cooccurrence entries must be probabilities"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticData {
    pub embeddings: EmbeddingTensor,
    pub labels: Labels,
    /// `C x d` cluster centers; usable as class "text" embeddings.
    pub centers: Matrix,
}

/// Holds the cluster centers so several splits can share them.
#[derive(Clone, Debug)]
pub struct SyntheticGenerator {
    spec: SyntheticSpec,
    centers: Matrix,
    root: RngStream,
}

impl SyntheticGenerator {
    pub fn new(spec: SyntheticSpec) -> Result<Self> {
        spec.validate()?;
        let root = RngStream::new(spec.seed);
        let mut rng = root.split(0);
        let mut centers = Matrix::zeros(spec.num_classes, spec.dim);
        for c in 0..spec.num_classes {
            let row = centers.row_mut(c);
            loop {
                for v in row.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
                let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 1e-12 {
                    for v in row.iter_mut() {
                        *v *= spec.separation / norm;
                    }
                    break;
                }
            }
        }
        Ok(Self { spec, centers, root })
    }

    pub fn spec(&self) -> &SyntheticSpec {
        &self.spec
    }

    pub fn centers(&self) -> &Matrix {
        &self.centers
    }

    /// Draws `n` examples from stream `stream` (stream 0 is reserved for the
    /// centers).
    pub fn sample(&self, n: usize, stream: u64) -> Result<SyntheticData> {
        let spec = &self.spec;
        let (c_count, d) = (spec.num_classes, spec.dim);
        let mut rng = self.root.split(stream.wrapping_add(1));
        let mut base = Matrix::zeros(n, d);
        let labels = match &spec.cooccurrence {
            None => {
                let labels: Vec<usize> = (0..n).map(|i| i % c_count).collect();
                for (i, &c) in labels.iter().enumerate() {
                    let center = self.centers.row(c);
                    for (x, m) in base.row_mut(i).iter_mut().zip(center) {
                        *x = m + rng.sample::<f64, _>(StandardNormal);
                    }
                }
                Labels::Single(LabelSet::new(labels, c_count)?)
            }
            Some(co) => {
                let mut rows = Vec::with_capacity(n);
                for i in 0..n {
                    let drawn: Vec<bool> = (0..c_count).map(|c| rng.random::<f64>() < co[c][c]).collect();
                    let mut row = drawn.clone();
                    for a in (0..c_count).filter(|&a| drawn[a]) {
                        for b in 0..c_count {
                            if b != a && rng.random::<f64>() < co[a][b] {
                                row[b] = true;
                            }
                        }
                    }
                    let x = base.row_mut(i);
                    for v in x.iter_mut() {
                        *v = rng.sample(StandardNormal);
                    }
                    for c in (0..c_count).filter(|&c| row[c]) {
                        for (v, m) in x.iter_mut().zip(self.centers.row(c)) {
                            *v += m;
                        }
                    }
                    rows.push(row);
                }
                Labels::Multi(MultiLabelSet::new(rows, c_count)?)
            }
        };
        let mut views = vec![base];
        for _ in 1..spec.views {
            let mut v = views[0].clone();
            for i in 0..n {
                for x in v.row_mut(i) {
                    *x += spec.jitter * rng.sample::<f64, _>(StandardNormal);
                }
            }
            views.push(v);
        }
        Ok(SyntheticData {
            embeddings: EmbeddingTensor::new(views)?,
            labels,
            centers: self.centers.clone(),
        })
    }
}

/// Generates `spec.n` examples from a fresh generator.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    SyntheticGenerator::new(spec.clone())?.sample(spec.n, 0)
}
