//! Soft-label kNN voting.
//!
//! Round `m` uses view `m mod V`. Within a round every embedding is
//! L2-normalized, its `k` most cosine-similar other examples vote for their
//! labels (weighted by similarity or uniformly), and the round marks the
//! example when the winning label differs from its own. An example is flagged
//! when more than half of the rounds mark it; its score is the marked fraction.

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{Method, MislabelReport};
use crate::dataio::{EmbeddingTensor, LabelSet};
use crate::error::{Error, Result};
use crate::numerics::{argmax, dot, squared_norm, Matrix};
use crate::par;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnnWeighting {
    #[default]
    Similarity,
    Uniform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnnConfig {
    pub k: usize,
    pub rounds: usize,
    pub weighting: KnnWeighting,
}

impl Default for KnnConfig {
    fn default() -> Self {
        Self {
            k: 10,
            rounds: 21,
            weighting: KnnWeighting::Similarity,
        }
    }
}

fn normalized(view: &Matrix) -> Result<Matrix> {
    let mut out = view.clone();
    for i in 0..out.rows() {
        let norm = squared_norm(out.row(i)).sqrt();
        if norm == 0.0 {
            return Err(Error::DegenerateInput(format!("example {i} has a zero embedding")));
        }
        out.row_mut(i).iter_mut().for_each(|v| *v /= norm);
    }
    Ok(out)
}

/// Per-example mark of one round on one view.
fn round_marks(view: &Matrix, y: &LabelSet, cfg: &KnnConfig) -> Result<Vec<bool>> {
    let z = normalized(view)?;
    let (n, c) = (z.rows(), y.num_classes());
    Ok(par::map_range(n, |i| {
        let xi = z.row(i);
        let mut sims: Vec<(f64, usize)> = (0..n).filter(|&j| j != i).map(|j| (dot(xi, z.row(j)), j)).collect();
        let closer = |a: &(f64, usize), b: &(f64, usize)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
        if cfg.k < sims.len() {
            sims.select_nth_unstable_by(cfg.k - 1, closer);
            sims.truncate(cfg.k);
        }
        let mut soft = vec![0.0; c];
        for &(s, j) in &sims {
            soft[y.get(j)] += match cfg.weighting {
                KnnWeighting::Similarity => s,
                KnnWeighting::Uniform => 1.0,
            };
        }
        argmax(&soft) != y.get(i)
    }))
}

pub fn detect_knn(x: &EmbeddingTensor, y: &LabelSet, cfg: &KnnConfig) -> Result<MislabelReport> {
    let n = x.n();
    if y.len() != n {
        return Err(Error::invalid(format!("{n} embeddings but {} labels", y.len())));
    }
    if cfg.k == 0 || cfg.k >= n {
        return Err(Error::invalid(format!("k must be in 1..n, got k={} with n={n}", cfg.k)));
    }
    if cfg.rounds == 0 || cfg.rounds % 2 == 0 {
        return Err(Error::invalid(format!("rounds must be odd and positive, got {}", cfg.rounds)));
    }
    let v = x.num_views();
    // Rounds sharing a view vote identically; compute each used view once.
    let used = cfg.rounds.min(v);
    let marks: Vec<Vec<bool>> = (0..used).map(|view| round_marks(x.view(view), y, cfg)).collect::<Result<_>>()?;
    let mut votes = vec![0usize; n];
    for m in 0..cfg.rounds {
        for (vote, &mark) in votes.iter_mut().zip(&marks[m % v]) {
            *vote += usize::from(mark);
        }
    }
    let flags = votes.iter().map(|&k| 2 * k > cfg.rounds).collect();
    let scores = votes.iter().map(|&k| k as f64 / cfg.rounds as f64).collect();
    MislabelReport::new(
        Method::Knn,
        flags,
        scores,
        json!({ "k": cfg.k, "rounds": cfg.rounds, "weighting": cfg.weighting, "views": v }),
    )
}
