//! Dense matrix substrate, seeded random streams and the handful of kernels
//! shared by every other module.

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major matrix of finite `f64` values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    /// Builds a matrix from row-major data, rejecting wrong lengths and
    /// non-finite entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "matrix data has {} values, expected {rows}x{cols}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite value at row {}, column {}",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::invalid("ragged rows"));
        }
        Self::from_vec(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    /// New matrix holding the listed rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Seeded random stream backed by ChaCha8.
///
/// ChaCha8 output is specified bit-for-bit, so a seed reproduces the same
/// draws on every platform. Independent child streams come from
/// [`RngStream::split`], which hashes `(seed, stream id)` with SplitMix64.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Fresh stream for sub-task `stream`. Depends only on this stream's seed,
    /// never on how many values have been drawn from it.
    pub fn split(&self, stream: u64) -> RngStream {
        RngStream::new(derive_seed(self.seed, stream))
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for `(seed, stream)`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream))
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn squared_norm(a: &[f64]) -> f64 {
    dot(a, a)
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &Matrix) -> Result<Matrix> {
    if !logits.is_finite() {
        return Err(Error::invalid("softmax input contains non-finite values"));
    }
    let mut out = logits.clone();
    for i in 0..out.rows() {
        softmax_in_place(out.row_mut(i));
    }
    Ok(out)
}

/// In-place softmax of one finite row.
#[inline]
pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Cosine similarity clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "dimension mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let na = squared_norm(a).sqrt();
    let nb = squared_norm(b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::DegenerateInput("cosine similarity of a zero vector".into()));
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax_row(row: &[f64]) -> Result<usize> {
    if row.is_empty() {
        return Err(Error::invalid("argmax of an empty row"));
    }
    Ok(argmax(row))
}

#[inline]
pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// A k-fold partition plus any stratification warnings raised while building it.
#[derive(Clone, Debug, PartialEq)]
pub struct Folds {
    /// Held-out index sets, each sorted ascending.
    pub folds: Vec<Vec<usize>>,
    pub warnings: Vec<String>,
}

impl Folds {
    /// Complement of fold `f` (the training indices), ascending.
    pub fn training_indices(&self, f: usize, n: usize) -> Vec<usize> {
        let mut held = vec![false; n];
        for &i in &self.folds[f] {
            held[i] = true;
        }
        (0..n).filter(|&i| !held[i]).collect()
    }
}

/// Partitions `0..n` into `k` folds whose sizes differ by at most one.
///
/// With stratification, each class's members are shuffled and dealt
/// round-robin, continuing the deal position across classes so both the
/// per-class and overall fold sizes stay within one of each other. Classes with
/// fewer than `k` members are pooled and dealt unstratified, with a warning.
pub fn kfold_indices(
    n: usize,
    k: usize,
    stratify_labels: Option<&[usize]>,
    rng: &mut RngStream,
) -> Result<Folds> {
    if k < 2 || k > n {
        return Err(Error::invalid(format!("need 2 <= k <= n, got k={k}, n={n}")));
    }
    let mut folds = vec![Vec::with_capacity(n / k + 1); k];
    let mut warnings = Vec::new();
    let mut cursor = 0usize;
    let mut deal = |members: &[usize], folds: &mut Vec<Vec<usize>>| {
        for &i in members {
            folds[cursor % k].push(i);
            cursor += 1;
        }
    };

    match stratify_labels {
        None => {
            let mut all: Vec<usize> = (0..n).collect();
            all.shuffle(rng);
            deal(&all, &mut folds);
        }
        Some(labels) => {
            if labels.len() != n {
                return Err(Error::invalid(format!(
                    "{} stratification labels for {n} examples",
                    labels.len()
                )));
            }
            let num_classes = labels.iter().copied().max().map_or(0, |m| m + 1);
            let mut by_class = vec![Vec::new(); num_classes];
            for (i, &c) in labels.iter().enumerate() {
                by_class[c].push(i);
            }
            let mut pooled = Vec::new();
            for (c, members) in by_class.iter_mut().enumerate() {
                if members.is_empty() {
                    continue;
                }
                if members.len() < k {
                    let msg = format!(
                        "class {c} has {} members (< {k} folds); dealt unstratified",
                        members.len()
                    );
                    log::warn!("{msg}");
                    warnings.push(msg);
                    pooled.extend_from_slice(members);
                    continue;
                }
                members.shuffle(rng);
                deal(members, &mut folds);
            }
            pooled.shuffle(rng);
            deal(&pooled, &mut folds);
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(Folds { folds, warnings })
}
