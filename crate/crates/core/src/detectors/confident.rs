//! Confident learning.
//!
//! Per-class thresholds `t[j]` are the mean probability of class `j` over
//! examples labeled `j`. Example `i` is counted in the confident joint at
//! `(y_i, j*)` where `j*` is the most probable class among those whose
//! probability reaches their threshold; examples clearing no threshold are not
//! counted. The calibrated joint rescales each row to the empirical label
//! frequency and normalizes to total mass 1.
//!
//! Pruning flags, per off-diagonal cell `(i, j)`, `floor(n * Q[i][j])`
//! label-`i` examples, either by largest margin `P[., j] - t[j]` (per pair) or
//! by lowest self-confidence (per class). Examples the joint counted on its
//! diagonal are never flagged.

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{aggregate_tta_probs, Method, MislabelReport};
use crate::dataio::{EmbeddingTensor, LabelSet};
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::probe::{cross_val_proba, cross_val_proba_per_view, TrainConfig};

/// Slack on `n * Q[i][j]` before flooring, so calibration round-off cannot
/// turn an exact integer into the integer below.
const FLOOR_SLACK: f64 = 1e-9;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PruneMode {
    #[default]
    PruneByNoiseRate,
    PruneByClass,
}

impl std::str::FromStr for PruneMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "prune_by_noise_rate" | "noise_rate" => Ok(Self::PruneByNoiseRate),
            "prune_by_class" | "class" => Ok(Self::PruneByClass),
            other => Err(Error::invalid(format!("unknown prune mode '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassThresholds {
    /// `None` for classes without any labeled example.
    pub values: Vec<Option<f64>>,
}

impl ClassThresholds {
    pub fn get(&self, j: usize) -> Option<f64> {
        self.values[j]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConfidentJoint {
    /// `counts[i][j]`: examples labeled `i` confidently suggesting `j`.
    pub counts: Vec<Vec<usize>>,
    pub n_counted: usize,
    /// Suggested class of each example, `None` when it cleared no threshold.
    pub assignment: Vec<Option<usize>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct JointDistribution {
    pub q: Vec<Vec<f64>>,
}

impl JointDistribution {
    /// `floor(n * Q[i][j])`.
    pub fn prune_count(&self, i: usize, j: usize, n: usize) -> usize {
        (n as f64 * self.q[i][j] + FLOOR_SLACK).floor().max(0.0) as usize
    }
}

fn check(p: &Matrix, y: &LabelSet) -> Result<()> {
    if p.rows() != y.len() || p.cols() != y.num_classes() {
        return Err(Error::invalid(format!(
            "probabilities are {}x{} but labels are {} over {} classes",
            p.rows(),
            p.cols(),
            y.len(),
            y.num_classes()
        )));
    }
    if !p.is_finite() {
        return Err(Error::invalid("probabilities contain non-finite values"));
    }
    Ok(())
}

pub fn compute_thresholds(p: &Matrix, y: &LabelSet) -> Result<ClassThresholds> {
    check(p, y)?;
    let c = y.num_classes();
    let mut sums = vec![0.0; c];
    let counts = y.class_counts();
    for (i, &label) in y.as_slice().iter().enumerate() {
        sums[label] += p.get(i, label);
    }
    let values = (0..c)
        .map(|j| {
            if counts[j] == 0 {
                log::warn!("class {j} has no labeled examples; its threshold is undefined");
                None
            } else {
                Some(sums[j] / counts[j] as f64)
            }
        })
        .collect();
    Ok(ClassThresholds { values })
}

pub fn confident_joint(p: &Matrix, y: &LabelSet, t: &ClassThresholds) -> Result<ConfidentJoint> {
    check(p, y)?;
    let c = y.num_classes();
    if t.values.len() != c {
        return Err(Error::invalid("threshold count does not match class count"));
    }
    let mut counts = vec![vec![0; c]; c];
    let mut assignment = Vec::with_capacity(p.rows());
    for (i, &label) in y.as_slice().iter().enumerate() {
        let row = p.row(i);
        let mut best: Option<usize> = None;
        for j in 0..c {
            let Some(tj) = t.values[j] else { continue };
            if row[j] >= tj && best.is_none_or(|b| row[j] > row[b]) {
                best = Some(j);
            }
        }
        if let Some(j) = best {
            counts[label][j] += 1;
        }
        assignment.push(best);
    }
    let n_counted = assignment.iter().filter(|a| a.is_some()).count();
    Ok(ConfidentJoint {
        counts,
        n_counted,
        assignment,
    })
}

pub fn calibrate_joint(cj: &ConfidentJoint, y: &LabelSet) -> Result<JointDistribution> {
    let c = y.num_classes();
    if cj.counts.len() != c {
        return Err(Error::invalid("confident joint does not match class count"));
    }
    let n = y.len().max(1) as f64;
    let label_counts = y.class_counts();
    let mut q = vec![vec![0.0; c]; c];
    for i in 0..c {
        let row_sum: usize = cj.counts[i].iter().sum();
        let mass = label_counts[i] as f64 / n;
        if row_sum == 0 {
            q[i][i] = mass;
        } else {
            for j in 0..c {
                q[i][j] = cj.counts[i][j] as f64 / row_sum as f64 * mass;
            }
        }
    }
    let total: f64 = q.iter().flatten().sum();
    if total > 0.0 {
        q.iter_mut().flatten().for_each(|v| *v /= total);
    }
    Ok(JointDistribution { q })
}

/// First `k` of `pool` ordered by `key`, ties by index.
fn take_top(mut pool: Vec<usize>, k: usize, key: impl Fn(usize) -> f64, descending: bool) -> Vec<usize> {
    pool.sort_by(|&a, &b| {
        let ord = key(a).total_cmp(&key(b));
        (if descending { ord.reverse() } else { ord }).then(a.cmp(&b))
    });
    pool.truncate(k);
    pool
}

/// Pruning from precomputed thresholds and joint.
pub fn cl_prune_with(
    p: &Matrix,
    y: &LabelSet,
    t: &ClassThresholds,
    cj: &ConfidentJoint,
    q: &JointDistribution,
    mode: PruneMode,
) -> Result<MislabelReport> {
    check(p, y)?;
    let (n, c) = (y.len(), y.num_classes());
    if cj.assignment.len() != n || q.q.len() != c {
        return Err(Error::invalid("confident joint or distribution does not match the labels"));
    }
    let mut pools: Vec<Vec<usize>> = vec![Vec::new(); c];
    for (i, &label) in y.as_slice().iter().enumerate() {
        if cj.assignment[i] != Some(label) {
            pools[label].push(i);
        }
    }
    let mut flags = vec![false; n];
    for i in 0..c {
        match mode {
            PruneMode::PruneByNoiseRate => {
                for j in (0..c).filter(|&j| j != i) {
                    let (k, Some(tj)) = (q.prune_count(i, j, n), t.values[j]) else { continue };
                    if k == 0 {
                        continue;
                    }
                    for e in take_top(pools[i].clone(), k, |e| p.get(e, j) - tj, true) {
                        flags[e] = true;
                    }
                }
            }
            PruneMode::PruneByClass => {
                let k: usize = (0..c).filter(|&j| j != i).map(|j| q.prune_count(i, j, n)).sum();
                for e in take_top(pools[i].clone(), k, |e| p.get(e, i), false) {
                    flags[e] = true;
                }
            }
        }
    }
    let scores = (0..n).map(|i| 1.0 - p.get(i, y.get(i))).collect();
    MislabelReport::new(Method::ConfidentLearning, flags, scores, json!({ "mode": mode }))
}

/// Thresholds, joint, calibration and pruning from probabilities.
pub fn cl_prune(p: &Matrix, y: &LabelSet, q: &JointDistribution, mode: PruneMode) -> Result<MislabelReport> {
    let t = compute_thresholds(p, y)?;
    let cj = confident_joint(p, y, &t)?;
    cl_prune_with(p, y, &t, &cj, q, mode)
}

/// Every intermediate of one confident-learning pass.
#[derive(Clone, Debug)]
pub struct ConfidentLearning {
    pub report: MislabelReport,
    pub probabilities: Matrix,
    pub thresholds: ClassThresholds,
    pub joint: ConfidentJoint,
    pub distribution: JointDistribution,
}

pub fn confident_learning_from_proba(p: Matrix, y: &LabelSet, mode: PruneMode) -> Result<ConfidentLearning> {
    let thresholds = compute_thresholds(&p, y)?;
    let joint = confident_joint(&p, y, &thresholds)?;
    let distribution = calibrate_joint(&joint, y)?;
    let report = cl_prune_with(&p, y, &thresholds, &joint, &distribution, mode)?;
    Ok(ConfidentLearning {
        report,
        probabilities: p,
        thresholds,
        joint,
        distribution,
    })
}

/// The full detector: out-of-fold probe probabilities (averaged over views
/// when `tta`), then confident learning.
pub fn detect_confident_learning(
    x: &EmbeddingTensor,
    y: &LabelSet,
    cfg: &TrainConfig,
    tta: bool,
    mode: PruneMode,
) -> Result<ConfidentLearning> {
    if x.n() < y.num_classes() * cfg.cv_folds {
        log::warn!(
            "n = {} is below C * folds = {}; some folds may miss classes",
            x.n(),
            y.num_classes() * cfg.cv_folds
        );
    }
    let p = if tta {
        if x.num_views() == 1 {
            log::info!("test-time augmentation requested but only one view is present; using it alone");
        }
        aggregate_tta_probs(&cross_val_proba_per_view(x, y, cfg)?)?
    } else {
        cross_val_proba(x, y, cfg)?
    };
    let mut out = confident_learning_from_proba(p, y, mode)?;
    out.report.params = json!({
        "mode": mode,
        "tta": tta,
        "views": x.num_views(),
        "train": cfg,
    });
    Ok(out)
}
