//! Metrics, retraining after cleaning, and benchmark sweeps.
//!
//! Sweep output is a flat list of [`SweepRecord`]s, one per
//! (axis value, method or strategy, seed), in that nesting order. CSV header:
//! `axis,method,seed,f1,precision,recall,flagged,noised,before,after,error`,
//! with empty fields for missing values. `before`/`after` hold retrained probe
//! accuracy for noise sweeps and macro AUC for fraction sweeps.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataio::{EmbeddingTensor, LabelSet, MultiLabelSet};
use crate::detectors::{detect_confident_learning, run_detector, DetectorSettings, Method};
use crate::error::{Error, Result};
use crate::multilabel::{binary_confident_learning, per_class_auc, plan_for_strategy, CleaningStrategy, RemovalGrid, RemovalPlan};
use crate::noise::{inject, NoiseKind, NoiseSpec};
use crate::numerics::RngStream;
use crate::par;
use crate::probe::{accuracy, train_probe, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionScore {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub true_negatives: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Precision, recall and F1 of `flags` against the ground-truth `mask`.
/// Undefined ratios are reported as 0.
pub fn detection_f1(flags: &[bool], mask: &[bool]) -> Result<DetectionScore> {
    if flags.len() != mask.len() {
        return Err(Error::invalid(format!("{} flags but {} mask entries", flags.len(), mask.len())));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (&f, &m) in flags.iter().zip(mask) {
        match (f, m) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(DetectionScore {
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
        true_negatives: tn,
        precision,
        recall,
        f1,
    })
}

/// Area under the ROC curve as the Mann-Whitney statistic; ties count one half.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::invalid(format!("{} scores but {} labels", scores.len(), labels.len())));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("scores contain NaN"));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric("AUC needs both positive and negative labels".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Twice the number of (positive, negative) pairs ranked correctly.
    let mut doubled: u128 = 0;
    let mut neg_below: u128 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let group_pos = order[start..end].iter().filter(|&&i| labels[i]).count() as u128;
        let group_neg = (end - start) as u128 - group_pos;
        doubled += group_pos * (2 * neg_below + group_neg);
        neg_below += group_neg;
        start = end;
    }
    Ok(doubled as f64 / (2 * pos as u128 * neg as u128) as f64)
}

/// Unweighted mean of the defined entries.
pub fn macro_average(values: &[Option<f64>]) -> Option<f64> {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrainOutcome {
    pub before: f64,
    pub after: f64,
    pub removed: usize,
}

impl RetrainOutcome {
    pub fn gain(&self) -> f64 {
        self.after - self.before
    }
}

/// Accuracy on the evaluation split of a probe trained on `rows` of `(x, y)`
/// (all rows when `None`).
fn eval_accuracy(
    x: &EmbeddingTensor,
    y: &LabelSet,
    rows: Option<&[usize]>,
    cfg: &TrainConfig,
    x_eval: &EmbeddingTensor,
    y_eval: &LabelSet,
) -> Result<f64> {
    let model = match rows {
        Some(r) if r.len() != y.len() => train_probe(&x.canonical().select_rows(r), &y.select(r), cfg)?,
        _ => train_probe(x.canonical(), y, cfg)?,
    };
    Ok(accuracy(&model.predict(x_eval.canonical())?, y_eval.as_slice()))
}

/// Accuracy on `(x_eval, y_eval)` of probes trained on all of `(x, y)` and on
/// the examples in `keep`.
pub fn retrain_after_cleaning(
    x: &EmbeddingTensor,
    y: &LabelSet,
    keep: &[usize],
    cfg: &TrainConfig,
    x_eval: &EmbeddingTensor,
    y_eval: &LabelSet,
) -> Result<RetrainOutcome> {
    if x.n() != y.len() || x_eval.n() != y_eval.len() {
        return Err(Error::invalid("embeddings and labels differ in length"));
    }
    let before = eval_accuracy(x, y, None, cfg, x_eval, y_eval)?;
    let after = if keep.len() == y.len() {
        before
    } else {
        eval_accuracy(x, y, Some(keep), cfg, x_eval, y_eval)?
    };
    Ok(RetrainOutcome {
        before,
        after,
        removed: y.len() - keep.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiLabelRetrain {
    pub before: Vec<Option<f64>>,
    pub after: Vec<Option<f64>>,
    pub before_macro: Option<f64>,
    pub after_macro: Option<f64>,
}

/// Per-class and macro AUC before and after applying `plan`.
pub fn retrain_multilabel_after_cleaning(
    x: &EmbeddingTensor,
    y: &MultiLabelSet,
    plan: &RemovalPlan,
    cfg: &TrainConfig,
    x_eval: &EmbeddingTensor,
    y_eval: &MultiLabelSet,
) -> Result<MultiLabelRetrain> {
    let empty = RemovalPlan::empty(y.len(), y.num_classes());
    let before = per_class_auc(x, y, &empty, x_eval, y_eval, cfg)?;
    let after = if plan.is_empty() {
        before.clone()
    } else {
        per_class_auc(x, y, plan, x_eval, y_eval, cfg)?
    };
    Ok(MultiLabelRetrain {
        before_macro: macro_average(&before),
        after_macro: macro_average(&after),
        before,
        after,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub axis: f64,
    pub method: String,
    pub seed: u64,
    pub f1: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub flagged: Option<usize>,
    pub noised: Option<usize>,
    pub before: Option<f64>,
    pub after: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_class_before: Vec<Option<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_class_after: Vec<Option<f64>>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    /// `noise_rate` or `fraction`.
    pub axis_name: String,
    pub seeds: Vec<u64>,
    pub records: Vec<SweepRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummaryRow {
    pub axis: f64,
    pub method: String,
    pub runs: usize,
    pub f1: Option<f64>,
    pub before: Option<f64>,
    pub after: Option<f64>,
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(T::to_string).unwrap_or_default()
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    macro_average(&values.collect::<Vec<_>>())
}

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("axis,method,seed,f1,precision,recall,flagged,noised,before,after,error\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                r.axis,
                r.method,
                r.seed,
                opt(&r.f1),
                opt(&r.precision),
                opt(&r.recall),
                opt(&r.flagged),
                opt(&r.noised),
                opt(&r.before),
                opt(&r.after),
                r.error.as_deref().unwrap_or("").replace([',', '\n'], ";"),
            ));
        }
        out
    }

    /// Seed means per (axis value, method), in record order.
    pub fn summary(&self) -> Vec<SweepSummaryRow> {
        let mut groups: Vec<((f64, String), Vec<&SweepRecord>)> = Vec::new();
        for r in &self.records {
            match groups.iter_mut().find(|((a, m), _)| *a == r.axis && *m == r.method) {
                Some((_, g)) => g.push(r),
                None => groups.push(((r.axis, r.method.clone()), vec![r])),
            }
        }
        groups
            .into_iter()
            .map(|((axis, method), g)| SweepSummaryRow {
                axis,
                method,
                runs: g.len(),
                f1: mean_of(g.iter().map(|r| r.f1)),
                before: mean_of(g.iter().map(|r| r.before)),
                after: mean_of(g.iter().map(|r| r.after)),
            })
            .collect()
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "axis": self.axis_name,
            "seeds": self.seeds,
            "cells": self.records.len(),
            "failed_cells": self.records.iter().filter(|r| r.error.is_some()).count(),
            "summary": self.summary(),
        })
    }

    /// Long-format series for external plotting, as `(file name, CSV)`.
    pub fn plot_data(&self) -> Vec<(String, String)> {
        let summary = self.summary();
        let mut files = Vec::new();
        if self.axis_name == "noise_rate" {
            let mut f1 = String::from("method,noise_rate,f1\n");
            let mut retrain = String::from("method,noise_rate,noisy_accuracy,cleaned_accuracy\n");
            for s in &summary {
                f1.push_str(&format!("{},{},{}\n", s.method, s.axis, opt(&s.f1)));
                if s.before.is_some() {
                    retrain.push_str(&format!("{},{},{},{}\n", s.method, s.axis, opt(&s.before), opt(&s.after)));
                }
            }
            files.push(("f1_vs_noise.csv".to_string(), f1));
            files.push(("retrain_accuracy_vs_noise.csv".to_string(), retrain));
        } else {
            let mut macro_auc = String::from("strategy,fraction,noisy_macro_auc,cleaned_macro_auc\n");
            for s in &summary {
                macro_auc.push_str(&format!("{},{},{},{}\n", s.method, s.axis, opt(&s.before), opt(&s.after)));
            }
            let mut change: BTreeMap<(String, u64, usize), Vec<f64>> = BTreeMap::new();
            for r in &self.records {
                for (c, (b, a)) in r.per_class_before.iter().zip(&r.per_class_after).enumerate() {
                    if let (Some(b), Some(a)) = (b, a) {
                        change.entry((r.method.clone(), r.axis.to_bits(), c)).or_default().push(a - b);
                    }
                }
            }
            let mut per_class = String::from("strategy,fraction,class,auc_change\n");
            for ((m, axis, c), v) in change {
                let mean = v.iter().sum::<f64>() / v.len() as f64;
                per_class.push_str(&format!("{m},{},{c},{mean}\n", f64::from_bits(axis)));
            }
            files.push(("macro_auc_vs_fraction.csv".to_string(), macro_auc));
            files.push(("per_class_auc_change.csv".to_string(), per_class));
        }
        files
    }
}

/// Single-label data for noise sweeps. Labels are clean; noise is injected
/// per cell.
#[derive(Clone, Debug)]
pub struct NoiseSweepData<'a> {
    pub x: &'a EmbeddingTensor,
    pub clean: &'a LabelSet,
    /// Clean evaluation split for optional retraining.
    pub eval: Option<(&'a EmbeddingTensor, &'a LabelSet)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSweepConfig {
    pub kind: NoiseKind,
    pub detectors: DetectorSettings,
    pub retrain: bool,
}

impl Default for NoiseSweepConfig {
    fn default() -> Self {
        Self {
            kind: NoiseKind::ConfidenceBased,
            detectors: DetectorSettings::default(),
            retrain: false,
        }
    }
}

/// Inclusive `start:stop:step` grid, robust to floating-point steps.
pub fn parse_range(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::invalid(format!("bad range '{text}'")))?;
    match nums[..] {
        [v] => Ok(vec![v]),
        [start, stop, step] if step > 0.0 && stop >= start => {
            let count = ((stop - start) / step + 1e-9).floor() as usize;
            Ok((0..=count).map(|k| round12(start + k as f64 * step)).collect())
        }
        _ => Err(Error::invalid(format!("range '{text}' must be 'value' or 'start:stop:step' with step > 0"))),
    }
}

fn round12(v: f64) -> f64 {
    (v * 1e12).round() / 1e12
}

/// Detection quality (and optionally retrained accuracy) for every
/// `(level, method, seed)`. Failures are recorded in the cell's `error`.
pub fn sweep_noise_levels(
    data: &NoiseSweepData<'_>,
    methods: &[Method],
    levels: &[f64],
    seeds: &[u64],
    cfg: &NoiseSweepConfig,
) -> Result<SweepResult> {
    if let Some(l) = levels.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        return Err(Error::invalid(format!("noise level {l} is outside [0, 1]")));
    }
    if cfg.kind == NoiseKind::ExternalFile {
        return Err(Error::invalid("noise sweeps inject synthetic noise"));
    }
    let jobs: Vec<(usize, u64)> = (0..levels.len()).flat_map(|a| seeds.iter().map(move |&s| (a, s))).collect();
    let groups = par::map_slice(&jobs, |&(a, seed)| noise_cell(data, methods, levels[a], seed, cfg));
    let mut records = Vec::with_capacity(levels.len() * methods.len() * seeds.len());
    for a in 0..levels.len() {
        for m in 0..methods.len() {
            for s in 0..seeds.len() {
                records.push(groups[a * seeds.len() + s][m].clone());
            }
        }
    }
    Ok(SweepResult {
        axis_name: "noise_rate".into(),
        seeds: seeds.to_vec(),
        records,
    })
}

fn noise_cell(
    data: &NoiseSweepData<'_>,
    methods: &[Method],
    level: f64,
    seed: u64,
    cfg: &NoiseSweepConfig,
) -> Vec<SweepRecord> {
    let blank = |m: Method| SweepRecord {
        axis: level,
        method: m.to_string(),
        seed,
        ..SweepRecord::default()
    };
    let failed = |e: &Error| methods.iter().map(|&m| SweepRecord { error: Some(e.to_string()), ..blank(m) }).collect();
    let mut settings = cfg.detectors.clone();
    settings.train.seed = seed;
    let noise = match inject(&NoiseSpec::new(cfg.kind, level, seed), data.clean, Some(data.x), &settings.train) {
        Ok(n) => n,
        Err(e) => return failed(&e),
    };
    let noised = noise.num_changed();
    let needs_cl = methods.iter().any(|m| matches!(m, Method::ConfidentLearning | Method::TracIn));
    let cl = if needs_cl {
        match detect_confident_learning(data.x, &noise.noisy, &settings.train, settings.tta, settings.mode) {
            Ok(cl) => Some(cl),
            Err(e) => return failed(&e),
        }
    } else {
        None
    };
    let eval = data.eval.filter(|_| cfg.retrain);
    let baseline = eval.map(|(xe, ye)| eval_accuracy(data.x, &noise.noisy, None, &settings.train, xe, ye));
    methods
        .iter()
        .map(|&m| {
            let mut rec = SweepRecord { noised: Some(noised), ..blank(m) };
            let report = match run_detector(m, data.x, &noise.noisy, &settings, cl.as_ref()) {
                Ok(r) => r,
                Err(e) => {
                    rec.error = Some(e.to_string());
                    return rec;
                }
            };
            rec.flagged = Some(report.num_flagged());
            if noised > 0 {
                let s = detection_f1(&report.flags, &noise.mask).expect("lengths match");
                rec.f1 = Some(s.f1);
                rec.precision = Some(s.precision);
                rec.recall = Some(s.recall);
            }
            if let (Some((xe, ye)), Some(before)) = (eval, &baseline) {
                let kept = report.kept_indices();
                let after = eval_accuracy(data.x, &noise.noisy, Some(&kept), &settings.train, xe, ye);
                match (before, after) {
                    (Ok(b), Ok(a)) => {
                        rec.before = Some(*b);
                        rec.after = Some(a);
                    }
                    (Err(e), _) => rec.error = Some(e.to_string()),
                    (_, Err(e)) => rec.error = Some(e.to_string()),
                }
            }
            rec
        })
        .collect()
}

/// Indices of a stratified subsample: `ceil(fraction * size)` members of
/// every stratum, ascending.
pub fn stratified_subsample(keys: &[usize], fraction: f64, rng: &mut RngStream) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!("fraction {fraction} is outside (0, 1]")));
    }
    if fraction == 1.0 {
        return Ok((0..keys.len()).collect());
    }
    let mut strata: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &k) in keys.iter().enumerate() {
        strata.entry(k).or_default().push(i);
    }
    let mut out = Vec::new();
    for members in strata.values_mut() {
        members.shuffle(rng);
        let take = ((fraction * members.len() as f64) - 1e-9).ceil().max(1.0) as usize;
        out.extend_from_slice(&members[..take.min(members.len())]);
    }
    out.sort_unstable();
    Ok(out)
}

/// Stratum key of a multi-label row: its label pattern as a bit set, which
/// keeps rare label combinations present in small subsamples.
fn pattern_key(y: &MultiLabelSet, i: usize) -> usize {
    y.row(i).iter().enumerate().fold(0, |acc, (c, &b)| acc | (usize::from(b) << (c % usize::BITS as usize)))
}

/// Multi-label data for fraction sweeps. Training labels are the given
/// (possibly noisy) ones; validation and evaluation labels are clean.
#[derive(Clone, Debug)]
pub struct FractionSweepData<'a> {
    pub x_train: &'a EmbeddingTensor,
    pub y_train: &'a MultiLabelSet,
    pub x_val: &'a EmbeddingTensor,
    pub y_val: &'a MultiLabelSet,
    pub x_eval: &'a EmbeddingTensor,
    pub y_eval: &'a MultiLabelSet,
}

/// Macro AUC before and after each strategy on stratified training
/// subsamples, for every `(fraction, strategy, seed)`.
pub fn sweep_data_fractions(
    data: &FractionSweepData<'_>,
    fractions: &[f64],
    strategies: &[CleaningStrategy],
    seeds: &[u64],
    grid: &RemovalGrid,
    cfg: &TrainConfig,
) -> Result<SweepResult> {
    if let Some(f) = fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
        return Err(Error::invalid(format!("fraction {f} is outside (0, 1]")));
    }
    let jobs: Vec<(usize, u64)> = (0..fractions.len()).flat_map(|a| seeds.iter().map(move |&s| (a, s))).collect();
    let groups = par::map_slice(&jobs, |&(a, seed)| {
        fraction_cell(data, fractions[a], strategies, seed, grid, cfg)
    });
    let mut records = Vec::new();
    for a in 0..fractions.len() {
        for k in 0..strategies.len() {
            for s in 0..seeds.len() {
                records.push(groups[a * seeds.len() + s][k].clone());
            }
        }
    }
    Ok(SweepResult {
        axis_name: "fraction".into(),
        seeds: seeds.to_vec(),
        records,
    })
}

fn fraction_cell(
    data: &FractionSweepData<'_>,
    fraction: f64,
    strategies: &[CleaningStrategy],
    seed: u64,
    grid: &RemovalGrid,
    cfg: &TrainConfig,
) -> Vec<SweepRecord> {
    let blank = |s: CleaningStrategy| SweepRecord {
        axis: fraction,
        method: s.to_string(),
        seed,
        ..SweepRecord::default()
    };
    let failed = |msg: String| strategies.iter().map(|&s| SweepRecord { error: Some(msg.clone()), ..blank(s) }).collect();
    let cfg = TrainConfig { seed, ..cfg.clone() };
    let keys: Vec<usize> = (0..data.y_train.len()).map(|i| pattern_key(data.y_train, i)).collect();
    let mut rng = RngStream::new(seed);
    let rows = match stratified_subsample(&keys, fraction, &mut rng) {
        Ok(r) => r,
        Err(e) => return failed(e.to_string()),
    };
    let minimum = 2 * cfg.cv_folds;
    if rows.len() < minimum {
        log::warn!("fraction {fraction} leaves {} examples (< {minimum}); skipped", rows.len());
        return failed(format!("skipped: {} examples is below {minimum}", rows.len()));
    }
    let x = data.x_train.select_rows(&rows);
    let y = data.y_train.select(&rows);
    let cls = match binary_confident_learning(&x, &y, &cfg) {
        Ok(c) => c,
        Err(e) => return failed(e.to_string()),
    };
    let empty = RemovalPlan::empty(y.len(), y.num_classes());
    let before = match per_class_auc(&x, &y, &empty, data.x_eval, data.y_eval, &cfg) {
        Ok(b) => b,
        Err(e) => return failed(e.to_string()),
    };
    strategies
        .iter()
        .map(|&s| {
            let mut rec = SweepRecord {
                before: macro_average(&before),
                per_class_before: before.clone(),
                ..blank(s)
            };
            let outcome = plan_for_strategy(s, &cls, &x, &y, Some((data.x_val, data.y_val)), grid, &cfg)
                .and_then(|plan| {
                    rec.flagged = Some(plan.total_removed());
                    per_class_auc(&x, &y, &plan, data.x_eval, data.y_eval, &cfg)
                });
            match outcome {
                Ok(after) => {
                    rec.after = macro_average(&after);
                    rec.per_class_after = after;
                }
                Err(e) => rec.error = Some(e.to_string()),
            }
            rec
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPoint {
    pub threshold: usize,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSweep {
    pub points: Vec<ThresholdPoint>,
    /// The externally supplied cutoff (typically the confident-learning flag
    /// count) and its F1.
    pub marked: Option<ThresholdPoint>,
}

impl ThresholdSweep {
    pub fn best(&self) -> Option<&ThresholdPoint> {
        self.points.iter().max_by(|a, b| a.f1.total_cmp(&b.f1).then(b.threshold.cmp(&a.threshold)))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,f1,marked\n");
        let marked = self.marked.as_ref().map(|m| m.threshold);
        for p in &self.points {
            out.push_str(&format!("{},{},{}\n", p.threshold, p.f1, u8::from(Some(p.threshold) == marked)));
        }
        out
    }
}

/// F1 of flagging the top `T` of `ranking`, for each `T` in `thresholds`.
pub fn tracin_threshold_sweep(ranking: &[usize], mask: &[bool], thresholds: &[usize], marked: Option<usize>) -> Result<ThresholdSweep> {
    let n = mask.len();
    if ranking.len() != n {
        return Err(Error::invalid("ranking and mask differ in length"));
    }
    if let Some(t) = thresholds.iter().chain(marked.iter()).find(|&&t| t > n) {
        return Err(Error::invalid(format!("threshold {t} exceeds n = {n}")));
    }
    let positives = mask.iter().filter(|&&m| m).count();
    // hits[t] = noised examples among the top t.
    let mut hits = vec![0usize; n + 1];
    for (t, &i) in ranking.iter().enumerate() {
        hits[t + 1] = hits[t] + usize::from(mask[i]);
    }
    let f1_at = |t: usize| {
        let denom = t + positives;
        if denom == 0 {
            0.0
        } else {
            2.0 * hits[t] as f64 / denom as f64
        }
    };
    Ok(ThresholdSweep {
        points: thresholds.iter().map(|&t| ThresholdPoint { threshold: t, f1: f1_at(t) }).collect(),
        marked: marked.map(|t| ThresholdPoint { threshold: t, f1: f1_at(t) }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn f1_examples() {
        let mask = [true, false, true, false];
        assert_eq!(detection_f1(&mask, &mask).unwrap().f1, 1.0);
        assert_eq!(detection_f1(&[false; 4], &mask).unwrap().f1, 0.0);
        let complement = [false, true, false, true];
        let s = detection_f1(&complement, &mask).unwrap();
        assert_eq!((s.true_positives, s.f1), (0, 0.0));
        assert!(detection_f1(&[true], &mask).is_err());
    }

    #[test]
    fn auc_examples() {
        let l = [true, true, false, false];
        assert_eq!(roc_auc(&[0.9, 0.8, 0.2, 0.1], &l).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.5; 4], &l).unwrap(), 0.5);
        assert_eq!(roc_auc(&[0.9, 0.8, 0.8, 0.1], &l).unwrap(), 0.875);
        assert!(matches!(roc_auc(&[0.1, 0.2], &[true, true]), Err(Error::UndefinedMetric(_))));
    }

    fn brute_auc(s: &[f64], l: &[bool]) -> f64 {
        let mut total = 0.0;
        let mut pairs = 0.0;
        for i in (0..s.len()).filter(|&i| l[i]) {
            for j in (0..s.len()).filter(|&j| !l[j]) {
                pairs += 1.0;
                total += if s[i] > s[j] {
                    1.0
                } else if s[i] == s[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
        total / pairs
    }

    proptest! {
        #[test]
        fn auc_matches_pairs(v in proptest::collection::vec((0u8..8, any::<bool>()), 2..120)) {
            let s: Vec<f64> = v.iter().map(|p| p.0 as f64 / 8.0).collect();
            let l: Vec<bool> = v.iter().map(|p| p.1).collect();
            prop_assume!(l.iter().any(|&b| b) && l.iter().any(|&b| !b));
            prop_assert_eq!(roc_auc(&s, &l).unwrap(), brute_auc(&s, &l));
        }

        #[test]
        fn auc_monotone_invariant(v in proptest::collection::vec((-5.0f64..5.0, any::<bool>()), 2..80)) {
            let s: Vec<f64> = v.iter().map(|p| p.0).collect();
            let l: Vec<bool> = v.iter().map(|p| p.1).collect();
            prop_assume!(l.iter().any(|&b| b) && l.iter().any(|&b| !b));
            let t: Vec<f64> = s.iter().map(|x| x.exp() * 3.0 + 1.0).collect();
            prop_assert_eq!(roc_auc(&s, &l).unwrap(), roc_auc(&t, &l).unwrap());
        }

        #[test]
        fn f1_order_free(v in proptest::collection::vec((any::<bool>(), any::<bool>()), 1..60), seed in any::<u64>()) {
            let f: Vec<bool> = v.iter().map(|p| p.0).collect();
            let m: Vec<bool> = v.iter().map(|p| p.1).collect();
            let mut idx: Vec<usize> = (0..v.len()).collect();
            idx.shuffle(&mut RngStream::new(seed));
            let fp: Vec<bool> = idx.iter().map(|&i| f[i]).collect();
            let mp: Vec<bool> = idx.iter().map(|&i| m[i]).collect();
            prop_assert_eq!(detection_f1(&f, &m).unwrap(), detection_f1(&fp, &mp).unwrap());
        }
    }

    #[test]
    fn ranges_are_inclusive() {
        assert_eq!(parse_range("0.1:0.6:0.1").unwrap(), vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]);
        assert_eq!(parse_range("0.3").unwrap(), vec![0.3]);
        assert!(parse_range("0.5:0.1:0.1").is_err());
        assert!(parse_range("a:b:c").is_err());
    }

    #[test]
    fn threshold_sweep_examples() {
        let n = 20;
        let mask: Vec<bool> = (0..n).map(|i| i < 6).collect();
        let ranking: Vec<usize> = (0..n).collect();
        let t: Vec<usize> = (0..=n).collect();
        let s = tracin_threshold_sweep(&ranking, &mask, &t, Some(6)).unwrap();
        assert_eq!(s.points[0].f1, 0.0);
        assert_eq!(s.marked.as_ref().unwrap().f1, 1.0);
        assert!(s.points[6 - 2].f1 < 1.0 && s.points[6 + 2].f1 < 1.0);
        let all = tracin_threshold_sweep(&ranking, &[true; 20], &[n], None).unwrap();
        assert_eq!(all.points[0].f1, 1.0);
        assert!(tracin_threshold_sweep(&ranking, &mask, &[21], None).is_err());
    }

    #[test]
    fn subsample_properties() {
        let keys: Vec<usize> = (0..100).map(|i| i % 4).collect();
        assert_eq!(stratified_subsample(&keys, 1.0, &mut RngStream::new(1)).unwrap(), (0..100).collect::<Vec<_>>());
        let a = stratified_subsample(&keys, 0.5, &mut RngStream::new(2)).unwrap();
        let b = stratified_subsample(&keys, 0.5, &mut RngStream::new(2)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 52);
        for k in 0..4 {
            assert!(a.iter().any(|&i| keys[i] == k));
        }
        assert!(stratified_subsample(&keys, 0.0, &mut RngStream::new(1)).is_err());
    }
}
