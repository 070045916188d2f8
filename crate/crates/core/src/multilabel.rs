//! Multi-label removal strategies.
//!
//! Every class is treated as an independent binary task with its own probe
//! and its own binary confident-learning pass.
//!
//! * Per-label removal drops individual `(example, class)` annotations: for
//!   class `c` the top `floor(alpha_c * f_c)` entries of the class-`c` ranking,
//!   where `f_c` is the binary flag count.
//! * Per-image removal scores each example by a softmin over classes of the
//!   self-confidence of its given binary labels and drops the lowest-scoring
//!   examples entirely. The default budget is `sum_c f_c`.
//! * Optimal per-class removal grid-searches, per class, over no removal and
//!   each strategy at several multipliers, retraining only that class's probe
//!   and keeping the cell with the best validation AUC (ties go to the cell
//!   removing fewer examples). A per-image choice enters the combined plan as
//!   removal of the chosen examples from that class only.
//!
//! Plan CSV: header `index,class,dropped`, one row per removed
//! `(example, class)` pair in row-major order; `dropped` is 1 when the whole
//! example is removed. Grid CSV: header
//! `class,strategy,alpha,removed,val_auc,chosen`, with an empty `val_auc` when
//! the cell could not be evaluated.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataio::{EmbeddingTensor, LabelSet, MultiLabelSet};
use crate::detectors::{confident_learning_from_proba, ConfidentLearning, PruneMode};
use crate::error::{Error, Result};
use crate::eval::roc_auc;
use crate::numerics::Matrix;
use crate::par;
use crate::probe::{cross_val_proba, train_probe, TrainConfig};

/// Removal applied to one class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    None,
    PerImage,
    PerLabel,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::None => "none",
            Strategy::PerImage => "per_image",
            Strategy::PerLabel => "per_label",
        })
    }
}

/// Whole-dataset cleaning strategy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CleaningStrategy {
    PerImage,
    PerLabel,
    Optimal,
}

impl CleaningStrategy {
    pub const ALL: [CleaningStrategy; 3] = [Self::PerImage, Self::PerLabel, Self::Optimal];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::PerImage => "per-image",
            Self::PerLabel => "per-label",
            Self::Optimal => "optimal",
        }
    }
}

impl fmt::Display for CleaningStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CleaningStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('_', "-").as_str() {
            "per-image" => Ok(Self::PerImage),
            "per-label" => Ok(Self::PerLabel),
            "optimal" => Ok(Self::Optimal),
            other => Err(Error::invalid(format!(
                "unknown strategy '{other}' (expected per-image, per-label or optimal)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RemovalPlan {
    pub n: usize,
    pub num_classes: usize,
    pub strategies: Vec<Strategy>,
    pub alphas: Vec<f64>,
    /// Row-major `n x C`: annotation `(i, c)` is excluded from class `c`.
    pub removed: Vec<bool>,
    /// Whole examples excluded everywhere.
    pub dropped: Vec<bool>,
}

impl RemovalPlan {
    pub fn empty(n: usize, num_classes: usize) -> Self {
        Self {
            n,
            num_classes,
            strategies: vec![Strategy::None; num_classes],
            alphas: vec![0.0; num_classes],
            removed: vec![false; n * num_classes],
            dropped: vec![false; n],
        }
    }

    pub fn is_removed(&self, i: usize, c: usize) -> bool {
        self.removed[i * self.num_classes + c]
    }

    fn remove(&mut self, i: usize, c: usize) {
        self.removed[i * self.num_classes + c] = true;
    }

    fn drop_example(&mut self, i: usize) {
        self.dropped[i] = true;
        for c in 0..self.num_classes {
            self.remove(i, c);
        }
    }

    /// Rows retained in class `c`'s training set.
    pub fn class_rows(&self, c: usize) -> Vec<usize> {
        (0..self.n).filter(|&i| !self.is_removed(i, c)).collect()
    }

    pub fn removed_count(&self, c: usize) -> usize {
        (0..self.n).filter(|&i| self.is_removed(i, c)).count()
    }

    pub fn total_removed(&self) -> usize {
        self.removed.iter().filter(|&&r| r).count()
    }

    pub fn is_empty(&self) -> bool {
        self.total_removed() == 0
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,class,dropped\n");
        for i in 0..self.n {
            for c in 0..self.num_classes {
                if self.is_removed(i, c) {
                    out.push_str(&format!("{i},{c},{}\n", u8::from(self.dropped[i])));
                }
            }
        }
        out
    }

    /// Rebuilds removal masks from the CSV form; strategies and multipliers
    /// are not part of the table.
    pub fn from_csv(text: &str, n: usize, num_classes: usize) -> Result<Self> {
        let err = |line: usize, msg: String| Error::format_at_line(None, line, msg);
        let mut plan = Self::empty(n, num_classes);
        let mut lines = text.lines().enumerate();
        if lines.next().map(|(_, l)| l) != Some("index,class,dropped") {
            return Err(err(1, "expected header 'index,class,dropped'".into()));
        }
        for (ln, line) in lines {
            let f: Vec<&str> = line.split(',').collect();
            let parsed = (f.len() == 3)
                .then(|| (f[0].parse::<usize>(), f[1].parse::<usize>(), f[2]))
                .and_then(|(a, b, d)| Some((a.ok()?, b.ok()?, d)));
            let Some((i, c, d)) = parsed else {
                return Err(err(ln + 1, format!("malformed row '{line}'")));
            };
            if i >= n || c >= num_classes {
                return Err(err(ln + 1, format!("pair ({i}, {c}) is outside {n} x {num_classes}")));
            }
            match d {
                "0" => plan.remove(i, c),
                "1" => plan.drop_example(i),
                _ => return Err(err(ln + 1, format!("dropped must be 0 or 1, found '{d}'"))),
            }
        }
        Ok(plan)
    }
}

/// Training-set views of a dataset under a plan. Nothing is copied until a
/// class set is materialized.
#[derive(Clone, Copy, Debug)]
pub struct CleanedViews<'a> {
    pub x: &'a EmbeddingTensor,
    pub y: &'a MultiLabelSet,
    pub plan: &'a RemovalPlan,
}

impl CleanedViews<'_> {
    pub fn class_rows(&self, c: usize) -> Vec<usize> {
        self.plan.class_rows(c)
    }

    /// Canonical embeddings and binary labels of class `c`'s training set.
    pub fn class_training_set(&self, c: usize) -> (Matrix, LabelSet) {
        let rows = self.class_rows(c);
        (self.x.canonical().select_rows(&rows), self.y.column(c).select(&rows))
    }

    pub fn kept_examples(&self) -> Vec<usize> {
        (0..self.plan.n).filter(|&i| !self.plan.dropped[i]).collect()
    }
}

pub fn apply_plan<'a>(x: &'a EmbeddingTensor, y: &'a MultiLabelSet, plan: &'a RemovalPlan) -> Result<CleanedViews<'a>> {
    if plan.n != y.len() || plan.num_classes != y.num_classes() || x.n() != y.len() {
        return Err(Error::invalid(format!(
            "plan is {}x{} but data is {}x{} with {} embeddings",
            plan.n,
            plan.num_classes,
            y.len(),
            y.num_classes(),
            x.n()
        )));
    }
    Ok(CleanedViews { x, y, plan })
}

/// Binary confident learning for every class; `None` for classes whose
/// column holds a single value.
pub fn binary_confident_learning(x: &EmbeddingTensor, y: &MultiLabelSet, cfg: &TrainConfig) -> Result<Vec<Option<ConfidentLearning>>> {
    if x.n() != y.len() {
        return Err(Error::invalid(format!("{} embeddings but {} label rows", x.n(), y.len())));
    }
    let canonical = x.canonical_only();
    (0..y.num_classes())
        .map(|c| {
            let col = y.column(c);
            if col.class_counts().contains(&0) {
                log::warn!("class {c} has only one label value; skipped");
                return Ok(None);
            }
            let p = cross_val_proba(&canonical, &col, cfg)?;
            confident_learning_from_proba(p, &col, PruneMode::PruneByNoiseRate).map(Some)
        })
        .collect()
}

fn check_alphas(alphas: &[f64], c: usize) -> Result<()> {
    if alphas.len() != c {
        return Err(Error::invalid(format!("{} multipliers for {c} classes", alphas.len())));
    }
    if alphas.iter().any(|a| !(*a >= 0.0) || !a.is_finite()) {
        return Err(Error::invalid("multipliers must be finite and nonnegative"));
    }
    Ok(())
}

/// `floor(alpha * f_c)` top-ranked entries of class `c`.
fn per_label_rows(cl: &ConfidentLearning, alpha: f64) -> Vec<usize> {
    let f = cl.report.num_flagged() as f64;
    let k = ((alpha * f).floor() as usize).min(cl.report.len());
    cl.report.ranking[..k].to_vec()
}

pub fn per_label_removal_from(cls: &[Option<ConfidentLearning>], n: usize, alphas: &[f64]) -> Result<RemovalPlan> {
    check_alphas(alphas, cls.len())?;
    let mut plan = RemovalPlan::empty(n, cls.len());
    for (c, cl) in cls.iter().enumerate() {
        let Some(cl) = cl else { continue };
        plan.strategies[c] = Strategy::PerLabel;
        plan.alphas[c] = alphas[c];
        for i in per_label_rows(cl, alphas[c]) {
            plan.remove(i, c);
        }
    }
    Ok(plan)
}

pub fn per_label_removal(x: &EmbeddingTensor, y: &MultiLabelSet, cfg: &TrainConfig, alphas: &[f64]) -> Result<RemovalPlan> {
    check_alphas(alphas, y.num_classes())?;
    per_label_removal_from(&binary_confident_learning(x, y, cfg)?, y.len(), alphas)
}

/// Softmin of `q` at temperature `tau`: `sum_c q_c w_c` with
/// `w ∝ exp(-q / tau)`.
pub fn softmin(q: &[f64], tau: f64) -> f64 {
    let min = q.iter().copied().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = q.iter().map(|v| (-(v - min) / tau).exp()).collect();
    let total: f64 = w.iter().sum();
    q.iter().zip(&w).map(|(v, w)| v * w).sum::<f64>() / total
}

pub const DEFAULT_TEMPERATURE: f64 = 0.1;

/// Aggregate label quality per example. Skipped classes do not contribute;
/// an example with no contributing class scores 1.
pub fn aggregate_quality(cls: &[Option<ConfidentLearning>], y: &MultiLabelSet, tau: f64) -> Vec<f64> {
    (0..y.len())
        .map(|i| {
            let q: Vec<f64> = cls
                .iter()
                .enumerate()
                .filter_map(|(c, cl)| cl.as_ref().map(|cl| cl.probabilities.get(i, usize::from(y.get(i, c)))))
                .collect();
            if q.is_empty() {
                1.0
            } else {
                softmin(&q, tau)
            }
        })
        .collect()
}

/// `sum_c f_c`, the default per-image budget.
pub fn default_budget(cls: &[Option<ConfidentLearning>]) -> usize {
    cls.iter().flatten().map(|cl| cl.report.num_flagged()).sum()
}

/// The `budget` lowest-quality examples, ties by index.
fn lowest(quality: &[f64], budget: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..quality.len()).collect();
    order.sort_by(|&a, &b| quality[a].total_cmp(&quality[b]).then(a.cmp(&b)));
    order.truncate(budget.min(quality.len()));
    order
}

pub fn per_image_removal_from(
    cls: &[Option<ConfidentLearning>],
    y: &MultiLabelSet,
    budget: usize,
    tau: f64,
) -> Result<RemovalPlan> {
    if !(tau > 0.0) {
        return Err(Error::invalid("softmin temperature must be positive"));
    }
    let quality = aggregate_quality(cls, y, tau);
    let mut plan = RemovalPlan::empty(y.len(), y.num_classes());
    for c in 0..y.num_classes() {
        plan.strategies[c] = Strategy::PerImage;
        plan.alphas[c] = 1.0;
    }
    for i in lowest(&quality, budget) {
        plan.drop_example(i);
    }
    Ok(plan)
}

/// Drops whole examples. `budget = None` uses the sum of binary flag counts.
pub fn per_image_removal(
    x: &EmbeddingTensor,
    y: &MultiLabelSet,
    cfg: &TrainConfig,
    budget: Option<usize>,
    tau: f64,
) -> Result<RemovalPlan> {
    let cls = binary_confident_learning(x, y, cfg)?;
    let budget = budget.unwrap_or_else(|| default_budget(&cls));
    per_image_removal_from(&cls, y, budget, tau)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RemovalGrid {
    pub strategies: Vec<Strategy>,
    pub alphas: Vec<f64>,
    pub tau: f64,
}

impl Default for RemovalGrid {
    fn default() -> Self {
        Self {
            strategies: vec![Strategy::PerImage, Strategy::PerLabel],
            alphas: vec![0.5, 1.0, 1.5, 2.0],
            tau: DEFAULT_TEMPERATURE,
        }
    }
}

impl RemovalGrid {
    /// The no-removal cell followed by every strategy/multiplier pair.
    pub fn cells(&self) -> Vec<(Strategy, f64)> {
        let mut cells = vec![(Strategy::None, 0.0)];
        for &s in self.strategies.iter().filter(|&&s| s != Strategy::None) {
            cells.extend(self.alphas.iter().map(|&a| (s, a)));
        }
        cells
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub class: usize,
    pub strategy: Strategy,
    pub alpha: f64,
    pub removed: usize,
    pub val_auc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassChoice {
    pub class: usize,
    pub strategy: Strategy,
    pub alpha: f64,
    pub removed: usize,
    /// `None` when the class could not be evaluated.
    pub val_auc: Option<f64>,
    pub baseline_auc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub choices: Vec<ClassChoice>,
    pub cells: Vec<GridCell>,
    pub plan: RemovalPlan,
}

impl GridSearchResult {
    pub fn grid_csv(&self) -> String {
        let mut out = String::from("class,strategy,alpha,removed,val_auc,chosen\n");
        for cell in &self.cells {
            let ch = &self.choices[cell.class];
            let chosen = ch.strategy == cell.strategy && ch.alpha == cell.alpha;
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                cell.class,
                cell.strategy,
                cell.alpha,
                cell.removed,
                cell.val_auc.map(|a| a.to_string()).unwrap_or_default(),
                u8::from(chosen)
            ));
        }
        out
    }
}

/// Validation AUC of class `c`'s probe trained on `rows`.
fn class_auc(
    x_train: &Matrix,
    col: &LabelSet,
    rows: &[usize],
    x_val: &Matrix,
    val_col: &[bool],
    cfg: &TrainConfig,
) -> Result<f64> {
    let model = train_probe(&x_train.select_rows(rows), &col.select(rows), cfg)?;
    let p = model.predict_proba(x_val)?;
    let scores: Vec<f64> = p.row_iter().map(|r| r[1]).collect();
    roc_auc(&scores, val_col)
}

fn val_column(y: &MultiLabelSet, c: usize) -> Vec<bool> {
    (0..y.len()).map(|i| y.get(i, c)).collect()
}

/// Removal set of a grid cell for class `c`.
fn cell_rows(
    strategy: Strategy,
    alpha: f64,
    cl: &ConfidentLearning,
    quality: &[f64],
    full_budget: usize,
) -> Vec<usize> {
    match strategy {
        Strategy::None => Vec::new(),
        Strategy::PerLabel => per_label_rows(cl, alpha),
        Strategy::PerImage => lowest(quality, (alpha * full_budget as f64).floor() as usize),
    }
}

pub fn optimal_per_class_removal_from(
    cls: &[Option<ConfidentLearning>],
    x_train: &EmbeddingTensor,
    y_train: &MultiLabelSet,
    x_val: &EmbeddingTensor,
    y_val: &MultiLabelSet,
    grid: &RemovalGrid,
    cfg: &TrainConfig,
) -> Result<GridSearchResult> {
    let (n, c_count) = (y_train.len(), y_train.num_classes());
    if y_val.num_classes() != c_count || x_val.n() != y_val.len() || x_train.n() != n {
        return Err(Error::invalid("training and validation data disagree in shape"));
    }
    if grid.alphas.iter().any(|a| !(*a >= 0.0) || !a.is_finite()) {
        return Err(Error::invalid("grid multipliers must be finite and nonnegative"));
    }
    let quality = aggregate_quality(cls, y_train, grid.tau);
    let full_budget = default_budget(cls);
    let cells = grid.cells();
    let val_cols: Vec<Vec<bool>> = (0..c_count).map(|c| val_column(y_val, c)).collect();
    let evaluable: Vec<bool> = (0..c_count)
        .map(|c| {
            let ok = cls[c].is_some() && val_cols[c].iter().any(|&v| v) && val_cols[c].iter().any(|&v| !v);
            if !ok {
                log::warn!("class {c} cannot be evaluated on validation; left untouched");
            }
            ok
        })
        .collect();

    let jobs: Vec<(usize, usize)> = (0..c_count).flat_map(|c| (0..cells.len()).map(move |k| (c, k))).collect();
    let results: Vec<(Vec<usize>, Option<f64>)> = par::map_slice(&jobs, |&(c, k)| {
        let Some(cl) = cls[c].as_ref().filter(|_| evaluable[c]) else {
            return (Vec::new(), None);
        };
        let (strategy, alpha) = cells[k];
        let removed = cell_rows(strategy, alpha, cl, &quality, full_budget);
        let mut keep = vec![true; n];
        removed.iter().for_each(|&i| keep[i] = false);
        let rows: Vec<usize> = (0..n).filter(|&i| keep[i]).collect();
        let auc = class_auc(x_train.canonical(), &y_train.column(c), &rows, x_val.canonical(), &val_cols[c], cfg);
        if let Err(e) = &auc {
            log::warn!("class {c} cell {strategy}/{alpha}: {e}");
        }
        (removed, auc.ok())
    });

    let mut plan = RemovalPlan::empty(n, c_count);
    let mut choices = Vec::with_capacity(c_count);
    let mut table = Vec::with_capacity(jobs.len());
    for c in 0..c_count {
        let row = &results[c * cells.len()..(c + 1) * cells.len()];
        for (k, (removed, auc)) in row.iter().enumerate() {
            table.push(GridCell {
                class: c,
                strategy: cells[k].0,
                alpha: cells[k].1,
                removed: removed.len(),
                val_auc: *auc,
            });
        }
        let best = (0..cells.len())
            .filter(|&k| row[k].1.is_some())
            .max_by(|&a, &b| {
                row[a].1.unwrap()
                    .total_cmp(&row[b].1.unwrap())
                    .then(row[b].0.len().cmp(&row[a].0.len()))
                    .then(b.cmp(&a))
            })
            .unwrap_or(0);
        let (strategy, alpha) = cells[best];
        for &i in &row[best].0 {
            plan.remove(i, c);
        }
        plan.strategies[c] = strategy;
        plan.alphas[c] = alpha;
        choices.push(ClassChoice {
            class: c,
            strategy,
            alpha,
            removed: row[best].0.len(),
            val_auc: row[best].1,
            baseline_auc: row[0].1,
        });
    }
    Ok(GridSearchResult {
        choices,
        cells: table,
        plan,
    })
}

pub fn optimal_per_class_removal(
    x_train: &EmbeddingTensor,
    y_train: &MultiLabelSet,
    x_val: &EmbeddingTensor,
    y_val: &MultiLabelSet,
    grid: &RemovalGrid,
    cfg: &TrainConfig,
) -> Result<GridSearchResult> {
    let cls = binary_confident_learning(x_train, y_train, cfg)?;
    optimal_per_class_removal_from(&cls, x_train, y_train, x_val, y_val, grid, cfg)
}

/// Per-class validation AUC of binary probes trained under `plan`.
/// Classes whose AUC is undefined, or whose cleaned training set lost a
/// label value, come back as `None`.
pub fn per_class_auc(
    x_train: &EmbeddingTensor,
    y_train: &MultiLabelSet,
    plan: &RemovalPlan,
    x_eval: &EmbeddingTensor,
    y_eval: &MultiLabelSet,
    cfg: &TrainConfig,
) -> Result<Vec<Option<f64>>> {
    let views = apply_plan(x_train, y_train, plan)?;
    if y_eval.num_classes() != y_train.num_classes() || x_eval.n() != y_eval.len() {
        return Err(Error::invalid("evaluation data disagrees with training data in shape"));
    }
    Ok(par::map_range(y_train.num_classes(), |c| {
        let col = val_column(y_eval, c);
        let rows = views.class_rows(c);
        class_auc(x_train.canonical(), &y_train.column(c), &rows, x_eval.canonical(), &col, cfg).ok()
    }))
}

/// Plan for one whole-dataset strategy. The optimal strategy needs
/// validation data.
pub fn plan_for_strategy(
    strategy: CleaningStrategy,
    cls: &[Option<ConfidentLearning>],
    x_train: &EmbeddingTensor,
    y_train: &MultiLabelSet,
    validation: Option<(&EmbeddingTensor, &MultiLabelSet)>,
    grid: &RemovalGrid,
    cfg: &TrainConfig,
) -> Result<RemovalPlan> {
    match strategy {
        CleaningStrategy::PerLabel => per_label_removal_from(cls, y_train.len(), &vec![1.0; y_train.num_classes()]),
        CleaningStrategy::PerImage => per_image_removal_from(cls, y_train, default_budget(cls), grid.tau),
        CleaningStrategy::Optimal => {
            let (xv, yv) = validation.ok_or_else(|| Error::invalid("optimal per-class removal needs a validation split"))?;
            Ok(optimal_per_class_removal_from(cls, x_train, y_train, xv, yv, grid, cfg)?.plan)
        }
    }
}
