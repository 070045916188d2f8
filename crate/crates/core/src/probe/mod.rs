//! Linear probe: multinomial softmax regression on frozen embeddings.
//!
//! Training minimizes mean cross-entropy plus `(l2_lambda / 2) * ||W||_F^2`
//! (biases unpenalized) with LBFGS from zero initialization. The default
//! `l2_lambda = 0.001` is the coefficient on this mean-loss objective.

mod lbfgs;
mod objective;
mod sgd;

pub use lbfgs::{minimize, LbfgsConfig, LbfgsResult, Termination};
pub use sgd::{train_sgd_with_checkpoints, Checkpoint, CheckpointTrail, SgdConfig};

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::dataio::{EmbeddingTensor, LabelSet};
use crate::error::{Error, Result};
use crate::numerics::{dot, kfold_indices, softmax_in_place, Folds, Matrix, RngStream};
use crate::par;
use objective::SoftmaxLoss;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub l2_lambda: f64,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub lbfgs_memory: usize,
    pub cv_folds: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            l2_lambda: 0.001,
            max_iterations: 1000,
            gradient_tolerance: 1e-6,
            lbfgs_memory: 10,
            cv_folds: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.l2_lambda >= 0.0) || !self.l2_lambda.is_finite() {
            return Err(Error::invalid("l2_lambda must be finite and nonnegative"));
        }
        if self.max_iterations == 0 || self.lbfgs_memory == 0 {
            return Err(Error::invalid("max_iterations and lbfgs_memory must be positive"));
        }
        if !(self.gradient_tolerance > 0.0) {
            return Err(Error::invalid("gradient_tolerance must be positive"));
        }
        if self.cv_folds < 2 {
            return Err(Error::invalid("cv_folds must be at least 2"));
        }
        Ok(())
    }

    fn lbfgs(&self) -> LbfgsConfig {
        LbfgsConfig {
            memory: self.lbfgs_memory,
            max_iterations: self.max_iterations,
            gradient_tolerance: self.gradient_tolerance,
            ..LbfgsConfig::default()
        }
    }
}

/// Trained softmax-regression parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeModel {
    weights: Matrix,
    biases: Vec<f64>,
    l2_lambda: f64,
}

impl ProbeModel {
    pub fn new(weights: Matrix, biases: Vec<f64>, l2_lambda: f64) -> Result<Self> {
        if weights.rows() < 2 || weights.cols() == 0 {
            return Err(Error::invalid("probe needs at least 2 classes and 1 dimension"));
        }
        if biases.len() != weights.rows() {
            return Err(Error::invalid("bias length must equal class count"));
        }
        if !weights.is_finite() || biases.iter().any(|b| !b.is_finite()) || !(l2_lambda >= 0.0) {
            return Err(Error::invalid("probe parameters must be finite"));
        }
        Ok(Self { weights, biases, l2_lambda })
    }

    pub fn zeros(num_classes: usize, dim: usize, l2_lambda: f64) -> Result<Self> {
        Self::new(Matrix::zeros(num_classes, dim), vec![0.0; num_classes], l2_lambda)
    }

    pub(crate) fn from_params(params: &[f64], num_classes: usize, dim: usize, l2_lambda: f64) -> Result<Self> {
        let (w, b) = params.split_at(num_classes * dim);
        Self::new(Matrix::from_vec(num_classes, dim, w.to_vec())?, b.to_vec(), l2_lambda)
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = self.weights.as_slice().to_vec();
        p.extend_from_slice(&self.biases);
        p
    }

    pub fn num_classes(&self) -> usize {
        self.weights.rows()
    }

    pub fn dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn l2_lambda(&self) -> f64 {
        self.l2_lambda
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    /// Class probabilities for one embedding.
    pub(crate) fn proba_row(&self, x: &[f64], out: &mut [f64]) {
        for (c, o) in out.iter_mut().enumerate() {
            *o = dot(self.weights.row(c), x) + self.biases[c];
        }
        softmax_in_place(out);
    }

    pub fn predict_proba(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.dim() {
            return Err(Error::invalid(format!(
                "embedding dimension {} does not match probe dimension {}",
                x.cols(),
                self.dim()
            )));
        }
        let mut out = Matrix::zeros(x.rows(), self.num_classes());
        for i in 0..x.rows() {
            self.proba_row(x.row(i), out.row_mut(i));
        }
        Ok(out)
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        let p = self.predict_proba(x)?;
        Ok(p.row_iter().map(crate::numerics::argmax).collect())
    }

    /// Training objective of these parameters on `(x, y)`.
    pub fn objective(&self, x: &Matrix, y: &LabelSet) -> f64 {
        SoftmaxLoss {
            x,
            y: y.as_slice(),
            num_classes: self.num_classes(),
            l2: self.l2_lambda,
        }
        .value(&self.params())
    }

    /// Objective and its gradient with respect to [`ProbeModel::params`].
    pub fn objective_gradient(&self, x: &Matrix, y: &LabelSet) -> (f64, Vec<f64>) {
        let loss = SoftmaxLoss {
            x,
            y: y.as_slice(),
            num_classes: self.num_classes(),
            l2: self.l2_lambda,
        };
        let mut grad = vec![0.0; loss.num_params()];
        let value = loss.value_grad(&self.params(), &mut grad);
        (value, grad)
    }

    /// Binary model record: magic `LSPM`, u32 version = 1, u32 C, u32 d,
    /// f64 lambda, C*d f64 weights (row-major), C f64 biases. All little-endian.
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(b"LSPM")?;
        w.write_all(&1u32.to_le_bytes())?;
        w.write_all(&(self.num_classes() as u32).to_le_bytes())?;
        w.write_all(&(self.dim() as u32).to_le_bytes())?;
        w.write_all(&self.l2_lambda.to_le_bytes())?;
        for v in self.weights.as_slice().iter().chain(&self.biases) {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let err = |o: usize, m: &str| Error::format_at_offset(None, o as u64, m);
        if bytes.len() < 24 {
            return Err(err(bytes.len(), "truncated model header"));
        }
        if &bytes[..4] != b"LSPM" {
            return Err(err(0, "bad model magic"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
        if u32_at(4) != 1 {
            return Err(err(4, "unsupported model version"));
        }
        let (c, d) = (u32_at(8), u32_at(12));
        let lambda = f64::from_le_bytes(bytes[16..24].try_into().unwrap());
        let expected = 24 + 8 * (c * d + c);
        if bytes.len() != expected {
            return Err(err(bytes.len(), &format!("expected {expected} bytes, found {}", bytes.len())));
        }
        let vals: Vec<f64> = bytes[24..]
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Self::from_params(&vals, c, d, lambda)
    }
}

/// Outcome of one LBFGS fit.
#[derive(Clone, Debug)]
pub struct ProbeFit {
    pub model: ProbeModel,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub history: Vec<f64>,
}

fn check_training_set(x: &Matrix, y: &LabelSet) -> Result<()> {
    let c = y.num_classes();
    if x.rows() != y.len() {
        return Err(Error::invalid(format!("{} embeddings but {} labels", x.rows(), y.len())));
    }
    if c < 2 {
        return Err(Error::invalid("need at least 2 classes"));
    }
    if y.len() < c {
        return Err(Error::invalid(format!("need n >= C, got n={} and C={c}", y.len())));
    }
    if !x.is_finite() {
        return Err(Error::invalid("embeddings contain non-finite values"));
    }
    if let Some(class) = y.class_counts().iter().position(|&k| k == 0) {
        return Err(Error::MissingClass { class });
    }
    Ok(())
}

/// Fits a probe, optionally from a given starting point.
pub fn fit_probe(x: &Matrix, y: &LabelSet, cfg: &TrainConfig, init: Option<&[f64]>) -> Result<ProbeFit> {
    cfg.validate()?;
    check_training_set(x, y)?;
    let c = y.num_classes();
    let loss = SoftmaxLoss {
        x,
        y: y.as_slice(),
        num_classes: c,
        l2: cfg.l2_lambda,
    };
    let x0 = match init {
        Some(p) if p.len() == loss.num_params() => p.to_vec(),
        Some(p) => {
            return Err(Error::invalid(format!(
                "initial point has {} values, expected {}",
                p.len(),
                loss.num_params()
            )))
        }
        None => vec![0.0; loss.num_params()],
    };
    let res = minimize(|p, g| loss.value_grad(p, g), x0, &cfg.lbfgs());
    if !res.converged() {
        log::debug!(
            "probe fit stopped after {} iterations ({:?}), |grad|_inf = {:.3e}",
            res.iterations,
            res.termination,
            res.gradient_inf_norm
        );
    }
    Ok(ProbeFit {
        model: ProbeModel::from_params(&res.params, c, x.cols(), cfg.l2_lambda)?,
        objective: res.value,
        iterations: res.iterations,
        converged: res.converged(),
        history: res.history,
    })
}

pub fn train_probe(x: &Matrix, y: &LabelSet, cfg: &TrainConfig) -> Result<ProbeModel> {
    Ok(fit_probe(x, y, cfg, None)?.model)
}

pub fn predict_proba(model: &ProbeModel, x: &Matrix) -> Result<Matrix> {
    model.predict_proba(x)
}

/// Stratified folds for `y` seeded from `cfg.seed`.
pub fn cv_folds(y: &LabelSet, cfg: &TrainConfig) -> Result<Folds> {
    kfold_indices(y.len(), cfg.cv_folds, Some(y.as_slice()), &mut RngStream::new(cfg.seed))
}

/// Out-of-fold probabilities for every view: row `i` of view `v` comes from
/// the model trained (on canonical embeddings) without the fold holding `i`,
/// evaluated on view `v` of example `i`.
pub fn cross_val_proba_with_folds(x: &EmbeddingTensor, y: &LabelSet, folds: &Folds, cfg: &TrainConfig) -> Result<Vec<Matrix>> {
    let n = x.n();
    if y.len() != n {
        return Err(Error::invalid(format!("{n} embeddings but {} labels", y.len())));
    }
    let mut seen = vec![false; n];
    for &i in folds.folds.iter().flatten() {
        if i >= n || std::mem::replace(&mut seen[i], true) {
            return Err(Error::invalid("folds must partition the example indices"));
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::invalid("folds must cover every example"));
    }
    let models = par::try_map_range(folds.folds.len(), |f| {
        let train_idx = folds.training_indices(f, n);
        let xt = x.canonical().select_rows(&train_idx);
        train_probe(&xt, &y.select(&train_idx), cfg)
    })?;
    let c = y.num_classes();
    let mut out = vec![Matrix::zeros(n, c); x.num_views()];
    for (fold, model) in folds.folds.iter().zip(&models) {
        for (v, probs) in out.iter_mut().enumerate() {
            let view = x.view(v);
            for &i in fold {
                model.proba_row(view.row(i), probs.row_mut(i));
            }
        }
    }
    Ok(out)
}

/// Out-of-fold probabilities for each view, folds stratified by `y`.
pub fn cross_val_proba_per_view(x: &EmbeddingTensor, y: &LabelSet, cfg: &TrainConfig) -> Result<Vec<Matrix>> {
    cfg.validate()?;
    let folds = cv_folds(y, cfg)?;
    cross_val_proba_with_folds(x, y, &folds, cfg)
}

/// Out-of-fold probabilities on the canonical view.
pub fn cross_val_proba(x: &EmbeddingTensor, y: &LabelSet, cfg: &TrainConfig) -> Result<Matrix> {
    Ok(cross_val_proba_per_view(&x.canonical_only(), y, cfg)?.swap_remove(0))
}

pub fn accuracy(predicted: &[usize], truth: &[usize]) -> f64 {
    let hits = predicted.iter().zip(truth).filter(|(a, b)| a == b).count();
    hits as f64 / truth.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::argmax;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn two_clusters(seed: u64) -> (Matrix, LabelSet) {
        let mut rng = RngStream::new(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..32 {
            let c = i % 2;
            let cx = if c == 0 { -5.0 } else { 5.0 };
            rows.push(vec![cx + rng.sample::<f64, _>(StandardNormal), rng.sample(StandardNormal)]);
            labels.push(c);
        }
        (Matrix::from_rows(&rows).unwrap(), LabelSet::new(labels, 2).unwrap())
    }

    #[test]
    fn separable_clusters_fit_perfectly() {
        let (x, y) = two_clusters(1);
        let fit = fit_probe(&x, &y, &TrainConfig::default(), None).unwrap();
        assert!(fit.converged);
        assert_eq!(accuracy(&fit.model.predict(&x).unwrap(), y.as_slice()), 1.0);
        assert!(fit.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn huge_penalty_gives_uniform_probabilities() {
        let (x, y) = two_clusters(2);
        let cfg = TrainConfig { l2_lambda: 1e6, ..TrainConfig::default() };
        let m = train_probe(&x, &y, &cfg).unwrap();
        assert!(m.weights().as_slice().iter().all(|w| w.abs() < 1e-4));
        let p = m.predict_proba(&x).unwrap();
        assert!(p.as_slice().iter().all(|v| (v - 0.5).abs() < 1e-3));
    }

    #[test]
    fn zero_model_predicts_uniform() {
        let m = ProbeModel::zeros(4, 3, 0.0).unwrap();
        let p = m.predict_proba(&Matrix::filled(5, 3, 2.0)).unwrap();
        assert!(p.as_slice().iter().all(|&v| (v - 0.25).abs() < 1e-15));
        assert!(m.predict_proba(&Matrix::filled(1, 2, 0.0)).is_err());
    }

    #[test]
    fn saturated_weights_give_confident_prediction() {
        let x = [0.6, -0.8];
        let mut w = Matrix::zeros(3, 2);
        w.row_mut(0).copy_from_slice(&[x[0] * 100.0, x[1] * 100.0]);
        let m = ProbeModel::new(w, vec![0.0; 3], 0.0).unwrap();
        let p = m.predict_proba(&Matrix::from_rows(&[x.to_vec()]).unwrap()).unwrap();
        assert!(p.get(0, 0) >= 1.0 - 1e-6);
    }

    #[test]
    fn missing_class_is_an_error() {
        let x = Matrix::filled(3, 1, 1.0);
        let y = LabelSet::new(vec![0, 0, 2], 3).unwrap();
        assert!(matches!(train_probe(&x, &y, &TrainConfig::default()), Err(Error::MissingClass { class: 1 })));
    }

    #[test]
    fn leave_one_out_never_sees_the_point() {
        let (x, y) = two_clusters(3);
        let x = x.select_rows(&[0, 1, 2, 3, 4, 5]);
        let y = y.select(&[0, 1, 2, 3, 4, 5]);
        let cfg = TrainConfig { cv_folds: 6, ..TrainConfig::default() };
        let folds = cv_folds(&y, &cfg).unwrap();
        assert!(folds.folds.iter().all(|f| f.len() == 1));
        let t = EmbeddingTensor::single(x.clone()).unwrap();
        let p = cross_val_proba_with_folds(&t, &y, &folds, &cfg).unwrap().swap_remove(0);
        for (f, fold) in folds.folds.iter().enumerate() {
            let i = fold[0];
            let train_idx = folds.training_indices(f, 6);
            assert!(!train_idx.contains(&i));
            let m = train_probe(&x.select_rows(&train_idx), &y.select(&train_idx), &cfg).unwrap();
            assert_eq!(p.row(i), m.predict_proba(&x.select_rows(&[i])).unwrap().row(0));
        }
    }

    #[test]
    fn duplicated_halves_agree() {
        let (x, y) = two_clusters(4);
        let idx: Vec<usize> = (0..32).chain(0..32).collect();
        let xx = EmbeddingTensor::single(x.select_rows(&idx)).unwrap();
        let yy = y.select(&idx);
        let folds = Folds { folds: vec![(0..32).collect(), (32..64).collect()], warnings: vec![] };
        let p = cross_val_proba_with_folds(&xx, &yy, &folds, &TrainConfig::default()).unwrap().swap_remove(0);
        for i in 0..32 {
            for c in 0..2 {
                assert!((p.get(i, c) - p.get(i + 32, c)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn model_binary_round_trip() {
        let (x, y) = two_clusters(5);
        let m = train_probe(&x, &y, &TrainConfig::default()).unwrap();
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), 24 + 8 * (2 * 2 + 2));
        assert_eq!(ProbeModel::read_from(&buf[..]).unwrap(), m);
        assert!(ProbeModel::read_from(&buf[..buf.len() - 1]).is_err());
    }

    #[test]
    fn cross_val_rows_on_simplex() {
        let (x, y) = two_clusters(6);
        let p = cross_val_proba(&EmbeddingTensor::single(x).unwrap(), &y, &TrainConfig::default()).unwrap();
        for row in p.row_iter() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert_eq!(
            accuracy(&p.row_iter().map(argmax).collect::<Vec<_>>(), y.as_slice()),
            1.0
        );
    }
}
