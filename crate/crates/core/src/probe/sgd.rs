//! Minibatch SGD on the probe objective, keeping equally spaced snapshots for
//! TracIn-style self-influence.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::objective::SoftmaxLoss;
use super::ProbeModel;
use crate::dataio::LabelSet;
use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngStream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub num_checkpoints: usize,
    pub l2_lambda: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            learning_rate: 0.1,
            batch_size: 32,
            num_checkpoints: 5,
            l2_lambda: 0.001,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: ProbeModel,
    pub learning_rate: f64,
    /// Epoch after which the snapshot was taken (1-based).
    pub epoch: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointTrail {
    pub checkpoints: Vec<Checkpoint>,
}

impl CheckpointTrail {
    pub fn len(&self) -> usize {
        self.checkpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.checkpoints.is_empty()
    }

    pub fn last(&self) -> Option<&ProbeModel> {
        self.checkpoints.last().map(|c| &c.model)
    }
}

/// Epochs (1-based) after which snapshots are taken: `ceil(e * epochs / k)`
/// for `e = 1..=k`.
pub fn checkpoint_epochs(epochs: usize, num_checkpoints: usize) -> Vec<usize> {
    (1..=num_checkpoints)
        .map(|e| (e * epochs).div_ceil(num_checkpoints))
        .collect()
}

pub fn train_sgd_with_checkpoints(
    x: &Matrix,
    y: &LabelSet,
    cfg: &SgdConfig,
    rng: &mut RngStream,
) -> Result<CheckpointTrail> {
    if !(cfg.learning_rate > 0.0) || !cfg.learning_rate.is_finite() {
        return Err(Error::invalid("learning rate must be positive"));
    }
    if cfg.num_checkpoints == 0 || cfg.epochs < cfg.num_checkpoints {
        return Err(Error::invalid(format!(
            "need epochs >= num_checkpoints >= 1, got epochs={} and num_checkpoints={}",
            cfg.epochs, cfg.num_checkpoints
        )));
    }
    if cfg.batch_size == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }
    super::check_training_set(x, y)?;
    let (n, d, c) = (x.rows(), x.cols(), y.num_classes());
    let mut params = vec![0.0; c * (d + 1)];
    let mut grad = vec![0.0; params.len()];
    let snapshots = checkpoint_epochs(cfg.epochs, cfg.num_checkpoints);
    let mut order: Vec<usize> = (0..n).collect();
    let mut checkpoints = Vec::with_capacity(snapshots.len());

    for epoch in 1..=cfg.epochs {
        order.shuffle(rng);
        for batch in order.chunks(cfg.batch_size) {
            let xb = x.select_rows(batch);
            let yb: Vec<usize> = batch.iter().map(|&i| y.get(i)).collect();
            SoftmaxLoss {
                x: &xb,
                y: &yb,
                num_classes: c,
                l2: cfg.l2_lambda,
            }
            .value_grad(&params, &mut grad);
            for (p, g) in params.iter_mut().zip(&grad) {
                *p -= cfg.learning_rate * g;
            }
        }
        if snapshots.contains(&epoch) {
            checkpoints.push(Checkpoint {
                model: ProbeModel::from_params(&params, c, d, cfg.l2_lambda)?,
                learning_rate: cfg.learning_rate,
                epoch,
            });
        }
    }
    Ok(CheckpointTrail { checkpoints })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probe::accuracy;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn spacing_arithmetic() {
        assert_eq!(checkpoint_epochs(10, 5), vec![2, 4, 6, 8, 10]);
        assert_eq!(checkpoint_epochs(1, 1), vec![1]);
        assert_eq!(checkpoint_epochs(7, 3), vec![3, 5, 7]);
    }

    fn clusters(rng: &mut RngStream) -> (Matrix, LabelSet) {
        let rows: Vec<Vec<f64>> = (0..64)
            .map(|i| {
                let cx = if i % 2 == 0 { -5.0 } else { 5.0 };
                vec![cx + rng.sample::<f64, _>(StandardNormal), rng.sample(StandardNormal)]
            })
            .collect();
        let labels = (0..64).map(|i| i % 2).collect();
        (Matrix::from_rows(&rows).unwrap(), LabelSet::new(labels, 2).unwrap())
    }

    #[test]
    fn single_checkpoint_after_one_epoch() {
        let mut rng = RngStream::new(1);
        let (x, y) = clusters(&mut rng);
        let cfg = SgdConfig { epochs: 1, num_checkpoints: 1, ..SgdConfig::default() };
        let trail = train_sgd_with_checkpoints(&x, &y, &cfg, &mut rng).unwrap();
        assert_eq!(trail.len(), 1);
        assert_eq!(trail.checkpoints[0].epoch, 1);
        assert_eq!(trail.checkpoints[0].learning_rate, 0.1);
    }

    #[test]
    fn ten_epochs_five_snapshots() {
        let mut rng = RngStream::new(2);
        let (x, y) = clusters(&mut rng);
        let cfg = SgdConfig { epochs: 10, num_checkpoints: 5, ..SgdConfig::default() };
        let trail = train_sgd_with_checkpoints(&x, &y, &cfg, &mut rng).unwrap();
        let epochs: Vec<_> = trail.checkpoints.iter().map(|c| c.epoch).collect();
        assert_eq!(epochs, vec![2, 4, 6, 8, 10]);
    }

    #[test]
    fn fifty_epochs_separate_clusters() {
        let mut rng = RngStream::new(3);
        let (x, y) = clusters(&mut rng);
        let cfg = SgdConfig { epochs: 50, ..SgdConfig::default() };
        let trail = train_sgd_with_checkpoints(&x, &y, &cfg, &mut rng).unwrap();
        let pred = trail.last().unwrap().predict(&x).unwrap();
        assert_eq!(accuracy(&pred, y.as_slice()), 1.0);
    }

    #[test]
    fn rejects_bad_config() {
        let mut rng = RngStream::new(4);
        let (x, y) = clusters(&mut rng);
        let bad_lr = SgdConfig { learning_rate: 0.0, ..SgdConfig::default() };
        assert!(train_sgd_with_checkpoints(&x, &y, &bad_lr, &mut rng).is_err());
        let bad_epochs = SgdConfig { epochs: 2, num_checkpoints: 3, ..SgdConfig::default() };
        assert!(train_sgd_with_checkpoints(&x, &y, &bad_epochs, &mut rng).is_err());
    }
}
