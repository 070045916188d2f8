//! Self-influence of each training example on a linear probe.
//!
//! For softmax regression the per-example loss gradient with respect to
//! `[W | b]` is the outer product `(p - onehot(y)) [x; 1]^T`, whose squared
//! Frobenius norm is `||p - onehot(y)||^2 (||x||^2 + 1)`. Self-influence sums
//! this, weighted by the learning rate, over the checkpoints of an SGD run.

use serde_json::json;

use super::{Method, MislabelReport};
use crate::dataio::LabelSet;
use crate::error::{Error, Result};
use crate::numerics::{squared_norm, Matrix};
use crate::par;
use crate::probe::CheckpointTrail;

pub fn self_influence(trail: &CheckpointTrail, x: &Matrix, y: &LabelSet) -> Result<Vec<f64>> {
    if trail.is_empty() {
        return Err(Error::invalid("checkpoint trail is empty"));
    }
    if x.rows() != y.len() {
        return Err(Error::invalid(format!("{} embeddings but {} labels", x.rows(), y.len())));
    }
    let c = y.num_classes();
    for ck in &trail.checkpoints {
        if ck.model.dim() != x.cols() || ck.model.num_classes() != c {
            return Err(Error::invalid("checkpoint shape does not match the data"));
        }
    }
    Ok(par::map_range(x.rows(), |i| {
        let xi = x.row(i);
        let feature = squared_norm(xi) + 1.0;
        let mut p = vec![0.0; c];
        trail
            .checkpoints
            .iter()
            .map(|ck| {
                ck.model.proba_row(xi, &mut p);
                p[y.get(i)] -= 1.0;
                ck.learning_rate * squared_norm(&p) * feature
            })
            .sum()
    }))
}

/// Flags the `flag_count` examples with the largest self-influence.
pub fn detect_tracin_linear(trail: &CheckpointTrail, x: &Matrix, y: &LabelSet, flag_count: usize) -> Result<MislabelReport> {
    let scores = self_influence(trail, x, y)?;
    if flag_count > scores.len() {
        return Err(Error::invalid(format!("flag_count {flag_count} exceeds n = {}", scores.len())));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut flags = vec![false; scores.len()];
    for &i in &order[..flag_count] {
        flags[i] = true;
    }
    MislabelReport::new(
        Method::TracIn,
        flags,
        scores,
        json!({ "flag_count": flag_count, "checkpoints": trail.len() }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probe::{Checkpoint, ProbeModel};
    use rand::Rng;

    fn trail_of(models: Vec<ProbeModel>, lr: f64) -> CheckpointTrail {
        CheckpointTrail {
            checkpoints: models
                .into_iter()
                .enumerate()
                .map(|(e, model)| Checkpoint { model, learning_rate: lr, epoch: e + 1 })
                .collect(),
        }
    }

    #[test]
    fn uniform_prediction_closed_form() {
        let trail = trail_of(vec![ProbeModel::zeros(2, 2, 0.0).unwrap()], 0.1);
        let x = Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        let s = self_influence(&trail, &x, &LabelSet::new(vec![0], 2).unwrap()).unwrap();
        assert!((s[0] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn confident_correct_prediction_contributes_nothing() {
        let mut w = Matrix::zeros(2, 1);
        w.set(0, 0, 1000.0);
        let trail = trail_of(vec![ProbeModel::new(w, vec![0.0, 0.0], 0.0).unwrap()], 0.1);
        let x = Matrix::from_rows(&[vec![1.0]]).unwrap();
        let s = self_influence(&trail, &x, &LabelSet::new(vec![0], 2).unwrap()).unwrap();
        assert_eq!(s[0], 0.0);
    }

    #[test]
    fn zero_flag_count_still_ranks() {
        let trail = trail_of(vec![ProbeModel::zeros(2, 1, 0.0).unwrap()], 0.1);
        let x = Matrix::from_rows(&[vec![1.0], vec![3.0], vec![2.0]]).unwrap();
        let r = detect_tracin_linear(&trail, &x, &LabelSet::new(vec![0, 1, 0], 2).unwrap(), 0).unwrap();
        assert_eq!(r.num_flagged(), 0);
        assert_eq!(r.ranking, vec![1, 2, 0]);
        assert!(detect_tracin_linear(&trail, &x, &LabelSet::new(vec![0, 1, 0], 2).unwrap(), 4).is_err());
        assert!(detect_tracin_linear(&trail_of(vec![], 0.1), &x, &LabelSet::new(vec![0, 1, 0], 2).unwrap(), 0).is_err());
    }

    /// Squared gradient norm of one example's cross-entropy by central
    /// differences on every parameter.
    fn fd_grad_sq(model: &ProbeModel, x: &[f64], y: usize) -> f64 {
        let (c, d) = (model.num_classes(), model.dim());
        let params = model.params();
        let loss = |p: &[f64]| {
            let m = ProbeModel::from_params(p, c, d, 0.0).unwrap();
            let mut out = vec![0.0; c];
            m.proba_row(x, &mut out);
            -out[y].ln()
        };
        let h = 1e-6;
        (0..params.len())
            .map(|k| {
                let mut a = params.clone();
                let mut b = params.clone();
                a[k] += h;
                b[k] -= h;
                let g = (loss(&a) - loss(&b)) / (2.0 * h);
                g * g
            })
            .sum()
    }

    #[test]
    fn closed_form_matches_finite_differences() {
        let mut rng = crate::numerics::RngStream::new(42);
        for _ in 0..20 {
            let (c, d) = (rng.random_range(2..5), rng.random_range(1..6));
            let w: Vec<f64> = (0..c * d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..c).map(|_| rng.random_range(-1.0..1.0)).collect();
            let model = ProbeModel::new(Matrix::from_vec(c, d, w).unwrap(), b, 0.0).unwrap();
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
            let y = rng.random_range(0..c);
            let trail = trail_of(vec![model.clone()], 1.0);
            let closed = self_influence(
                &trail,
                &Matrix::from_rows(&[x.clone()]).unwrap(),
                &LabelSet::new(vec![y], c).unwrap(),
            )
            .unwrap()[0];
            let fd = fd_grad_sq(&model, &x, y);
            assert!((closed - fd).abs() / closed < 1e-5, "{closed} vs {fd}");
        }
    }
}
