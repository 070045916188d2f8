//! Regularized multinomial cross-entropy.
//!
//! Parameters are packed as `[W (C x d, row-major), b (C)]`. The objective is
//! `mean_i CE(softmax(W x_i + b), y_i) + (lambda / 2) * ||W||_F^2`; biases are
//! not penalized.

use crate::numerics::{dot, softmax_in_place, Matrix};

pub(crate) struct SoftmaxLoss<'a> {
    pub x: &'a Matrix,
    pub y: &'a [usize],
    pub num_classes: usize,
    pub l2: f64,
}

impl SoftmaxLoss<'_> {
    pub fn num_params(&self) -> usize {
        self.num_classes * (self.x.cols() + 1)
    }

    /// Objective value; writes the gradient into `grad`.
    pub fn value_grad(&self, params: &[f64], grad: &mut [f64]) -> f64 {
        let (c_count, d) = (self.num_classes, self.x.cols());
        let (weights, biases) = params.split_at(c_count * d);
        grad.fill(0.0);
        let (gw, gb) = grad.split_at_mut(c_count * d);
        let mut probs = vec![0.0; c_count];
        let mut loss = 0.0;
        for (i, &label) in self.y.iter().enumerate() {
            let x = self.x.row(i);
            for c in 0..c_count {
                probs[c] = dot(&weights[c * d..(c + 1) * d], x) + biases[c];
            }
            let max = probs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + probs.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
            loss += lse - probs[label];
            softmax_in_place(&mut probs);
            probs[label] -= 1.0;
            for c in 0..c_count {
                let r = probs[c];
                gb[c] += r;
                for (g, xv) in gw[c * d..(c + 1) * d].iter_mut().zip(x) {
                    *g += r * xv;
                }
            }
        }
        let inv_n = 1.0 / self.y.len() as f64;
        for g in grad.iter_mut() {
            *g *= inv_n;
        }
        let (gw, _) = grad.split_at_mut(c_count * d);
        let mut penalty = 0.0;
        for (g, w) in gw.iter_mut().zip(weights) {
            *g += self.l2 * w;
            penalty += w * w;
        }
        loss * inv_n + 0.5 * self.l2 * penalty
    }

    pub fn value(&self, params: &[f64]) -> f64 {
        let mut scratch = vec![0.0; params.len()];
        self.value_grad(params, &mut scratch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;
    use rand::Rng;

    fn random_instance(rng: &mut RngStream, n: usize, d: usize, c: usize) -> (Matrix, Vec<usize>, Vec<f64>) {
        let x = Matrix::from_vec(n, d, (0..n * d).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
        let y = (0..n).map(|_| rng.random_range(0..c)).collect();
        let p = (0..c * (d + 1)).map(|_| rng.random_range(-1.0..1.0)).collect();
        (x, y, p)
    }

    // Central finite differences, step 1e-5: truncation O(h^2) ~ 1e-10.
    fn fd_gradient(loss: &SoftmaxLoss, p: &[f64]) -> Vec<f64> {
        let h = 1e-5;
        (0..p.len())
            .map(|k| {
                let mut a = p.to_vec();
                let mut b = p.to_vec();
                a[k] += h;
                b[k] -= h;
                (loss.value(&a) - loss.value(&b)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = RngStream::new(42);
        for trial in 0..20 {
            let n = 5 + trial;
            let (x, y, p) = random_instance(&mut rng, n, 1 + trial % 8, 2 + trial % 3);
            let c = y.iter().max().unwrap() + 1;
            let c = c.max(2);
            let p = &p[..c * (x.cols() + 1)];
            let loss = SoftmaxLoss { x: &x, y: &y, num_classes: c, l2: 0.01 };
            let mut g = vec![0.0; p.len()];
            loss.value_grad(p, &mut g);
            let fd = fd_gradient(&loss, p);
            let num: f64 = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let den: f64 = g.iter().map(|a| a * a).sum::<f64>().sqrt();
            assert!(num / den < 1e-5, "trial {trial}: rel err {}", num / den);
        }
    }

    #[test]
    fn zero_params_give_log_c() {
        let x = Matrix::filled(3, 2, 1.0);
        let loss = SoftmaxLoss { x: &x, y: &[0, 1, 2], num_classes: 3, l2: 1.0 };
        assert!((loss.value(&vec![0.0; 9]) - 3f64.ln()).abs() < 1e-12);
    }
}
