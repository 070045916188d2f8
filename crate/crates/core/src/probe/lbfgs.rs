//! Limited-memory BFGS with a strong-Wolfe line search.
//!
//! Two-loop recursion for the search direction, initial inverse-Hessian
//! scaling `s.y / y.y`, and the bracketing/zoom line search of Nocedal &
//! Wright (Alg. 3.5/3.6) with safeguarded cubic interpolation. Every accepted
//! step satisfies the Armijo condition, so the objective decreases
//! monotonically.

use std::collections::VecDeque;

use crate::numerics::dot;

#[derive(Clone, Debug)]
pub struct LbfgsConfig {
    pub memory: usize,
    pub max_iterations: usize,
    /// Stop once `||grad||_inf` drops below this.
    pub gradient_tolerance: f64,
    /// Armijo sufficient-decrease constant.
    pub c1: f64,
    /// Strong-Wolfe curvature constant.
    pub c2: f64,
    pub max_line_search_steps: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iterations: 1000,
            gradient_tolerance: 1e-6,
            c1: 1e-4,
            c2: 0.9,
            max_line_search_steps: 40,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Termination {
    GradientTolerance,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Clone, Debug)]
pub struct LbfgsResult {
    pub params: Vec<f64>,
    pub value: f64,
    pub gradient_inf_norm: f64,
    pub iterations: usize,
    pub termination: Termination,
    /// Objective at the start and after every accepted iteration.
    pub history: Vec<f64>,
}

impl LbfgsResult {
    pub fn converged(&self) -> bool {
        self.termination == Termination::GradientTolerance
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

struct Point {
    x: Vec<f64>,
    f: f64,
    g: Vec<f64>,
}

/// Minimizes `f`, which returns the objective and writes its gradient.
pub fn minimize<F>(mut f: F, x0: Vec<f64>, cfg: &LbfgsConfig) -> LbfgsResult
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut g0 = vec![0.0; n];
    let f0 = f(&x0, &mut g0);
    let mut cur = Point { x: x0, f: f0, g: g0 };
    let mut history = vec![cur.f];
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(cfg.memory);
    let mut iterations = 0;
    let mut termination = Termination::MaxIterations;

    while iterations < cfg.max_iterations {
        if inf_norm(&cur.g) < cfg.gradient_tolerance {
            termination = Termination::GradientTolerance;
            break;
        }
        let mut dir = two_loop(&cur.g, &pairs);
        let mut slope = dot(&dir, &cur.g);
        if !(slope < 0.0) {
            pairs.clear();
            dir = cur.g.iter().map(|v| -v).collect();
            slope = -dot(&cur.g, &cur.g);
        }
        let initial_step = if pairs.is_empty() {
            (1.0 / dot(&cur.g, &cur.g).sqrt()).min(1.0)
        } else {
            1.0
        };
        let next = match line_search(&mut f, &cur, &dir, slope, initial_step, cfg) {
            Some(p) => p,
            None if !pairs.is_empty() => {
                // Stale curvature pairs can produce a poor direction; retry
                // from steepest descent once before giving up.
                pairs.clear();
                continue;
            }
            None => {
                termination = Termination::LineSearchFailed;
                break;
            }
        };
        let s: Vec<f64> = next.x.iter().zip(&cur.x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = next.g.iter().zip(&cur.g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).max(f64::MIN_POSITIVE) {
            if pairs.len() == cfg.memory {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / sy));
        }
        cur = next;
        iterations += 1;
        history.push(cur.f);
    }
    if termination == Termination::MaxIterations && inf_norm(&cur.g) < cfg.gradient_tolerance {
        termination = Termination::GradientTolerance;
    }
    LbfgsResult {
        gradient_inf_norm: inf_norm(&cur.g),
        params: cur.x,
        value: cur.f,
        iterations,
        termination,
        history,
    }
}

fn two_loop(g: &[f64], pairs: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q: Vec<f64> = g.to_vec();
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y, rho) in pairs.iter().rev() {
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some((s, y, _)) = pairs.back() {
        let gamma = dot(s, y) / dot(y, y);
        for qi in q.iter_mut() {
            *qi *= gamma;
        }
    }
    for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

struct Trial {
    alpha: f64,
    f: f64,
    slope: f64,
    point: Point,
}

fn line_search<F>(f: &mut F, cur: &Point, dir: &[f64], slope0: f64, alpha0: f64, cfg: &LbfgsConfig) -> Option<Point>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let mut eval = |alpha: f64| -> Option<Trial> {
        let x: Vec<f64> = cur.x.iter().zip(dir).map(|(a, d)| a + alpha * d).collect();
        let mut g = vec![0.0; x.len()];
        let fx = f(&x, &mut g);
        if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return None;
        }
        Some(Trial {
            alpha,
            f: fx,
            slope: dot(&g, dir),
            point: Point { x, f: fx, g },
        })
    };
    let armijo = |t: &Trial| t.f <= cur.f + cfg.c1 * t.alpha * slope0;
    let curvature = |t: &Trial| t.slope.abs() <= -cfg.c2 * slope0;

    let mut prev = Trial {
        alpha: 0.0,
        f: cur.f,
        slope: slope0,
        point: Point {
            x: cur.x.clone(),
            f: cur.f,
            g: cur.g.clone(),
        },
    };
    let mut alpha = alpha0;
    let mut steps = 0;
    let (mut lo, mut hi) = loop {
        steps += 1;
        let t = match eval(alpha) {
            Some(t) => t,
            None => {
                // Overflow: shrink towards the last good point.
                alpha = 0.5 * (prev.alpha + alpha);
                if steps >= cfg.max_line_search_steps {
                    return None;
                }
                continue;
            }
        };
        if !armijo(&t) || (prev.alpha > 0.0 && t.f >= prev.f) {
            break (prev, t);
        }
        if curvature(&t) {
            return Some(t.point);
        }
        if t.slope >= 0.0 {
            break (t, prev);
        }
        if steps >= cfg.max_line_search_steps {
            return Some(t.point);
        }
        alpha = 2.0 * t.alpha;
        prev = t;
    };

    // Zoom: `lo` always satisfies Armijo and has the lowest value seen.
    while steps < cfg.max_line_search_steps {
        steps += 1;
        let width = (hi.alpha - lo.alpha).abs();
        if width < 1e-16 * lo.alpha.abs().max(1.0) {
            break;
        }
        let a = cubic_min(&lo, &hi);
        let t = match eval(a) {
            Some(t) => t,
            None => {
                hi = Trial {
                    alpha: a,
                    f: f64::INFINITY,
                    slope: f64::INFINITY,
                    point: Point { x: Vec::new(), f: f64::INFINITY, g: Vec::new() },
                };
                continue;
            }
        };
        if !armijo(&t) || t.f >= lo.f {
            hi = t;
        } else {
            if curvature(&t) {
                return Some(t.point);
            }
            if t.slope * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            lo = t;
        }
    }
    (lo.alpha > 0.0 && lo.f < cur.f).then_some(lo.point)
}

/// Minimizer of the cubic interpolating both trials' values and slopes,
/// clamped to the inner 80% of the bracket (bisection if degenerate).
fn cubic_min(lo: &Trial, hi: &Trial) -> f64 {
    let (a, b) = (lo.alpha, hi.alpha);
    let (left, right) = (a.min(b), a.max(b));
    let margin = 0.1 * (right - left);
    let mid = 0.5 * (a + b);
    if !hi.f.is_finite() || !hi.slope.is_finite() {
        return mid;
    }
    let d1 = lo.slope + hi.slope - 3.0 * (lo.f - hi.f) / (a - b);
    let disc = d1 * d1 - lo.slope * hi.slope;
    if disc < 0.0 {
        return mid;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let denom = hi.slope - lo.slope + 2.0 * d2;
    if denom == 0.0 {
        return mid;
    }
    let t = b - (b - a) * (hi.slope + d2 - d1) / denom;
    if !t.is_finite() {
        return mid;
    }
    t.clamp(left + margin, right - margin)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_rosenbrock() {
        let rosen = |x: &[f64], g: &mut [f64]| {
            let (a, b) = (1.0, 100.0);
            g[0] = -2.0 * (a - x[0]) - 4.0 * b * (x[1] - x[0] * x[0]) * x[0];
            g[1] = 2.0 * b * (x[1] - x[0] * x[0]);
            (a - x[0]).powi(2) + b * (x[1] - x[0] * x[0]).powi(2)
        };
        let r = minimize(rosen, vec![-1.2, 1.0], &LbfgsConfig::default());
        assert!(r.converged(), "{:?}", r.termination);
        assert!((r.params[0] - 1.0).abs() < 1e-5 && (r.params[1] - 1.0).abs() < 1e-5);
        assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn quadratic_in_few_iterations() {
        let diag = [1.0, 10.0, 100.0, 1000.0];
        let quad = |x: &[f64], g: &mut [f64]| {
            let mut v = 0.0;
            for i in 0..4 {
                g[i] = diag[i] * (x[i] - 1.0);
                v += 0.5 * diag[i] * (x[i] - 1.0).powi(2);
            }
            v
        };
        let r = minimize(quad, vec![0.0; 4], &LbfgsConfig::default());
        assert!(r.converged());
        assert!(r.iterations < 40, "{}", r.iterations);
    }

    #[test]
    fn already_optimal_stops_immediately() {
        let r = minimize(|x, g| { g[0] = x[0]; 0.5 * x[0] * x[0] }, vec![0.0], &LbfgsConfig::default());
        assert_eq!(r.iterations, 0);
        assert!(r.converged());
    }
}
