//! L2-regularized weighted linear models trained by full-batch gradient
//! descent with a Barzilai-Borwein initial step and Armijo backtracking.

use crate::scalar::{sigmoid, softplus, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Loss {
    Logistic,
    /// Quadratically smoothed hinge.
    SmoothHinge,
}

impl Loss {
    /// Loss value and derivative with respect to the score `z`.
    fn eval<F: Scalar>(self, z: F, y: u8) -> (F, F) {
        match self {
            Loss::Logistic => {
                let yf = if y == 1 { F::one() } else { F::zero() };
                (softplus(z) - yf * z, sigmoid(z) - yf)
            }
            Loss::SmoothHinge => {
                let t = if y == 1 { F::one() } else { -F::one() };
                let m = t * z;
                let half = F::lit(0.5);
                if m <= F::zero() {
                    (half - m, -t)
                } else if m < F::one() {
                    let r = F::one() - m;
                    (half * r * r, -t * r)
                } else {
                    (F::zero(), F::zero())
                }
            }
        }
    }
}

/// Training problem with weights already normalized to sum to one.
pub(crate) struct Problem<'a, F> {
    pub x: &'a [Vec<F>],
    pub y: &'a [u8],
    pub w: Vec<F>,
    pub l2: F,
    pub intercept: bool,
    pub loss: Loss,
}

impl<'a, F: Scalar> Problem<'a, F> {
    /// `w` is normalized here; an all-zero weight vector leaves only the
    /// regularizer.
    pub fn new(
        x: &'a [Vec<F>],
        y: &'a [u8],
        weights: &[F],
        l2: F,
        intercept: bool,
        loss: Loss,
    ) -> Self {
        let total: F = weights.iter().copied().sum();
        let w = if total > F::zero() {
            weights.iter().map(|&v| v / total).collect()
        } else {
            vec![F::zero(); weights.len()]
        };
        Self {
            x,
            y,
            w,
            l2,
            intercept,
            loss,
        }
    }

    pub fn n_params(&self) -> usize {
        self.x.first().map_or(0, Vec::len) + usize::from(self.intercept)
    }

    fn score(&self, theta: &[F], xi: &[F]) -> F {
        let d = xi.len();
        let mut z = if self.intercept { theta[d] } else { F::zero() };
        for (a, b) in theta[..d].iter().zip(xi) {
            z = z + *a * *b;
        }
        z
    }

    /// Objective `sum_i w_i loss_i + l2/2 * |theta|^2` and its gradient.
    pub fn value_grad(&self, theta: &[F]) -> (F, Vec<F>) {
        let d = theta.len() - usize::from(self.intercept);
        let mut grad: Vec<F> = theta.iter().map(|&t| self.l2 * t).collect();
        let mut f = self.l2 * F::lit(0.5) * theta.iter().map(|&t| t * t).sum::<F>();
        for ((xi, &yi), &wi) in self.x.iter().zip(self.y).zip(&self.w) {
            if wi == F::zero() {
                continue;
            }
            let (l, dl) = self.loss.eval(self.score(theta, xi), yi);
            f = f + wi * l;
            let g = wi * dl;
            if g != F::zero() {
                for (gj, &xj) in grad[..d].iter_mut().zip(xi) {
                    *gj = *gj + g * xj;
                }
                if self.intercept {
                    grad[d] = grad[d] + g;
                }
            }
        }
        (f, grad)
    }

    pub fn value(&self, theta: &[F]) -> F {
        let mut f = self.l2 * F::lit(0.5) * theta.iter().map(|&t| t * t).sum::<F>();
        for ((xi, &yi), &wi) in self.x.iter().zip(self.y).zip(&self.w) {
            if wi != F::zero() {
                f = f + wi * self.loss.eval(self.score(theta, xi), yi).0;
            }
        }
        f
    }
}

pub(crate) struct Solution<F> {
    pub theta: Vec<F>,
    pub epochs: usize,
    pub objective: F,
}

pub(crate) fn minimize<F: Scalar>(p: &Problem<'_, F>, max_epochs: usize, tol: F) -> Solution<F> {
    let n = p.n_params();
    let mut theta = vec![F::zero(); n];
    let (mut f, mut g) = p.value_grad(&theta);
    let mut step = F::one();
    let armijo = F::lit(1e-4);
    let min_step = F::lit(1e-20);
    let mut epochs = 0;
    while epochs < max_epochs {
        epochs += 1;
        let gg: F = g.iter().map(|&v| v * v).sum();
        if gg == F::zero() {
            break;
        }
        let mut t = step;
        let (next, f_next) = loop {
            let cand: Vec<F> = theta.iter().zip(&g).map(|(&a, &b)| a - t * b).collect();
            let fc = p.value(&cand);
            if fc <= f - armijo * t * gg {
                break (Some(cand), fc);
            }
            t = t * F::lit(0.5);
            if t < min_step {
                break (None, f);
            }
        };
        let Some(next) = next else { break };
        let (_, g_next) = p.value_grad(&next);
        let mut ss = F::zero();
        let mut sy = F::zero();
        for i in 0..n {
            let s = next[i] - theta[i];
            let yv = g_next[i] - g[i];
            ss = ss + s * s;
            sy = sy + s * yv;
        }
        step = if sy > F::zero() { ss / sy } else { t * F::lit(2.0) };
        let rel = (f - f_next).abs() / f.abs().max(F::min_positive_value());
        theta = next;
        g = g_next;
        f = f_next;
        if rel < tol {
            break;
        }
    }
    let (theta, extra) = polish(p, theta, g, step, max_epochs);
    Solution {
        objective: p.value(&theta),
        theta,
        epochs: epochs + extra,
    }
}

/// Gradient-norm target of the polishing phase.
pub(crate) const GRADIENT_TOL: f64 = 1e-12;

/// Unsafeguarded Barzilai-Borwein steps from a point the line-search phase
/// accepted, until the largest gradient component is below
/// [`GRADIENT_TOL`]. Objective differences cannot resolve parameters much
/// below the square root of machine precision; the gradient can. Returns the
/// iterate with the smallest gradient seen and the number of steps taken.
fn polish<F: Scalar>(p: &Problem<'_, F>, theta: Vec<F>, g: Vec<F>, step: F, max_steps: usize) -> (Vec<F>, usize) {
    let gmax = |g: &[F]| g.iter().fold(F::zero(), |m, &v| m.max(v.abs()));
    let tol = F::lit(GRADIENT_TOL);
    let mut best_norm = gmax(&g);
    let mut best = theta.clone();
    let (mut theta, mut g, mut step) = (theta, g, step);
    let mut steps = 0;
    while steps < max_steps && best_norm > tol {
        steps += 1;
        let next: Vec<F> = theta.iter().zip(&g).map(|(&a, &b)| a - step * b).collect();
        let (_, g_next) = p.value_grad(&next);
        let norm = gmax(&g_next);
        if !norm.is_finite() || norm > F::lit(1e3) * best_norm {
            break;
        }
        let mut ss = F::zero();
        let mut sy = F::zero();
        for i in 0..next.len() {
            let s = next[i] - theta[i];
            ss = ss + s * s;
            sy = sy + s * (g_next[i] - g[i]);
        }
        if norm < best_norm {
            best_norm = norm;
            best.clone_from(&next);
        }
        if !(sy > F::zero()) {
            break;
        }
        step = ss / sy;
        theta = next;
        g = g_next;
    }
    (best, steps)
}
