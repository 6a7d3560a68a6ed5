//! Accelerated proximal gradient for one primal step.

use super::prox::{coupled_prox, prox_group_in_place};
use super::{GroupProblem, LossOperator};

#[derive(Debug, Clone)]
pub(crate) struct PrimalState {
    pub x: Vec<f64>,
    /// Dual variable of the coupled prox, reused as a warm start.
    pub multiplier: Vec<f64>,
}

/// Image of `x` under the loss operator: `Q x` or `Z~ x`.
fn image(op: &LossOperator, x: &[f64]) -> Vec<f64> {
    match op {
        LossOperator::Gram { q, .. } => mat_vec(q, x),
        LossOperator::Design { zt, .. } => mat_vec(zt, x),
    }
}

fn mat_vec(a: &nalgebra::DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    let rows = a.nrows();
    let mut out = vec![0.0; rows];
    if rows == 0 {
        return out;
    }
    for (col, &xc) in a.as_slice().chunks_exact(rows).zip(x) {
        if xc != 0.0 {
            for (o, &v) in out.iter_mut().zip(col) {
                *o += v * xc;
            }
        }
    }
    out
}

/// Dot product with independent partial sums so the loop vectorizes.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..4 {
            acc[i] += x[i] * y[i];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn loss(op: &LossOperator, n: usize, x: &[f64], img: &[f64]) -> f64 {
    match op {
        LossOperator::Gram { c, yy, .. } => {
            let quad: f64 = x.iter().zip(img).map(|(a, b)| a * b).sum();
            let lin: f64 = x.iter().zip(c.iter()).map(|(a, b)| a * b).sum();
            0.5 * quad - lin + 0.5 * yy
        }
        LossOperator::Design { yt, .. } => {
            yt.iter().zip(img).map(|(y, z)| (y - z).powi(2)).sum::<f64>() / (2.0 * n as f64)
        }
    }
}

fn gradient(op: &LossOperator, n: usize, img: &[f64], out: &mut [f64]) {
    match op {
        LossOperator::Gram { c, .. } => {
            for ((o, q), c) in out.iter_mut().zip(img).zip(c.iter()) {
                *o = q - c;
            }
        }
        LossOperator::Design { zt, yt } => {
            let r: Vec<f64> = yt.iter().zip(img).map(|(y, z)| z - y).collect();
            let nf = n as f64;
            let rows = zt.nrows().max(1);
            for (o, col) in out.iter_mut().zip(zt.as_slice().chunks_exact(rows)) {
                *o = dot(col, &r) / nf;
            }
        }
    }
}

/// Penalty plus augmented quadratic in solver coordinates.
fn nonsmooth(problem: &GroupProblem, x: &[f64], lambda: f64, mu: f64, alpha: &[f64]) -> f64 {
    let k = problem.k;
    let pen: f64 = x.chunks(k).map(|g| g.iter().map(|v| v * v).sum::<f64>().sqrt()).sum();
    let aug = match (&problem.coupling, mu > 0.0) {
        (Some(c), true) => {
            let r = c.residual(x, k);
            0.5 * mu * r.iter().zip(alpha).map(|(r, a)| (r + a).powi(2)).sum::<f64>()
        }
        _ => 0.0,
    };
    lambda * pen + aug
}

/// Minimizes loss + penalty (+ augmented term when `mu > 0`) from `state.x`.
/// Returns the iteration count and whether the step tolerance was met.
pub(crate) fn solve(
    problem: &GroupProblem,
    lambda: f64,
    mu: f64,
    alpha: &[f64],
    state: &mut PrimalState,
    tol: f64,
    max_iter: usize,
) -> (usize, bool) {
    let n = problem.n;
    let k = problem.k;
    let d = state.x.len();
    let op = &problem.op;
    let coupled = problem.coupling.as_ref().filter(|_| mu > 0.0);
    let mut lip = problem.lipschitz;

    let objective = |x: &[f64], img: &[f64]| loss(op, n, x, img) + nonsmooth(problem, x, lambda, mu, alpha);
    let mut x = state.x.clone();
    let mut img_x = image(op, &x);
    let mut f_x = objective(&x, &img_x);
    let mut y = x.clone();
    let mut img_y = img_x.clone();
    let mut theta = 1.0f64;
    let mut grad = vec![0.0; d];
    let mut v = vec![0.0; d];
    let mut x_new = vec![0.0; d];
    let mut restarted = true;

    for iter in 1..=max_iter {
        let t = 1.0 / lip;
        gradient(op, n, &img_y, &mut grad);
        for i in 0..d {
            v[i] = y[i] - t * grad[i];
        }
        match coupled {
            Some(c) => coupled_prox(&v, k, t * lambda, t * mu, alpha, c, &mut state.multiplier, &mut x_new),
            None => {
                x_new.copy_from_slice(&v);
                for g in x_new.chunks_mut(k) {
                    prox_group_in_place(g, t * lambda);
                }
            }
        }
        let img_new = image(op, &x_new);
        let f_new = objective(&x_new, &img_new);
        let step: f64 = x_new.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let xnorm: f64 = x_new.iter().map(|a| a * a).sum::<f64>().sqrt();

        if f_new > f_x + 1e-14 * f_x.abs() {
            if restarted && step <= tol * xnorm.max(1.0) {
                state.x = x;
                return (iter, true);
            }
            if restarted {
                // a plain prox-gradient step cannot increase the objective
                // with a valid step size, so the curvature estimate is low
                lip *= 2.0;
            }
            y.copy_from_slice(&x);
            img_y.copy_from_slice(&img_x);
            theta = 1.0;
            restarted = true;
            continue;
        }
        restarted = false;

        let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
        let beta = (theta - 1.0) / theta_next;
        for i in 0..d {
            y[i] = x_new[i] + beta * (x_new[i] - x[i]);
        }
        for (i, iy) in img_y.iter_mut().enumerate() {
            *iy = img_new[i] + beta * (img_new[i] - img_x[i]);
        }
        theta = theta_next;
        std::mem::swap(&mut x, &mut x_new);
        img_x = img_new;
        f_x = f_new;

        if step <= tol * xnorm.max(1.0) {
            state.x = x;
            return (iter, true);
        }
    }
    state.x = x;
    (max_iter, false)
}
