//! Group optimality certificate.
//!
//! At a solution there is a multiplier `nu` with, for every group `j`,
//!
//! ```text
//! g_j + A_j^T nu + lambda W_j^2 b_j / ||W_j b_j|| = 0     if b_j != 0
//! ||W_j^{-1} (g_j + A_j^T nu)|| <= lambda                  if b_j == 0
//! ```
//!
//! where `g_j` is the loss gradient with the unpenalized block profiled out.
//! The multiplier is recovered by least squares over the active groups (or,
//! with no active group, by minimizing the squared excess over `lambda`).

use nalgebra::{DMatrix, DVector};

use super::prox::coupled_prox;
use super::GroupProblem;

fn weight(problem: &GroupProblem, j: usize, l: usize) -> f64 {
    problem.weights.as_ref().map_or(1.0, |w| w[j][l])
}

/// Loss gradient per group, `-Z_j^T r / n`, as a `groups x k` matrix.
pub(crate) fn loss_gradient(problem: &GroupProblem, beta: &DMatrix<f64>) -> DMatrix<f64> {
    let r = problem.residual(beta);
    let g = problem.z.transpose() * r / -(problem.n as f64);
    DMatrix::from_fn(problem.groups, problem.k, |j, l| g[j * problem.k + l])
}

/// Largest optimality violation scaled by `max(1, lambda)`.
pub fn residual(problem: &GroupProblem, beta: &DMatrix<f64>, lambda: f64, multiplier: Option<&DVector<f64>>) -> f64 {
    let grad = loss_gradient(problem, beta);
    let Some(cons) = &problem.constraint else {
        return violation(problem, beta, &grad, lambda, None);
    };
    let mut candidates = vec![fitted_multiplier(problem, beta, &grad, lambda)];
    if let Some(u) = multiplier {
        if u.len() == cons.rows() {
            candidates.push(u.clone());
        }
    }
    candidates
        .iter()
        .map(|nu| violation(problem, beta, &grad, lambda, Some(nu)))
        .fold(f64::INFINITY, f64::min)
}

fn violation(
    problem: &GroupProblem,
    beta: &DMatrix<f64>,
    grad: &DMatrix<f64>,
    lambda: f64,
    nu: Option<&DVector<f64>>,
) -> f64 {
    let k = problem.k;
    let mut worst = 0.0f64;
    for j in 0..problem.groups {
        let mut h = grad.row(j).transpose();
        if let (Some(nu), Some(cons)) = (nu, &problem.constraint) {
            h += cons.blocks[j].transpose() * nu;
        }
        let wnorm = (0..k).map(|l| (weight(problem, j, l) * beta[(j, l)]).powi(2)).sum::<f64>().sqrt();
        let v = if wnorm > 0.0 {
            (0..k)
                .map(|l| {
                    let w = weight(problem, j, l);
                    ((h[l] + lambda * w * w * beta[(j, l)] / wnorm) / w).powi(2)
                })
                .sum::<f64>()
                .sqrt()
        } else {
            let s = (0..k).map(|l| (h[l] / weight(problem, j, l)).powi(2)).sum::<f64>().sqrt();
            (s - lambda).max(0.0)
        };
        worst = worst.max(v);
    }
    worst / lambda.max(1.0)
}

fn fitted_multiplier(problem: &GroupProblem, beta: &DMatrix<f64>, grad: &DMatrix<f64>, lambda: f64) -> DVector<f64> {
    let cons = problem.constraint.as_ref().expect("constrained problem");
    let (k, m) = (problem.k, cons.rows());
    let active: Vec<usize> = (0..problem.groups).filter(|&j| beta.row(j).norm() > 0.0).collect();
    if active.is_empty() {
        // nu minimizing 1/2 sum_j (||W_j^{-1}(g_j + A_j^T nu)|| - lambda)_+^2,
        // the coupled prox dual with v_j = -W_j^{-1} g_j and a vanishing
        // quadratic term
        let coupling = problem.coupling.as_ref().expect("coupling with constraint");
        let v: Vec<f64> = (0..problem.groups)
            .flat_map(|j| (0..k).map(move |l| (j, l)))
            .map(|(j, l)| -grad[(j, l)] / weight(problem, j, l))
            .collect();
        let mut nu = vec![];
        let mut out = vec![0.0; v.len()];
        coupled_prox(&v, k, lambda, 1e12, &coupling.rhs, coupling, &mut nu, &mut out);
        return DVector::from_vec(nu);
    }
    let mut normal = DMatrix::zeros(m, m);
    let mut rhs = DVector::zeros(m);
    for &j in &active {
        let a = &cons.blocks[j];
        let wnorm = (0..k).map(|l| (weight(problem, j, l) * beta[(j, l)]).powi(2)).sum::<f64>().sqrt();
        let target = DVector::from_fn(k, |l, _| {
            let w = weight(problem, j, l);
            -(grad[(j, l)] + lambda * w * w * beta[(j, l)] / wnorm)
        });
        normal += a * a.transpose();
        rhs += a * target;
    }
    normal
        .svd(true, true)
        .solve(&rhs, 1e-12)
        .unwrap_or_else(|_| DVector::zeros(m))
}
