//! Group soft-thresholding and the prox of the penalty plus the augmented
//! Lagrangian quadratic.

use nalgebra::DMatrix;

use crate::linalg::cholesky_solve;

/// `(1 - tau / ||v||)_+ v`; exactly zero when `||v|| <= tau`.
pub fn prox_group(v: &[f64], tau: f64) -> Vec<f64> {
    let mut out = v.to_vec();
    prox_group_in_place(&mut out, tau);
    out
}

pub(crate) fn prox_group_in_place(v: &mut [f64], tau: f64) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm <= tau {
        v.iter_mut().for_each(|x| *x = 0.0);
    } else if tau > 0.0 {
        let scale = 1.0 - tau / norm;
        v.iter_mut().for_each(|x| *x *= scale);
    }
}

/// Constraint `sum_j C_j x_j = b` expressed in the solver's (weighted)
/// coordinates. `blocks == None` means every `C_j` is the identity.
#[derive(Debug, Clone)]
pub(crate) struct CouplingConstraint {
    pub blocks: Option<Vec<DMatrix<f64>>>,
    pub rhs: Vec<f64>,
}

impl CouplingConstraint {
    pub fn rows(&self) -> usize {
        self.rhs.len()
    }

    /// `sum_j C_j x_j - b`
    pub fn residual(&self, x: &[f64], k: usize) -> Vec<f64> {
        let m = self.rows();
        let mut r: Vec<f64> = self.rhs.iter().map(|b| -b).collect();
        for (j, xj) in x.chunks(k).enumerate() {
            match &self.blocks {
                None => r.iter_mut().zip(xj).for_each(|(r, x)| *r += x),
                Some(c) => {
                    for a in 0..m {
                        for l in 0..k {
                            r[a] += c[j][(a, l)] * xj[l];
                        }
                    }
                }
            }
        }
        r
    }

    /// `C_j^T nu` into `out`
    fn transpose_apply(&self, j: usize, nu: &[f64], out: &mut [f64]) {
        match &self.blocks {
            None => out.copy_from_slice(nu),
            Some(c) => {
                let c = &c[j];
                for (l, o) in out.iter_mut().enumerate() {
                    *o = (0..nu.len()).map(|a| c[(a, l)] * nu[a]).sum();
                }
            }
        }
    }

    /// `acc += C_j s`
    fn apply_add(&self, j: usize, s: &[f64], acc: &mut [f64]) {
        match &self.blocks {
            None => acc.iter_mut().zip(s).for_each(|(a, s)| *a += s),
            Some(c) => {
                let c = &c[j];
                for (a, acc) in acc.iter_mut().enumerate() {
                    *acc += (0..s.len()).map(|l| c[(a, l)] * s[l]).sum::<f64>();
                }
            }
        }
    }
}

/// Solves
///
/// ```text
/// min_x  1/2 ||x - v||^2 + tau sum_j ||x_j|| + tmu/2 ||sum_j C_j x_j - b + alpha||^2
/// ```
///
/// exactly. With `nu = tmu (sum_j C_j x_j - b + alpha)` the solution is
/// `x_j = prox_group(v_j - C_j^T nu, tau)`, and `nu` minimizes the strongly
/// convex function
///
/// ```text
/// ||nu||^2 / (2 tmu) + (b - alpha)^T nu + 1/2 sum_j (||v_j - C_j^T nu|| - tau)_+^2
/// ```
///
/// which is done by damped Newton. `nu` is used as the starting point and
/// holds the solution on return.
#[allow(clippy::too_many_arguments)]
pub(crate) fn coupled_prox(
    v: &[f64],
    k: usize,
    tau: f64,
    tmu: f64,
    alpha: &[f64],
    constraint: &CouplingConstraint,
    nu: &mut Vec<f64>,
    out: &mut [f64],
) {
    let groups = v.len() / k;
    let m = constraint.rows();
    if nu.len() != m {
        *nu = vec![0.0; m];
    }
    let shift: Vec<f64> = constraint.rhs.iter().zip(alpha).map(|(b, a)| b - a).collect();
    let mut w = vec![0.0; v.len()];
    let mut norms = vec![0.0; groups];

    let eval = |nu: &[f64], w: &mut [f64], norms: &mut [f64]| -> f64 {
        let mut psi = nu.iter().map(|x| x * x).sum::<f64>() / (2.0 * tmu)
            + shift.iter().zip(nu).map(|(s, n)| s * n).sum::<f64>();
        for j in 0..groups {
            let wj = &mut w[j * k..(j + 1) * k];
            constraint.transpose_apply(j, nu, wj);
            let vj = &v[j * k..(j + 1) * k];
            let mut s = 0.0;
            for l in 0..k {
                wj[l] = vj[l] - wj[l];
                s += wj[l] * wj[l];
            }
            norms[j] = s.sqrt();
            let e = (norms[j] - tau).max(0.0);
            psi += 0.5 * e * e;
        }
        psi
    };

    let mut psi = eval(nu, &mut w, &mut norms);
    let mut grad = vec![0.0; m];
    let mut hess = vec![0.0; m * m];
    let mut s = vec![0.0; k];
    let mut cj = vec![0.0; m * k];
    let mut cs = vec![0.0; m];
    let mut trial = vec![0.0; m];
    for _ in 0..100 {
        // gradient and Hessian
        for a in 0..m {
            grad[a] = nu[a] / tmu + shift[a];
        }
        hess.iter_mut().for_each(|h| *h = 0.0);
        for a in 0..m {
            hess[a * m + a] = 1.0 / tmu;
        }
        let mut scale = shift.iter().map(|x| x * x).sum::<f64>().sqrt()
            + nu.iter().map(|x| x * x).sum::<f64>().sqrt() / tmu;
        for j in 0..groups {
            let nj = norms[j];
            if nj <= tau {
                continue;
            }
            let wj = &w[j * k..(j + 1) * k];
            let f = 1.0 - tau / nj;
            for l in 0..k {
                s[l] = f * wj[l];
            }
            cs.iter_mut().for_each(|c| *c = 0.0);
            constraint.apply_add(j, &s, &mut cs);
            for a in 0..m {
                grad[a] -= cs[a];
            }
            scale += cs.iter().map(|x| x * x).sum::<f64>().sqrt();
            let c3 = tau / (nj * nj * nj);
            match &constraint.blocks {
                None => {
                    for a in 0..m {
                        hess[a * m + a] += f;
                        for b in 0..m {
                            hess[a * m + b] += c3 * wj[a] * wj[b];
                        }
                    }
                }
                Some(blocks) => {
                    // C_j [f I + c3 w w^T] C_j^T
                    let c = &blocks[j];
                    let cw: Vec<f64> = (0..m).map(|a| (0..k).map(|l| c[(a, l)] * wj[l]).sum()).collect();
                    for a in 0..m {
                        for l in 0..k {
                            cj[a * k + l] = c[(a, l)];
                        }
                    }
                    for a in 0..m {
                        for b in 0..m {
                            let cc: f64 = (0..k).map(|l| cj[a * k + l] * cj[b * k + l]).sum();
                            hess[a * m + b] += f * cc + c3 * cw[a] * cw[b];
                        }
                    }
                }
            }
        }
        let gnorm = grad.iter().map(|x| x * x).sum::<f64>().sqrt();
        if gnorm <= 1e-14 * scale.max(f64::MIN_POSITIVE) || gnorm == 0.0 {
            break;
        }
        let mut dir: Vec<f64> = grad.iter().map(|g| -g).collect();
        if cholesky_solve(&mut hess, &mut dir, m).is_none() {
            dir = grad.iter().map(|g| -g * tmu).collect();
        }
        let slope: f64 = dir.iter().zip(&grad).map(|(d, g)| d * g).sum();
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            for a in 0..m {
                trial[a] = nu[a] + step * dir[a];
            }
            let p = eval(&trial, &mut w, &mut norms);
            // near the solution the Armijo test drowns in rounding; take the
            // full Newton step if it does not increase psi beyond that level
            let rounding = if step == 1.0 { 1e-13 * psi.abs() } else { 0.0 };
            if p <= psi + 1e-4 * step * slope || p <= psi + rounding {
                psi = p;
                nu.copy_from_slice(&trial);
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            eval(nu, &mut w, &mut norms);
            break;
        }
    }
    for j in 0..groups {
        let nj = norms[j];
        let f = if nj > tau { 1.0 - tau / nj } else { 0.0 };
        for l in 0..k {
            out[j * k + l] = f * w[j * k + l];
        }
    }
}
