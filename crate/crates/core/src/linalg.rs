//! Small dense helpers shared by the solver and the tuning code.

use nalgebra::{DMatrix, DVector, SVD};

use crate::error::{Error, Result};

/// Orthogonal projection onto the column space of an unpenalized block
/// `X = [1, Z_c]`, used to profile out the intercept and the controls.
#[derive(Debug, Clone)]
pub struct Profile {
    /// Orthonormal basis of `col(X)`, `n x r`.
    basis: DMatrix<f64>,
    svd: SVD<f64, nalgebra::Dyn, nalgebra::Dyn>,
    eps: f64,
}

impl Profile {
    pub fn new(x: &DMatrix<f64>) -> Result<Self> {
        let svd = SVD::new(x.clone(), true, true);
        let u = svd
            .u
            .as_ref()
            .ok_or_else(|| Error::Numerical("SVD of the unpenalized block failed".into()))?;
        let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
        let eps = smax * 1e-12 * x.nrows().max(x.ncols()) as f64;
        let keep: Vec<usize> = (0..svd.singular_values.len())
            .filter(|&i| svd.singular_values[i] > eps)
            .collect();
        let mut basis = DMatrix::zeros(x.nrows(), keep.len());
        for (c, &i) in keep.iter().enumerate() {
            basis.set_column(c, &u.column(i));
        }
        Ok(Profile { basis, svd, eps })
    }

    /// `v - P v`
    pub fn residualize(&self, v: &DVector<f64>) -> DVector<f64> {
        v - &self.basis * (self.basis.transpose() * v)
    }

    pub fn residualize_matrix(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        m - &self.basis * (self.basis.transpose() * m)
    }

    /// Minimum-norm least-squares coefficients of `v` on `X`.
    pub fn coefficients(&self, v: &DVector<f64>) -> DVector<f64> {
        self.svd
            .solve(v, self.eps)
            .unwrap_or_else(|_| DVector::zeros(self.svd.v_t.as_ref().map_or(0, |v| v.nrows())))
    }
}

/// Cholesky solve of a small dense SPD system stored row-major.
/// Returns `None` when the matrix is not numerically positive definite.
pub fn cholesky_solve(a: &mut [f64], b: &mut [f64], m: usize) -> Option<()> {
    for j in 0..m {
        let mut d = a[j * m + j];
        for l in 0..j {
            d -= a[j * m + l] * a[j * m + l];
        }
        if !(d > 0.0) {
            return None;
        }
        let d = d.sqrt();
        a[j * m + j] = d;
        for i in j + 1..m {
            let mut s = a[i * m + j];
            for l in 0..j {
                s -= a[i * m + l] * a[j * m + l];
            }
            a[i * m + j] = s / d;
        }
    }
    for i in 0..m {
        let mut s = b[i];
        for l in 0..i {
            s -= a[i * m + l] * b[l];
        }
        b[i] = s / a[i * m + i];
    }
    for i in (0..m).rev() {
        let mut s = b[i];
        for l in i + 1..m {
            s -= a[l * m + i] * b[l];
        }
        b[i] = s / a[i * m + i];
    }
    Some(())
}

/// Largest eigenvalue of `Z^T Z / n` estimated by power iteration.
pub fn power_iteration(z: &DMatrix<f64>, steps: usize) -> f64 {
    let n = z.nrows().max(1) as f64;
    // irregular start so that structured null spaces (e.g. centered blocks
    // annihilating the all-ones vector) cannot swallow it
    let mut v = DVector::from_fn(z.ncols(), |i, _| 1.0 + ((i * 7919 + 13) % 101) as f64 / 101.0);
    let mut rq = 0.0;
    for _ in 0..steps {
        let norm = v.norm();
        if norm == 0.0 {
            return 0.0;
        }
        v /= norm;
        let w = z.transpose() * (z * &v) / n;
        rq = v.dot(&w);
        v = w;
    }
    rq
}

pub fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |m, x| m.max(x.abs()))
}
