//! Clamped B-spline basis, its Gram matrix and coefficient curves.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed time interval `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub start: f64,
    pub end: f64,
}

impl Domain {
    pub fn new(start: f64, end: f64) -> Result<Self> {
        if !(start.is_finite() && end.is_finite() && start < end) {
            return Err(Error::invalid(format!("invalid domain [{start}, {end}]")));
        }
        Ok(Domain { start, end })
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && t <= self.end
    }

    pub fn length(&self) -> f64 {
        self.end - self.start
    }

    fn check(&self, t: f64) -> Result<()> {
        if self.contains(t) {
            Ok(())
        } else {
            Err(Error::OutsideDomain {
                value: t,
                start: self.start,
                end: self.end,
            })
        }
    }
}

/// B-spline basis definition with a full clamped knot vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub degree: usize,
    pub domain: Domain,
    /// Length `k + degree + 1`, first/last knot repeated `degree + 1` times.
    pub knots: Vec<f64>,
}

impl BasisSpec {
    /// `k` functions of the given degree with uniformly spaced interior knots.
    pub fn uniform(k: usize, degree: usize, domain: Domain) -> Result<Self> {
        if k < degree + 1 || k == 0 {
            return Err(Error::Basis(format!("k = {k} must be at least degree + 1 = {}", degree + 1)));
        }
        let interior = k - degree - 1;
        let mut knots = vec![domain.start; degree + 1];
        for i in 1..=interior {
            knots.push(domain.start + domain.length() * i as f64 / (interior + 1) as f64);
        }
        knots.extend(std::iter::repeat_n(domain.end, degree + 1));
        Self::with_knots(degree, domain, knots)
    }

    /// Custom knot vector; must be clamped to the domain and non-decreasing.
    pub fn with_knots(degree: usize, domain: Domain, knots: Vec<f64>) -> Result<Self> {
        let spec = BasisSpec { degree, domain, knots };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.degree;
        let len = self.knots.len();
        if len < 2 * (d + 1) {
            return Err(Error::Basis(format!(
                "knot vector of length {len} too short for degree {d}"
            )));
        }
        if self.knots.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(Error::Basis("knots must be non-decreasing".into()));
        }
        let clamped_left = self.knots[..=d].iter().all(|&t| t == self.domain.start);
        let clamped_right = self.knots[len - d - 1..].iter().all(|&t| t == self.domain.end);
        if !clamped_left || !clamped_right {
            return Err(Error::Basis("knot vector must be clamped at the domain ends".into()));
        }
        let interior = &self.knots[d + 1..len - d - 1];
        if interior
            .iter()
            .any(|&t| !(t > self.domain.start && t < self.domain.end))
        {
            return Err(Error::Basis("interior knots must lie strictly inside the domain".into()));
        }
        Ok(())
    }

    /// Number of basis functions.
    pub fn k(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    /// Index `s` of the knot span `[knots[s], knots[s+1])` containing `t`.
    fn span(&self, t: f64) -> usize {
        let k = self.k();
        if t >= self.knots[k] {
            return k - 1;
        }
        let (mut lo, mut hi) = (self.degree, k);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if t < self.knots[mid] {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lo
    }

    /// Cox-de Boor evaluation of the `degree + 1` non-zero functions at `t`.
    /// Returns the first index and the local values.
    fn local(&self, t: f64) -> (usize, Vec<f64>) {
        let d = self.degree;
        let s = self.span(t);
        let u = &self.knots;
        let mut n = vec![0.0; d + 1];
        let mut left = vec![0.0; d + 1];
        let mut right = vec![0.0; d + 1];
        n[0] = 1.0;
        for j in 1..=d {
            left[j] = t - u[s + 1 - j];
            right[j] = u[s + j] - t;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = n[r] / (right[r + 1] + left[j - r]);
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        (s - d, n)
    }

    /// Basis vector `Phi(t)` of length `k`.
    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        self.domain.check(t)?;
        Ok(self.eval_unchecked(t))
    }

    pub(crate) fn eval_unchecked(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.k()];
        let (first, vals) = self.local(t);
        out[first..first + vals.len()].copy_from_slice(&vals);
        out
    }

    /// `|grid| x k` matrix of basis values.
    pub fn eval_matrix(&self, grid: &[f64]) -> Result<DMatrix<f64>> {
        let mut m = DMatrix::zeros(grid.len(), self.k());
        for (g, &t) in grid.iter().enumerate() {
            self.domain.check(t)?;
            let (first, vals) = self.local(t);
            for (l, v) in vals.into_iter().enumerate() {
                m[(g, first + l)] = v;
            }
        }
        Ok(m)
    }

    /// Gram matrix with the default quadrature order `degree + 1`.
    pub fn gram(&self) -> Result<BasisGram> {
        self.gram_with_order(self.degree + 1)
    }

    /// Gram matrix `J = int Phi Phi^T` by Gauss-Legendre on every knot span.
    /// Exact whenever `order >= degree + 1`.
    pub fn gram_with_order(&self, order: usize) -> Result<BasisGram> {
        self.validate()?;
        let order = order.max(1);
        let (nodes, weights) = gauss_legendre(order);
        let k = self.k();
        let mut j = DMatrix::zeros(k, k);
        for w in self.knots.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b <= a {
                continue;
            }
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for (x, wt) in nodes.iter().zip(&weights) {
                let t = mid + half * x;
                let (first, vals) = self.local(t);
                for (r, vr) in vals.iter().enumerate() {
                    for (c, vc) in vals.iter().enumerate() {
                        j[(first + r, first + c)] += half * wt * vr * vc;
                    }
                }
            }
        }
        // exact symmetry
        for r in 0..k {
            for c in 0..r {
                let avg = 0.5 * (j[(r, c)] + j[(c, r)]);
                j[(r, c)] = avg;
                j[(c, r)] = avg;
            }
        }
        if Cholesky::new(j.clone()).is_none() {
            return Err(Error::Basis("Gram matrix is not positive definite".into()));
        }
        Ok(BasisGram {
            matrix: j,
            quadrature_order: order,
        })
    }
}

/// Gram matrix of a basis.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisGram {
    pub matrix: DMatrix<f64>,
    pub quadrature_order: usize,
}

/// Coefficient matrix `B` (`p x k`) with the basis it refers to.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientCurves {
    pub coefficients: DMatrix<f64>,
    pub spec: BasisSpec,
}

impl CoefficientCurves {
    pub fn new(coefficients: DMatrix<f64>, spec: BasisSpec) -> Result<Self> {
        if coefficients.ncols() != spec.k() {
            return Err(Error::invalid(format!(
                "coefficient matrix has {} columns, basis has k = {}",
                coefficients.ncols(),
                spec.k()
            )));
        }
        Ok(CoefficientCurves { coefficients, spec })
    }

    /// `p x |grid|` matrix with entry `(j, g) = sum_l B[j, l] phi_l(t_g)`.
    pub fn reconstruct(&self, grid: &[f64]) -> Result<DMatrix<f64>> {
        let phi = self.spec.eval_matrix(grid)?;
        Ok(&self.coefficients * phi.transpose())
    }

    /// `(int beta_j^2)^{1/2}` per component.
    pub fn energy(&self, gram: &BasisGram) -> Result<DVector<f64>> {
        curve_energy(&self.coefficients, gram)
    }
}

/// `sqrt(b_j^T J b_j)` for every row `b_j` of `coefficients`.
pub fn curve_energy(coefficients: &DMatrix<f64>, gram: &BasisGram) -> Result<DVector<f64>> {
    let k = gram.matrix.nrows();
    if coefficients.ncols() != k {
        return Err(Error::invalid("coefficient columns do not match Gram size"));
    }
    let p = coefficients.nrows();
    let mut out = DVector::zeros(p);
    for j in 0..p {
        let row = coefficients.row(j).transpose();
        let q = (row.transpose() * &gram.matrix * &row)[(0, 0)];
        out[j] = q.max(0.0).sqrt();
    }
    Ok(out)
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let n = order;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for m in 2..=n {
        let m = m as f64;
        let p2 = ((2.0 * m - 1.0) * x * p1 - (m - 1.0) * p0) / m;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}
