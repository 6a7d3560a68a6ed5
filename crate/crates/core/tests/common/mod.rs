//! Independent reference implementations and instance generators shared by
//! the integration tests. Nothing here calls into the solver.

#![allow(dead_code)]

use logcontrast::basis::{BasisSpec, Domain};
use logcontrast::composition::{Observation, Subject, TrajectoryDataset};
use logcontrast::design::DesignMatrices;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Dense instance `y = b0 + Z b + e` with `p` groups of `k` columns.
pub struct TinyInstance {
    pub z: DMatrix<f64>,
    pub y: DVector<f64>,
    pub p: usize,
    pub k: usize,
}

impl TinyInstance {
    pub fn random(seed: u64) -> TinyInstance {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shapes = [(2, 1), (3, 1), (4, 2), (3, 3), (6, 2), (2, 5), (4, 3), (12, 1), (3, 4)];
        let (p, k) = shapes[rng.random_range(0..shapes.len())];
        let n = rng.random_range((p * k + 3).min(20)..=20);
        let z = DMatrix::from_fn(n, p * k, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut truth = DVector::zeros(p * k);
        for l in 0..k {
            let v: f64 = rng.sample(StandardNormal);
            truth[l] = v;
            truth[k + l] = -v;
        }
        let y = DVector::from_fn(n, |i, _| 1.0 + (z.row(i) * &truth)[0] + 0.3 * rng.sample::<f64, _>(StandardNormal));
        TinyInstance { z, y, p, k }
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn design(&self) -> DesignMatrices {
        let n = self.n();
        let spec = BasisSpec::uniform(self.k, 0, Domain::new(0.0, 1.0).unwrap()).unwrap();
        DesignMatrices::from_parts(self.z.clone(), DMatrix::zeros(n, 0), self.y.clone(), self.p, spec).unwrap()
    }

    /// `(1/2n) ||y - b0 - Z b||^2 + lambda sum_j ||b_j||` with `b0` profiled.
    pub fn objective(&self, beta: &DVector<f64>, lambda: f64) -> f64 {
        let r = &self.y - &self.z * beta;
        let rc = r.add_scalar(-r.mean());
        let pen: f64 = (0..self.p).map(|j| beta.rows(j * self.k, self.k).norm()).sum();
        rc.norm_squared() / (2.0 * self.n() as f64) + lambda * pen
    }

    fn centered(&self) -> (DMatrix<f64>, DVector<f64>) {
        let mut zc = self.z.clone();
        for mut col in zc.column_iter_mut() {
            let m = col.mean();
            col.add_scalar_mut(-m);
        }
        (zc, self.y.add_scalar(-self.y.mean()))
    }
}

pub fn flatten(coefficients: &DMatrix<f64>) -> DVector<f64> {
    let (p, k) = coefficients.shape();
    DVector::from_fn(p * k, |i, _| coefficients[(i / k, i % k)])
}

/// Solves `[X'X/n, A'; A, 0] [b; nu] = [X'y/n; c]` by dense LU. Returns
/// `(b, nu)`, or `None` when the system is singular.
pub fn equality_ls(x: &DMatrix<f64>, y: &DVector<f64>, a: &DMatrix<f64>, c: &DVector<f64>) -> Option<(DVector<f64>, DVector<f64>)> {
    let (n, d, m) = (x.nrows(), x.ncols(), a.nrows());
    let mut kkt = DMatrix::zeros(d + m, d + m);
    kkt.view_mut((0, 0), (d, d)).copy_from(&(x.transpose() * x / n as f64));
    kkt.view_mut((d, 0), (m, d)).copy_from(a);
    kkt.view_mut((0, d), (d, m)).copy_from(&a.transpose());
    let mut rhs = DVector::zeros(d + m);
    rhs.rows_mut(0, d).copy_from(&(x.transpose() * y / n as f64));
    rhs.rows_mut(d, m).copy_from(c);
    let sol = kkt.lu().solve(&rhs)?;
    Some((sol.rows(0, d).into_owned(), sol.rows(d, m).into_owned()))
}

/// `[1, Z]` and the zero-sum constraint rows for an instance.
pub fn zero_sum_system(inst: &TinyInstance) -> (DMatrix<f64>, DMatrix<f64>) {
    let (n, p, k) = (inst.n(), inst.p, inst.k);
    let d = 1 + p * k;
    let mut x = DMatrix::from_element(n, d, 1.0);
    x.columns_mut(1, p * k).copy_from(&inst.z);
    let mut a = DMatrix::zeros(k, d);
    for j in 0..p {
        for l in 0..k {
            a[(l, 1 + j * k + l)] = 1.0;
        }
    }
    (x, a)
}

/// Zero-sum constrained least squares with a free intercept. Returns
/// `(b0, b)`.
pub fn constrained_ls(inst: &TinyInstance) -> (f64, DVector<f64>) {
    let (x, a) = zero_sum_system(inst);
    let (sol, _) = equality_ls(&x, &inst.y, &a, &DVector::zeros(inst.k)).expect("non-singular KKT system");
    (sol[0], sol.rows(1, inst.p * inst.k).into_owned())
}

/// Closed form for `p = 2, k = 1`: the constraint leaves a single lasso
/// coefficient on `d = z1 - z2` with penalty `2 lambda |b1|`.
pub fn reduced_soft_threshold(z1: &DVector<f64>, z2: &DVector<f64>, y: &DVector<f64>, lambda: f64) -> (f64, f64) {
    let n = y.len() as f64;
    let d = z1 - z2;
    let dc = d.add_scalar(-d.mean());
    let yc = y.add_scalar(-y.mean());
    let c = dc.dot(&yc) / n;
    let s = c.signum() * (c.abs() - 2.0 * lambda).max(0.0);
    let b1 = s / (dc.norm_squared() / n);
    (y.mean() - b1 * d.mean(), b1)
}

/// Best objective reached by a projected subgradient method on the zero-sum
/// subspace with diminishing steps, starting at zero.
pub fn projected_subgradient_reference(inst: &TinyInstance, lambda: f64, iters: usize) -> f64 {
    let (p, k, n) = (inst.p, inst.k, inst.n() as f64);
    let (zc, yc) = inst.centered();
    let gram = zc.transpose() * &zc / n;
    let zy = zc.transpose() * &yc / n;
    let lip = gram.symmetric_eigenvalues().max().max(1e-12);
    let project = |b: &mut DVector<f64>| {
        for l in 0..k {
            let m = (0..p).map(|j| b[j * k + l]).sum::<f64>() / p as f64;
            for j in 0..p {
                b[j * k + l] -= m;
            }
        }
    };
    let mut b = DVector::zeros(p * k);
    let mut best = inst.objective(&b, lambda);
    let mut g = DVector::zeros(p * k);
    for t in 0..iters {
        g.copy_from(&(&gram * &b - &zy));
        for j in 0..p {
            let nb = b.rows(j * k, k).norm();
            if nb > 0.0 {
                for l in 0..k {
                    g[j * k + l] += lambda * b[j * k + l] / nb;
                }
            }
        }
        project(&mut g);
        let step = 1.0 / (lip * ((t + 1) as f64).sqrt());
        b.axpy(-step, &g, 1.0);
        project(&mut b);
        best = best.min(inst.objective(&b, lambda));
    }
    best
}

/// Per-group gradients of the profiled loss and the group norms.
fn gradients(z: &DMatrix<f64>, y: &DVector<f64>, zc: Option<&DMatrix<f64>>, p: usize, beta: &DMatrix<f64>) -> (Vec<DVector<f64>>, Vec<f64>) {
    let n = y.len();
    let k = beta.ncols();
    let mut x = DMatrix::from_element(n, 1, 1.0);
    if let Some(c) = zc {
        x = DMatrix::from_fn(n, 1 + c.ncols(), |i, j| if j == 0 { 1.0 } else { c[(i, j - 1)] });
    }
    let partial = y - z * flatten(beta);
    let svd = x.clone().svd(true, false);
    let u = svd.u.unwrap();
    let rank = svd.singular_values.iter().filter(|&&s| s > 1e-10 * svd.singular_values.max()).count();
    let u = u.columns(0, rank);
    let r = &partial - u * (u.transpose() * &partial);
    let grad = -(z.transpose() * r) / n as f64;
    let g = (0..p).map(|j| grad.rows(j * k, k).into_owned()).collect();
    let norms = (0..p).map(|j| beta.row(j).norm()).collect();
    (g, norms)
}

fn violation(g: &[DVector<f64>], norms: &[f64], beta: &DMatrix<f64>, lambda: f64, nu: &DVector<f64>) -> f64 {
    (0..g.len())
        .map(|j| {
            let h = &g[j] + nu;
            if norms[j] > 0.0 {
                (h + beta.row(j).transpose() / norms[j] * lambda).norm()
            } else {
                (h.norm() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Zero-sum group KKT violation computed from scratch on the profiled
/// design, scaled by `max(1, lambda)`. The multiplier is fitted by least
/// squares over the active groups; with none active, zero and a minimax
/// center are tried.
pub fn zero_sum_kkt(z: &DMatrix<f64>, y: &DVector<f64>, zc: Option<&DMatrix<f64>>, p: usize, beta: &DMatrix<f64>, lambda: f64) -> f64 {
    let k = beta.ncols();
    let (g, norms) = gradients(z, y, zc, p, beta);
    let active: Vec<usize> = (0..p).filter(|&j| norms[j] > 0.0).collect();
    let candidates = if active.is_empty() {
        vec![DVector::zeros(k), minimax_center(&g.iter().map(|v| -v).collect::<Vec<_>>())]
    } else {
        let pull = active.iter().map(|&j| &g[j] + beta.row(j).transpose() / norms[j] * lambda).sum::<DVector<f64>>();
        vec![-pull / active.len() as f64]
    };
    let worst = candidates.iter().map(|nu| violation(&g, &norms, beta, lambda, nu)).fold(f64::INFINITY, f64::min);
    worst / lambda.max(1.0)
}

/// Group lasso KKT violation without a constraint, scaled by `max(1, lambda)`.
pub fn group_lasso_kkt(z: &DMatrix<f64>, y: &DVector<f64>, zc: Option<&DMatrix<f64>>, p: usize, beta: &DMatrix<f64>, lambda: f64) -> f64 {
    let (g, norms) = gradients(z, y, zc, p, beta);
    violation(&g, &norms, beta, lambda, &DVector::zeros(beta.ncols())) / lambda.max(1.0)
}

/// Approximate center of the smallest ball containing the points.
fn minimax_center(points: &[DVector<f64>]) -> DVector<f64> {
    let mut c = points[0].clone();
    for it in 1..20_000 {
        let far = points
            .iter()
            .max_by(|a, b| (*a - &c).norm().total_cmp(&(*b - &c).norm()))
            .unwrap();
        c += (far - &c) / (it as f64 + 1.0);
    }
    c
}

/// Composition trajectories whose log values are `offset + slope * |t - kink|`
/// per component on the given grid, one subject per entry of `params`.
pub fn piecewise_linear_dataset(times: &[f64], params: &[Vec<(f64, f64, f64)>]) -> TrajectoryDataset {
    let p = params[0].len();
    let subjects = params
        .iter()
        .enumerate()
        .map(|(i, comps)| Subject {
            id: format!("s{i}"),
            observations: times
                .iter()
                .map(|&t| Observation {
                    time: t,
                    values: comps.iter().map(|&(a, b, c)| (a + b * (t - c).abs()).exp()).collect(),
                })
                .collect(),
        })
        .collect();
    TrajectoryDataset {
        subjects,
        response: DVector::zeros(params.len()),
        controls: DMatrix::zeros(params.len(), 0),
        domain: Domain::new(times[0], *times.last().unwrap()).unwrap(),
        component_names: (0..p).map(|j| format!("c{j}")).collect(),
        control_names: vec![],
    }
}

/// `int_a^b (offset + slope |t - kink|) dt`
pub fn kinked_integral(a: f64, b: f64, (offset, slope, kink): (f64, f64, f64)) -> f64 {
    let anti = |t: f64| offset * t + slope * 0.5 * (t - kink) * (t - kink).abs();
    anti(b) - anti(a)
}

/// Gram matrix by the composite trapezoid rule on `points` equally spaced
/// points.
pub fn dense_gram(spec: &BasisSpec, points: usize) -> DMatrix<f64> {
    let k = spec.k();
    let h = spec.domain.length() / (points - 1) as f64;
    let mut g = DMatrix::zeros(k, k);
    for i in 0..points {
        let t = if i == points - 1 { spec.domain.end } else { spec.domain.start + i as f64 * h };
        let w = if i == 0 || i == points - 1 { 0.5 } else { 1.0 };
        let phi = DVector::from_vec(spec.eval(t).unwrap());
        g += &phi * phi.transpose() * (w * h);
    }
    g
}
