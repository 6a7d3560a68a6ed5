//! Linearly constrained group lasso by a scaled augmented Lagrangian.
//!
//! The criterion is
//!
//! ```text
//! 1/(2n) ||y - b0 1 - Zc bc - Z b||^2 + lambda sum_j ||W_j b_j||   s.t. sum_j A_j b_j = c
//! ```
//!
//! with `A_j = I`, `c = 0` for the zero-sum log-contrast fit. The outer loop
//! alternates a primal step (the augmented Lagrangian minimized in all
//! coefficients) with a scaled dual step `alpha <- (alpha + r) / rho` while the
//! penalty grows as `mu <- rho mu`. The primal step is an accelerated proximal
//! gradient whose prox absorbs both the group penalty and the augmented
//! quadratic (see [`prox`]), so its conditioning does not degrade as `mu` grows.

mod apg;
pub mod kkt;
pub mod prox;
pub mod theory;

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::design::DesignMatrices;
use crate::error::{Error, Result};
use crate::linalg::{power_iteration, Profile};

pub use prox::prox_group;
pub use theory::theory_lambda_bound;

use prox::CouplingConstraint;

/// Groups at or below this fraction of the largest are candidates for
/// removal when a fit is finished.
const NEGLIGIBLE_GROUP: f64 = 1e-6;

/// Which estimator to fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Zero-sum constrained group lasso.
    Cgl,
    /// Group lasso ignoring the constraint.
    Gl,
    /// Group lasso on log-ratios against a reference component (0-based).
    Bgl(usize),
}

impl Variant {
    /// Parses `cgl`, `gl` or `bgl:R` with a 1-based reference `R`.
    pub fn parse(s: &str) -> Result<Variant> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "cgl" => Ok(Variant::Cgl),
            "gl" => Ok(Variant::Gl),
            _ => {
                let r = s
                    .strip_prefix("bgl:")
                    .ok_or_else(|| Error::invalid(format!("unknown variant {s:?}")))?;
                let r: usize = r
                    .parse()
                    .map_err(|_| Error::invalid(format!("invalid reference in {s:?}")))?;
                if r == 0 {
                    return Err(Error::invalid("reference component is 1-based"));
                }
                Ok(Variant::Bgl(r - 1))
            }
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::Cgl => write!(f, "cgl"),
            Variant::Gl => write!(f, "gl"),
            Variant::Bgl(r) => write!(f, "bgl:{}", r + 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Initial augmented Lagrangian penalty.
    pub mu0: f64,
    /// Penalty growth factor, `> 1`.
    pub rho: f64,
    /// Bound on the squared relative coefficient change.
    pub eps1: f64,
    /// Bound on the squared constraint residual.
    pub eps2: f64,
    pub max_outer: usize,
    /// Relative tolerance on the proximal-gradient step.
    pub inner_tol: f64,
    pub inner_max: usize,
    /// Cap on `mu`.
    pub mu_max: f64,
    /// Optional diagonal of `W_j` per group (all entries positive).
    pub weights: Option<Vec<Vec<f64>>>,
    /// Finish with a primal step at `mu_max` using the final multiplier.
    pub refine: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            mu0: 1.0,
            rho: 1.05,
            eps1: 1e-4,
            eps2: 1e-4,
            max_outer: 500,
            inner_tol: 1e-7,
            inner_max: 10_000,
            mu_max: 1e8,
            weights: None,
            refine: true,
        }
    }
}

impl SolverOptions {
    /// Tolerances tight enough for certification against reference solvers.
    pub fn precise() -> Self {
        SolverOptions {
            eps1: 1e-24,
            eps2: 1e-24,
            inner_tol: 1e-13,
            inner_max: 200_000,
            max_outer: 2_000,
            ..SolverOptions::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 1.0) {
            return Err(Error::invalid("rho must exceed 1"));
        }
        if !(self.mu0 > 0.0 && self.mu_max >= self.mu0) {
            return Err(Error::invalid("mu0 must be positive and at most mu_max"));
        }
        if !(self.eps1 > 0.0 && self.eps2 > 0.0 && self.inner_tol > 0.0) {
            return Err(Error::invalid("tolerances must be positive"));
        }
        if let Some(w) = &self.weights {
            if w.iter().flatten().any(|&x| !(x > 0.0 && x.is_finite())) {
                return Err(Error::invalid("weights must be positive"));
            }
        }
        Ok(())
    }
}

/// Linear constraint `sum_j A_j b_j = rhs` with `A_j` of size `m x k`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub blocks: Vec<DMatrix<f64>>,
    pub rhs: DVector<f64>,
}

impl LinearConstraint {
    /// `sum_j b_j = 0`
    pub fn zero_sum(groups: usize, k: usize) -> Self {
        LinearConstraint {
            blocks: vec![DMatrix::identity(k, k); groups],
            rhs: DVector::zeros(k),
        }
    }

    pub fn rows(&self) -> usize {
        self.rhs.len()
    }

    pub fn is_zero_sum(&self) -> bool {
        self.rhs.iter().all(|&b| b == 0.0)
            && self.blocks.iter().all(|a| {
                a.is_square() && a.nrows() == self.rhs.len() && *a == DMatrix::identity(a.nrows(), a.ncols())
            })
    }

    /// `sum_j A_j b_j - rhs` for a `groups x k` coefficient matrix.
    pub fn residual(&self, coefficients: &DMatrix<f64>) -> DVector<f64> {
        let mut r = -self.rhs.clone();
        for (j, a) in self.blocks.iter().enumerate() {
            r += a * coefficients.row(j).transpose();
        }
        r
    }
}

/// Fitted model and solver diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub variant: Variant,
    pub lambda: f64,
    pub k: usize,
    pub beta0: f64,
    pub beta_c: DVector<f64>,
    /// `p x k`, rows are the component coefficient vectors.
    pub coefficients: DMatrix<f64>,
    /// Penalized objective at the returned coefficients.
    pub objective: f64,
    /// `||sum_j A_j b_j - c||` at the last augmented Lagrangian iterate.
    pub constraint_residual: f64,
    /// Norm of the correction applied by the terminal projection.
    pub projection_shift: f64,
    pub kkt_residual: f64,
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub converged: bool,
    /// Unscaled multiplier `mu * alpha` (constrained fits only).
    pub multiplier: Option<DVector<f64>>,
}

impl FitResult {
    pub fn p(&self) -> usize {
        self.coefficients.nrows()
    }

    pub fn group_norms(&self) -> Vec<f64> {
        self.coefficients.row_iter().map(|r| r.norm()).collect()
    }

    /// Indices of non-zero coefficient rows.
    pub fn active_groups(&self) -> Vec<usize> {
        self.group_norms()
            .iter()
            .enumerate()
            .filter(|(_, &n)| n > 0.0)
            .map(|(j, _)| j)
            .collect()
    }

    /// `b0 + Zc bc + Z b` on a design with the full `p`-group layout.
    pub fn predict(&self, design: &DesignMatrices) -> Result<DVector<f64>> {
        if design.p != self.p() || design.k != self.k || design.pc() != self.beta_c.len() {
            return Err(Error::invalid("design does not match the fitted model"));
        }
        let mut yhat = design.functional_part(&self.coefficients);
        yhat.add_scalar_mut(self.beta0);
        if design.pc() > 0 {
            yhat += &design.zc * &self.beta_c;
        }
        Ok(yhat)
    }
}

/// Operator for the smooth loss in solver coordinates.
#[derive(Debug, Clone)]
pub(crate) enum LossOperator {
    /// Keeps `Z~` (`n x d`); used when `n` is small relative to `d`.
    Design { zt: DMatrix<f64>, yt: DVector<f64> },
    /// Keeps `Q = Z~^T Z~ / n` and `c = Z~^T y~ / n`.
    Gram { q: DMatrix<f64>, c: DVector<f64>, yy: f64 },
}

/// A group lasso problem with the unpenalized block profiled out, in the
/// coordinates `x_j = W_j b_j` used by the inner solver.
#[derive(Debug, Clone)]
pub struct GroupProblem {
    pub(crate) n: usize,
    pub(crate) groups: usize,
    pub(crate) k: usize,
    z: DMatrix<f64>,
    y: DVector<f64>,
    profile: Profile,
    xpinv_y: DVector<f64>,
    xpinv_z: DMatrix<f64>,
    pub(crate) op: LossOperator,
    weights: Option<Vec<Vec<f64>>>,
    pub(crate) constraint: Option<LinearConstraint>,
    pub(crate) coupling: Option<CouplingConstraint>,
    pub(crate) lipschitz: f64,
}

impl GroupProblem {
    /// Prepares the problem for `design` with an optional constraint.
    pub fn new(
        design: &DesignMatrices,
        constraint: Option<LinearConstraint>,
        weights: Option<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        let n = design.n();
        let k = design.k;
        let groups = design.p;
        if n == 0 {
            return Err(Error::invalid("empty design"));
        }
        if let Some(w) = &weights {
            if w.len() != groups || w.iter().any(|g| g.len() != k) {
                return Err(Error::invalid("weights must be one length-k diagonal per group"));
            }
        }
        if let Some(c) = &constraint {
            if c.blocks.len() != groups || c.blocks.iter().any(|a| a.ncols() != k || a.nrows() != c.rows()) {
                return Err(Error::invalid("constraint blocks do not match the design"));
            }
        }
        let x = design.unpenalized();
        let profile = Profile::new(&x)?;
        let xpinv_y = profile.coefficients(&design.y);
        let mut xpinv_z = DMatrix::zeros(x.ncols(), groups * k);
        for c in 0..groups * k {
            let col = design.z.column(c).into_owned();
            xpinv_z.set_column(c, &profile.coefficients(&col));
        }

        let mut zt = profile.residualize_matrix(&design.z);
        let zero_sum = constraint.as_ref().is_some_and(|c| c.is_zero_sum());
        if zero_sum && groups > 0 {
            // On {sum_j b_j = 0} adding a common block to every Z_j leaves Z b
            // unchanged; removing the block mean makes the solver blind to
            // per-subject scaling of the compositions.
            let mut mean = DMatrix::zeros(n, k);
            for j in 0..groups {
                mean += zt.columns(j * k, k);
            }
            mean /= groups as f64;
            for j in 0..groups {
                let mut blk = zt.columns_mut(j * k, k);
                blk -= &mean;
            }
        }
        if let Some(w) = &weights {
            for j in 0..groups {
                for l in 0..k {
                    let mut col = zt.column_mut(j * k + l);
                    col /= w[j][l];
                }
            }
        }
        let yt = profile.residualize(&design.y);

        let coupling = constraint.as_ref().map(|c| {
            let identity = c.blocks.iter().all(|a| {
                a.is_square() && *a == DMatrix::identity(a.nrows(), a.ncols())
            }) && weights.is_none();
            let blocks = if identity {
                None
            } else {
                Some(
                    c.blocks
                        .iter()
                        .enumerate()
                        .map(|(j, a)| {
                            let mut cj = a.clone();
                            if let Some(w) = &weights {
                                for l in 0..k {
                                    let mut col = cj.column_mut(l);
                                    col /= w[j][l];
                                }
                            }
                            cj
                        })
                        .collect(),
                )
            };
            CouplingConstraint {
                blocks,
                rhs: c.rhs.iter().copied().collect(),
            }
        });

        let d = groups * k;
        let lipschitz = power_iteration(&zt, 30).max(1e-12) * 1.1;
        let op = if d < 2 * n {
            let q = zt.transpose() * &zt / n as f64;
            let c = zt.transpose() * &yt / n as f64;
            let yy = yt.norm_squared() / n as f64;
            LossOperator::Gram { q, c, yy }
        } else {
            LossOperator::Design { zt, yt }
        };
        Ok(GroupProblem {
            n,
            groups,
            k,
            z: design.z.clone(),
            y: design.y.clone(),
            profile,
            xpinv_y,
            xpinv_z,
            op,
            weights,
            constraint,
            coupling,
            lipschitz,
        })
    }

    pub fn groups(&self) -> usize {
        self.groups
    }

    fn to_solver(&self, beta: &DMatrix<f64>) -> Vec<f64> {
        let mut x = vec![0.0; self.groups * self.k];
        for j in 0..self.groups {
            for l in 0..self.k {
                let w = self.weights.as_ref().map_or(1.0, |w| w[j][l]);
                x[j * self.k + l] = w * beta[(j, l)];
            }
        }
        x
    }

    fn from_solver(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.groups, self.k, |j, l| {
            let w = self.weights.as_ref().map_or(1.0, |w| w[j][l]);
            x[j * self.k + l] / w
        })
    }

    fn flatten(beta: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_iterator(beta.len(), beta.row_iter().flat_map(|r| r.iter().copied().collect::<Vec<_>>()))
    }

    /// Least-squares intercept and controls given `beta`.
    pub fn unpenalized_coefficients(&self, beta: &DMatrix<f64>) -> DVector<f64> {
        &self.xpinv_y - &self.xpinv_z * Self::flatten(beta)
    }

    /// Residual `y - X b0c - Z b` with `b0c` at its least-squares value.
    pub fn residual(&self, beta: &DMatrix<f64>) -> DVector<f64> {
        let zb = &self.z * Self::flatten(beta);
        self.profile.residualize(&(&self.y - zb))
    }

    fn penalty(&self, beta: &DMatrix<f64>) -> f64 {
        (0..self.groups)
            .map(|j| {
                (0..self.k)
                    .map(|l| {
                        let w = self.weights.as_ref().map_or(1.0, |w| w[j][l]);
                        (w * beta[(j, l)]).powi(2)
                    })
                    .sum::<f64>()
                    .sqrt()
            })
            .sum()
    }

    /// Penalized objective with the unpenalized block at its optimum.
    pub fn objective(&self, beta: &DMatrix<f64>, lambda: f64) -> f64 {
        let r = self.residual(beta);
        r.norm_squared() / (2.0 * self.n as f64) + lambda * self.penalty(beta)
    }

    /// Projects the active rows, and also tries dropping groups that are
    /// tiny relative to the largest one: near a kink their direction is
    /// noise. Keeps the candidate with the smaller KKT residual unless that
    /// raises the objective. Returns the coefficients and projection shift.
    fn finish(&self, beta: DMatrix<f64>, lambda: f64, multiplier: Option<&DVector<f64>>) -> (DMatrix<f64>, f64) {
        let mut base = beta.clone();
        let shift = self.project_active(&mut base);
        let norms: Vec<f64> = beta.row_iter().map(|r| r.norm()).collect();
        let cutoff = NEGLIGIBLE_GROUP * norms.iter().cloned().fold(1.0, f64::max);
        if !norms.iter().any(|&n| n > 0.0 && n <= cutoff) {
            return (base, shift);
        }
        let mut trimmed = beta;
        for (j, &n) in norms.iter().enumerate() {
            if n <= cutoff {
                trimmed.row_mut(j).fill(0.0);
            }
        }
        let trimmed_shift = self.project_active(&mut trimmed);
        let f_base = self.objective(&base, lambda);
        let f_trim = self.objective(&trimmed, lambda);
        let better = kkt::residual(self, &trimmed, lambda, multiplier) < kkt::residual(self, &base, lambda, multiplier);
        if better && f_trim <= f_base + 1e-12 * f_base.abs().max(1.0) {
            (trimmed, trimmed_shift)
        } else {
            (base, shift)
        }
    }

    /// Exact projection of the active rows onto the constraint set.
    /// Returns the norm of the correction.
    fn project_active(&self, beta: &mut DMatrix<f64>) -> f64 {
        let Some(cons) = &self.constraint else {
            return 0.0;
        };
        let active: Vec<usize> = (0..self.groups).filter(|&j| beta.row(j).norm() > 0.0).collect();
        if active.is_empty() {
            return 0.0;
        }
        let k = self.k;
        if cons.is_zero_sum() {
            let mut sum = DVector::zeros(k);
            for &j in &active {
                sum += beta.row(j).transpose();
            }
            let shift = sum / active.len() as f64;
            for &j in &active {
                let mut row = beta.row_mut(j);
                row -= shift.transpose();
            }
            // close the constraint exactly on the last active row
            let (&last, rest) = active.split_last().expect("non-empty");
            let mut closing = DVector::zeros(k);
            for &j in rest {
                closing -= beta.row(j).transpose();
            }
            if !rest.is_empty() {
                beta.set_row(last, &closing.transpose());
            }
            return shift.norm();
        }
        let m = cons.rows();
        let mut a = DMatrix::zeros(m, active.len() * k);
        for (c, &j) in active.iter().enumerate() {
            a.columns_mut(c * k, k).copy_from(&cons.blocks[j]);
        }
        let r = cons.residual(beta);
        let aat = &a * a.transpose();
        let svd = aat.svd(true, true);
        let Ok(y) = svd.solve(&r, 1e-14) else {
            return 0.0;
        };
        let delta = a.transpose() * y;
        for (c, &j) in active.iter().enumerate() {
            for l in 0..k {
                beta[(j, l)] -= delta[c * k + l];
            }
        }
        delta.norm()
    }
}

/// Result of one primal step.
#[derive(Debug, Clone)]
pub struct PrimalStep {
    pub beta0c: DVector<f64>,
    pub coefficients: DMatrix<f64>,
    pub iters: usize,
    pub converged: bool,
}

/// Minimizes the augmented Lagrangian
/// `1/(2n)||y - X b0c - Z b||^2 + mu/2 ||sum_j A_j b_j - c + alpha||^2 + lambda sum_j ||W_j b_j||`
/// over `(b0c, b)`, starting from `warm`. Without a constraint (or `mu = 0`)
/// this is the plain group lasso.
pub fn primal_step(
    problem: &GroupProblem,
    alpha: &[f64],
    mu: f64,
    lambda: f64,
    warm: &DMatrix<f64>,
    options: &SolverOptions,
) -> PrimalStep {
    let mut state = apg::PrimalState {
        x: problem.to_solver(warm),
        multiplier: Vec::new(),
    };
    let (iters, converged) = apg::solve(problem, lambda, mu, alpha, &mut state, options.inner_tol, options.inner_max);
    let coefficients = problem.from_solver(&state.x);
    PrimalStep {
        beta0c: problem.unpenalized_coefficients(&coefficients),
        coefficients,
        iters,
        converged,
    }
}

/// Solver state carried between fits on the same prepared problem.
#[derive(Debug, Clone)]
struct Warm {
    beta: DMatrix<f64>,
    multiplier: Option<DVector<f64>>,
}

/// Fits the prepared problem at one `lambda`. Returns coefficients in the
/// problem's own groups.
fn solve_prepared(
    problem: &GroupProblem,
    lambda: f64,
    options: &SolverOptions,
    warm: Option<Warm>,
) -> Result<(FitCore, Option<DVector<f64>>)> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid("lambda must be a non-negative finite number"));
    }
    options.validate()?;
    let (g, k) = (problem.groups, problem.k);
    let warm = warm.unwrap_or(Warm {
        beta: DMatrix::zeros(g, k),
        multiplier: None,
    });
    let mut state = apg::PrimalState {
        x: problem.to_solver(&warm.beta),
        multiplier: Vec::new(),
    };

    let Some(coupling) = &problem.coupling else {
        let (iters, converged) = apg::solve(problem, lambda, 0.0, &[], &mut state, options.inner_tol, options.inner_max);
        let (beta, _) = problem.finish(problem.from_solver(&state.x), lambda, None);
        return Ok((
            FitCore {
                beta,
                outer_iters: 0,
                inner_iters: iters,
                converged,
                constraint_residual: 0.0,
                projection_shift: 0.0,
            },
            None,
        ));
    };

    let m = coupling.rows();
    let mut mu = options.mu0;
    let mut alpha: Vec<f64> = match &warm.multiplier {
        Some(u) if u.len() == m => u.iter().map(|u| u / mu).collect(),
        _ => vec![0.0; m],
    };
    let mut beta_prev = problem.from_solver(&state.x);
    let mut b0c_prev = problem.unpenalized_coefficients(&beta_prev);
    let mut inner_total = 0;
    let mut inner_ok = true;
    let mut converged = false;
    let mut outer = 0;
    let mut residual = coupling.residual(&state.x, k);
    while outer < options.max_outer {
        outer += 1;
        let (iters, ok) = apg::solve(problem, lambda, mu, &alpha, &mut state, options.inner_tol, options.inner_max);
        inner_total += iters;
        inner_ok &= ok;
        residual = coupling.residual(&state.x, k);
        let beta = problem.from_solver(&state.x);
        let b0c = problem.unpenalized_coefficients(&beta);
        let change = (&b0c - &b0c_prev).norm_squared() + (&beta - &beta_prev).norm_squared();
        let scale = b0c_prev.norm_squared() + beta_prev.norm_squared();
        let r2: f64 = residual.iter().map(|r| r * r).sum();

        // scaled dual step; when mu is capped the ratio is no longer rho and
        // the unscaled multiplier mu * alpha must stay continuous
        let mu_next = (options.rho * mu).min(options.mu_max);
        for (a, r) in alpha.iter_mut().zip(&residual) {
            *a = (*a + r) * mu / mu_next;
        }
        mu = mu_next;
        beta_prev = beta;
        b0c_prev = b0c;
        if change <= options.eps1 * scale && r2 <= options.eps2 {
            converged = true;
            break;
        }
    }
    let mut multiplier = DVector::from_iterator(m, alpha.iter().map(|a| a * mu));
    let mut beta = beta_prev;
    if options.refine {
        // one more primal step at the capped penalty with the current
        // multiplier estimate
        let mu_final = options.mu_max;
        let alpha_final: Vec<f64> = multiplier.iter().map(|u| u / mu_final).collect();
        let (iters, ok) = apg::solve(problem, lambda, mu_final, &alpha_final, &mut state, options.inner_tol, options.inner_max);
        inner_total += iters;
        inner_ok &= ok;
        residual = coupling.residual(&state.x, k);
        for (u, (r, a)) in multiplier.iter_mut().zip(residual.iter().zip(&alpha_final)) {
            *u = mu_final * (a + r);
        }
        beta = problem.from_solver(&state.x);
    }
    let constraint_residual = residual.iter().map(|r| r * r).sum::<f64>().sqrt();
    let (beta, projection_shift) = problem.finish(beta, lambda, Some(&multiplier));
    Ok((
        FitCore {
            beta,
            outer_iters: outer,
            inner_iters: inner_total,
            converged: converged && inner_ok,
            constraint_residual,
            projection_shift,
        },
        Some(multiplier),
    ))
}

struct FitCore {
    beta: DMatrix<f64>,
    outer_iters: usize,
    inner_iters: usize,
    converged: bool,
    constraint_residual: f64,
    projection_shift: f64,
}

/// A design prepared once for repeated fits of one variant.
#[derive(Debug, Clone)]
pub struct PreparedFit {
    variant: Variant,
    p: usize,
    k: usize,
    problem: GroupProblem,
}

impl PreparedFit {
    pub fn new(design: &DesignMatrices, variant: Variant, options: &SolverOptions) -> Result<Self> {
        options.validate()?;
        let (p, k) = (design.p, design.k);
        let problem = match variant {
            Variant::Cgl => {
                if p < 2 {
                    return Err(Error::invalid("constrained fit needs at least 2 components"));
                }
                GroupProblem::new(design, Some(LinearConstraint::zero_sum(p, k)), options.weights.clone())?
            }
            Variant::Gl => GroupProblem::new(design, None, options.weights.clone())?,
            Variant::Bgl(r) => {
                let reduced = design.reference(r)?;
                let weights = options
                    .weights
                    .as_ref()
                    .map(|w| w.iter().enumerate().filter(|(j, _)| *j != r).map(|(_, w)| w.clone()).collect());
                GroupProblem::new(&reduced, None, weights)?
            }
        };
        Ok(PreparedFit { variant, p, k, problem })
    }

    /// Prepared fit with a general constraint (Cgl semantics, custom `A_j`, `c`).
    pub fn with_constraint(design: &DesignMatrices, constraint: LinearConstraint, options: &SolverOptions) -> Result<Self> {
        options.validate()?;
        Ok(PreparedFit {
            variant: Variant::Cgl,
            p: design.p,
            k: design.k,
            problem: GroupProblem::new(design, Some(constraint), options.weights.clone())?,
        })
    }

    pub fn problem(&self) -> &GroupProblem {
        &self.problem
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn fit(&self, lambda: f64, options: &SolverOptions, warm: Option<&FitResult>) -> Result<FitResult> {
        let warm = warm.and_then(|w| {
            if w.coefficients.shape() != (self.p, self.k) {
                return None;
            }
            let beta = match self.variant {
                Variant::Bgl(r) => w.coefficients.clone().remove_row(r),
                _ => w.coefficients.clone(),
            };
            Some(Warm {
                beta,
                multiplier: w.multiplier.clone(),
            })
        });
        let (core, multiplier) = solve_prepared(&self.problem, lambda, options, warm)?;
        let b0c = self.problem.unpenalized_coefficients(&core.beta);
        let objective = self.problem.objective(&core.beta, lambda);
        let kkt_residual = kkt::residual(&self.problem, &core.beta, lambda, multiplier.as_ref());
        let coefficients = match self.variant {
            Variant::Bgl(r) => {
                let reference = -core.beta.row_sum();
                core.beta.insert_row(r, 0.0).tap_row(r, &reference)
            }
            _ => core.beta,
        };
        Ok(FitResult {
            variant: self.variant,
            lambda,
            k: self.k,
            beta0: b0c[0],
            beta_c: b0c.rows(1, b0c.len() - 1).into_owned(),
            coefficients,
            objective,
            constraint_residual: core.constraint_residual,
            projection_shift: core.projection_shift,
            kkt_residual,
            outer_iters: core.outer_iters,
            inner_iters: core.inner_iters,
            converged: core.converged,
            multiplier,
        })
    }

    /// Warm-started fits along a strictly decreasing `lambdas`.
    pub fn fit_path(&self, lambdas: &[f64], options: &SolverOptions) -> Result<Vec<FitResult>> {
        check_decreasing(lambdas)?;
        let mut out: Vec<FitResult> = Vec::with_capacity(lambdas.len());
        for &lambda in lambdas {
            let fit = self.fit(lambda, options, out.last())?;
            out.push(fit);
        }
        Ok(out)
    }
}

trait TapRow {
    fn tap_row(self, r: usize, row: &nalgebra::RowDVector<f64>) -> Self;
}

impl TapRow for DMatrix<f64> {
    fn tap_row(mut self, r: usize, row: &nalgebra::RowDVector<f64>) -> Self {
        self.set_row(r, row);
        self
    }
}

fn check_decreasing(lambdas: &[f64]) -> Result<()> {
    if lambdas.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::invalid("lambda path must be strictly decreasing"));
    }
    Ok(())
}

/// Zero-sum constrained group lasso.
pub fn fit_cgl(
    design: &DesignMatrices,
    lambda: f64,
    options: &SolverOptions,
    warm: Option<&FitResult>,
) -> Result<FitResult> {
    PreparedFit::new(design, Variant::Cgl, options)?.fit(lambda, options, warm)
}

/// Group lasso with the zero-sum constraint dropped.
pub fn fit_gl(design: &DesignMatrices, lambda: f64, options: &SolverOptions) -> Result<FitResult> {
    PreparedFit::new(design, Variant::Gl, options)?.fit(lambda, options, None)
}

/// Group lasso on the reference-level design (`r` 0-based). The returned
/// coefficients are in symmetric form: row `r` is minus the sum of the others.
pub fn fit_bgl(design: &DesignMatrices, lambda: f64, r: usize, options: &SolverOptions) -> Result<FitResult> {
    PreparedFit::new(design, Variant::Bgl(r), options)?.fit(lambda, options, None)
}

pub fn fit(
    design: &DesignMatrices,
    variant: Variant,
    lambda: f64,
    options: &SolverOptions,
    warm: Option<&FitResult>,
) -> Result<FitResult> {
    PreparedFit::new(design, variant, options)?.fit(lambda, options, warm)
}

pub fn fit_path(
    design: &DesignMatrices,
    variant: Variant,
    lambdas: &[f64],
    options: &SolverOptions,
) -> Result<Vec<FitResult>> {
    check_decreasing(lambdas)?;
    PreparedFit::new(design, variant, options)?.fit_path(lambdas, options)
}

/// `max_j ||Z_j^T r0|| / n` with `r0` the residual of `y` on intercept and
/// controls: the smallest penalty at which the unconstrained fit is zero.
pub fn lambda_max(design: &DesignMatrices) -> Result<f64> {
    let profile = Profile::new(&design.unpenalized())?;
    let r0 = profile.residualize(&design.y);
    let n = design.n() as f64;
    Ok((0..design.p)
        .map(|j| (design.block(j).transpose() * &r0).norm() / n)
        .fold(0.0, f64::max))
}

/// Geometric grid from `lambda_max` down to `min_ratio * lambda_max`.
pub fn lambda_grid(lambda_max: f64, count: usize, min_ratio: f64) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![lambda_max],
        _ => (0..count)
            .map(|i| lambda_max * min_ratio.powf(i as f64 / (count - 1) as f64))
            .collect(),
    }
}

#[cfg(test)]
mod tests;
