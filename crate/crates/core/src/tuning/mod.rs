//! Choice of basis size and penalty, component selection and bootstrap
//! stability.

mod stability;

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{curve_energy, BasisGram, BasisSpec};
use crate::composition::TrajectoryDataset;
use crate::design::{build_design, DesignMatrices, IntegrationRule};
use crate::error::{Error, Result};
use crate::solver::{lambda_grid, lambda_max, FitResult, PreparedFit, SolverOptions, Variant};

pub use stability::{bootstrap_stability, resample_indices, stability_from_resamples, StabilityReport};

/// Splitmix-style mixing of a base seed with a stream index.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningGrid {
    pub k_values: Vec<usize>,
    /// Spline degree used for every `k`.
    pub degree: usize,
    pub lambda_count: usize,
    pub lambda_min_ratio: f64,
    pub folds: usize,
    pub fold_seed: u64,
    pub rule: IntegrationRule,
}

impl Default for TuningGrid {
    fn default() -> Self {
        TuningGrid {
            k_values: vec![4, 5, 6],
            degree: 3,
            lambda_count: 50,
            lambda_min_ratio: 1e-3,
            folds: 10,
            fold_seed: 0,
            rule: IntegrationRule::default(),
        }
    }
}

impl TuningGrid {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.k_values.is_empty() {
            return Err(Error::invalid("k grid is empty"));
        }
        if self.lambda_count == 0 {
            return Err(Error::invalid("lambda count must be positive"));
        }
        if !(self.lambda_min_ratio > 0.0 && self.lambda_min_ratio < 1.0) {
            return Err(Error::invalid("lambda min ratio must lie in (0, 1)"));
        }
        if self.folds < 2 || self.folds > n {
            return Err(Error::invalid(format!("need 2 <= folds <= n, got {} folds for n = {n}", self.folds)));
        }
        Ok(())
    }

    pub fn spec(&self, k: usize, dataset: &TrajectoryDataset) -> Result<BasisSpec> {
        BasisSpec::uniform(k, self.degree.min(k.saturating_sub(1)), dataset.domain)
    }
}

/// Fold label in `0..folds` for each of `n` subjects; a deterministic
/// function of `(seed, n, folds)` with fold sizes differing by at most one.
pub fn fold_assignment(seed: u64, n: usize, folds: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(derive_seed(seed, n as u64), folds as u64));
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut labels = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        labels[i] = pos % folds.max(1);
    }
    labels
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub k: usize,
    pub lambda: f64,
    /// Mean over folds of the held-out mean squared error.
    pub error: f64,
    /// Standard error of the fold errors.
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningOutcome {
    pub best_k: usize,
    pub best_lambda: f64,
    pub table: Vec<CvRow>,
}

impl TuningOutcome {
    fn from_table(table: Vec<CvRow>) -> Result<Self> {
        let best = best_row(&table).ok_or_else(|| Error::Numerical("no finite tuning score".into()))?;
        Ok(TuningOutcome {
            best_k: best.k,
            best_lambda: best.lambda,
            table,
        })
    }

    pub fn to_csv(&self, score_name: &str) -> String {
        let mut out = format!("k,lambda,{score_name},se\n");
        for r in &self.table {
            out.push_str(&format!("{},{:e},{:e},{:e}\n", r.k, r.lambda, r.error, r.se));
        }
        out
    }
}

/// Row with the smallest finite score; ties go to the larger `lambda`, then
/// the smaller `k`.
pub fn best_row(table: &[CvRow]) -> Option<CvRow> {
    table
        .iter()
        .filter(|r| r.error.is_finite())
        .copied()
        .min_by(|a, b| {
            a.error
                .total_cmp(&b.error)
                .then(b.lambda.total_cmp(&a.lambda))
                .then(a.k.cmp(&b.k))
        })
}

/// Mean and standard error of held-out MSE at every `lambda` of the path,
/// with folds given by `labels`.
pub fn cv_on_design(
    design: &DesignMatrices,
    lambdas: &[f64],
    labels: &[usize],
    variant: Variant,
    options: &SolverOptions,
) -> Result<Vec<(f64, f64)>> {
    let folds = labels.iter().copied().max().map_or(0, |m| m + 1);
    if labels.len() != design.n() || folds < 2 {
        return Err(Error::invalid("fold labels must cover every subject with at least 2 folds"));
    }
    let per_fold: Vec<Result<Vec<f64>>> = (0..folds)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] != f).collect();
            let test: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == f).collect();
            if test.is_empty() {
                return Ok(vec![f64::NAN; lambdas.len()]);
            }
            let train_design = design.select_rows(&train);
            let test_design = design.select_rows(&test);
            let fits = PreparedFit::new(&train_design, variant, options)?.fit_path(lambdas, options)?;
            fits.iter()
                .map(|fit| {
                    let yhat = fit.predict(&test_design)?;
                    let mse = (&test_design.y - yhat).norm_squared() / test.len() as f64;
                    if !mse.is_finite() {
                        return Err(Error::Numerical("non-finite held-out error".into()));
                    }
                    Ok(mse)
                })
                .collect()
        })
        .collect();
    let per_fold: Vec<Vec<f64>> = per_fold
        .into_iter()
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|e| e.iter().all(|v| !v.is_nan()))
        .collect();
    let m = per_fold.len() as f64;
    Ok((0..lambdas.len())
        .map(|l| {
            let mean = per_fold.iter().map(|e| e[l]).sum::<f64>() / m;
            let var = per_fold.iter().map(|e| (e[l] - mean).powi(2)).sum::<f64>() / (m - 1.0).max(1.0);
            (mean, (var / m).sqrt())
        })
        .collect())
}

/// Geometric path from the design's `lambda_max`.
pub fn design_lambdas(design: &DesignMatrices, count: usize, min_ratio: f64) -> Result<Vec<f64>> {
    let lmax = lambda_max(design)?;
    if !(lmax > 0.0) {
        return Err(Error::Numerical("lambda_max is zero; the response carries no signal".into()));
    }
    Ok(lambda_grid(lmax, count, min_ratio))
}

/// K-fold cross-validation over the `(k, lambda)` grid; subjects are held
/// out whole.
pub fn cross_validate(
    dataset: &TrajectoryDataset,
    grid: &TuningGrid,
    variant: Variant,
    options: &SolverOptions,
) -> Result<TuningOutcome> {
    grid.validate(dataset.n())?;
    let labels = fold_assignment(grid.fold_seed, dataset.n(), grid.folds);
    let mut table = Vec::new();
    for &k in &grid.k_values {
        let design = build_design(dataset, &grid.spec(k, dataset)?, grid.rule)?;
        let lambdas = design_lambdas(&design, grid.lambda_count, grid.lambda_min_ratio)?;
        let scores = cv_on_design(&design, &lambdas, &labels, variant, options)?;
        for (&lambda, &(error, se)) in lambdas.iter().zip(&scores) {
            table.push(CvRow { k, lambda, error, se });
        }
    }
    TuningOutcome::from_table(table)
}

/// `log s2 + (s - 1) k log(max(p k + 1 + p_c, n)) log(log n) / n` with
/// `s2` the in-sample mean squared residual and `s` the number of non-zero
/// coefficient curves.
pub fn gic(fit: &FitResult, design: &DesignMatrices) -> Result<f64> {
    let n = design.n();
    if n < 3 {
        return Err(Error::invalid("GIC needs at least 3 subjects"));
    }
    let yhat = fit.predict(design)?;
    let s2 = (&design.y - yhat).norm_squared() / n as f64;
    if !(s2 > 0.0) {
        return Err(Error::Numerical("zero residual variance; the fit is saturated".into()));
    }
    let s = fit.active_groups().len();
    Ok(gic_value(s2, s, design.p, fit.k, design.pc(), n))
}

pub fn gic_value(s2: f64, s: usize, p: usize, k: usize, pc: usize, n: usize) -> f64 {
    let nf = n as f64;
    let dim = ((p * k + 1 + pc) as f64).max(nf);
    s2.ln() + (s as f64 - 1.0) * k as f64 * dim.ln() * nf.ln().ln() / nf
}

/// Full-data fits over the grid, scored by [`gic`].
pub fn gic_select(
    dataset: &TrajectoryDataset,
    grid: &TuningGrid,
    variant: Variant,
    options: &SolverOptions,
) -> Result<TuningOutcome> {
    if grid.k_values.is_empty() || grid.lambda_count == 0 {
        return Err(Error::invalid("empty tuning grid"));
    }
    let rows: Vec<Result<Vec<CvRow>>> = grid
        .k_values
        .par_iter()
        .map(|&k| {
            let design = build_design(dataset, &grid.spec(k, dataset)?, grid.rule)?;
            let lambdas = design_lambdas(&design, grid.lambda_count, grid.lambda_min_ratio)?;
            let fits = PreparedFit::new(&design, variant, options)?.fit_path(&lambdas, options)?;
            Ok(fits
                .iter()
                .map(|fit| CvRow {
                    k,
                    lambda: fit.lambda,
                    error: gic(fit, &design).unwrap_or(f64::INFINITY),
                    se: 0.0,
                })
                .collect())
        })
        .collect();
    let table = rows.into_iter().collect::<Result<Vec<_>>>()?.concat();
    TuningOutcome::from_table(table)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    /// Selected component indices (0-based, increasing).
    pub selected: Vec<usize>,
    pub energies: Vec<f64>,
    pub relative_energies: Vec<f64>,
    /// Every curve is identically zero.
    pub all_zero: bool,
}

/// Components whose share of the total curve energy is at least `1/p`.
pub fn select_components(fit: &FitResult, gram: &BasisGram) -> Result<SelectionResult> {
    let energies = curve_energy(&fit.coefficients, gram)?;
    Ok(select_by_energy(energies.as_slice()))
}

pub fn select_by_energy(energies: &[f64]) -> SelectionResult {
    let p = energies.len();
    let total: f64 = energies.iter().sum();
    if !(total > 0.0) {
        return SelectionResult {
            selected: vec![],
            energies: energies.to_vec(),
            relative_energies: vec![0.0; p],
            all_zero: true,
        };
    }
    let relative: Vec<f64> = energies.iter().map(|e| e / total).collect();
    // compare e_j * p >= total to keep the equal-share case exact
    let selected = (0..p).filter(|&j| energies[j] * p as f64 >= total).collect();
    SelectionResult {
        selected,
        energies: energies.to_vec(),
        relative_energies: relative,
        all_zero: false,
    }
}

/// `{j : ||b_j|| > 8 lambda s / kappa^2}`.
pub fn corollary_threshold_select(fit: &FitResult, lambda: f64, s_star: usize, kappa: f64) -> Vec<usize> {
    let threshold = 8.0 * lambda * s_star as f64 / (kappa * kappa);
    fit.group_norms()
        .iter()
        .enumerate()
        .filter(|(_, &g)| g > threshold)
        .map(|(j, _)| j)
        .collect()
}

/// Fit on the full design at `lambda`, warm-started down the grid from
/// `lambda_max` so the result matches the tuning path.
pub fn fit_on_path(
    design: &DesignMatrices,
    variant: Variant,
    lambda: f64,
    count: usize,
    min_ratio: f64,
    options: &SolverOptions,
) -> Result<FitResult> {
    let mut lambdas: Vec<f64> = design_lambdas(design, count, min_ratio)?
        .into_iter()
        .filter(|&l| l > lambda * (1.0 + 1e-12))
        .collect();
    lambdas.push(lambda);
    let mut fits = PreparedFit::new(design, variant, options)?.fit_path(&lambdas, options)?;
    Ok(fits.pop().expect("non-empty path"))
}

/// Tunes on `dataset` with the chosen criterion and refits at the optimum.
pub fn tune_and_fit(
    dataset: &TrajectoryDataset,
    grid: &TuningGrid,
    variant: Variant,
    criterion: Criterion,
    options: &SolverOptions,
) -> Result<TunedFit> {
    let outcome = match criterion {
        Criterion::Cv => cross_validate(dataset, grid, variant, options)?,
        Criterion::Gic => gic_select(dataset, grid, variant, options)?,
    };
    let spec = grid.spec(outcome.best_k, dataset)?;
    let design = build_design(dataset, &spec, grid.rule)?;
    let fit = fit_on_path(
        &design,
        variant,
        outcome.best_lambda,
        grid.lambda_count,
        grid.lambda_min_ratio,
        options,
    )?;
    Ok(TunedFit { outcome, spec, fit })
}

#[derive(Debug, Clone)]
pub struct TunedFit {
    pub outcome: TuningOutcome,
    pub spec: BasisSpec,
    pub fit: FitResult,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Criterion {
    Cv,
    Gic,
}

impl Criterion {
    pub fn parse(s: &str) -> Result<Criterion> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cv" => Ok(Criterion::Cv),
            "gic" => Ok(Criterion::Gic),
            other => Err(Error::invalid(format!("unknown criterion {other:?}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Criterion::Cv => "cv",
            Criterion::Gic => "gic",
        }
    }
}

/// Standard error helper shared with the simulation summaries.
pub(crate) fn mean_se(values: &[f64]) -> (f64, f64) {
    let m = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / m;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

/// Selection indicator as a 0/1 vector of length `p`.
pub(crate) fn indicator(selected: &[usize], p: usize) -> DVector<f64> {
    let mut v = DVector::zeros(p);
    for &j in selected {
        v[j] = 1.0;
    }
    v
}
