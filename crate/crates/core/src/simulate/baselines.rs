//! Cross-sectional baselines: per-subject time average of the log-composition,
//! and the single best observation time.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::BasisSpec;
use crate::composition::TrajectoryDataset;
use crate::design::DesignMatrices;
use crate::error::{Error, Result};
use crate::solver::{FitResult, SolverOptions, Variant};
use crate::tuning::{best_row, cv_on_design, design_lambdas, fit_on_path, fold_assignment, CvRow, TuningGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaselineKind {
    Average,
    Snapshot,
}

/// A constrained scalar-coefficient fit on one summary of each trajectory.
#[derive(Debug, Clone)]
pub struct BaselineFit {
    pub kind: BaselineKind,
    /// Observation time used by the snapshot baseline.
    pub time: Option<f64>,
    /// `p x 1` coefficients.
    pub fit: FitResult,
}

impl BaselineFit {
    pub fn features(&self, dataset: &TrajectoryDataset) -> Result<DMatrix<f64>> {
        match self.kind {
            BaselineKind::Average => average_features(dataset),
            BaselineKind::Snapshot => snapshot_features(dataset, self.time.expect("snapshot time")),
        }
    }

    pub fn predict(&self, dataset: &TrajectoryDataset) -> Result<DVector<f64>> {
        let design = scalar_design(dataset, self.features(dataset)?)?;
        self.fit.predict(&design)
    }

    /// Absolute coefficient per component, the energy of a constant curve up
    /// to a common factor.
    pub fn energies(&self) -> Vec<f64> {
        self.fit.coefficients.column(0).iter().map(|b| b.abs()).collect()
    }
}

fn log_rows(dataset: &TrajectoryDataset) -> Result<Vec<crate::composition::LogTrajectory>> {
    dataset.validate()?;
    dataset.log_transform()
}

/// `n x p` mean log-composition over each subject's observations.
pub fn average_features(dataset: &TrajectoryDataset) -> Result<DMatrix<f64>> {
    let logs = log_rows(dataset)?;
    let mut out = DMatrix::zeros(dataset.n(), dataset.p());
    for (i, l) in logs.iter().enumerate() {
        let m = l.values.nrows() as f64;
        for j in 0..dataset.p() {
            out[(i, j)] = l.values.column(j).sum() / m;
        }
    }
    Ok(out)
}

/// `n x p` log-composition at each subject's observation nearest to `t`
/// (the earlier one on ties).
pub fn snapshot_features(dataset: &TrajectoryDataset, t: f64) -> Result<DMatrix<f64>> {
    let logs = log_rows(dataset)?;
    let mut out = DMatrix::zeros(dataset.n(), dataset.p());
    for (i, l) in logs.iter().enumerate() {
        let v = l
            .times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
            .map(|(v, _)| v)
            .ok_or_else(|| Error::invalid("subject without observations"))?;
        out.set_row(i, &l.values.row(v));
    }
    Ok(out)
}

fn scalar_design(dataset: &TrajectoryDataset, features: DMatrix<f64>) -> Result<DesignMatrices> {
    let spec = BasisSpec::uniform(1, 0, dataset.domain)?;
    DesignMatrices::from_parts(features, dataset.controls.clone(), dataset.response.clone(), dataset.p(), spec)
}

fn tune_scalar(
    design: &DesignMatrices,
    grid: &TuningGrid,
    options: &SolverOptions,
) -> Result<(CvRow, Vec<f64>)> {
    let labels = fold_assignment(grid.fold_seed, design.n(), grid.folds);
    let lambdas = design_lambdas(design, grid.lambda_count, grid.lambda_min_ratio)?;
    let scores = cv_on_design(design, &lambdas, &labels, Variant::Cgl, options)?;
    let rows: Vec<CvRow> = lambdas
        .iter()
        .zip(&scores)
        .map(|(&lambda, &(error, se))| CvRow { k: 1, lambda, error, se })
        .collect();
    let best = best_row(&rows).ok_or_else(|| Error::Numerical("no finite CV error".into()))?;
    Ok((best, lambdas))
}

/// Constrained fit on time-averaged log-compositions, tuned by CV.
pub fn fit_average_baseline(dataset: &TrajectoryDataset, grid: &TuningGrid, options: &SolverOptions) -> Result<BaselineFit> {
    grid.validate(dataset.n())?;
    let design = scalar_design(dataset, average_features(dataset)?)?;
    let (best, _) = tune_scalar(&design, grid, options)?;
    let fit = fit_on_path(&design, Variant::Cgl, best.lambda, grid.lambda_count, grid.lambda_min_ratio, options)?;
    Ok(BaselineFit {
        kind: BaselineKind::Average,
        time: None,
        fit,
    })
}

/// Constrained fit at the observation time with the smallest CV error among
/// the distinct times in the data.
pub fn fit_snapshot_baseline(dataset: &TrajectoryDataset, grid: &TuningGrid, options: &SolverOptions) -> Result<BaselineFit> {
    grid.validate(dataset.n())?;
    let mut times: Vec<f64> = dataset.subjects.iter().flat_map(|s| s.times()).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut best: Option<(f64, f64, f64, DesignMatrices)> = None;
    for &t in &times {
        let design = scalar_design(dataset, snapshot_features(dataset, t)?)?;
        let Ok((row, _)) = tune_scalar(&design, grid, options) else {
            continue;
        };
        if best.as_ref().is_none_or(|b| row.error < b.0) {
            best = Some((row.error, row.lambda, t, design));
        }
    }
    let (_, lambda, t, design) = best.ok_or_else(|| Error::Numerical("no usable snapshot time".into()))?;
    let fit = fit_on_path(&design, Variant::Cgl, lambda, grid.lambda_count, grid.lambda_min_ratio, options)?;
    Ok(BaselineFit {
        kind: BaselineKind::Snapshot,
        time: Some(t),
        fit,
    })
}
