use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{derive_seed, indicator, select_components, tune_and_fit, Criterion, TuningGrid};
use crate::composition::TrajectoryDataset;
use crate::error::{Error, Result};
use crate::solver::{SolverOptions, Variant};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub component_names: Vec<String>,
    /// Fraction of successful replicates selecting each component.
    pub selection_proportion: Vec<f64>,
    pub control_names: Vec<String>,
    /// `(positive, negative)` fraction per control coefficient.
    pub control_sign_proportions: Vec<(f64, f64)>,
    pub replicates: usize,
    pub failures: usize,
}

impl StabilityReport {
    /// Component indices ordered by decreasing selection proportion (ties by index).
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.selection_proportion.len()).collect();
        idx.sort_by(|&a, &b| self.selection_proportion[b].total_cmp(&self.selection_proportion[a]).then(a.cmp(&b)));
        idx
    }
}

/// `n` subject indices drawn with replacement.
pub fn resample_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Runs cross-validated tuning, refit and selection on each resample.
pub fn stability_from_resamples(
    dataset: &TrajectoryDataset,
    grid: &TuningGrid,
    resamples: &[Vec<usize>],
    variant: Variant,
    options: &SolverOptions,
) -> Result<StabilityReport> {
    if resamples.is_empty() {
        return Err(Error::invalid("need at least one bootstrap replicate"));
    }
    let (p, pc) = (dataset.p(), dataset.pc());
    let outcomes: Vec<Option<(Vec<usize>, Vec<f64>)>> = resamples
        .par_iter()
        .map(|idx| {
            let boot = dataset.select_subjects(idx);
            let tuned = tune_and_fit(&boot, grid, variant, Criterion::Cv, options).ok()?;
            let gram = tuned.spec.gram().ok()?;
            let sel = select_components(&tuned.fit, &gram).ok()?;
            Some((sel.selected, tuned.fit.beta_c.iter().copied().collect()))
        })
        .collect();
    let mut counts = nalgebra::DVector::zeros(p);
    let mut signs = vec![(0usize, 0usize); pc];
    let mut ok = 0usize;
    for (selected, controls) in outcomes.iter().flatten() {
        ok += 1;
        counts += indicator(selected, p);
        for (s, &c) in signs.iter_mut().zip(controls) {
            if c > 0.0 {
                s.0 += 1;
            } else if c < 0.0 {
                s.1 += 1;
            }
        }
    }
    let denom = ok.max(1) as f64;
    Ok(StabilityReport {
        component_names: dataset.component_names.clone(),
        selection_proportion: counts.iter().map(|c| c / denom).collect(),
        control_names: dataset.control_names.clone(),
        control_sign_proportions: signs.iter().map(|&(a, b)| (a as f64 / denom, b as f64 / denom)).collect(),
        replicates: ok,
        failures: resamples.len() - ok,
    })
}

/// Subject-level bootstrap with `replicates` resamples derived from `seed`.
pub fn bootstrap_stability(
    dataset: &TrajectoryDataset,
    grid: &TuningGrid,
    replicates: usize,
    seed: u64,
    variant: Variant,
    options: &SolverOptions,
) -> Result<StabilityReport> {
    let resamples: Vec<Vec<usize>> = (0..replicates)
        .map(|b| resample_indices(dataset.n(), derive_seed(seed, b as u64)))
        .collect();
    stability_from_resamples(dataset, grid, &resamples, variant, options)
}
