//! Synthetic functional compositional data with a known sparse truth, the
//! evaluation metrics and a replicate driver for method comparisons.

mod baselines;
mod experiment;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisSpec, Domain};
use crate::composition::{Observation, Subject, TrajectoryDataset};
use crate::design::{build_design, IntegrationRule};
use crate::error::{Error, Result};
use crate::solver::FitResult;
use crate::tuning::select_components;

pub use baselines::{fit_average_baseline, fit_snapshot_baseline, BaselineFit, BaselineKind};
pub use experiment::{
    format_cell, render_table, run_experiment, ExperimentPlan, ExperimentSummary, Method, SummaryRow,
};

/// Non-zero rows of the default truth, one per active component.
pub const TRUTH_ROWS: [[f64; 5]; 3] = [
    [1.0, 0.0, 1.0, 0.0, -0.5],
    [0.0, 0.0, -1.0, 0.0, 1.0],
    [-1.0, 0.0, 0.0, 0.0, -0.5],
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub p: usize,
    /// Number of equally spaced observation times on `[0, 1]`.
    pub m: usize,
    pub sigma_x2: f64,
    pub rho_t: f64,
    pub rho_x: f64,
    pub snr: f64,
    /// `p x 5` coefficients on the cubic truth basis.
    pub b_star: Vec<Vec<f64>>,
    pub beta0_star: f64,
    pub n_test: usize,
    pub seed: u64,
}

impl SimConfig {
    /// Default design with the three-component truth.
    pub fn new(n: usize, p: usize, seed: u64) -> Self {
        let mut b_star = vec![vec![0.0; 5]; p];
        for (row, truth) in b_star.iter_mut().zip(TRUTH_ROWS.iter()) {
            row.copy_from_slice(truth);
        }
        SimConfig {
            n,
            p,
            m: 20,
            sigma_x2: 9.0,
            rho_t: 0.0,
            rho_x: 0.0,
            snr: 4.0,
            b_star,
            beta0_star: 1.0,
            n_test: 500,
            seed,
        }
    }

    pub fn truth_matrix(&self) -> DMatrix<f64> {
        let k = self.b_star.first().map_or(0, |r| r.len());
        DMatrix::from_fn(self.p, k, |j, l| self.b_star[j][l])
    }

    pub fn truth_spec() -> BasisSpec {
        BasisSpec::uniform(5, 3, Domain::new(0.0, 1.0).expect("unit interval")).expect("valid truth basis")
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::invalid("need at least 2 time points"));
        }
        if self.n < 2 || self.p < 2 {
            return Err(Error::invalid("need n >= 2 and p >= 2"));
        }
        if !(self.snr > 0.0 && self.sigma_x2 > 0.0) {
            return Err(Error::invalid("snr and latent variance must be positive"));
        }
        if !(self.rho_t.abs() < 1.0) || !(self.rho_x > -1.0 / (self.p as f64 - 1.0) && self.rho_x < 1.0) {
            return Err(Error::invalid("correlation parameters give a singular covariance"));
        }
        if self.b_star.len() != self.p || self.b_star.iter().any(|r| r.len() != Self::truth_spec().k()) {
            return Err(Error::invalid("truth coefficients must be p x 5"));
        }
        let b = self.truth_matrix();
        if b.row_sum().amax() > 1e-12 {
            return Err(Error::invalid("truth coefficients violate the zero-sum constraint"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTruth {
    pub b_star: DMatrix<f64>,
    pub spec: BasisSpec,
    /// Components with a non-zero truth curve.
    pub support: Vec<usize>,
    pub beta0: f64,
    pub sigma: f64,
}

/// Draws `M x p` latent matrices with covariance `sigma_x2 (Sigma_T (x) Sigma_X)`
/// through the Cholesky factors of the two Kronecker factors.
#[derive(Debug, Clone)]
pub struct LatentSampler {
    lt: DMatrix<f64>,
    lx: DMatrix<f64>,
    scale: f64,
}

impl LatentSampler {
    pub fn new(m: usize, p: usize, sigma_x2: f64, rho_t: f64, rho_x: f64) -> Result<Self> {
        let sigma_t = DMatrix::from_fn(m, m, |a, b| rho_t.powi((a as i32 - b as i32).abs()));
        let sigma_x = DMatrix::from_fn(p, p, |a, b| if a == b { 1.0 } else { rho_x });
        let chol = |s: DMatrix<f64>| {
            s.cholesky()
                .map(|c| c.l())
                .ok_or_else(|| Error::Numerical("correlation matrix is not positive definite".into()))
        };
        Ok(LatentSampler {
            lt: chol(sigma_t)?,
            lx: chol(sigma_x)?,
            scale: sigma_x2.sqrt(),
        })
    }

    pub fn draw<R: Rng>(&self, rng: &mut R) -> DMatrix<f64> {
        let (m, p) = (self.lt.nrows(), self.lx.nrows());
        let xi = DMatrix::from_fn(m, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        &self.lt * xi * self.lx.transpose() * self.scale
    }
}

/// Row-wise `exp(w) / sum exp(w)`, shifted by the row maximum.
pub fn softmax_rows(w: &DMatrix<f64>) -> DMatrix<f64> {
    let mut x = w.clone();
    for mut row in x.row_iter_mut() {
        let max = row.max();
        row.apply(|v| *v = (*v - max).exp());
        let s = row.sum();
        row /= s;
    }
    x
}

fn grid_times(m: usize) -> Vec<f64> {
    (0..m).map(|v| v as f64 / (m - 1) as f64).collect()
}

fn draw_compositions<R: Rng>(sampler: &LatentSampler, count: usize, times: &[f64], prefix: &str, rng: &mut R) -> Vec<Subject> {
    (0..count)
        .map(|i| {
            let x = softmax_rows(&sampler.draw(rng));
            Subject {
                id: format!("{prefix}{}", i + 1),
                observations: times
                    .iter()
                    .enumerate()
                    .map(|(v, &t)| Observation {
                        time: t,
                        values: x.row(v).iter().copied().collect(),
                    })
                    .collect(),
            }
        })
        .collect()
}

fn with_subjects(subjects: Vec<Subject>, p: usize) -> TrajectoryDataset {
    let n = subjects.len();
    TrajectoryDataset {
        subjects,
        response: DVector::zeros(n),
        controls: DMatrix::zeros(n, 0),
        domain: Domain::new(0.0, 1.0).expect("unit interval"),
        component_names: (1..=p).map(|j| format!("x{j}")).collect(),
        control_names: vec![],
    }
}

/// Noise-free signal `b0 + Z vec(B)` on the truth basis.
fn signal(dataset: &TrajectoryDataset, truth: &DMatrix<f64>, beta0: f64) -> Result<DVector<f64>> {
    let design = build_design(dataset, &SimConfig::truth_spec(), IntegrationRule::default())?;
    let mut s = design.functional_part(truth);
    s.add_scalar_mut(beta0);
    Ok(s)
}

/// Training set, truth and independent test set.
pub fn generate_dataset(config: &SimConfig) -> Result<(TrajectoryDataset, SimTruth, TrajectoryDataset)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let sampler = LatentSampler::new(config.m, config.p, config.sigma_x2, config.rho_t, config.rho_x)?;
    let times = grid_times(config.m);
    let b_star = config.truth_matrix();

    let mut train = with_subjects(draw_compositions(&sampler, config.n, &times, "s", &mut rng), config.p);
    let s_train = signal(&train, &b_star, config.beta0_star)?;
    let mean = s_train.mean();
    let var = s_train.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (config.n as f64 - 1.0);
    let sigma = (var / config.snr).sqrt();
    train.response = s_train.map(|v| v + sigma * rng.sample::<f64, _>(StandardNormal));

    let mut test = with_subjects(draw_compositions(&sampler, config.n_test, &times, "t", &mut rng), config.p);
    let s_test = signal(&test, &b_star, config.beta0_star)?;
    test.response = s_test.map(|v| v + sigma * rng.sample::<f64, _>(StandardNormal));

    let support = (0..config.p).filter(|&j| b_star.row(j).norm() > 0.0).collect();
    Ok((
        train,
        SimTruth {
            b_star,
            spec: SimConfig::truth_spec(),
            support,
            beta0: config.beta0_star,
            sigma,
        },
        test,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Mean squared test prediction error.
    pub pred: f64,
    /// Average `L2` distance between fitted and true curves (NaN when the
    /// method has no curve estimate).
    pub est: f64,
    /// Percent of null components selected.
    pub fpr: f64,
    /// Percent of active components missed.
    pub fnr: f64,
}

/// Selection error rates in percent.
pub fn selection_rates(selected: &[usize], support: &[usize], p: usize) -> (f64, f64) {
    let nulls = p - support.len();
    let false_pos = selected.iter().filter(|j| !support.contains(j)).count();
    let missed = support.iter().filter(|j| !selected.contains(j)).count();
    let fpr = if nulls == 0 { 0.0 } else { 100.0 * false_pos as f64 / nulls as f64 };
    let fnr = if support.is_empty() { 0.0 } else { 100.0 * missed as f64 / support.len() as f64 };
    (fpr, fnr)
}

/// Composite Simpson rule on `points` (odd) equally spaced nodes.
pub fn simpson(values: &[f64], h: f64) -> f64 {
    let last = values.len() - 1;
    let mut s = values[0] + values[last];
    for (i, v) in values.iter().enumerate().take(last).skip(1) {
        s += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    s * h / 3.0
}

pub const EST_POINTS: usize = 2001;

/// `sum_j ||b_hat_j - b_j||_{L2} / p` with both curves evaluated on a
/// 2001-point Simpson grid.
pub fn estimation_error(fit_curves: &DMatrix<f64>, fit_spec: &BasisSpec, truth: &SimTruth) -> Result<f64> {
    let domain = truth.spec.domain;
    let grid: Vec<f64> = (0..EST_POINTS)
        .map(|i| domain.start + domain.length() * i as f64 / (EST_POINTS - 1) as f64)
        .collect();
    let h = domain.length() / (EST_POINTS - 1) as f64;
    let fitted = fit_curves * fit_spec.eval_matrix(&grid)?.transpose();
    let actual = &truth.b_star * truth.spec.eval_matrix(&grid)?.transpose();
    if fitted.nrows() != actual.nrows() {
        return Err(Error::invalid("fit and truth have different numbers of components"));
    }
    let p = actual.nrows();
    let total: f64 = (0..p)
        .map(|j| {
            let sq: Vec<f64> = (0..grid.len()).map(|g| (fitted[(j, g)] - actual[(j, g)]).powi(2)).collect();
            simpson(&sq, h).max(0.0).sqrt()
        })
        .sum();
    Ok(total / p as f64)
}

/// Prediction, estimation and selection metrics of a functional fit.
pub fn evaluate_fit(fit: &FitResult, spec: &BasisSpec, truth: &SimTruth, test: &TrajectoryDataset) -> Result<MetricReport> {
    if fit.k != spec.k() || fit.p() != truth.b_star.nrows() {
        return Err(Error::invalid("fit does not match the basis or the truth"));
    }
    let design = build_design(test, spec, IntegrationRule::default())?;
    let yhat = fit.predict(&design)?;
    let pred = (&design.y - yhat).norm_squared() / design.n() as f64;
    let est = estimation_error(&fit.coefficients, spec, truth)?;
    let sel = select_components(fit, &spec.gram()?)?;
    let (fpr, fnr) = selection_rates(&sel.selected, &truth.support, fit.p());
    Ok(MetricReport { pred, est, fpr, fnr })
}
