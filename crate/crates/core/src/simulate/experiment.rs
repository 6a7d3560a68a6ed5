use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{evaluate_fit, fit_average_baseline, fit_snapshot_baseline, generate_dataset, selection_rates, MetricReport, SimConfig};
use crate::error::{Error, Result};
use crate::solver::{SolverOptions, Variant};
use crate::tuning::{derive_seed, mean_se, select_by_energy, tune_and_fit, Criterion, TuningGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    Cgl,
    Gl,
    /// Reference-level group lasso with a randomly drawn reference.
    Bgl,
    Average,
    Snapshot,
}

impl Method {
    pub fn parse(s: &str) -> Result<Method> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cgl" => Ok(Method::Cgl),
            "gl" => Ok(Method::Gl),
            "bgl" => Ok(Method::Bgl),
            "average" => Ok(Method::Average),
            "snapshot" => Ok(Method::Snapshot),
            other => Err(Error::invalid(format!("unknown method {other:?}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::Cgl => "CGL",
            Method::Gl => "GL",
            Method::Bgl => "BGL",
            Method::Average => "Average",
            Method::Snapshot => "Snapshot",
        }
    }

    fn is_baseline(&self) -> bool {
        matches!(self, Method::Average | Method::Snapshot)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    /// Data-generating setting; `seed` is the base of the replicate seeds.
    pub config: SimConfig,
    pub replicates: usize,
    pub methods: Vec<Method>,
    pub criteria: Vec<Criterion>,
    pub grid: TuningGrid,
    pub options: SolverOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub criterion: String,
    pub method: String,
    pub est: (f64, f64),
    pub pred: (f64, f64),
    pub fpr: (f64, f64),
    pub fnr: (f64, f64),
    pub replicates: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub rows: Vec<SummaryRow>,
}

const CSV_HEADER: &str = "criterion,method,est_mean,est_se,pred_mean,pred_se,fpr_mean,fpr_se,fnr_mean,fnr_se,replicates,failures";

impl ExperimentSummary {
    pub fn row(&self, criterion: &str, method: &str) -> Option<&SummaryRow> {
        self.rows
            .iter()
            .find(|r| r.criterion.eq_ignore_ascii_case(criterion) && r.method.eq_ignore_ascii_case(method))
    }

    /// Raw (unscaled) means and standard errors.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{CSV_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                r.criterion, r.method, r.est.0, r.est.1, r.pred.0, r.pred.1, r.fpr.0, r.fpr.1, r.fnr.0, r.fnr.1, r.replicates, r.failures
            );
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let header: Vec<String> = reader
            .headers()
            .map_err(|e| parse_error(1, e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        if header.join(",") != CSV_HEADER {
            return Err(parse_error(1, format!("expected header {CSV_HEADER}")));
        }
        let mut rows = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| parse_error(line, e.to_string()))?;
            let num = |c: usize| -> Result<f64> {
                rec[c].parse().map_err(|_| parse_error(line, format!("invalid number {:?}", &rec[c])))
            };
            let count = |c: usize| -> Result<usize> {
                rec[c].parse().map_err(|_| parse_error(line, format!("invalid count {:?}", &rec[c])))
            };
            rows.push(SummaryRow {
                criterion: rec[0].to_string(),
                method: rec[1].to_string(),
                est: (num(2)?, num(3)?),
                pred: (num(4)?, num(5)?),
                fpr: (num(6)?, num(7)?),
                fnr: (num(8)?, num(9)?),
                replicates: count(10)?,
                failures: count(11)?,
            });
        }
        Ok(ExperimentSummary { rows })
    }
}

fn parse_error(row: usize, message: String) -> Error {
    Error::Parse {
        file: "summary table".into(),
        row,
        message,
    }
}

/// `"mean (se)"` with two decimals after scaling; blank for a missing value.
pub fn format_cell(mean: f64, se: f64, scale: f64) -> String {
    if mean.is_nan() {
        return String::new();
    }
    format!("{:.2} ({:.2})", mean * scale, se * scale)
}

/// Fixed-width table with Est and Pred multiplied by 10. Rows from a single
/// replicate carry a `*` and a footnote.
pub fn render_table(summary: &ExperimentSummary) -> String {
    let mut out = format!(
        "{:<9} {:<9} {:>14} {:>14} {:>14} {:>14}\n",
        "Criterion", "Method", "Est", "Pred", "FPR (%)", "FNR (%)"
    );
    let mut single = false;
    for r in &summary.rows {
        let flag = if r.replicates <= 1 {
            single = true;
            "*"
        } else {
            ""
        };
        let _ = writeln!(
            out,
            "{:<9} {:<9} {:>14} {:>14} {:>14} {:>14}{flag}",
            r.criterion.to_uppercase(),
            r.method,
            format_cell(r.est.0, r.est.1, 10.0),
            format_cell(r.pred.0, r.pred.1, 10.0),
            format_cell(r.fpr.0, r.fpr.1, 1.0),
            format_cell(r.fnr.0, r.fnr.1, 1.0),
        );
    }
    if single {
        out.push_str("* single replicate: standard errors are reported as 0\n");
    }
    out
}

type Cell = (Criterion, Method);

fn run_cell(
    method: Method,
    criterion: Criterion,
    train: &crate::composition::TrajectoryDataset,
    truth: &super::SimTruth,
    test: &crate::composition::TrajectoryDataset,
    grid: &TuningGrid,
    options: &SolverOptions,
    reference: usize,
) -> Result<MetricReport> {
    let variant = match method {
        Method::Cgl => Variant::Cgl,
        Method::Gl => Variant::Gl,
        Method::Bgl => Variant::Bgl(reference),
        Method::Average | Method::Snapshot => {
            let fit = if method == Method::Average {
                fit_average_baseline(train, grid, options)?
            } else {
                fit_snapshot_baseline(train, grid, options)?
            };
            let yhat = fit.predict(test)?;
            let pred = (&test.response - yhat).norm_squared() / test.n() as f64;
            let sel = select_by_energy(&fit.energies());
            let (fpr, fnr) = selection_rates(&sel.selected, &truth.support, train.p());
            return Ok(MetricReport {
                pred,
                est: f64::NAN,
                fpr,
                fnr,
            });
        }
    };
    let tuned = tune_and_fit(train, grid, variant, criterion, options)?;
    evaluate_fit(&tuned.fit, &tuned.spec, truth, test)
}

/// Runs every (criterion, method) cell on `replicates` independent data
/// sets. The baselines are tuned by CV only and are skipped under GIC.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<ExperimentSummary> {
    if plan.replicates == 0 {
        return Err(Error::invalid("need at least one replicate"));
    }
    plan.config.validate()?;
    let cells: Vec<Cell> = plan
        .criteria
        .iter()
        .flat_map(|&c| plan.methods.iter().map(move |&m| (c, m)))
        .filter(|(c, m)| *c == Criterion::Cv || !m.is_baseline())
        .collect();
    let results: Vec<Vec<Option<MetricReport>>> = (0..plan.replicates)
        .into_par_iter()
        .map(|r| {
            let seed = derive_seed(plan.config.seed, r as u64);
            let config = SimConfig {
                seed,
                ..plan.config.clone()
            };
            let Ok((train, truth, test)) = generate_dataset(&config) else {
                return vec![None; cells.len()];
            };
            let reference = (derive_seed(seed, 1) % plan.config.p as u64) as usize;
            let grid = TuningGrid {
                fold_seed: derive_seed(seed, 2),
                ..plan.grid.clone()
            };
            cells
                .par_iter()
                .map(|&(c, m)| run_cell(m, c, &train, &truth, &test, &grid, &plan.options, reference).ok())
                .collect()
        })
        .collect();
    let rows = cells
        .iter()
        .enumerate()
        .map(|(i, &(c, m))| {
            let ok: Vec<MetricReport> = results.iter().filter_map(|rep| rep[i]).collect();
            let stat = |f: fn(&MetricReport) -> f64| mean_se(&ok.iter().map(f).collect::<Vec<_>>());
            SummaryRow {
                criterion: c.name().to_string(),
                method: m.name().to_string(),
                est: stat(|r| r.est),
                pred: stat(|r| r.pred),
                fpr: stat(|r| r.fpr),
                fnr: stat(|r| r.fnr),
                replicates: ok.len(),
                failures: plan.replicates - ok.len(),
            }
        })
        .collect();
    Ok(ExperimentSummary { rows })
}
