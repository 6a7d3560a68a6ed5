use std::path::Path;

use logcontrast::design::IntegrationRule;
use logcontrast::fitio::FitRecord;
use logcontrast::solver::FitResult;
use logcontrast::tuning::select_components;
use logcontrast::{BasisSpec, CoefficientCurves, Domain, TrajectoryDataset};
use serde::Serialize;

use crate::commands::{write, CliError, CliResult};

/// Everything written after a model has been fitted.
pub struct FitOutputs<'a> {
    pub fit: &'a FitResult,
    pub spec: &'a BasisSpec,
    pub dataset: &'a TrajectoryDataset,
    pub zero_replacement: f64,
    pub rule: IntegrationRule,
    pub grid: usize,
}

#[derive(Serialize)]
struct SelectionFile<'a> {
    component_names: &'a [String],
    selected: Vec<&'a str>,
    selected_indices: &'a [usize],
    energies: &'a [f64],
    relative_energies: &'a [f64],
    all_zero: bool,
    converged: bool,
}

impl FitOutputs<'_> {
    /// Writes fit.json, curves.csv and selection.json into `dir`.
    pub fn write(&self, dir: &Path) -> CliResult<()> {
        let names = &self.dataset.component_names;
        let record = FitRecord::new(self.fit, self.spec, names, &self.dataset.control_names, self.zero_replacement, self.rule);
        write(&dir.join("fit.json"), &record.to_json())?;
        write(&dir.join("curves.csv"), &self.curves_csv()?)?;

        let sel = select_components(self.fit, &self.spec.gram()?)?;
        let file = SelectionFile {
            component_names: names,
            selected: sel.selected.iter().map(|&j| names[j].as_str()).collect(),
            selected_indices: &sel.selected,
            energies: &sel.energies,
            relative_energies: &sel.relative_energies,
            all_zero: sel.all_zero,
            converged: self.fit.converged,
        };
        write(&dir.join("selection.json"), &serde_json::to_string_pretty(&file).expect("serializable selection"))
    }

    fn curves_csv(&self) -> CliResult<String> {
        let grid = grid(self.spec.domain, self.grid)?;
        let curves = CoefficientCurves::new(self.fit.coefficients.clone(), self.spec.clone())?.reconstruct(&grid)?;
        let mut out = String::from("t");
        for name in &self.dataset.component_names {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (g, t) in grid.iter().enumerate() {
            out.push_str(&format!("{t:e}"));
            for v in curves.column(g).iter() {
                out.push_str(&format!(",{v:e}"));
            }
            out.push('\n');
        }
        Ok(out)
    }
}

/// One row per penalty: lambda, diagnostics and the group norms.
pub fn path_csv(fits: &[FitResult], names: &[String]) -> String {
    let mut out = String::from("lambda,objective,kkt_residual,converged,active");
    for name in names {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for f in fits {
        out.push_str(&format!(
            "{:e},{:e},{:e},{},{}",
            f.lambda,
            f.objective,
            f.kkt_residual,
            f.converged,
            f.active_groups().len()
        ));
        for g in f.group_norms() {
            out.push_str(&format!(",{g:e}"));
        }
        out.push('\n');
    }
    out
}

/// `count` equally spaced points covering the domain.
pub fn grid(domain: Domain, count: usize) -> CliResult<Vec<f64>> {
    if count < 2 {
        return Err(CliError::Input("--grid needs at least 2 points".into()));
    }
    Ok((0..count)
        .map(|g| {
            if g == count - 1 {
                domain.end
            } else {
                domain.start + domain.length() * g as f64 / (count - 1) as f64
            }
        })
        .collect())
}

/// Position in `found` of each name in `expected`; the sets must agree.
pub fn reorder(expected: &[String], found: &[String], what: &str) -> CliResult<Vec<usize>> {
    if expected.len() != found.len() {
        return Err(CliError::Input(format!(
            "{what} names differ: the model has {} but the file has {}",
            expected.len(),
            found.len()
        )));
    }
    expected
        .iter()
        .map(|name| {
            found
                .iter()
                .position(|f| f == name)
                .ok_or_else(|| CliError::Input(format!("{what} {name:?} is missing from the input")))
        })
        .collect()
}

/// Writes to `path`, or to standard output.
pub fn emit(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => write(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
