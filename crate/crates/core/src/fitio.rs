//! JSON form of a fitted model, sufficient to predict on new trajectories.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::{BasisSpec, Domain};
use crate::design::IntegrationRule;
use crate::error::{Error, Result};
use crate::solver::{FitResult, Variant};

/// Largest spline degree accepted from a file.
const MAX_DEGREE: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub variant: String,
    pub lambda: f64,
    pub k: usize,
    pub degree: usize,
    pub knots: Vec<f64>,
    pub domain: [f64; 2],
    pub component_names: Vec<String>,
    pub control_names: Vec<String>,
    pub beta0: f64,
    pub beta_c: Vec<f64>,
    /// `p` rows of `k` coefficients.
    pub coefficients: Vec<Vec<f64>>,
    pub objective: f64,
    pub constraint_residual: f64,
    pub projection_shift: f64,
    pub kkt_residual: f64,
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub converged: bool,
    pub zero_replacement: f64,
    pub boundary_extension: bool,
}

impl FitRecord {
    pub fn new(
        fit: &FitResult,
        spec: &BasisSpec,
        component_names: &[String],
        control_names: &[String],
        zero_replacement: f64,
        rule: IntegrationRule,
    ) -> Self {
        FitRecord {
            variant: fit.variant.to_string(),
            lambda: fit.lambda,
            k: fit.k,
            degree: spec.degree,
            knots: spec.knots.clone(),
            domain: [spec.domain.start, spec.domain.end],
            component_names: component_names.to_vec(),
            control_names: control_names.to_vec(),
            beta0: fit.beta0,
            beta_c: fit.beta_c.iter().copied().collect(),
            coefficients: fit.coefficients.row_iter().map(|r| r.iter().copied().collect()).collect(),
            objective: fit.objective,
            constraint_residual: fit.constraint_residual,
            projection_shift: fit.projection_shift,
            kkt_residual: fit.kkt_residual,
            outer_iters: fit.outer_iters,
            inner_iters: fit.inner_iters,
            converged: fit.converged,
            zero_replacement,
            boundary_extension: rule.boundary_extension,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable record")
    }

    /// Parses and checks internal consistency.
    pub fn from_json(text: &str) -> Result<Self> {
        let rec: FitRecord = serde_json::from_str(text).map_err(|e| Error::Parse {
            file: "fit json".into(),
            row: e.line(),
            message: e.to_string(),
        })?;
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<()> {
        Variant::parse(&self.variant)?;
        if self.degree > MAX_DEGREE {
            return Err(Error::invalid(format!("spline degree {} exceeds {MAX_DEGREE}", self.degree)));
        }
        let spec = self.spec()?;
        if spec.k() != self.k {
            return Err(Error::invalid("k does not match the knot vector"));
        }
        let p = self.component_names.len();
        if self.coefficients.len() != p || self.coefficients.iter().any(|r| r.len() != self.k) {
            return Err(Error::invalid("coefficients must be one row of k values per component"));
        }
        if self.beta_c.len() != self.control_names.len() {
            return Err(Error::invalid("one control coefficient per control name"));
        }
        let finite = std::iter::once(self.beta0)
            .chain(self.beta_c.iter().copied())
            .chain(self.coefficients.iter().flatten().copied())
            .all(f64::is_finite);
        if !finite {
            return Err(Error::invalid("non-finite coefficient"));
        }
        if !(self.zero_replacement > 0.0 && self.zero_replacement.is_finite()) {
            return Err(Error::invalid("zero replacement must be positive"));
        }
        Ok(())
    }

    pub fn spec(&self) -> Result<BasisSpec> {
        let domain = Domain::new(self.domain[0], self.domain[1])?;
        BasisSpec::with_knots(self.degree, domain, self.knots.clone())
    }

    pub fn rule(&self) -> IntegrationRule {
        IntegrationRule {
            boundary_extension: self.boundary_extension,
        }
    }

    pub fn to_fit(&self) -> Result<FitResult> {
        self.validate()?;
        let p = self.coefficients.len();
        Ok(FitResult {
            variant: Variant::parse(&self.variant)?,
            lambda: self.lambda,
            k: self.k,
            beta0: self.beta0,
            beta_c: DVector::from_vec(self.beta_c.clone()),
            coefficients: DMatrix::from_fn(p, self.k, |j, l| self.coefficients[j][l]),
            objective: self.objective,
            constraint_residual: self.constraint_residual,
            projection_shift: self.projection_shift,
            kkt_residual: self.kkt_residual,
            outer_iters: self.outer_iters,
            inner_iters: self.inner_iters,
            converged: self.converged,
            multiplier: None,
        })
    }
}
