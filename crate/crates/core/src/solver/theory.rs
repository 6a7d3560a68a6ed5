//! Penalty level that guarantees the oracle error bounds with high
//! probability under Gaussian noise of known scale.

use nalgebra::SymmetricEigen;

use crate::basis::BasisSpec;
use crate::composition::TrajectoryDataset;
use crate::design::{build_design, DesignMatrices, IntegrationRule};
use crate::error::{Error, Result};

/// `min_r max_{j != r} 2 sigma / sqrt(n) * sqrt(tr(Psi) + 2 s_max(Psi) (2 q log(p-1) + sqrt(k q log(p-1))))`
/// with `Psi = (Z_j - Z_r)^T (Z_j - Z_r) / n`.
pub fn theory_lambda_bound_design(design: &DesignMatrices, sigma: f64, q: f64) -> Result<f64> {
    if design.p < 2 {
        return Err(Error::invalid("the bound needs at least 2 components"));
    }
    if !(sigma > 0.0) || !(q > 1.0) {
        return Err(Error::invalid("sigma must be positive and q greater than 1"));
    }
    let n = design.n() as f64;
    let k = design.k as f64;
    let lp = ((design.p - 1) as f64).ln();
    let tail = 2.0 * q * lp + (k * q * lp).sqrt();
    let mut best = f64::INFINITY;
    for r in 0..design.p {
        let mut worst = 0.0f64;
        for j in (0..design.p).filter(|&j| j != r) {
            let diff = design.block(j) - design.block(r);
            let psi = diff.transpose() * &diff / n;
            let smax = SymmetricEigen::new(psi.clone())
                .eigenvalues
                .iter()
                .cloned()
                .fold(0.0, f64::max);
            let val = 2.0 * sigma / n.sqrt() * (psi.trace() + 2.0 * smax * tail).sqrt();
            worst = worst.max(val);
        }
        best = best.min(worst);
    }
    Ok(best)
}

pub fn theory_lambda_bound(dataset: &TrajectoryDataset, spec: &BasisSpec, sigma: f64, q: f64) -> Result<f64> {
    let design = build_design(dataset, spec, IntegrationRule::default())?;
    theory_lambda_bound_design(&design, sigma, q)
}
