//! Integrated design matrices from discretely observed log-trajectories.
//!
//! Entry `z_ijl` approximates `int z_ij(t) phi_l(t) dt` by the trapezoid rule
//! applied to the product `phi_l z_ij` at the observation times, with the
//! first and last observation held constant out to the domain ends.

use nalgebra::{DMatrix, DVector};

use crate::basis::BasisSpec;
use crate::composition::TrajectoryDataset;
use crate::error::{Error, Result};

/// How discrete observations are integrated against the basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IntegrationRule {
    /// Extend the first/last observation to the domain ends with rectangle
    /// terms. When false, each subject integrates over `[t_1, t_m]` only.
    pub boundary_extension: bool,
}

impl Default for IntegrationRule {
    fn default() -> Self {
        IntegrationRule {
            boundary_extension: true,
        }
    }
}

impl IntegrationRule {
    /// Quadrature weights `w_v` such that `int f ~ sum_v w_v f(t_v)`.
    pub fn weights(&self, times: &[f64], start: f64, end: f64) -> Vec<f64> {
        let m = times.len();
        let mut w = vec![0.0; m];
        for v in 1..m {
            let h = 0.5 * (times[v] - times[v - 1]);
            w[v - 1] += h;
            w[v] += h;
        }
        if self.boundary_extension && m > 0 {
            w[0] += times[0] - start;
            w[m - 1] += end - times[m - 1];
        }
        w
    }
}

/// Integrated design `Z` in group-blocked layout `[Z_1, ..., Z_p]`, controls
/// and response.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrices {
    /// `n x (p k)`; group `j` occupies columns `j k .. (j + 1) k`.
    pub z: DMatrix<f64>,
    /// `n x p_c`
    pub zc: DMatrix<f64>,
    pub y: DVector<f64>,
    pub p: usize,
    pub k: usize,
    pub spec: BasisSpec,
}

impl DesignMatrices {
    /// Assembles a design from raw parts, checking dimensions and finiteness.
    pub fn from_parts(
        z: DMatrix<f64>,
        zc: DMatrix<f64>,
        y: DVector<f64>,
        p: usize,
        spec: BasisSpec,
    ) -> Result<Self> {
        let k = spec.k();
        let n = y.len();
        if z.ncols() != p * k || z.nrows() != n || zc.nrows() != n {
            return Err(Error::invalid(format!(
                "design dimensions inconsistent: Z {}x{}, Zc {}x{}, y {n}, p {p}, k {k}",
                z.nrows(),
                z.ncols(),
                zc.nrows(),
                zc.ncols()
            )));
        }
        if z.iter().chain(zc.iter()).chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Numerical("design contains non-finite entries".into()));
        }
        Ok(DesignMatrices { z, zc, y, p, k, spec })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn pc(&self) -> usize {
        self.zc.ncols()
    }

    /// Columns of group `j`.
    pub fn block(&self, j: usize) -> nalgebra::DMatrixView<'_, f64> {
        self.z.columns(j * self.k, self.k)
    }

    /// Unpenalized block `[1, Z_c]`.
    pub fn unpenalized(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut x = DMatrix::from_element(n, 1 + self.pc(), 1.0);
        x.columns_mut(1, self.pc()).copy_from(&self.zc);
        x
    }

    /// Design restricted to the given rows (repeats allowed).
    pub fn select_rows(&self, rows: &[usize]) -> DesignMatrices {
        DesignMatrices {
            z: self.z.select_rows(rows),
            zc: self.zc.select_rows(rows),
            y: self.y.select_rows(rows),
            p: self.p,
            k: self.k,
            spec: self.spec.clone(),
        }
    }

    /// Reference-level design `Z~_r` with blocks `Z_j - Z_r`, `j != r`.
    pub fn reference(&self, r: usize) -> Result<DesignMatrices> {
        if r >= self.p {
            return Err(Error::invalid(format!(
                "reference component {} out of range 1..={}",
                r + 1,
                self.p
            )));
        }
        let (n, k) = (self.n(), self.k);
        let mut z = DMatrix::zeros(n, (self.p - 1) * k);
        let zr = self.block(r);
        for (c, j) in (0..self.p).filter(|&j| j != r).enumerate() {
            let blk = self.block(j) - zr;
            z.columns_mut(c * k, k).copy_from(&blk);
        }
        Ok(DesignMatrices {
            z,
            zc: self.zc.clone(),
            y: self.y.clone(),
            p: self.p - 1,
            k,
            spec: self.spec.clone(),
        })
    }

    /// `Z beta` with `beta` given as a `p x k` coefficient matrix.
    pub fn functional_part(&self, coefficients: &DMatrix<f64>) -> DVector<f64> {
        let p = coefficients.nrows();
        let mut v = DVector::zeros(p * self.k);
        for j in 0..p {
            for l in 0..self.k {
                v[j * self.k + l] = coefficients[(j, l)];
            }
        }
        &self.z * v
    }
}

/// Integrates every subject's log-trajectory against the basis.
pub fn build_design(
    dataset: &TrajectoryDataset,
    spec: &BasisSpec,
    rule: IntegrationRule,
) -> Result<DesignMatrices> {
    dataset.validate()?;
    if spec.domain != dataset.domain {
        return Err(Error::invalid("basis domain differs from dataset domain"));
    }
    let logs = dataset.log_transform()?;
    let z = integrate_rows(&logs, spec, rule)?;
    DesignMatrices::from_parts(
        z,
        dataset.controls.clone(),
        dataset.response.clone(),
        dataset.p(),
        spec.clone(),
    )
}

/// `n x (q k)` matrix of `int v_ij(t) phi_l(t) dt` for per-subject samples
/// `values` (`m_i x q`) observed at `times`.
pub fn integrate_rows(
    trajectories: &[crate::composition::LogTrajectory],
    spec: &BasisSpec,
    rule: IntegrationRule,
) -> Result<DMatrix<f64>> {
    let k = spec.k();
    let q = trajectories.first().map_or(0, |t| t.values.ncols());
    let mut z = DMatrix::zeros(trajectories.len(), q * k);
    for (i, traj) in trajectories.iter().enumerate() {
        if traj.times.len() < 2 {
            return Err(Error::invalid(format!(
                "subject {i} has {} observations, need at least 2",
                traj.times.len()
            )));
        }
        let w = rule.weights(&traj.times, spec.domain.start, spec.domain.end);
        for (v, &t) in traj.times.iter().enumerate() {
            let phi = spec.eval(t)?;
            for j in 0..q {
                let zv = traj.values[(v, j)] * w[v];
                for (l, &ph) in phi.iter().enumerate() {
                    if ph != 0.0 {
                        z[(i, j * k + l)] += ph * zv;
                    }
                }
            }
        }
    }
    Ok(z)
}

/// Reference-level design `Z~_r` (0-based `r`), block `j` equal to `Z_j - Z_r`.
pub fn build_reference_design(
    dataset: &TrajectoryDataset,
    spec: &BasisSpec,
    r: usize,
    rule: IntegrationRule,
) -> Result<DesignMatrices> {
    if r >= dataset.p() {
        return Err(Error::invalid(format!("reference component {} out of range", r + 1)));
    }
    build_design(dataset, spec, rule)?.reference(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::Domain;
    use crate::composition::parse_dataset;

    fn unit() -> Domain {
        Domain::new(0.0, 1.0).unwrap()
    }

    /// Two-component dataset whose first log-component takes `a` then `b`
    /// at the two given times; the second component is 1 (log 0).
    fn two_point(t0: f64, t1: f64, a: f64, b: f64) -> TrajectoryDataset {
        let traj = format!(
            "subject,time,x,y\ns,{t0},{},1\ns,{t1},{},1\n",
            a.exp(),
            b.exp()
        );
        parse_dataset(&traj, "subject,y\ns,0\n", unit()).unwrap()
    }

    #[test]
    fn hand_trapezoid_at_endpoints() {
        let ds = two_point(0.0, 1.0, 1.0, 3.0);
        let spec = BasisSpec::uniform(1, 0, unit()).unwrap();
        let d = build_design(&ds, &spec, IntegrationRule::default()).unwrap();
        assert!((d.z[(0, 0)] - 2.0).abs() < 1e-14);
        assert!(d.z[(0, 1)].abs() < 1e-14);
    }

    #[test]
    fn boundary_extension_terms() {
        let ds = two_point(0.25, 0.75, 1.0, 3.0);
        let spec = BasisSpec::uniform(1, 0, unit()).unwrap();
        let d = build_design(&ds, &spec, IntegrationRule::default()).unwrap();
        assert!((d.z[(0, 0)] - 2.0).abs() < 1e-14);
        let inner = build_design(
            &ds,
            &spec,
            IntegrationRule {
                boundary_extension: false,
            },
        )
        .unwrap();
        assert!((inner.z[(0, 0)] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn constant_composition_sums_to_length() {
        let traj = "subject,time,a,b,c\ns,0,0.2,0.3,0.5\ns,0.4,0.2,0.3,0.5\ns,1,0.2,0.3,0.5\n";
        let ds = parse_dataset(traj, "subject,y\ns,1\n", unit()).unwrap();
        let spec = BasisSpec::uniform(6, 3, unit()).unwrap();
        let d = build_design(&ds, &spec, IntegrationRule::default()).unwrap();
        for (j, c) in [0.2f64, 0.3, 0.5].iter().enumerate() {
            let s: f64 = d.block(j).row(0).iter().sum();
            assert!((s - c.ln()).abs() < 1e-14);
        }
    }

    #[test]
    fn reference_blocks_are_differences() {
        let traj = "subject,time,a,b\ns,0,0.2,0.8\ns,1,0.6,0.4\nq,0,0.5,0.5\nq,0.3,0.1,0.9\n";
        let ds = parse_dataset(traj, "subject,y\ns,1\nq,2\n", unit()).unwrap();
        let spec = BasisSpec::uniform(4, 3, unit()).unwrap();
        let d = build_design(&ds, &spec, IntegrationRule::default()).unwrap();
        let r = build_reference_design(&ds, &spec, 1, IntegrationRule::default()).unwrap();
        assert_eq!(r.p, 1);
        assert_eq!(r.z, d.block(0) - d.block(1));
        assert!(build_reference_design(&ds, &spec, 2, IntegrationRule::default()).is_err());
    }
}
