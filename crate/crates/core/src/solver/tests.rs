use super::*;
use crate::basis::{BasisSpec, Domain};

fn toy_design(n: usize, p: usize, k: usize, seed: u64) -> DesignMatrices {
    let mut state = seed;
    let mut next = move || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    let z = DMatrix::from_fn(n, p * k, |_, _| next());
    let mut beta = DVector::zeros(p * k);
    for l in 0..k {
        beta[l] = 1.0;
        beta[k + l] = -1.0;
    }
    let y = &z * beta + DVector::from_fn(n, |_, _| 0.1 * next());
    let spec = BasisSpec::uniform(k, 0.min(k - 1), Domain::new(0.0, 1.0).unwrap()).unwrap();
    DesignMatrices::from_parts(z, DMatrix::zeros(n, 0), y, p, spec).unwrap()
}

#[test]
fn variant_round_trip() {
    for s in ["cgl", "gl", "bgl:3"] {
        assert_eq!(Variant::parse(s).unwrap().to_string(), s);
    }
    assert!(Variant::parse("bgl:0").is_err());
    assert!(Variant::parse("lasso").is_err());
}

#[test]
fn cgl_is_feasible_and_certified() {
    let d = toy_design(40, 5, 3, 7);
    let lmax = lambda_max(&d).unwrap();
    let opts = SolverOptions::precise();
    let fit = fit_cgl(&d, 0.05 * lmax, &opts, None).unwrap();
    assert!(fit.converged);
    let sum: DVector<f64> = fit.coefficients.row_sum().transpose();
    assert!(sum.amax() < 1e-12);
    assert!(fit.kkt_residual < 1e-7, "kkt {}", fit.kkt_residual);
}

#[test]
fn gl_above_lambda_max_is_zero() {
    let d = toy_design(30, 4, 2, 3);
    let lmax = lambda_max(&d).unwrap();
    let fit = fit_gl(&d, 1.01 * lmax, &SolverOptions::default()).unwrap();
    assert!(fit.coefficients.iter().all(|&b| b == 0.0));
    let fit = fit_gl(&d, 0.9 * lmax, &SolverOptions::precise()).unwrap();
    assert!(fit.coefficients.iter().any(|&b| b != 0.0));
    assert!(fit.kkt_residual < 1e-8);
}

#[test]
fn bgl_rows_sum_to_zero() {
    let d = toy_design(30, 4, 2, 5);
    let lmax = lambda_max(&d).unwrap();
    let fit = fit_bgl(&d, 0.1 * lmax, 2, &SolverOptions::precise()).unwrap();
    assert!(fit.coefficients.row_sum().amax() < 1e-12);
    assert!(fit.kkt_residual < 1e-8);
}

#[test]
fn lambda_grid_is_geometric() {
    let g = lambda_grid(2.0, 3, 0.25);
    assert_eq!(g.len(), 3);
    assert!((g[1] - 1.0).abs() < 1e-15 && (g[2] - 0.5).abs() < 1e-15);
    assert!(fit_path(&toy_design(10, 2, 1, 1), Variant::Gl, &[1.0, 1.0], &SolverOptions::default()).is_err());
}
