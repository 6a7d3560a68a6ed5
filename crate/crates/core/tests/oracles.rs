//! Self-checks of the reference solvers in `common`.

mod common;

use common::{constrained_ls, equality_ls, projected_subgradient_reference, reduced_soft_threshold, zero_sum_system, TinyInstance};
use nalgebra::{DMatrix, DVector};

#[test]
fn unconstrained_system_is_ordinary_least_squares() {
    for seed in 0..10 {
        let inst = TinyInstance::random(seed);
        let (x, _) = zero_sum_system(&inst);
        let (b, nu) = equality_ls(&x, &inst.y, &DMatrix::zeros(0, x.ncols()), &DVector::zeros(0)).unwrap();
        assert_eq!(nu.len(), 0);
        let ols = x.clone().svd(true, true).solve(&inst.y, 1e-14).unwrap();
        assert!((b - ols).amax() < 1e-9, "seed {seed}");
    }
}

#[test]
fn kkt_equations_hold_for_the_linear_solve() {
    for seed in 0..30 {
        let inst = TinyInstance::random(seed);
        let (x, a) = zero_sum_system(&inst);
        let n = inst.n() as f64;
        let (b, nu) = equality_ls(&x, &inst.y, &a, &DVector::zeros(inst.k)).unwrap();
        let stationarity = x.transpose() * &x / n * &b + a.transpose() * &nu - x.transpose() * &inst.y / n;
        assert!(stationarity.amax() <= 1e-10, "seed {seed}: {}", stationarity.amax());
        assert!((&a * &b).amax() <= 1e-10);
    }
}

#[test]
fn two_component_least_squares_by_hand() {
    // with b2 = -b1 the model is a simple regression of y on z1 - z2
    let z1 = DVector::from_vec(vec![0.3, -1.2, 0.8, 2.0, -0.4, 1.1]);
    let z2 = DVector::from_vec(vec![1.0, 0.5, -0.7, 0.2, 0.9, -1.5]);
    let y = DVector::from_vec(vec![1.4, -0.2, 2.5, 2.9, 0.1, 3.8]);
    let d = &z1 - &z2;
    let dc = d.add_scalar(-d.mean());
    let yc = y.add_scalar(-y.mean());
    let slope = dc.dot(&yc) / dc.norm_squared();
    let inst = TinyInstance {
        z: DMatrix::from_columns(&[z1.clone(), z2.clone()]),
        y: y.clone(),
        p: 2,
        k: 1,
    };
    let (b0, b) = constrained_ls(&inst);
    assert!((b[0] - slope).abs() < 1e-12 && (b[1] + slope).abs() < 1e-12);
    assert!((b0 - (y.mean() - slope * d.mean())).abs() < 1e-12);
    let (t0, t1) = reduced_soft_threshold(&z1, &z2, &y, 0.0);
    assert!((t1 - slope).abs() < 1e-12 && (t0 - b0).abs() < 1e-12);
}

#[test]
fn soft_threshold_vanishes_below_the_cutoff() {
    let z1 = DVector::from_vec(vec![0.0, 1.0, 2.0, 3.0]);
    let z2 = DVector::zeros(4);
    let y = DVector::from_vec(vec![0.0, 0.5, 1.0, 1.5]);
    // centered cross-product / n = 0.625, so the cutoff is lambda = 0.3125
    assert_eq!(reduced_soft_threshold(&z1, &z2, &y, 0.313).1, 0.0);
    assert!(reduced_soft_threshold(&z1, &z2, &y, 0.312).1 > 0.0);
    let (b0, b1) = reduced_soft_threshold(&z1, &z2, &y, 0.0);
    assert!((b1 - 0.5).abs() < 1e-15 && b0.abs() < 1e-15);
}

#[test]
fn subgradient_reference_with_huge_penalty_stays_at_zero() {
    for seed in 0..5 {
        let inst = TinyInstance::random(seed);
        let yc = inst.y.add_scalar(-inst.y.mean());
        let zero = yc.norm_squared() / (2.0 * inst.n() as f64);
        assert_eq!(projected_subgradient_reference(&inst, 1e6, 500), zero);
    }
}

#[test]
fn oracles_agree_without_a_penalty() {
    for seed in 0..8 {
        let inst = TinyInstance::random(seed);
        let (_, b) = constrained_ls(&inst);
        let exact = inst.objective(&b, 0.0);
        let reference = projected_subgradient_reference(&inst, 0.0, 400_000);
        assert!(reference >= exact - 1e-12, "seed {seed}");
        assert!(reference - exact <= 1e-6, "seed {seed}: {reference} vs {exact}");
    }
}

#[test]
fn oracles_are_deterministic() {
    let inst = TinyInstance::random(3);
    assert_eq!(constrained_ls(&inst), constrained_ls(&inst));
    assert_eq!(projected_subgradient_reference(&inst, 0.1, 2000), projected_subgradient_reference(&inst, 0.1, 2000));
    assert_eq!(TinyInstance::random(3).z, inst.z);
}
