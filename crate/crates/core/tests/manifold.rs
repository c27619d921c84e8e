use imapce::data::gaussian_matrix;
use imapce::dataset::orthonormality_error;
use imapce::manifold::{minimize_fn, random_stiefel, retract_qr, tangent_project, SolverOptions, StopReason};
use imapce::{Error, ProjectionMatrix};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn point_and_direction(d: usize, k: usize, seed: u64) -> (ProjectionMatrix<f64>, DMatrix<f64>) {
    (random_stiefel(d, k, seed).unwrap(), gaussian_matrix(d, k, seed ^ 0x5EED))
}

#[test]
fn tangent_projection_examples() {
    let (v, _) = point_and_direction(6, 2, 1);
    assert!(tangent_project(&v, v.matrix()).unwrap().amax() < 1e-14);

    // A direction orthogonal to span(V) is already tangent.
    let full = random_stiefel::<f64>(6, 4, 2).unwrap();
    let v = ProjectionMatrix::new(full.matrix().columns(0, 2).into_owned()).unwrap();
    let g = full.matrix().columns(2, 2) * 3.0;
    assert!((tangent_project(&v, &g).unwrap() - &g).amax() < 1e-14);
    assert!(tangent_project(&v, &DMatrix::zeros(5, 2)).is_err());
}

#[test]
fn zero_step_retraction_is_identity() {
    let (v, xi) = point_and_direction(7, 3, 3);
    let r = retract_qr(&v, &xi, 0.0).unwrap();
    assert!((r.matrix() - v.matrix()).amax() < 1e-14);
}

#[test]
fn retraction_is_second_order_close_to_the_line() {
    let (v, g) = point_and_direction(8, 2, 4);
    let xi = tangent_project(&v, &g).unwrap();
    let err = |t: f64| (retract_qr(&v, &xi, t).unwrap().matrix() - (v.matrix() + &xi * t)).norm();
    let ts = [1e-1, 5e-2, 2.5e-2, 1.25e-2, 6.25e-3];
    let slopes: Vec<f64> = ts.windows(2).map(|w| (err(w[0]) / err(w[1])).ln() / (w[0] / w[1]).ln()).collect();
    for s in &slopes {
        assert!((s - 2.0).abs() < 0.1, "slopes {slopes:?}");
    }
}

#[test]
fn rank_deficient_retraction_errors() {
    let v = ProjectionMatrix::new(DMatrix::<f64>::identity(3, 2)).unwrap();
    let xi = -v.matrix().clone();
    assert!(matches!(retract_qr(&v, &xi, 1.0), Err(Error::RankDeficient { .. })));
}

#[test]
fn constant_cost_converges_immediately() {
    let rep = minimize_fn(|_: &DMatrix<f64>| 4.0, |v: &DMatrix<f64>| DMatrix::zeros(v.nrows(), v.ncols()), 5, 2, &SolverOptions::default())
        .unwrap();
    assert!(rep.converged);
    assert!(rep.iterations <= 1);
    assert_eq!(rep.objective_value, 4.0);
}

#[test]
fn restarts_pick_lowest_cost_and_are_reproducible() {
    let x = gaussian_matrix::<f64>(30, 5, 9);
    let g = x.transpose() * &x;
    let cost = |v: &DMatrix<f64>| {
        let p = v.transpose() * &g * v;
        -(p.trace()) + (v.column(0).map(|t| t.powi(4)).sum())
    };
    let grad = |v: &DMatrix<f64>| {
        let mut out = &g * v * -2.0;
        for i in 0..v.nrows() {
            out[(i, 0)] += 4.0 * v[(i, 0)].powi(3);
        }
        out
    };
    let opts = SolverOptions {
        restarts: 6,
        seed: 42,
        ..SolverOptions::default()
    };
    let a = minimize_fn(cost, grad, 5, 2, &opts).unwrap();
    let b = minimize_fn(cost, grad, 5, 2, &SolverOptions { parallel: false, ..opts.clone() }).unwrap();
    assert_eq!(a.v_star, b.v_star);
    assert_eq!(a.restart_index, b.restart_index);
    assert_eq!(a.restarts.len(), 6);
    let best = a
        .restarts
        .iter()
        .filter_map(|r| r.outcome.as_ref().ok().map(|o| o.0))
        .fold(f64::INFINITY, f64::min);
    assert_eq!(a.objective_value, best);
}

#[test]
fn every_restart_failing_is_an_error() {
    let res = minimize_fn(
        |_: &DMatrix<f64>| f64::NAN,
        |v: &DMatrix<f64>| DMatrix::zeros(v.nrows(), v.ncols()),
        4,
        2,
        &SolverOptions {
            restarts: 3,
            ..SolverOptions::default()
        },
    );
    assert!(matches!(res, Err(Error::AllRestartsFailed { restarts: 3, .. })));
}

#[test]
fn stalled_line_search_reports_stop_reason() {
    // The gradient points uphill, so backtracking eventually fails.
    let x = gaussian_matrix::<f64>(20, 4, 5);
    let g = x.transpose() * &x;
    let rep = imapce::manifold::descend(
        &imapce::manifold::FnObjective {
            cost: |v: &DMatrix<f64>| -(v.transpose() * &g * v).trace(),
            grad: |v: &DMatrix<f64>| &g * v * 2.0,
        },
        random_stiefel(4, 2, 1).unwrap(),
        &SolverOptions::default(),
    )
    .unwrap();
    assert_eq!(rep.stop, StopReason::LineSearchFailed);
}

#[test]
fn solver_options_validation() {
    let bad = SolverOptions::<f64> {
        backtrack_factor: 1.0,
        ..SolverOptions::default()
    };
    assert!(bad.validate().is_err());
    let bad = SolverOptions::<f64> {
        armijo_c: 0.0,
        ..SolverOptions::default()
    };
    assert!(bad.validate().is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tangent_vectors_satisfy_skew_condition(seed in 0u64..100_000, d in 2usize..12, k in 1usize..4) {
        prop_assume!(k <= d);
        let (v, g) = point_and_direction(d, k, seed);
        let xi = tangent_project(&v, &(g * 10.0)).unwrap();
        let s = v.matrix().transpose() * &xi;
        prop_assert!((&s + s.transpose()).norm() < 1e-10);
    }

    #[test]
    fn retraction_stays_on_stiefel(seed in 0u64..100_000, d in 2usize..12, k in 1usize..4, step in -5.0f64..5.0) {
        prop_assume!(k <= d);
        let (v, g) = point_and_direction(d, k, seed);
        let xi = tangent_project(&v, &g).unwrap();
        let r = retract_qr(&v, &xi, step).unwrap();
        prop_assert!(orthonormality_error(r.matrix()) < 1e-10);
    }

    #[test]
    fn random_stiefel_membership(seed in any::<u64>(), d in 1usize..40, k in 1usize..6) {
        prop_assume!(k <= d);
        let v = random_stiefel::<f64>(d, k, seed).unwrap();
        prop_assert!(orthonormality_error(v.matrix()) < 1e-10);
    }

    #[test]
    fn accepted_steps_never_increase_cost(seed in 0u64..10_000) {
        let x = gaussian_matrix::<f64>(25, 6, seed);
        let g = x.transpose() * &x;
        let rep = minimize_fn(
            |v: &DMatrix<f64>| -(v.transpose() * &g * v).trace() + v.map(|t| t.powi(4)).sum(),
            |v: &DMatrix<f64>| &g * v * -2.0 + v.map(|t| 4.0 * t.powi(3)),
            6,
            2,
            &SolverOptions { seed, max_iter: 200, ..SolverOptions::default() },
        )
        .unwrap();
        for w in rep.trace.windows(2) {
            prop_assert!(w[1] <= w[0]);
        }
        prop_assert!(orthonormality_error(rep.v_star.matrix()) < 1e-8);
    }
}
