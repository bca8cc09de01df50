//! Models, jets, the Newton solver and the sensitivity back ends, checked on a
//! log-utility consumer whose demands are known in closed form.

use approx::assert_relative_eq;
use compstat::jet::{Jet, Scalar};
use compstat::model::{self, DerivativeSource, ProblemModel, Smooth, Target, Wrt};
use compstat::sensitivity::{self, SensitivityMethod};
use compstat::solver::{self, SolutionSource, SolverConfig};
use compstat::Error;
use nalgebra::DMatrix;

const GAMMA: [f64; 2] = [0.3, 0.7];

struct LogUtility;

impl Smooth for LogUtility {
    fn eval<S: Scalar>(&self, x: &[S], _a: &[S]) -> S {
        x[0].clone().ln() * GAMMA[0] + x[1].clone().ln() * GAMMA[1]
    }
}

struct Budget;

impl Smooth for Budget {
    fn eval<S: Scalar>(&self, x: &[S], a: &[S]) -> S {
        a[2].clone() - a[0].clone() * x[0].clone() - a[1].clone() * x[1].clone()
    }
}

fn consumer() -> ProblemModel {
    ProblemModel::new("consumer", 2, 3, model::exact(LogUtility), vec![model::exact(Budget)])
        .with_groups(&[("p", 2), ("m", 1)])
}

fn consumer_fd() -> ProblemModel {
    let f = model::closure(|x, _a| GAMMA[0] * x[0].ln() + GAMMA[1] * x[1].ln());
    let g = model::closure(|x, a| a[2] - a[0] * x[0] - a[1] * x[1]);
    ProblemModel::new("consumer_fd", 2, 3, f, vec![g])
}

/// Demands `x_i = γ_i m / p_i` and multiplier `1/m` (weights sum to one).
fn oracle(a: &[f64]) -> ([f64; 2], f64) {
    ([GAMMA[0] * a[2] / a[0], GAMMA[1] * a[2] / a[1]], 1.0 / a[2])
}

fn oracle_jacobian(a: &[f64]) -> DMatrix<f64> {
    let (p1, p2, m) = (a[0], a[1], a[2]);
    DMatrix::from_row_slice(
        2,
        3,
        &[
            -GAMMA[0] * m / (p1 * p1),
            0.0,
            GAMMA[0] / p1,
            0.0,
            -GAMMA[1] * m / (p2 * p2),
            GAMMA[1] / p2,
        ],
    )
}

const A: [f64; 3] = [2.0, 0.5, 3.0];

#[test]
fn jet_product_rule() {
    // f = x² y at (2, 3).
    let x = Jet::var(2.0, 0, 2);
    let y = Jet::var(3.0, 1, 2);
    let f = x.clone() * x * y;
    assert_eq!(f.re(), 12.0);
    assert_eq!([f.grad(0), f.grad(1)], [12.0, 4.0]);
    assert_eq!([f.hess(0, 0), f.hess(0, 1), f.hess(1, 0), f.hess(1, 1)], [6.0, 4.0, 4.0, 0.0]);
}

#[test]
fn jet_elementary_functions() {
    let x = Jet::var(4.0, 0, 1);
    let s = x.clone().sqrt();
    assert_relative_eq!(s.grad(0), 0.25, epsilon = 1e-15);
    assert_relative_eq!(s.hess(0, 0), -1.0 / 32.0, epsilon = 1e-15);
    let l = x.clone().ln();
    assert_relative_eq!(l.hess(0, 0), -1.0 / 16.0, epsilon = 1e-15);
    let e = Jet::var(0.0, 0, 1).exp();
    assert_eq!([e.re(), e.grad(0), e.hess(0, 0)], [1.0, 1.0, 1.0]);
    let p = x.powf(1.5);
    assert_relative_eq!(p.grad(0), 3.0, epsilon = 1e-14);
    assert_relative_eq!(p.hess(0, 0), 0.375, epsilon = 1e-14);
}

#[test]
fn model_labels_from_groups() {
    let m = consumer();
    assert_eq!(m.parameter_names, ["p1", "p2", "m"]);
    assert_eq!((m.m(), m.n(), m.k()), (2, 3, 1));
    let g = m.group("p").unwrap();
    assert_eq!((g.start, g.len), (0, 2));
    assert!(m.group("q").is_none());
}

#[test]
fn exact_and_fd_gradients_agree() {
    let x = [0.7, 1.3];
    let exact = consumer().numeric_gradient(Target::Constraint(0), Wrt::A, &x, &A).unwrap();
    assert_eq!(exact.source, DerivativeSource::Analytic);
    assert_eq!(exact.values, vec![-0.7, -1.3, 1.0]);
    assert!(exact.fd_residual.unwrap() < 1e-8);
    let fd = consumer_fd().numeric_gradient(Target::Objective, Wrt::X, &x, &A).unwrap();
    assert_eq!(fd.source, DerivativeSource::FiniteDifference);
    assert_relative_eq!(fd.values[0], 0.3 / 0.7, epsilon = 1e-8);
    assert_relative_eq!(fd.values[1], 0.7 / 1.3, epsilon = 1e-8);
}

#[test]
fn lagrangian_uses_plus_sign() {
    let m = consumer();
    let x = [1.0, 1.0];
    let l = m.evaluate_lagrangian(&x, &A, &[2.0]).unwrap();
    let g = A[2] - A[0] - A[1];
    assert_relative_eq!(l, 2.0 * g, epsilon = 1e-15);
}

#[test]
fn unknown_constraint_target_is_rejected() {
    assert!(consumer().function(Target::Constraint(3)).is_err());
}

#[test]
fn newton_matches_closed_form() {
    let (x, lam) = oracle(&A);
    for m in [consumer(), consumer_fd()] {
        let sol = solver::solve(&m, &A, &[1.0, 1.0], &SolverConfig::default()).unwrap();
        assert!(sol.converged);
        assert_eq!(sol.source, SolutionSource::Newton);
        assert_relative_eq!(sol.x[0], x[0], epsilon = 1e-8);
        assert_relative_eq!(sol.x[1], x[1], epsilon = 1e-8);
        assert_relative_eq!(sol.lambda[0], lam, epsilon = 1e-8);
        assert!(solver::kkt_residual(&m, &sol.x, &A, &sol.lambda).unwrap() < 1e-8);
    }
}

#[test]
fn multipliers_recovered_from_gradients() {
    let (x, lam) = oracle(&A);
    let (l, resid) = solver::recover_multipliers(&consumer(), &x, &A).unwrap();
    assert_relative_eq!(l[0], lam, epsilon = 1e-12);
    assert!(resid < 1e-12);
}

#[test]
fn solution_is_a_strict_local_maximum() {
    let m = consumer();
    let sol = solver::solve(&m, &A, &[1.0, 1.0], &SolverConfig::default()).unwrap();
    let so = solver::second_order_check(&m, &sol, 1e-10).unwrap();
    assert!(so.satisfied && so.strict);
    assert!(so.max_eigenvalue < 0.0);
}

#[test]
fn iteration_cap_reports_non_convergence() {
    let cfg = SolverConfig {
        max_iter: 1,
        ..SolverConfig::default()
    };
    match solver::solve(&consumer(), &A, &[0.01, 50.0], &cfg) {
        Ok(sol) => assert!(!sol.converged),
        Err(e) => assert!(matches!(e, Error::Solver(_) | Error::Evaluation { .. }), "{e}"),
    }
}

#[test]
fn sensitivity_methods_match_oracle() {
    let want = oracle_jacobian(&A);
    let m = consumer();
    let sol = solver::solve(&m, &A, &[1.0, 1.0], &SolverConfig::default()).unwrap();
    let ift = sensitivity::decision_jacobian_ift(&m, &sol).unwrap();
    assert_eq!(ift.method, SensitivityMethod::Ift);
    assert!(compstat::linalg::max_abs(&(&ift.x_jac - &want)) < 1e-10);
    // ∂λ/∂m = −1/m², prices do not move λ.
    assert_relative_eq!(ift.lambda_jac[(0, 2)], -1.0 / 9.0, epsilon = 1e-10);
    assert!(ift.lambda_jac[(0, 0)].abs() < 1e-10);

    let fd = sensitivity::decision_jacobian_fd(&m, &sol, &SolverConfig::default(), sensitivity::DEFAULT_FD_STEP).unwrap();
    assert_eq!(fd.step, Some(sensitivity::DEFAULT_FD_STEP));
    assert!(compstat::linalg::max_abs(&(&fd.x_jac - &want)) < 1e-6);

    let both = sensitivity::compute(&m, &sol, SensitivityMethod::Ift, Some(SensitivityMethod::Fd), &SolverConfig::default(), 1e-5)
        .unwrap();
    assert!(both.cross_check_residual.unwrap() < 1e-6);

    let b = m.derivs(&sol.x, &sol.a).unwrap();
    assert!(sensitivity::constraint_identity_residual(&b, &ift) < 1e-12);
}

#[test]
fn analytic_sensitivity_requires_closed_form() {
    let m = consumer();
    let sol = solver::solve(&m, &A, &[1.0, 1.0], &SolverConfig::default()).unwrap();
    assert!(sensitivity::decision_jacobian_analytic(&m, &sol).is_err());
}

#[test]
fn bordered_matrix_is_symmetric() {
    let m = consumer();
    let sol = solver::solve(&m, &A, &[1.0, 1.0], &SolverConfig::default()).unwrap();
    let b = m.derivs(&sol.x, &sol.a).unwrap();
    let h = sensitivity::bordered_matrix(&b, &sol.lambda);
    assert_eq!(h.shape(), (3, 3));
    assert!(compstat::linalg::symmetry_residual(&h) < 1e-14);
}

#[test]
fn method_names_parse() {
    for (s, m) in [("fd", SensitivityMethod::Fd), ("ift", SensitivityMethod::Ift), ("analytic", SensitivityMethod::Analytic)] {
        assert_eq!(s.parse::<SensitivityMethod>().unwrap(), m);
    }
    assert!("newton".parse::<SensitivityMethod>().is_err());
}
