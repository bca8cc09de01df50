//! Isovector construction, compensated-derivative matrices and the checks
//! that report on them.

use std::sync::Arc;

use approx::assert_relative_eq;
use compstat::analysis::{self, Analysis, IsovectorRecipe, Settings};
use compstat::csm::{self, CsmConfig, CsmResult, Recipe, SignConvention, TransformKind};
use compstat::diagnostics::{self, CheckReport, Verdict};
use compstat::geometry::{self, BasisKind, GradientStack};
use compstat::jet::Scalar;
use compstat::linalg;
use compstat::model::{self, ProblemModel, Smooth, Target, VecMap};
use compstat::Error;
use nalgebra::DMatrix;

struct LogUtility;

impl Smooth for LogUtility {
    fn eval<S: Scalar>(&self, x: &[S], _a: &[S]) -> S {
        x[0].clone().ln() * 0.3 + x[1].clone().ln() * 0.7
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

const A: [f64; 3] = [2.0, 0.5, 3.0];

fn income_compensated() -> Analysis {
    let recipe = IsovectorRecipe::OneTerm {
        target: Target::Constraint(0),
        comp: 2,
    };
    analysis::analyze(&consumer(), &recipe, &A, &[1.0, 1.0], &Settings::default()).unwrap()
}

/// Income-compensated price effects at `A`, from `S_ij = ∂x_i/∂p_j + x_j ∂x_i/∂m`
/// with demands `x_i = γ_i m / p_i`.
fn slutsky_oracle() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[-0.1575, 0.63, 0.63, -2.52])
}

#[test]
fn nullspace_basis_is_orthonormal_and_annihilates() {
    let stack = GradientStack {
        rows: DMatrix::from_row_slice(1, 3, &[1.0, 2.0, -2.0]),
        labels: vec!["g1".into()],
    };
    let iso = geometry::build_isovectors(&stack, false).unwrap();
    assert_eq!((iso.a(), iso.n()), (2, 3));
    assert_eq!(iso.basis_kind, BasisKind::Nullspace);
    let gram = &iso.vectors * iso.vectors.transpose();
    assert!(linalg::max_abs(&(gram - DMatrix::identity(2, 2))) < 1e-12);
    assert!(iso.max_null_residual() < 1e-12);
}

#[test]
fn full_rank_stack_has_empty_tangent() {
    let stack = GradientStack {
        rows: DMatrix::identity(2, 2),
        labels: vec!["g1".into(), "g2".into()],
    };
    assert_eq!(geometry::build_isovectors(&stack, false).unwrap_err(), Error::EmptyTangent(2));
}

#[test]
fn prescribed_rows_must_annihilate() {
    let stack = GradientStack {
        rows: DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
        labels: vec!["g1".into()],
    };
    let good = geometry::prescribe_isovectors(DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -2.0, 2.0]), &stack, false).unwrap();
    assert!(good.redundant);
    let bad = geometry::prescribe_isovectors(DMatrix::from_row_slice(1, 2, &[1.0, 0.0]), &stack, false);
    assert!(matches!(bad, Err(Error::NullProperty { alpha: 0, .. })));
    let wrong = geometry::prescribe_isovectors(DMatrix::zeros(1, 3), &stack, false);
    assert!(matches!(wrong, Err(Error::Dimension { .. })));
}

#[test]
fn conformance_rejects_mismatched_shapes() {
    let xs = DMatrix::zeros(3, 2);
    assert!(geometry::verify_conformance(&xs, &DMatrix::zeros(1, 2), 1e-6).is_err());
    let empty = geometry::verify_conformance(&xs, &DMatrix::zeros(0, 3), 1e-6).unwrap();
    assert!(empty.pass && empty.max == 0.0);
}

#[test]
fn one_term_compensation_gives_slutsky_terms() {
    let an = income_compensated();
    assert_eq!(an.isovectors.labels, ["D(p1)", "D(p2)"]);
    assert!(!an.isovectors.degenerate);
    let xs = an.x_semicolon();
    assert!(linalg::max_abs(&(&xs - slutsky_oracle())) < 1e-10, "{xs}");
}

#[test]
fn omega_is_scaled_slutsky() {
    // L_{x_i, p_j} = −λ δ_ij with λ = 1/m, so Ω = −S/m.
    let an = income_compensated();
    let want = -slutsky_oracle() / 3.0;
    assert!(linalg::max_abs(&(&an.omega.matrix - &want)) < 1e-10);
    assert_eq!(an.omega.sign_convention, SignConvention::PositiveSemidefiniteExpected);
    assert_eq!(an.omega.rank_estimate, 1);
    assert!(an.omega.is_symmetric());
    assert!(an.omega.min_eigenvalue().abs() < 1e-10);
}

#[test]
fn recipes_agree_on_consumer() {
    let an = income_compensated();
    let quad = an.context.omega_quadratic(&an.isovectors).unwrap();
    let c = diagnostics::check_coherence("quad", &an.omega.matrix, &quad.matrix, 1e-8);
    assert!(c.passed(), "{c:?}");
    let t = &an.isovectors.vectors;
    let uni = an.context.universal().unwrap();
    assert_eq!(uni.dim(), 3);
    assert!(linalg::max_abs(&(t * &uni.matrix * t.transpose() - &an.omega.matrix)) < 1e-10);
    let (silb, verdict) = an.context.silberberg().unwrap();
    assert!(verdict.pass);
    assert!(linalg::max_abs(&(t * &silb.matrix * t.transpose() - &an.omega.matrix)) < 1e-10);
    assert!(an.passed(), "{:?}", an.failures());
}

#[test]
fn unconstrained_recipe_needs_unconstrained_model() {
    let an = income_compensated();
    assert!(an.context.omega_unconstrained().is_err());
    assert!(an.context.build(Recipe::Transformed, &an.isovectors).is_err());
}

#[test]
fn congruence_preserves_inertia() {
    let an = income_compensated();
    let t = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 1.0]);
    let out = csm::transform_csm(&an.omega, &t, None).unwrap();
    assert_eq!(out.transform_kind, Some(TransformKind::Congruence));
    assert_eq!(out.recipe, Recipe::Transformed);
    assert_eq!(out.rank_estimate, an.omega.rank_estimate);
    assert!(out.min_eigenvalue() > -1e-10);
    let contraction = csm::transform_csm(&an.omega, &DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), None).unwrap();
    assert_eq!(contraction.transform_kind, Some(TransformKind::Contraction));
    assert_eq!(contraction.labels, ["e1"]);
    assert!(csm::transform_csm(&an.omega, &DMatrix::identity(3, 3), None).is_err());
}

#[test]
fn linear_decision_rescaling_leaves_omega_unchanged() {
    let an = income_compensated();
    let map: VecMap = Arc::new(|x: &[f64]| vec![2.0 * x[0], 3.0 * x[1]]);
    let re = csm::reparameterize_csm(&an.model, &an.solution, &an.sensitivity, &an.isovectors, Some(&map), None).unwrap();
    assert!(linalg::max_abs(&(&re.csm.matrix - &an.omega.matrix)) < 1e-8);
    assert_relative_eq!(re.decision_jacobian[(1, 1)], 3.0, epsilon = 1e-8);
}

#[test]
fn spectral_relation_checks_dimensions() {
    let an = income_compensated();
    let err = csm::spectral_relation(&an.omega, &DMatrix::identity(2, 2), &DMatrix::zeros(2, 3));
    assert!(matches!(err, Err(Error::Dimension { .. })));
}

#[test]
fn recipe_names_round_trip() {
    for r in Recipe::ALL.iter().chain([Recipe::Transformed].iter()) {
        assert_eq!(r.name().parse::<Recipe>().unwrap(), *r);
    }
    assert!(matches!("hessian".parse::<Recipe>(), Err(Error::Config(_))));
    assert_eq!("one_term".parse::<BasisKind>().unwrap(), BasisKind::OneTerm);
}

fn csm_of(m: DMatrix<f64>) -> CsmResult {
    CsmResult::new(m, Recipe::Omega, SignConvention::PositiveSemidefiniteExpected, vec!["a".into(), "b".into()], &CsmConfig::default())
}

#[test]
fn semidefinite_check_detects_sign_and_asymmetry() {
    let psd = csm_of(DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]));
    assert!(diagnostics::check_csm_semidefinite(&psd, 1e-8).passed());
    assert_eq!(psd.rank_estimate, 1);
    let indefinite = csm_of(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]));
    assert!(diagnostics::check_csm_semidefinite(&indefinite, 1e-8).failed());
    let skew = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
    let rep = diagnostics::check_semidefinite("skew", &skew, SignConvention::PositiveSemidefiniteExpected, 1e-8, 1e-8);
    assert!(rep.failed());
    let nsd = diagnostics::check_semidefinite("nsd", &(-DMatrix::identity(2, 2)), SignConvention::NegativeSemidefiniteExpected, 1e-8, 1e-8);
    assert!(nsd.passed());
    let empty = diagnostics::check_semidefinite("empty", &DMatrix::zeros(0, 0), SignConvention::PositiveSemidefiniteExpected, 1e-8, 1e-8);
    assert!(empty.passed());
}

#[test]
fn rank_and_coherence_reports() {
    assert!(diagnostics::check_rank_bound("r", 2, 2).passed());
    assert!(diagnostics::check_rank_bound("r", 3, 2).failed());
    let omega = csm_of(DMatrix::identity(2, 2));
    assert!(diagnostics::check_omega_rank(&omega, 3, 1).passed());
    assert!(diagnostics::check_omega_rank(&omega, 2, 1).failed());
    let a = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
    let b = DMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
    assert!(diagnostics::check_coherence("shape", &a, &b, 1.0).failed());
}

#[test]
fn check_report_states() {
    let pass = CheckReport::compare("c", "p", 1e-9, 1e-8);
    assert_eq!(pass.verdict, Verdict::Pass);
    assert!(CheckReport::compare("c", "p", f64::NAN, 1e-8).failed());
    let skip = CheckReport::skipped("c", "p", "why");
    assert!(!skip.passed() && !skip.failed());
    assert_eq!(CheckReport::flag("c", "p", false, "n").verdict, Verdict::Fail);
}

#[test]
fn fd_and_ift_agree_on_consumer() {
    let an = income_compensated();
    let rep = diagnostics::check_fd_vs_ift(&an.model, &an.solution, &an.settings.solver, 1e-5, 1e-6).unwrap();
    assert!(rep.passed(), "{rep:?}");
}
