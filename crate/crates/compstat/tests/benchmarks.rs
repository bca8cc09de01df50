//! Catalog entries: frozen reference solutions, property suites under both
//! pipelines, and registration errors.

use compstat::analysis::{Pipeline, Settings};
use compstat::benchmarks::{self, efficient_portfolio, multi_constraint_utility, profit_cd, slutsky_hicks};
use compstat::linalg;
use compstat::solver;
use compstat::Error;
use nalgebra::DMatrix;

/// Reference solutions at the default points. Each pair is verified twice:
/// Newton must land on it, and it must satisfy the first-order conditions.
fn frozen() -> Vec<(&'static str, Vec<f64>, Vec<f64>)> {
    vec![
        (
            "cost_constrained_profit",
            vec![0.8672679152788318, 0.7527199043616215, 0.9118352493590269],
            vec![5.107284907632275],
        ),
        (
            "principal_agent",
            vec![3.2743764172335617, 9.0, 12.083900226757367],
            vec![-7.587301587301587, 1.5873015873015868],
        ),
        (
            "efficient_portfolio",
            vec![0.0848398443518034, 0.11418641140904921, 0.5618110901686818],
            vec![0.1349302325581, -0.2046511627907],
        ),
        (
            "pareto_allocation",
            vec![1.377527657423432, 1.1620845899287773, 0.6224723425765681, 1.8379154100712227],
            vec![0.9037529507623224, 0.4355629426143483, 0.3442090218445419],
        ),
        (
            "market_power",
            vec![1.7839089743928371, 2.2717888645677, 0.8682846931274866],
            vec![0.08788316023082608],
        ),
        ("multi_constraint_utility", vec![1.0, 1.25, 1.5, 1.75], vec![1.0, 0.5]),
        (
            "generic_quadratic",
            vec![-0.31546500071962, -0.51821495634583, -0.36891795951417, 1.02243367417084, -0.65902971501465],
            vec![],
        ),
        (
            "multi_output_profit",
            vec![2.6708755390632835, 2.8177615083742853, 2.3722595527028383],
            vec![],
        ),
    ]
}

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(0.0, |m, (u, v)| m.max((u - v).abs()))
}

#[test]
fn newton_reproduces_frozen_solutions() {
    let numeric = Settings::default().with_pipeline(Pipeline::Numeric);
    for (name, x, lambda) in frozen() {
        let an = benchmarks::lookup(name).unwrap().run(None, &numeric).unwrap();
        assert!(max_gap(&an.solution.x, &x) < 1e-9, "{name}: x = {:?}", an.solution.x);
        if !lambda.is_empty() {
            assert!(max_gap(&an.solution.lambda, &lambda) < 1e-9, "{name}: λ = {:?}", an.solution.lambda);
        }
    }
}

#[test]
fn frozen_solutions_satisfy_first_order_conditions() {
    for (name, x, lambda) in frozen() {
        let entry = benchmarks::lookup(name).unwrap();
        let lambda = if lambda.is_empty() && entry.model.k() > 0 {
            solver::recover_multipliers(&entry.model, &x, &entry.default_point).unwrap().0
        } else {
            lambda
        };
        let r = solver::kkt_residual(&entry.model, &x, &entry.default_point, &lambda).unwrap();
        assert!(r < 1e-9, "{name}: KKT residual {r:e}");
    }
}

#[test]
fn closed_forms_satisfy_first_order_conditions() {
    for name in benchmarks::all_names() {
        let entry = benchmarks::lookup(name).unwrap();
        if let Some(r) = entry.oracle_residual().unwrap() {
            assert!(r < 1e-9, "{name}: {r:e}");
        }
    }
}

#[test]
fn every_suite_passes_under_both_pipelines() {
    for name in benchmarks::all_names() {
        let entry = benchmarks::lookup(name).unwrap();
        for p in [Pipeline::Analytic, Pipeline::Numeric] {
            let an = entry.run(None, &Settings::default().with_pipeline(p)).unwrap();
            let failures: Vec<_> = an.failures().iter().map(|c| (c.name.clone(), c.residual, c.note.clone())).collect();
            assert!(failures.is_empty(), "{name} ({}): {failures:?}", p.name());
            assert!(an.checks.len() > 5, "{name}: only {} checks", an.checks.len());
        }
    }
}

#[test]
fn catalog_order_and_lookup() {
    let names: Vec<String> = benchmarks::catalog().into_iter().map(|e| e.name).collect();
    assert_eq!(names, benchmarks::NAMES);
    assert_eq!(benchmarks::all_names().last(), Some(&"generic_quadratic"));
    match benchmarks::lookup("translog") {
        Err(Error::Config(msg)) => assert!(msg.contains("slutsky_hicks") && msg.contains("generic_quadratic")),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn slutsky_matches_demand_formula() {
    // Cobb-Douglas demand x_i = γ_i m / (Σγ p_i); Σ_ij = ∂x_i/∂p_j + x_j ∂x_i/∂m.
    let (g, p, m) = ([0.25, 0.75], [2.0, 0.5], 3.0);
    let x = [g[0] * m / p[0], g[1] * m / p[1]];
    let want = DMatrix::from_fn(2, 2, |i, j| {
        let own = if i == j { -g[i] * m / (p[i] * p[i]) } else { 0.0 };
        own + x[j] * g[i] / p[i]
    });
    let entry = slutsky_hicks::register(&g);
    let an = entry.run(Some(&[p[0], p[1], m]), &Settings::default()).unwrap();
    let got = slutsky_hicks::slutsky_from_jacobian(an.x_jac(), &an.solution.x);
    assert!(linalg::max_abs(&(&got - &want)) < 1e-10, "{got}");
    let derived = an.derived.iter().find(|d| d.name == "slutsky").unwrap();
    assert_eq!(derived.col_labels, ["p1", "p2"]);
    assert!(linalg::max_abs(&(&derived.matrix - &want)) < 1e-10);
}

#[test]
fn slutsky_demand_helper() {
    let (x, lam) = slutsky_hicks::demand(&[0.5, 0.5], &[1.0, 1.0, 1.0]);
    assert_eq!(x, vec![0.5, 0.5]);
    assert!((lam - 1.0).abs() < 1e-15);
}

#[test]
fn profit_z_matrix_frozen() {
    let entry = benchmarks::lookup("profit_cd").unwrap();
    let mut point = entry.default_point.clone();
    let p = entry.model.parameter_names.iter().position(|n| n == "p").unwrap();
    point[p] = 1.0;
    let an = entry.run(Some(&point), &Settings::default()).unwrap();
    let z = &an.derived.iter().find(|d| d.name == "z").unwrap().matrix;
    let want = DMatrix::from_row_slice(2, 2, &[-2.0 / 9.0, 1.0 / 9.0, 1.0 / 9.0, -2.0 / 9.0]);
    assert!(linalg::max_abs(&(z - want)) < 1e-4, "{z}");
}

#[test]
fn profit_jacobian_matches_closed_form() {
    let cfg = profit_cd::CdConfig::default();
    let entry = profit_cd::register(&cfg).unwrap();
    let an = entry.run(None, &Settings::default().with_pipeline(Pipeline::Numeric)).unwrap();
    let w: Vec<f64> = an.group("w").unwrap().map(|i| an.solution.a[i]).collect();
    let p = an.solution.a[an.param("p").unwrap()];
    let want = profit_cd::closed_form_jacobian(&cfg, &w, p);
    let got = an.x_jac().columns(0, want.ncols()).into_owned();
    assert!(linalg::max_abs(&(got - want)) < 1e-8);
}

#[test]
fn zero_profit_prescribed_basis_is_a_domain_error() {
    let base = profit_cd::CdConfig::default();
    let cfg = profit_cd::CdConfig {
        offset: base.zero_profit_offset(&[1.0, 1.0], 3.0),
        ..base
    };
    let err = profit_cd::register(&cfg).unwrap().run(None, &Settings::default()).unwrap_err();
    assert!(matches!(err, Error::Domain(_)), "{err}");
}

#[test]
fn portfolio_closed_form_and_frontier() {
    let cfg = efficient_portfolio::PortfolioConfig::default();
    let entry = efficient_portfolio::register(&cfg).unwrap();
    let cf = efficient_portfolio::closed_form(&entry.default_point, entry.model.m()).unwrap();
    assert!((cf.variance - 0.047139534883720).abs() < 1e-12);
    let p = efficient_portfolio::Principal::from_config(&cfg).unwrap();
    let (r, v) = efficient_portfolio::frontier_minimum(&p);
    assert!(r.is_finite() && v > 0.0 && v <= cf.variance + 1e-12);
}

#[test]
fn multi_budget_construction_bounds() {
    assert!(multi_constraint_utility::register(2, 3).is_err());
    assert!(multi_constraint_utility::register(3, 0).is_err());
    let entry = multi_constraint_utility::register(4, 2).unwrap();
    assert_eq!((entry.model.m(), entry.model.k(), entry.model.n()), (4, 2, 10));
}

#[test]
fn generic_quadratic_is_seeded() {
    let a = benchmarks::generic_quadratic::register(5, 2, 4, 7);
    let b = benchmarks::generic_quadratic::register(5, 2, 4, 7);
    assert_eq!(a.default_point, b.default_point);
    let c = benchmarks::generic_quadratic::register(5, 2, 4, 8);
    assert_ne!(a.default_point, c.default_point);
}
