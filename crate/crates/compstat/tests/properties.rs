//! Randomised invariants of the pipeline, the config syntax and the report format.

use compstat::analysis::Settings;
use compstat::benchmarks::{generic_quadratic, profit_cd, slutsky_hicks};
use compstat::config::{self, Assignment, RunConfig, SweepAxis, ToleranceSection};
use compstat::linalg;
use compstat::report::{AnalyzeReport, Real};
use nalgebra::DVector;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn slutsky_is_symmetric_nsd_and_annihilates_prices(
        g1 in 0.1..2.0f64, g2 in 0.1..2.0f64,
        p1 in 0.2..5.0f64, p2 in 0.2..5.0f64, m in 0.2..5.0f64,
    ) {
        let entry = slutsky_hicks::register(&[g1, g2]);
        let an = entry.run(Some(&[p1, p2, m]), &Settings::default()).unwrap();
        let s = slutsky_hicks::slutsky_from_jacobian(an.x_jac(), &an.solution.x);
        let scale = linalg::max_abs(&s).max(1e-12);
        prop_assert!(linalg::symmetry_residual(&s) <= 1e-10 * scale);
        prop_assert!(linalg::sym_eigenvalues(&s).max() <= 1e-10 * scale);
        let sp = &s * DVector::from_vec(vec![p1, p2]);
        prop_assert!(sp.amax() <= 1e-10 * scale * (p1 + p2));
        prop_assert!(an.omega.min_eigenvalue() >= -1e-10 * an.omega.scale().max(1.0));
    }

    #[test]
    fn profit_demands_are_homogeneous_of_degree_zero(t in 0.2..5.0f64, w1 in 0.5..2.0f64, w2 in 0.5..2.0f64) {
        let entry = profit_cd::register(&profit_cd::CdConfig::default()).unwrap();
        let mut a = entry.default_point.clone();
        a[0] = w1;
        a[1] = w2;
        let base = entry.run(Some(&a), &Settings::default()).unwrap();
        let mut b = a.clone();
        for v in &mut b[..3] {
            *v *= t;
        }
        let scaled = entry.run(Some(&b), &Settings::default()).unwrap();
        for (x, y) in base.solution.x.iter().zip(&scaled.solution.x) {
            prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
        }
    }

    #[test]
    fn linspace_is_monotone_with_exact_endpoints(lo in -1e3..1e3f64, span in 1e-3..1e3f64, n in 2usize..200) {
        let v = config::linspace(lo, lo + span, n);
        prop_assert_eq!(v.len(), n);
        prop_assert_eq!(v[0], lo);
        prop_assert_eq!(v[n - 1], lo + span);
        prop_assert!(v.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn real_round_trips_every_float(bits in any::<u64>()) {
        let r = Real(f64::from_bits(bits));
        let back: Real = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        prop_assert_eq!(back, r);
    }

    #[test]
    fn tolerances_survive_toml(a in 1e-15..1.0f64, b in 1e-15..1.0f64, it in 1usize..500) {
        let cfg = RunConfig::from_toml(&format!("[tolerances]\nfd = {a:e}\nmethod = {b:e}\n[solver]\nmax_iter = {it}")).unwrap();
        prop_assert_eq!(cfg.tolerances.fd, Some(a));
        let again = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        prop_assert_eq!(again, cfg);
    }

    #[test]
    fn sweep_values_are_finite(lo in -1e6..1e6f64, hi in -1e6..1e6f64, n in 2usize..50) {
        let axis = SweepAxis::parse(&format!("m={lo}:{hi}:{n}")).unwrap();
        prop_assert_eq!(axis.values.len(), n);
        prop_assert!(axis.values.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn parsers_never_panic(s in "\\PC{0,40}") {
        let _ = Assignment::parse(&s);
        let _ = SweepAxis::parse(&s);
        let _ = ToleranceSection::parse(&s);
        let _ = RunConfig::from_toml(&s);
        let _ = AnalyzeReport::from_json(&s);
    }

    #[test]
    fn structured_inputs_never_panic(name in "[a-z_0-9]{0,4}", a in "[-0-9.e:,]{0,12}") {
        let s = format!("{name}={a}");
        if let Ok(axis) = SweepAxis::parse(&s) {
            prop_assert!(!axis.values.is_empty());
        }
        let _ = Assignment::parse(&s);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn random_quadratic_instances_respect_rank_bounds(seed in 0u64..10_000) {
        let entry = generic_quadratic::register(5, 2, 4, seed);
        let an = entry.run(None, &Settings::default()).unwrap();
        let uni = an.context.universal().unwrap();
        prop_assert!(uni.rank_estimate <= 3);
        prop_assert!(an.omega.rank_estimate <= 3.min(an.isovectors.a()));
        prop_assert!(an.omega.min_eigenvalue() >= -1e-8 * an.omega.scale().max(1.0));
        prop_assert!(an.passed(), "{:?}", an.failures());
    }
}
